#include "u4d/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include <zlib.h>

#include "u4d/errors.hpp"

namespace u4d {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
  }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out.insert(out.end(), p, p + n);
  }
  std::vector<std::uint8_t> out;
};

class Cursor {
 public:
  Cursor(const std::uint8_t* data, std::size_t n) : p_(data), n_(n) {}

  template <typename T>
  T get(const char* what) {
    T v;
    std::memcpy(&v, take(sizeof(T), what), sizeof(T));
    return v;
  }
  const std::uint8_t* take(std::size_t n, const char* what) {
    if (n > n_ - at_) throw CorruptCheckpointError(std::string("checkpoint truncated while reading ") + what);
    const std::uint8_t* p = p_ + at_;
    at_ += n;
    return p;
  }
  std::size_t remaining() const { return n_ - at_; }

 private:
  const std::uint8_t* p_;
  std::size_t n_;
  std::size_t at_ = 0;
};

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths
  while (n > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointEntry>& entries) {
  Writer w;
  w.bytes(kCheckpointMagic, 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.shape.size()));
    for (auto x : e.shape) w.put<std::uint64_t>(x);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.dtype));
    const std::size_t n = shape_numel(e.shape);
    if (e.dtype == DType::f64) {
      if (e.f64.size() != n) throw DimensionError("checkpoint entry '" + e.name + "' has the wrong value count");
      w.bytes(e.f64.data(), n * sizeof(double));
    } else {
      if (e.i64.size() != n) throw DimensionError("checkpoint entry '" + e.name + "' has the wrong value count");
      w.bytes(e.i64.data(), n * sizeof(std::int64_t));
    }
  }
  w.put<std::uint32_t>(crc_of(w.out.data(), w.out.size()));
  return std::move(w.out);
}

std::vector<CheckpointEntry> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16) throw CorruptCheckpointError("checkpoint too short (" + std::to_string(bytes.size()) + " bytes)");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) throw CorruptCheckpointError("bad checkpoint magic");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, 4);
  if (stored != crc_of(bytes.data(), body)) throw CorruptCheckpointError("checkpoint CRC mismatch");

  Cursor c(bytes.data(), body);
  c.take(4, "magic");
  const auto version = c.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CorruptCheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = c.get<std::uint32_t>("entry count");
  std::vector<CheckpointEntry> out;
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const auto len = c.get<std::uint32_t>("name length");
    const auto* name = c.take(len, "name");
    e.name.assign(reinterpret_cast<const char*>(name), len);
    if (!seen.insert(e.name).second) throw CorruptCheckpointError("duplicate checkpoint entry '" + e.name + "'");
    const auto rank = c.get<std::uint32_t>("rank");
    if (rank > 8) throw CorruptCheckpointError("implausible rank " + std::to_string(rank) + " for '" + e.name + "'");
    std::size_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const auto x = c.get<std::uint64_t>("extent");
      if (x == 0 || x > c.remaining()) throw CorruptCheckpointError("bad extent in '" + e.name + "'");
      e.shape.push_back(static_cast<std::size_t>(x));
      n *= static_cast<std::size_t>(x);
      if (n > c.remaining()) throw CorruptCheckpointError("entry '" + e.name + "' larger than the file");
    }
    const auto tag = c.get<std::uint8_t>("dtype");
    if (tag == static_cast<std::uint8_t>(DType::f64)) {
      e.dtype = DType::f64;
      e.f64.resize(n);
      std::memcpy(e.f64.data(), c.take(n * sizeof(double), "values"), n * sizeof(double));
    } else if (tag == static_cast<std::uint8_t>(DType::i64)) {
      e.dtype = DType::i64;
      e.i64.resize(n);
      std::memcpy(e.i64.data(), c.take(n * sizeof(std::int64_t), "values"), n * sizeof(std::int64_t));
    } else {
      throw CorruptCheckpointError("unknown dtype tag " + std::to_string(tag) + " in '" + e.name + "'");
    }
    out.push_back(std::move(e));
  }
  if (c.remaining() != 0) throw CorruptCheckpointError("trailing bytes after the last checkpoint entry");
  return out;
}

std::vector<CheckpointEntry> checkpoint_entries(const ParamStore& store) {
  std::vector<CheckpointEntry> out;
  for (const auto& p : store.params()) {
    const auto v = p.tensor.data();
    out.push_back({p.name, p.tensor.shape(), DType::f64, {v.begin(), v.end()}, {}});
  }
  for (const auto& [target, ad] : store.adapters()) {
    out.push_back({target + ".lora_scale", {1}, DType::f64, {ad.scale}, {}});
  }
  return out;
}

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string strip(const std::string& s, std::string_view suffix) { return s.substr(0, s.size() - suffix.size()); }

}  // namespace

void apply_checkpoint(ParamStore& store, const std::vector<CheckpointEntry>& entries) {
  std::map<std::string, const CheckpointEntry*, std::less<>> by_name;
  for (const auto& e : entries) by_name.emplace(e.name, &e);

  const auto f64_entry = [&](const std::string& name, const Shape* shape) -> const CheckpointEntry& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CorruptCheckpointError("checkpoint lacks '" + name + "'");
    const CheckpointEntry& e = *it->second;
    if (e.dtype != DType::f64) throw CorruptCheckpointError("'" + name + "' is not a float tensor");
    if (shape && e.shape != *shape) {
      throw CorruptCheckpointError("'" + name + "' has shape " + shape_str(e.shape) + ", model expects " +
                                   shape_str(*shape));
    }
    return e;
  };

  // validation pass
  for (const auto& p : store.params()) f64_entry(p.name, &p.tensor.shape());
  std::vector<std::string> new_adapters;
  for (const auto& e : entries) {
    if (store.contains(e.name)) continue;
    if (ends_with(e.name, ".lora_a")) {
      const std::string target = strip(e.name, ".lora_a");
      if (!store.contains(target)) throw CorruptCheckpointError("adapter for unknown parameter '" + target + "'");
      const Shape w = store.get(target).shape();
      const CheckpointEntry& a = f64_entry(e.name, nullptr);
      if (a.shape.size() != 2 || a.shape[0] != w[0]) throw CorruptCheckpointError("bad adapter shape for '" + target + "'");
      const Shape bshape{a.shape[1], w[1]};
      f64_entry(target + ".lora_b", &bshape);
      f64_entry(target + ".lora_scale", nullptr);
      new_adapters.push_back(target);
    } else if (ends_with(e.name, ".lora_b") || ends_with(e.name, ".lora_scale")) {
      const std::string target = strip(e.name, ends_with(e.name, ".lora_b") ? ".lora_b" : ".lora_scale");
      if (!by_name.count(target + ".lora_a")) throw CorruptCheckpointError("orphan adapter entry '" + e.name + "'");
    } else if (e.name.rfind("meta.", 0) != 0) {
      throw CorruptCheckpointError("checkpoint entry '" + e.name + "' matches no model parameter");
    }
  }

  // apply
  for (const auto& p : store.params()) {
    const auto& src = by_name.at(p.name)->f64;
    auto dst = Tensor(p.tensor).mutable_data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  for (const auto& target : new_adapters) {
    const auto& a = *by_name.at(target + ".lora_a");
    const auto& b = *by_name.at(target + ".lora_b");
    const Tensor ta = store.add(target + ".lora_a", Tensor(a.shape, a.f64), ParamGroup::lora);
    const Tensor tb = store.add(target + ".lora_b", Tensor(b.shape, b.f64), ParamGroup::lora);
    store.attach_adapter(target, ta, tb, by_name.at(target + ".lora_scale")->f64.at(0));
  }
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write '" + tmp + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ConfigError("short write to '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries) {
  write_file(path, encode_checkpoint(entries));
}

std::vector<CheckpointEntry> load_checkpoint(const std::string& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file(path);
  } catch (const ConfigError& e) {
    throw CorruptCheckpointError(e.what());
  }
  return decode_checkpoint(bytes);
}

}  // namespace u4d
