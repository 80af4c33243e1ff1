#pragma once

#include <string>
#include <string_view>

namespace u4d {

enum class TaskKind { understanding, generation };

std::string_view to_string(TaskKind task);
// Throws ConfigError on anything other than "understanding" / "generation".
TaskKind parse_task(std::string_view s);

}  // namespace u4d
