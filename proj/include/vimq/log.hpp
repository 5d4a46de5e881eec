#pragma once

#include <string_view>

namespace vimq::log {

// Warnings go to stderr unless silenced (tests silence them).
void warn(std::string_view msg);
void set_quiet(bool quiet);
bool quiet();

}  // namespace vimq::log
