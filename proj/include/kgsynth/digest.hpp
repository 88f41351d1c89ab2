#pragma once

#include <string>
#include <string_view>

namespace kgsynth {

std::string sha256_hex(std::string_view data);
// Throws NotFoundError when the file cannot be read.
std::string sha256_file(const std::string& path);

}  // namespace kgsynth
