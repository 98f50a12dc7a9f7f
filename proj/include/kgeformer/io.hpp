#pragma once

#include <string>
#include <string_view>

namespace kgeformer {

std::string read_file(const std::string& path);
// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::string& path, std::string_view bytes);

}  // namespace kgeformer
