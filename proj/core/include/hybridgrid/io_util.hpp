#pragma once

#include <string>

namespace hybridgrid {

/// Writes `content` to `path` atomically: the data goes to a sibling
/// temporary file which is renamed over the target only after a successful
/// write. A failed write never leaves a partial output file behind.
void atomic_write_file(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

} // namespace hybridgrid
