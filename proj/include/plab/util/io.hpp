#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

namespace plab {

// Writes to a sibling temporary file and renames it into place, so readers
// never observe a partially written artifact.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

void warn(std::string_view message);
// Progress line on stderr; silenced by PATHWAY_LAB_QUIET=1.
void info(std::string_view message);

// Worker count from PATHWAY_LAB_THREADS (default: hardware concurrency, >= 1).
std::size_t thread_budget();

// Runs body(i) for i in [0, n). Each index is processed exactly once; callers
// write into pre-sized slots so reduction order stays deterministic.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace plab
