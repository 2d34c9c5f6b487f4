#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <filesystem>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace securepose::detail {

// Runs fn(i) for i in [0, n) on a few worker threads. If any call throws, the
// exception from the lowest index is rethrown so failures are reproducible.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  if (n == 0) return;
  std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += workers) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// Writes via a temporary sibling and rename so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

// Shortest representation that parses back to the same double.
std::string format_double(double v);

std::string utc_timestamp();

// Minimal CSV support for the numeric tables this project reads and writes.
std::vector<std::string> split_csv_line(std::string_view line);
double parse_number(const std::string& field, const std::string& where);
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& file,
                                               const std::vector<std::string>& header);

}  // namespace securepose::detail
