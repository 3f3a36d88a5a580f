// SPDX-License-Identifier: Apache-2.0

#include "absd/tensor.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <thread>

namespace absd {

std::size_t checked_numel(std::span<const std::size_t> shape) {
  if (shape.empty()) throw std::invalid_argument("tensor rank must be at least 1");
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw std::invalid_argument("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

void validate(const Tensor& t) {
  const std::size_t n = checked_numel(t.shape);
  if (n != t.data.size()) {
    throw std::invalid_argument(fmt::format(
        "shape [{}] holds {} elements but data has {}", fmt::join(t.shape, ","), n,
        t.data.size()));
  }
}

std::vector<std::size_t> parse_shape(const std::string& text) {
  std::vector<std::size_t> shape;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find(',', pos), text.size());
    std::size_t dim = 0;
    const char* first = text.data() + pos;
    const char* last = text.data() + end;
    auto [ptr, ec] = std::from_chars(first, last, dim);
    if (ec != std::errc() || ptr != last || dim == 0) {
      throw std::invalid_argument(fmt::format("bad shape '{}'", text));
    }
    shape.push_back(dim);
    pos = end + 1;
  }
  return shape;
}

void parallel_for(std::size_t n, unsigned threads,
                  const std::function<void(std::size_t, std::size_t)>& body) {
  threads = std::max(1u, threads);
  if (threads == 1 || n < 2) {
    body(0, n);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(threads, n);
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&body, begin, end] { body(begin, end); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace absd
