#pragma once

#include <cstddef>
#include <vector>

namespace fairvoice {

// Row-major 2-D array of doubles; row 0 is the top row.
struct Grid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Grid() = default;
  Grid(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::size_t size() const { return values.size(); }
  bool operator==(const Grid&) const = default;
};

}  // namespace fairvoice
