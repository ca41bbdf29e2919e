#pragma once

#include <utility>
#include <vector>

#include "countkit/error.hpp"

namespace countkit {

enum class ColumnOrder { raster, snake };

/// Cell traversals for the two context sequences, as flat row-major cell
/// indices. First: the Z order (row-major). Second: the mirrored-N order,
/// column by column from the top; `snake` reverses every other column.
inline std::pair<std::vector<int>, std::vector<int>> cell_orderings(int rows, int cols,
                                                                    ColumnOrder style = ColumnOrder::raster) {
  if (rows < 1 || cols < 1) throw SchemaError("orderings: rows and cols must be >= 1");
  std::vector<int> z, n;
  z.reserve(rows * cols);
  n.reserve(rows * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) z.push_back(r * cols + c);
  }
  for (int c = 0; c < cols; ++c) {
    for (int k = 0; k < rows; ++k) {
      const int r = (style == ColumnOrder::snake && c % 2 == 1) ? rows - 1 - k : k;
      n.push_back(r * cols + c);
    }
  }
  return {z, n};
}

}  // namespace countkit
