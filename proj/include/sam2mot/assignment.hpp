#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "sam2mot/error.hpp"
#include "sam2mot/mask.hpp"

namespace sam2mot {

/// Dense row-major cost matrix. Rows are tracks, columns are detections.
class CostMatrix {
 public:
  CostMatrix() = default;
  CostMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

  CostMatrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    values_.reserve(rows_ * cols_);
    for (const auto& row : rows) {
      if (row.size() != cols_) throw InputError("ragged cost matrix");
      values_.insert(values_.end(), row.begin(), row.end());
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<const double> values() const { return values_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

using Assignment = std::vector<std::pair<std::size_t, std::size_t>>;

namespace detail {

// Shortest-augmenting-path Hungarian method with row/column potentials,
// O(rows^2 * cols). Requires rows <= cols. Returns col index per row.
// Ties in the column scan go to the lowest index, and rows are inserted in
// increasing order, which keeps the result reproducible.
inline std::vector<std::size_t> hungarian_rows_le_cols(const CostMatrix& cost) {
  const std::size_t n = cost.rows();
  const std::size_t m = cost.cols();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> match_of_col(m + 1, 0), way(m + 1, 0);
  for (std::size_t row = 1; row <= n; ++row) {
    match_of_col[0] = row;
    std::size_t col0 = 0;
    std::vector<double> min_slack(m + 1, kInf);
    std::vector<bool> used(m + 1, false);
    do {
      used[col0] = true;
      const std::size_t r0 = match_of_col[col0];
      double delta = kInf;
      std::size_t col1 = 0;
      for (std::size_t c = 1; c <= m; ++c) {
        if (used[c]) continue;
        const double slack = cost(r0 - 1, c - 1) - u[r0] - v[c];
        if (slack < min_slack[c]) {
          min_slack[c] = slack;
          way[c] = col0;
        }
        if (min_slack[c] < delta) {
          delta = min_slack[c];
          col1 = c;
        }
      }
      for (std::size_t c = 0; c <= m; ++c) {
        if (used[c]) {
          u[match_of_col[c]] += delta;
          v[c] -= delta;
        } else {
          min_slack[c] -= delta;
        }
      }
      col0 = col1;
    } while (match_of_col[col0] != 0);
    do {
      const std::size_t col1 = way[col0];
      match_of_col[col0] = match_of_col[col1];
      col0 = col1;
    } while (col0 != 0);
  }
  std::vector<std::size_t> col_of_row(n, 0);
  for (std::size_t c = 1; c <= m; ++c) {
    if (match_of_col[c] != 0) col_of_row[match_of_col[c] - 1] = c - 1;
  }
  return col_of_row;
}

}  // namespace detail

/// Minimum-cost pairing of size min(rows, cols), sorted by row.
/// Throws InputError on a non-finite entry.
inline Assignment solve_assignment(const CostMatrix& cost) {
  for (double v : cost.values()) {
    if (!std::isfinite(v)) throw InputError("cost matrix contains a non-finite entry");
  }
  Assignment out;
  if (cost.rows() == 0 || cost.cols() == 0) return out;
  if (cost.rows() <= cost.cols()) {
    const auto col_of_row = detail::hungarian_rows_le_cols(cost);
    for (std::size_t r = 0; r < col_of_row.size(); ++r) out.emplace_back(r, col_of_row[r]);
  } else {
    CostMatrix t(cost.cols(), cost.rows());
    for (std::size_t r = 0; r < cost.rows(); ++r) {
      for (std::size_t c = 0; c < cost.cols(); ++c) t(c, r) = cost(r, c);
    }
    const auto row_of_col = detail::hungarian_rows_le_cols(t);
    for (std::size_t c = 0; c < row_of_col.size(); ++c) out.emplace_back(row_of_col[c], c);
    std::sort(out.begin(), out.end());
  }
  return out;
}

inline double assignment_cost(const CostMatrix& cost, const Assignment& pairs) {
  double total = 0.0;
  for (const auto& [r, c] : pairs) total += cost(r, c);
  return total;
}

struct MatchResult {
  Assignment matches;  // (track index, detection index), sorted by track
  std::vector<std::size_t> unmatched_tracks;
  std::vector<std::size_t> unmatched_detections;
};

/// Hungarian association on 1 - IoU; pairs whose IoU falls below `iou_gate`
/// are split back into the unmatched sets.
inline MatchResult gated_match(std::span<const Box> track_boxes, std::span<const Box> det_boxes,
                               double iou_gate) {
  if (!(iou_gate >= 0.0 && iou_gate <= 1.0)) throw InputError("iou_gate must lie in [0, 1]");
  CostMatrix cost(track_boxes.size(), det_boxes.size());
  for (std::size_t t = 0; t < track_boxes.size(); ++t) {
    for (std::size_t d = 0; d < det_boxes.size(); ++d) {
      cost(t, d) = 1.0 - box_iou(track_boxes[t], det_boxes[d]);
    }
  }
  MatchResult result;
  std::vector<bool> track_used(track_boxes.size(), false), det_used(det_boxes.size(), false);
  for (const auto& [t, d] : solve_assignment(cost)) {
    if (box_iou(track_boxes[t], det_boxes[d]) < iou_gate) continue;
    result.matches.emplace_back(t, d);
    track_used[t] = true;
    det_used[d] = true;
  }
  for (std::size_t t = 0; t < track_used.size(); ++t) {
    if (!track_used[t]) result.unmatched_tracks.push_back(t);
  }
  for (std::size_t d = 0; d < det_used.size(); ++d) {
    if (!det_used[d]) result.unmatched_detections.push_back(d);
  }
  return result;
}

}  // namespace sam2mot
