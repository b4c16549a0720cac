#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "add/geometry.hpp"

namespace add {

struct CostMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> c;  // row-major

  double at(std::size_t r, std::size_t col) const { return c[r * cols + col]; }
  double& at(std::size_t r, std::size_t col) { return c[r * cols + col]; }
};

/// Decoded head of one object query: class distribution plus box
/// parameters (x, z, l, w, yaw).
struct DecodedQuery {
  std::vector<double> class_prob;
  std::vector<double> box;
};

/// cost(q, g) = w_cls * (1 - p_q(class_g)) + w_box * L1(box_q, box_g)
CostMatrix match_cost(std::span<const DecodedQuery> teacher_preds,
                      std::span<const GroundTruth> gts, double w_cls, double w_box);

/// Min-cost one-to-one assignment covering min(rows, cols) pairs.
/// Among cost ties the lexicographically smallest row-sorted assignment
/// is returned. Pairs come back sorted by row.
std::vector<std::pair<int, int>> hungarian_solve(const CostMatrix& c);

double assignment_cost(const CostMatrix& c,
                       const std::vector<std::pair<int, int>>& pairs);

/// Binary query mask, 1 exactly at assigned teacher-query indices.
std::vector<std::uint8_t> foreground_query_mask(
    const std::vector<std::pair<int, int>>& assignment, std::size_t n_q);

}  // namespace add
