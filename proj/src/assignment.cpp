#include "add/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace add {

namespace {

// Potential-based Kuhn-Munkres on a square matrix; returns min total cost.
double square_min_cost(const std::vector<double>& cost, std::size_t n,
                       std::vector<int>* rowsol = nullptr) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      std::size_t j1 = 0;
      double delta = inf;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  if (rowsol) rowsol->assign(n, -1);
  for (std::size_t j = 1; j <= n; ++j) {
    if (p[j] == 0) continue;
    total += cost[(p[j] - 1) * n + (j - 1)];
    if (rowsol) (*rowsol)[p[j] - 1] = static_cast<int>(j - 1);
  }
  return total;
}

// Min cost of an injective assignment of min(|rows|,|cols|) of the given
// rows into the given cols, by zero-padding to a square matrix.
double rect_min_cost(const CostMatrix& c, const std::vector<int>& rows,
                     const std::vector<int>& cols) {
  const std::size_t need = std::min(rows.size(), cols.size());
  if (need == 0) return 0.0;
  const std::size_t n = std::max(rows.size(), cols.size());
  std::vector<double> sq(n * n, 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      sq[i * n + j] = c.at(rows[i], cols[j]);
    }
  }
  return square_min_cost(sq, n);
}

bool close_cost(double a, double b) {
  return std::abs(a - b) <= 1e-9 * (1.0 + std::abs(a) + std::abs(b));
}

}  // namespace

CostMatrix match_cost(std::span<const DecodedQuery> teacher_preds,
                      std::span<const GroundTruth> gts, double w_cls, double w_box) {
  if (w_cls < 0.0 || w_box < 0.0) throw DomainError("match_cost: negative weight");
  CostMatrix c;
  c.rows = teacher_preds.size();
  c.cols = gts.size();
  c.c.assign(c.rows * c.cols, 0.0);
  for (std::size_t q = 0; q < c.rows; ++q) {
    const DecodedQuery& pred = teacher_preds[q];
    for (std::size_t g = 0; g < c.cols; ++g) {
      const GroundTruth& gt = gts[g];
      const std::size_t cls = static_cast<std::size_t>(gt.cls);
      const double p = cls < pred.class_prob.size() ? pred.class_prob[cls] : 0.0;
      const double gt_box[5] = {gt.box.bev.x, gt.box.bev.z, gt.box.bev.l,
                                gt.box.bev.w, gt.box.bev.yaw};
      double l1 = 0.0;
      for (std::size_t d = 0; d < 5; ++d) {
        const double qv = d < pred.box.size() ? pred.box[d] : 0.0;
        l1 += std::abs(qv - gt_box[d]);
      }
      c.at(q, g) = w_cls * (1.0 - p) + w_box * l1;
    }
  }
  return c;
}

std::vector<std::pair<int, int>> hungarian_solve(const CostMatrix& c) {
  const std::size_t need = std::min(c.rows, c.cols);
  std::vector<std::pair<int, int>> fixed;
  if (need == 0) return fixed;

  std::vector<int> all_cols(c.cols);
  for (std::size_t j = 0; j < c.cols; ++j) all_cols[j] = static_cast<int>(j);
  std::vector<int> all_rows(c.rows);
  for (std::size_t i = 0; i < c.rows; ++i) all_rows[i] = static_cast<int>(i);
  const double opt = rect_min_cost(c, all_rows, all_cols);

  // Lexicographic refinement: walk rows in order, fix the smallest column
  // (or skip the row) that still completes to the optimal total.
  std::vector<char> col_used(c.cols, 0);
  double fixed_cost = 0.0;
  for (int r = 0; r < static_cast<int>(c.rows) && fixed.size() < need; ++r) {
    std::vector<int> rem_rows;
    for (int rr = r + 1; rr < static_cast<int>(c.rows); ++rr) rem_rows.push_back(rr);
    std::vector<int> rem_cols_base;
    for (int cc = 0; cc < static_cast<int>(c.cols); ++cc) {
      if (!col_used[cc]) rem_cols_base.push_back(cc);
    }

    bool assigned = false;
    for (int cc : rem_cols_base) {
      std::vector<int> rem_cols;
      for (int x : rem_cols_base) {
        if (x != cc) rem_cols.push_back(x);
      }
      const std::size_t still = need - fixed.size() - 1;
      if (std::min(rem_rows.size(), rem_cols.size()) < still) continue;
      const double rest = rect_min_cost(c, rem_rows, rem_cols);
      if (close_cost(fixed_cost + c.at(r, cc) + rest, opt)) {
        fixed.emplace_back(r, cc);
        fixed_cost += c.at(r, cc);
        col_used[cc] = 1;
        assigned = true;
        break;
      }
    }
    if (!assigned) {
      // Row r stays unassigned; only legal when enough rows remain.
      const std::size_t still = need - fixed.size();
      if (rem_rows.size() < still) {
        throw NumericError("hungarian_solve: refinement failed");
      }
    }
  }
  return fixed;
}

double assignment_cost(const CostMatrix& c,
                       const std::vector<std::pair<int, int>>& pairs) {
  double total = 0.0;
  for (auto [r, col] : pairs) total += c.at(r, col);
  return total;
}

std::vector<std::uint8_t> foreground_query_mask(
    const std::vector<std::pair<int, int>>& assignment, std::size_t n_q) {
  std::vector<std::uint8_t> mask(n_q, 0);
  for (auto [r, col] : assignment) {
    if (r < 0 || static_cast<std::size_t>(r) >= n_q) {
      throw DomainError("foreground_query_mask: row index out of range");
    }
    mask[r] = 1;
  }
  return mask;
}

}  // namespace add
