#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <vector>

namespace solvegp {

/// Census of cubic-cost operations, reset between bound evaluations.
/// Cholesky factorizations are keyed by matrix size, triangular solves by
/// (size, right-hand-side columns), matrix products by (rows, inner, cols).
struct OpCounter {
  std::map<int, int> cholesky;
  std::map<std::pair<int, int>, int> tri_solve;
  std::map<std::array<int, 3>, int> matmul;
  std::vector<int> cholesky_order;  // sizes in recording order

  void reset();
  void record_cholesky(int n);
  void record_tri_solve(int n, int rhs);
  void record_matmul(int m, int k, int n);

  /// Total factorization cost in units of size^3.
  double cholesky_cost() const;
};

/// Thread-local counter used by the linear-algebra layer.
OpCounter& op_counter();

}  // namespace solvegp
