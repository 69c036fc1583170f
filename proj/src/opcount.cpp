#include "solvegp/opcount.hpp"

namespace solvegp {

void OpCounter::reset() {
  cholesky.clear();
  tri_solve.clear();
  matmul.clear();
  cholesky_order.clear();
}

void OpCounter::record_cholesky(int n) {
  ++cholesky[n];
  cholesky_order.push_back(n);
}

void OpCounter::record_tri_solve(int n, int rhs) { ++tri_solve[{n, rhs}]; }

void OpCounter::record_matmul(int m, int k, int n) { ++matmul[{m, k, n}]; }

double OpCounter::cholesky_cost() const {
  double c = 0.0;
  for (const auto& [size, count] : cholesky) {
    c += static_cast<double>(count) * size * static_cast<double>(size) * size;
  }
  return c;
}

OpCounter& op_counter() {
  thread_local OpCounter counter;
  return counter;
}

}  // namespace solvegp
