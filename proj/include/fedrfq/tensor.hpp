#pragma once

#include <string>
#include <vector>

namespace fedrfq {

using Vec = std::vector<double>;

// Dense row-major matrix. Doubles everywhere; all tolerances in the
// test suite assume 64-bit arithmetic.
struct Matrix {
  int rows = 0;
  int cols = 0;
  Vec values;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), values(static_cast<std::size_t>(r) * c, fill) {}

  double& at(int r, int c) {
    return values[static_cast<std::size_t>(r) * cols + c];
  }
  double at(int r, int c) const {
    return values[static_cast<std::size_t>(r) * cols + c];
  }
  int size() const { return rows * cols; }
  bool empty() const { return values.empty(); }
};

// A prototype is a 2D feature map; the pooled prototype has the same
// representation with smaller dimensions.
using FeatureMap = Matrix;
using PooledMap = Matrix;

// y = W x + b. Throws on dimension mismatch.
Vec affine(const Matrix& w, const Vec& x, const Vec& b);

double l2_norm(const Vec& a);
double l2_distance(const Vec& a, const Vec& b);

// Throws std::domain_error when a non-finite entry is found; `what`
// names the offending value in the message.
void check_finite(const Vec& v, const char* what);
void check_finite(const Matrix& m, const char* what);

[[noreturn]] void throw_shape_error(const std::string& msg);

}  // namespace fedrfq
