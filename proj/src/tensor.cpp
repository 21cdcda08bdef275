#include "fedrfq/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace fedrfq {

Vec affine(const Matrix& w, const Vec& x, const Vec& b) {
  if (w.cols != static_cast<int>(x.size()) ||
      w.rows != static_cast<int>(b.size())) {
    throw_shape_error("affine: weight " + std::to_string(w.rows) + "x" +
                      std::to_string(w.cols) + " vs input " +
                      std::to_string(x.size()) + ", bias " +
                      std::to_string(b.size()));
  }
  Vec y(b);
  for (int r = 0; r < w.rows; ++r) {
    double acc = 0.0;
    const double* row = &w.values[static_cast<std::size_t>(r) * w.cols];
    for (int c = 0; c < w.cols; ++c) acc += row[c] * x[static_cast<std::size_t>(c)];
    y[static_cast<std::size_t>(r)] += acc;
  }
  return y;
}

double l2_norm(const Vec& a) {
  double acc = 0.0;
  for (double x : a) acc += x * x;
  return std::sqrt(acc);
}

double l2_distance(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) {
    throw_shape_error("l2_distance: " + std::to_string(a.size()) + " vs " +
                      std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

void check_finite(const Vec& v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw std::domain_error(std::string("non-finite value in ") + what);
    }
  }
}

void check_finite(const Matrix& m, const char* what) { check_finite(m.values, what); }

void throw_shape_error(const std::string& msg) {
  throw std::invalid_argument("shape error: " + msg);
}

}  // namespace fedrfq
