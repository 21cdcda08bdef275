#include "fedrfq/softpool.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fedrfq {

namespace {

void validate_spec(const KernelSpec& spec) {
  if (spec.k_hat < 1 || spec.stride < 1) {
    throw std::invalid_argument("KernelSpec: k_hat and stride must be >= 1");
  }
}

// Weighted average of one kernel region read directly out of `map` at
// offset (r0, c0). Shared by the forward and backward passes.
double pool_at(const FeatureMap& map, int r0, int c0, int k) {
  double max_v = map.at(r0, c0);
  for (int dr = 0; dr < k; ++dr)
    for (int dc = 0; dc < k; ++dc) max_v = std::max(max_v, map.at(r0 + dr, c0 + dc));
  double wsum = 0.0;
  double acc = 0.0;
  for (int dr = 0; dr < k; ++dr) {
    for (int dc = 0; dc < k; ++dc) {
      double c = map.at(r0 + dr, c0 + dc);
      double w = std::exp(c - max_v);
      wsum += w;
      acc += w * c;
    }
  }
  return acc / wsum;
}

}  // namespace

int pooled_rows(int in_rows, const KernelSpec& spec) {
  validate_spec(spec);
  if (in_rows < spec.k_hat) return 0;
  return (in_rows - spec.k_hat) / spec.stride + 1;
}

int pooled_cols(int in_cols, const KernelSpec& spec) {
  return pooled_rows(in_cols, spec);
}

Matrix region_weights(const Matrix& region) {
  check_finite(region, "region_weights input");
  double max_v = *std::max_element(region.values.begin(), region.values.end());
  Matrix w(region.rows, region.cols);
  double sum = 0.0;
  for (int i = 0; i < region.size(); ++i) {
    double e = std::exp(region.values[static_cast<std::size_t>(i)] - max_v);
    w.values[static_cast<std::size_t>(i)] = e;
    sum += e;
  }
  for (double& x : w.values) x /= sum;
  return w;
}

double pool_region(const Matrix& region) {
  Matrix w = region_weights(region);
  double acc = 0.0;
  for (int i = 0; i < region.size(); ++i) {
    acc += w.values[static_cast<std::size_t>(i)] *
           region.values[static_cast<std::size_t>(i)];
  }
  return acc;
}

PooledMap softpool(const FeatureMap& map, const KernelSpec& spec) {
  validate_spec(spec);
  if (map.rows < spec.k_hat || map.cols < spec.k_hat) {
    throw_shape_error("softpool: kernel " + std::to_string(spec.k_hat) +
                      " larger than map " + std::to_string(map.rows) + "x" +
                      std::to_string(map.cols));
  }
  int out_r = pooled_rows(map.rows, spec);
  int out_c = pooled_cols(map.cols, spec);
  PooledMap out(out_r, out_c);
  for (int pr = 0; pr < out_r; ++pr) {
    for (int pc = 0; pc < out_c; ++pc) {
      out.at(pr, pc) = pool_at(map, pr * spec.stride, pc * spec.stride, spec.k_hat);
    }
  }
  check_finite(out, "softpool output");
  return out;
}

FeatureMap softpool_backward(const FeatureMap& map, const KernelSpec& spec,
                             const PooledMap& upstream) {
  validate_spec(spec);
  int out_r = pooled_rows(map.rows, spec);
  int out_c = pooled_cols(map.cols, spec);
  if (upstream.rows != out_r || upstream.cols != out_c) {
    throw_shape_error("softpool_backward: upstream " +
                      std::to_string(upstream.rows) + "x" +
                      std::to_string(upstream.cols) + " vs pooled " +
                      std::to_string(out_r) + "x" + std::to_string(out_c));
  }
  FeatureMap grad(map.rows, map.cols);
  int k = spec.k_hat;
  for (int pr = 0; pr < out_r; ++pr) {
    for (int pc = 0; pc < out_c; ++pc) {
      int r0 = pr * spec.stride;
      int c0 = pc * spec.stride;
      double g = upstream.at(pr, pc);
      if (g == 0.0) continue;
      double out = pool_at(map, r0, c0, k);
      double max_v = map.at(r0, c0);
      for (int dr = 0; dr < k; ++dr)
        for (int dc = 0; dc < k; ++dc)
          max_v = std::max(max_v, map.at(r0 + dr, c0 + dc));
      double wsum = 0.0;
      for (int dr = 0; dr < k; ++dr)
        for (int dc = 0; dc < k; ++dc)
          wsum += std::exp(map.at(r0 + dr, c0 + dc) - max_v);
      for (int dr = 0; dr < k; ++dr) {
        for (int dc = 0; dc < k; ++dc) {
          double c = map.at(r0 + dr, c0 + dc);
          double w = std::exp(c - max_v) / wsum;
          grad.at(r0 + dr, c0 + dc) += g * w * (1.0 + c - out);
        }
      }
    }
  }
  return grad;
}

double lipschitz_constant(const KernelSpec& spec) {
  validate_spec(spec);
  return static_cast<double>(spec.k_hat) * spec.k_hat - 1.0;
}

}  // namespace fedrfq
