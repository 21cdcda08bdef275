#pragma once

#include "fedrfq/tensor.hpp"

namespace fedrfq {

// Square pooling filter. The default stride equals the filter side, so
// regions do not overlap and the pooled prototype carries ~1/k^2 of the
// raw prototype's entries. k_hat = stride = 1 is the identity (used by
// the no-softpool ablation).
struct KernelSpec {
  int k_hat = 2;
  int stride = 2;
};

int pooled_rows(int in_rows, const KernelSpec& spec);
int pooled_cols(int in_cols, const KernelSpec& spec);

// Exponential weights of a kernel region: w_i = exp(c_i) / sum_v exp(c_v),
// computed with max subtraction so large activations do not overflow.
// Weights are positive and sum to 1 within 1e-12.
Matrix region_weights(const Matrix& region);

// Exponentially weighted average sum_i w_i * c_i of the region. A convex
// combination, so the output lies in [min(region), max(region)].
double pool_region(const Matrix& region);

// Applies pool_region at every kernel position, row-major, stepping by
// the stride. Trailing rows/cols that cannot host a full kernel are
// dropped. Throws when the kernel does not fit the map.
PooledMap softpool(const FeatureMap& map, const KernelSpec& spec);

// Gradient of sum(upstream ⊙ softpool(map)) with respect to map.
// Within one region: d out / d c_i = w_i * (1 + c_i - out). Overlapping
// regions (stride < k_hat) accumulate.
FeatureMap softpool_backward(const FeatureMap& map, const KernelSpec& spec,
                             const PooledMap& upstream);

// Worst-case pooling sensitivity bound k_hat^2 - 1:
// |pool(R) - pool(R')| <= (k_hat^2 - 1) * max_i |R_i - R'_i|.
double lipschitz_constant(const KernelSpec& spec);

}  // namespace fedrfq
