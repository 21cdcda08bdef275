#pragma once

#include <functional>

#include "fedrfq/rng.hpp"
#include "fedrfq/tensor.hpp"

namespace fedrfq {

// Two-layer local model: a dense representation layer with ReLU whose
// output is read as a proto_rows x proto_cols feature map, and a dense
// decision layer ending in softmax.
struct ModelParams {
  Matrix repr_weights;      // proto_dim x input_dim
  Vec repr_bias;            // proto_dim
  Matrix decision_weights;  // num_classes x proto_dim
  Vec decision_bias;        // num_classes
  int proto_rows = 0;
  int proto_cols = 0;

  int input_dim() const { return repr_weights.cols; }
  int proto_dim() const { return repr_weights.rows; }
  int num_classes() const { return decision_weights.rows; }
};

// One gradient tensor per parameter tensor, shape-congruent with the
// ModelParams it was computed for.
struct GradientBundle {
  Matrix repr_weights;
  Vec repr_bias;
  Matrix decision_weights;
  Vec decision_bias;

  static GradientBundle zeros_like(const ModelParams& p);
  void add_scaled(const GradientBundle& other, double factor);
  void scale(double factor);
};

// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per layer; biases zero.
ModelParams init_params(int input_dim, int proto_rows, int proto_cols,
                        int num_classes, Rng& rng);

// C = reshape(relu(W_r x + b_r)) as a proto_rows x proto_cols map.
FeatureMap forward_representation(const ModelParams& params, const Vec& x);

// softmax(W_d flatten(C) + b_d); strictly positive, sums to 1 within 1e-9.
Vec forward_decision(const ModelParams& params, const FeatureMap& proto);

// -log(probs[label]) with the probability floored at 1e-12.
double cross_entropy(const Vec& probs, int label);

// Per-sample gradient of  ce(x, label) + lambda * T(C)  where T is any
// scalar function of the prototype with dT/dC = proto_loss_grad (already
// chained through the pooling path by the caller). An empty
// proto_loss_grad or lambda = 0 reduces to plain cross-entropy backprop.
GradientBundle backward(const ModelParams& params, const Vec& x, int label,
                        const FeatureMap& proto_loss_grad, double lambda);

// p <- p - eta * g elementwise.
ModelParams sgd_step(ModelParams params, const GradientBundle& grads, double eta);

// Central differences (L(p+h) - L(p-h)) / 2h per scalar parameter.
// Independent of backward(); only evaluates the supplied loss.
GradientBundle finite_difference_gradient(
    const std::function<double(const ModelParams&)>& loss, ModelParams params,
    double h);

}  // namespace fedrfq
