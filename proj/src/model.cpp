#include "fedrfq/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fedrfq {

namespace {

void check_congruent(const ModelParams& p, const GradientBundle& g) {
  if (g.repr_weights.rows != p.repr_weights.rows ||
      g.repr_weights.cols != p.repr_weights.cols ||
      g.repr_bias.size() != p.repr_bias.size() ||
      g.decision_weights.rows != p.decision_weights.rows ||
      g.decision_weights.cols != p.decision_weights.cols ||
      g.decision_bias.size() != p.decision_bias.size()) {
    throw_shape_error("gradient bundle not congruent with params");
  }
}

Vec softmax(Vec logits) {
  double max_v = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double& z : logits) {
    z = std::exp(z - max_v);
    sum += z;
  }
  for (double& z : logits) {
    z /= sum;
    // keep strictly positive even when exp underflows
    if (z < 1e-300) z = 1e-300;
  }
  return logits;
}

}  // namespace

GradientBundle GradientBundle::zeros_like(const ModelParams& p) {
  GradientBundle g;
  g.repr_weights = Matrix(p.repr_weights.rows, p.repr_weights.cols);
  g.repr_bias = Vec(p.repr_bias.size(), 0.0);
  g.decision_weights = Matrix(p.decision_weights.rows, p.decision_weights.cols);
  g.decision_bias = Vec(p.decision_bias.size(), 0.0);
  return g;
}

void GradientBundle::add_scaled(const GradientBundle& other, double factor) {
  for (std::size_t i = 0; i < repr_weights.values.size(); ++i)
    repr_weights.values[i] += factor * other.repr_weights.values[i];
  for (std::size_t i = 0; i < repr_bias.size(); ++i)
    repr_bias[i] += factor * other.repr_bias[i];
  for (std::size_t i = 0; i < decision_weights.values.size(); ++i)
    decision_weights.values[i] += factor * other.decision_weights.values[i];
  for (std::size_t i = 0; i < decision_bias.size(); ++i)
    decision_bias[i] += factor * other.decision_bias[i];
}

void GradientBundle::scale(double factor) {
  for (double& v : repr_weights.values) v *= factor;
  for (double& v : repr_bias) v *= factor;
  for (double& v : decision_weights.values) v *= factor;
  for (double& v : decision_bias) v *= factor;
}

ModelParams init_params(int input_dim, int proto_rows, int proto_cols,
                        int num_classes, Rng& rng) {
  if (input_dim < 1 || proto_rows < 1 || proto_cols < 1 || num_classes < 2) {
    throw std::invalid_argument("init_params: bad dimensions");
  }
  int proto_dim = proto_rows * proto_cols;
  ModelParams p;
  p.proto_rows = proto_rows;
  p.proto_cols = proto_cols;
  p.repr_weights = Matrix(proto_dim, input_dim);
  p.repr_bias = Vec(static_cast<std::size_t>(proto_dim), 0.0);
  p.decision_weights = Matrix(num_classes, proto_dim);
  p.decision_bias = Vec(static_cast<std::size_t>(num_classes), 0.0);
  double r1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (double& w : p.repr_weights.values) w = (2.0 * rng.next_double() - 1.0) * r1;
  double r2 = 1.0 / std::sqrt(static_cast<double>(proto_dim));
  for (double& w : p.decision_weights.values)
    w = (2.0 * rng.next_double() - 1.0) * r2;
  return p;
}

FeatureMap forward_representation(const ModelParams& params, const Vec& x) {
  Vec z = affine(params.repr_weights, x, params.repr_bias);
  if (params.proto_rows * params.proto_cols != static_cast<int>(z.size())) {
    throw_shape_error("forward_representation: proto dims do not match layer");
  }
  FeatureMap c(params.proto_rows, params.proto_cols);
  for (std::size_t i = 0; i < z.size(); ++i) c.values[i] = std::max(0.0, z[i]);
  check_finite(c, "representation output");
  return c;
}

Vec forward_decision(const ModelParams& params, const FeatureMap& proto) {
  if (proto.size() != params.proto_dim()) {
    throw_shape_error("forward_decision: prototype size " +
                      std::to_string(proto.size()) + " vs proto_dim " +
                      std::to_string(params.proto_dim()));
  }
  Vec probs = softmax(
      affine(params.decision_weights, proto.values, params.decision_bias));
  check_finite(probs, "decision output");
  return probs;
}

double cross_entropy(const Vec& probs, int label) {
  if (label < 0 || label >= static_cast<int>(probs.size())) {
    throw std::out_of_range("cross_entropy: label " + std::to_string(label) +
                            " out of range");
  }
  return -std::log(std::max(probs[static_cast<std::size_t>(label)], 1e-12));
}

GradientBundle backward(const ModelParams& params, const Vec& x, int label,
                        const FeatureMap& proto_loss_grad, double lambda) {
  if (static_cast<int>(x.size()) != params.input_dim()) {
    throw_shape_error("backward: input size mismatch");
  }
  if (!proto_loss_grad.empty() &&
      proto_loss_grad.size() != params.proto_dim()) {
    throw_shape_error("backward: proto_loss_grad size mismatch");
  }
  if (label < 0 || label >= params.num_classes()) {
    throw std::out_of_range("backward: label out of range");
  }

  // Forward pass, keeping pre-activations for the ReLU mask.
  Vec z = affine(params.repr_weights, x, params.repr_bias);
  Vec a(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) a[i] = std::max(0.0, z[i]);
  Vec probs = softmax(affine(params.decision_weights, a, params.decision_bias));

  GradientBundle g = GradientBundle::zeros_like(params);

  // d ce / d logits = probs - onehot(label)
  Vec dlogits = probs;
  dlogits[static_cast<std::size_t>(label)] -= 1.0;
  g.decision_bias = dlogits;
  for (int r = 0; r < params.decision_weights.rows; ++r)
    for (int c = 0; c < params.decision_weights.cols; ++c)
      g.decision_weights.at(r, c) =
          dlogits[static_cast<std::size_t>(r)] * a[static_cast<std::size_t>(c)];

  // d loss / d a: decision path plus the prototype-loss path.
  Vec da(a.size(), 0.0);
  for (int c = 0; c < params.decision_weights.cols; ++c) {
    double acc = 0.0;
    for (int r = 0; r < params.decision_weights.rows; ++r)
      acc += params.decision_weights.at(r, c) * dlogits[static_cast<std::size_t>(r)];
    da[static_cast<std::size_t>(c)] = acc;
  }
  if (lambda != 0.0 && !proto_loss_grad.empty()) {
    for (std::size_t i = 0; i < da.size(); ++i)
      da[i] += lambda * proto_loss_grad.values[i];
  }

  // Through the ReLU (derivative 0 at z <= 0) into the first layer.
  for (std::size_t i = 0; i < da.size(); ++i) {
    double dz = z[i] > 0.0 ? da[i] : 0.0;
    g.repr_bias[i] = dz;
    for (int c = 0; c < params.repr_weights.cols; ++c)
      g.repr_weights.at(static_cast<int>(i), c) = dz * x[static_cast<std::size_t>(c)];
  }
  return g;
}

ModelParams sgd_step(ModelParams params, const GradientBundle& grads, double eta) {
  if (eta < 0.0) throw std::invalid_argument("sgd_step: eta must be >= 0");
  check_congruent(params, grads);
  for (std::size_t i = 0; i < params.repr_weights.values.size(); ++i)
    params.repr_weights.values[i] -= eta * grads.repr_weights.values[i];
  for (std::size_t i = 0; i < params.repr_bias.size(); ++i)
    params.repr_bias[i] -= eta * grads.repr_bias[i];
  for (std::size_t i = 0; i < params.decision_weights.values.size(); ++i)
    params.decision_weights.values[i] -= eta * grads.decision_weights.values[i];
  for (std::size_t i = 0; i < params.decision_bias.size(); ++i)
    params.decision_bias[i] -= eta * grads.decision_bias[i];
  check_finite(params.repr_weights, "sgd_step repr_weights");
  check_finite(params.decision_weights, "sgd_step decision_weights");
  return params;
}

GradientBundle finite_difference_gradient(
    const std::function<double(const ModelParams&)>& loss, ModelParams params,
    double h) {
  if (h <= 0.0) throw std::invalid_argument("finite_difference_gradient: h > 0");
  GradientBundle g = GradientBundle::zeros_like(params);
  auto central = [&](double& p, double& out) {
    double saved = p;
    p = saved + h;
    double up = loss(params);
    p = saved - h;
    double down = loss(params);
    p = saved;
    out = (up - down) / (2.0 * h);
  };
  for (std::size_t i = 0; i < params.repr_weights.values.size(); ++i)
    central(params.repr_weights.values[i], g.repr_weights.values[i]);
  for (std::size_t i = 0; i < params.repr_bias.size(); ++i)
    central(params.repr_bias[i], g.repr_bias[i]);
  for (std::size_t i = 0; i < params.decision_weights.values.size(); ++i)
    central(params.decision_weights.values[i], g.decision_weights.values[i]);
  for (std::size_t i = 0; i < params.decision_bias.size(); ++i)
    central(params.decision_bias[i], g.decision_bias[i]);
  return g;
}

}  // namespace fedrfq
