#include "fedrfq/client.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "fedrfq/rng.hpp"

namespace fedrfq {

namespace {

// Gradient of ||p - target||_2 with respect to p; zero subgradient at the
// kink. Returned flattened into pooled-map shape by the caller.
Vec l2_direction(const Vec& p, const Vec& target) {
  double dist = l2_distance(p, target);
  Vec g(p.size(), 0.0);
  if (dist > 0.0) {
    for (std::size_t i = 0; i < p.size(); ++i) g[i] = (p[i] - target[i]) / dist;
  }
  return g;
}

}  // namespace

double local_round(ClientState& state, const PrototypeSet& global_protos,
                   const TrainingConfig& cfg, const KernelSpec& spec,
                   std::uint64_t seed) {
  if (state.shard.train.empty()) {
    throw std::invalid_argument("local_round: client " +
                                std::to_string(state.client_id) +
                                " has an empty training shard");
  }
  if (cfg.eta < 0.0) {
    throw std::invalid_argument("local_round: eta must be >= 0");
  }
  if (cfg.lambda < 0.0) {
    throw std::invalid_argument("local_round: lambda must be >= 0");
  }
  if (cfg.local_iters < 1) {
    throw std::invalid_argument("local_round: local_iters must be >= 1");
  }
  if (cfg.batch_size < 1) {
    throw std::invalid_argument("local_round: batch_size must be >= 1");
  }

  Rng rng(seed);
  const int train_n = static_cast<int>(state.shard.train.size());
  const int batch_n = std::min(cfg.batch_size, train_n);
  std::vector<int> order(static_cast<std::size_t>(train_n));
  std::iota(order.begin(), order.end(), 0);

  const bool use_proto_term = cfg.lambda != 0.0 && !global_protos.empty();

  double loss_sum = 0.0;
  std::vector<FeatureMap> feature_maps(static_cast<std::size_t>(batch_n));
  std::vector<PooledMap> pooled_maps(static_cast<std::size_t>(batch_n));
  for (int iter = 0; iter < cfg.local_iters; ++iter) {
    // Fresh shuffle per iteration; the batch is the prefix, so sampling
    // is without replacement within an iteration.
    rng.shuffle(order);

    // First pass: forward every batch sample, then form the per-class
    // batch prototypes (mean pooled map over the batch's class members).
    double ce_sum = 0.0;
    std::map<int, int> batch_class_counts;
    std::map<int, Vec> batch_proto;
    for (int b = 0; b < batch_n; ++b) {
      const Sample& s =
          state.shard.train[static_cast<std::size_t>(order[static_cast<std::size_t>(b)])];
      FeatureMap c = forward_representation(state.params, s.features);
      Vec probs = forward_decision(state.params, c);
      ce_sum += cross_entropy(probs, s.label);
      if (use_proto_term && global_protos.protos.count(s.label)) {
        PooledMap pooled = softpool(c, spec);
        auto [it, inserted] =
            batch_proto.try_emplace(s.label, Vec(pooled.values.size(), 0.0));
        for (std::size_t i = 0; i < it->second.size(); ++i)
          it->second[i] += pooled.values[i];
        batch_class_counts[s.label]++;
        pooled_maps[static_cast<std::size_t>(b)] = std::move(pooled);
      }
      feature_maps[static_cast<std::size_t>(b)] = std::move(c);
    }

    // The loss compares each class's batch prototype to the matching
    // global prototype; its gradient is one shared unit direction per
    // class, spread over that class's batch members.
    double proto_term = 0.0;
    std::map<int, Vec> class_direction;
    for (auto& [cls, sum] : batch_proto) {
      int bj = batch_class_counts.at(cls);
      for (double& v : sum) v /= bj;
      const Vec& target = global_protos.protos.at(cls);
      proto_term += l2_distance(sum, target);
      class_direction[cls] = l2_direction(sum, target);
    }

    GradientBundle total = GradientBundle::zeros_like(state.params);
    for (int b = 0; b < batch_n; ++b) {
      const Sample& s =
          state.shard.train[static_cast<std::size_t>(order[static_cast<std::size_t>(b)])];
      FeatureMap proto_grad;
      auto dir = class_direction.find(s.label);
      if (dir != class_direction.end()) {
        const PooledMap& pooled = pooled_maps[static_cast<std::size_t>(b)];
        PooledMap upstream(pooled.rows, pooled.cols);
        upstream.values = dir->second;
        // Scale by batch_n / |batch_j| so that dividing the accumulated
        // bundle by batch_n leaves this class's term weighted 1/|batch_j|.
        double w = static_cast<double>(batch_n) / batch_class_counts.at(s.label);
        for (double& v : upstream.values) v *= w;
        proto_grad = softpool_backward(feature_maps[static_cast<std::size_t>(b)],
                                       spec, upstream);
      }
      GradientBundle g = backward(state.params, s.features, s.label, proto_grad,
                                  cfg.lambda);
      total.add_scaled(g, 1.0);
    }
    total.scale(1.0 / batch_n);
    state.params = sgd_step(std::move(state.params), total, cfg.eta);

    loss_sum += ce_sum / batch_n + cfg.lambda * proto_term;
  }
  return loss_sum / cfg.local_iters;
}

PrototypeSet prototype_average(const ClientState& state, const KernelSpec& spec) {
  // Summation runs in ascending sample-id order so the result does not
  // depend on how the shard happens to be ordered.
  std::vector<const Sample*> ordered;
  ordered.reserve(state.shard.train.size());
  for (const Sample& s : state.shard.train) ordered.push_back(&s);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const Sample* a, const Sample* b) { return a->id < b->id; });

  PrototypeSet out;
  for (const Sample* s : ordered) {
    FeatureMap c = forward_representation(state.params, s->features);
    PooledMap pooled = softpool(c, spec);
    auto [it, inserted] =
        out.protos.try_emplace(s->label, Vec(pooled.values.size(), 0.0));
    Vec& acc = it->second;
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += pooled.values[i];
    out.counts[s->label]++;
  }
  for (auto& [cls, acc] : out.protos) {
    double n = static_cast<double>(out.counts.at(cls));
    for (double& v : acc) v /= n;
    check_finite(acc, "prototype_average output");
  }
  return out;
}

double evaluate(const ClientState& state) {
  if (state.shard.test.empty()) {
    throw std::invalid_argument("evaluate: client " +
                                std::to_string(state.client_id) +
                                " has no test samples");
  }
  int correct = 0;
  for (const Sample& s : state.shard.test) {
    FeatureMap c = forward_representation(state.params, s.features);
    Vec probs = forward_decision(state.params, c);
    int pred = static_cast<int>(
        std::max_element(probs.begin(), probs.end()) - probs.begin());
    if (pred == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(state.shard.test.size());
}

}  // namespace fedrfq
