#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fedrfq/client.hpp"
#include "fedrfq/rng.hpp"

using namespace fedrfq;

namespace {

ClientState make_client(int classes, int dim, int per_class, double spread,
                        std::uint64_t seed, int proto_rows = 4,
                        int proto_cols = 4) {
  Dataset ds = generate_synthetic(classes, dim, per_class * 4, spread, seed);
  auto shards = partition_non_iid(ds, 1, {classes, 0, per_class}, seed);
  ClientState state;
  state.client_id = 0;
  state.shard = shards[0];
  Rng rng(substream(seed, domains::kInit, 0));
  state.params = init_params(dim, proto_rows, proto_cols, classes, rng);
  return state;
}

bool params_equal(const ModelParams& a, const ModelParams& b) {
  return a.repr_weights.values == b.repr_weights.values &&
         a.repr_bias == b.repr_bias &&
         a.decision_weights.values == b.decision_weights.values &&
         a.decision_bias == b.decision_bias;
}

// A model whose pooled prototype equals relu(x): identity weights, zero
// bias, identity pooling.
ClientState identity_client(const std::vector<Vec>& features,
                            const std::vector<int>& labels) {
  int dim = static_cast<int>(features[0].size());
  ClientState state;
  state.client_id = 0;
  state.shard.client_id = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    state.shard.train.push_back({features[i], labels[i], static_cast<int>(i)});
    state.shard.test.push_back({features[i], labels[i], static_cast<int>(i)});
  }
  Rng rng(1);
  state.params = init_params(dim, 1, dim, 2, rng);
  state.params.repr_weights = Matrix(dim, dim, 0.0);
  for (int i = 0; i < dim; ++i) state.params.repr_weights.at(i, i) = 1.0;
  state.params.repr_bias.assign(static_cast<std::size_t>(dim), 0.0);
  return state;
}

}  // namespace

TEST_CASE("local_round with eta 0 leaves params unchanged and reports loss") {
  ClientState state = make_client(3, 8, 10, 0.5, 41);
  ModelParams before = state.params;
  TrainingConfig cfg{0.0, 1.0, 1, 8};
  double loss = local_round(state, PrototypeSet{}, cfg, {2, 2}, 99);
  CHECK(params_equal(state.params, before));
  CHECK(loss > 0.0);
}

TEST_CASE("local_round is deterministic in its seed") {
  ClientState a = make_client(3, 8, 10, 0.5, 42);
  ClientState b = make_client(3, 8, 10, 0.5, 42);
  TrainingConfig cfg{0.05, 1.0, 3, 8};
  double la = local_round(a, PrototypeSet{}, cfg, {2, 2}, 7);
  double lb = local_round(b, PrototypeSet{}, cfg, {2, 2}, 7);
  CHECK(la == lb);
  CHECK(params_equal(a.params, b.params));
}

TEST_CASE("lambda 0 makes global prototypes irrelevant") {
  PrototypeSet global;
  global.protos[0] = Vec(4, 42.0);
  global.protos[1] = Vec(4, -13.0);
  global.counts[0] = global.counts[1] = 1;

  ClientState with_global = make_client(3, 8, 10, 0.5, 43);
  ClientState without = make_client(3, 8, 10, 0.5, 43);
  TrainingConfig cfg{0.05, 0.0, 3, 8};
  local_round(with_global, global, cfg, {2, 2}, 11);
  local_round(without, PrototypeSet{}, cfg, {2, 2}, 11);
  CHECK(params_equal(with_global.params, without.params));
}

TEST_CASE("empty global prototypes match a lambda 0 round bitwise") {
  ClientState zero_lambda = make_client(3, 8, 10, 0.5, 44);
  ClientState no_global = make_client(3, 8, 10, 0.5, 44);
  local_round(zero_lambda, PrototypeSet{}, {0.05, 0.0, 3, 8}, {2, 2}, 13);
  local_round(no_global, PrototypeSet{}, {0.05, 1.0, 3, 8}, {2, 2}, 13);
  CHECK(params_equal(zero_lambda.params, no_global.params));
}

TEST_CASE("local_round rejects an empty shard") {
  ClientState state = make_client(3, 8, 10, 0.5, 45);
  state.shard.train.clear();
  CHECK_THROWS_AS(local_round(state, PrototypeSet{}, {0.05, 1.0, 1, 8}, {2, 2}, 1),
                  std::invalid_argument);
}

TEST_CASE("prototype term pulls pooled prototypes toward the global one") {
  ClientState state = make_client(2, 8, 20, 0.3, 46);
  KernelSpec spec{2, 2};
  PrototypeSet start = prototype_average(state, spec);

  PrototypeSet global;
  for (const auto& [cls, proto] : start.protos) {
    Vec target = proto;
    for (double& v : target) v += 1.0;
    global.protos[cls] = target;
    global.counts[cls] = 1;
  }
  double before = 0.0, after = 0.0;
  for (const auto& [cls, proto] : start.protos)
    before += l2_distance(proto, global.protos[cls]);
  // many iterations with a pure prototype objective: distances must shrink
  TrainingConfig cfg{0.05, 5.0, 40, 16};
  local_round(state, global, cfg, spec, 17);
  PrototypeSet end = prototype_average(state, spec);
  for (const auto& [cls, proto] : end.protos)
    after += l2_distance(proto, global.protos.at(cls));
  CHECK(after < before);
}

TEST_CASE("prototype_average of a single sample is that prototype") {
  ClientState state = identity_client({{1.0, 2.0}}, {0});
  PrototypeSet set = prototype_average(state, {1, 1});
  REQUIRE(set.protos.count(0) == 1);
  CHECK(set.protos[0] == Vec{1.0, 2.0});
  CHECK(set.counts[0] == 1);
}

TEST_CASE("prototype_average is the arithmetic mean") {
  ClientState state = identity_client({{1.0, 2.0}, {3.0, 4.0}}, {0, 0});
  PrototypeSet set = prototype_average(state, {1, 1});
  CHECK(set.protos[0] == Vec{2.0, 3.0});
  CHECK(set.counts[0] == 2);
}

TEST_CASE("prototype_average matches a brute-force recomputation") {
  ClientState state = make_client(4, 8, 15, 0.5, 47);
  KernelSpec spec{2, 2};
  PrototypeSet set = prototype_average(state, spec);

  std::map<int, Vec> sums;
  std::map<int, long> counts;
  for (const Sample& s : state.shard.train) {
    PooledMap pooled = softpool(forward_representation(state.params, s.features), spec);
    auto [it, inserted] = sums.try_emplace(s.label, Vec(pooled.values.size(), 0.0));
    for (std::size_t i = 0; i < it->second.size(); ++i)
      it->second[i] += pooled.values[i];
    counts[s.label]++;
  }
  REQUIRE(sums.size() == set.protos.size());
  for (auto& [cls, sum] : sums) {
    for (std::size_t i = 0; i < sum.size(); ++i) {
      CHECK(set.protos.at(cls)[i] ==
            doctest::Approx(sum[i] / counts[cls]).epsilon(1e-12));
    }
    CHECK(set.counts.at(cls) == counts[cls]);
  }
}

TEST_CASE("prototype_average is exactly permutation invariant") {
  ClientState state = make_client(3, 8, 20, 0.5, 48);
  KernelSpec spec{2, 2};
  PrototypeSet base = prototype_average(state, spec);

  ClientState shuffled = state;
  std::reverse(shuffled.shard.train.begin(), shuffled.shard.train.end());
  PrototypeSet permuted = prototype_average(shuffled, spec);
  for (const auto& [cls, proto] : base.protos) {
    CHECK(permuted.protos.at(cls) == proto);  // bitwise
  }
}

TEST_CASE("client transmits only per-class prototypes and counts") {
  ClientState state = make_client(3, 8, 20, 0.5, 49);
  KernelSpec spec{2, 2};
  PrototypeSet set = prototype_average(state, spec);
  // one pooled vector per held class, nothing sample-sized
  CHECK(set.protos.size() == state.shard.classes.size());
  for (const auto& [cls, proto] : set.protos) {
    CHECK(proto.size() == 4);  // pooled 2x2, far smaller than the shard
  }
}

TEST_CASE("evaluate by argmax with ties toward the lowest class") {
  ClientState state = identity_client({{1.0, 0.0}, {0.5, 0.5}}, {0, 0});
  // zero decision layer: uniform probabilities, tie -> class 0
  state.params.decision_weights = Matrix(2, 2, 0.0);
  state.params.decision_bias.assign(2, 0.0);
  CHECK(evaluate(state) == 1.0);

  state.shard.test.clear();
  CHECK_THROWS_AS(evaluate(state), std::invalid_argument);
}

TEST_CASE("random-chance accuracy hovers around one half") {
  double sum = 0.0;
  const int seeds = 30;
  for (int seed = 0; seed < seeds; ++seed) {
    ClientState state =
        make_client(2, 8, 20, 0.5, static_cast<std::uint64_t>(seed) + 500);
    sum += evaluate(state);  // untrained random model
  }
  CHECK(std::abs(sum / seeds - 0.5) < 0.15);
}

TEST_CASE("training on separable blobs reaches 90 percent accuracy") {
  ClientState state = make_client(3, 8, 30, 0.2, 50);
  TrainingConfig cfg{0.05, 0.0, 10, 16};
  for (int round = 0; round < 10; ++round) {
    local_round(state, PrototypeSet{}, cfg, {2, 2},
                substream(50, domains::kTrain, 0, static_cast<std::uint64_t>(round)));
  }
  CHECK(evaluate(state) >= 0.9);
}
