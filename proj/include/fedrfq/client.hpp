#pragma once

#include <cstdint>
#include <map>

#include "fedrfq/data.hpp"
#include "fedrfq/model.hpp"
#include "fedrfq/softpool.hpp"

namespace fedrfq {

struct TrainingConfig {
  double eta = 0.01;     // learning rate
  double lambda = 1.0;   // prototype-loss weight
  int local_iters = 5;   // batches per round
  int batch_size = 32;
};

// Per-class averaged pooled prototypes plus the sample counts behind
// them. This is the only thing a client ever transmits; raw features and
// labels never leave the client.
struct PrototypeSet {
  std::map<int, Vec> protos;    // class -> flattened pooled map
  std::map<int, long> counts;   // class -> training samples of that class

  bool empty() const { return protos.empty(); }
};

struct ClientState {
  int client_id = 0;
  ClientShard shard;
  ModelParams params;
  bool honest = true;
};

// One local training round: local_iters batches of SGD on
// mean cross-entropy + lambda * per-class mean distance between each
// sample's pooled prototype and the matching global prototype. Classes
// with no global prototype (and the whole term in round 0, when
// global_protos is empty) contribute nothing. Returns the mean loss over
// the round's iterations. Deterministic in seed.
double local_round(ClientState& state, const PrototypeSet& global_protos,
                   const TrainingConfig& cfg, const KernelSpec& spec,
                   std::uint64_t seed);

// Mean of softpool(representation(x)) over the shard's training samples,
// class by class, in sample order.
PrototypeSet prototype_average(const ClientState& state, const KernelSpec& spec);

// Fraction of test samples whose argmax prediction matches the label;
// ties break toward the lowest class index.
double evaluate(const ClientState& state);

}  // namespace fedrfq
