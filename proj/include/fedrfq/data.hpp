#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedrfq/tensor.hpp"

namespace fedrfq {

struct Sample {
  Vec features;
  int label = 0;
  int id = -1;  // stable dataset index; fixes summation order downstream
};

struct Dataset {
  std::vector<Sample> samples;
  int num_classes = 0;
  int dim = 0;
};

// Non-IID knobs: per-client class counts are drawn from a rounded
// Normal(avg, std_dev) clamped to [1, num_classes]; every chosen class
// receives the same number of samples.
struct PartitionSpec {
  int avg = 3;
  int std_dev = 2;
  int samples_per_class = 25;
};

struct ClientShard {
  int client_id = 0;
  std::vector<Sample> train;
  std::vector<Sample> test;
  std::vector<int> classes;  // sorted, distinct
};

// Per-partition accounting used for aggregation weights and the
// partition fidelity checks.
struct ShardStats {
  int num_clients = 0;
  int num_classes = 0;
  double mean_class_count = 0.0;
  double std_class_count = 0.0;                    // population std
  std::vector<std::vector<int>> class_clients;     // class j -> sorted client ids holding j
  std::vector<long> class_total;                   // class j -> train samples across clients
  std::vector<std::map<int, long>> client_counts;  // client k -> class -> train samples
};

// Isotropic Gaussian blob per class, class means placed pairwise at
// least 4*spread apart, class-major sample order. Deterministic in seed.
Dataset generate_synthetic(int num_classes, int dim, int per_class,
                           double spread, std::uint64_t seed);

// Draws each client's class count, picks that many classes uniformly
// without replacement, then samples_per_class samples per chosen class
// from the class pool without replacement (falling back to replacement
// once a pool is exhausted). 80/20 train/test split per class.
std::vector<ClientShard> partition_non_iid(const Dataset& ds, int num_clients,
                                           const PartitionSpec& spec,
                                           std::uint64_t seed);

ShardStats shard_stats(const std::vector<ClientShard>& shards);

// CSV with header client_id,split,label,f0,f1,...; floats at 17
// significant digits so a round-trip is bit-faithful.
std::string shards_to_csv(const std::vector<ClientShard>& shards);
std::vector<ClientShard> shards_from_csv(const std::string& csv);

}  // namespace fedrfq
