#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedrfq/adversary.hpp"
#include "fedrfq/aggregation.hpp"
#include "fedrfq/client.hpp"
#include "fedrfq/consensus.hpp"
#include "fedrfq/data.hpp"

namespace fedrfq {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat key = value experiment description. Every field has a default and
// is echoed back into config.echo.txt on each run.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  int clients = 20;              // K
  int classes = 10;              // J
  int input_dim = 16;
  int proto_rows = 4;
  int proto_cols = 4;
  int kernel = 2;                // pooling filter side
  int stride = 2;
  int rounds = 30;               // T
  int local_iters = 5;           // E
  double eta = 0.01;
  double lambda = 1.0;
  int batch_size = 32;
  int avg_classes = 3;           // mean classes per client
  int std_classes = 2;           // its standard deviation
  int samples_per_class = 25;
  double spread = 1.0;           // per-class Gaussian sigma
  int servers = 4;               // N
  int max_faults = -1;           // f; -1 = floor((N-1)/3)
  int psi = 0;                   // clients filtered per round
  int zeta = 0;                  // malicious clients (lowest ids)
  double attack_eps_multiplier = 10.0;
  double tamper_factor = 1.5;
  int crash_from_view = 0;
  std::string byz_servers;       // e.g. "0:crash,2:tamper"
  std::string aggregation_mode = "normalized";  // or "paper-literal"
  bool no_softpool = false;      // identity pooling (kernel = stride = 1)
  bool parallel = true;          // OpenMP fan-out over clients
  int threads = 0;               // 0 = library default
  bool write_trace = false;      // consensus trace.jsonl
  std::string output_dir;        // empty = no files written
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);
std::string config_echo(const ExperimentConfig& cfg);

FaultPlan parse_fault_plan(const ExperimentConfig& cfg);
AggregationMode parse_aggregation_mode(const std::string& name);
KernelSpec kernel_spec(const ExperimentConfig& cfg);
int resolved_max_faults(const ExperimentConfig& cfg);

struct RoundRecord {
  int round = 0;
  double mean_accuracy = 0.0;   // over clients, in [0, 1]
  double std_accuracy = 0.0;
  double global_objective = 0.0;
  double prototype_loss_term = 0.0;
  std::vector<int> filtered;
  int view_changes = 0;
  bool confirmed = true;
};

struct ExperimentResult {
  std::vector<RoundRecord> records;
  std::vector<Submission> final_submissions;  // as transmitted in the last round
  PrototypeSet final_global;
  std::vector<double> final_accuracies;       // per client, after the last round
  ShardStats stats;
  int aborted_rounds = 0;
};

// Runs the full two-phase round loop: local training and prototype
// averaging (phase one, fanned out over clients), poisoning injection,
// then BFT-detect consensus (phase two). Deterministic in cfg.seed
// regardless of thread count. Writes rounds.csv, config.echo.txt,
// prototypes_final.csv and optionally trace.jsonl when output_dir is set.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

std::string rounds_csv(const std::vector<RoundRecord>& records);

// One row per (N, p_m) pair: N,p_m,probability.
std::string sweep_security(int n_min, int n_max, const std::vector<double>& p_m);

}  // namespace fedrfq
