#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedrfq/analysis.hpp"
#include "fedrfq/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitAllRoundsAborted = 3;

std::vector<double> parse_pm_list(const std::string& list) {
  std::vector<double> values;
  std::istringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) {
    values.push_back(std::stod(item));
  }
  if (values.empty()) {
    throw fedrfq::ConfigError("security-prob: --pm needs at least one value");
  }
  return values;
}

int cmd_run(const std::string& config_path, bool no_softpool, int psi_override,
            const std::string& out_override, int threads_override) {
  fedrfq::ExperimentConfig cfg = fedrfq::parse_config_file(config_path);
  if (no_softpool) cfg.no_softpool = true;
  if (psi_override >= 0) cfg.psi = psi_override;
  if (!out_override.empty()) cfg.output_dir = out_override;
  if (cfg.output_dir.empty()) cfg.output_dir = "out";
  if (threads_override >= 0) cfg.threads = threads_override;

  fedrfq::ExperimentResult result = fedrfq::run_experiment(cfg);

  std::cout << "wrote " << cfg.output_dir << "/rounds.csv ("
            << result.records.size() << " rounds)\n";
  if (!result.records.empty()) {
    const fedrfq::RoundRecord& last = result.records.back();
    std::printf("final round %d: mean_acc=%.4f std_acc=%.4f objective=%.4f\n",
                last.round, last.mean_accuracy, last.std_accuracy,
                last.global_objective);
    if (result.aborted_rounds == static_cast<int>(result.records.size())) {
      std::cerr << "consensus aborted in every round\n";
      return kExitAllRoundsAborted;
    }
  }
  return kExitOk;
}

int cmd_security_prob(int n_min, int n_max, const std::string& pm_list,
                      const std::string& out_path) {
  std::string csv = fedrfq::sweep_security(n_min, n_max, parse_pm_list(pm_list));
  std::ofstream out(out_path, std::ios::binary);
  if (!out) {
    std::cerr << "cannot write " << out_path << "\n";
    return 1;
  }
  out << csv;
  std::cout << "wrote " << out_path << "\n";
  return kExitOk;
}

int cmd_partition_stats(const std::string& config_path) {
  fedrfq::ExperimentConfig cfg = fedrfq::parse_config_file(config_path);
  fedrfq::Dataset ds = fedrfq::generate_synthetic(
      cfg.classes, cfg.input_dim, cfg.samples_per_class * cfg.clients,
      cfg.spread, cfg.seed);
  fedrfq::PartitionSpec part{cfg.avg_classes, cfg.std_classes,
                             cfg.samples_per_class};
  auto shards = fedrfq::partition_non_iid(ds, cfg.clients, part, cfg.seed);
  fedrfq::ShardStats stats = fedrfq::shard_stats(shards);

  std::printf("clients: %d  classes: %d\n", stats.num_clients, stats.num_classes);
  std::printf("requested class count: avg=%d std=%d\n", cfg.avg_classes,
              cfg.std_classes);
  std::printf("realized class count: mean=%.4f std=%.4f\n",
              stats.mean_class_count, stats.std_class_count);
  for (int j = 0; j < stats.num_classes; ++j) {
    std::printf("class %d: holders=%zu train_samples=%ld\n", j,
                stats.class_clients[static_cast<std::size_t>(j)].size(),
                stats.class_total[static_cast<std::size_t>(j)]);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FedRFQ desk-scale simulator"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run a federated experiment");
  std::string run_config;
  bool run_no_softpool = false;
  int run_psi = -1;
  std::string run_out;
  int run_threads = -1;
  run->add_option("--config", run_config, "key = value config file")->required();
  run->add_flag("--no-softpool", run_no_softpool,
                "transmit unpooled prototypes (identity pooling)");
  run->add_option("--psi", run_psi, "override the security level");
  run->add_option("--out", run_out, "output directory");
  run->add_option("--threads", run_threads, "OpenMP thread count (0 = default)");

  auto* sec = app.add_subcommand("security-prob",
                                 "Sweep the server-malfunction security probability");
  int n_min = 0, n_max = 0;
  std::string pm_list, sec_out;
  sec->add_option("--n-min", n_min, "smallest server count")->required();
  sec->add_option("--n-max", n_max, "largest server count")->required();
  sec->add_option("--pm", pm_list, "comma-separated malicious probabilities")
      ->required();
  sec->add_option("--out", sec_out, "output CSV path")->required();

  auto* part = app.add_subcommand("partition-stats",
                                  "Report the realized non-IID partition");
  std::string part_config;
  part->add_option("--config", part_config, "key = value config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (run->parsed()) {
      return cmd_run(run_config, run_no_softpool, run_psi, run_out, run_threads);
    }
    if (sec->parsed()) {
      return cmd_security_prob(n_min, n_max, pm_list, sec_out);
    }
    if (part->parsed()) {
      return cmd_partition_stats(part_config);
    }
  } catch (const fedrfq::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
