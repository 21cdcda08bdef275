// Times the per-client training fan-out with and without OpenMP and
// checks that both paths emit bit-identical results.

#include <chrono>
#include <cstdio>
#include <string>

#include "fedrfq/experiment.hpp"
#include "fedrfq/parallel.hpp"

namespace {

double run_timed(fedrfq::ExperimentConfig cfg, bool parallel, std::string* csv) {
  cfg.parallel = parallel;
  auto start = std::chrono::steady_clock::now();
  fedrfq::ExperimentResult result = fedrfq::run_experiment(cfg);
  auto stop = std::chrono::steady_clock::now();
  *csv = fedrfq::rounds_csv(result.records);
  return std::chrono::duration<double>(stop - start).count();
}

}  // namespace

int main(int argc, char** argv) {
  fedrfq::ExperimentConfig cfg;
  cfg.rounds = 10;
  cfg.clients = 40;
  cfg.samples_per_class = 40;
  if (argc > 1) cfg = fedrfq::parse_config_file(argv[1]);
  cfg.output_dir.clear();

  std::printf("clients=%d rounds=%d local_iters=%d batch=%d threads=%d\n",
              cfg.clients, cfg.rounds, cfg.local_iters, cfg.batch_size,
              fedrfq::max_threads());

  std::string serial_csv, parallel_csv;
  double t_serial = run_timed(cfg, false, &serial_csv);
  double t_parallel = run_timed(cfg, true, &parallel_csv);

  std::printf("serial:   %8.3f s\n", t_serial);
  std::printf("parallel: %8.3f s  (speedup %.2fx)\n", t_parallel,
              t_serial / t_parallel);
  if (serial_csv != parallel_csv) {
    std::printf("MISMATCH: serial and parallel rounds differ\n");
    return 1;
  }
  std::printf("outputs identical\n");
  return 0;
}
