// Acceptance suite: one pass/fail line per criterion, nonzero exit when
// any fails. Trend criteria run the full synthetic pipeline over five
// seeds; everything else is property-checked against independent oracles.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fedrfq/adversary.hpp"
#include "fedrfq/aggregation.hpp"
#include "fedrfq/analysis.hpp"
#include "fedrfq/consensus.hpp"
#include "fedrfq/experiment.hpp"
#include "fedrfq/model.hpp"
#include "fedrfq/rng.hpp"
#include "fedrfq/softpool.hpp"

using namespace fedrfq;

namespace {

int failures = 0;

double now_seconds() {
  using clock = std::chrono::steady_clock;
  static const clock::time_point start = clock::now();
  return std::chrono::duration<double>(clock::now() - start).count();
}

void report(int criterion, bool pass, const std::string& detail, double secs) {
  std::printf("criterion %2d %s  (%.2fs)  %s\n", criterion,
              pass ? "PASS" : "FAIL", secs, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

// ---- shared experiment runs ---------------------------------------------

ExperimentConfig acceptance_config(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.seed = seed;
  cfg.clients = 20;
  cfg.classes = 10;
  cfg.input_dim = 16;
  cfg.proto_rows = 4;
  cfg.proto_cols = 4;
  cfg.kernel = 2;
  cfg.stride = 2;
  cfg.rounds = 30;
  cfg.local_iters = 5;
  cfg.eta = 0.01;
  cfg.lambda = 1.0;
  cfg.batch_size = 32;
  cfg.avg_classes = 3;
  cfg.std_classes = 2;
  cfg.samples_per_class = 30;
  cfg.spread = 1.0;
  cfg.servers = 4;
  cfg.psi = 0;
  cfg.zeta = 0;
  cfg.attack_eps_multiplier = 10.0;
  return cfg;
}

const std::vector<std::uint64_t> kSeeds = {101, 102, 103, 104, 105};

std::map<std::string, ExperimentResult> run_cache;

const ExperimentResult& cached_run(const std::string& name,
                                   const ExperimentConfig& cfg) {
  auto it = run_cache.find(name);
  if (it == run_cache.end()) {
    it = run_cache.emplace(name, run_experiment(cfg)).first;
  }
  return it->second;
}

double final_accuracy_pct(const ExperimentResult& r) {
  return 100.0 * r.records.back().mean_accuracy;
}

// ---- criterion 1: softpool Lipschitz bound ------------------------------

void criterion_1() {
  double t0 = now_seconds();
  Rng rng(0xACC1);
  int violations = 0;
  const int pairs = 10000;
  for (int k : {2, 3}) {
    double bound = lipschitz_constant({k, k});
    for (int trial = 0; trial < pairs; ++trial) {
      Matrix a(k, k), b(k, k);
      for (double& v : a.values) v = -5.0 + 10.0 * rng.next_double();
      for (double& v : b.values) v = -5.0 + 10.0 * rng.next_double();
      double max_diff = 0.0;
      for (int i = 0; i < a.size(); ++i) {
        max_diff = std::max(max_diff,
                            std::abs(a.values[static_cast<std::size_t>(i)] -
                                     b.values[static_cast<std::size_t>(i)]));
      }
      if (std::abs(pool_region(a) - pool_region(b)) > bound * max_diff) {
        ++violations;
      }
    }
  }
  double secs = now_seconds() - t0;
  std::ostringstream detail;
  detail << "softpool Lipschitz: " << violations << " violations over "
         << 2 * pairs << " pairs, k in {2,3}";
  report(1, violations == 0 && secs < 5.0, detail.str(), secs);
}

// ---- criterion 2: gradient correctness ----------------------------------

double sample_loss(const ModelParams& p, const Vec& x, int label,
                   const Vec& target, double lambda, const KernelSpec& spec) {
  FeatureMap c = forward_representation(p, x);
  double loss = cross_entropy(forward_decision(p, c), label);
  if (lambda != 0.0 && !target.empty()) {
    loss += lambda * l2_distance(softpool(c, spec).values, target);
  }
  return loss;
}

void criterion_2() {
  double t0 = now_seconds();
  KernelSpec spec{2, 2};
  Rng rng(0xACC2);
  double worst = 0.0;
  for (double lambda : {0.0, 0.1, 1.0}) {
    for (int trial = 0; trial < 20; ++trial) {
      Rng init(rng.next_u64());
      ModelParams p = init_params(6, 4, 4, 3, init);
      Vec x = rng.normal_vec(6);
      int label = rng.next_int(3);
      Vec target = rng.normal_vec(4);

      FeatureMap c = forward_representation(p, x);
      FeatureMap proto_grad;
      if (lambda != 0.0) {
        PooledMap pooled = softpool(c, spec);
        double dist = l2_distance(pooled.values, target);
        PooledMap upstream(pooled.rows, pooled.cols);
        if (dist > 0.0) {
          for (std::size_t i = 0; i < target.size(); ++i)
            upstream.values[i] = (pooled.values[i] - target[i]) / dist;
        }
        proto_grad = softpool_backward(c, spec, upstream);
      }
      GradientBundle analytic = backward(p, x, label, proto_grad, lambda);
      GradientBundle numeric = finite_difference_gradient(
          [&](const ModelParams& q) {
            return sample_loss(q, x, label, target, lambda, spec);
          },
          p, 1e-5);

      auto cmp = [&](double u, double v) {
        double denom = std::max({std::abs(u), std::abs(v), 1e-6});
        worst = std::max(worst, std::abs(u - v) / denom);
      };
      for (std::size_t i = 0; i < analytic.repr_weights.values.size(); ++i)
        cmp(analytic.repr_weights.values[i], numeric.repr_weights.values[i]);
      for (std::size_t i = 0; i < analytic.repr_bias.size(); ++i)
        cmp(analytic.repr_bias[i], numeric.repr_bias[i]);
      for (std::size_t i = 0; i < analytic.decision_weights.values.size(); ++i)
        cmp(analytic.decision_weights.values[i], numeric.decision_weights.values[i]);
      for (std::size_t i = 0; i < analytic.decision_bias.size(); ++i)
        cmp(analytic.decision_bias[i], numeric.decision_bias[i]);
    }
  }
  double secs = now_seconds() - t0;
  std::ostringstream detail;
  detail << "max relative error vs finite differences: " << worst;
  report(2, worst < 1e-4 && secs < 10.0, detail.str(), secs);
}

// ---- criterion 3: security probability ----------------------------------

long double binomial_cdf_oracle(int n, int k, long double p) {
  if (p == 0.0L) return 1.0L;
  long double term = std::pow(1.0L - p, n);
  long double sum = term;
  for (int i = 1; i <= k; ++i) {
    term *= static_cast<long double>(n - i + 1) / i * (p / (1.0L - p));
    sum += term;
  }
  return sum;
}

void criterion_3() {
  double t0 = now_seconds();
  const std::vector<double> pms = {0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5};
  int cells = 0;
  double worst = 0.0;
  for (int n = 1; n <= 25; ++n) {
    for (double p : pms) {
      double got = security_probability({n, p});
      long double want = binomial_cdf_oracle(n, (n - 1) / 3, p);
      worst = std::max(worst, std::abs(got - static_cast<double>(want)));
      ++cells;
    }
  }
  bool regime = true;
  for (int n : {22, 25, 31}) {
    regime = regime && security_probability({n, 0.1}) > 0.99;
  }
  double secs = now_seconds() - t0;
  std::ostringstream detail;
  detail << cells << "-cell grid, max |impl - oracle| = " << worst
         << "; N in {22,25,31} at p=0.1 all > 0.99: " << (regime ? "yes" : "no");
  report(3, cells == 200 && worst < 1e-12 && regime && secs < 1.0, detail.str(),
         secs);
}

// ---- criterion 4: quality detection vs sort oracle -----------------------

void criterion_4() {
  double t0 = now_seconds();
  Rng rng(0xACC4);
  bool all_equal = true;
  for (int trial = 0; trial < 1000 && all_equal; ++trial) {
    int n = 6 + rng.next_int(15);
    std::vector<std::pair<int, double>> d;
    for (int k = 0; k < n; ++k) {
      // quantized values make ties common enough to matter
      d.emplace_back(k, rng.next_int(8) * 0.25);
    }
    for (int psi = 0; psi <= 5 && all_equal; ++psi) {
      auto oracle = d;
      std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
      });
      std::vector<int> expected;
      for (int i = 0; i < psi; ++i)
        expected.push_back(oracle[static_cast<std::size_t>(i)].first);
      std::sort(expected.begin(), expected.end());
      all_equal = select_filtered(d, psi) == expected;
    }
  }
  double secs = now_seconds() - t0;
  report(4, all_equal,
         "1000 random discrepancy vectors, psi 0..5, filtered == sort oracle",
         secs);
}

// ---- criterion 5: consensus safety and liveness ---------------------------

std::vector<Submission> consensus_population(ShardStats* stats, std::uint64_t seed) {
  Rng rng(seed);
  const int clients = 8, classes = 3;
  stats->num_clients = clients;
  stats->num_classes = classes;
  stats->class_clients.assign(classes, {});
  stats->class_total.assign(classes, 0);
  stats->client_counts.assign(clients, {});
  std::vector<Submission> subs;
  for (int k = 0; k < clients; ++k) {
    PrototypeSet set;
    for (int cls = 0; cls < classes; ++cls) {
      if ((k + cls) % 2 == 0) continue;
      set.protos[cls] = {1.0 * cls + 0.1 * rng.next_normal(),
                         0.5 * cls + 0.1 * rng.next_normal()};
      long count = 2 + rng.next_int(4);
      set.counts[cls] = count;
      stats->class_clients[static_cast<std::size_t>(cls)].push_back(k);
      stats->class_total[static_cast<std::size_t>(cls)] += count;
      stats->client_counts[static_cast<std::size_t>(k)][cls] = count;
    }
    subs.emplace_back(k, std::move(set));
  }
  return subs;
}

void criterion_5() {
  double t0 = now_seconds();
  bool safe = true, live = true;
  int scenarios = 0;
  for (int n : {4, 7, 10}) {
    int f_max = (n - 1) / 3;
    for (int scenario = 0; scenario < 5; ++scenario) {
      FaultPlan plan;
      switch (scenario) {
        case 0: break;
        case 1:
          for (int i = 0; i < f_max; ++i)
            plan.server_behavior[i] = ServerBehavior::Crash;
          break;
        case 2:
          for (int i = 0; i < f_max; ++i)
            plan.server_behavior[i] = ServerBehavior::Tamper;
          break;
        case 3:
          plan.server_behavior[0] = ServerBehavior::Equivocate;
          break;
        case 4:
          for (int i = 0; i < f_max; ++i)
            plan.server_behavior[i + 1] = ServerBehavior::Amnesia;
          break;
      }
      ShardStats stats;
      std::vector<Submission> subs = consensus_population(
          &stats, static_cast<std::uint64_t>(1000 * n + scenario));
      ConsensusConfig cfg;
      cfg.num_servers = n;
      cfg.psi = 1;
      cfg.max_faults = f_max;
      ConsensusOutcome out = consensus_round(
          subs, stats, cfg, plan, static_cast<std::uint64_t>(n + scenario));
      ++scenarios;
      live = live && out.confirmed && out.view_changes <= n;
      const ProposalPayload* ref = nullptr;
      for (const ServerState& s : out.servers) {
        if (s.behavior != ServerBehavior::Honest || !s.confirmed) continue;
        if (!s.accepted) {
          safe = false;
          continue;
        }
        if (!ref) {
          ref = s.accepted.get();
        } else {
          safe = safe && s.accepted->global.protos == ref->global.protos &&
                 s.accepted->filtered == ref->filtered;
        }
      }
      safe = safe && ref != nullptr;
    }
  }
  double secs = now_seconds() - t0;
  std::ostringstream detail;
  detail << scenarios << " scenarios (N in {4,7,10} x 5 faults): "
         << "bitwise-identical confirmations " << (safe ? "yes" : "NO")
         << ", confirmed within N view changes " << (live ? "yes" : "NO");
  report(5, safe && live && secs < 30.0, detail.str(), secs);
}

// ---- criteria 6-8: trend experiments --------------------------------------

void criterion_6() {
  double t0 = now_seconds();
  double clean = 0.0, psi0 = 0.0, psi2 = 0.0;
  for (std::uint64_t seed : kSeeds) {
    ExperimentConfig cfg = acceptance_config(seed);
    clean += final_accuracy_pct(cached_run("clean" + std::to_string(seed), cfg));

    cfg.zeta = 2;
    cfg.psi = 0;
    psi0 += final_accuracy_pct(cached_run("psi0_" + std::to_string(seed), cfg));

    cfg.psi = 2;
    psi2 += final_accuracy_pct(cached_run("psi2_" + std::to_string(seed), cfg));
  }
  clean /= kSeeds.size();
  psi0 /= kSeeds.size();
  psi2 /= kSeeds.size();
  double secs = now_seconds() - t0;
  std::ostringstream detail;
  detail.precision(2);
  detail << std::fixed << "final accuracy (5-seed mean): clean=" << clean
         << " psi0=" << psi0 << " psi2=" << psi2
         << "; psi2-psi0=" << (psi2 - psi0)
         << " (need >= 5), |psi2-clean|=" << std::abs(psi2 - clean)
         << " (need <= 2)";
  report(6, psi2 - psi0 >= 5.0 && std::abs(psi2 - clean) <= 2.0 && secs < 300.0,
         detail.str(), secs);
}

void criterion_7() {
  double t0 = now_seconds();
  double with_proto = 0.0, without = 0.0;
  for (std::uint64_t seed : kSeeds) {
    ExperimentConfig cfg = acceptance_config(seed);
    with_proto +=
        final_accuracy_pct(cached_run("clean" + std::to_string(seed), cfg));
    cfg.lambda = 0.0;
    without +=
        final_accuracy_pct(cached_run("lambda0_" + std::to_string(seed), cfg));
  }
  with_proto /= kSeeds.size();
  without /= kSeeds.size();
  double secs = now_seconds() - t0;
  std::ostringstream detail;
  detail.precision(2);
  detail << std::fixed << "final accuracy (5-seed mean): lambda1=" << with_proto
         << " lambda0=" << without << "; delta=" << (with_proto - without)
         << " (need >= 3)";
  report(7, with_proto - without >= 3.0, detail.str(), secs);
}

double transmitted_silhouette(const ExperimentResult& r) {
  std::vector<Vec> points;
  std::vector<int> labels;
  for (const auto& [id, set] : r.final_submissions) {
    for (const auto& [cls, proto] : set.protos) {
      points.push_back(proto);
      labels.push_back(cls);
    }
  }
  return silhouette(points, labels);
}

void criterion_8() {
  double t0 = now_seconds();
  double pooled = 0.0, unpooled = 0.0;
  for (std::uint64_t seed : kSeeds) {
    ExperimentConfig cfg = acceptance_config(seed);
    pooled +=
        transmitted_silhouette(cached_run("clean" + std::to_string(seed), cfg));
    cfg.no_softpool = true;
    unpooled += transmitted_silhouette(
        cached_run("nopool_" + std::to_string(seed), cfg));
  }
  pooled /= kSeeds.size();
  unpooled /= kSeeds.size();
  double secs = now_seconds() - t0;
  std::ostringstream detail;
  detail.precision(4);
  detail << std::fixed << "silhouette (5-seed mean): softpool=" << pooled
         << " no-softpool=" << unpooled << "; delta=" << (pooled - unpooled)
         << " (need >= 0)";
  report(8, pooled >= unpooled, detail.str(), secs);
}

// ---- criterion 9: communication reduction ---------------------------------

void criterion_9() {
  double t0 = now_seconds();
  bool ok = true;
  for (int rows : {2, 4, 6, 8, 10}) {
    long pooled = comm_params(10, rows, rows, {2, 2});
    long unpooled = comm_params(10, rows, rows, {1, 1});
    ok = ok && unpooled == 4 * pooled;
  }
  report(9, ok, "k=stride=2 uploads exactly 1/4 of the unpooled scalars",
         now_seconds() - t0);
}

// ---- criterion 10: bitwise determinism ------------------------------------

void criterion_10() {
  double t0 = now_seconds();
  namespace fs = std::filesystem;
  fs::path base = fs::temp_directory_path() / "fedrfq_acceptance";
  ExperimentConfig cfg = acceptance_config(314159);
  cfg.rounds = 10;  // the contract is bitwise equality, not length
  cfg.output_dir = (base / "a").string();
  run_experiment(cfg);
  cfg.output_dir = (base / "b").string();
  run_experiment(cfg);

  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  };
  std::string a = slurp(base / "a" / "rounds.csv");
  std::string b = slurp(base / "b" / "rounds.csv");
  bool ok = !a.empty() && a == b;
  report(10, ok, "two identical-seed runs wrote bitwise-identical rounds.csv",
         now_seconds() - t0);
}

// ---- criterion 11: partition fidelity -------------------------------------

void criterion_11() {
  double t0 = now_seconds();
  double sum = 0.0, sum_sq = 0.0;
  long count = 0;
  for (int seed = 0; seed < 50; ++seed) {
    Dataset ds = generate_synthetic(10, 8, 20 * 12, 0.5,
                                    static_cast<std::uint64_t>(seed) + 40000);
    auto shards = partition_non_iid(ds, 20, {3, 2, 12},
                                    static_cast<std::uint64_t>(seed) + 40000);
    for (const ClientShard& s : shards) {
      double n = static_cast<double>(s.classes.size());
      sum += n;
      sum_sq += n * n;
      ++count;
    }
  }
  double mean = sum / count;
  double stddev = std::sqrt(std::max(0.0, sum_sq / count - mean * mean));
  double secs = now_seconds() - t0;
  std::ostringstream detail;
  detail.precision(3);
  detail << std::fixed << "realized class count over 50 seeds: mean=" << mean
         << " (need [2.3,3.7]), std=" << stddev << " (need [1.2,2.8])";
  report(11, mean >= 2.3 && mean <= 3.7 && stddev >= 1.2 && stddev <= 2.8,
         detail.str(), secs);
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10();
  criterion_11();
  if (failures == 0) {
    std::printf("all 11 acceptance criteria passed\n");
  } else {
    std::printf("%d acceptance criteria FAILED\n", failures);
  }
  return failures == 0 ? 0 : 1;
}
