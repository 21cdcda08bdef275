#include "fedrfq/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "fedrfq/analysis.hpp"
#include "fedrfq/parallel.hpp"
#include "fedrfq/rng.hpp"

namespace fedrfq {

namespace {

std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

long parse_long(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    long v = std::stol(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer for " + key + ": '" + value + "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number for " + key + ": '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config: bad bool for " + key + ": '" + value + "'");
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.clients < 1) throw ConfigError("config: clients must be >= 1");
  if (cfg.classes < 2) throw ConfigError("config: classes must be >= 2");
  if (cfg.input_dim < 2) throw ConfigError("config: input_dim must be >= 2");
  if (cfg.proto_rows < 1 || cfg.proto_cols < 1) {
    throw ConfigError("config: proto dims must be >= 1");
  }
  if (cfg.kernel < 1 || cfg.stride < 1) {
    throw ConfigError("config: kernel and stride must be >= 1");
  }
  if (cfg.kernel > std::min(cfg.proto_rows, cfg.proto_cols)) {
    throw ConfigError("config: kernel larger than prototype map");
  }
  if (cfg.rounds < 0) throw ConfigError("config: rounds must be >= 0");
  if (cfg.local_iters < 1) throw ConfigError("config: local_iters must be >= 1");
  if (cfg.eta <= 0.0) throw ConfigError("config: eta must be > 0");
  if (cfg.lambda < 0.0) throw ConfigError("config: lambda must be >= 0");
  if (cfg.batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  if (cfg.avg_classes < 1 || cfg.avg_classes > cfg.classes) {
    throw ConfigError("config: avg_classes must be in [1, classes]");
  }
  if (cfg.std_classes < 0) throw ConfigError("config: std_classes must be >= 0");
  if (cfg.samples_per_class < 2) {
    throw ConfigError("config: samples_per_class must be >= 2");
  }
  if (cfg.spread < 0.0) throw ConfigError("config: spread must be >= 0");
  if (cfg.servers < 1) throw ConfigError("config: servers must be >= 1");
  if (cfg.psi < 0 || cfg.psi >= cfg.clients) {
    throw ConfigError("config: psi must be in [0, clients)");
  }
  if (cfg.zeta < 0 || cfg.zeta > cfg.clients) {
    throw ConfigError("config: zeta must be in [0, clients]");
  }
  if (cfg.attack_eps_multiplier < 0.0) {
    throw ConfigError("config: attack_eps_multiplier must be >= 0");
  }
  int bound = (cfg.servers - 1) / 3;
  int f = cfg.max_faults < 0 ? bound : cfg.max_faults;
  if (f > bound) {
    throw ConfigError("config: max_faults must be <= floor((servers-1)/3)");
  }
  parse_aggregation_mode(cfg.aggregation_mode);
  parse_fault_plan(cfg);
}

struct PhaseOneSlot {
  double loss = 0.0;
  double accuracy = 0.0;
  PrototypeSet submission;
};

// Mean pairwise L2 distance between honest clients' prototypes of the
// same class, averaged over classes held by at least two honest clients.
// This is the yardstick for attack_eps.
double honest_spread(const std::vector<Submission>& submissions,
                     const std::vector<bool>& honest) {
  std::map<int, std::vector<const Vec*>> by_class;
  for (const auto& [client_id, set] : submissions) {
    if (!honest[static_cast<std::size_t>(client_id)]) continue;
    for (const auto& [cls, proto] : set.protos) by_class[cls].push_back(&proto);
  }
  double total = 0.0;
  int classes = 0;
  for (const auto& [cls, protos] : by_class) {
    if (protos.size() < 2) continue;
    double sum = 0.0;
    int pairs = 0;
    for (std::size_t a = 0; a < protos.size(); ++a) {
      for (std::size_t b = a + 1; b < protos.size(); ++b) {
        sum += l2_distance(*protos[a], *protos[b]);
        ++pairs;
      }
    }
    total += sum / pairs;
    ++classes;
  }
  return classes > 0 ? total / classes : 0.0;
}

// Global objective: total cross-entropy over every client's training set
// scaled by 1/|D|, plus lambda times the count-weighted per-class
// distances between client prototype averages and the global prototypes
// they trained against this round.
std::pair<double, double> global_objective(
    const std::vector<ClientState>& clients,
    const std::vector<Submission>& submissions, const PrototypeSet& global,
    double lambda) {
  long total_samples = 0;
  double ce_sum = 0.0;
  for (const ClientState& c : clients) {
    total_samples += static_cast<long>(c.shard.train.size());
    for (const Sample& s : c.shard.train) {
      FeatureMap m = forward_representation(c.params, s.features);
      ce_sum += cross_entropy(forward_decision(c.params, m), s.label);
    }
  }
  double ce_term = total_samples > 0 ? ce_sum / total_samples : 0.0;

  double proto_term = 0.0;
  if (!global.empty()) {
    std::map<int, long> class_totals;
    for (const auto& [client_id, set] : submissions) {
      for (const auto& [cls, cnt] : set.counts) class_totals[cls] += cnt;
    }
    for (const auto& [client_id, set] : submissions) {
      for (const auto& [cls, proto] : set.protos) {
        auto it = global.protos.find(cls);
        if (it == global.protos.end()) continue;
        double weight = static_cast<double>(set.counts.at(cls)) /
                        static_cast<double>(class_totals.at(cls));
        proto_term += weight * l2_distance(proto, it->second);
      }
    }
  }
  return {ce_term + lambda * proto_term, proto_term};
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

std::string trace_jsonl(const std::vector<TraceEntry>& trace) {
  std::ostringstream out;
  for (const TraceEntry& e : trace) {
    char digest[20];
    std::snprintf(digest, sizeof(digest), "%016llx",
                  static_cast<unsigned long long>(e.digest));
    nlohmann::json line = {{"kind", msg_kind_name(e.kind)},
                           {"view", e.view},
                           {"sender", e.sender},
                           {"digest", digest},
                           {"delivered_at", e.delivered_at}};
    out << line.dump() << "\n";
  }
  return out.str();
}

std::string prototypes_csv(const std::vector<Submission>& submissions) {
  std::ostringstream out;
  std::size_t dim = 0;
  for (const auto& [id, set] : submissions) {
    for (const auto& [cls, proto] : set.protos) dim = std::max(dim, proto.size());
  }
  out << "client_id,class";
  for (std::size_t d = 0; d < dim; ++d) out << ",f" << d;
  out << "\n";
  for (const auto& [id, set] : submissions) {
    for (const auto& [cls, proto] : set.protos) {
      out << id << ',' << cls;
      for (double v : proto) out << ',' << format_g17(v);
      out << "\n";
    }
  }
  return out.str();
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string stripped = trim(line.substr(0, line.find('#')));
    if (stripped.empty()) continue;
    std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    std::string key = trim(stripped.substr(0, eq));
    std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    }

    if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(parse_long(key, value));
    } else if (key == "clients") {
      cfg.clients = static_cast<int>(parse_long(key, value));
    } else if (key == "classes") {
      cfg.classes = static_cast<int>(parse_long(key, value));
    } else if (key == "input_dim") {
      cfg.input_dim = static_cast<int>(parse_long(key, value));
    } else if (key == "proto_rows") {
      cfg.proto_rows = static_cast<int>(parse_long(key, value));
    } else if (key == "proto_cols") {
      cfg.proto_cols = static_cast<int>(parse_long(key, value));
    } else if (key == "kernel") {
      cfg.kernel = static_cast<int>(parse_long(key, value));
    } else if (key == "stride") {
      cfg.stride = static_cast<int>(parse_long(key, value));
    } else if (key == "rounds") {
      cfg.rounds = static_cast<int>(parse_long(key, value));
    } else if (key == "local_iters") {
      cfg.local_iters = static_cast<int>(parse_long(key, value));
    } else if (key == "eta") {
      cfg.eta = parse_double(key, value);
    } else if (key == "lambda") {
      cfg.lambda = parse_double(key, value);
    } else if (key == "batch_size") {
      cfg.batch_size = static_cast<int>(parse_long(key, value));
    } else if (key == "avg_classes") {
      cfg.avg_classes = static_cast<int>(parse_long(key, value));
    } else if (key == "std_classes") {
      cfg.std_classes = static_cast<int>(parse_long(key, value));
    } else if (key == "samples_per_class") {
      cfg.samples_per_class = static_cast<int>(parse_long(key, value));
    } else if (key == "spread") {
      cfg.spread = parse_double(key, value);
    } else if (key == "servers") {
      cfg.servers = static_cast<int>(parse_long(key, value));
    } else if (key == "max_faults") {
      cfg.max_faults = static_cast<int>(parse_long(key, value));
    } else if (key == "psi") {
      cfg.psi = static_cast<int>(parse_long(key, value));
    } else if (key == "zeta") {
      cfg.zeta = static_cast<int>(parse_long(key, value));
    } else if (key == "attack_eps_multiplier") {
      cfg.attack_eps_multiplier = parse_double(key, value);
    } else if (key == "tamper_factor") {
      cfg.tamper_factor = parse_double(key, value);
    } else if (key == "crash_from_view") {
      cfg.crash_from_view = static_cast<int>(parse_long(key, value));
    } else if (key == "byz_servers") {
      cfg.byz_servers = value;
    } else if (key == "aggregation_mode") {
      cfg.aggregation_mode = value;
    } else if (key == "no_softpool") {
      cfg.no_softpool = parse_bool(key, value);
    } else if (key == "parallel") {
      cfg.parallel = parse_bool(key, value);
    } else if (key == "threads") {
      cfg.threads = static_cast<int>(parse_long(key, value));
    } else if (key == "write_trace") {
      cfg.write_trace = parse_bool(key, value);
    } else if (key == "output_dir") {
      cfg.output_dir = value;
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }
  validate(cfg);
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string config_echo(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "seed = " << cfg.seed << "\n";
  out << "clients = " << cfg.clients << "\n";
  out << "classes = " << cfg.classes << "\n";
  out << "input_dim = " << cfg.input_dim << "\n";
  out << "proto_rows = " << cfg.proto_rows << "\n";
  out << "proto_cols = " << cfg.proto_cols << "\n";
  out << "kernel = " << cfg.kernel << "\n";
  out << "stride = " << cfg.stride << "\n";
  out << "rounds = " << cfg.rounds << "\n";
  out << "local_iters = " << cfg.local_iters << "\n";
  out << "eta = " << format_g17(cfg.eta) << "\n";
  out << "lambda = " << format_g17(cfg.lambda) << "\n";
  out << "batch_size = " << cfg.batch_size << "\n";
  out << "avg_classes = " << cfg.avg_classes << "\n";
  out << "std_classes = " << cfg.std_classes << "\n";
  out << "samples_per_class = " << cfg.samples_per_class << "\n";
  out << "spread = " << format_g17(cfg.spread) << "\n";
  out << "servers = " << cfg.servers << "\n";
  out << "max_faults = " << cfg.max_faults << "\n";
  out << "psi = " << cfg.psi << "\n";
  out << "zeta = " << cfg.zeta << "\n";
  out << "attack_eps_multiplier = " << format_g17(cfg.attack_eps_multiplier) << "\n";
  out << "tamper_factor = " << format_g17(cfg.tamper_factor) << "\n";
  out << "crash_from_view = " << cfg.crash_from_view << "\n";
  out << "byz_servers = " << cfg.byz_servers << "\n";
  out << "aggregation_mode = " << cfg.aggregation_mode << "\n";
  out << "no_softpool = " << (cfg.no_softpool ? "true" : "false") << "\n";
  out << "parallel = " << (cfg.parallel ? "true" : "false") << "\n";
  out << "threads = " << cfg.threads << "\n";
  out << "write_trace = " << (cfg.write_trace ? "true" : "false") << "\n";
  out << "output_dir = " << cfg.output_dir << "\n";
  return out.str();
}

FaultPlan parse_fault_plan(const ExperimentConfig& cfg) {
  FaultPlan plan;
  plan.tamper_factor = cfg.tamper_factor;
  plan.crash_from_view = cfg.crash_from_view;
  if (cfg.byz_servers.empty()) return plan;
  std::istringstream in(cfg.byz_servers);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t colon = item.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("config: byz_servers entries are id:behavior, got '" +
                        item + "'");
    }
    int id = static_cast<int>(parse_long("byz_servers", trim(item.substr(0, colon))));
    std::string name = trim(item.substr(colon + 1));
    ServerBehavior behavior;
    if (name == "crash") {
      behavior = ServerBehavior::Crash;
    } else if (name == "amnesia") {
      behavior = ServerBehavior::Amnesia;
    } else if (name == "tamper") {
      behavior = ServerBehavior::Tamper;
    } else if (name == "equivocate") {
      behavior = ServerBehavior::Equivocate;
    } else {
      throw ConfigError("config: unknown server behavior '" + name + "'");
    }
    if (id < 0 || id >= cfg.servers) {
      throw ConfigError("config: byz_servers id out of range");
    }
    plan.server_behavior[id] = behavior;
  }
  return plan;
}

AggregationMode parse_aggregation_mode(const std::string& name) {
  if (name == "normalized") return AggregationMode::Normalized;
  if (name == "paper-literal") return AggregationMode::PaperLiteral;
  throw ConfigError("config: aggregation_mode must be 'normalized' or "
                    "'paper-literal', got '" + name + "'");
}

KernelSpec kernel_spec(const ExperimentConfig& cfg) {
  if (cfg.no_softpool) return KernelSpec{1, 1};
  return KernelSpec{cfg.kernel, cfg.stride};
}

int resolved_max_faults(const ExperimentConfig& cfg) {
  int bound = (cfg.servers - 1) / 3;
  return cfg.max_faults < 0 ? bound : cfg.max_faults;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  set_threads(cfg.threads);
  const KernelSpec spec = kernel_spec(cfg);
  const AggregationMode mode = parse_aggregation_mode(cfg.aggregation_mode);
  const FaultPlan plan = parse_fault_plan(cfg);
  const TrainingConfig train_cfg{cfg.eta, cfg.lambda, cfg.local_iters,
                                 cfg.batch_size};
  ConsensusConfig consensus_cfg;
  consensus_cfg.num_servers = cfg.servers;
  consensus_cfg.psi = cfg.psi;
  consensus_cfg.max_faults = resolved_max_faults(cfg);
  consensus_cfg.mode = mode;

  // The synthetic pool is sized so no class runs dry even if every
  // client draws it.
  Dataset ds = generate_synthetic(cfg.classes, cfg.input_dim,
                                  cfg.samples_per_class * cfg.clients,
                                  cfg.spread, cfg.seed);
  PartitionSpec part{cfg.avg_classes, cfg.std_classes, cfg.samples_per_class};
  std::vector<ClientShard> shards =
      partition_non_iid(ds, cfg.clients, part, cfg.seed);

  ExperimentResult result;
  result.stats = shard_stats(shards);

  std::vector<ClientState> clients;
  clients.reserve(shards.size());
  std::vector<bool> honest(static_cast<std::size_t>(cfg.clients), true);
  for (int k = 0; k < cfg.clients; ++k) {
    ClientState state;
    state.client_id = k;
    state.shard = std::move(shards[static_cast<std::size_t>(k)]);
    // per-client substream: each client draws its own initial weights
    Rng init_rng(substream(cfg.seed, domains::kInit, static_cast<std::uint64_t>(k)));
    state.params = init_params(cfg.input_dim, cfg.proto_rows, cfg.proto_cols,
                               cfg.classes, init_rng);
    state.honest = k >= cfg.zeta;  // the lowest zeta ids poison their uploads
    honest[static_cast<std::size_t>(k)] = state.honest;
    clients.push_back(std::move(state));
  }

  PrototypeSet global;  // empty before the first aggregation
  std::vector<std::string> trace_lines;

  for (int round = 0; round < cfg.rounds; ++round) {
    // Phase one: local training, evaluation and prototype averaging per
    // client. Slots are merged in client-id order, so the OpenMP path is
    // bit-identical to the serial one.
    std::vector<PhaseOneSlot> slots(clients.size());
    auto run_client = [&](int k) {
      ClientState& c = clients[static_cast<std::size_t>(k)];
      PhaseOneSlot& slot = slots[static_cast<std::size_t>(k)];
      slot.loss = local_round(
          c, global, train_cfg, spec,
          substream(cfg.seed, domains::kTrain, static_cast<std::uint64_t>(k),
                    static_cast<std::uint64_t>(round)));
      slot.accuracy = evaluate(c);
      slot.submission = prototype_average(c, spec);
    };
    if (cfg.parallel) {
#pragma omp parallel for schedule(dynamic)
      for (int k = 0; k < static_cast<int>(clients.size()); ++k) run_client(k);
    } else {
      for (int k = 0; k < static_cast<int>(clients.size()); ++k) run_client(k);
    }

    std::vector<Submission> submissions;
    submissions.reserve(clients.size());
    double acc_sum = 0.0, acc_sq = 0.0;
    for (int k = 0; k < static_cast<int>(clients.size()); ++k) {
      submissions.emplace_back(k, slots[static_cast<std::size_t>(k)].submission);
      double a = slots[static_cast<std::size_t>(k)].accuracy;
      acc_sum += a;
      acc_sq += a * a;
    }
    double mean_acc = acc_sum / cfg.clients;
    double std_acc =
        std::sqrt(std::max(0.0, acc_sq / cfg.clients - mean_acc * mean_acc));

    auto [objective, proto_term] =
        global_objective(clients, submissions, global, cfg.lambda);

    // Malicious clients falsify what they upload; their local state is
    // untouched. Each attacker keeps a fixed perturbation direction across
    // rounds (the magnitude tracks the current honest spread), which is
    // what a consistent untargeted attacker looks like.
    if (cfg.zeta > 0 && cfg.attack_eps_multiplier > 0.0) {
      double eps = cfg.attack_eps_multiplier * honest_spread(submissions, honest);
      if (eps > 0.0) {
        for (auto& [client_id, set] : submissions) {
          if (honest[static_cast<std::size_t>(client_id)]) continue;
          set = poison(set, eps,
                       substream(cfg.seed, domains::kPoison,
                                 static_cast<std::uint64_t>(client_id)));
        }
      }
    }

    // Phase two: BFT-detect.
    ConsensusOutcome outcome = consensus_round(
        submissions, result.stats, consensus_cfg, plan,
        substream(cfg.seed, domains::kConsensus, static_cast<std::uint64_t>(round)));

    RoundRecord record;
    record.round = round;
    record.mean_accuracy = mean_acc;
    record.std_accuracy = std_acc;
    record.global_objective = objective;
    record.prototype_loss_term = proto_term;
    record.view_changes = outcome.view_changes;
    record.confirmed = outcome.confirmed;
    if (outcome.confirmed) {
      record.filtered = outcome.filtered;
      global = outcome.global;
    } else {
      ++result.aborted_rounds;  // keep the previous global prototype
    }
    result.records.push_back(std::move(record));

    if (cfg.write_trace) {
      trace_lines.push_back(trace_jsonl(outcome.trace));
    }
    if (round + 1 == cfg.rounds) {
      result.final_submissions = std::move(submissions);
      result.final_global = global;
      result.final_accuracies.resize(clients.size());
      for (std::size_t k = 0; k < clients.size(); ++k) {
        result.final_accuracies[k] = slots[k].accuracy;
      }
    }
  }

  if (!cfg.output_dir.empty()) {
    std::filesystem::path dir(cfg.output_dir);
    std::filesystem::create_directories(dir);
    write_file(dir / "rounds.csv", rounds_csv(result.records));
    write_file(dir / "config.echo.txt", config_echo(cfg));
    write_file(dir / "prototypes_final.csv",
               prototypes_csv(result.final_submissions));
    if (cfg.write_trace) {
      std::string all;
      for (const std::string& t : trace_lines) all += t;
      write_file(dir / "trace.jsonl", all);
    }
  }
  return result;
}

std::string rounds_csv(const std::vector<RoundRecord>& records) {
  std::ostringstream out;
  out << "round,mean_acc,std_acc,global_obj,proto_loss,filtered,view_changes,"
         "confirmed\n";
  for (const RoundRecord& r : records) {
    out << r.round << ',' << format_g17(r.mean_accuracy) << ','
        << format_g17(r.std_accuracy) << ',' << format_g17(r.global_objective)
        << ',' << format_g17(r.prototype_loss_term) << ',';
    for (std::size_t i = 0; i < r.filtered.size(); ++i) {
      if (i > 0) out << ';';
      out << r.filtered[i];
    }
    out << ',' << r.view_changes << ',' << (r.confirmed ? 1 : 0) << "\n";
  }
  return out.str();
}

std::string sweep_security(int n_min, int n_max, const std::vector<double>& p_m) {
  if (n_min < 1 || n_max < n_min || p_m.empty()) {
    throw ConfigError("sweep_security: need 1 <= n_min <= n_max and p_m values");
  }
  std::ostringstream out;
  out << "N,p_m,probability\n";
  for (int n = n_min; n <= n_max; ++n) {
    for (double p : p_m) {
      out << n << ',' << format_g17(p) << ','
          << format_g17(security_probability({n, p})) << "\n";
    }
  }
  return out.str();
}

}  // namespace fedrfq
