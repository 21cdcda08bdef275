#include "fedrfq/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "fedrfq/rng.hpp"

namespace fedrfq {

namespace {

// Rejection-sample class means inside a box a little wider than the
// pairwise minimum separation 4*spread, so typical class pairs stay only
// a few multiples of the floor apart. The box widens automatically
// whenever the packing becomes infeasible.
std::vector<Vec> place_class_means(int num_classes, int dim, double spread,
                                   Rng& rng) {
  double min_sep = 4.0 * spread;
  double half = std::max(1.0, 0.55 * min_sep);
  std::vector<Vec> means;
  means.reserve(static_cast<std::size_t>(num_classes));
  for (int j = 0; j < num_classes; ++j) {
    for (int attempt = 0;; ++attempt) {
      Vec m(static_cast<std::size_t>(dim), 0.0);
      for (double& v : m) v = (2.0 * rng.next_double() - 1.0) * half;
      bool ok = true;
      for (const Vec& prev : means) {
        if (l2_distance(m, prev) < min_sep) {
          ok = false;
          break;
        }
      }
      if (ok) {
        means.push_back(std::move(m));
        break;
      }
      if (attempt > 0 && attempt % 1000 == 0) half *= 1.5;  // widen, keep terminating
      if (attempt > 100000) {
        throw std::runtime_error("generate_synthetic: could not place class means");
      }
    }
  }
  return means;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Dataset generate_synthetic(int num_classes, int dim, int per_class,
                           double spread, std::uint64_t seed) {
  if (num_classes < 2) throw std::invalid_argument("generate_synthetic: J >= 2");
  if (dim < 2) throw std::invalid_argument("generate_synthetic: dim >= 2");
  if (per_class < 1) throw std::invalid_argument("generate_synthetic: per_class >= 1");
  if (spread < 0.0) throw std::invalid_argument("generate_synthetic: spread >= 0");

  Rng rng(substream(seed, domains::kDataset));
  std::vector<Vec> means = place_class_means(num_classes, dim, spread, rng);

  Dataset ds;
  ds.num_classes = num_classes;
  ds.dim = dim;
  ds.samples.reserve(static_cast<std::size_t>(num_classes) * per_class);
  for (int j = 0; j < num_classes; ++j) {
    for (int i = 0; i < per_class; ++i) {
      Sample s;
      s.label = j;
      s.id = static_cast<int>(ds.samples.size());
      s.features = means[static_cast<std::size_t>(j)];
      for (double& v : s.features) v += spread * rng.next_normal();
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

std::vector<ClientShard> partition_non_iid(const Dataset& ds, int num_clients,
                                           const PartitionSpec& spec,
                                           std::uint64_t seed) {
  if (num_clients < 1) throw std::invalid_argument("partition_non_iid: K >= 1");
  if (spec.avg < 1 || spec.avg > ds.num_classes) {
    throw std::invalid_argument("partition_non_iid: avg must be in [1, J]");
  }
  if (spec.std_dev < 0) throw std::invalid_argument("partition_non_iid: std >= 0");
  if (spec.samples_per_class < 2) {
    throw std::invalid_argument("partition_non_iid: samples_per_class >= 2");
  }

  // Index the dataset by class once; pools are consumed in shuffled order.
  std::vector<std::vector<int>> pools(static_cast<std::size_t>(ds.num_classes));
  for (int i = 0; i < static_cast<int>(ds.samples.size()); ++i) {
    pools[static_cast<std::size_t>(ds.samples[static_cast<std::size_t>(i)].label)]
        .push_back(i);
  }
  for (const auto& pool : pools) {
    if (pool.empty()) {
      throw std::invalid_argument("partition_non_iid: a class has no samples");
    }
  }

  Rng rng(substream(seed, domains::kPartition));
  for (auto& pool : pools) rng.shuffle(pool);
  std::vector<std::size_t> cursor(pools.size(), 0);

  std::vector<ClientShard> shards;
  shards.reserve(static_cast<std::size_t>(num_clients));
  for (int k = 0; k < num_clients; ++k) {
    ClientShard shard;
    shard.client_id = k;

    double drawn = static_cast<double>(spec.avg) +
                   static_cast<double>(spec.std_dev) * rng.next_normal();
    int count = static_cast<int>(std::llround(drawn));
    count = std::clamp(count, 1, ds.num_classes);

    std::vector<int> all_classes(static_cast<std::size_t>(ds.num_classes));
    std::iota(all_classes.begin(), all_classes.end(), 0);
    rng.shuffle(all_classes);
    shard.classes.assign(all_classes.begin(), all_classes.begin() + count);
    std::sort(shard.classes.begin(), shard.classes.end());

    int test_per_class = std::max(1, spec.samples_per_class / 5);
    int train_per_class = spec.samples_per_class - test_per_class;
    for (int j : shard.classes) {
      auto& pool = pools[static_cast<std::size_t>(j)];
      auto& cur = cursor[static_cast<std::size_t>(j)];
      for (int i = 0; i < spec.samples_per_class; ++i) {
        int sample_idx;
        if (cur < pool.size()) {
          sample_idx = pool[cur++];
        } else {
          // pool exhausted: resample with replacement
          sample_idx = pool[static_cast<std::size_t>(
              rng.next_int(static_cast<int>(pool.size())))];
        }
        const Sample& s = ds.samples[static_cast<std::size_t>(sample_idx)];
        if (i < train_per_class) {
          shard.train.push_back(s);
        } else {
          shard.test.push_back(s);
        }
      }
    }
    shards.push_back(std::move(shard));
  }
  return shards;
}

ShardStats shard_stats(const std::vector<ClientShard>& shards) {
  if (shards.empty()) throw std::invalid_argument("shard_stats: empty shards");
  ShardStats st;
  st.num_clients = static_cast<int>(shards.size());
  int max_class = -1;
  for (const auto& s : shards) {
    if (s.client_id < 0 || s.client_id >= st.num_clients) {
      throw std::invalid_argument("shard_stats: client ids must be dense 0..K-1");
    }
    for (int j : s.classes) max_class = std::max(max_class, j);
  }
  st.num_classes = max_class + 1;
  st.class_clients.resize(static_cast<std::size_t>(st.num_classes));
  st.class_total.assign(static_cast<std::size_t>(st.num_classes), 0);
  st.client_counts.resize(shards.size());

  double sum = 0.0, sum_sq = 0.0;
  for (const auto& s : shards) {
    double n = static_cast<double>(s.classes.size());
    sum += n;
    sum_sq += n * n;
    auto& counts = st.client_counts[static_cast<std::size_t>(s.client_id)];
    for (const Sample& sample : s.train) counts[sample.label]++;
    for (const auto& [cls, cnt] : counts) {
      st.class_clients[static_cast<std::size_t>(cls)].push_back(s.client_id);
      st.class_total[static_cast<std::size_t>(cls)] += cnt;
    }
  }
  for (auto& v : st.class_clients) std::sort(v.begin(), v.end());
  double k = static_cast<double>(st.num_clients);
  st.mean_class_count = sum / k;
  st.std_class_count =
      std::sqrt(std::max(0.0, sum_sq / k - st.mean_class_count * st.mean_class_count));
  return st;
}

std::string shards_to_csv(const std::vector<ClientShard>& shards) {
  std::ostringstream out;
  int dim = 0;
  for (const auto& s : shards) {
    if (!s.train.empty()) dim = static_cast<int>(s.train.front().features.size());
  }
  out << "client_id,split,label";
  for (int d = 0; d < dim; ++d) out << ",f" << d;
  out << "\n";
  auto emit = [&](const ClientShard& s, const std::vector<Sample>& rows,
                  const char* split) {
    for (const Sample& sample : rows) {
      out << s.client_id << ',' << split << ',' << sample.label;
      for (double v : sample.features) out << ',' << format_double(v);
      out << "\n";
    }
  };
  for (const auto& s : shards) {
    emit(s, s.train, "train");
    emit(s, s.test, "test");
  }
  return out.str();
}

std::vector<ClientShard> shards_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("shards csv: empty");
  std::map<int, ClientShard> by_id;
  int next_id = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string field;
    std::getline(row, field, ',');
    int client_id = std::stoi(field);
    std::getline(row, field, ',');
    bool is_train = field == "train";
    Sample s;
    std::getline(row, field, ',');
    s.label = std::stoi(field);
    s.id = next_id++;  // row order is the canonical order after a reload
    while (std::getline(row, field, ',')) s.features.push_back(std::stod(field));
    ClientShard& shard = by_id[client_id];
    shard.client_id = client_id;
    (is_train ? shard.train : shard.test).push_back(std::move(s));
  }
  std::vector<ClientShard> shards;
  shards.reserve(by_id.size());
  for (auto& [id, shard] : by_id) {
    std::vector<int> classes;
    for (const Sample& s : shard.train) classes.push_back(s.label);
    for (const Sample& s : shard.test) classes.push_back(s.label);
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    shard.classes = std::move(classes);
    shards.push_back(std::move(shard));
  }
  return shards;
}

}  // namespace fedrfq
