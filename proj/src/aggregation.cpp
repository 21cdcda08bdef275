#include "fedrfq/aggregation.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>

namespace fedrfq {

namespace {

void check_against_stats(const std::vector<Submission>& submissions,
                         const ShardStats& stats) {
  for (const auto& [client_id, set] : submissions) {
    if (client_id < 0 || client_id >= stats.num_clients) {
      throw std::runtime_error("aggregate: unknown client id " +
                               std::to_string(client_id));
    }
    const auto& expected = stats.client_counts[static_cast<std::size_t>(client_id)];
    for (const auto& [cls, cnt] : set.counts) {
      auto it = expected.find(cls);
      if (it == expected.end() || it->second != cnt) {
        throw std::runtime_error("aggregate: count mismatch for client " +
                                 std::to_string(client_id) + " class " +
                                 std::to_string(cls));
      }
    }
  }
}

}  // namespace

PrototypeSet aggregate(const std::vector<Submission>& submissions,
                       const ShardStats& stats, AggregationMode mode) {
  if (submissions.empty()) {
    throw std::invalid_argument("aggregate: no submissions");
  }
  check_against_stats(submissions, stats);

  // Per-class totals over the given submissions (not the full population,
  // so a filtered subset reweights itself).
  std::map<int, long> class_total;
  std::map<int, int> class_holders;
  for (const auto& [client_id, set] : submissions) {
    for (const auto& [cls, cnt] : set.counts) {
      if (cnt <= 0) {
        throw std::runtime_error("aggregate: non-positive count for class " +
                                 std::to_string(cls));
      }
      class_total[cls] += cnt;
      class_holders[cls] += 1;
    }
  }

  PrototypeSet global;
  for (const auto& [client_id, set] : submissions) {
    for (const auto& [cls, proto] : set.protos) {
      double weight = static_cast<double>(set.counts.at(cls)) /
                      static_cast<double>(class_total.at(cls));
      if (mode == AggregationMode::PaperLiteral) {
        weight /= static_cast<double>(class_holders.at(cls));
      }
      auto [it, inserted] = global.protos.try_emplace(cls, Vec(proto.size(), 0.0));
      if (it->second.size() != proto.size()) {
        throw_shape_error("aggregate: prototype size mismatch for class " +
                          std::to_string(cls));
      }
      for (std::size_t i = 0; i < proto.size(); ++i)
        it->second[i] += weight * proto[i];
      global.counts[cls] += set.counts.at(cls);
    }
  }
  for (const auto& [cls, proto] : global.protos)
    check_finite(proto, "aggregate output");
  return global;
}

Discrepancy discrepancy(const PrototypeSet& client_set,
                        const PrototypeSet& global_set) {
  double sum = 0.0;
  int shared = 0;
  for (const auto& [cls, proto] : client_set.protos) {
    auto it = global_set.protos.find(cls);
    if (it == global_set.protos.end()) continue;
    sum += l2_distance(proto, it->second);
    ++shared;
  }
  if (shared == 0) return {0.0, true};
  return {sum / shared, false};
}

std::vector<int> select_filtered(
    const std::vector<std::pair<int, double>>& discrepancies, int psi) {
  if (psi < 0 || psi >= static_cast<int>(discrepancies.size())) {
    throw std::invalid_argument("select_filtered: psi must be in [0, K)");
  }
  std::vector<std::pair<int, double>> order = discrepancies;
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<int> filtered;
  filtered.reserve(static_cast<std::size_t>(psi));
  for (int i = 0; i < psi; ++i) filtered.push_back(order[static_cast<std::size_t>(i)].first);
  std::sort(filtered.begin(), filtered.end());
  return filtered;
}

QualityReport quality_detect(const std::vector<Submission>& submissions,
                             const ShardStats& stats, int psi,
                             AggregationMode mode) {
  if (psi < 0 || psi >= static_cast<int>(submissions.size())) {
    throw std::invalid_argument(
        "quality_detect: psi must be smaller than the number of submitting "
        "clients");
  }
  QualityReport report;
  report.provisional_global = aggregate(submissions, stats, mode);
  for (const auto& [client_id, set] : submissions) {
    Discrepancy d = discrepancy(set, report.provisional_global);
    report.discrepancies.emplace_back(client_id, d.value);
    if (d.no_shared) report.no_shared_class.push_back(client_id);
  }
  report.filtered = select_filtered(report.discrepancies, psi);
  return report;
}

PrototypeSet global_calculate(const std::vector<Submission>& submissions,
                              const QualityReport& report,
                              const ShardStats& stats, AggregationMode mode) {
  std::vector<Submission> retained;
  retained.reserve(submissions.size());
  for (const auto& sub : submissions) {
    if (!std::binary_search(report.filtered.begin(), report.filtered.end(),
                            sub.first)) {
      retained.push_back(sub);
    }
  }
  if (retained.empty()) {
    throw std::runtime_error("global_calculate: every client was filtered");
  }
  return aggregate(retained, stats, mode);
}

}  // namespace fedrfq
