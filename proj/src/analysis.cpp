#include "fedrfq/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace fedrfq {

double security_probability(const SecurityQuery& q) {
  if (q.num_servers < 1) {
    throw std::invalid_argument("security_probability: N >= 1");
  }
  if (q.p_malicious < 0.0 || q.p_malicious > 1.0) {
    throw std::invalid_argument("security_probability: p in [0, 1]");
  }
  int n = q.num_servers;
  int f_max = (n - 1) / 3;
  double p = q.p_malicious;
  if (p == 0.0) return 1.0;
  if (p == 1.0) return f_max >= n ? 1.0 : 0.0;

  double log_p = std::log(p);
  double log_q = std::log1p(-p);
  double sum = 0.0;
  for (int i = 0; i <= f_max; ++i) {
    double log_coeff =
        std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0);
    sum += std::exp(log_coeff + i * log_p + (n - i) * log_q);
  }
  return std::min(sum, 1.0);
}

double silhouette(const std::vector<Vec>& points, const std::vector<int>& labels) {
  if (points.size() != labels.size()) {
    throw std::invalid_argument("silhouette: points/labels size mismatch");
  }
  const int n = static_cast<int>(points.size());
  if (n < 2) throw std::invalid_argument("silhouette: need at least 2 points");
  std::map<int, int> cluster_sizes;
  for (int l : labels) cluster_sizes[l]++;
  if (cluster_sizes.size() < 2) {
    throw std::invalid_argument("silhouette: need at least 2 classes");
  }

  std::vector<double> scores(static_cast<std::size_t>(n), 0.0);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    // mean distance to every cluster, own cluster excluding self
    std::map<int, double> dist_sum;
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      dist_sum[labels[static_cast<std::size_t>(j)]] +=
          l2_distance(points[static_cast<std::size_t>(i)],
                      points[static_cast<std::size_t>(j)]);
    }
    int own = labels[static_cast<std::size_t>(i)];
    int own_others = cluster_sizes.at(own) - 1;
    if (own_others == 0) {
      scores[static_cast<std::size_t>(i)] = 0.0;  // singleton convention
      continue;
    }
    double a = dist_sum[own] / own_others;
    double b = 0.0;
    bool first = true;
    for (const auto& [cls, total] : dist_sum) {
      if (cls == own) continue;
      double mean = total / cluster_sizes.at(cls);
      if (first || mean < b) {
        b = mean;
        first = false;
      }
    }
    double denom = std::max(a, b);
    scores[static_cast<std::size_t>(i)] = denom > 0.0 ? (b - a) / denom : 0.0;
  }
  // serial accumulation in index order keeps the result thread-count independent
  double total = 0.0;
  for (double s : scores) total += s;
  return total / n;
}

long comm_params(int classes_held, int proto_rows, int proto_cols,
                 const KernelSpec& spec) {
  if (classes_held < 0 || proto_rows < 1 || proto_cols < 1) {
    throw std::invalid_argument("comm_params: bad dimensions");
  }
  long pooled = static_cast<long>(pooled_rows(proto_rows, spec)) *
                static_cast<long>(pooled_cols(proto_cols, spec));
  return static_cast<long>(classes_held) * pooled;
}

LossTrajectorySummary loss_trajectory_report(const std::vector<double>& losses) {
  if (losses.size() < 2) {
    throw std::invalid_argument("loss_trajectory_report: need >= 2 rounds");
  }
  LossTrajectorySummary s;
  for (std::size_t i = 1; i < losses.size(); ++i) {
    if (losses[i] > losses[i - 1]) s.monotone_violations++;
  }
  s.final_initial_ratio = losses.front() != 0.0 ? losses.back() / losses.front()
                                                : 1.0;
  return s;
}

}  // namespace fedrfq
