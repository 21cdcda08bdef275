#pragma once

#include <vector>

#include "fedrfq/softpool.hpp"
#include "fedrfq/tensor.hpp"

namespace fedrfq {

struct SecurityQuery {
  int num_servers = 4;       // N
  double p_malicious = 0.1;  // per-server probability of being malicious
};

// Probability that at most floor((N-1)/3) of N servers are malicious:
// the binomial CDF at f_max, evaluated through log-gamma so large N
// cannot overflow.
double security_probability(const SecurityQuery& q);

// Mean silhouette coefficient with Euclidean distance. Singleton
// clusters score 0; so do points with a(i) = b(i) = 0 (all distances
// degenerate). Needs at least two classes and two points.
double silhouette(const std::vector<Vec>& points, const std::vector<int>& labels);

// Scalars uploaded per round by a client holding `classes_held` classes:
// classes_held * pooled element count.
long comm_params(int classes_held, int proto_rows, int proto_cols,
                 const KernelSpec& spec);

struct LossTrajectorySummary {
  int monotone_violations = 0;    // rounds where the objective increased
  double final_initial_ratio = 1.0;
};

LossTrajectorySummary loss_trajectory_report(const std::vector<double>& losses);

}  // namespace fedrfq
