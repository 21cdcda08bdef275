#pragma once

#include <utility>
#include <vector>

#include "fedrfq/client.hpp"
#include "fedrfq/data.hpp"

namespace fedrfq {

// How per-class client prototypes are combined into a global prototype.
// PaperLiteral divides the weighted sum by the number of contributing
// clients on top of the |D_k|/|D| weights, so the result shrinks as more
// clients share a class. Normalized renormalizes the weights into a
// convex combination; it is the default.
enum class AggregationMode { PaperLiteral, Normalized };

using Submission = std::pair<int, PrototypeSet>;  // (client_id, prototypes)

// Combines the given submissions per class. Set membership, per-class
// totals and weights are always derived from the submissions themselves,
// so calling this on a filtered subset recomputes everything over that
// subset. `stats` is used only to cross-check the submitted counts;
// a mismatch throws.
PrototypeSet aggregate(const std::vector<Submission>& submissions,
                       const ShardStats& stats, AggregationMode mode);

// Mean over shared classes of the L2 distance between the client's and
// the global per-class prototype. Classes missing on either side are
// skipped; with no shared class at all the discrepancy is defined as 0
// and `no_shared` is set.
struct Discrepancy {
  double value = 0.0;
  bool no_shared = false;
};
Discrepancy discrepancy(const PrototypeSet& client_set,
                        const PrototypeSet& global_set);

// The quality-detection verdict every server recomputes independently.
struct QualityReport {
  PrototypeSet provisional_global;              // aggregate over all submitters
  std::vector<std::pair<int, double>> discrepancies;  // (client_id, d_k), submission order
  std::vector<int> filtered;                    // client ids, sorted ascending
  std::vector<int> no_shared_class;             // flagged clients (d_k forced to 0)
};

// Picks the `psi` clients with the largest discrepancies; ties filter
// the lower client id first. Exposed separately so the selection rule
// can be checked against a sort oracle in isolation.
std::vector<int> select_filtered(
    const std::vector<std::pair<int, double>>& discrepancies, int psi);

// Provisional aggregate over all submissions, per-client discrepancies,
// and the psi largest filtered out. psi must be < the submission count.
QualityReport quality_detect(const std::vector<Submission>& submissions,
                             const ShardStats& stats, int psi,
                             AggregationMode mode);

// Aggregate over the retained submissions only; weights and class
// coverage are recomputed over the retained set.
PrototypeSet global_calculate(const std::vector<Submission>& submissions,
                              const QualityReport& report,
                              const ShardStats& stats, AggregationMode mode);

}  // namespace fedrfq
