#include "fedrfq/adversary.hpp"

#include <stdexcept>

#include "fedrfq/rng.hpp"

namespace fedrfq {

PrototypeSet poison(const PrototypeSet& set, double attack_eps,
                    std::uint64_t seed) {
  if (attack_eps < 0.0) throw std::invalid_argument("poison: attack_eps >= 0");
  if (attack_eps == 0.0) return set;
  Rng rng(seed);
  PrototypeSet out = set;
  for (auto& [cls, proto] : out.protos) {
    // Direction uniform on the sphere; renormalized Gaussian. A zero draw
    // (probability ~0) falls back to the first axis.
    Vec dir = rng.normal_vec(static_cast<int>(proto.size()));
    double norm = l2_norm(dir);
    if (norm == 0.0) {
      dir[0] = 1.0;
      norm = 1.0;
    }
    for (std::size_t i = 0; i < proto.size(); ++i)
      proto[i] += attack_eps * dir[i] / norm;
    check_finite(proto, "poisoned prototype");
  }
  return out;
}

}  // namespace fedrfq
