#pragma once

#include <cstdint>
#include <map>

#include "fedrfq/client.hpp"

namespace fedrfq {

// Injectable server malfunctions. Crash stops responding from
// crash_from_view onward; Amnesia loses its stored client prototype sets
// and abstains from content votes; Tamper (as leader) scales the
// proposed global prototype; Equivocate (as leader) sends different
// proposals to the two halves of the server set.
enum class ServerBehavior { Honest, Crash, Amnesia, Tamper, Equivocate };

struct FaultPlan {
  std::map<int, ServerBehavior> server_behavior;  // absent -> honest
  double tamper_factor = 1.5;
  int crash_from_view = 0;

  ServerBehavior behavior_of(int server_id) const {
    auto it = server_behavior.find(server_id);
    return it == server_behavior.end() ? ServerBehavior::Honest : it->second;
  }
  int fault_count() const {
    int n = 0;
    for (const auto& [id, b] : server_behavior)
      if (b != ServerBehavior::Honest) ++n;
    return n;
  }
};

struct AttackConfig {
  int zeta = 0;                          // malicious client count
  double attack_eps_multiplier = 10.0;   // times the honest prototype spread
  FaultPlan fault_plan;
};

// Adds to every class prototype a perturbation drawn uniformly on the
// L2 sphere of radius attack_eps, so each class moves by exactly
// attack_eps without leaving the plausible value range. Deterministic in
// seed; attack_eps = 0 returns the input unchanged.
PrototypeSet poison(const PrototypeSet& set, double attack_eps,
                    std::uint64_t seed);

}  // namespace fedrfq
