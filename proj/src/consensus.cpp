#include "fedrfq/consensus.hpp"

#include <bit>
#include <cmath>
#include <deque>
#include <stdexcept>
#include <string>

#include "fedrfq/rng.hpp"

namespace fedrfq {

namespace {

constexpr double kProposalTolerance = 1e-9;

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void append_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t fnv1a(std::uint64_t h, const std::vector<std::uint8_t>& bytes) {
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return mix64(h);
}

bool protos_match(const PrototypeSet& a, const PrototypeSet& b, double tol) {
  if (a.protos.size() != b.protos.size()) return false;
  if (a.counts != b.counts) return false;
  for (const auto& [cls, proto] : a.protos) {
    auto it = b.protos.find(cls);
    if (it == b.protos.end() || it->second.size() != proto.size()) return false;
    for (std::size_t i = 0; i < proto.size(); ++i) {
      if (std::abs(proto[i] - it->second[i]) > tol) return false;
    }
  }
  return true;
}

struct Envelope {
  int recipient;
  ConsensusMessage msg;
};

// The whole round lives in this little simulator: one FIFO queue, one
// logical clock, message handlers as state transitions on ServerState.
class RoundSim {
 public:
  RoundSim(const std::vector<Submission>& submissions, const ShardStats& stats,
           const ConsensusConfig& cfg, const FaultPlan& plan, std::uint64_t seed)
      : stats_(stats), cfg_(cfg), plan_(plan) {
    servers_.resize(static_cast<std::size_t>(cfg.num_servers));
    keys_.resize(static_cast<std::size_t>(cfg.num_servers));
    for (int i = 0; i < cfg.num_servers; ++i) {
      ServerState& s = servers_[static_cast<std::size_t>(i)];
      s.server_id = i;
      s.behavior = plan.behavior_of(i);
      // Amnesia loses the stored prototype sets before verification.
      if (s.behavior != ServerBehavior::Amnesia) s.submissions = submissions;
      keys_[static_cast<std::size_t>(i)] =
          substream(seed, domains::kAuthKey, static_cast<std::uint64_t>(i));
    }
  }

  ConsensusOutcome run() {
    ConsensusOutcome out;
    for (int view = 0; view < cfg_.num_servers; ++view) {
      start_view(view);
      leader_propose(view);
      drain();
      if (collect_confirmation(out)) {
        out.view_changes = view;
        out.servers = servers_;
        out.trace = std::move(trace_);
        return out;
      }
      if (view + 1 < cfg_.num_servers) timeout_view_change(view);
    }
    out.confirmed = false;
    out.view_changes = cfg_.num_servers - 1;
    out.servers = servers_;
    out.trace = std::move(trace_);
    return out;
  }

 private:
  int quorum() const { return 2 * cfg_.max_faults + 1; }

  bool crashed(const ServerState& s, int view) const {
    return s.behavior == ServerBehavior::Crash && view >= plan_.crash_from_view;
  }

  void start_view(int view) {
    for (ServerState& s : servers_) {
      s.view = view;
      s.prepare_votes.clear();
      s.commit_votes.clear();
      s.has_prepared = false;
      s.has_committed = false;
      s.prepared_digest = 0;
      s.accepted.reset();
    }
  }

  ConsensusMessage make_msg(MsgKind kind, int view, std::uint64_t digest,
                            int sender,
                            std::shared_ptr<const ProposalPayload> payload) const {
    ConsensusMessage m;
    m.kind = kind;
    m.view = view;
    m.payload_digest = digest;
    m.sender = sender;
    m.auth_tag = mac64(keys_[static_cast<std::size_t>(sender)], kind, view,
                       digest, sender);
    m.payload = std::move(payload);
    return m;
  }

  void broadcast(const ConsensusMessage& msg) {
    for (int to = 0; to < cfg_.num_servers; ++to) queue_.push_back({to, msg});
  }

  void send_split(int sender, MsgKind kind, int view,
                  std::shared_ptr<const ProposalPayload> low,
                  std::shared_ptr<const ProposalPayload> high) {
    std::uint64_t dl = digest64(canonical_bytes(*low));
    std::uint64_t dh = digest64(canonical_bytes(*high));
    for (int to = 0; to < cfg_.num_servers; ++to) {
      bool lower_half = to < cfg_.num_servers / 2;
      queue_.push_back({to, make_msg(kind, view, lower_half ? dl : dh, sender,
                                     lower_half ? low : high)});
    }
  }

  std::shared_ptr<ProposalPayload> compute_payload(const ServerState& s) const {
    auto payload = std::make_shared<ProposalPayload>();
    QualityReport report =
        quality_detect(s.submissions, stats_, cfg_.psi, cfg_.mode);
    payload->global = global_calculate(s.submissions, report, stats_, cfg_.mode);
    payload->filtered = report.filtered;
    return payload;
  }

  std::shared_ptr<ProposalPayload> tampered_copy(const ProposalPayload& base) const {
    auto payload = std::make_shared<ProposalPayload>(base);
    for (auto& [cls, proto] : payload->global.protos)
      for (double& v : proto) v *= plan_.tamper_factor;
    return payload;
  }

  void leader_propose(int view) {
    int leader = view % cfg_.num_servers;
    ServerState& s = servers_[static_cast<std::size_t>(leader)];
    if (crashed(s, view)) return;                       // withholds
    if (s.behavior == ServerBehavior::Amnesia) return;  // nothing to propose from

    auto honest_payload = compute_payload(s);
    switch (s.behavior) {
      case ServerBehavior::Tamper: {
        auto bad = tampered_copy(*honest_payload);
        broadcast(make_msg(MsgKind::Proposal, view,
                           digest64(canonical_bytes(*bad)), leader, bad));
        break;
      }
      case ServerBehavior::Equivocate:
        send_split(leader, MsgKind::Proposal, view, honest_payload,
                   tampered_copy(*honest_payload));
        break;
      default:
        broadcast(make_msg(MsgKind::Proposal, view,
                           digest64(canonical_bytes(*honest_payload)), leader,
                           honest_payload));
        break;
    }
  }

  void drain() {
    while (!queue_.empty()) {
      Envelope env = std::move(queue_.front());
      queue_.pop_front();
      trace_.push_back({env.msg.kind, env.msg.view, env.msg.sender,
                        env.msg.payload_digest, tick_++});
      deliver(servers_[static_cast<std::size_t>(env.recipient)], env.msg);
    }
  }

  void deliver(ServerState& s, const ConsensusMessage& msg) {
    if (crashed(s, s.view)) return;
    if (check_message(msg, keys_[static_cast<std::size_t>(msg.sender)], s.view) !=
        MessageCheck::Ok) {
      return;
    }
    switch (msg.kind) {
      case MsgKind::Proposal:
        on_proposal(s, msg);
        break;
      case MsgKind::Prepare:
        on_prepare(s, msg);
        break;
      case MsgKind::Commit:
        on_commit(s, msg);
        break;
      case MsgKind::ViewChange:
        break;  // collective logical timeout; nothing to do per server
    }
  }

  void on_proposal(ServerState& s, const ConsensusMessage& msg) {
    if (s.behavior == ServerBehavior::Amnesia) return;  // cannot verify, abstains
    if (s.has_prepared) return;

    if (s.behavior == ServerBehavior::Tamper ||
        s.behavior == ServerBehavior::Equivocate) {
      // Byzantine voters push digests of their own doctored result; these
      // votes never assemble a quorum by themselves.
      auto bogus = tampered_copy(*compute_payload(s));
      std::uint64_t d = digest64(canonical_bytes(*bogus));
      s.has_prepared = true;
      s.prepared_digest = d;
      broadcast(make_msg(MsgKind::Prepare, s.view, d, s.server_id, nullptr));
      return;
    }

    // Honest path: verify the payload against own recomputation.
    if (!msg.payload) return;
    if (digest64(canonical_bytes(*msg.payload)) != msg.payload_digest) return;
    auto own = compute_payload(s);
    if (own->filtered != msg.payload->filtered) return;
    if (!protos_match(own->global, msg.payload->global, kProposalTolerance)) return;

    s.accepted = msg.payload;
    s.prepared_digest = msg.payload_digest;
    s.has_prepared = true;
    broadcast(make_msg(MsgKind::Prepare, s.view, msg.payload_digest, s.server_id,
                       nullptr));
  }

  void on_prepare(ServerState& s, const ConsensusMessage& msg) {
    auto& voters = s.prepare_votes[msg.payload_digest];
    voters.insert(msg.sender);
    if (s.behavior != ServerBehavior::Honest) return;
    if (!s.has_prepared || s.has_committed) return;
    if (msg.payload_digest != s.prepared_digest) return;
    if (static_cast<int>(voters.size()) >= quorum()) {
      s.has_committed = true;
      broadcast(make_msg(MsgKind::Commit, s.view, s.prepared_digest, s.server_id,
                         nullptr));
    }
  }

  void on_commit(ServerState& s, const ConsensusMessage& msg) {
    auto& voters = s.commit_votes[msg.payload_digest];
    voters.insert(msg.sender);
    if (s.behavior != ServerBehavior::Honest) return;
    if (!s.has_committed || s.confirmed) return;
    if (msg.payload_digest != s.prepared_digest) return;
    if (static_cast<int>(voters.size()) >= quorum()) {
      s.confirmed = true;
      s.confirmed_view = s.view;
    }
  }

  void timeout_view_change(int view) {
    for (ServerState& s : servers_) {
      if (crashed(s, view)) continue;
      broadcast(make_msg(MsgKind::ViewChange, view, 0, s.server_id, nullptr));
    }
    drain();
  }

  bool collect_confirmation(ConsensusOutcome& out) const {
    for (const ServerState& s : servers_) {
      if (s.behavior == ServerBehavior::Honest && s.confirmed && s.accepted) {
        out.confirmed = true;
        out.global = s.accepted->global;
        out.filtered = s.accepted->filtered;
        return true;
      }
    }
    return false;
  }

  const ShardStats& stats_;
  ConsensusConfig cfg_;
  FaultPlan plan_;
  std::vector<ServerState> servers_;
  std::vector<std::uint64_t> keys_;
  std::deque<Envelope> queue_;
  std::vector<TraceEntry> trace_;
  long tick_ = 0;
};

}  // namespace

const char* msg_kind_name(MsgKind kind) {
  switch (kind) {
    case MsgKind::Proposal: return "proposal";
    case MsgKind::Prepare: return "prepare";
    case MsgKind::Commit: return "commit";
    case MsgKind::ViewChange: return "view-change";
  }
  return "unknown";
}

std::vector<std::uint8_t> canonical_bytes(const ProposalPayload& payload) {
  std::vector<std::uint8_t> out;
  append_u64(out, payload.global.protos.size());
  for (const auto& [cls, proto] : payload.global.protos) {
    append_u64(out, static_cast<std::uint64_t>(cls));
    append_u64(out, static_cast<std::uint64_t>(payload.global.counts.at(cls)));
    append_u64(out, proto.size());
    for (double v : proto) append_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  append_u64(out, payload.filtered.size());
  for (int id : payload.filtered) append_u64(out, static_cast<std::uint64_t>(id));
  return out;
}

std::uint64_t digest64(const std::vector<std::uint8_t>& bytes) {
  return fnv1a(0xcbf29ce484222325ULL, bytes);
}

std::uint64_t mac64(std::uint64_t key, MsgKind kind, int view,
                    std::uint64_t digest, int sender) {
  std::vector<std::uint8_t> bytes;
  append_u64(bytes, static_cast<std::uint64_t>(kind));
  append_u64(bytes, static_cast<std::uint64_t>(view));
  append_u64(bytes, digest);
  append_u64(bytes, static_cast<std::uint64_t>(sender));
  return fnv1a(mix64(key ^ 0xa5a5a5a5a5a5a5a5ULL), bytes);
}

bool verify_auth(const ConsensusMessage& msg, std::uint64_t sender_key) {
  return msg.auth_tag ==
         mac64(sender_key, msg.kind, msg.view, msg.payload_digest, msg.sender);
}

MessageCheck check_message(const ConsensusMessage& msg,
                           std::uint64_t sender_key, int current_view) {
  if (!verify_auth(msg, sender_key)) return MessageCheck::BadAuth;
  if (msg.view != current_view) return MessageCheck::WrongView;
  return MessageCheck::Ok;
}

ConsensusOutcome consensus_round(const std::vector<Submission>& submissions,
                                 const ShardStats& stats,
                                 const ConsensusConfig& cfg,
                                 const FaultPlan& plan, std::uint64_t seed) {
  if (cfg.num_servers < 1) {
    throw std::invalid_argument("consensus_round: need at least one server");
  }
  int bound = (cfg.num_servers - 1) / 3;
  if (cfg.max_faults < 0 || cfg.max_faults > bound) {
    throw std::invalid_argument(
        "consensus_round: declared f must satisfy f <= floor((N-1)/3)");
  }
  if (cfg.psi < 0 || cfg.psi >= static_cast<int>(submissions.size())) {
    throw std::invalid_argument("consensus_round: psi must be < client count");
  }
  for (const auto& [id, b] : plan.server_behavior) {
    if (id < 0 || id >= cfg.num_servers) {
      throw std::invalid_argument("consensus_round: fault plan names server " +
                                  std::to_string(id) + " outside 0.." +
                                  std::to_string(cfg.num_servers - 1));
    }
  }
  if (plan.fault_count() > bound) {
    // No honest quorum can be guaranteed; abort rather than risk a split.
    ConsensusOutcome out;
    out.confirmed = false;
    out.safety_risk = true;
    return out;
  }
  RoundSim sim(submissions, stats, cfg, plan, seed);
  return sim.run();
}

}  // namespace fedrfq
