#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <vector>

#include "fedrfq/adversary.hpp"
#include "fedrfq/aggregation.hpp"

namespace fedrfq {

struct ConsensusConfig {
  int num_servers = 4;  // N
  int psi = 0;          // clients filtered per round
  int max_faults = 1;   // f; quorums are 2f+1
  AggregationMode mode = AggregationMode::Normalized;
};

enum class MsgKind { Proposal, Prepare, Commit, ViewChange };

const char* msg_kind_name(MsgKind kind);

// What the leader proposes: the filtered global prototype set plus the
// ids it filtered. Digests and verification run over the canonical
// byte encoding.
struct ProposalPayload {
  PrototypeSet global;
  std::vector<int> filtered;
};

std::vector<std::uint8_t> canonical_bytes(const ProposalPayload& payload);
std::uint64_t digest64(const std::vector<std::uint8_t>& bytes);

// Keyed MAC standing in for a digital signature; covers (kind, view,
// digest, sender).
std::uint64_t mac64(std::uint64_t key, MsgKind kind, int view,
                    std::uint64_t digest, int sender);

struct ConsensusMessage {
  MsgKind kind = MsgKind::Prepare;
  int view = 0;
  std::uint64_t payload_digest = 0;
  int sender = 0;
  std::uint64_t auth_tag = 0;
  std::shared_ptr<const ProposalPayload> payload;  // proposals only
};

bool verify_auth(const ConsensusMessage& msg, std::uint64_t sender_key);

// Admission check applied to every delivered message, in order: the
// authenticity tag first, then the view. A replayed message with a stale
// view fails the view check, not authentication.
enum class MessageCheck { Ok, BadAuth, WrongView };
MessageCheck check_message(const ConsensusMessage& msg,
                           std::uint64_t sender_key, int current_view);

// Append-only per-server record of everything it accepted, plus its
// final decision.
struct ServerState {
  int server_id = 0;
  int view = 0;
  ServerBehavior behavior = ServerBehavior::Honest;
  std::vector<Submission> submissions;  // received client prototype sets
  std::uint64_t prepared_digest = 0;
  bool has_prepared = false;
  bool has_committed = false;
  bool confirmed = false;
  int confirmed_view = -1;
  std::shared_ptr<const ProposalPayload> accepted;
  // digest -> distinct voters, per current view (cleared on view change)
  std::map<std::uint64_t, std::set<int>> prepare_votes;
  std::map<std::uint64_t, std::set<int>> commit_votes;
};

struct TraceEntry {
  MsgKind kind;
  int view;
  int sender;
  std::uint64_t digest;
  long delivered_at;  // logical tick
};

struct ConsensusOutcome {
  bool confirmed = false;
  bool safety_risk = false;  // actual faults exceeded floor((N-1)/3)
  PrototypeSet global;
  std::vector<int> filtered;
  int view_changes = 0;
  std::vector<ServerState> servers;  // final states, index = server id
  std::vector<TraceEntry> trace;
};

// Runs one BFT-detect round over a deterministic in-process message
// queue. Every server holds the same client submissions (minus what the
// fault plan erases); the view-v leader is server v mod N; honest
// servers prepare only for proposals that match their own recomputation
// within 1e-9 elementwise; 2f+1 prepares trigger a commit vote and 2f+1
// commits confirm. A view without an honest confirmation times out
// logically and rotates the leader, up to N views.
ConsensusOutcome consensus_round(const std::vector<Submission>& submissions,
                                 const ShardStats& stats,
                                 const ConsensusConfig& cfg,
                                 const FaultPlan& plan, std::uint64_t seed);

}  // namespace fedrfq
