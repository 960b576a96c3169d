#ifndef MIGRSIM_SCENARIO_SCENARIO_H_
#define MIGRSIM_SCENARIO_SCENARIO_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/statusor.h"
#include "migrator/migrator.h"
#include "netsim/network.h"
#include "verbs/types.h"

namespace migrsim::scenario {

// Position in the scenario file; line 0 means "not from a file".
struct Mark {
  int line = 0;
  int column = 0;
};

struct NodeSpec {
  std::string name;
  uint64_t gid_seed = 0;
  Mark mark;
};

struct MrSpec {
  uint64_t size = 0;
  uint32_t pd = 0;
  Mark mark;
};

struct SrqSpec {
  uint32_t depth = 256;
  uint32_t pd = 0;
  Mark mark;
};

struct QpSpec {
  std::string name;
  std::string partner;
  uint32_t pd = 0;
  uint32_t mr = 0;  // MR holding the application's buffers for this QP
  uint32_t mtu = 1024;
  uint32_t send_depth = 128;
  uint32_t recv_depth = 128;
  uint32_t send_cq = 0;
  uint32_t recv_cq = 0;
  std::optional<uint32_t> srq;
  uint32_t max_inflight = 64;
  uint32_t timeout_ticks = 32;
  uint32_t max_retries = 7;  // verbs::kInfiniteRetries for "infinite"
  Mark mark;
  Mark partner_mark;
};

struct ContextSpec {
  uint32_t id = 0;
  std::string node;
  uint32_t pds = 1;
  std::vector<MrSpec> mrs;
  std::vector<uint32_t> cq_depths;
  std::vector<SrqSpec> srqs;
  std::vector<QpSpec> qps;
  Mark mark;
  Mark node_mark;
};

struct TrafficSpec {
  std::string qp;
  uint64_t count = 0;
  uint32_t min_size = 0;
  uint32_t max_size = 0;
  uint64_t interval_ticks = 0;
  uint64_t start_tick = 0;
  verbs::WrOpcode opcode = verbs::WrOpcode::kSend;
  Mark mark;
  Mark qp_mark;
};

struct MigrationEntry {
  uint32_t ctx = 0;
  std::string to;
  Tick at = 0;
  migrator::Transfer transfer = migrator::Transfer::kInBand;
  Mark mark;
};

struct Expect {
  bool all_delivered = true;
  bool no_wc_errors = true;
  bool migrations_succeed = true;
  // Opcode or syndrome mnemonics that must / must not appear in the trace.
  std::vector<std::string> trace_contains;
  std::vector<std::string> trace_excludes;
  std::map<std::string, verbs::QpState> final_states;  // by QP name
  std::optional<Tick> max_end_tick;
};

struct Scenario {
  netsim::NetConfig net;
  bool migration_enabled = true;
  std::vector<NodeSpec> nodes;
  std::vector<ContextSpec> contexts;
  std::vector<TrafficSpec> traffic;
  std::vector<MigrationEntry> migrations;
  Expect expect;

  const NodeSpec* FindNode(std::string_view name) const;
  const ContextSpec* FindContext(uint32_t id) const;
  // Context index and QP index of the named QP.
  std::optional<std::pair<std::size_t, std::size_t>> FindQp(
      std::string_view name) const;
};

// Virtual base address of a context's index-th MR.
inline uint64_t MrBase(uint32_t index) {
  return 0x1000'0000ull * (static_cast<uint64_t>(index) + 1);
}
inline constexpr uint64_t kMaxMrSize = 0x1000'0000ull;

// Where the application model keeps one QP's buffers. The QP's share of its
// MR is split in thirds: outgoing messages, receive buffers, WRITE target.
struct QpLayout {
  uint64_t send_base = 0;
  uint64_t recv_base = 0;
  uint64_t write_base = 0;
  uint32_t slot_size = 0;
  uint32_t send_slots = 0;
  uint32_t recv_slots = 0;
  uint32_t write_slots = 0;
};

// Indexed [context][qp]. Slot counts are capped by queue depths.
std::vector<std::vector<QpLayout>> ComputeLayout(const Scenario& s);

// Parses YAML text. Errors read "<file>:<line>:<col>: <key path>: <what>".
absl::StatusOr<Scenario> ParseScenario(std::string_view text,
                                       std::string_view filename);
absl::StatusOr<Scenario> LoadScenario(const std::string& path);

// Cross-reference and range checks; ParseScenario runs this too.
absl::Status Validate(const Scenario& s, std::string_view filename = "");

}  // namespace migrsim::scenario

#endif  // MIGRSIM_SCENARIO_SCENARIO_H_
