#ifndef MIGRSIM_NETSIM_NETWORK_H_
#define MIGRSIM_NETSIM_NETWORK_H_

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "common/prng.h"
#include "netsim/trace.h"
#include "verbs/types.h"

namespace migrsim::netsim {

struct NetConfig {
  uint64_t seed = 1;
  uint32_t latency_ticks = 3;
  double loss_rate = 0.0;
  double dup_rate = 0.0;
  uint64_t max_ticks = 10'000'000;

  absl::Status Validate() const;
};

enum class DatagramKind : uint8_t {
  kRoce = 0,
  kImageChunk = 1,
  kChunkAck = 2,
};

struct Datagram {
  verbs::Gid src;
  verbs::Gid dst;
  DatagramKind kind = DatagramKind::kRoce;
  // Sending QP, for RoCE datagrams.
  uint32_t src_qpn = 0;
  std::vector<uint8_t> bytes;
  TraceInfo info;
};

class Network;

// Anything attached to the network: a host running transport tasks.
class SimNode {
 public:
  virtual ~SimNode() = default;

  virtual const verbs::Gid& gid() const = 0;
  virtual const std::string& name() const = 0;
  // Inbound datagram at the current tick.
  virtual void Deliver(Network& net, const Datagram& d) = 0;
  // Per-tick transmit and timer work, after all deliveries of the tick.
  virtual void Step(Network& net) = 0;
  // Earliest tick > now at which Step has work, if any.
  virtual std::optional<Tick> NextActivity(Tick now) const = 0;
  // Adds "STATE" -> QP count entries.
  virtual void StateHistogram(std::map<std::string, uint64_t>& out) const = 0;
};

struct NetCounters {
  uint64_t sent = 0;
  uint64_t dropped = 0;
  uint64_t duplicated = 0;
  uint64_t delivered = 0;
  uint64_t unroutable = 0;
};

struct SimReport {
  Tick end_tick = 0;
  bool predicate_met = false;
  // No events, no node activity and no hook wants another tick.
  bool quiescent = false;
  // Stopped because the next tick would exceed the budget.
  bool budget_exhausted = false;
  NetCounters counters;
  std::map<std::string, uint64_t> state_histogram;
  uint64_t trace_hash = 0;
};

// Discrete-event full-mesh network on a virtual clock.
//
// Each processed tick runs, in order: every event due at the tick in
// (at, seq) order; the tick hooks (application models); then Step() on each
// node in gid order.
class Network {
 public:
  // Returns the next tick the hook wants to run at, if any.
  using TickHook = std::function<std::optional<Tick>(Network&)>;
  // Returns true to drop the datagram (test fault injection).
  using DropFilter = std::function<bool(const Datagram&)>;

  explicit Network(NetConfig config);
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  const NetConfig& config() const { return config_; }
  Tick now() const { return now_; }

  absl::Status Attach(SimNode* node);
  SimNode* Find(const verbs::Gid& gid) const;
  std::optional<uint16_t> NodeIndex(const verbs::Gid& gid) const;
  std::vector<SimNode*> nodes() const;

  void Send(Datagram d);
  void ScheduleTimer(Tick at, std::function<void()> cb);
  void ScheduleMigrationTrigger(Tick at, std::function<void()> cb);
  void AddTickHook(TickHook hook) { hooks_.push_back(std::move(hook)); }
  void set_drop_filter(DropFilter f) { drop_filter_ = std::move(f); }

  SimReport RunUntil(const std::function<bool()>& pred, Tick max_ticks);
  SimReport RunToQuiescence() { return RunUntil(nullptr, config_.max_ticks); }

  Trace& trace() { return trace_; }
  const Trace& trace() const { return trace_; }
  const NetCounters& counters() const { return counters_; }

 private:
  enum class EventKind : uint8_t { kDeliver, kTimer, kMigrationTrigger };

  struct Event {
    Tick at = 0;
    uint64_t seq = 0;
    EventKind kind = EventKind::kDeliver;
    Datagram datagram;
    std::function<void()> cb;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.at != b.at ? a.at > b.at : a.seq > b.seq;
    }
  };

  void Push(Event e);
  void ProcessTick();
  void Record(const Datagram& d, TraceDir dir, uint16_t node);
  std::optional<Tick> NextTick() const;
  SimReport Report(bool pred_met, bool quiescent, bool exhausted);

  NetConfig config_;
  Xorshift64Star rng_;
  Tick now_ = 0;
  bool current_done_ = false;
  uint64_t next_seq_ = 0;
  std::priority_queue<Event, std::vector<Event>, Later> events_;
  std::map<verbs::Gid, SimNode*> nodes_;
  std::map<verbs::Gid, uint16_t> node_index_;
  std::vector<TickHook> hooks_;
  std::vector<std::optional<Tick>> hook_wants_;
  DropFilter drop_filter_;
  Trace trace_;
  NetCounters counters_;
};

}  // namespace migrsim::netsim

#endif  // MIGRSIM_NETSIM_NETWORK_H_
