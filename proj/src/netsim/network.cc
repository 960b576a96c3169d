#include "netsim/network.h"

#include <algorithm>
#include <utility>

#include "absl/strings/str_cat.h"

namespace migrsim::netsim {

absl::Status NetConfig::Validate() const {
  if (latency_ticks < 1) {
    return absl::InvalidArgumentError("latency_ticks must be >= 1");
  }
  if (!(loss_rate >= 0.0 && loss_rate < 1.0)) {
    return absl::InvalidArgumentError("loss_rate must be in [0, 1)");
  }
  if (!(dup_rate >= 0.0 && dup_rate < 1.0)) {
    return absl::InvalidArgumentError("dup_rate must be in [0, 1)");
  }
  return absl::OkStatus();
}

Network::Network(NetConfig config) : config_(config), rng_(config.seed) {}

absl::Status Network::Attach(SimNode* node) {
  if (nodes_.contains(node->gid())) {
    return absl::AlreadyExistsError(
        absl::StrCat("gid ", node->gid().ToString(), " already attached"));
  }
  nodes_.emplace(node->gid(), node);
  node_index_.emplace(node->gid(), trace_.AddNode(node->name()));
  return absl::OkStatus();
}

SimNode* Network::Find(const verbs::Gid& gid) const {
  auto it = nodes_.find(gid);
  return it == nodes_.end() ? nullptr : it->second;
}

std::optional<uint16_t> Network::NodeIndex(const verbs::Gid& gid) const {
  auto it = node_index_.find(gid);
  if (it == node_index_.end()) return std::nullopt;
  return it->second;
}

std::vector<SimNode*> Network::nodes() const {
  std::vector<SimNode*> out;
  for (const auto& [gid, n] : nodes_) out.push_back(n);
  return out;
}

void Network::Record(const Datagram& d, TraceDir dir, uint16_t node) {
  TraceRecord r;
  r.tick = now_;
  r.dir = dir;
  r.node = node;
  r.qpn = dir == TraceDir::kRx ? d.info.dst_qpn : d.info.src_qpn;
  r.op = d.info.op;
  r.psn = d.info.psn;
  r.syndrome = d.info.syndrome;
  r.len = d.info.len;
  trace_.Add(r);
}

void Network::Push(Event e) {
  e.seq = next_seq_++;
  events_.push(std::move(e));
}

void Network::Send(Datagram d) {
  ++counters_.sent;
  const uint16_t src_idx = NodeIndex(d.src).value_or(0);
  Record(d, TraceDir::kTx, src_idx);
  // Both draws happen for every datagram so the random stream does not
  // depend on which datagrams are lost.
  const bool lost = rng_.NextUnit() < config_.loss_rate;
  const bool dup = rng_.NextUnit() < config_.dup_rate;
  if (!Find(d.dst)) {
    ++counters_.unroutable;
    Record(d, TraceDir::kDrop, src_idx);
    return;
  }
  if (lost || (drop_filter_ && drop_filter_(d))) {
    ++counters_.dropped;
    Record(d, TraceDir::kDrop, src_idx);
    return;
  }
  Event e;
  e.at = now_ + config_.latency_ticks;
  e.kind = EventKind::kDeliver;
  if (dup) {
    ++counters_.duplicated;
    Event copy;
    copy.at = e.at + 1;
    copy.kind = EventKind::kDeliver;
    copy.datagram = d;
    e.datagram = std::move(d);
    Push(std::move(e));
    Push(std::move(copy));
    return;
  }
  e.datagram = std::move(d);
  Push(std::move(e));
}

void Network::ScheduleTimer(Tick at, std::function<void()> cb) {
  Event e;
  e.at = at;
  e.kind = EventKind::kTimer;
  e.cb = std::move(cb);
  Push(std::move(e));
}

void Network::ScheduleMigrationTrigger(Tick at, std::function<void()> cb) {
  Event e;
  e.at = at;
  e.kind = EventKind::kMigrationTrigger;
  e.cb = std::move(cb);
  Push(std::move(e));
}

void Network::ProcessTick() {
  while (!events_.empty() && events_.top().at <= now_) {
    // The heap only compares (at, seq), which a move leaves intact.
    Event e = std::move(const_cast<Event&>(events_.top()));
    events_.pop();
    if (e.kind != EventKind::kDeliver) {
      e.cb();
      continue;
    }
    SimNode* dst = Find(e.datagram.dst);
    if (!dst) {
      ++counters_.unroutable;
      Record(e.datagram, TraceDir::kDrop,
             NodeIndex(e.datagram.src).value_or(0));
      continue;
    }
    ++counters_.delivered;
    Record(e.datagram, TraceDir::kRx, *NodeIndex(e.datagram.dst));
    dst->Deliver(*this, e.datagram);
  }
  hook_wants_.resize(hooks_.size());
  for (std::size_t i = 0; i < hooks_.size(); ++i) {
    hook_wants_[i] = hooks_[i](*this);
  }
  for (auto& [gid, node] : nodes_) node->Step(*this);
}

std::optional<Tick> Network::NextTick() const {
  std::optional<Tick> best;
  auto consider = [&](std::optional<Tick> t) {
    if (t && (!best || *t < *best)) best = t;
  };
  if (!events_.empty()) consider(events_.top().at);
  for (const auto& [gid, node] : nodes_) consider(node->NextActivity(now_));
  for (auto w : hook_wants_) consider(w);
  if (best) best = std::max(*best, now_ + 1);
  return best;
}

SimReport Network::Report(bool pred_met, bool quiescent, bool exhausted) {
  SimReport r;
  r.end_tick = now_;
  r.predicate_met = pred_met;
  r.quiescent = quiescent;
  r.budget_exhausted = exhausted;
  r.counters = counters_;
  for (const auto& [gid, node] : nodes_) node->StateHistogram(r.state_histogram);
  r.trace_hash = trace_.Hash();
  return r;
}

SimReport Network::RunUntil(const std::function<bool()>& pred,
                            Tick max_ticks) {
  if (pred && pred()) return Report(true, false, false);
  for (;;) {
    if (!current_done_) {
      ProcessTick();
      current_done_ = true;
      if (pred && pred()) return Report(true, false, false);
    }
    std::optional<Tick> next = NextTick();
    if (!next) return Report(false, true, false);
    if (*next > max_ticks) return Report(false, false, true);
    now_ = *next;
    current_done_ = false;
  }
}

}  // namespace migrsim::netsim
