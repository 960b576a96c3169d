#include "scenario/runner.h"

#include <algorithm>
#include <set>
#include <utility>

#include "absl/strings/str_cat.h"
#include "common/prng.h"
#include "json.hpp"
#include "transport/packet.h"

namespace migrsim::scenario {
namespace {

using verbs::QpState;
using verbs::WcOpcode;
using verbs::WcStatus;

uint64_t NameHash(std::string_view s) {
  Fnv1a64 h;
  h.Update(s.data(), s.size());
  return h.digest();
}

constexpr uint32_t kPollBatch = 64;

}  // namespace

std::vector<uint32_t> FlowSizes(uint64_t seed, std::string_view qp,
                                const TrafficSpec& t) {
  Xorshift64Star rng(SplitMix64(seed) ^ NameHash(qp));
  std::vector<uint32_t> out(t.count);
  const uint64_t span = static_cast<uint64_t>(t.max_size) - t.min_size + 1;
  for (auto& v : out) {
    v = t.min_size + static_cast<uint32_t>(rng.Next() % span);
  }
  return out;
}

std::vector<uint8_t> FlowPayload(uint64_t seed, std::string_view qp,
                                 uint64_t idx, uint32_t len) {
  Xorshift64Star rng(SplitMix64(seed ^ NameHash(qp)) + idx);
  std::vector<uint8_t> out(len);
  for (uint32_t i = 0; i < len; i += 8) {
    uint64_t w = rng.Next();
    for (uint32_t b = 0; b < 8 && i + b < len; ++b) {
      out[i + b] = static_cast<uint8_t>(w >> (8 * b));
    }
  }
  return out;
}

// Application model shared by every context of the scenario.
struct Runner::App {
  struct Qp {
    std::string name;
    std::size_t ctx = 0;  // index into ctxs
    uint32_t qpn = 0;
    std::size_t partner = 0;
    int out_flow = -1;
    int in_flow = -1;
    int pool = -1;
    uint32_t lkey = 0;
    uint32_t rkey = 0;
    QpLayout layout;
  };
  struct Pool {
    std::size_t ctx = 0;
    std::optional<uint32_t> srq;  // handle; otherwise the QP's own RQ
    uint32_t qpn = 0;
    uint32_t depth = 0;
    uint32_t slot_size = 0;
    struct Slot {
      uint64_t addr = 0;
      uint32_t lkey = 0;
    };
    std::vector<Slot> slots;
  };
  struct Flow {
    TrafficSpec spec;
    std::size_t qp = 0;  // sender
    std::vector<uint32_t> sizes;
    std::vector<Tick> post_tick;
    uint64_t next = 0;
    uint64_t completed = 0;
    uint64_t received = 0;
    bool aborted = false;
    std::vector<int64_t> write_last;  // per write slot, last idx acked
    FlowResult res;
  };
  struct Ctx {
    uint32_t id = 0;
    bool frozen = false;
    std::vector<uint32_t> cqs;
  };

  Runner* runner = nullptr;
  uint64_t seed = 0;
  std::vector<Ctx> ctxs;
  std::vector<Qp> qps;
  std::map<uint32_t, std::size_t> by_qpn;
  std::vector<Pool> pools;
  std::vector<Flow> flows;
  RunResult result;

  verbs::Context* Live(const Ctx& c) {
    auto loc = runner->migrator().Locate(c.id);
    if (!loc) return nullptr;
    transport::Host* h = runner->migrator().FindHost(*loc);
    return h ? h->device().FindContext(c.id) : nullptr;
  }

  bool AllDone() const {
    for (const auto& f : flows) {
      if (f.aborted) continue;
      if (f.completed < f.spec.count) return false;
      if (f.spec.opcode == verbs::WrOpcode::kSend &&
          f.received < f.completed - f.res.completed_err) {
        return false;
      }
    }
    return true;
  }

  // Polls every live CQ and posts due messages. Returns true if anything
  // happened.
  bool Service(Tick now, std::optional<Tick>* want) {
    bool acted = false;
    for (auto& c : ctxs) {
      if (c.frozen) continue;
      verbs::Context* ctx = Live(c);
      if (ctx == nullptr) continue;
      for (uint32_t cq : c.cqs) {
        for (;;) {
          auto wcs = ctx->PollCq(cq, kPollBatch);
          if (!wcs.ok() || wcs->empty()) break;
          acted = true;
          for (const auto& wc : *wcs) OnCompletion(*ctx, wc, now);
        }
      }
    }
    for (std::size_t i = 0; i < flows.size(); ++i) {
      acted |= Post(flows[i], now, want);
    }
    return acted;
  }

  void OnCompletion(verbs::Context& ctx, const verbs::WorkCompletion& wc,
                    Tick now) {
    auto it = by_qpn.find(wc.qpn);
    if (it == by_qpn.end()) {
      ++result.unexpected_completions;
      return;
    }
    Qp& qp = qps[it->second];
    result.wc_streams[qp.name].push_back(wc);
    if (wc.status != WcStatus::kSuccess) {
      ++result.wc_errors[std::string(verbs::WcStatusName(wc.status))];
    }
    if (wc.opcode != WcOpcode::kRecv) {
      if (qp.out_flow < 0) {
        ++result.unexpected_completions;
        return;
      }
      Flow& f = flows[qp.out_flow];
      ++f.completed;
      if (wc.status != WcStatus::kSuccess) {
        ++f.res.completed_err;
        return;
      }
      ++f.res.completed_ok;
      if (wc.wr_id < f.post_tick.size()) {
        f.res.max_latency_ticks =
            std::max(f.res.max_latency_ticks, now - f.post_tick[wc.wr_id]);
      }
      if (f.spec.opcode == verbs::WrOpcode::kRdmaWrite) {
        const Qp& dst = qps[qps[f.qp].partner];
        f.write_last[wc.wr_id % dst.layout.write_slots] =
            static_cast<int64_t>(wc.wr_id);
      }
      return;
    }
    if (wc.status != WcStatus::kSuccess) return;
    Pool& pool = pools.at(qp.pool);
    if (qp.in_flow < 0 || wc.wr_id >= pool.slots.size()) {
      ++result.unexpected_completions;
      return;
    }
    Flow& f = flows[qp.in_flow];
    const uint64_t idx = f.received++;
    const uint64_t addr = pool.slots[wc.wr_id].addr;
    bool ok = idx < f.sizes.size() && wc.byte_len == f.sizes[idx];
    if (ok) {
      auto got = ctx.ReadMemory(addr, wc.byte_len);
      ok = got.ok() &&
           *got == FlowPayload(seed, qps[f.qp].name, idx, f.sizes[idx]);
    }
    if (ok) {
      ++f.res.delivered;
    } else {
      ++f.res.corrupt;
    }
    Repost(ctx, pool, wc.wr_id);
  }

  void Repost(verbs::Context& ctx, const Pool& pool, uint64_t slot) {
    verbs::ReceiveRequest rr;
    rr.wr_id = slot;
    rr.local = {pool.slots[slot].lkey, pool.slots[slot].addr, pool.slot_size};
    absl::Status st = pool.srq ? ctx.PostSrqRecv(*pool.srq, rr)
                               : ctx.PostRecv(pool.qpn, rr);
    if (!st.ok()) {
      result.failures.push_back(
          absl::StrCat("repost receive: ", st.ToString()));
    }
  }

  bool Post(Flow& f, Tick now, std::optional<Tick>* want) {
    Qp& qp = qps[f.qp];
    Ctx& c = ctxs[qp.ctx];
    if (c.frozen || f.aborted) return false;
    verbs::Context* ctx = Live(c);
    if (ctx == nullptr) return false;
    bool acted = false;
    const Qp& dst = qps[qp.partner];
    while (f.next < f.spec.count &&
           f.next - f.completed < qp.layout.send_slots) {
      const Tick due = f.spec.start_tick + f.next * f.spec.interval_ticks;
      if (due > now) {
        if (want != nullptr && (!*want || due < **want)) *want = due;
        break;
      }
      const uint64_t idx = f.next;
      const uint32_t len = f.sizes[idx];
      const uint64_t addr =
          qp.layout.send_base +
          (idx % qp.layout.send_slots) * uint64_t{qp.layout.slot_size};
      auto payload = FlowPayload(seed, qp.name, idx, len);
      if (auto st = ctx->WriteMemory(addr, payload); !st.ok()) {
        result.failures.push_back(absl::StrCat("stage message: ", st.ToString()));
        f.aborted = true;
        break;
      }
      verbs::SendRequest sr;
      sr.wr_id = idx;
      sr.opcode = f.spec.opcode;
      sr.local = {qp.lkey, addr, len};
      if (f.spec.opcode == verbs::WrOpcode::kRdmaWrite) {
        sr.rkey = dst.rkey;
        sr.remote_addr =
            dst.layout.write_base +
            (idx % dst.layout.write_slots) * uint64_t{dst.layout.slot_size};
      }
      if (auto st = ctx->PostSend(qp.qpn, sr); !st.ok()) {
        // The QP went to Error; its outstanding work completes by flushing.
        f.aborted = true;
        break;
      }
      f.post_tick[idx] = now;
      ++f.next;
      ++f.res.posted;
      acted = true;
    }
    return acted;
  }
};

Runner::Runner(Scenario scenario, RunOptions opts)
    : scenario_(std::move(scenario)), opts_(opts) {
  if (opts_.seed) scenario_.net.seed = *opts_.seed;
  if (opts_.max_ticks) scenario_.net.max_ticks = *opts_.max_ticks;
  if (opts_.migration_enabled) {
    scenario_.migration_enabled = *opts_.migration_enabled;
  }
}

Runner::~Runner() = default;

transport::Host* Runner::host(std::string_view node) {
  for (auto& h : hosts_) {
    if (h->name() == node) return h.get();
  }
  return nullptr;
}

uint32_t Runner::qpn(std::string_view qp) const {
  for (const auto& q : app_->qps) {
    if (q.name == qp) return q.qpn;
  }
  return 0;
}

absl::Status Runner::Build() {
  if (auto st = Validate(scenario_); !st.ok()) return st;
  const Scenario& s = scenario_;
  net_ = std::make_unique<netsim::Network>(s.net);
  migrator_ = std::make_unique<migrator::Migrator>(*net_);
  app_ = std::make_unique<App>();
  App& app = *app_;
  app.runner = this;
  app.seed = s.net.seed;

  for (std::size_t i = 0; i < s.nodes.size(); ++i) {
    const NodeSpec& n = s.nodes[i];
    verbs::NodeAddress addr{verbs::Gid::FromSeed(n.gid_seed),
                            static_cast<uint16_t>(i + 1), n.gid_seed};
    auto cfg = verbs::DeviceConfig::ForNodeIndex(
        static_cast<uint32_t>(i), SplitMix64(s.net.seed ^ (n.gid_seed << 1)));
    auto h = std::make_unique<transport::Host>(n.name, addr, cfg,
                                               s.migration_enabled);
    if (auto st = h->AttachTo(*net_); !st.ok()) return st;
    migrator_->AddHost(h.get());
    transport::Host* raw = h.get();
    h->device().set_state_observer(
        [this, raw](const verbs::QueuePair& qp, QpState from, QpState to) {
          TimelineEntry e;
          e.tick = net_->now();
          e.node = raw->name();
          e.qpn = qp.qpn;
          auto it = app_->by_qpn.find(qp.qpn);
          if (it != app_->by_qpn.end()) e.qp = app_->qps[it->second].name;
          e.from = from;
          e.to = to;
          app_->result.timeline.push_back(std::move(e));
        });
    hosts_.push_back(std::move(h));
  }

  auto layout = ComputeLayout(s);
  struct Built {
    std::vector<uint32_t> pds, srqs;
    std::vector<const verbs::MemoryRegion*> mrs;
  };
  std::vector<Built> built(s.contexts.size());
  for (std::size_t c = 0; c < s.contexts.size(); ++c) {
    const ContextSpec& cs = s.contexts[c];
    transport::Host* h = host(cs.node);
    auto ctx_or = h->device().OpenContext(cs.id);
    if (!ctx_or.ok()) return ctx_or.status();
    verbs::Context& ctx = **ctx_or;
    migrator_->RegisterContext(cs.id, h->gid());
    App::Ctx ac;
    ac.id = cs.id;
    for (uint32_t i = 0; i < cs.pds; ++i) {
      auto pd = ctx.AllocPd();
      if (!pd.ok()) return pd.status();
      built[c].pds.push_back(*pd);
    }
    for (std::size_t i = 0; i < cs.mrs.size(); ++i) {
      auto mr = ctx.RegMr(built[c].pds[cs.mrs[i].pd],
                          MrBase(static_cast<uint32_t>(i)), cs.mrs[i].size,
                          verbs::kAccessLocalWrite | verbs::kAccessRemoteWrite);
      if (!mr.ok()) return mr.status();
      built[c].mrs.push_back(*mr);
    }
    for (uint32_t d : cs.cq_depths) {
      auto cq = ctx.CreateCq(d);
      if (!cq.ok()) return cq.status();
      ac.cqs.push_back(*cq);
    }
    for (const auto& sr : cs.srqs) {
      auto srq = ctx.CreateSrq(built[c].pds[sr.pd], sr.depth);
      if (!srq.ok()) return srq.status();
      built[c].srqs.push_back(*srq);
    }
    for (std::size_t i = 0; i < cs.qps.size(); ++i) {
      const QpSpec& q = cs.qps[i];
      verbs::QpInitAttr attr;
      attr.pd = built[c].pds[q.pd];
      attr.send_cq = ac.cqs[q.send_cq];
      attr.recv_cq = ac.cqs[q.recv_cq];
      if (q.srq) attr.srq = built[c].srqs[*q.srq];
      attr.caps = {q.send_depth, q.recv_depth};
      attr.max_inflight = q.max_inflight;
      auto qp = ctx.CreateQp(attr);
      if (!qp.ok()) return qp.status();
      App::Qp aq;
      aq.name = q.name;
      aq.ctx = c;
      aq.qpn = (*qp)->qpn;
      aq.lkey = built[c].mrs[q.mr]->lkey;
      aq.rkey = built[c].mrs[q.mr]->rkey;
      aq.layout = layout[c][i];
      app.by_qpn[aq.qpn] = app.qps.size();
      app.qps.push_back(std::move(aq));
    }
    app.ctxs.push_back(std::move(ac));
  }

  // Pair up and connect.
  std::map<std::string, std::size_t> by_name;
  for (std::size_t i = 0; i < app.qps.size(); ++i) by_name[app.qps[i].name] = i;
  auto initial_psn = [&](uint32_t qpn) {
    return static_cast<uint32_t>(SplitMix64(s.net.seed * 31 + qpn)) &
           verbs::kPsnMask;
  };
  for (auto& q : app.qps) {
    auto [c, i] = *s.FindQp(q.name);
    q.partner = by_name.at(s.contexts[c].qps[i].partner);
  }
  for (auto& q : app.qps) {
    auto [c, i] = *s.FindQp(q.name);
    const QpSpec& spec = s.contexts[c].qps[i];
    const App::Qp& p = app.qps[q.partner];
    verbs::Context* ctx = host(s.contexts[c].node)->device().FindContext(
        s.contexts[c].id);
    const auto& pctx = s.contexts[p.ctx];
    verbs::QpAttr init;
    init.mtu = spec.mtu;
    if (auto st = ctx->ModifyQp(q.qpn, QpState::kInit, init); !st.ok()) {
      return st;
    }
    verbs::QpAttr rtr;
    rtr.partner = verbs::PartnerAddress{host(pctx.node)->gid(), p.qpn};
    rtr.expected_psn = initial_psn(p.qpn);
    if (auto st = ctx->ModifyQp(q.qpn, QpState::kRtr, rtr); !st.ok()) {
      return st;
    }
    verbs::QpAttr rts;
    rts.next_psn = initial_psn(q.qpn);
    rts.timeout_ticks = spec.timeout_ticks;
    rts.max_retries = spec.max_retries;
    if (auto st = ctx->ModifyQp(q.qpn, QpState::kRts, rts); !st.ok()) {
      return st;
    }
  }

  // Receive pools: one per SRQ, one per QP without an SRQ. A pool's slots
  // fit the largest message any of its QPs can receive.
  std::map<std::pair<std::size_t, uint32_t>, int> srq_pools;
  for (auto& q : app.qps) {
    auto [c, qi] = *s.FindQp(q.name);
    const QpSpec& spec = s.contexts[c].qps[qi];
    if (spec.srq) {
      auto key = std::make_pair(c, *spec.srq);
      auto [it, fresh] =
          srq_pools.try_emplace(key, static_cast<int>(app.pools.size()));
      if (fresh) {
        App::Pool pool;
        pool.ctx = c;
        pool.srq = built[c].srqs[*spec.srq];
        pool.depth = s.contexts[c].srqs[*spec.srq].depth;
        app.pools.push_back(std::move(pool));
      }
      q.pool = it->second;
    } else {
      App::Pool pool;
      pool.ctx = c;
      pool.qpn = q.qpn;
      pool.depth = spec.recv_depth;
      q.pool = static_cast<int>(app.pools.size());
      app.pools.push_back(std::move(pool));
    }
    App::Pool& pool = app.pools[q.pool];
    pool.slot_size = std::max(pool.slot_size, q.layout.slot_size);
  }
  for (const auto& q : app.qps) {
    App::Pool& pool = app.pools[q.pool];
    const uint64_t room = q.layout.write_base - q.layout.recv_base;
    const uint64_t n = room / pool.slot_size;
    for (uint64_t k = 0; k < n && pool.slots.size() < pool.depth; ++k) {
      pool.slots.push_back({q.layout.recv_base + k * pool.slot_size, q.lkey});
    }
  }
  for (auto& pool : app.pools) {
    verbs::Context* ctx = host(s.contexts[pool.ctx].node)
                              ->device()
                              .FindContext(s.contexts[pool.ctx].id);
    for (uint64_t k = 0; k < pool.slots.size(); ++k) {
      app.Repost(*ctx, pool, k);
    }
  }

  for (const auto& t : s.traffic) {
    App::Flow f;
    f.spec = t;
    f.qp = by_name.at(t.qp);
    f.sizes = FlowSizes(s.net.seed, t.qp, t);
    f.post_tick.assign(t.count, 0);
    f.res.qp = t.qp;
    f.res.count = t.count;
    const App::Qp& dst = app.qps[app.qps[f.qp].partner];
    if (t.opcode == verbs::WrOpcode::kRdmaWrite) {
      f.write_last.assign(dst.layout.write_slots, -1);
    }
    const int fi = static_cast<int>(app.flows.size());
    app.qps[f.qp].out_flow = fi;
    if (t.opcode == verbs::WrOpcode::kSend) {
      app.qps[app.qps[f.qp].partner].in_flow = fi;
    }
    app.flows.push_back(std::move(f));
  }

  net_->AddTickHook([this](netsim::Network& net) -> std::optional<Tick> {
    std::optional<Tick> want;
    app_->Service(net.now(), &want);
    return want;
  });
  migrator_->set_listener([this](uint32_t ctx_id, migrator::MigrationEvent ev,
                                 const migrator::MigrationReport&) {
    for (auto& c : app_->ctxs) {
      if (c.id != ctx_id) continue;
      if (ev == migrator::MigrationEvent::kStopped) c.frozen = true;
      if (ev == migrator::MigrationEvent::kRestored) c.frozen = false;
    }
  });

  for (const auto& m : s.migrations) {
    migrator::MigrationSpec spec;
    spec.ctx_id = m.ctx;
    spec.dst = host(m.to)->gid();
    spec.trigger_tick = m.at;
    spec.transfer = m.transfer;
    // The source is wherever the previous migration of this context left it.
    std::string from = s.FindContext(m.ctx)->node;
    for (const auto& prev : s.migrations) {
      if (&prev == &m) break;
      if (prev.ctx == m.ctx) from = prev.to;
    }
    spec.src = host(from)->gid();
    auto idx = migrator_->Schedule(spec);
    if (!idx.ok()) return idx.status();
  }
  return absl::OkStatus();
}

RunResult Runner::Run() {
  App& app = *app_;
  auto done = [&] { return app.AllDone() && migrator_->AllFinished(); };
  const Tick budget = scenario_.net.max_ticks;
  netsim::SimReport rep;
  for (;;) {
    rep = net_->RunUntil(done, budget);
    // Completions raised after the tick's application pass are picked up
    // here; new posts restart the run.
    const bool acted = app.Service(net_->now(), nullptr);
    if (rep.predicate_met || rep.budget_exhausted || !acted) break;
  }
  if (!rep.predicate_met && done()) rep.predicate_met = true;

  RunResult& r = app.result;
  r.sim = rep;
  r.migrations = migrator_->reports();
  for (auto& m : r.migrations) {
    for (const auto& f : app.flows) {
      const App::Qp& q = app.qps[f.qp];
      if (app.ctxs[q.ctx].id == m.ctx_id) continue;
      if (app.ctxs[app.qps[q.partner].ctx].id != m.ctx_id) continue;
      m.max_partner_latency_ticks =
          std::max(m.max_partner_latency_ticks, f.res.max_latency_ticks);
    }
  }

  // WRITE targets must hold the last message acked for each slot.
  for (auto& f : app.flows) {
    if (f.spec.opcode != verbs::WrOpcode::kRdmaWrite || f.res.completed_err) {
      continue;
    }
    const App::Qp& dst = app.qps[app.qps[f.qp].partner];
    verbs::Context* ctx = app.Live(app.ctxs[dst.ctx]);
    for (std::size_t slot = 0; slot < f.write_last.size(); ++slot) {
      if (f.write_last[slot] < 0) continue;
      const auto idx = static_cast<uint64_t>(f.write_last[slot]);
      auto got = ctx ? ctx->ReadMemory(dst.layout.write_base +
                                           slot * uint64_t{dst.layout.slot_size},
                                       f.sizes[idx])
                     : absl::StatusOr<std::vector<uint8_t>>(
                           absl::NotFoundError("context gone"));
      if (!got.ok() ||
          *got != FlowPayload(app.seed, app.qps[f.qp].name, idx, f.sizes[idx])) {
        ++f.res.write_mismatches;
      }
    }
    f.res.delivered = f.res.completed_ok;
  }

  for (const auto& q : app.qps) {
    verbs::Context* ctx = app.Live(app.ctxs[q.ctx]);
    const verbs::QueuePair* qp = ctx ? ctx->FindQp(q.qpn) : nullptr;
    r.final_states[q.name] =
        qp ? std::string(verbs::QpStateName(qp->state)) : "DESTROYED";
    r.final_partners[q.name] = qp ? qp->partner : std::nullopt;
  }
  for (auto& h : hosts_) {
    r.host_counters.decode_errors += h->counters().decode_errors;
    r.host_counters.unknown_qpn += h->counters().unknown_qpn;
    r.host_counters.resumes_ignored += h->counters().resumes_ignored;
  }
  for (const auto& f : app.flows) r.flows.push_back(f.res);

  // Expectations.
  const Expect& e = scenario_.expect;
  auto fail = [&](std::string msg) { r.failures.push_back(std::move(msg)); };
  for (const auto& f : r.flows) {
    if (f.corrupt) fail(absl::StrCat(f.qp, ": ", f.corrupt, " corrupt or out-of-order messages"));
    if (f.write_mismatches) {
      fail(absl::StrCat(f.qp, ": ", f.write_mismatches, " WRITE slots differ"));
    }
    if (e.all_delivered && (f.delivered != f.count || f.completed_ok != f.count)) {
      fail(absl::StrCat(f.qp, ": delivered ", f.delivered, "/", f.count,
                        ", completed ", f.completed_ok, "/", f.count));
    }
  }
  if (r.unexpected_completions) {
    fail(absl::StrCat(r.unexpected_completions, " unexpected completions"));
  }
  if (e.no_wc_errors) {
    for (const auto& [status, n] : r.wc_errors) {
      fail(absl::StrCat(n, " completions with ", status));
    }
  }
  if (e.migrations_succeed) {
    for (const auto& m : r.migrations) {
      if (!m.finished || !m.succeeded) {
        fail(absl::StrCat("migration of context ", m.ctx_id,
                          m.finished ? " failed: " : " did not finish",
                          m.error));
      }
    }
  }
  if (!e.trace_contains.empty() || !e.trace_excludes.empty()) {
    std::set<std::string> seen;
    for (const auto& rec : net_->trace().records()) {
      seen.insert(std::string(rec.op));
      if (rec.syndrome) {
        seen.insert(std::string(transport::SyndromeName(
            static_cast<transport::Syndrome>(*rec.syndrome))));
      }
    }
    for (const auto& name : e.trace_contains) {
      if (!seen.contains(name)) fail("trace lacks " + name);
    }
    for (const auto& name : e.trace_excludes) {
      if (seen.contains(name)) fail("trace contains " + name);
    }
  }
  for (const auto& [qp, st] : e.final_states) {
    const std::string want(verbs::QpStateName(st));
    if (r.final_states[qp] != want) {
      fail(absl::StrCat(qp, ": final state ", r.final_states[qp], ", expected ",
                        want));
    }
  }
  if (e.max_end_tick && rep.end_tick > *e.max_end_tick) {
    fail(absl::StrCat("run ended at tick ", rep.end_tick, " > ",
                      *e.max_end_tick));
  }
  if (rep.budget_exhausted && !rep.predicate_met) {
    fail(absl::StrCat("tick budget ", budget, " exhausted"));
  }
  return r;
}

absl::StatusOr<RunResult> RunScenario(const Scenario& s,
                                      const RunOptions& opts) {
  Runner runner(s, opts);
  if (auto st = runner.Build(); !st.ok()) return st;
  return runner.Run();
}

void WriteStats(std::ostream& out, const RunResult& r) {
  using nlohmann::ordered_json;
  ordered_json run;
  run["record"] = "run";
  run["end_tick"] = r.sim.end_tick;
  run["passed"] = r.passed();
  run["quiescent"] = r.sim.quiescent;
  run["budget_exhausted"] = r.sim.budget_exhausted;
  run["trace_hash"] = absl::StrCat(absl::Hex(r.sim.trace_hash, absl::kZeroPad16));
  run["sent"] = r.sim.counters.sent;
  run["delivered"] = r.sim.counters.delivered;
  run["dropped"] = r.sim.counters.dropped;
  run["duplicated"] = r.sim.counters.duplicated;
  run["unroutable"] = r.sim.counters.unroutable;
  uint64_t messages = 0;
  for (const auto& f : r.flows) messages += f.delivered;
  run["messages_delivered"] = messages;
  run["wc_errors"] = r.wc_errors;
  ordered_json flows = ordered_json::array();
  for (const auto& f : r.flows) {
    flows.push_back({{"qp", f.qp},
                     {"count", f.count},
                     {"posted", f.posted},
                     {"completed_ok", f.completed_ok},
                     {"completed_err", f.completed_err},
                     {"delivered", f.delivered},
                     {"corrupt", f.corrupt},
                     {"write_mismatches", f.write_mismatches},
                     {"max_latency_ticks", f.max_latency_ticks}});
  }
  run["flows"] = flows;
  run["final_states"] = r.final_states;
  run["state_histogram"] = r.sim.state_histogram;
  run["failures"] = r.failures;
  out << run.dump() << "\n";
  for (const auto& m : r.migrations) {
    ordered_json j;
    j["record"] = "migration";
    j["ctx_id"] = m.ctx_id;
    j["src"] = m.src.ToString();
    j["dst"] = m.dst.ToString();
    j["trigger_tick"] = m.trigger_tick;
    j["succeeded"] = m.succeeded;
    j["error"] = m.error;
    j["checkpoint_ticks"] = m.checkpoint_ticks;
    j["transfer_ticks"] = m.transfer_ticks;
    j["restore_ticks"] = m.restore_ticks;
    j["total_ticks"] = m.total_ticks();
    j["image_bytes"] = m.image_bytes;
    j["chunks"] = m.chunks;
    j["chunk_retransmits"] = m.chunk_retransmits;
    j["resumes_relayed"] = m.resumes_relayed;
    j["restored_at"] = m.restored_at;
    j["source_destroyed_at"] = m.source_destroyed_at;
    j["max_partner_latency_ticks"] = m.max_partner_latency_ticks;
    out << j.dump() << "\n";
  }
}

void WriteTimeline(std::ostream& out, const RunResult& r) {
  for (const auto& e : r.timeline) {
    out << e.tick << " " << e.node << " " << (e.qp.empty() ? "-" : e.qp) << " "
        << e.qpn << " " << verbs::QpStateName(e.from) << " "
        << verbs::QpStateName(e.to) << "\n";
  }
}

}  // namespace migrsim::scenario
