#include "migrsim/migrsim.h"

#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "checkpoint/checkpoint.h"
#include "migrator/migrator.h"
#include "netsim/network.h"
#include "scenario/resume_check.h"
#include "scenario/runner.h"
#include "scenario/scenario.h"
#include "transport/host.h"

struct migrsim_run {
  migrsim::scenario::Scenario scenario;
  migrsim::scenario::RunOptions opts;
  std::unique_ptr<migrsim::scenario::Runner> runner;
  std::optional<migrsim::scenario::RunResult> result;
};

struct migrsim_cluster {
  std::unique_ptr<migrsim::netsim::Network> net;
  std::unique_ptr<migrsim::migrator::Migrator> migrator;
  std::vector<std::unique_ptr<migrsim::transport::Host>> hosts;
};

namespace {

using migrsim::verbs::Context;
using migrsim::verbs::Gid;

thread_local std::string g_last_error;

int Fail(int code, std::string msg) {
  g_last_error = std::move(msg);
  return code;
}

int FromStatus(const absl::Status& st) {
  if (st.ok()) return MIGRSIM_OK;
  int code;
  switch (st.code()) {
    case absl::StatusCode::kInvalidArgument:
    case absl::StatusCode::kNotFound:
    case absl::StatusCode::kOutOfRange:
      code = MIGRSIM_ERR_ARGUMENT;
      break;
    case absl::StatusCode::kResourceExhausted:
      code = MIGRSIM_ERR_RESOURCE;
      break;
    case absl::StatusCode::kFailedPrecondition:
      code = MIGRSIM_ERR_STATE;
      break;
    case absl::StatusCode::kAlreadyExists:
      code = MIGRSIM_ERR_COLLISION;
      break;
    default:
      code = MIGRSIM_ERR_INTERNAL;
  }
  return Fail(code, std::string(st.message()));
}

migrsim::scenario::RunOptions ToOptions(const migrsim_run_options* o) {
  migrsim::scenario::RunOptions r;
  if (o == nullptr) return r;
  if (o->has_seed) r.seed = o->seed;
  if (o->has_max_ticks) r.max_ticks = o->max_ticks;
  if (o->has_migration_enabled) r.migration_enabled = o->migration_enabled != 0;
  return r;
}

int MakeRun(absl::StatusOr<migrsim::scenario::Scenario> s,
            const migrsim_run_options* opts, migrsim_run** out) {
  if (!s.ok()) return Fail(MIGRSIM_ERR_PARSE, std::string(s.status().message()));
  auto run = std::make_unique<migrsim_run>();
  run->scenario = *std::move(s);
  run->opts = ToOptions(opts);
  // Option overrides can invalidate the scenario (e.g. migrations with
  // migration support switched off).
  migrsim::scenario::Scenario effective = run->scenario;
  if (run->opts.seed) effective.net.seed = *run->opts.seed;
  if (run->opts.max_ticks) effective.net.max_ticks = *run->opts.max_ticks;
  if (run->opts.migration_enabled) {
    effective.migration_enabled = *run->opts.migration_enabled;
  }
  if (auto st = migrsim::scenario::Validate(effective); !st.ok()) {
    return Fail(MIGRSIM_ERR_PARSE, std::string(st.message()));
  }
  *out = run.release();
  return MIGRSIM_OK;
}

int WriteFile(const char* path, const std::string& text) {
  if (path == nullptr) return Fail(MIGRSIM_ERR_ARGUMENT, "null path");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) return Fail(MIGRSIM_ERR_ARGUMENT, std::string("cannot open ") + path);
  f << text;
  f.close();
  if (!f) return Fail(MIGRSIM_ERR_INTERNAL, std::string("write failed: ") + path);
  return MIGRSIM_OK;
}

void CopyOut(const std::string& s, char* buf, size_t cap) {
  if (buf == nullptr || cap == 0) return;
  size_t n = std::min(cap - 1, s.size());
  std::memcpy(buf, s.data(), n);
  buf[n] = '\0';
}

migrsim::transport::Host* HostOf(migrsim_cluster* cl, uint32_t node) {
  if (cl == nullptr || node >= cl->hosts.size()) return nullptr;
  return cl->hosts[node].get();
}

// Resolves node + context or records an argument error.
Context* CtxOf(migrsim_cluster* cl, uint32_t node, uint32_t ctx) {
  auto* h = HostOf(cl, node);
  if (h == nullptr) {
    Fail(MIGRSIM_ERR_ARGUMENT, "unknown node");
    return nullptr;
  }
  Context* c = h->device().FindContext(ctx);
  if (c == nullptr) Fail(MIGRSIM_ERR_ARGUMENT, "unknown context");
  return c;
}

Gid ToGid(const uint8_t raw[16]) {
  Gid g;
  std::memcpy(g.raw.data(), raw, 16);
  return g;
}

}  // namespace

extern "C" {

const char* migrsim_version(void) { return "1.0.0"; }

const char* migrsim_status_name(int status) {
  switch (status) {
    case MIGRSIM_OK:
      return "OK";
    case MIGRSIM_ERR_ARGUMENT:
      return "ARGUMENT";
    case MIGRSIM_ERR_RESOURCE:
      return "RESOURCE";
    case MIGRSIM_ERR_STATE:
      return "STATE";
    case MIGRSIM_ERR_COLLISION:
      return "COLLISION";
    case MIGRSIM_ERR_PARSE:
      return "PARSE";
    case MIGRSIM_ERR_INTERNAL:
      return "INTERNAL";
  }
  return "UNKNOWN";
}

const char* migrsim_last_error(void) { return g_last_error.c_str(); }

int migrsim_run_load(const char* path, const migrsim_run_options* opts,
                     migrsim_run** out) {
  if (path == nullptr || out == nullptr) {
    return Fail(MIGRSIM_ERR_ARGUMENT, "null argument");
  }
  return MakeRun(migrsim::scenario::LoadScenario(path), opts, out);
}

int migrsim_run_parse(const char* yaml, const char* name,
                      const migrsim_run_options* opts, migrsim_run** out) {
  if (yaml == nullptr || out == nullptr) {
    return Fail(MIGRSIM_ERR_ARGUMENT, "null argument");
  }
  return MakeRun(migrsim::scenario::ParseScenario(yaml, name ? name : ""), opts,
                 out);
}

void migrsim_run_destroy(migrsim_run* run) { delete run; }

int migrsim_run_execute(migrsim_run* run, migrsim_run_summary* out) {
  if (run == nullptr) return Fail(MIGRSIM_ERR_ARGUMENT, "null run");
  if (run->result) return Fail(MIGRSIM_ERR_STATE, "run already executed");
  run->runner =
      std::make_unique<migrsim::scenario::Runner>(run->scenario, run->opts);
  if (auto st = run->runner->Build(); !st.ok()) {
    run->runner.reset();
    return Fail(MIGRSIM_ERR_PARSE, std::string(st.message()));
  }
  run->result = run->runner->Run();
  const auto& r = *run->result;
  if (out != nullptr) {
    *out = {};
    out->passed = r.passed() ? 1 : 0;
    out->end_tick = r.sim.end_tick;
    out->trace_hash = r.sim.trace_hash;
    out->packets_sent = r.sim.counters.sent;
    out->packets_dropped = r.sim.counters.dropped;
    for (const auto& f : r.flows) out->messages_delivered += f.delivered;
    for (const auto& [k, n] : r.wc_errors) out->wc_errors += n;
    out->migrations = static_cast<uint32_t>(r.migrations.size());
    for (const auto& m : r.migrations) {
      if (!m.succeeded) ++out->migrations_failed;
    }
    out->failures = static_cast<uint32_t>(r.failures.size());
  }
  return MIGRSIM_OK;
}

int migrsim_run_write_trace(const migrsim_run* run, const char* path) {
  if (run == nullptr || !run->result) {
    return Fail(MIGRSIM_ERR_STATE, "run has not executed");
  }
  std::ostringstream ss;
  run->runner->network().trace().Write(ss);
  return WriteFile(path, ss.str());
}

int migrsim_run_write_stats(const migrsim_run* run, const char* path) {
  if (run == nullptr || !run->result) {
    return Fail(MIGRSIM_ERR_STATE, "run has not executed");
  }
  std::ostringstream ss;
  migrsim::scenario::WriteStats(ss, *run->result);
  return WriteFile(path, ss.str());
}

int migrsim_run_write_timeline(const migrsim_run* run, const char* path) {
  if (run == nullptr || !run->result) {
    return Fail(MIGRSIM_ERR_STATE, "run has not executed");
  }
  std::ostringstream ss;
  migrsim::scenario::WriteTimeline(ss, *run->result);
  return WriteFile(path, ss.str());
}

const char* migrsim_run_failure(const migrsim_run* run, uint32_t i) {
  if (run == nullptr || !run->result || i >= run->result->failures.size()) {
    return nullptr;
  }
  return run->result->failures[i].c_str();
}

void migrsim_resume_snapshot_default(migrsim_resume_snapshot* s) {
  if (s == nullptr) return;
  migrsim::scenario::ResumeSnapshot d;
  *s = {d.first_psn,        d.first_unacked, d.next_psn,     d.last_psn,
        d.receiver_expects, d.mtu,           d.latency_ticks};
}

int migrsim_resume_check(const migrsim_resume_snapshot* s, int* match,
                         char* report, size_t report_cap, char* trace,
                         size_t trace_cap) {
  if (s == nullptr || match == nullptr) {
    return Fail(MIGRSIM_ERR_ARGUMENT, "null argument");
  }
  migrsim::scenario::ResumeSnapshot snap;
  snap.first_psn = s->first_psn;
  snap.first_unacked = s->first_unacked;
  snap.next_psn = s->next_psn;
  snap.last_psn = s->last_psn;
  snap.receiver_expects = s->receiver_expects;
  snap.mtu = s->mtu;
  snap.latency_ticks = s->latency_ticks;
  auto r = migrsim::scenario::RunResumeCheck(snap);
  if (!r.ok()) return FromStatus(r.status());
  *match = r->match && r->completed ? 1 : 0;
  std::string rep = r->diff;
  if (!r->completed) rep += "message did not complete intact\n";
  CopyOut(rep, report, report_cap);
  CopyOut(r->trace, trace, trace_cap);
  return MIGRSIM_OK;
}

void migrsim_net_config_default(migrsim_net_config* c) {
  if (c == nullptr) return;
  migrsim::netsim::NetConfig d;
  *c = {d.seed, d.latency_ticks, d.loss_rate, d.dup_rate, d.max_ticks};
}

int migrsim_cluster_create(const migrsim_net_config* c, migrsim_cluster** out) {
  if (c == nullptr || out == nullptr) {
    return Fail(MIGRSIM_ERR_ARGUMENT, "null argument");
  }
  migrsim::netsim::NetConfig cfg;
  cfg.seed = c->seed;
  cfg.latency_ticks = c->latency_ticks;
  cfg.loss_rate = c->loss_rate;
  cfg.dup_rate = c->dup_rate;
  cfg.max_ticks = c->max_ticks;
  if (auto st = cfg.Validate(); !st.ok()) return FromStatus(st);
  auto cl = std::make_unique<migrsim_cluster>();
  cl->net = std::make_unique<migrsim::netsim::Network>(cfg);
  cl->migrator = std::make_unique<migrsim::migrator::Migrator>(*cl->net);
  *out = cl.release();
  return MIGRSIM_OK;
}

void migrsim_cluster_destroy(migrsim_cluster* cl) { delete cl; }

int migrsim_node_add(migrsim_cluster* cl, const char* name, uint64_t gid_seed,
                     int migration_enabled, uint32_t* node) {
  if (cl == nullptr || name == nullptr) {
    return Fail(MIGRSIM_ERR_ARGUMENT, "null argument");
  }
  const auto index = static_cast<uint32_t>(cl->hosts.size());
  migrsim::verbs::NodeAddress addr{Gid::FromSeed(gid_seed),
                                   static_cast<uint16_t>(index + 1), gid_seed};
  auto h = std::make_unique<migrsim::transport::Host>(
      name, addr,
      migrsim::verbs::DeviceConfig::ForNodeIndex(
          index, migrsim::SplitMix64(cl->net->config().seed ^ (gid_seed << 1))),
      migration_enabled != 0);
  if (auto st = h->AttachTo(*cl->net); !st.ok()) return FromStatus(st);
  cl->migrator->AddHost(h.get());
  cl->hosts.push_back(std::move(h));
  if (node != nullptr) *node = index;
  return MIGRSIM_OK;
}

int migrsim_node_gid(const migrsim_cluster* cl, uint32_t node,
                     uint8_t gid[16]) {
  if (cl == nullptr || node >= cl->hosts.size() || gid == nullptr) {
    return Fail(MIGRSIM_ERR_ARGUMENT, "unknown node");
  }
  std::memcpy(gid, cl->hosts[node]->gid().raw.data(), 16);
  return MIGRSIM_OK;
}

int migrsim_node_set_last_qpn(migrsim_cluster* cl, uint32_t node,
                              uint32_t qpn) {
  auto* h = HostOf(cl, node);
  if (h == nullptr) return Fail(MIGRSIM_ERR_ARGUMENT, "unknown node");
  return FromStatus(h->device().SetLastQpn(qpn));
}

int migrsim_node_set_last_mrn(migrsim_cluster* cl, uint32_t node,
                              uint32_t mrn) {
  auto* h = HostOf(cl, node);
  if (h == nullptr) return Fail(MIGRSIM_ERR_ARGUMENT, "unknown node");
  return FromStatus(h->device().SetLastMrn(mrn));
}

int migrsim_ctx_open(migrsim_cluster* cl, uint32_t node, uint32_t ctx) {
  auto* h = HostOf(cl, node);
  if (h == nullptr) return Fail(MIGRSIM_ERR_ARGUMENT, "unknown node");
  auto c = h->device().OpenContext(ctx);
  if (!c.ok()) return FromStatus(c.status());
  cl->migrator->RegisterContext(ctx, h->gid());
  return MIGRSIM_OK;
}

int migrsim_pd_alloc(migrsim_cluster* cl, uint32_t node, uint32_t ctx,
                     uint32_t* pd) {
  Context* c = CtxOf(cl, node, ctx);
  if (c == nullptr) return MIGRSIM_ERR_ARGUMENT;
  auto r = c->AllocPd();
  if (!r.ok()) return FromStatus(r.status());
  if (pd != nullptr) *pd = *r;
  return MIGRSIM_OK;
}

int migrsim_mr_reg(migrsim_cluster* cl, uint32_t node, uint32_t ctx,
                   uint32_t pd, uint64_t addr, uint64_t length,
                   uint32_t access, uint32_t* mrn, uint32_t* lkey,
                   uint32_t* rkey) {
  Context* c = CtxOf(cl, node, ctx);
  if (c == nullptr) return MIGRSIM_ERR_ARGUMENT;
  auto r = c->RegMr(pd, addr, length, access);
  if (!r.ok()) return FromStatus(r.status());
  if (mrn != nullptr) *mrn = (*r)->mrn;
  if (lkey != nullptr) *lkey = (*r)->lkey;
  if (rkey != nullptr) *rkey = (*r)->rkey;
  return MIGRSIM_OK;
}

int migrsim_cq_create(migrsim_cluster* cl, uint32_t node, uint32_t ctx,
                      uint32_t depth, uint32_t* cq) {
  Context* c = CtxOf(cl, node, ctx);
  if (c == nullptr) return MIGRSIM_ERR_ARGUMENT;
  auto r = c->CreateCq(depth);
  if (!r.ok()) return FromStatus(r.status());
  if (cq != nullptr) *cq = *r;
  return MIGRSIM_OK;
}

int migrsim_srq_create(migrsim_cluster* cl, uint32_t node, uint32_t ctx,
                       uint32_t pd, uint32_t depth, uint32_t* srq) {
  Context* c = CtxOf(cl, node, ctx);
  if (c == nullptr) return MIGRSIM_ERR_ARGUMENT;
  auto r = c->CreateSrq(pd, depth);
  if (!r.ok()) return FromStatus(r.status());
  if (srq != nullptr) *srq = *r;
  return MIGRSIM_OK;
}

int migrsim_qp_create(migrsim_cluster* cl, uint32_t node, uint32_t ctx,
                      const migrsim_qp_init* init, uint32_t* qpn) {
  Context* c = CtxOf(cl, node, ctx);
  if (c == nullptr) return MIGRSIM_ERR_ARGUMENT;
  if (init == nullptr) return Fail(MIGRSIM_ERR_ARGUMENT, "null init");
  migrsim::verbs::QpInitAttr a;
  a.pd = init->pd;
  a.send_cq = init->send_cq;
  a.recv_cq = init->recv_cq;
  if (init->has_srq) a.srq = init->srq;
  if (init->max_send_wr) a.caps.max_send_wr = init->max_send_wr;
  if (init->max_recv_wr) a.caps.max_recv_wr = init->max_recv_wr;
  if (init->max_inflight) a.max_inflight = init->max_inflight;
  auto r = c->CreateQp(a);
  if (!r.ok()) return FromStatus(r.status());
  if (qpn != nullptr) *qpn = (*r)->qpn;
  return MIGRSIM_OK;
}

int migrsim_qp_modify(migrsim_cluster* cl, uint32_t node, uint32_t ctx,
                      uint32_t qpn, migrsim_qp_state target,
                      const migrsim_qp_attr* attr) {
  Context* c = CtxOf(cl, node, ctx);
  if (c == nullptr) return MIGRSIM_ERR_ARGUMENT;
  if (target < MIGRSIM_QPS_RESET || target > MIGRSIM_QPS_PAUSED) {
    return Fail(MIGRSIM_ERR_ARGUMENT, "bad target state");
  }
  migrsim::verbs::QpAttr a;
  if (attr != nullptr) {
    if (attr->has_partner) {
      a.partner = migrsim::verbs::PartnerAddress{ToGid(attr->partner_gid),
                                                 attr->partner_qpn};
    }
    if (attr->mtu) a.mtu = attr->mtu;
    if (attr->has_expected_psn) a.expected_psn = attr->expected_psn;
    if (attr->has_next_psn) a.next_psn = attr->next_psn;
    if (attr->timeout_ticks) a.timeout_ticks = attr->timeout_ticks;
    if (attr->has_max_retries) a.max_retries = attr->max_retries;
  }
  return FromStatus(
      c->ModifyQp(qpn, static_cast<migrsim::verbs::QpState>(target), a));
}

int migrsim_qp_state_get(migrsim_cluster* cl, uint32_t node, uint32_t qpn,
                         migrsim_qp_state* state) {
  auto* h = HostOf(cl, node);
  if (h == nullptr) return Fail(MIGRSIM_ERR_ARGUMENT, "unknown node");
  const auto* qp = h->device().FindQp(qpn);
  if (qp == nullptr) return Fail(MIGRSIM_ERR_ARGUMENT, "unknown QP");
  if (state != nullptr) *state = static_cast<migrsim_qp_state>(qp->state);
  return MIGRSIM_OK;
}

int migrsim_post_send(migrsim_cluster* cl, uint32_t node, uint32_t ctx,
                      uint32_t qpn, uint64_t wr_id, migrsim_wr_opcode op,
                      uint32_t lkey, uint64_t addr, uint32_t length,
                      uint32_t rkey, uint64_t remote_addr) {
  Context* c = CtxOf(cl, node, ctx);
  if (c == nullptr) return MIGRSIM_ERR_ARGUMENT;
  if (op != MIGRSIM_WR_SEND && op != MIGRSIM_WR_RDMA_WRITE) {
    return Fail(MIGRSIM_ERR_ARGUMENT, "bad opcode");
  }
  migrsim::verbs::SendRequest sr;
  sr.wr_id = wr_id;
  sr.opcode = static_cast<migrsim::verbs::WrOpcode>(op);
  sr.local = {lkey, addr, length};
  sr.rkey = rkey;
  sr.remote_addr = remote_addr;
  return FromStatus(c->PostSend(qpn, sr));
}

int migrsim_post_recv(migrsim_cluster* cl, uint32_t node, uint32_t ctx,
                      uint32_t qpn, uint64_t wr_id, uint32_t lkey,
                      uint64_t addr, uint32_t length) {
  Context* c = CtxOf(cl, node, ctx);
  if (c == nullptr) return MIGRSIM_ERR_ARGUMENT;
  return FromStatus(c->PostRecv(qpn, {wr_id, {lkey, addr, length}}));
}

int migrsim_post_srq_recv(migrsim_cluster* cl, uint32_t node, uint32_t ctx,
                          uint32_t srq, uint64_t wr_id, uint32_t lkey,
                          uint64_t addr, uint32_t length) {
  Context* c = CtxOf(cl, node, ctx);
  if (c == nullptr) return MIGRSIM_ERR_ARGUMENT;
  return FromStatus(c->PostSrqRecv(srq, {wr_id, {lkey, addr, length}}));
}

int migrsim_cq_poll(migrsim_cluster* cl, uint32_t node, uint32_t ctx,
                    uint32_t cq, migrsim_wc* wcs, uint32_t max, uint32_t* n) {
  Context* c = CtxOf(cl, node, ctx);
  if (c == nullptr) return MIGRSIM_ERR_ARGUMENT;
  if (wcs == nullptr && max > 0) return Fail(MIGRSIM_ERR_ARGUMENT, "null wcs");
  auto r = c->PollCq(cq, max);
  if (!r.ok()) return FromStatus(r.status());
  for (std::size_t i = 0; i < r->size(); ++i) {
    const auto& w = (*r)[i];
    wcs[i] = {w.wr_id, static_cast<uint32_t>(w.status),
              static_cast<uint32_t>(w.opcode), w.byte_len, w.qpn};
  }
  if (n != nullptr) *n = static_cast<uint32_t>(r->size());
  return MIGRSIM_OK;
}

int migrsim_mem_write(migrsim_cluster* cl, uint32_t node, uint32_t ctx,
                      uint64_t addr, const void* data, uint64_t len) {
  Context* c = CtxOf(cl, node, ctx);
  if (c == nullptr) return MIGRSIM_ERR_ARGUMENT;
  if (data == nullptr && len > 0) return Fail(MIGRSIM_ERR_ARGUMENT, "null data");
  return FromStatus(c->WriteMemory(
      addr, std::span<const uint8_t>(static_cast<const uint8_t*>(data), len)));
}

int migrsim_mem_read(migrsim_cluster* cl, uint32_t node, uint32_t ctx,
                     uint64_t addr, void* data, uint64_t len) {
  Context* c = CtxOf(cl, node, ctx);
  if (c == nullptr) return MIGRSIM_ERR_ARGUMENT;
  if (data == nullptr && len > 0) return Fail(MIGRSIM_ERR_ARGUMENT, "null data");
  auto r = c->ReadMemory(addr, len);
  if (!r.ok()) return FromStatus(r.status());
  std::memcpy(data, r->data(), r->size());
  return MIGRSIM_OK;
}

int migrsim_cluster_run(migrsim_cluster* cl, uint64_t until_tick,
                        uint64_t* now) {
  if (cl == nullptr) return Fail(MIGRSIM_ERR_ARGUMENT, "null cluster");
  cl->net->RunUntil(nullptr, until_tick);
  if (now != nullptr) *now = cl->net->now();
  return MIGRSIM_OK;
}

uint64_t migrsim_cluster_trace_hash(const migrsim_cluster* cl) {
  return cl == nullptr ? 0 : cl->net->trace().Hash();
}

int migrsim_cluster_write_trace(const migrsim_cluster* cl, const char* path) {
  if (cl == nullptr) return Fail(MIGRSIM_ERR_ARGUMENT, "null cluster");
  std::ostringstream ss;
  cl->net->trace().Write(ss);
  return WriteFile(path, ss.str());
}

int migrsim_ctx_dump(migrsim_cluster* cl, uint32_t node, uint32_t ctx,
                     uint8_t* buf, size_t cap, size_t* len) {
  auto* h = HostOf(cl, node);
  if (h == nullptr) return Fail(MIGRSIM_ERR_ARGUMENT, "unknown node");
  auto img = migrsim::checkpoint::DumpContext(*h, ctx);
  if (!img.ok()) return FromStatus(img.status());
  auto bytes = migrsim::checkpoint::EncodeImage(*img);
  if (len != nullptr) *len = bytes.size();
  if (buf == nullptr) return MIGRSIM_OK;
  if (cap < bytes.size()) return Fail(MIGRSIM_ERR_RESOURCE, "buffer too small");
  std::memcpy(buf, bytes.data(), bytes.size());
  return MIGRSIM_OK;
}

int migrsim_ctx_restore(migrsim_cluster* cl, uint32_t node, uint32_t ctx,
                        const uint8_t* image, size_t len) {
  auto* h = HostOf(cl, node);
  if (h == nullptr) return Fail(MIGRSIM_ERR_ARGUMENT, "unknown node");
  if (image == nullptr) return Fail(MIGRSIM_ERR_ARGUMENT, "null image");
  auto img = migrsim::checkpoint::DecodeImage(
      std::span<const uint8_t>(image, len));
  if (!img.ok()) {
    return Fail(MIGRSIM_ERR_PARSE, std::string(img.status().message()));
  }
  if (auto st = migrsim::checkpoint::RestoreImage(*h, ctx, *img); !st.ok()) {
    (void)h->device().DestroyContext(ctx);
    return FromStatus(st);
  }
  cl->migrator->RegisterContext(ctx, h->gid());
  return MIGRSIM_OK;
}

int migrsim_ctx_destroy(migrsim_cluster* cl, uint32_t node, uint32_t ctx) {
  auto* h = HostOf(cl, node);
  if (h == nullptr) return Fail(MIGRSIM_ERR_ARGUMENT, "unknown node");
  return FromStatus(h->device().DestroyContext(ctx));
}

int migrsim_migrate(migrsim_cluster* cl, uint32_t ctx, uint32_t src_node,
                    uint32_t dst_node, uint64_t trigger_tick, int in_band,
                    uint32_t* migration) {
  auto* src = HostOf(cl, src_node);
  auto* dst = HostOf(cl, dst_node);
  if (src == nullptr || dst == nullptr) {
    return Fail(MIGRSIM_ERR_ARGUMENT, "unknown node");
  }
  migrsim::migrator::MigrationSpec spec;
  spec.ctx_id = ctx;
  spec.src = src->gid();
  spec.dst = dst->gid();
  spec.trigger_tick = trigger_tick;
  spec.transfer = in_band ? migrsim::migrator::Transfer::kInBand
                          : migrsim::migrator::Transfer::kOutOfBand;
  auto r = cl->migrator->Schedule(spec);
  if (!r.ok()) return FromStatus(r.status());
  if (migration != nullptr) *migration = static_cast<uint32_t>(*r);
  return MIGRSIM_OK;
}

int migrsim_migration_report_get(const migrsim_cluster* cl,
                                 uint32_t migration,
                                 migrsim_migration_report* out) {
  if (cl == nullptr || out == nullptr) {
    return Fail(MIGRSIM_ERR_ARGUMENT, "null argument");
  }
  auto reports = cl->migrator->reports();
  if (migration >= reports.size()) {
    return Fail(MIGRSIM_ERR_ARGUMENT, "unknown migration");
  }
  const auto& m = reports[migration];
  *out = {m.finished ? 1 : 0,  m.succeeded ? 1 : 0, m.checkpoint_ticks,
          m.transfer_ticks,    m.restore_ticks,     m.image_bytes};
  return MIGRSIM_OK;
}

int migrsim_teardown(migrsim_cluster* cl, uint32_t ctx, const uint32_t* nodes,
                     uint32_t n_nodes) {
  if (cl == nullptr || (nodes == nullptr && n_nodes > 0)) {
    return Fail(MIGRSIM_ERR_ARGUMENT, "null argument");
  }
  std::vector<Gid> gids;
  for (uint32_t i = 0; i < n_nodes; ++i) {
    auto* h = HostOf(cl, nodes[i]);
    if (h == nullptr) return Fail(MIGRSIM_ERR_ARGUMENT, "unknown node");
    gids.push_back(h->gid());
  }
  return FromStatus(cl->migrator->Teardown(ctx, gids));
}

}  // extern "C"
