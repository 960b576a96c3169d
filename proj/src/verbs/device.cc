#include "verbs/device.h"

#include <algorithm>
#include <utility>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"

namespace migrsim::verbs {

std::optional<uint32_t> NextFreeId(uint32_t last, bool pinned, IdRange own,
                                   IdRange space,
                                   const std::function<bool(uint32_t)>& used) {
  uint64_t start = static_cast<uint64_t>(last) + 1;
  if (!pinned && own.Contains(last) && start == own.hi) start = own.lo;
  if (start <= UINT32_MAX && own.Contains(static_cast<uint32_t>(start))) {
    const uint64_t width = static_cast<uint64_t>(own.hi) - own.lo;
    for (uint64_t i = 0; i < width; ++i) {
      auto v = static_cast<uint32_t>(own.lo + (start - own.lo + i) % width);
      if (!used(v)) return v;
    }
    return std::nullopt;
  }
  start = std::max<uint64_t>(start, space.lo);
  for (uint64_t v = start; v < space.hi; ++v) {
    if (!used(static_cast<uint32_t>(v))) return static_cast<uint32_t>(v);
  }
  return std::nullopt;
}

DeviceConfig DeviceConfig::ForNodeIndex(uint32_t index, uint64_t key_seed) {
  DeviceConfig c;
  c.qpn_range = {(index + 1) * kDefaultPartitionWidth,
                 (index + 2) * kDefaultPartitionWidth};
  c.mrn_range = {index * kDefaultPartitionWidth + 1,
                 (index + 1) * kDefaultPartitionWidth + 1};
  c.key_seed = key_seed;
  return c;
}

// ---------------------------------------------------------------------------
// Device

Device::Device(NodeAddress address, DeviceConfig config)
    : address_(address),
      config_(config),
      last_qpn_(config.qpn_range.hi - 1),
      last_mrn_(config.mrn_range.hi - 1),
      key_rng_(config.key_seed) {}

absl::StatusOr<Context*> Device::OpenContext(uint32_t ctx_id) {
  if (contexts_.contains(ctx_id)) {
    return absl::AlreadyExistsError(
        absl::StrCat("context ", ctx_id, " already open on device"));
  }
  auto [it, _] =
      contexts_.emplace(ctx_id, std::make_unique<Context>(this, ctx_id));
  return it->second.get();
}

Context* Device::FindContext(uint32_t ctx_id) {
  auto it = contexts_.find(ctx_id);
  return it == contexts_.end() ? nullptr : it->second.get();
}

absl::Status Device::DestroyContext(uint32_t ctx_id) {
  auto it = contexts_.find(ctx_id);
  if (it == contexts_.end()) {
    return absl::NotFoundError(absl::StrCat("no context ", ctx_id));
  }
  Context& ctx = *it->second;
  for (const auto& [qpn, qp] : ctx.qps_) qp_index_.erase(qpn);
  for (const auto& [mrn, mr] : ctx.mrs_) {
    mrns_.erase(mrn);
    ReleaseKey(mr.lkey);
    ReleaseKey(mr.rkey);
  }
  contexts_.erase(it);
  return absl::OkStatus();
}

std::vector<uint32_t> Device::context_ids() const {
  std::vector<uint32_t> ids;
  for (const auto& [id, _] : contexts_) ids.push_back(id);
  return ids;
}

absl::Status Device::SetLastQpn(uint32_t v) {
  if (v >= kQpnSpace.hi) {
    return absl::InvalidArgumentError(
        absl::StrFormat("last QPN 0x%x outside QPN space", v));
  }
  last_qpn_ = v;
  qpn_pinned_ = true;
  return absl::OkStatus();
}

absl::Status Device::SetLastMrn(uint32_t v) {
  if (v >= kMrnSpace.hi) {
    return absl::InvalidArgumentError(
        absl::StrFormat("last MRN 0x%x outside MRN space", v));
  }
  last_mrn_ = v;
  mrn_pinned_ = true;
  return absl::OkStatus();
}

QueuePair* Device::FindQp(uint32_t qpn) {
  auto it = qp_index_.find(qpn);
  return it == qp_index_.end() ? nullptr : it->second;
}

Context* Device::ContextOfQp(uint32_t qpn) {
  QueuePair* qp = FindQp(qpn);
  return qp ? FindContext(qp->ctx_id) : nullptr;
}

absl::StatusOr<uint32_t> Device::AllocateQpn() {
  auto v = NextFreeId(last_qpn_, qpn_pinned_, config_.qpn_range, kQpnSpace,
                      [this](uint32_t q) { return qp_index_.contains(q); });
  if (!v) return absl::ResourceExhaustedError("QPN range exhausted");
  last_qpn_ = *v;
  qpn_pinned_ = false;
  return *v;
}

absl::StatusOr<uint32_t> Device::AllocateMrn() {
  auto v = NextFreeId(last_mrn_, mrn_pinned_, config_.mrn_range, kMrnSpace,
                      [this](uint32_t m) { return mrns_.contains(m); });
  if (!v) return absl::ResourceExhaustedError("MRN range exhausted");
  last_mrn_ = *v;
  mrn_pinned_ = false;
  return *v;
}

uint32_t Device::NextKey() {
  for (;;) {
    uint32_t k = key_rng_.Next32();
    if (k != 0 && !keys_.contains(k)) {
      keys_.insert(k);
      return k;
    }
  }
}

// ---------------------------------------------------------------------------
// Context: object creation

absl::StatusOr<uint32_t> Context::AllocPd() {
  uint32_t h = next_handle_++;
  pds_.emplace(h, ProtectionDomain{h});
  return h;
}

absl::StatusOr<uint32_t> Context::CreateCq(uint32_t depth) {
  if (depth == 0) return absl::InvalidArgumentError("CQ depth must be > 0");
  uint32_t h = next_handle_++;
  CompletionQueue cq;
  cq.handle = h;
  cq.depth = depth;
  cqs_.emplace(h, std::move(cq));
  return h;
}

absl::StatusOr<uint32_t> Context::CreateSrq(uint32_t pd, uint32_t depth) {
  if (!HasPd(pd)) return absl::InvalidArgumentError("unknown PD");
  if (depth == 0) return absl::InvalidArgumentError("SRQ depth must be > 0");
  uint32_t h = next_handle_++;
  SharedReceiveQueue srq;
  srq.handle = h;
  srq.pd = pd;
  srq.depth = depth;
  srqs_.emplace(h, std::move(srq));
  return h;
}

absl::StatusOr<const MemoryRegion*> Context::RegMr(uint32_t pd, uint64_t base,
                                                   uint64_t length,
                                                   uint32_t access) {
  if (length == 0) return absl::InvalidArgumentError("MR length must be > 0");
  if (!HasPd(pd)) return absl::InvalidArgumentError("unknown PD");
  if (access & ~kAccessMask) {
    return absl::InvalidArgumentError("unsupported access flags");
  }
  if (base + length < base) {
    return absl::InvalidArgumentError("MR wraps the address space");
  }
  for (const auto& [mrn, mr] : mrs_) {
    if (base < mr.base + mr.length && mr.base < base + length) {
      return absl::InvalidArgumentError(absl::StrFormat(
          "MR [0x%x, +%u) overlaps MR %u", base, length, mrn));
    }
  }
  auto mrn = device_->AllocateMrn();
  if (!mrn.ok()) return mrn.status();
  MemoryRegion mr;
  mr.mrn = *mrn;
  mr.pd = pd;
  mr.lkey = device_->NextKey();
  mr.rkey = device_->NextKey();
  mr.base = base;
  mr.length = length;
  mr.access = access;
  mr.buffer.assign(length, 0);
  device_->mrns_.insert(*mrn);
  auto [it, _] = mrs_.emplace(*mrn, std::move(mr));
  return &it->second;
}

absl::StatusOr<QueuePair*> Context::CreateQp(const QpInitAttr& attr) {
  if (!HasPd(attr.pd)) return absl::InvalidArgumentError("unknown PD");
  if (!FindCq(attr.send_cq) || !FindCq(attr.recv_cq)) {
    return absl::InvalidArgumentError("unknown CQ handle");
  }
  if (attr.srq) {
    SharedReceiveQueue* srq = FindSrq(*attr.srq);
    if (!srq) return absl::InvalidArgumentError("unknown SRQ handle");
    if (srq->pd != attr.pd) {
      return absl::InvalidArgumentError("SRQ belongs to a different PD");
    }
  }
  if (attr.caps.max_send_wr == 0 || attr.max_inflight == 0) {
    return absl::InvalidArgumentError("queue depths must be > 0");
  }
  auto qpn = device_->AllocateQpn();
  if (!qpn.ok()) return qpn.status();
  auto qp = std::make_unique<QueuePair>();
  qp->qpn = *qpn;
  qp->pd = attr.pd;
  qp->ctx_id = id_;
  qp->send_cq = attr.send_cq;
  qp->recv_cq = attr.recv_cq;
  qp->srq = attr.srq;
  qp->caps = attr.caps;
  qp->max_inflight = attr.max_inflight;
  QueuePair* raw = qp.get();
  qps_.emplace(*qpn, std::move(qp));
  device_->qp_index_.emplace(*qpn, raw);
  return raw;
}

absl::Status Context::DestroyQp(uint32_t qpn) {
  if (!qps_.contains(qpn)) return absl::InvalidArgumentError("unknown QP");
  device_->qp_index_.erase(qpn);
  qps_.erase(qpn);
  return absl::OkStatus();
}

absl::Status Context::DeregMr(uint32_t mrn) {
  auto it = mrs_.find(mrn);
  if (it == mrs_.end()) return absl::InvalidArgumentError("unknown MR");
  device_->mrns_.erase(mrn);
  device_->ReleaseKey(it->second.lkey);
  device_->ReleaseKey(it->second.rkey);
  mrs_.erase(it);
  return absl::OkStatus();
}

// ---------------------------------------------------------------------------
// Context: state machine

void Context::SetState(QueuePair& qp, QpState to) {
  QpState from = qp.state;
  if (from == to) return;
  qp.state = to;
  device_->NotifyState(qp, from, to);
}

void Context::ResetQp(QueuePair& qp) {
  qp.sq.clear();
  qp.rq.clear();
  qp.req = RequesterState{};
  qp.rsp = ResponderState{};
  RetryState fresh;
  fresh.timeout_ticks = qp.retry.timeout_ticks;
  fresh.max_retries = qp.retry.max_retries;
  qp.retry = fresh;
  qp.partner.reset();
  qp.captured_resume.reset();
  SetState(qp, QpState::kReset);
}

absl::Status Context::ModifyQp(uint32_t qpn, QpState target,
                               const QpAttr& attr) {
  QueuePair* qp = FindQp(qpn);
  if (!qp) return absl::InvalidArgumentError(absl::StrCat("unknown QP ", qpn));
  const QpState cur = qp->state;
  auto illegal = [&] {
    return absl::FailedPreconditionError(
        absl::StrCat("illegal QP transition ", std::string(QpStateName(cur)), " -> ",
                     std::string(QpStateName(target))));
  };
  if (cur == QpState::kStopped) return illegal();
  if (target == QpState::kError) {
    EnterError(*qp);
    return absl::OkStatus();
  }
  if (target == QpState::kReset) {
    ResetQp(*qp);
    return absl::OkStatus();
  }
  for (auto psn : {attr.expected_psn, attr.next_psn}) {
    if (psn && *psn > kPsnMask) {
      return absl::InvalidArgumentError("PSN exceeds 24 bits");
    }
  }
  if (attr.mtu && (*attr.mtu < 64 || *attr.mtu > 65535)) {
    return absl::InvalidArgumentError("MTU out of range");
  }

  if (cur == QpState::kReset && target == QpState::kInit) {
    if (attr.mtu) qp->mtu = *attr.mtu;
  } else if (cur == QpState::kInit && target == QpState::kRtr) {
    if (!attr.partner || !attr.expected_psn) {
      return absl::InvalidArgumentError(
          "RTR requires partner address and expected PSN");
    }
    qp->partner = *attr.partner;
    qp->rsp.expected_psn = *attr.expected_psn;
    if (attr.mtu) qp->mtu = *attr.mtu;
  } else if (cur == QpState::kRtr && target == QpState::kRts) {
    if (!attr.next_psn) {
      return absl::InvalidArgumentError("RTS requires next PSN");
    }
    qp->req.next_psn = *attr.next_psn;
    qp->req.first_unacked_psn = *attr.next_psn;
    qp->req.sent_end_psn = *attr.next_psn;
    if (!qp->sq.empty()) qp->req.cur_wqe_seq = qp->sq.front().seq;
    else qp->req.cur_wqe_seq = qp->sq_next_seq;
  } else if (cur == QpState::kRts && target == QpState::kSqd) {
    qp->req.drain_limit_seq = qp->sq_next_seq;
  } else if (cur == QpState::kSqd && target == QpState::kRts) {
    // resumes starting new WQEs
  } else {
    return illegal();
  }
  if (attr.timeout_ticks) {
    if (*attr.timeout_ticks == 0) {
      return absl::InvalidArgumentError("timeout must be > 0");
    }
    qp->retry.timeout_ticks = *attr.timeout_ticks;
  }
  if (attr.max_retries) qp->retry.max_retries = *attr.max_retries;
  SetState(*qp, target);
  return absl::OkStatus();
}

void Context::Push(QueuePair& qp, uint32_t cq_handle,
                   const WorkCompletion& wc) {
  CompletionQueue* cq = FindCq(cq_handle);
  if (!cq) return;
  if (!cq->Push(wc) && qp.state != QpState::kError) EnterError(qp);
}

void Context::CompleteSend(QueuePair& qp, const SendWqe& wqe,
                           WcStatus status) {
  WorkCompletion wc;
  wc.wr_id = wqe.sr.wr_id;
  wc.status = status;
  wc.opcode = wqe.sr.opcode == WrOpcode::kSend ? WcOpcode::kSend
                                               : WcOpcode::kRdmaWrite;
  wc.byte_len = status == WcStatus::kSuccess ? wqe.sr.local.length : 0;
  wc.qpn = qp.qpn;
  Push(qp, qp.send_cq, wc);
}

void Context::CompleteRecv(QueuePair& qp, const ReceiveRequest& rr,
                           WcStatus status, uint32_t byte_len) {
  WorkCompletion wc;
  wc.wr_id = rr.wr_id;
  wc.status = status;
  wc.opcode = WcOpcode::kRecv;
  wc.byte_len = byte_len;
  wc.qpn = qp.qpn;
  Push(qp, qp.recv_cq, wc);
}

void Context::EnterError(QueuePair& qp) {
  if (qp.state == QpState::kError) return;
  SetState(qp, QpState::kError);
  std::deque<SendWqe> sq;
  sq.swap(qp.sq);
  for (const SendWqe& wqe : sq) CompleteSend(qp, wqe, WcStatus::kWrFlushErr);
  if (qp.rsp.cur_rr) {
    CompleteRecv(qp, *qp.rsp.cur_rr, WcStatus::kWrFlushErr, 0);
    qp.rsp.cur_rr.reset();
  }
  std::deque<ReceiveRequest> rq;
  rq.swap(qp.rq);
  for (const ReceiveRequest& rr : rq) {
    CompleteRecv(qp, rr, WcStatus::kWrFlushErr, 0);
  }
  qp.req.inflight.clear();
  qp.req.resume_pending = false;
  qp.retry.armed = false;
}

void Context::EnterSqe(QueuePair& qp) {
  SetState(qp, QpState::kSqe);
  std::deque<SendWqe> sq;
  sq.swap(qp.sq);
  for (const SendWqe& wqe : sq) CompleteSend(qp, wqe, WcStatus::kWrFlushErr);
  qp.req.inflight.clear();
  qp.req.cur_wqe_seq = qp.sq_next_seq;
  qp.req.cur_sr_offset = 0;
  qp.retry.armed = false;
}

std::optional<ReceiveRequest> Context::TakeReceive(QueuePair& qp) {
  if (qp.srq) {
    SharedReceiveQueue* srq = FindSrq(*qp.srq);
    if (!srq || srq->ring.empty()) return std::nullopt;
    ReceiveRequest rr = srq->ring.front();
    srq->ring.pop_front();
    ++srq->consumed;
    return rr;
  }
  if (qp.rq.empty()) return std::nullopt;
  ReceiveRequest rr = qp.rq.front();
  qp.rq.pop_front();
  return rr;
}

// ---------------------------------------------------------------------------
// Context: data path

absl::Status Context::ValidateLocal(uint32_t pd, const Sge& sge,
                                    uint32_t required_access) {
  if (sge.length == 0) return absl::OkStatus();
  MemoryRegion* mr = FindMrByLkey(pd, sge.lkey);
  if (!mr) {
    return absl::InvalidArgumentError(
        absl::StrFormat("lkey 0x%08x not registered in PD %u", sge.lkey, pd));
  }
  if (!mr->Contains(sge.addr, sge.length)) {
    return absl::InvalidArgumentError("buffer outside memory region");
  }
  if ((mr->access & required_access) != required_access) {
    return absl::InvalidArgumentError("memory region lacks access rights");
  }
  return absl::OkStatus();
}

absl::Status Context::PostSend(uint32_t qpn, const SendRequest& sr) {
  QueuePair* qp = FindQp(qpn);
  if (!qp) return absl::InvalidArgumentError(absl::StrCat("unknown QP ", qpn));
  if (qp->state == QpState::kReset || qp->state == QpState::kError) {
    return absl::FailedPreconditionError(absl::StrCat(
        "post_send on QP in state ", std::string(QpStateName(qp->state))));
  }
  if (qp->sq.size() >= qp->caps.max_send_wr) {
    return absl::ResourceExhaustedError("send queue full");
  }
  SendWqe wqe;
  wqe.sr = sr;
  if (!ValidateLocal(qp->pd, sr.local, 0).ok()) {
    CompleteSend(*qp, wqe, WcStatus::kLocLenErr);
    if (qp->state == QpState::kRts) EnterSqe(*qp);
    return absl::OkStatus();
  }
  wqe.seq = qp->sq_next_seq++;
  if (qp->state == QpState::kSqe) {
    CompleteSend(*qp, wqe, WcStatus::kWrFlushErr);
    qp->req.cur_wqe_seq = qp->sq_next_seq;
    return absl::OkStatus();
  }
  qp->sq.push_back(wqe);
  return absl::OkStatus();
}

absl::Status Context::PostRecv(uint32_t qpn, const ReceiveRequest& rr) {
  QueuePair* qp = FindQp(qpn);
  if (!qp) return absl::InvalidArgumentError(absl::StrCat("unknown QP ", qpn));
  if (qp->srq) {
    return absl::InvalidArgumentError("QP receives through an SRQ");
  }
  if (qp->state == QpState::kReset || qp->state == QpState::kError) {
    return absl::FailedPreconditionError(absl::StrCat(
        "post_recv on QP in state ", std::string(QpStateName(qp->state))));
  }
  if (auto s = ValidateLocal(qp->pd, rr.local, kAccessLocalWrite); !s.ok()) {
    return s;
  }
  if (qp->rq.size() >= qp->caps.max_recv_wr) {
    return absl::ResourceExhaustedError("receive queue full");
  }
  qp->rq.push_back(rr);
  return absl::OkStatus();
}

absl::Status Context::PostSrqRecv(uint32_t srq_handle,
                                  const ReceiveRequest& rr) {
  SharedReceiveQueue* srq = FindSrq(srq_handle);
  if (!srq) return absl::InvalidArgumentError("unknown SRQ handle");
  if (auto s = ValidateLocal(srq->pd, rr.local, kAccessLocalWrite); !s.ok()) {
    return s;
  }
  if (srq->ring.size() >= srq->depth) {
    return absl::ResourceExhaustedError("shared receive queue full");
  }
  srq->ring.push_back(rr);
  ++srq->produced;
  return absl::OkStatus();
}

absl::StatusOr<std::vector<WorkCompletion>> Context::PollCq(uint32_t cq_handle,
                                                            uint32_t max) {
  CompletionQueue* cq = FindCq(cq_handle);
  if (!cq) return absl::InvalidArgumentError("unknown CQ handle");
  std::vector<WorkCompletion> out;
  while (out.size() < max && !cq->ring.empty()) {
    out.push_back(cq->ring.front());
    cq->ring.pop_front();
    ++cq->consumed;
  }
  return out;
}

absl::Status Context::WriteMemory(uint64_t addr,
                                  std::span<const uint8_t> bytes) {
  for (auto& [mrn, mr] : mrs_) {
    if (mr.Contains(addr, bytes.size())) {
      std::copy(bytes.begin(), bytes.end(), mr.Slice(addr, bytes.size()).begin());
      return absl::OkStatus();
    }
  }
  return absl::InvalidArgumentError(
      absl::StrFormat("no memory region covers [0x%x, +%u)", addr, bytes.size()));
}

absl::StatusOr<std::vector<uint8_t>> Context::ReadMemory(uint64_t addr,
                                                         uint64_t len) const {
  for (const auto& [mrn, mr] : mrs_) {
    if (mr.Contains(addr, len)) {
      auto s = mr.Slice(addr, len);
      return std::vector<uint8_t>(s.begin(), s.end());
    }
  }
  return absl::InvalidArgumentError(
      absl::StrFormat("no memory region covers [0x%x, +%u)", addr, len));
}

// ---------------------------------------------------------------------------
// Context: lookups and restore hooks

QueuePair* Context::FindQp(uint32_t qpn) {
  auto it = qps_.find(qpn);
  return it == qps_.end() ? nullptr : it->second.get();
}

const QueuePair* Context::FindQp(uint32_t qpn) const {
  auto it = qps_.find(qpn);
  return it == qps_.end() ? nullptr : it->second.get();
}

MemoryRegion* Context::FindMr(uint32_t mrn) {
  auto it = mrs_.find(mrn);
  return it == mrs_.end() ? nullptr : &it->second;
}

MemoryRegion* Context::FindMrByLkey(uint32_t pd, uint32_t lkey) {
  for (auto& [mrn, mr] : mrs_) {
    if (mr.pd == pd && mr.lkey == lkey) return &mr;
  }
  return nullptr;
}

MemoryRegion* Context::FindMrByRkey(uint32_t pd, uint32_t rkey) {
  for (auto& [mrn, mr] : mrs_) {
    if (mr.pd == pd && mr.rkey == rkey) return &mr;
  }
  return nullptr;
}

CompletionQueue* Context::FindCq(uint32_t handle) {
  auto it = cqs_.find(handle);
  return it == cqs_.end() ? nullptr : &it->second;
}

SharedReceiveQueue* Context::FindSrq(uint32_t handle) {
  auto it = srqs_.find(handle);
  return it == srqs_.end() ? nullptr : &it->second;
}

namespace {
bool HandleTaken(uint32_t h, const auto&... maps) {
  return (maps.contains(h) || ...);
}
}  // namespace

absl::Status Context::AdoptPd(uint32_t handle) {
  if (handle == 0 || HandleTaken(handle, pds_, cqs_, srqs_)) {
    return absl::AlreadyExistsError(absl::StrCat("handle ", handle, " in use"));
  }
  pds_.emplace(handle, ProtectionDomain{handle});
  next_handle_ = std::max(next_handle_, handle + 1);
  return absl::OkStatus();
}

absl::Status Context::AdoptCq(CompletionQueue cq) {
  if (cq.handle == 0 || HandleTaken(cq.handle, pds_, cqs_, srqs_)) {
    return absl::AlreadyExistsError(
        absl::StrCat("handle ", cq.handle, " in use"));
  }
  if (cq.depth == 0 || cq.ring.size() > cq.depth) {
    return absl::InvalidArgumentError("CQ ring exceeds depth");
  }
  next_handle_ = std::max(next_handle_, cq.handle + 1);
  uint32_t h = cq.handle;
  cqs_.emplace(h, std::move(cq));
  return absl::OkStatus();
}

absl::Status Context::AdoptSrq(SharedReceiveQueue srq) {
  if (srq.handle == 0 || HandleTaken(srq.handle, pds_, cqs_, srqs_)) {
    return absl::AlreadyExistsError(
        absl::StrCat("handle ", srq.handle, " in use"));
  }
  if (!HasPd(srq.pd)) return absl::InvalidArgumentError("unknown PD");
  if (srq.depth == 0 || srq.ring.size() > srq.depth) {
    return absl::InvalidArgumentError("SRQ ring exceeds depth");
  }
  next_handle_ = std::max(next_handle_, srq.handle + 1);
  uint32_t h = srq.handle;
  srqs_.emplace(h, std::move(srq));
  return absl::OkStatus();
}

absl::Status Context::SetMrKeys(uint32_t mrn, uint32_t lkey, uint32_t rkey) {
  MemoryRegion* mr = FindMr(mrn);
  if (!mr) return absl::InvalidArgumentError(absl::StrCat("unknown MR ", mrn));
  if (lkey == 0 || rkey == 0) {
    return absl::InvalidArgumentError("protection keys must be nonzero");
  }
  for (const auto& [other_mrn, other] : mrs_) {
    if (other_mrn == mrn || other.pd != mr->pd) continue;
    if (other.lkey == lkey || other.rkey == rkey) {
      return absl::AlreadyExistsError("protection key in use within PD");
    }
  }
  device_->ReleaseKey(mr->lkey);
  device_->ReleaseKey(mr->rkey);
  mr->lkey = lkey;
  mr->rkey = rkey;
  device_->keys_.insert(lkey);
  device_->keys_.insert(rkey);
  return absl::OkStatus();
}

}  // namespace migrsim::verbs
