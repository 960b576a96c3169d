#include "checkpoint/checkpoint.h"

#include <algorithm>

#include "absl/strings/str_format.h"
#include "transport/rc_transport.h"

namespace migrsim::checkpoint {

using verbs::Context;
using verbs::QpState;
using verbs::QueuePair;

QpRecord CaptureQp(const QueuePair& qp) {
  QpRecord r;
  r.qpn = qp.qpn;
  r.pd = qp.pd;
  r.state = qp.state == QpState::kStopped ? qp.stopped_from : qp.state;
  r.resume_state =
      r.state == QpState::kPaused ? qp.saved_state : QpState::kReset;
  r.partner = qp.partner;
  r.mtu = qp.mtu;
  r.send_cq = qp.send_cq;
  r.recv_cq = qp.recv_cq;
  r.srq = qp.srq;
  r.caps = qp.caps;
  r.max_inflight = qp.max_inflight;
  r.sq_next_seq = qp.sq_next_seq;
  r.sq.assign(qp.sq.begin(), qp.sq.end());
  r.rq.assign(qp.rq.begin(), qp.rq.end());
  r.next_psn = qp.req.next_psn;
  r.first_unacked_psn = qp.req.first_unacked_psn;
  r.sent_end_psn = qp.req.sent_end_psn;
  r.inflight.assign(qp.req.inflight.begin(), qp.req.inflight.end());
  r.cur_wqe_seq = qp.req.cur_wqe_seq;
  r.cur_sr_offset = qp.req.cur_sr_offset;
  r.drain_limit_seq = qp.req.drain_limit_seq;
  r.expected_psn = qp.rsp.expected_psn;
  r.msn = qp.rsp.msn;
  r.cur_rr_offset = qp.rsp.cur_rr_offset;
  r.in_message = qp.rsp.in_message;
  r.in_write = qp.rsp.in_write;
  r.cur_rr = qp.rsp.cur_rr;
  r.write = qp.rsp.write;
  r.nak_psn_sent = qp.rsp.nak_psn_sent;
  r.timeout_ticks = qp.retry.timeout_ticks;
  r.max_retries = qp.retry.max_retries;
  r.retries_used = qp.retry.retries_used;
  r.backoff = qp.retry.backoff;
  return r;
}

DumpImage CaptureImage(const Context& ctx, const verbs::Gid& gid) {
  DumpImage img;
  img.node_gid = gid;
  for (const auto& [h, pd] : ctx.pds()) img.pds.push_back({pd.handle});
  for (const auto& [mrn, mr] : ctx.mrs()) {
    img.mrs.push_back({mr.mrn, mr.pd, mr.lkey, mr.rkey, mr.base, mr.length,
                       mr.access, mr.buffer});
  }
  for (const auto& [h, cq] : ctx.cqs()) {
    img.cqs.push_back({cq.handle, cq.depth, cq.produced, cq.consumed,
                       {cq.ring.begin(), cq.ring.end()}});
  }
  for (const auto& [h, srq] : ctx.srqs()) {
    img.srqs.push_back({srq.handle, srq.pd, srq.depth, srq.produced,
                        srq.consumed, {srq.ring.begin(), srq.ring.end()}});
  }
  for (const auto& [qpn, qp] : ctx.qps()) img.qps.push_back(CaptureQp(*qp));
  return img;
}

absl::StatusOr<DumpImage> DumpContext(transport::Host& host, uint32_t ctx_id) {
  if (!host.migration_enabled()) {
    return absl::FailedPreconditionError(
        "migration support is disabled on this host");
  }
  Context* ctx = host.device().FindContext(ctx_id);
  if (!ctx) {
    return absl::InvalidArgumentError(
        absl::StrFormat("no context %u on %s", ctx_id, host.name()));
  }
  for (const auto& [qpn, qp] : ctx->qps()) {
    if (qp->state == QpState::kStopped) continue;
    qp->stopped_from = qp->state;
    qp->retry.armed = false;
    ctx->SetState(*qp, QpState::kStopped);
  }
  return CaptureImage(*ctx, host.device().address().gid);
}

namespace {

Context* FindCtx(transport::Host& host, uint32_t ctx_id) {
  return host.device().FindContext(ctx_id);
}

absl::StatusOr<uint32_t> CreatePd(Context& ctx, const PdRecord& rec) {
  if (auto s = ctx.AdoptPd(rec.handle); !s.ok()) return s;
  return rec.handle;
}

absl::StatusOr<uint32_t> CreateMr(Context& ctx, const MrRecord& rec) {
  if (rec.buffer.size() != rec.length) {
    return absl::InvalidArgumentError("MR buffer size differs from length");
  }
  if (rec.mrn == 0) return absl::InvalidArgumentError("MRN 0 is reserved");
  verbs::Device& dev = ctx.device();
  const auto prev = dev.mrn_cursor();
  if (auto s = dev.SetLastMrn(rec.mrn - 1); !s.ok()) return s;
  auto mr = ctx.RegMr(rec.pd, rec.base, rec.length, rec.access);
  dev.set_mrn_cursor(prev);
  if (!mr.ok()) return mr.status();
  const uint32_t got = (*mr)->mrn;
  if (got != rec.mrn) {
    (void)ctx.DeregMr(got);
    return absl::AlreadyExistsError(
        absl::StrFormat("MRN %u already in use on target", rec.mrn));
  }
  verbs::MemoryRegion* m = ctx.FindMr(got);
  std::copy(rec.buffer.begin(), rec.buffer.end(), m->buffer.begin());
  return got;
}

absl::StatusOr<uint32_t> CreateCq(Context& ctx, const CqRecord& rec) {
  verbs::CompletionQueue cq;
  cq.handle = rec.handle;
  cq.depth = rec.depth;
  cq.produced = rec.produced;
  cq.consumed = rec.consumed;
  cq.ring.assign(rec.ring.begin(), rec.ring.end());
  if (auto s = ctx.AdoptCq(std::move(cq)); !s.ok()) return s;
  return rec.handle;
}

absl::StatusOr<uint32_t> CreateSrq(Context& ctx, const SrqRecord& rec) {
  verbs::SharedReceiveQueue srq;
  srq.handle = rec.handle;
  srq.pd = rec.pd;
  srq.depth = rec.depth;
  srq.produced = rec.produced;
  srq.consumed = rec.consumed;
  srq.ring.assign(rec.ring.begin(), rec.ring.end());
  if (auto s = ctx.AdoptSrq(std::move(srq)); !s.ok()) return s;
  return rec.handle;
}

absl::StatusOr<uint32_t> CreateQp(Context& ctx, const QpRecord& rec) {
  if (rec.qpn == 0) return absl::InvalidArgumentError("QPN 0 is reserved");
  if (rec.mtu == 0) return absl::InvalidArgumentError("QP record has MTU 0");
  if (!rec.sq.empty() &&
      (rec.sq.front().seq + rec.sq.size() != rec.sq_next_seq)) {
    return absl::InvalidArgumentError("send queue sequence numbers broken");
  }
  verbs::Device& dev = ctx.device();
  verbs::QpInitAttr attr;
  attr.pd = rec.pd;
  attr.send_cq = rec.send_cq;
  attr.recv_cq = rec.recv_cq;
  attr.srq = rec.srq;
  attr.caps = rec.caps;
  attr.max_inflight = rec.max_inflight;
  const auto prev = dev.qpn_cursor();
  if (auto s = dev.SetLastQpn(rec.qpn - 1); !s.ok()) return s;
  auto qp = ctx.CreateQp(attr);
  dev.set_qpn_cursor(prev);
  if (!qp.ok()) return qp.status();
  QueuePair& q = **qp;
  if (q.qpn != rec.qpn) {
    (void)ctx.DestroyQp(q.qpn);
    return absl::AlreadyExistsError(
        absl::StrFormat("QPN 0x%x already in use on target", rec.qpn));
  }
  q.mtu = rec.mtu;
  q.sq_next_seq = rec.sq_next_seq;
  q.sq.assign(rec.sq.begin(), rec.sq.end());
  q.rq.assign(rec.rq.begin(), rec.rq.end());
  q.req.cur_wqe_seq = rec.cur_wqe_seq;
  return q.qpn;
}

absl::Status SetKeys(Context& ctx, const MrRecord& rec) {
  return ctx.SetMrKeys(rec.mrn, rec.lkey, rec.rkey);
}

void InstallResponder(QueuePair& qp, const QpRecord& rec) {
  qp.rsp.expected_psn = rec.expected_psn;
  qp.rsp.msn = rec.msn;
  qp.rsp.cur_rr_offset = rec.cur_rr_offset;
  qp.rsp.in_message = rec.in_message;
  qp.rsp.in_write = rec.in_write;
  qp.rsp.cur_rr = rec.cur_rr;
  qp.rsp.write = rec.write;
  qp.rsp.nak_psn_sent = rec.nak_psn_sent;
}

void InstallTransport(QueuePair& qp, const QpRecord& rec);

absl::Status Refill(transport::Host& host, Context& ctx, const QpRecord& rec) {
  QueuePair* qp = ctx.FindQp(rec.qpn);
  if (!qp) return absl::InvalidArgumentError("REFILL of unknown QP");
  if (qp->state != QpState::kRts) {
    return absl::FailedPreconditionError(absl::StrFormat(
        "REFILL requires RTS, QP 0x%x is %s", rec.qpn,
        std::string(verbs::QpStateName(qp->state))));
  }
  const int32_t window = verbs::PsnDiff(rec.next_psn, rec.first_unacked_psn);
  if (window < 0 || static_cast<std::size_t>(window) != rec.inflight.size() ||
      verbs::PsnDiff(rec.sent_end_psn, rec.next_psn) < 0) {
    return absl::InvalidArgumentError("inconsistent requester PSN window");
  }
  for (std::size_t i = 0; i < rec.inflight.size(); ++i) {
    if (rec.inflight[i].psn !=
        verbs::PsnAdd(rec.first_unacked_psn, static_cast<int64_t>(i))) {
      return absl::InvalidArgumentError("inflight PSNs not contiguous");
    }
  }
  if (!host.network()) {
    return absl::FailedPreconditionError("host is not attached to a network");
  }
  InstallTransport(*qp, rec);
  if (!qp->partner) return absl::OkStatus();
  qp->req.resume_pending = true;
  transport::Outbox out;
  transport::SendResume(*qp, host.gid(), host.network()->now(), out);
  host.Transmit(qp->qpn, out);
  return absl::OkStatus();
}

// Requester, responder and retry state as recorded; sends nothing.
void InstallTransport(QueuePair& qp, const QpRecord& rec) {
  auto& req = qp.req;
  req.awaiting_refill = false;
  req.next_psn = rec.next_psn;
  req.first_unacked_psn = rec.first_unacked_psn;
  req.sent_end_psn = rec.sent_end_psn;
  req.inflight.assign(rec.inflight.begin(), rec.inflight.end());
  req.cur_wqe_seq = rec.cur_wqe_seq;
  req.cur_sr_offset = rec.cur_sr_offset;
  req.drain_limit_seq = rec.drain_limit_seq;
  InstallResponder(qp, rec);
  qp.retry.timeout_ticks = rec.timeout_ticks;
  qp.retry.max_retries = rec.max_retries;
  qp.retry.retries_used = rec.retries_used;
  qp.retry.backoff = rec.backoff;
  qp.retry.armed = false;
  qp.retry.frozen = false;
}

template <typename Rec>
absl::StatusOr<Rec> Decode(std::span<const uint8_t> args);
template <>
absl::StatusOr<PdRecord> Decode(std::span<const uint8_t> a) {
  return DecodePd(a);
}
template <>
absl::StatusOr<MrRecord> Decode(std::span<const uint8_t> a) {
  return DecodeMr(a);
}
template <>
absl::StatusOr<CqRecord> Decode(std::span<const uint8_t> a) {
  return DecodeCq(a);
}
template <>
absl::StatusOr<SrqRecord> Decode(std::span<const uint8_t> a) {
  return DecodeSrq(a);
}
template <>
absl::StatusOr<QpRecord> Decode(std::span<const uint8_t> a) {
  return DecodeQp(a);
}

}  // namespace

absl::StatusOr<uint32_t> RestoreObject(transport::Host& host, uint32_t ctx_id,
                                       ObjectType type, RestoreCommand cmd,
                                       std::span<const uint8_t> args) {
  Context* ctx = FindCtx(host, ctx_id);
  if (!ctx) {
    return absl::InvalidArgumentError(
        absl::StrFormat("no context %u on %s", ctx_id, host.name()));
  }
  auto bad_cmd = absl::InvalidArgumentError("command not valid for object type");
  switch (type) {
    case ObjectType::kPd: {
      if (cmd != RestoreCommand::kCreate) return bad_cmd;
      auto rec = Decode<PdRecord>(args);
      if (!rec.ok()) return rec.status();
      return CreatePd(*ctx, *rec);
    }
    case ObjectType::kMr: {
      auto rec = Decode<MrRecord>(args);
      if (!rec.ok()) return rec.status();
      if (cmd == RestoreCommand::kCreate) return CreateMr(*ctx, *rec);
      if (cmd != RestoreCommand::kSetMrKeys) return bad_cmd;
      if (auto s = SetKeys(*ctx, *rec); !s.ok()) return s;
      return rec->mrn;
    }
    case ObjectType::kCq: {
      if (cmd != RestoreCommand::kCreate) return bad_cmd;
      auto rec = Decode<CqRecord>(args);
      if (!rec.ok()) return rec.status();
      return CreateCq(*ctx, *rec);
    }
    case ObjectType::kSrq: {
      if (cmd != RestoreCommand::kCreate) return bad_cmd;
      auto rec = Decode<SrqRecord>(args);
      if (!rec.ok()) return rec.status();
      return CreateSrq(*ctx, *rec);
    }
    case ObjectType::kQp: {
      auto rec = Decode<QpRecord>(args);
      if (!rec.ok()) return rec.status();
      if (cmd == RestoreCommand::kCreate) return CreateQp(*ctx, *rec);
      if (cmd != RestoreCommand::kRefill) return bad_cmd;
      if (auto s = Refill(host, *ctx, *rec); !s.ok()) return s;
      return rec->qpn;
    }
  }
  return absl::InvalidArgumentError("unknown object type");
}

std::vector<RestoreStep> PlanRestore(const DumpImage& image) {
  std::vector<RestoreStep> plan;
  auto add = [&](ObjectType t, std::size_t i, StepAction a) {
    plan.push_back({t, static_cast<uint32_t>(i), a});
  };
  for (std::size_t i = 0; i < image.pds.size(); ++i) {
    add(ObjectType::kPd, i, StepAction::kCreate);
  }
  for (std::size_t i = 0; i < image.mrs.size(); ++i) {
    add(ObjectType::kMr, i, StepAction::kCreate);
    add(ObjectType::kMr, i, StepAction::kSetMrKeys);
  }
  for (std::size_t i = 0; i < image.cqs.size(); ++i) {
    add(ObjectType::kCq, i, StepAction::kCreate);
  }
  for (std::size_t i = 0; i < image.srqs.size(); ++i) {
    add(ObjectType::kSrq, i, StepAction::kCreate);
  }
  for (std::size_t i = 0; i < image.qps.size(); ++i) {
    const QpRecord& rec = image.qps[i];
    const ObjectType t = ObjectType::kQp;
    add(t, i, StepAction::kCreate);
    switch (rec.state) {
      case QpState::kReset:
      case QpState::kStopped:
        break;
      case QpState::kError:
        add(t, i, StepAction::kToError);
        break;
      case QpState::kInit:
        add(t, i, StepAction::kToInit);
        break;
      case QpState::kRtr:
        add(t, i, StepAction::kToInit);
        add(t, i, StepAction::kToRtr);
        break;
      case QpState::kRts:
      case QpState::kSqd:
      case QpState::kSqe:
      case QpState::kPaused:
        add(t, i, StepAction::kToInit);
        add(t, i, StepAction::kToRtr);
        add(t, i, StepAction::kToRts);
        add(t, i, StepAction::kRefill);
        if (rec.state == QpState::kSqd ||
            (rec.state == QpState::kPaused &&
             rec.resume_state == QpState::kSqd)) {
          add(t, i, StepAction::kToSqd);
        }
        if (rec.state == QpState::kSqe) add(t, i, StepAction::kToSqe);
        if (rec.state == QpState::kPaused) add(t, i, StepAction::kToPaused);
        break;
    }
  }
  return plan;
}

absl::Status ApplyStep(transport::Host& host, uint32_t ctx_id,
                       const DumpImage& image, const RestoreStep& step) {
  Context* ctx = FindCtx(host, ctx_id);
  if (!ctx) {
    return absl::InvalidArgumentError(
        absl::StrFormat("no context %u on %s", ctx_id, host.name()));
  }
  switch (step.type) {
    case ObjectType::kPd:
      return CreatePd(*ctx, image.pds.at(step.index)).status();
    case ObjectType::kMr: {
      const MrRecord& rec = image.mrs.at(step.index);
      if (step.action == StepAction::kCreate) return CreateMr(*ctx, rec).status();
      return SetKeys(*ctx, rec);
    }
    case ObjectType::kCq:
      return CreateCq(*ctx, image.cqs.at(step.index)).status();
    case ObjectType::kSrq:
      return CreateSrq(*ctx, image.srqs.at(step.index)).status();
    case ObjectType::kQp:
      break;
  }
  const QpRecord& rec = image.qps.at(step.index);
  if (step.action == StepAction::kCreate) return CreateQp(*ctx, rec).status();
  QueuePair* qp = ctx->FindQp(rec.qpn);
  if (!qp) return absl::InvalidArgumentError("QP not created");
  verbs::QpAttr attr;
  switch (step.action) {
    case StepAction::kToInit:
      attr.mtu = rec.mtu;
      return ctx->ModifyQp(rec.qpn, QpState::kInit, attr);
    case StepAction::kToRtr: {
      attr.partner = rec.partner;
      attr.expected_psn = rec.expected_psn;
      attr.mtu = rec.mtu;
      if (auto s = ctx->ModifyQp(rec.qpn, QpState::kRtr, attr); !s.ok()) {
        return s;
      }
      if (rec.state == QpState::kRtr) InstallResponder(*qp, rec);
      return absl::OkStatus();
    }
    case StepAction::kToRts:
      attr.next_psn = rec.next_psn;
      attr.timeout_ticks = rec.timeout_ticks;
      attr.max_retries = rec.max_retries;
      if (auto s = ctx->ModifyQp(rec.qpn, QpState::kRts, attr); !s.ok()) {
        return s;
      }
      qp->req.awaiting_refill = true;
      return absl::OkStatus();
    case StepAction::kRefill:
      return Refill(host, *ctx, rec);
    case StepAction::kToSqd: {
      if (auto s = ctx->ModifyQp(rec.qpn, QpState::kSqd, attr); !s.ok()) {
        return s;
      }
      qp->req.drain_limit_seq = rec.drain_limit_seq;
      return absl::OkStatus();
    }
    case StepAction::kToSqe:
      ctx->EnterSqe(*qp);
      return absl::OkStatus();
    case StepAction::kToPaused:
      qp->saved_state = rec.resume_state;
      qp->retry.frozen = true;
      ctx->SetState(*qp, QpState::kPaused);
      return absl::OkStatus();
    case StepAction::kToError: {
      // An Error QP never talks again, but its attributes stay queryable.
      if (auto s = ctx->ModifyQp(rec.qpn, QpState::kError, attr); !s.ok()) {
        return s;
      }
      qp->partner = rec.partner;
      qp->mtu = rec.mtu;
      InstallTransport(*qp, rec);
      return absl::OkStatus();
    }
    default:
      return absl::InvalidArgumentError("step not valid for a QP");
  }
}

absl::Status RestoreImage(transport::Host& host, uint32_t ctx_id,
                          const DumpImage& image) {
  if (auto ctx = host.device().OpenContext(ctx_id); !ctx.ok()) {
    return ctx.status();
  }
  for (const RestoreStep& step : PlanRestore(image)) {
    if (auto s = ApplyStep(host, ctx_id, image, step); !s.ok()) return s;
  }
  return absl::OkStatus();
}

}  // namespace migrsim::checkpoint
