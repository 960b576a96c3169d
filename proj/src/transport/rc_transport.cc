#include "transport/rc_transport.h"

#include <algorithm>

namespace migrsim::transport {

using verbs::Context;
using verbs::PsnAdd;
using verbs::PsnDiff;
using verbs::QpState;
using verbs::QueuePair;
using verbs::SendWqe;
using verbs::WcStatus;
using verbs::WrOpcode;

namespace {

constexpr uint32_t kMaxBackoff = 64;
// A MIDDLE packet at this interval asks for an ack.
constexpr uint32_t kAckEveryMiddle = 16;

bool SendsData(QpState s) { return s == QpState::kRts || s == QpState::kSqd; }

// States in which a restored QP keeps announcing itself.
bool Announces(QpState s) { return SendsData(s) || s == QpState::kSqe; }

bool Receives(QpState s) {
  return s == QpState::kRtr || s == QpState::kRts || s == QpState::kSqd ||
         s == QpState::kSqe || s == QpState::kPaused;
}

Opcode SegmentOpcode(WrOpcode op, uint32_t idx, uint32_t npkts) {
  const bool send = op == WrOpcode::kSend;
  if (npkts == 1) return send ? Opcode::kSendOnly : Opcode::kWriteOnly;
  if (idx == 0) return send ? Opcode::kSendFirst : Opcode::kWriteFirst;
  if (idx + 1 == npkts) return send ? Opcode::kSendLast : Opcode::kWriteLast;
  return send ? Opcode::kSendMiddle : Opcode::kWriteMiddle;
}

Packet MakeAck(uint32_t dest_qpn, uint32_t psn, Syndrome syn, uint32_t msn) {
  Packet p;
  p.opcode = Opcode::kAck;
  p.dest_qpn = dest_qpn;
  p.psn = psn & verbs::kPsnMask;
  p.aeth = Aeth{syn, msn & verbs::kPsnMask};
  return p;
}

void ArmTimer(QueuePair& qp, Tick now) {
  qp.retry.armed = true;
  qp.retry.deadline =
      now + static_cast<Tick>(qp.retry.timeout_ticks) * qp.retry.backoff;
}

void ResetRetry(QueuePair& qp, Tick now) {
  qp.retry.retries_used = 0;
  qp.retry.backoff = 1;
  if (qp.req.inflight.empty()) {
    qp.retry.armed = false;
  } else {
    ArmTimer(qp, now);
  }
}

// Positions the segmentation cursor on the packet numbered `psn`.
void SeekCursor(QueuePair& qp, uint32_t psn) {
  for (const SendWqe& wqe : qp.sq) {
    if (!wqe.started) {
      qp.req.cur_wqe_seq = wqe.seq;
      qp.req.cur_sr_offset = 0;
      return;
    }
    int32_t d = PsnDiff(psn, wqe.first_psn);
    if (d >= 0 && static_cast<uint32_t>(d) < wqe.npkts) {
      qp.req.cur_wqe_seq = wqe.seq;
      qp.req.cur_sr_offset = static_cast<uint64_t>(d) * qp.mtu;
      return;
    }
  }
  qp.req.cur_wqe_seq = qp.sq_next_seq;
  qp.req.cur_sr_offset = 0;
}

// psn lies in [first_unacked, sent_end).
bool Outstanding(const QueuePair& qp, uint32_t psn) {
  return PsnDiff(psn, qp.req.first_unacked_psn) >= 0 &&
         PsnDiff(psn, qp.req.sent_end_psn) < 0;
}

// Retires everything through `psn` and completes fully acknowledged WQEs.
// Returns false if the QP left a sending-capable state on the way.
bool RetireThrough(Context& ctx, QueuePair& qp, uint32_t psn) {
  auto& req = qp.req;
  while (!req.inflight.empty() && PsnDiff(req.inflight.front().psn, psn) <= 0) {
    req.inflight.pop_front();
  }
  req.first_unacked_psn = PsnAdd(psn, 1);
  if (PsnDiff(req.next_psn, req.first_unacked_psn) < 0) {
    // Acked beyond a rewind point: the partner already has those packets.
    req.next_psn = req.first_unacked_psn;
    SeekCursor(qp, req.next_psn);
  }
  while (!qp.sq.empty() && qp.sq.front().started &&
         PsnDiff(qp.sq.front().last_psn(), psn) <= 0) {
    SendWqe done = qp.sq.front();
    qp.sq.pop_front();
    ctx.CompleteSend(qp, done, WcStatus::kSuccess);
    if (qp.state == QpState::kError) return false;
  }
  return true;
}

SendWqe* WqeContaining(QueuePair& qp, uint32_t psn) {
  for (SendWqe& wqe : qp.sq) {
    if (!wqe.started) break;
    int32_t d = PsnDiff(psn, wqe.first_psn);
    if (d >= 0 && static_cast<uint32_t>(d) < wqe.npkts) return &wqe;
  }
  return nullptr;
}

// Completes the WQE containing `psn` with `status`, removing it.
void FailWqeAt(Context& ctx, QueuePair& qp, uint32_t psn, WcStatus status) {
  SendWqe* wqe = WqeContaining(qp, psn);
  if (!wqe && !qp.sq.empty()) wqe = &qp.sq.front();
  if (!wqe) return;
  SendWqe failed = *wqe;
  qp.sq.erase(qp.sq.begin() + static_cast<std::ptrdiff_t>(failed.seq -
                                                          qp.sq.front().seq));
  ctx.CompleteSend(qp, failed, status);
}

// Counts one retry; on exhaustion fails the oldest WQE and errors the QP.
bool CountRetry(Context& ctx, QueuePair& qp) {
  auto& r = qp.retry;
  if (r.max_retries == verbs::kInfiniteRetries) return true;
  if (r.retries_used < UINT32_MAX) ++r.retries_used;
  if (r.retries_used <= r.max_retries) return true;
  FailWqeAt(ctx, qp, qp.req.first_unacked_psn, WcStatus::kRetryExcErr);
  ctx.EnterError(qp);
  return false;
}

}  // namespace

void Rewind(QueuePair& qp, uint32_t psn) {
  auto& req = qp.req;
  req.next_psn = psn;
  while (!req.inflight.empty() && PsnDiff(req.inflight.back().psn, psn) >= 0) {
    req.inflight.pop_back();
  }
  SeekCursor(qp, psn);
}

bool RequesterReady(const QueuePair& qp) {
  if (!SendsData(qp.state) || qp.req.resume_pending || qp.req.awaiting_refill ||
      !qp.partner) {
    return false;
  }
  if (qp.req.inflight.size() >= qp.max_inflight) return false;
  if (qp.sq.empty()) return false;
  uint64_t seq = qp.req.cur_wqe_seq;
  if (seq < qp.sq.front().seq) return false;
  uint64_t idx = seq - qp.sq.front().seq;
  if (idx >= qp.sq.size()) return false;
  const SendWqe& wqe = qp.sq[idx];
  if (!wqe.started && qp.state == QpState::kSqd &&
      wqe.seq >= qp.req.drain_limit_seq) {
    return false;
  }
  return true;
}

void RequesterStep(Context& ctx, QueuePair& qp, Tick now, Outbox& out) {
  if (!RequesterReady(qp)) return;
  auto& req = qp.req;
  SendWqe& wqe = *qp.FindWqe(req.cur_wqe_seq);
  const uint64_t total = wqe.sr.local.length;
  if (!wqe.started) {
    wqe.started = true;
    wqe.first_psn = req.next_psn;
    wqe.npkts = PacketCount(total, qp.mtu);
  }
  const uint64_t offset = req.cur_sr_offset;
  const auto idx = static_cast<uint32_t>(offset / qp.mtu);
  const auto len =
      static_cast<uint32_t>(std::min<uint64_t>(qp.mtu, total - offset));

  Packet pkt;
  pkt.opcode = SegmentOpcode(wqe.sr.opcode, idx, wqe.npkts);
  pkt.dest_qpn = qp.partner->qpn;
  pkt.psn = req.next_psn;
  pkt.ack_requested = EndsMessage(pkt.opcode) ||
                      (IsMiddle(pkt.opcode) && idx % kAckEveryMiddle == 0);
  if (CarriesReth(pkt.opcode)) {
    pkt.reth = Reth{wqe.sr.remote_addr, wqe.sr.rkey,
                    static_cast<uint32_t>(total)};
  }
  if (len > 0) {
    const verbs::MemoryRegion* mr = ctx.FindMrByLkey(qp.pd, wqe.sr.local.lkey);
    if (mr && mr->Contains(wqe.sr.local.addr + offset, len)) {
      auto s = mr->Slice(wqe.sr.local.addr + offset, len);
      pkt.payload.assign(s.begin(), s.end());
    } else {
      pkt.payload.assign(len, 0);
    }
  }

  req.inflight.push_back({req.next_psn, wqe.seq, offset, len,
                          static_cast<uint8_t>(pkt.opcode), now});
  req.next_psn = PsnAdd(req.next_psn, 1);
  if (PsnDiff(req.next_psn, req.sent_end_psn) > 0) {
    req.sent_end_psn = req.next_psn;
  }
  if (idx + 1 >= wqe.npkts) {
    ++req.cur_wqe_seq;
    req.cur_sr_offset = 0;
  } else {
    req.cur_sr_offset = offset + len;
  }
  if (!qp.retry.armed) ArmTimer(qp, now);
  out.push_back({qp.partner->gid, std::move(pkt)});
}

void ResponderHandle(Context& ctx, QueuePair& qp, const Packet& pkt,
                     const verbs::Gid& src, uint32_t src_qpn, Outbox& out) {
  if (qp.state == QpState::kStopped) {
    out.push_back(
        {src, MakeAck(src_qpn, pkt.psn, Syndrome::kNakStopped, qp.rsp.msn)});
    return;
  }
  if (!Receives(qp.state)) return;
  auto& rsp = qp.rsp;
  const int32_t d = PsnDiff(pkt.psn, rsp.expected_psn);
  if (d < 0) {
    out.push_back({src, MakeAck(src_qpn, PsnAdd(rsp.expected_psn, -1),
                                Syndrome::kAckOk, rsp.msn)});
    return;
  }
  if (d > 0) {
    if (!rsp.nak_psn_sent) {
      rsp.nak_psn_sent = true;
      out.push_back({src, MakeAck(src_qpn, rsp.expected_psn,
                                  Syndrome::kNakPsnSeq, rsp.msn)});
    }
    return;
  }

  auto fatal = [&](Syndrome syn) {
    out.push_back({src, MakeAck(src_qpn, pkt.psn, syn, rsp.msn)});
    rsp.in_message = false;
    rsp.in_write = false;
    rsp.write.reset();
    ctx.EnterError(qp);
  };
  const auto len = static_cast<uint32_t>(pkt.payload.size());

  if (IsSend(pkt.opcode)) {
    if (StartsMessage(pkt.opcode)) {
      if (rsp.in_message) return fatal(Syndrome::kNakRemOp);
      if (!rsp.cur_rr) {
        std::optional<verbs::ReceiveRequest> rr = ctx.TakeReceive(qp);
        // No receive posted: drop without advancing, the requester retries.
        if (!rr) return;
        rsp.cur_rr = *rr;
      }
      rsp.cur_rr_offset = 0;
      rsp.in_message = true;
    } else if (!rsp.in_message || rsp.in_write || !rsp.cur_rr) {
      return fatal(Syndrome::kNakRemOp);
    }
    const verbs::ReceiveRequest& rr = *rsp.cur_rr;
    if (rsp.cur_rr_offset + len > rr.local.length) {
      verbs::ReceiveRequest failed = rr;
      rsp.cur_rr.reset();
      ctx.CompleteRecv(qp, failed, WcStatus::kLocLenErr, 0);
      return fatal(Syndrome::kNakRemOp);
    }
    if (len > 0) {
      verbs::MemoryRegion* mr = ctx.FindMrByLkey(qp.pd, rr.local.lkey);
      const uint64_t at = rr.local.addr + rsp.cur_rr_offset;
      if (!mr || !mr->Contains(at, len)) {
        verbs::ReceiveRequest failed = rr;
        rsp.cur_rr.reset();
        ctx.CompleteRecv(qp, failed, WcStatus::kLocLenErr, 0);
        return fatal(Syndrome::kNakRemOp);
      }
      std::copy(pkt.payload.begin(), pkt.payload.end(),
                mr->Slice(at, len).begin());
    }
    rsp.cur_rr_offset += len;
    rsp.expected_psn = PsnAdd(rsp.expected_psn, 1);
    rsp.nak_psn_sent = false;
    if (EndsMessage(pkt.opcode)) {
      verbs::ReceiveRequest done = *rsp.cur_rr;
      const auto bytes = static_cast<uint32_t>(rsp.cur_rr_offset);
      rsp.cur_rr.reset();
      rsp.cur_rr_offset = 0;
      rsp.in_message = false;
      rsp.msn = (rsp.msn + 1) & verbs::kPsnMask;
      ctx.CompleteRecv(qp, done, WcStatus::kSuccess, bytes);
      if (qp.state == QpState::kError) return;
    }
  } else {
    if (StartsMessage(pkt.opcode)) {
      if (rsp.in_message) return fatal(Syndrome::kNakRemOp);
      if (!pkt.reth) return fatal(Syndrome::kNakRemOp);
      verbs::MemoryRegion* mr = ctx.FindMrByRkey(qp.pd, pkt.reth->rkey);
      if (!mr || !(mr->access & verbs::kAccessRemoteWrite) ||
          !mr->Contains(pkt.reth->raddr, pkt.reth->dma_len)) {
        return fatal(Syndrome::kNakRemAccess);
      }
      rsp.write =
          verbs::WriteTarget{pkt.reth->rkey, pkt.reth->raddr, pkt.reth->dma_len};
      rsp.cur_rr_offset = 0;
      rsp.in_message = true;
      rsp.in_write = true;
    } else if (!rsp.in_message || !rsp.in_write || !rsp.write) {
      return fatal(Syndrome::kNakRemOp);
    }
    const verbs::WriteTarget& w = *rsp.write;
    verbs::MemoryRegion* mr = ctx.FindMrByRkey(qp.pd, w.rkey);
    const uint64_t at = w.raddr + rsp.cur_rr_offset;
    if (rsp.cur_rr_offset + len > w.length || !mr ||
        !(mr->access & verbs::kAccessRemoteWrite) || !mr->Contains(at, len)) {
      return fatal(Syndrome::kNakRemAccess);
    }
    std::copy(pkt.payload.begin(), pkt.payload.end(),
              mr->Slice(at, len).begin());
    rsp.cur_rr_offset += len;
    rsp.expected_psn = PsnAdd(rsp.expected_psn, 1);
    rsp.nak_psn_sent = false;
    if (EndsMessage(pkt.opcode)) {
      rsp.write.reset();
      rsp.cur_rr_offset = 0;
      rsp.in_message = false;
      rsp.in_write = false;
      rsp.msn = (rsp.msn + 1) & verbs::kPsnMask;
    }
  }
  if (pkt.ack_requested) {
    out.push_back({src, MakeAck(src_qpn, pkt.psn, Syndrome::kAckOk, rsp.msn)});
  }
}

void CompleterHandle(Context& ctx, QueuePair& qp, const Packet& ack,
                     const verbs::Gid& src, Tick now) {
  if (!ack.aeth) return;
  const QpState s = qp.state;
  auto& req = qp.req;
  const uint32_t p = ack.psn;
  if (s == QpState::kSqe && req.resume_pending &&
      ack.aeth->syndrome == Syndrome::kAckOk) {
    req.resume_pending = false;
    return;
  }
  if (!SendsData(s) && s != QpState::kPaused) return;

  switch (ack.aeth->syndrome) {
    case Syndrome::kAckOk: {
      if (req.resume_pending) {
        // The partner's answer to our resume: it holds everything through p.
        req.resume_pending = false;
        if (Outstanding(qp, p) && !RetireThrough(ctx, qp, p)) return;
        Rewind(qp, req.first_unacked_psn);
        qp.retry.retries_used = 0;
        qp.retry.backoff = 1;
        qp.retry.armed = false;
        return;
      }
      if (!Outstanding(qp, p)) return;
      if (!RetireThrough(ctx, qp, p)) return;
      ResetRetry(qp, now);
      return;
    }
    case Syndrome::kNakPsnSeq: {
      // The partner expects p: everything before it arrived.
      if (!Outstanding(qp, p)) return;
      if (p != req.first_unacked_psn &&
          !RetireThrough(ctx, qp, PsnAdd(p, -1))) {
        return;
      }
      Rewind(qp, p);
      if (!CountRetry(ctx, qp)) return;
      if (!req.inflight.empty() || RequesterReady(qp)) ArmTimer(qp, now);
      return;
    }
    case Syndrome::kNakStopped: {
      if (qp.partner && qp.partner->gid == src && s != QpState::kPaused) {
        qp.saved_state = s;
        ctx.SetState(qp, QpState::kPaused);
        qp.retry.frozen = true;
        qp.retry.armed = false;
      }
      // A NAK_STOPPED from a former partner location only means the packet
      // went to the wrong place; resend from the last acknowledged point.
      Rewind(qp, req.first_unacked_psn);
      return;
    }
    case Syndrome::kNakRemAccess:
    case Syndrome::kNakRemOp: {
      if (!Outstanding(qp, p)) return;
      if (p != req.first_unacked_psn &&
          !RetireThrough(ctx, qp, PsnAdd(p, -1))) {
        return;
      }
      FailWqeAt(ctx, qp, p, WcStatus::kRemAccessErr);
      if (qp.state != QpState::kError) ctx.EnterSqe(qp);
      return;
    }
  }
}

void HandleResume(Context& ctx, QueuePair& qp, const Packet& pkt,
                  const verbs::Gid& src, Outbox& out) {
  if (!pkt.resume) return;
  const ResumeInfo& ri = *pkt.resume;
  if (qp.state == QpState::kStopped) {
    out.push_back(
        {src, MakeAck(ri.src_qpn, pkt.psn, Syndrome::kNakStopped, qp.rsp.msn)});
    qp.captured_resume =
        verbs::CapturedResume{{ri.src_gid, ri.src_qpn}, pkt.psn};
    return;
  }
  if (!Receives(qp.state)) return;
  qp.partner = verbs::PartnerAddress{ri.src_gid, ri.src_qpn};
  if (qp.state == QpState::kPaused) {
    qp.retry.frozen = false;
    ctx.SetState(qp, qp.saved_state);
  }
  out.push_back({ri.src_gid, MakeAck(ri.src_qpn, PsnAdd(qp.rsp.expected_psn, -1),
                                     Syndrome::kAckOk, qp.rsp.msn)});
}

void SendResume(QueuePair& qp, const verbs::Gid& self, Tick now, Outbox& out) {
  if (!qp.partner) return;
  Packet p;
  p.opcode = Opcode::kResume;
  p.dest_qpn = qp.partner->qpn;
  p.psn = qp.req.first_unacked_psn;
  p.resume = ResumeInfo{self, qp.qpn, qp.req.first_unacked_psn};
  qp.req.resume_deadline = now + qp.retry.timeout_ticks;
  out.push_back({qp.partner->gid, std::move(p)});
}

void TimerStep(Context& ctx, QueuePair& qp, const verbs::Gid& self, Tick now,
               Outbox& out) {
  if (!Announces(qp.state) || qp.req.awaiting_refill) return;
  if (qp.req.resume_pending) {
    if (now >= qp.req.resume_deadline) SendResume(qp, self, now, out);
    return;
  }
  if (!SendsData(qp.state)) return;
  auto& r = qp.retry;
  if (!r.armed || now < r.deadline) return;
  if (qp.req.inflight.empty()) {
    r.armed = false;
    return;
  }
  if (!CountRetry(ctx, qp)) return;
  r.backoff = std::min(r.backoff * 2, kMaxBackoff);
  Rewind(qp, qp.req.first_unacked_psn);
  ArmTimer(qp, now);
}

std::optional<Tick> NextActivity(const QueuePair& qp, Tick now) {
  if (RequesterReady(qp)) return now + 1;
  if (!Announces(qp.state) || qp.req.awaiting_refill) return std::nullopt;
  if (qp.req.resume_pending) return std::max(qp.req.resume_deadline, now + 1);
  if (qp.retry.armed && SendsData(qp.state)) return std::max(qp.retry.deadline, now + 1);
  return std::nullopt;
}

}  // namespace migrsim::transport
