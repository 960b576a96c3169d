#include "scenario/resume_check.h"

#include <algorithm>
#include <memory>
#include <sstream>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "checkpoint/checkpoint.h"
#include "netsim/network.h"
#include "transport/host.h"

namespace migrsim::scenario {
namespace {

using transport::Opcode;
using transport::Packet;
using verbs::QpState;

constexpr uint64_t kBase = 0x1000'0000;
constexpr uint32_t kCtx = 1;

uint32_t MessageBytes(const ResumeSnapshot& s) {
  return (s.last_psn - s.first_psn + 1) * s.mtu;
}

std::vector<uint8_t> Message(const ResumeSnapshot& s) {
  std::vector<uint8_t> m(MessageBytes(s));
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = SnapshotMessageByte(i);
  return m;
}

Opcode DataOpcode(const ResumeSnapshot& s, uint32_t psn) {
  if (s.first_psn == s.last_psn) return Opcode::kSendOnly;
  if (psn == s.first_psn) return Opcode::kSendFirst;
  if (psn == s.last_psn) return Opcode::kSendLast;
  return Opcode::kSendMiddle;
}

// Captures every RoCE datagram handed to the network.
struct Recorder {
  netsim::Network* net = nullptr;
  std::map<verbs::Gid, std::string> names;
  std::vector<WirePacket> packets;

  bool operator()(const netsim::Datagram& d) {
    if (d.kind != netsim::DatagramKind::kRoce) return false;
    auto pkt = transport::Decode(d.bytes);
    WirePacket w;
    w.tick = net->now();
    w.from = names[d.src];
    if (pkt.ok()) w.pkt = *pkt;
    w.bytes = d.bytes;
    packets.push_back(std::move(w));
    return false;
  }
};

checkpoint::DumpImage SnapshotImage(const ResumeSnapshot& s,
                                    const verbs::Gid& partner_gid,
                                    uint32_t partner_qpn, uint32_t lkey) {
  checkpoint::DumpImage img;
  img.node_gid = verbs::Gid::FromSeed(kSnapshotOldGidSeed);
  img.pds.push_back({1});
  checkpoint::MrRecord mr;
  mr.mrn = 0x20001;
  mr.pd = 1;
  mr.lkey = lkey;
  mr.rkey = lkey ^ 0x5a5a5a5a;
  mr.base = kBase;
  mr.length = MessageBytes(s);
  mr.access = verbs::kAccessLocalWrite;
  mr.buffer = Message(s);
  img.mrs.push_back(mr);
  checkpoint::CqRecord cq;
  cq.handle = 2;
  cq.depth = 16;
  img.cqs.push_back(cq);

  checkpoint::QpRecord q;
  q.qpn = kSnapshotQpnA;
  q.pd = 1;
  q.state = QpState::kRts;
  q.partner = verbs::PartnerAddress{partner_gid, partner_qpn};
  q.mtu = s.mtu;
  q.send_cq = 2;
  q.recv_cq = 2;
  q.max_inflight = 64;
  q.sq_next_seq = 1;
  verbs::SendWqe wqe;
  wqe.sr.wr_id = kSnapshotWrId;
  wqe.sr.opcode = verbs::WrOpcode::kSend;
  wqe.sr.local = {lkey, kBase, MessageBytes(s)};
  wqe.seq = 0;
  wqe.started = true;
  wqe.first_psn = s.first_psn;
  wqe.npkts = s.last_psn - s.first_psn + 1;
  q.sq.push_back(wqe);
  q.next_psn = s.next_psn;
  q.first_unacked_psn = s.first_unacked;
  q.sent_end_psn = s.next_psn;
  for (uint32_t psn = s.first_unacked; psn < s.next_psn; ++psn) {
    verbs::InflightPacket p;
    p.psn = psn;
    p.wqe_seq = 0;
    p.offset = uint64_t{psn - s.first_psn} * s.mtu;
    p.length = s.mtu;
    p.opcode = static_cast<uint8_t>(DataOpcode(s, psn));
    q.inflight.push_back(p);
  }
  q.cur_wqe_seq = 0;
  q.cur_sr_offset = uint64_t{s.next_psn - s.first_psn} * s.mtu;
  q.timeout_ticks = 32;
  q.max_retries = 7;
  img.qps.push_back(q);
  return img;
}

}  // namespace

absl::Status ResumeSnapshot::Validate() const {
  if (!(first_psn <= first_unacked && first_unacked <= receiver_expects &&
        receiver_expects <= next_psn && next_psn <= last_psn)) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "need first <= first_unacked <= receiver_expects <= next <= last, got "
        "%u %u %u %u %u",
        first_psn, first_unacked, receiver_expects, next_psn, last_psn));
  }
  if (first_psn == 0) {
    return absl::InvalidArgumentError("first PSN must be positive");
  }
  // Longer messages would draw intermediate acks into the sequence.
  if (last_psn - first_psn >= 16) {
    return absl::InvalidArgumentError("message spans more than 16 packets");
  }
  if (mtu != 256 && mtu != 512 && mtu != 1024 && mtu != 2048 && mtu != 4096) {
    return absl::InvalidArgumentError("bad mtu");
  }
  if (latency_ticks == 0) {
    return absl::InvalidArgumentError("latency must be positive");
  }
  return absl::OkStatus();
}

std::vector<Packet> ExpectedResumeSequence(const ResumeSnapshot& s,
                                           uint32_t qpn_b) {
  std::vector<Packet> out;
  const auto msg = Message(s);

  Packet resume;
  resume.opcode = Opcode::kResume;
  resume.dest_qpn = qpn_b;
  resume.psn = s.first_unacked;
  resume.resume = transport::ResumeInfo{
      verbs::Gid::FromSeed(kSnapshotNewGidSeed), kSnapshotQpnA,
      s.first_unacked};
  out.push_back(resume);

  // b acknowledges the last packet it has.
  Packet ack;
  ack.opcode = Opcode::kAck;
  ack.dest_qpn = kSnapshotQpnA;
  ack.psn = s.receiver_expects - 1;
  ack.aeth = transport::Aeth{transport::Syndrome::kAckOk, 0};
  out.push_back(ack);

  // a restarts at the first PSN b lacks.
  for (uint32_t psn = s.receiver_expects; psn <= s.last_psn; ++psn) {
    Packet d;
    d.opcode = DataOpcode(s, psn);
    const uint32_t idx = psn - s.first_psn;
    d.ack_requested = d.opcode == Opcode::kSendLast ||
                      d.opcode == Opcode::kSendOnly ||
                      (d.opcode == Opcode::kSendMiddle && idx % 16 == 0);
    d.dest_qpn = qpn_b;
    d.psn = psn;
    d.payload.assign(msg.begin() + uint64_t{idx} * s.mtu,
                     msg.begin() + uint64_t{idx + 1} * s.mtu);
    out.push_back(d);
  }

  Packet fin = ack;
  fin.psn = s.last_psn;
  fin.aeth->msn = 1;
  out.push_back(fin);
  return out;
}

std::string DescribePacket(const Packet& p) {
  std::string name(transport::OpcodeName(p.opcode));
  if (p.aeth && p.aeth->syndrome != transport::Syndrome::kAckOk) {
    name = std::string(transport::SyndromeName(p.aeth->syndrome));
  }
  return absl::StrCat(name, "(", p.psn, ")");
}

absl::StatusOr<ResumeCheck> RunResumeCheck(const ResumeSnapshot& s) {
  if (auto st = s.Validate(); !st.ok()) return st;
  netsim::NetConfig cfg;
  cfg.latency_ticks = s.latency_ticks;
  cfg.max_ticks = 100'000;
  netsim::Network net(cfg);

  auto make_host = [&](std::string name, uint64_t seed, uint32_t index) {
    verbs::NodeAddress addr{verbs::Gid::FromSeed(seed),
                            static_cast<uint16_t>(index + 1), seed};
    return std::make_unique<transport::Host>(
        std::move(name), addr, verbs::DeviceConfig::ForNodeIndex(index, seed),
        true);
  };
  auto hb = make_host("N1", kSnapshotPartnerGidSeed, 0);
  auto ha = make_host("N2", kSnapshotNewGidSeed, 1);
  if (auto st = hb->AttachTo(net); !st.ok()) return st;
  if (auto st = ha->AttachTo(net); !st.ok()) return st;

  Recorder rec;
  rec.net = &net;
  rec.names[hb->gid()] = "N1";
  rec.names[ha->gid()] = "N2";
  std::vector<WirePacket>* captured = &rec.packets;
  net.set_drop_filter([&rec](const netsim::Datagram& d) { return rec(d); });

  // b: live QP that has received PSNs first..receiver_expects-1 of the
  // message into its posted buffer.
  auto bctx_or = hb->device().OpenContext(kCtx);
  if (!bctx_or.ok()) return bctx_or.status();
  verbs::Context& bctx = **bctx_or;
  auto bpd = bctx.AllocPd();
  if (!bpd.ok()) return bpd.status();
  auto bmr = bctx.RegMr(*bpd, kBase, MessageBytes(s), verbs::kAccessLocalWrite);
  if (!bmr.ok()) return bmr.status();
  const uint32_t b_lkey = (*bmr)->lkey;
  auto bcq = bctx.CreateCq(16);
  if (!bcq.ok()) return bcq.status();
  verbs::QpInitAttr battr;
  battr.pd = *bpd;
  battr.send_cq = *bcq;
  battr.recv_cq = *bcq;
  auto bqp_or = bctx.CreateQp(battr);
  if (!bqp_or.ok()) return bqp_or.status();
  verbs::QueuePair* bqp = *bqp_or;
  const uint32_t qpn_b = bqp->qpn;
  verbs::QpAttr a;
  a.mtu = s.mtu;
  if (auto st = bctx.ModifyQp(qpn_b, QpState::kInit, a); !st.ok()) return st;
  verbs::ReceiveRequest rr{5, {b_lkey, kBase, MessageBytes(s)}};
  if (auto st = bctx.PostRecv(qpn_b, rr); !st.ok()) return st;
  a = {};
  a.partner = verbs::PartnerAddress{verbs::Gid::FromSeed(kSnapshotOldGidSeed),
                                    kSnapshotQpnA};
  a.expected_psn = s.first_psn;
  if (auto st = bctx.ModifyQp(qpn_b, QpState::kRtr, a); !st.ok()) return st;
  a = {};
  a.next_psn = 0x100;
  if (auto st = bctx.ModifyQp(qpn_b, QpState::kRts, a); !st.ok()) return st;
  const auto msg = Message(s);
  const uint64_t have = uint64_t{s.receiver_expects - s.first_psn} * s.mtu;
  if (have > 0) {
    if (auto st = bctx.WriteMemory(
            kBase, std::span<const uint8_t>(msg).subspan(0, have));
        !st.ok()) {
      return st;
    }
    bqp->rsp.cur_rr = bqp->rq.front();
    bqp->rq.pop_front();
    bqp->rsp.in_message = true;
    bqp->rsp.cur_rr_offset = have;
  }
  bqp->rsp.expected_psn = s.receiver_expects;

  // a: restored from its checkpoint records on the new node.
  const uint32_t a_lkey = 0x00a11ce5;
  auto img = SnapshotImage(s, hb->gid(), qpn_b, a_lkey);
  if (auto st = checkpoint::RestoreImage(*ha, kCtx, img); !st.ok()) return st;

  net.RunToQuiescence();

  ResumeCheck out;
  out.actual = std::move(*captured);
  out.expected = ExpectedResumeSequence(s, qpn_b);
  std::ostringstream trace;
  net.trace().Write(trace);
  out.trace = trace.str();

  std::ostringstream diff;
  bool match = out.actual.size() == out.expected.size();
  const std::size_t n = std::max(out.actual.size(), out.expected.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::string want = i < out.expected.size()
                           ? DescribePacket(out.expected[i])
                           : std::string("-");
    std::string got =
        i < out.actual.size() ? DescribePacket(out.actual[i].pkt) : "-";
    bool same = i < out.expected.size() && i < out.actual.size() &&
                transport::Encode(out.expected[i]) == out.actual[i].bytes;
    match &= same;
    diff << (same ? "  " : "! ") << i << ": expected " << want << ", actual "
         << got << "\n";
  }
  out.match = match;
  out.diff = diff.str();

  // Both ends must have completed the message, with b's buffer intact.
  bool a_ok = false;
  bool b_ok = false;
  if (verbs::Context* actx = ha->device().FindContext(kCtx)) {
    auto wcs = actx->PollCq(2, 16);
    a_ok = wcs.ok() && wcs->size() == 1 && (*wcs)[0].wr_id == kSnapshotWrId &&
           (*wcs)[0].status == verbs::WcStatus::kSuccess;
  }
  auto bwcs = bctx.PollCq(*bcq, 16);
  if (bwcs.ok() && bwcs->size() == 1 &&
      (*bwcs)[0].status == verbs::WcStatus::kSuccess &&
      (*bwcs)[0].byte_len == MessageBytes(s)) {
    auto mem = bctx.ReadMemory(kBase, MessageBytes(s));
    b_ok = mem.ok() && *mem == msg;
  }
  out.completed = a_ok && b_ok;
  return out;
}

}  // namespace migrsim::scenario
