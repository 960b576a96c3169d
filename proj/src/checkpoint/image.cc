#include "checkpoint/image.h"

#include <algorithm>

#include "absl/strings/str_format.h"
#include "common/bytes.h"

namespace migrsim::checkpoint {

using verbs::QpState;

namespace {

constexpr std::size_t kWcBytes = 8 + 1 + 1 + 4 + 4;
constexpr std::size_t kRrBytes = 8 + 4 + 8 + 4;
constexpr std::size_t kWqeBytes = 8 + 1 + 4 + 8 + 4 + 4 + 8 + 8 + 1 + 4 + 4;
constexpr std::size_t kInflightBytes = 4 + 8 + 8 + 4 + 1 + 8;

void PutBool(ByteWriter& w, bool b) { w.U8(b ? 1 : 0); }

void PutRr(ByteWriter& w, const verbs::ReceiveRequest& rr) {
  w.U64(rr.wr_id);
  w.U32(rr.local.lkey);
  w.U64(rr.local.addr);
  w.U32(rr.local.length);
}

void PutWc(ByteWriter& w, const verbs::WorkCompletion& wc) {
  w.U64(wc.wr_id);
  w.U8(static_cast<uint8_t>(wc.status));
  w.U8(static_cast<uint8_t>(wc.opcode));
  w.U32(wc.byte_len);
  w.U32(wc.qpn);
}

void PutWqe(ByteWriter& w, const verbs::SendWqe& q) {
  w.U64(q.sr.wr_id);
  w.U8(static_cast<uint8_t>(q.sr.opcode));
  w.U32(q.sr.local.lkey);
  w.U64(q.sr.local.addr);
  w.U32(q.sr.local.length);
  w.U32(q.sr.rkey);
  w.U64(q.sr.remote_addr);
  w.U64(q.seq);
  PutBool(w, q.started);
  w.U32(q.first_psn);
  w.U32(q.npkts);
}

void PutInflight(ByteWriter& w, const verbs::InflightPacket& p) {
  w.U32(p.psn);
  w.U64(p.wqe_seq);
  w.U64(p.offset);
  w.U32(p.length);
  w.U8(p.opcode);
  w.U64(p.sent_at);
}

// Decoding helper that accumulates the first semantic error.
class Reader {
 public:
  explicit Reader(std::span<const uint8_t> body) : r_(body) {}

  uint8_t U8() { return r_.U8(); }
  uint16_t U16() { return r_.U16(); }
  uint32_t U32() { return r_.U32(); }
  uint64_t U64() { return r_.U64(); }

  bool Bool() {
    uint8_t v = r_.U8();
    if (v > 1) Fail("boolean byte out of range");
    return v == 1;
  }

  QpState State() {
    uint8_t v = r_.U8();
    if (v > static_cast<uint8_t>(QpState::kPaused)) Fail("unknown QP state");
    return static_cast<QpState>(v);
  }

  // Element count, checked against the bytes left so a corrupt count cannot
  // trigger a huge allocation.
  uint32_t Count(std::size_t elem_bytes) {
    uint32_t n = r_.U32();
    if (r_.ok() && static_cast<uint64_t>(n) * elem_bytes > r_.remaining()) {
      Fail("element count exceeds record length");
      return 0;
    }
    return n;
  }

  std::vector<uint8_t> Blob(uint64_t n) {
    if (n > r_.remaining()) {
      Fail("buffer length exceeds record length");
      return {};
    }
    auto s = r_.Bytes(static_cast<std::size_t>(n));
    return {s.begin(), s.end()};
  }

  verbs::Gid Gid() {
    verbs::Gid g;
    auto s = r_.Bytes(16);
    if (s.size() == 16) std::copy(s.begin(), s.end(), g.raw.begin());
    return g;
  }

  verbs::ReceiveRequest Rr() {
    verbs::ReceiveRequest rr;
    rr.wr_id = U64();
    rr.local.lkey = U32();
    rr.local.addr = U64();
    rr.local.length = U32();
    return rr;
  }

  verbs::WorkCompletion Wc() {
    verbs::WorkCompletion wc;
    wc.wr_id = U64();
    uint8_t status = U8();
    uint8_t opcode = U8();
    if (status > static_cast<uint8_t>(verbs::WcStatus::kWrFlushErr)) {
      Fail("unknown completion status");
    }
    if (opcode > static_cast<uint8_t>(verbs::WcOpcode::kRecv)) {
      Fail("unknown completion opcode");
    }
    wc.status = static_cast<verbs::WcStatus>(status);
    wc.opcode = static_cast<verbs::WcOpcode>(opcode);
    wc.byte_len = U32();
    wc.qpn = U32();
    return wc;
  }

  verbs::SendWqe Wqe() {
    verbs::SendWqe q;
    q.sr.wr_id = U64();
    uint8_t op = U8();
    if (op > static_cast<uint8_t>(verbs::WrOpcode::kRdmaWrite)) {
      Fail("unknown work request opcode");
    }
    q.sr.opcode = static_cast<verbs::WrOpcode>(op);
    q.sr.local.lkey = U32();
    q.sr.local.addr = U64();
    q.sr.local.length = U32();
    q.sr.rkey = U32();
    q.sr.remote_addr = U64();
    q.seq = U64();
    q.started = Bool();
    q.first_psn = U32();
    q.npkts = U32();
    return q;
  }

  verbs::InflightPacket Inflight() {
    verbs::InflightPacket p;
    p.psn = U32();
    p.wqe_seq = U64();
    p.offset = U64();
    p.length = U32();
    p.opcode = U8();
    p.sent_at = U64();
    return p;
  }

  void Fail(const char* why) {
    if (error_.empty()) error_ = why;
  }

  absl::Status Finish(const char* what) {
    if (!r_.ok()) {
      return absl::InvalidArgumentError(
          absl::StrFormat("%s record truncated", what));
    }
    if (!error_.empty()) {
      return absl::InvalidArgumentError(
          absl::StrFormat("%s record: %s", what, error_));
    }
    if (r_.remaining() != 0) {
      return absl::InvalidArgumentError(absl::StrFormat(
          "%s record has %u trailing bytes", what, r_.remaining()));
    }
    return absl::OkStatus();
  }

 private:
  ByteReader r_;
  std::string error_;
};

}  // namespace

std::vector<uint8_t> EncodeBody(const PdRecord& r) {
  std::vector<uint8_t> out;
  ByteWriter w(out);
  w.U32(r.handle);
  return out;
}

std::vector<uint8_t> EncodeBody(const MrRecord& r) {
  std::vector<uint8_t> out;
  out.reserve(40 + r.buffer.size());
  ByteWriter w(out);
  w.U32(r.mrn);
  w.U32(r.pd);
  w.U32(r.lkey);
  w.U32(r.rkey);
  w.U64(r.base);
  w.U64(r.length);
  w.U32(r.access);
  w.Bytes(r.buffer);
  return out;
}

std::vector<uint8_t> EncodeBody(const CqRecord& r) {
  std::vector<uint8_t> out;
  ByteWriter w(out);
  w.U32(r.handle);
  w.U32(r.depth);
  w.U64(r.produced);
  w.U64(r.consumed);
  w.U32(static_cast<uint32_t>(r.ring.size()));
  for (const auto& wc : r.ring) PutWc(w, wc);
  return out;
}

std::vector<uint8_t> EncodeBody(const SrqRecord& r) {
  std::vector<uint8_t> out;
  ByteWriter w(out);
  w.U32(r.handle);
  w.U32(r.pd);
  w.U32(r.depth);
  w.U64(r.produced);
  w.U64(r.consumed);
  w.U32(static_cast<uint32_t>(r.ring.size()));
  for (const auto& rr : r.ring) PutRr(w, rr);
  return out;
}

std::vector<uint8_t> EncodeBody(const QpRecord& r) {
  std::vector<uint8_t> out;
  ByteWriter w(out);
  w.U32(r.qpn);
  w.U32(r.pd);
  w.U8(static_cast<uint8_t>(r.state));
  w.U8(static_cast<uint8_t>(r.resume_state));
  PutBool(w, r.partner.has_value());
  if (r.partner) {
    w.Bytes(r.partner->gid.raw);
    w.U32(r.partner->qpn);
  }
  w.U32(r.mtu);
  w.U32(r.send_cq);
  w.U32(r.recv_cq);
  PutBool(w, r.srq.has_value());
  if (r.srq) w.U32(*r.srq);
  w.U32(r.caps.max_send_wr);
  w.U32(r.caps.max_recv_wr);
  w.U32(r.max_inflight);

  w.U64(r.sq_next_seq);
  w.U32(static_cast<uint32_t>(r.sq.size()));
  for (const auto& q : r.sq) PutWqe(w, q);
  w.U32(static_cast<uint32_t>(r.rq.size()));
  for (const auto& rr : r.rq) PutRr(w, rr);

  w.U32(r.next_psn);
  w.U32(r.first_unacked_psn);
  w.U32(r.sent_end_psn);
  w.U32(static_cast<uint32_t>(r.inflight.size()));
  for (const auto& p : r.inflight) PutInflight(w, p);
  w.U64(r.cur_wqe_seq);
  w.U64(r.cur_sr_offset);
  w.U64(r.drain_limit_seq);

  w.U32(r.expected_psn);
  w.U32(r.msn);
  w.U64(r.cur_rr_offset);
  PutBool(w, r.in_message);
  PutBool(w, r.in_write);
  PutBool(w, r.cur_rr.has_value());
  if (r.cur_rr) PutRr(w, *r.cur_rr);
  PutBool(w, r.write.has_value());
  if (r.write) {
    w.U32(r.write->rkey);
    w.U64(r.write->raddr);
    w.U32(r.write->length);
  }
  PutBool(w, r.nak_psn_sent);

  w.U32(r.timeout_ticks);
  w.U32(r.max_retries);
  w.U32(r.retries_used);
  w.U32(r.backoff);
  return out;
}

absl::StatusOr<PdRecord> DecodePd(std::span<const uint8_t> body) {
  Reader r(body);
  PdRecord rec;
  rec.handle = r.U32();
  if (auto s = r.Finish("PD"); !s.ok()) return s;
  return rec;
}

absl::StatusOr<MrRecord> DecodeMr(std::span<const uint8_t> body) {
  Reader r(body);
  MrRecord rec;
  rec.mrn = r.U32();
  rec.pd = r.U32();
  rec.lkey = r.U32();
  rec.rkey = r.U32();
  rec.base = r.U64();
  rec.length = r.U64();
  rec.access = r.U32();
  rec.buffer = r.Blob(rec.length);
  if (auto s = r.Finish("MR"); !s.ok()) return s;
  return rec;
}

absl::StatusOr<CqRecord> DecodeCq(std::span<const uint8_t> body) {
  Reader r(body);
  CqRecord rec;
  rec.handle = r.U32();
  rec.depth = r.U32();
  rec.produced = r.U64();
  rec.consumed = r.U64();
  uint32_t n = r.Count(kWcBytes);
  for (uint32_t i = 0; i < n; ++i) rec.ring.push_back(r.Wc());
  if (auto s = r.Finish("CQ"); !s.ok()) return s;
  return rec;
}

absl::StatusOr<SrqRecord> DecodeSrq(std::span<const uint8_t> body) {
  Reader r(body);
  SrqRecord rec;
  rec.handle = r.U32();
  rec.pd = r.U32();
  rec.depth = r.U32();
  rec.produced = r.U64();
  rec.consumed = r.U64();
  uint32_t n = r.Count(kRrBytes);
  for (uint32_t i = 0; i < n; ++i) rec.ring.push_back(r.Rr());
  if (auto s = r.Finish("SRQ"); !s.ok()) return s;
  return rec;
}

absl::StatusOr<QpRecord> DecodeQp(std::span<const uint8_t> body) {
  Reader r(body);
  QpRecord rec;
  rec.qpn = r.U32();
  rec.pd = r.U32();
  rec.state = r.State();
  rec.resume_state = r.State();
  if (r.Bool()) {
    verbs::PartnerAddress pa;
    pa.gid = r.Gid();
    pa.qpn = r.U32();
    rec.partner = pa;
  }
  rec.mtu = r.U32();
  rec.send_cq = r.U32();
  rec.recv_cq = r.U32();
  if (r.Bool()) rec.srq = r.U32();
  rec.caps.max_send_wr = r.U32();
  rec.caps.max_recv_wr = r.U32();
  rec.max_inflight = r.U32();

  rec.sq_next_seq = r.U64();
  uint32_t n = r.Count(kWqeBytes);
  for (uint32_t i = 0; i < n; ++i) rec.sq.push_back(r.Wqe());
  n = r.Count(kRrBytes);
  for (uint32_t i = 0; i < n; ++i) rec.rq.push_back(r.Rr());

  rec.next_psn = r.U32();
  rec.first_unacked_psn = r.U32();
  rec.sent_end_psn = r.U32();
  n = r.Count(kInflightBytes);
  for (uint32_t i = 0; i < n; ++i) rec.inflight.push_back(r.Inflight());
  rec.cur_wqe_seq = r.U64();
  rec.cur_sr_offset = r.U64();
  rec.drain_limit_seq = r.U64();

  rec.expected_psn = r.U32();
  rec.msn = r.U32();
  rec.cur_rr_offset = r.U64();
  rec.in_message = r.Bool();
  rec.in_write = r.Bool();
  if (r.Bool()) rec.cur_rr = r.Rr();
  if (r.Bool()) {
    verbs::WriteTarget wt;
    wt.rkey = r.U32();
    wt.raddr = r.U64();
    wt.length = r.U32();
    rec.write = wt;
  }
  rec.nak_psn_sent = r.Bool();

  rec.timeout_ticks = r.U32();
  rec.max_retries = r.U32();
  rec.retries_used = r.U32();
  rec.backoff = r.U32();
  if (auto s = r.Finish("QP"); !s.ok()) return s;
  return rec;
}

namespace {

template <typename Rec>
void PutRecord(ByteWriter& w, ObjectType type, const Rec& rec) {
  std::vector<uint8_t> body = EncodeBody(rec);
  w.U8(static_cast<uint8_t>(type));
  w.U32(static_cast<uint32_t>(body.size()));
  w.Bytes(body);
}

}  // namespace

std::vector<uint8_t> EncodeImage(const DumpImage& image) {
  std::vector<uint8_t> out;
  ByteWriter w(out);
  w.Bytes(kImageMagic);
  w.U16(kImageVersion);
  w.Bytes(image.node_gid.raw);
  w.U32(image.object_count());
  for (const auto& r : image.pds) PutRecord(w, ObjectType::kPd, r);
  for (const auto& r : image.mrs) PutRecord(w, ObjectType::kMr, r);
  for (const auto& r : image.cqs) PutRecord(w, ObjectType::kCq, r);
  for (const auto& r : image.srqs) PutRecord(w, ObjectType::kSrq, r);
  for (const auto& r : image.qps) PutRecord(w, ObjectType::kQp, r);
  return out;
}

absl::StatusOr<DumpImage> DecodeImage(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  auto magic = r.Bytes(4);
  if (magic.size() != 4 || !std::equal(magic.begin(), magic.end(), kImageMagic)) {
    return absl::InvalidArgumentError("bad image magic");
  }
  uint16_t version = r.U16();
  if (r.ok() && version != kImageVersion) {
    return absl::InvalidArgumentError(
        absl::StrFormat("unsupported image version %u", version));
  }
  DumpImage image;
  auto gid = r.Bytes(16);
  uint32_t count = r.U32();
  if (!r.ok()) return absl::InvalidArgumentError("truncated image header");
  std::copy(gid.begin(), gid.end(), image.node_gid.raw.begin());

  uint8_t last_type = 0;
  for (uint32_t i = 0; i < count; ++i) {
    uint8_t type = r.U8();
    uint32_t len = r.U32();
    if (!r.ok() || len > r.remaining()) {
      return absl::InvalidArgumentError(
          absl::StrFormat("record %u truncated", i));
    }
    auto body = r.Bytes(len);
    if (type < last_type) {
      return absl::InvalidArgumentError(
          absl::StrFormat("record %u out of dependency order", i));
    }
    last_type = type;
    switch (static_cast<ObjectType>(type)) {
      case ObjectType::kPd: {
        auto rec = DecodePd(body);
        if (!rec.ok()) return rec.status();
        image.pds.push_back(*rec);
        break;
      }
      case ObjectType::kMr: {
        auto rec = DecodeMr(body);
        if (!rec.ok()) return rec.status();
        image.mrs.push_back(std::move(*rec));
        break;
      }
      case ObjectType::kCq: {
        auto rec = DecodeCq(body);
        if (!rec.ok()) return rec.status();
        image.cqs.push_back(std::move(*rec));
        break;
      }
      case ObjectType::kSrq: {
        auto rec = DecodeSrq(body);
        if (!rec.ok()) return rec.status();
        image.srqs.push_back(std::move(*rec));
        break;
      }
      case ObjectType::kQp: {
        auto rec = DecodeQp(body);
        if (!rec.ok()) return rec.status();
        image.qps.push_back(std::move(*rec));
        break;
      }
      default:
        return absl::InvalidArgumentError(
            absl::StrFormat("record %u has unknown type %u", i, type));
    }
  }
  if (r.remaining() != 0) {
    return absl::InvalidArgumentError("trailing bytes after last record");
  }
  return image;
}

}  // namespace migrsim::checkpoint
