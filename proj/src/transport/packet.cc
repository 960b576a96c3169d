#include "transport/packet.h"

#include "absl/strings/str_format.h"
#include "common/bytes.h"

namespace migrsim::transport {

std::optional<Opcode> OpcodeFromByte(uint8_t b) {
  switch (b) {
    case 0x00:
    case 0x01:
    case 0x02:
    case 0x03:
    case 0x06:
    case 0x07:
    case 0x08:
    case 0x0A:
    case 0x11:
    case 0x14:
      return static_cast<Opcode>(b);
    default:
      return std::nullopt;
  }
}

std::string_view OpcodeName(Opcode op) {
  switch (op) {
    case Opcode::kSendFirst:
      return "SEND_FIRST";
    case Opcode::kSendMiddle:
      return "SEND_MIDDLE";
    case Opcode::kSendLast:
      return "SEND_LAST";
    case Opcode::kSendOnly:
      return "SEND_ONLY";
    case Opcode::kWriteFirst:
      return "WRITE_FIRST";
    case Opcode::kWriteMiddle:
      return "WRITE_MIDDLE";
    case Opcode::kWriteLast:
      return "WRITE_LAST";
    case Opcode::kWriteOnly:
      return "WRITE_ONLY";
    case Opcode::kAck:
      return "ACK";
    case Opcode::kResume:
      return "RESUME";
  }
  return "UNKNOWN";
}

std::string_view SyndromeName(Syndrome s) {
  switch (s) {
    case Syndrome::kAckOk:
      return "ACK_OK";
    case Syndrome::kNakPsnSeq:
      return "NAK_PSN_SEQ";
    case Syndrome::kNakRemAccess:
      return "NAK_REM_ACCESS";
    case Syndrome::kNakRemOp:
      return "NAK_REM_OP";
    case Syndrome::kNakStopped:
      return "NAK_STOPPED";
  }
  return "UNKNOWN";
}

namespace {

bool KnownSyndrome(uint8_t s) {
  return s == 0x00 || s == 0x60 || s == 0x61 || s == 0x62 || s == 0x6F;
}

}  // namespace

std::vector<uint8_t> Encode(const Packet& p) {
  std::vector<uint8_t> out;
  out.reserve(kHeaderBytes + kResumeBytes + p.payload.size());
  ByteWriter w(out);
  w.U8(kWireVersion);
  w.U8(static_cast<uint8_t>(p.opcode));
  w.U8(p.ack_requested ? kFlagAckRequested : 0);
  w.U8(0);
  w.U32(p.dest_qpn & verbs::kPsnMask);
  w.U32(p.psn & verbs::kPsnMask);
  w.U16(static_cast<uint16_t>(p.payload.size()));
  if (CarriesReth(p.opcode)) {
    Reth r = p.reth.value_or(Reth{});
    w.U64(r.raddr);
    w.U32(r.rkey);
    w.U32(r.dma_len);
  }
  if (p.opcode == Opcode::kAck) {
    Aeth a = p.aeth.value_or(Aeth{});
    w.U8(static_cast<uint8_t>(a.syndrome));
    w.U32(a.msn & verbs::kPsnMask);
  }
  if (p.opcode == Opcode::kResume) {
    ResumeInfo r = p.resume.value_or(ResumeInfo{});
    w.Bytes(r.src_gid.raw);
    w.U32(r.src_qpn);
    w.U32(r.first_unacked_psn);
  }
  w.Bytes(p.payload);
  return out;
}

absl::StatusOr<Packet> Decode(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  const uint8_t version = r.U8();
  const uint8_t op_byte = r.U8();
  const uint8_t flags = r.U8();
  r.U8();  // reserved
  const uint32_t dest_qpn = r.U32();
  const uint32_t psn = r.U32();
  const uint16_t payload_len = r.U16();
  if (!r.ok()) return absl::InvalidArgumentError("truncated header");
  if (version != kWireVersion) {
    return absl::InvalidArgumentError(
        absl::StrFormat("unsupported version %u", version));
  }
  std::optional<Opcode> op = OpcodeFromByte(op_byte);
  if (!op) {
    return absl::InvalidArgumentError(
        absl::StrFormat("unknown opcode 0x%02x", op_byte));
  }
  if (dest_qpn > verbs::kPsnMask || psn > verbs::kPsnMask) {
    return absl::InvalidArgumentError("QPN or PSN exceeds 24 bits");
  }
  Packet p;
  p.opcode = *op;
  p.ack_requested = flags & kFlagAckRequested;
  p.dest_qpn = dest_qpn;
  p.psn = psn;
  if (CarriesReth(*op)) {
    Reth reth;
    reth.raddr = r.U64();
    reth.rkey = r.U32();
    reth.dma_len = r.U32();
    p.reth = reth;
  }
  if (*op == Opcode::kAck) {
    uint8_t syn = r.U8();
    uint32_t msn = r.U32();
    if (r.ok() && !KnownSyndrome(syn)) {
      return absl::InvalidArgumentError(
          absl::StrFormat("unknown syndrome 0x%02x", syn));
    }
    p.aeth = Aeth{static_cast<Syndrome>(syn), msn};
  }
  if (*op == Opcode::kResume) {
    ResumeInfo ri;
    auto gid = r.Bytes(16);
    if (gid.size() == 16) std::copy(gid.begin(), gid.end(), ri.src_gid.raw.begin());
    ri.src_qpn = r.U32();
    ri.first_unacked_psn = r.U32();
    p.resume = ri;
  }
  if (!r.ok()) return absl::InvalidArgumentError("truncated extension header");
  if (!IsData(*op) && payload_len != 0) {
    return absl::InvalidArgumentError("control packet carries payload");
  }
  if (r.remaining() != payload_len) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "payload_len %u but %u bytes follow", payload_len, r.remaining()));
  }
  auto body = r.Bytes(payload_len);
  p.payload.assign(body.begin(), body.end());
  return p;
}

netsim::TraceInfo TraceOf(const Packet& p, uint32_t src_qpn) {
  netsim::TraceInfo t;
  t.src_qpn = src_qpn;
  t.dst_qpn = p.dest_qpn;
  t.op = OpcodeName(p.opcode);
  t.psn = p.psn;
  if (p.aeth) t.syndrome = static_cast<uint8_t>(p.aeth->syndrome);
  t.len = static_cast<uint32_t>(p.payload.size());
  return t;
}

}  // namespace migrsim::transport
