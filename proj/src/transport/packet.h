#ifndef MIGRSIM_TRANSPORT_PACKET_H_
#define MIGRSIM_TRANSPORT_PACKET_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "absl/status/statusor.h"
#include "netsim/trace.h"
#include "verbs/types.h"

namespace migrsim::transport {

enum class Opcode : uint8_t {
  kSendFirst = 0x00,
  kSendMiddle = 0x01,
  kSendLast = 0x02,
  kSendOnly = 0x03,
  kWriteFirst = 0x06,
  kWriteMiddle = 0x07,
  kWriteLast = 0x08,
  kWriteOnly = 0x0A,
  kAck = 0x11,
  kResume = 0x14,
};

enum class Syndrome : uint8_t {
  kAckOk = 0x00,
  kNakPsnSeq = 0x60,
  kNakRemAccess = 0x61,
  kNakRemOp = 0x62,
  kNakStopped = 0x6F,
};

inline constexpr uint8_t kWireVersion = 0x01;
inline constexpr uint8_t kFlagAckRequested = 0x01;
inline constexpr std::size_t kHeaderBytes = 14;
inline constexpr std::size_t kRethBytes = 16;
inline constexpr std::size_t kAethBytes = 5;
inline constexpr std::size_t kResumeBytes = 24;

struct Reth {
  uint64_t raddr = 0;
  uint32_t rkey = 0;
  uint32_t dma_len = 0;

  bool operator==(const Reth&) const = default;
};

struct Aeth {
  Syndrome syndrome = Syndrome::kAckOk;
  uint32_t msn = 0;  // 24 bits on the wire

  bool operator==(const Aeth&) const = default;
};

struct ResumeInfo {
  verbs::Gid src_gid;
  uint32_t src_qpn = 0;
  uint32_t first_unacked_psn = 0;

  bool operator==(const ResumeInfo&) const = default;
};

struct Packet {
  Opcode opcode = Opcode::kSendOnly;
  bool ack_requested = false;
  uint32_t dest_qpn = 0;
  uint32_t psn = 0;
  std::optional<Reth> reth;
  std::optional<Aeth> aeth;
  std::optional<ResumeInfo> resume;
  std::vector<uint8_t> payload;

  bool operator==(const Packet&) const = default;
};

std::optional<Opcode> OpcodeFromByte(uint8_t b);
std::string_view OpcodeName(Opcode op);
std::string_view SyndromeName(Syndrome s);

constexpr bool IsSend(Opcode op) { return static_cast<uint8_t>(op) <= 0x03; }
constexpr bool IsWrite(Opcode op) {
  auto v = static_cast<uint8_t>(op);
  return v >= 0x06 && v <= 0x0A;
}
constexpr bool IsData(Opcode op) { return IsSend(op) || IsWrite(op); }
constexpr bool IsFirst(Opcode op) {
  return op == Opcode::kSendFirst || op == Opcode::kWriteFirst;
}
constexpr bool IsMiddle(Opcode op) {
  return op == Opcode::kSendMiddle || op == Opcode::kWriteMiddle;
}
constexpr bool IsLast(Opcode op) {
  return op == Opcode::kSendLast || op == Opcode::kWriteLast;
}
constexpr bool IsOnly(Opcode op) {
  return op == Opcode::kSendOnly || op == Opcode::kWriteOnly;
}
constexpr bool EndsMessage(Opcode op) { return IsLast(op) || IsOnly(op); }
constexpr bool StartsMessage(Opcode op) { return IsFirst(op) || IsOnly(op); }
constexpr bool CarriesReth(Opcode op) {
  return op == Opcode::kWriteFirst || op == Opcode::kWriteOnly;
}

std::vector<uint8_t> Encode(const Packet& p);
absl::StatusOr<Packet> Decode(std::span<const uint8_t> bytes);

// Trace summary for a packet sent by `src_qpn`.
netsim::TraceInfo TraceOf(const Packet& p, uint32_t src_qpn);

}  // namespace migrsim::transport

#endif  // MIGRSIM_TRANSPORT_PACKET_H_
