#ifndef MIGRSIM_VERBS_TYPES_H_
#define MIGRSIM_VERBS_TYPES_H_

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace migrsim {

// Virtual time. One tick is nominally one microsecond; reported values are
// simulated time only.
using Tick = uint64_t;

namespace verbs {

// 128-bit routable address.
struct Gid {
  std::array<uint8_t, 16> raw{};

  auto operator<=>(const Gid&) const = default;
  bool operator==(const Gid&) const = default;

  std::string ToString() const;
  // Deterministic link-local style GID derived from a node seed.
  static Gid FromSeed(uint64_t seed);
};

struct NodeAddress {
  Gid gid;
  uint16_t lid = 0;
  uint64_t guid = 0;

  bool operator==(const NodeAddress&) const = default;
};

// Where a connected QP sends its traffic.
struct PartnerAddress {
  Gid gid;
  uint32_t qpn = 0;

  bool operator==(const PartnerAddress&) const = default;
};

enum class QpState : uint8_t {
  kReset = 0,
  kInit = 1,
  kRtr = 2,
  kRts = 3,
  kSqd = 4,
  kSqe = 5,
  kError = 6,
  kStopped = 7,
  kPaused = 8,
};

std::string_view QpStateName(QpState s);
std::optional<QpState> QpStateFromName(std::string_view name);

enum class WrOpcode : uint8_t { kSend = 0, kRdmaWrite = 1 };

enum class WcOpcode : uint8_t { kSend = 0, kRdmaWrite = 1, kRecv = 2 };

enum class WcStatus : uint8_t {
  kSuccess = 0,
  kLocLenErr = 1,
  kRemAccessErr = 2,
  kRetryExcErr = 3,
  kWrFlushErr = 4,
};

std::string_view WcStatusName(WcStatus s);

enum Access : uint32_t {
  kAccessLocalWrite = 1u << 0,
  kAccessRemoteWrite = 1u << 1,
};
constexpr uint32_t kAccessMask = kAccessLocalWrite | kAccessRemoteWrite;

struct Sge {
  uint32_t lkey = 0;
  uint64_t addr = 0;
  uint32_t length = 0;

  bool operator==(const Sge&) const = default;
};

struct SendRequest {
  uint64_t wr_id = 0;
  WrOpcode opcode = WrOpcode::kSend;
  Sge local;
  // RDMA_WRITE target.
  uint32_t rkey = 0;
  uint64_t remote_addr = 0;

  bool operator==(const SendRequest&) const = default;
};

struct ReceiveRequest {
  uint64_t wr_id = 0;
  Sge local;  // local.length is the buffer capacity

  bool operator==(const ReceiveRequest&) const = default;
};

struct WorkCompletion {
  uint64_t wr_id = 0;
  WcStatus status = WcStatus::kSuccess;
  WcOpcode opcode = WcOpcode::kSend;
  uint32_t byte_len = 0;
  uint32_t qpn = 0;

  bool operator==(const WorkCompletion&) const = default;
};

// 24-bit packet sequence numbers compared over a 2^23 half window.
constexpr uint32_t kPsnMask = 0xFFFFFF;
constexpr uint32_t kPsnHalfWindow = 1u << 23;

constexpr uint32_t PsnAdd(uint32_t psn, int64_t delta) {
  return static_cast<uint32_t>(static_cast<int64_t>(psn) + delta) & kPsnMask;
}

// Signed distance a - b in the modular PSN space.
constexpr int32_t PsnDiff(uint32_t a, uint32_t b) {
  uint32_t d = (a - b) & kPsnMask;
  return d >= kPsnHalfWindow ? static_cast<int32_t>(d) - (1 << 24)
                             : static_cast<int32_t>(d);
}

constexpr bool PsnLess(uint32_t a, uint32_t b) { return PsnDiff(a, b) < 0; }

}  // namespace verbs
}  // namespace migrsim

#endif  // MIGRSIM_VERBS_TYPES_H_
