#ifndef MIGRSIM_SCENARIO_RESUME_CHECK_H_
#define MIGRSIM_SCENARIO_RESUME_CHECK_H_

#include <cstdint>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "transport/packet.h"
#include "verbs/types.h"

namespace migrsim::scenario {

// Snapshot for the resume handshake check: QP a sent one SEND message
// occupying PSNs first..last, got acks up to first_unacked - 1 and has
// emitted up to next_psn - 1; its partner b has received everything below
// receiver_expects. a is restored on a new node and must resynchronize.
struct ResumeSnapshot {
  uint32_t first_psn = 4;
  uint32_t first_unacked = 5;
  uint32_t next_psn = 8;
  uint32_t last_psn = 9;
  uint32_t receiver_expects = 7;
  uint32_t mtu = 1024;
  uint32_t latency_ticks = 3;

  // first <= first_unacked <= receiver_expects <= next_psn <= last.
  absl::Status Validate() const;
};

struct WirePacket {
  Tick tick = 0;
  std::string from;
  transport::Packet pkt;
  std::vector<uint8_t> bytes;
};

struct ResumeCheck {
  std::vector<WirePacket> actual;
  std::vector<transport::Packet> expected;
  bool match = false;
  // Message arrived intact at b and both sides completed it.
  bool completed = false;
  std::string diff;
  std::string trace;
};

// QPNs and node identities used by the check.
inline constexpr uint32_t kSnapshotQpnA = 0x30001;
inline constexpr uint64_t kSnapshotNewGidSeed = 2;
inline constexpr uint64_t kSnapshotPartnerGidSeed = 1;
inline constexpr uint64_t kSnapshotOldGidSeed = 9;
inline constexpr uint64_t kSnapshotWrId = 77;

// Byte `i` of the message a is sending.
inline uint8_t SnapshotMessageByte(uint64_t i) {
  return static_cast<uint8_t>(i * 7 + 3);
}

// Packet sequence derived by hand from the protocol rules: RESUME carrying
// first_unacked, b's ack of receiver_expects - 1, data from receiver_expects
// through last, b's final ack.
std::vector<transport::Packet> ExpectedResumeSequence(
    const ResumeSnapshot& s, uint32_t qpn_b);

std::string DescribePacket(const transport::Packet& p);

absl::StatusOr<ResumeCheck> RunResumeCheck(const ResumeSnapshot& s);

}  // namespace migrsim::scenario

#endif  // MIGRSIM_SCENARIO_RESUME_CHECK_H_
