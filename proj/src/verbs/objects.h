#ifndef MIGRSIM_VERBS_OBJECTS_H_
#define MIGRSIM_VERBS_OBJECTS_H_

#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "verbs/types.h"

namespace migrsim::verbs {

struct ProtectionDomain {
  uint32_t handle = 0;
};

struct MemoryRegion {
  uint32_t mrn = 0;
  uint32_t pd = 0;
  uint32_t lkey = 0;
  uint32_t rkey = 0;
  uint64_t base = 0;
  uint64_t length = 0;
  uint32_t access = 0;
  std::vector<uint8_t> buffer;

  bool Contains(uint64_t addr, uint64_t len) const {
    return addr >= base && len <= length && addr - base <= length - len;
  }
  std::span<uint8_t> Slice(uint64_t addr, uint64_t len) {
    return std::span<uint8_t>(buffer).subspan(addr - base, len);
  }
  std::span<const uint8_t> Slice(uint64_t addr, uint64_t len) const {
    return std::span<const uint8_t>(buffer).subspan(addr - base, len);
  }
};

// Ring of completions. `produced`/`consumed` are the free-running head and
// tail indices; occupancy is their difference and never exceeds depth.
struct CompletionQueue {
  uint32_t handle = 0;
  uint32_t depth = 0;
  std::deque<WorkCompletion> ring;
  uint64_t produced = 0;
  uint64_t consumed = 0;
  uint64_t overflows = 0;

  bool Push(const WorkCompletion& wc) {
    if (ring.size() >= depth) {
      ++overflows;
      return false;
    }
    ring.push_back(wc);
    ++produced;
    return true;
  }
};

struct SharedReceiveQueue {
  uint32_t handle = 0;
  uint32_t pd = 0;
  uint32_t depth = 0;
  std::deque<ReceiveRequest> ring;
  uint64_t produced = 0;
  uint64_t consumed = 0;
};

struct QpCaps {
  uint32_t max_send_wr = 128;
  uint32_t max_recv_wr = 128;

  bool operator==(const QpCaps&) const = default;
};

// A posted send request together with its segmentation bookkeeping. The PSN
// range is assigned when the requester emits the first packet.
struct SendWqe {
  SendRequest sr;
  uint64_t seq = 0;
  bool started = false;
  uint32_t first_psn = 0;
  uint32_t npkts = 0;

  uint32_t last_psn() const { return PsnAdd(first_psn, npkts - 1); }
  bool operator==(const SendWqe&) const = default;
};

// One sent-but-unacknowledged packet.
struct InflightPacket {
  uint32_t psn = 0;
  uint64_t wqe_seq = 0;
  uint64_t offset = 0;
  uint32_t length = 0;
  uint8_t opcode = 0;
  Tick sent_at = 0;

  bool operator==(const InflightPacket&) const = default;
};

struct RequesterState {
  uint32_t next_psn = 0;
  uint32_t first_unacked_psn = 0;
  // One past the highest PSN ever emitted; acks up to here are honoured even
  // after a go-back-N rewind.
  uint32_t sent_end_psn = 0;
  std::deque<InflightPacket> inflight;
  uint64_t cur_wqe_seq = 0;
  uint64_t cur_sr_offset = 0;
  // SQD: WQEs with seq >= this are not started until the QP returns to RTS.
  uint64_t drain_limit_seq = 0;
  // Set by REFILL; data transmission waits for the partner's resume ack.
  bool resume_pending = false;
  Tick resume_deadline = 0;
  // Restored QP between its RTS transition and REFILL: the requester holds
  // because its PSN window has not been installed yet.
  bool awaiting_refill = false;
};

struct WriteTarget {
  uint32_t rkey = 0;
  uint64_t raddr = 0;
  uint32_t length = 0;

  bool operator==(const WriteTarget&) const = default;
};

struct ResponderState {
  uint32_t expected_psn = 0;
  uint32_t msn = 0;
  uint64_t cur_rr_offset = 0;
  bool in_message = false;
  bool in_write = false;
  // Receive WQE being filled by a multi-packet SEND.
  std::optional<ReceiveRequest> cur_rr;
  std::optional<WriteTarget> write;
  bool nak_psn_sent = false;
};

constexpr uint32_t kInfiniteRetries = std::numeric_limits<uint32_t>::max();

struct RetryState {
  uint32_t timeout_ticks = 32;
  uint32_t max_retries = 7;
  uint32_t retries_used = 0;
  uint32_t backoff = 1;
  bool armed = false;
  bool frozen = false;
  Tick deadline = 0;
};

// A resume that reached this QP while it was Stopped. The migrator relays
// it to the restored successor.
struct CapturedResume {
  PartnerAddress from;
  uint32_t psn = 0;
};

struct QueuePair {
  uint32_t qpn = 0;
  uint32_t pd = 0;
  uint32_t ctx_id = 0;
  QpState state = QpState::kReset;
  // State to return to from Paused.
  QpState saved_state = QpState::kReset;
  // State the QP was in when it was stopped for a dump.
  QpState stopped_from = QpState::kReset;
  std::optional<PartnerAddress> partner;
  uint32_t mtu = 1024;
  uint32_t send_cq = 0;
  uint32_t recv_cq = 0;
  std::optional<uint32_t> srq;
  QpCaps caps;

  std::deque<SendWqe> sq;
  uint64_t sq_next_seq = 0;
  std::deque<ReceiveRequest> rq;

  RequesterState req;
  ResponderState rsp;
  RetryState retry;
  std::optional<CapturedResume> captured_resume;

  // Window of unacknowledged packets the requester may have outstanding.
  uint32_t max_inflight = 64;

  SendWqe* FindWqe(uint64_t seq) {
    if (sq.empty() || seq < sq.front().seq) return nullptr;
    uint64_t idx = seq - sq.front().seq;
    return idx < sq.size() ? &sq[idx] : nullptr;
  }
};

}  // namespace migrsim::verbs

#endif  // MIGRSIM_VERBS_OBJECTS_H_
