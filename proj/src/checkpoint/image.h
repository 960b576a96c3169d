#ifndef MIGRSIM_CHECKPOINT_IMAGE_H_
#define MIGRSIM_CHECKPOINT_IMAGE_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "absl/status/statusor.h"
#include "verbs/objects.h"
#include "verbs/types.h"

namespace migrsim::checkpoint {

inline constexpr uint8_t kImageMagic[4] = {'M', 'G', 'R', 'D'};
inline constexpr uint16_t kImageVersion = 1;

enum class ObjectType : uint8_t {
  kPd = 1,
  kMr = 2,
  kCq = 3,
  kSrq = 4,
  kQp = 5,
};

struct PdRecord {
  uint32_t handle = 0;

  bool operator==(const PdRecord&) const = default;
};

struct MrRecord {
  uint32_t mrn = 0;
  uint32_t pd = 0;
  uint32_t lkey = 0;
  uint32_t rkey = 0;
  uint64_t base = 0;
  uint64_t length = 0;
  uint32_t access = 0;
  std::vector<uint8_t> buffer;

  bool operator==(const MrRecord&) const = default;
};

struct CqRecord {
  uint32_t handle = 0;
  uint32_t depth = 0;
  uint64_t produced = 0;
  uint64_t consumed = 0;
  std::vector<verbs::WorkCompletion> ring;

  bool operator==(const CqRecord&) const = default;
};

struct SrqRecord {
  uint32_t handle = 0;
  uint32_t pd = 0;
  uint32_t depth = 0;
  uint64_t produced = 0;
  uint64_t consumed = 0;
  std::vector<verbs::ReceiveRequest> ring;

  bool operator==(const SrqRecord&) const = default;
};

// Everything about a QP that survives migration. Timer deadlines and the
// resume handshake flag are location-specific and not recorded.
struct QpRecord {
  uint32_t qpn = 0;
  uint32_t pd = 0;
  verbs::QpState state = verbs::QpState::kReset;  // before it was stopped
  verbs::QpState resume_state = verbs::QpState::kReset;  // if state is Paused
  std::optional<verbs::PartnerAddress> partner;
  uint32_t mtu = 0;
  uint32_t send_cq = 0;
  uint32_t recv_cq = 0;
  std::optional<uint32_t> srq;
  verbs::QpCaps caps;
  uint32_t max_inflight = 0;

  uint64_t sq_next_seq = 0;
  std::vector<verbs::SendWqe> sq;
  std::vector<verbs::ReceiveRequest> rq;

  // Requester.
  uint32_t next_psn = 0;
  uint32_t first_unacked_psn = 0;
  uint32_t sent_end_psn = 0;
  std::vector<verbs::InflightPacket> inflight;
  uint64_t cur_wqe_seq = 0;
  uint64_t cur_sr_offset = 0;
  uint64_t drain_limit_seq = 0;

  // Responder.
  uint32_t expected_psn = 0;
  uint32_t msn = 0;
  uint64_t cur_rr_offset = 0;
  bool in_message = false;
  bool in_write = false;
  std::optional<verbs::ReceiveRequest> cur_rr;
  std::optional<verbs::WriteTarget> write;
  bool nak_psn_sent = false;

  // Retry.
  uint32_t timeout_ticks = 0;
  uint32_t max_retries = 0;
  uint32_t retries_used = 0;
  uint32_t backoff = 1;

  bool operator==(const QpRecord&) const = default;
};

struct DumpImage {
  verbs::Gid node_gid;
  std::vector<PdRecord> pds;
  std::vector<MrRecord> mrs;
  std::vector<CqRecord> cqs;
  std::vector<SrqRecord> srqs;
  std::vector<QpRecord> qps;

  uint32_t object_count() const {
    return static_cast<uint32_t>(pds.size() + mrs.size() + cqs.size() +
                                 srqs.size() + qps.size());
  }
  bool operator==(const DumpImage&) const = default;
};

std::vector<uint8_t> EncodeBody(const PdRecord& r);
std::vector<uint8_t> EncodeBody(const MrRecord& r);
std::vector<uint8_t> EncodeBody(const CqRecord& r);
std::vector<uint8_t> EncodeBody(const SrqRecord& r);
std::vector<uint8_t> EncodeBody(const QpRecord& r);

absl::StatusOr<PdRecord> DecodePd(std::span<const uint8_t> body);
absl::StatusOr<MrRecord> DecodeMr(std::span<const uint8_t> body);
absl::StatusOr<CqRecord> DecodeCq(std::span<const uint8_t> body);
absl::StatusOr<SrqRecord> DecodeSrq(std::span<const uint8_t> body);
absl::StatusOr<QpRecord> DecodeQp(std::span<const uint8_t> body);

std::vector<uint8_t> EncodeImage(const DumpImage& image);
absl::StatusOr<DumpImage> DecodeImage(std::span<const uint8_t> bytes);

}  // namespace migrsim::checkpoint

#endif  // MIGRSIM_CHECKPOINT_IMAGE_H_
