#ifndef MIGRSIM_CHECKPOINT_CHECKPOINT_H_
#define MIGRSIM_CHECKPOINT_CHECKPOINT_H_

#include <cstdint>
#include <span>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "checkpoint/image.h"
#include "transport/host.h"
#include "verbs/device.h"

namespace migrsim::checkpoint {

enum class RestoreCommand : uint8_t {
  kCreate = 0,
  kSetMrKeys = 1,
  kRefill = 2,
};

// Serializable view of live objects; changes nothing.
QpRecord CaptureQp(const verbs::QueuePair& qp);
DumpImage CaptureImage(const verbs::Context& ctx, const verbs::Gid& gid);

// Stops every QP of the context, then captures it. Stopped QPs answer data
// with NAK_STOPPED until destroyed. Fails when the host runs without
// migration support.
absl::StatusOr<DumpImage> DumpContext(transport::Host& host, uint32_t ctx_id);

// Restores one object from its record body.
//   CREATE       recreates the object with its original identifier and
//                returns it (PD/CQ/SRQ handle, MRN or QPN);
//   SET_MR_KEYS  installs the recorded lkey/rkey on an MR;
//   REFILL       installs transport state into a QP in RTS and announces
//                the new location to the partner.
// An identifier taken on the target yields AlreadyExists.
absl::StatusOr<uint32_t> RestoreObject(transport::Host& host, uint32_t ctx_id,
                                       ObjectType type, RestoreCommand cmd,
                                       std::span<const uint8_t> args);

// One unit of restore work, in the order it must run.
enum class StepAction : uint8_t {
  kCreate,
  kSetMrKeys,
  kToInit,
  kToRtr,
  kToRts,
  kRefill,
  kToSqd,
  kToSqe,
  kToPaused,
  kToError,
};

struct RestoreStep {
  ObjectType type = ObjectType::kPd;
  uint32_t index = 0;  // into the image's vector for `type`
  StepAction action = StepAction::kCreate;
};

std::vector<RestoreStep> PlanRestore(const DumpImage& image);

absl::Status ApplyStep(transport::Host& host, uint32_t ctx_id,
                       const DumpImage& image, const RestoreStep& step);

// Opens `ctx_id` on the host and applies the whole plan.
absl::Status RestoreImage(transport::Host& host, uint32_t ctx_id,
                          const DumpImage& image);

}  // namespace migrsim::checkpoint

#endif  // MIGRSIM_CHECKPOINT_CHECKPOINT_H_
