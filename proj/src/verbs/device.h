#ifndef MIGRSIM_VERBS_DEVICE_H_
#define MIGRSIM_VERBS_DEVICE_H_

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "common/prng.h"
#include "verbs/objects.h"
#include "verbs/types.h"

namespace migrsim::verbs {

// Half-open identifier interval [lo, hi).
struct IdRange {
  uint32_t lo = 0;
  uint32_t hi = 0;

  bool Contains(uint32_t v) const { return v >= lo && v < hi; }
  bool operator==(const IdRange&) const = default;
};

// Identifier spaces any device accepts for restored objects. Fresh objects
// are drawn from the device's own partition inside these spaces.
inline constexpr IdRange kQpnSpace{1, kPsnMask};
inline constexpr IdRange kMrnSpace{1, 0xFFFFFFFFu};

// Default partition width per node.
inline constexpr uint32_t kDefaultPartitionWidth = 1u << 16;

struct DeviceConfig {
  IdRange qpn_range{0x10000, 0x20000};
  IdRange mrn_range{1, 0x10001};
  uint64_t key_seed = 1;

  // Node `index` gets the index-th disjoint partition of each space.
  static DeviceConfig ForNodeIndex(uint32_t index, uint64_t key_seed);
};

struct QpInitAttr {
  uint32_t pd = 0;
  uint32_t send_cq = 0;
  uint32_t recv_cq = 0;
  std::optional<uint32_t> srq;
  QpCaps caps;
  uint32_t max_inflight = 64;
};

struct QpAttr {
  std::optional<PartnerAddress> partner;
  std::optional<uint32_t> mtu;
  std::optional<uint32_t> expected_psn;  // required for RTR
  std::optional<uint32_t> next_psn;      // required for RTS
  std::optional<uint32_t> timeout_ticks;
  std::optional<uint32_t> max_retries;
};

using StateObserver =
    std::function<void(const QueuePair& qp, QpState from, QpState to)>;

class Device;

// One verbs context: the objects a single process opened on a device.
class Context {
 public:
  Context(Device* device, uint32_t id) : device_(device), id_(id) {}
  Context(const Context&) = delete;
  Context& operator=(const Context&) = delete;

  uint32_t id() const { return id_; }
  Device& device() { return *device_; }

  absl::StatusOr<uint32_t> AllocPd();
  absl::StatusOr<uint32_t> CreateCq(uint32_t depth);
  absl::StatusOr<uint32_t> CreateSrq(uint32_t pd, uint32_t depth);
  absl::StatusOr<const MemoryRegion*> RegMr(uint32_t pd, uint64_t base,
                                            uint64_t length, uint32_t access);
  absl::StatusOr<QueuePair*> CreateQp(const QpInitAttr& attr);
  absl::Status ModifyQp(uint32_t qpn, QpState target, const QpAttr& attr);
  absl::Status DestroyQp(uint32_t qpn);
  absl::Status DeregMr(uint32_t mrn);

  absl::Status PostSend(uint32_t qpn, const SendRequest& sr);
  absl::Status PostRecv(uint32_t qpn, const ReceiveRequest& rr);
  absl::Status PostSrqRecv(uint32_t srq, const ReceiveRequest& rr);
  absl::StatusOr<std::vector<WorkCompletion>> PollCq(uint32_t cq,
                                                     uint32_t max);

  // Flat per-process address space backed by the registered regions.
  absl::Status WriteMemory(uint64_t addr, std::span<const uint8_t> bytes);
  absl::StatusOr<std::vector<uint8_t>> ReadMemory(uint64_t addr,
                                                  uint64_t len) const;

  QueuePair* FindQp(uint32_t qpn);
  const QueuePair* FindQp(uint32_t qpn) const;
  MemoryRegion* FindMr(uint32_t mrn);
  MemoryRegion* FindMrByLkey(uint32_t pd, uint32_t lkey);
  MemoryRegion* FindMrByRkey(uint32_t pd, uint32_t rkey);
  CompletionQueue* FindCq(uint32_t handle);
  SharedReceiveQueue* FindSrq(uint32_t handle);
  bool HasPd(uint32_t handle) const { return pds_.contains(handle); }

  const std::map<uint32_t, ProtectionDomain>& pds() const { return pds_; }
  const std::map<uint32_t, MemoryRegion>& mrs() const { return mrs_; }
  const std::map<uint32_t, CompletionQueue>& cqs() const { return cqs_; }
  const std::map<uint32_t, SharedReceiveQueue>& srqs() const { return srqs_; }
  const std::map<uint32_t, std::unique_ptr<QueuePair>>& qps() const {
    return qps_;
  }

  // Transitions driven by the transport and checkpoint layers. Every state
  // change funnels through SetState so observers see all of them.
  void SetState(QueuePair& qp, QpState to);
  // Flushes both queues with WR_FLUSH_ERR and moves the QP to Error.
  void EnterError(QueuePair& qp);
  // Flushes the send queue and moves the QP to SQE.
  void EnterSqe(QueuePair& qp);
  void CompleteSend(QueuePair& qp, const SendWqe& wqe, WcStatus status);
  void CompleteRecv(QueuePair& qp, const ReceiveRequest& rr, WcStatus status,
                    uint32_t byte_len);
  // Next receive WQE for `qp` from its RQ or SRQ.
  std::optional<ReceiveRequest> TakeReceive(QueuePair& qp);

  // Restore-side object creation with caller-chosen handles.
  absl::Status AdoptPd(uint32_t handle);
  absl::Status AdoptCq(CompletionQueue cq);
  absl::Status AdoptSrq(SharedReceiveQueue srq);
  absl::Status SetMrKeys(uint32_t mrn, uint32_t lkey, uint32_t rkey);

 private:
  friend class Device;

  void Push(QueuePair& qp, uint32_t cq_handle, const WorkCompletion& wc);
  void ResetQp(QueuePair& qp);
  absl::Status ValidateLocal(uint32_t pd, const Sge& sge,
                             uint32_t required_access);

  Device* device_;
  uint32_t id_;
  uint32_t next_handle_ = 1;
  std::map<uint32_t, ProtectionDomain> pds_;
  std::map<uint32_t, MemoryRegion> mrs_;  // by mrn
  std::map<uint32_t, CompletionQueue> cqs_;
  std::map<uint32_t, SharedReceiveQueue> srqs_;
  std::map<uint32_t, std::unique_ptr<QueuePair>> qps_;  // by qpn
};

// A simulated RDMA device: node addressing, node-global QPN/MRN allocation
// with an exposed last-assigned ID, protection-key generation, and the
// contexts opened on it.
class Device {
 public:
  Device(NodeAddress address, DeviceConfig config);
  Device(const Device&) = delete;
  Device& operator=(const Device&) = delete;

  const NodeAddress& address() const { return address_; }
  const DeviceConfig& config() const { return config_; }

  absl::StatusOr<Context*> OpenContext(uint32_t ctx_id);
  Context* FindContext(uint32_t ctx_id);
  absl::Status DestroyContext(uint32_t ctx_id);
  std::vector<uint32_t> context_ids() const;

  uint32_t last_qpn() const { return last_qpn_; }
  uint32_t last_mrn() const { return last_mrn_; }
  // The next allocation tries v + 1 first.
  absl::Status SetLastQpn(uint32_t v);
  absl::Status SetLastMrn(uint32_t v);

  // Full allocator position, for callers that pin temporarily and put it
  // back afterwards.
  struct IdCursor {
    uint32_t last;
    bool pinned;
  };
  IdCursor qpn_cursor() const { return {last_qpn_, qpn_pinned_}; }
  IdCursor mrn_cursor() const { return {last_mrn_, mrn_pinned_}; }
  void set_qpn_cursor(IdCursor c) {
    last_qpn_ = c.last;
    qpn_pinned_ = c.pinned;
  }
  void set_mrn_cursor(IdCursor c) {
    last_mrn_ = c.last;
    mrn_pinned_ = c.pinned;
  }

  QueuePair* FindQp(uint32_t qpn);
  Context* ContextOfQp(uint32_t qpn);
  bool QpnInUse(uint32_t qpn) const { return qp_index_.contains(qpn); }
  bool MrnInUse(uint32_t mrn) const { return mrns_.contains(mrn); }
  // All QPs on the device in QPN order.
  const std::map<uint32_t, QueuePair*>& qp_index() const { return qp_index_; }

  void set_state_observer(StateObserver obs) { observer_ = std::move(obs); }
  void NotifyState(const QueuePair& qp, QpState from, QpState to) {
    if (observer_) observer_(qp, from, to);
  }

 private:
  friend class Context;

  absl::StatusOr<uint32_t> AllocateQpn();
  absl::StatusOr<uint32_t> AllocateMrn();
  uint32_t NextKey();

  NodeAddress address_;
  DeviceConfig config_;
  uint32_t last_qpn_;
  uint32_t last_mrn_;
  // Set by SetLast*: the next allocation continues past the pinned value
  // instead of wrapping inside the node's own range.
  bool qpn_pinned_ = false;
  bool mrn_pinned_ = false;
  std::map<uint32_t, std::unique_ptr<Context>> contexts_;
  std::map<uint32_t, QueuePair*> qp_index_;
  std::set<uint32_t> mrns_;
  std::multiset<uint32_t> keys_;  // restored keys may repeat across PDs
  void ReleaseKey(uint32_t k) {
    if (auto it = keys_.find(k); it != keys_.end()) keys_.erase(it);
  }
  Xorshift64Star key_rng_;
  StateObserver observer_;
};

// Allocates the first free identifier at or after last + 1. Inside the own
// partition the scan wraps; a candidate outside it (after a restore set the
// last ID to a foreign value) scans upward to the end of the space.
std::optional<uint32_t> NextFreeId(uint32_t last, IdRange own, IdRange space,
                                   const std::function<bool(uint32_t)>& used);

}  // namespace migrsim::verbs

#endif  // MIGRSIM_VERBS_DEVICE_H_
