#ifndef MIGRSIM_MIGRATOR_MIGRATOR_H_
#define MIGRSIM_MIGRATOR_MIGRATOR_H_

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "checkpoint/checkpoint.h"
#include "netsim/network.h"
#include "transport/host.h"

namespace migrsim::migrator {

enum class Transfer : uint8_t {
  kInBand,      // image travels as datagrams over the simulated network
  kOutOfBand,   // image appears at the destination instantly
};

struct MigrationSpec {
  uint32_t ctx_id = 0;
  verbs::Gid src;
  verbs::Gid dst;
  Tick trigger_tick = 0;
  Transfer transfer = Transfer::kInBand;
};

struct MigrationReport {
  uint32_t ctx_id = 0;
  verbs::Gid src;
  verbs::Gid dst;
  Tick trigger_tick = 0;
  bool finished = false;
  bool succeeded = false;
  std::string error;

  uint64_t checkpoint_ticks = 0;
  uint64_t transfer_ticks = 0;
  uint64_t restore_ticks = 0;
  uint64_t image_bytes = 0;
  // Filled in by whoever observes the partner's completions.
  uint64_t max_partner_latency_ticks = 0;

  uint64_t chunks = 0;
  uint64_t chunk_retransmits = 0;
  uint64_t resumes_relayed = 0;
  Tick restored_at = 0;
  Tick source_destroyed_at = 0;

  uint64_t total_ticks() const {
    return checkpoint_ticks + transfer_ticks + restore_ticks;
  }
};

enum class MigrationEvent : uint8_t {
  kStopped,          // context dumped; its QPs are Stopped
  kRestored,         // all objects recreated on the destination
  kSourceDestroyed,  // every successor heard back from its partner
  kFailed,
};

// Image payload bytes per in-band datagram.
inline constexpr uint32_t kChunkBytes = 4096;

// Simulated cost, in ticks, of one restore step.
uint64_t StepCost(const checkpoint::DumpImage& image,
                  const checkpoint::RestoreStep& step);
uint64_t RestoreCost(const checkpoint::DumpImage& image);

// Orchestrates live migrations of verbs contexts between hosts: dump on the
// source, image transfer, staged restore on the destination, and removal of
// the source objects once every partner knows the new location.
//
// While a source context is still around, resumes that its Stopped QPs
// capture (sent by partners that migrated at the same time) are handed to
// the restored successors.
class Migrator {
 public:
  using Listener = std::function<void(uint32_t ctx_id, MigrationEvent ev,
                                      const MigrationReport& report)>;

  explicit Migrator(netsim::Network& net);
  Migrator(const Migrator&) = delete;
  Migrator& operator=(const Migrator&) = delete;

  void AddHost(transport::Host* host);
  transport::Host* FindHost(const verbs::Gid& gid) const;

  // Makes `ctx_id` known as living on `gid`.
  void RegisterContext(uint32_t ctx_id, const verbs::Gid& gid);
  std::optional<verbs::Gid> Locate(uint32_t ctx_id) const;

  // Returns the report index.
  absl::StatusOr<std::size_t> Schedule(const MigrationSpec& spec);

  // Destroys the context on every listed node that still has it.
  absl::Status Teardown(uint32_t ctx_id, const std::vector<verbs::Gid>& nodes);

  void set_listener(Listener l) { listener_ = std::move(l); }
  std::vector<MigrationReport> reports() const;
  MigrationReport& report(std::size_t i) { return jobs_.at(i)->report; }
  bool AllFinished() const;

 private:
  struct Job {
    std::size_t id = 0;
    MigrationSpec spec;
    MigrationReport report;
    std::vector<uint8_t> bytes;
    // In-band sender.
    uint32_t total_chunks = 0;
    uint32_t next_chunk = 0;
    uint32_t attempt = 0;
    bool sending = false;
    // In-band receiver.
    std::vector<uint8_t> assembled;
    std::vector<bool> received;
    uint32_t received_count = 0;
    Tick transfer_start = 0;
    bool transfer_done = false;
    // Restore.
    checkpoint::DumpImage image;
    std::vector<checkpoint::RestoreStep> plan;
    std::size_t step = 0;
    bool awaiting = false;
  };

  void Trigger(Job& job);
  void SendChunk(Job& job);
  void OnDatagram(transport::Host& host, const netsim::Datagram& d);
  void TransferDone(Job& job, const std::vector<uint8_t>& bytes);
  void ScheduleNextStep(Job& job);
  void RunStep(Job& job);
  void RestoreFinished(Job& job);
  // Hands a RESUME that reached the stopped source QP to its successor.
  // With address_only the successor just learns the partner's new address
  // and the RESUME stays queued until the QP is fully restored.
  void RelayCaptured(Job& job, uint32_t only_qpn = 0, bool address_only = false);
  bool SuccessorsSettled(Job& job);
  void PollAwaiting();
  void Fail(Job& job, std::string error);
  void Notify(Job& job, MigrationEvent ev);

  netsim::Network& net_;
  std::map<verbs::Gid, transport::Host*> hosts_;
  std::map<uint32_t, verbs::Gid> locations_;
  std::vector<std::unique_ptr<Job>> jobs_;
  Listener listener_;
};

}  // namespace migrsim::migrator

#endif  // MIGRSIM_MIGRATOR_MIGRATOR_H_
