#include "migrator/migrator.h"

#include <algorithm>
#include <utility>

#include "absl/strings/str_cat.h"
#include "common/bytes.h"
#include "transport/packet.h"
#include "transport/rc_transport.h"

namespace migrsim::migrator {
namespace {

using checkpoint::DumpImage;
using checkpoint::ObjectType;
using checkpoint::RestoreStep;
using checkpoint::StepAction;
using verbs::QpState;

constexpr uint64_t kMrCostBytes = 64 * 1024;

// Chunk datagram: u32 job, u32 index, u32 total, payload. Ack: u32 job,
// u32 index.
std::vector<uint8_t> ChunkBytes(uint32_t job, uint32_t index, uint32_t total,
                                std::span<const uint8_t> payload) {
  std::vector<uint8_t> out;
  ByteWriter w(out);
  w.U32(job);
  w.U32(index);
  w.U32(total);
  w.Bytes(payload);
  return out;
}

bool Settles(QpState s) {
  return s == QpState::kRts || s == QpState::kSqd || s == QpState::kSqe ||
         s == QpState::kPaused;
}

}  // namespace

uint64_t StepCost(const DumpImage& image, const RestoreStep& step) {
  if (step.type == ObjectType::kMr && step.action == StepAction::kCreate) {
    uint64_t len = image.mrs.at(step.index).length;
    return 1 + (len + kMrCostBytes - 1) / kMrCostBytes;
  }
  return 1;
}

uint64_t RestoreCost(const DumpImage& image) {
  uint64_t total = 0;
  for (const auto& s : checkpoint::PlanRestore(image)) {
    total += StepCost(image, s);
  }
  return total;
}

Migrator::Migrator(netsim::Network& net) : net_(net) {
  net_.AddTickHook([this](netsim::Network&) -> std::optional<Tick> {
    PollAwaiting();
    return std::nullopt;
  });
}

void Migrator::AddHost(transport::Host* host) {
  hosts_[host->gid()] = host;
  host->set_chunk_handler(
      [this, host](netsim::Network&, const netsim::Datagram& d) {
        OnDatagram(*host, d);
      });
}

transport::Host* Migrator::FindHost(const verbs::Gid& gid) const {
  auto it = hosts_.find(gid);
  return it == hosts_.end() ? nullptr : it->second;
}

void Migrator::RegisterContext(uint32_t ctx_id, const verbs::Gid& gid) {
  locations_[ctx_id] = gid;
}

std::optional<verbs::Gid> Migrator::Locate(uint32_t ctx_id) const {
  auto it = locations_.find(ctx_id);
  if (it == locations_.end()) return std::nullopt;
  return it->second;
}

absl::StatusOr<std::size_t> Migrator::Schedule(const MigrationSpec& spec) {
  if (spec.src == spec.dst) {
    return absl::InvalidArgumentError("migration source equals destination");
  }
  transport::Host* src = FindHost(spec.src);
  transport::Host* dst = FindHost(spec.dst);
  if (src == nullptr || dst == nullptr) {
    return absl::InvalidArgumentError("migration endpoint is not attached");
  }
  if (!src->migration_enabled() || !dst->migration_enabled()) {
    return absl::FailedPreconditionError("migration support is disabled");
  }
  if (!locations_.contains(spec.ctx_id)) {
    return absl::InvalidArgumentError(
        absl::StrCat("unknown context ", spec.ctx_id));
  }
  if (spec.trigger_tick < net_.now() ||
      spec.trigger_tick > net_.config().max_ticks) {
    return absl::InvalidArgumentError("trigger tick outside the run budget");
  }
  auto job = std::make_unique<Job>();
  job->id = jobs_.size();
  job->spec = spec;
  job->report.ctx_id = spec.ctx_id;
  job->report.src = spec.src;
  job->report.dst = spec.dst;
  job->report.trigger_tick = spec.trigger_tick;
  Job* raw = job.get();
  jobs_.push_back(std::move(job));
  net_.ScheduleMigrationTrigger(spec.trigger_tick,
                                [this, raw] { Trigger(*raw); });
  return raw->id;
}

void Migrator::Trigger(Job& job) {
  transport::Host* src = FindHost(job.spec.src);
  auto image = checkpoint::DumpContext(*src, job.spec.ctx_id);
  if (!image.ok()) {
    Fail(job, std::string(image.status().message()));
    return;
  }
  job.report.checkpoint_ticks = 1;
  job.bytes = checkpoint::EncodeImage(*image);
  job.report.image_bytes = job.bytes.size();
  Notify(job, MigrationEvent::kStopped);

  // The dump occupies the trigger tick; transfer starts on the next one.
  job.transfer_start = net_.now() + 1;
  if (job.spec.transfer == Transfer::kOutOfBand) {
    net_.ScheduleTimer(job.transfer_start,
                       [this, &job] { TransferDone(job, job.bytes); });
    return;
  }
  job.total_chunks = static_cast<uint32_t>(
      std::max<std::size_t>(1, (job.bytes.size() + kChunkBytes - 1) /
                                   kChunkBytes));
  job.report.chunks = job.total_chunks;
  job.assembled.assign(job.bytes.size(), 0);
  job.received.assign(job.total_chunks, false);
  job.sending = true;
  net_.ScheduleTimer(job.transfer_start, [this, &job] { SendChunk(job); });
}

void Migrator::SendChunk(Job& job) {
  if (!job.sending || job.report.finished) return;
  const uint32_t i = job.next_chunk;
  const std::size_t off = static_cast<std::size_t>(i) * kChunkBytes;
  const std::size_t len =
      std::min<std::size_t>(kChunkBytes, job.bytes.size() - off);
  netsim::Datagram d;
  d.src = job.spec.src;
  d.dst = job.spec.dst;
  d.kind = netsim::DatagramKind::kImageChunk;
  d.bytes = ChunkBytes(static_cast<uint32_t>(job.id), i, job.total_chunks,
                       std::span<const uint8_t>(job.bytes).subspan(off, len));
  d.info = {0, 0, "CHUNK", i, std::nullopt, static_cast<uint32_t>(len)};
  net_.Send(std::move(d));

  // Stop-and-wait: resend if the ack has not come back in time.
  const uint32_t attempt = ++job.attempt;
  const Tick timeout = 2 * static_cast<Tick>(net_.config().latency_ticks) + 2;
  net_.ScheduleTimer(net_.now() + timeout, [this, &job, i, attempt] {
    if (job.sending && job.next_chunk == i && job.attempt == attempt) {
      ++job.report.chunk_retransmits;
      SendChunk(job);
    }
  });
}

void Migrator::OnDatagram(transport::Host& host, const netsim::Datagram& d) {
  ByteReader r(d.bytes);
  const uint32_t id = r.U32();
  const uint32_t index = r.U32();
  if (!r.ok() || id >= jobs_.size()) return;
  Job& job = *jobs_[id];
  if (job.report.finished && !job.report.succeeded) return;

  if (d.kind == netsim::DatagramKind::kChunkAck) {
    if (host.gid() != job.spec.src || !job.sending ||
        index != job.next_chunk) {
      return;
    }
    if (++job.next_chunk == job.total_chunks) {
      job.sending = false;
    } else {
      SendChunk(job);
    }
    return;
  }

  if (host.gid() != job.spec.dst) return;
  const uint32_t total = r.U32();
  if (!r.ok() || total != job.total_chunks || index >= total) return;
  auto payload = r.Bytes(r.remaining());
  netsim::Datagram ack;
  ack.src = job.spec.dst;
  ack.dst = job.spec.src;
  ack.kind = netsim::DatagramKind::kChunkAck;
  {
    ByteWriter w(ack.bytes);
    w.U32(id);
    w.U32(index);
  }
  ack.info = {0, 0, "CHUNK_ACK", index, std::nullopt, 0};
  net_.Send(std::move(ack));

  if (job.received[index]) return;
  job.received[index] = true;
  std::copy(payload.begin(), payload.end(),
            job.assembled.begin() +
                static_cast<std::ptrdiff_t>(index) * kChunkBytes);
  if (++job.received_count == job.total_chunks) {
    job.report.transfer_ticks = net_.now() - job.transfer_start;
    TransferDone(job, job.assembled);
  }
}

void Migrator::TransferDone(Job& job, const std::vector<uint8_t>& bytes) {
  if (job.transfer_done) return;
  job.transfer_done = true;
  auto image = checkpoint::DecodeImage(bytes);
  if (!image.ok()) {
    Fail(job, absl::StrCat("image decode: ", image.status().message()));
    return;
  }
  transport::Host* dst = FindHost(job.spec.dst);
  auto ctx = dst->device().OpenContext(job.spec.ctx_id);
  if (!ctx.ok()) {
    Fail(job, std::string(ctx.status().message()));
    return;
  }
  job.image = *std::move(image);
  job.plan = checkpoint::PlanRestore(job.image);
  job.report.restore_ticks = RestoreCost(job.image);
  job.step = 0;
  ScheduleNextStep(job);
}

void Migrator::ScheduleNextStep(Job& job) {
  if (job.step == job.plan.size()) {
    RestoreFinished(job);
    return;
  }
  const Tick at = net_.now() + StepCost(job.image, job.plan[job.step]);
  net_.ScheduleTimer(at, [this, &job] { RunStep(job); });
}

void Migrator::RunStep(Job& job) {
  if (job.report.finished) return;
  const RestoreStep& step = job.plan[job.step];
  transport::Host* dst = FindHost(job.spec.dst);
  const bool is_qp = step.type == checkpoint::ObjectType::kQp;
  const uint32_t qpn = is_qp ? job.image.qps[step.index].qpn : 0;
  // REFILL announces the QP to its partner, so it must know where that
  // partner lives now.
  if (step.action == StepAction::kRefill) RelayCaptured(job, qpn, true);
  auto s = checkpoint::ApplyStep(*dst, job.spec.ctx_id, job.image, step);
  if (!s.ok()) {
    // Leave no half-built successor behind; the source stays Stopped.
    (void)dst->device().DestroyContext(job.spec.ctx_id);
    Fail(job, std::string(s.message()));
    return;
  }
  ++job.step;
  const bool qp_done =
      is_qp && (job.step == job.plan.size() ||
                job.plan[job.step].type != checkpoint::ObjectType::kQp ||
                job.plan[job.step].index != step.index);
  if (qp_done) RelayCaptured(job, qpn);
  ScheduleNextStep(job);
}

void Migrator::RestoreFinished(Job& job) {
  job.report.restored_at = net_.now();
  locations_[job.spec.ctx_id] = job.spec.dst;
  Notify(job, MigrationEvent::kRestored);
  job.awaiting = true;
  PollAwaiting();
}

void Migrator::RelayCaptured(Job& job, uint32_t only_qpn, bool address_only) {
  transport::Host* src = FindHost(job.spec.src);
  transport::Host* dst = FindHost(job.spec.dst);
  verbs::Context* sctx = src->device().FindContext(job.spec.ctx_id);
  verbs::Context* dctx = dst->device().FindContext(job.spec.ctx_id);
  if (sctx == nullptr || dctx == nullptr) return;
  for (const auto& [qpn, sqp] : sctx->qps()) {
    if (only_qpn != 0 && qpn != only_qpn) continue;
    if (!sqp->captured_resume) continue;
    verbs::QueuePair* succ = dctx->FindQp(qpn);
    if (succ == nullptr || succ->state == QpState::kReset ||
        succ->state == QpState::kInit) {
      continue;
    }
    const verbs::CapturedResume c = *sqp->captured_resume;
    if (address_only) {
      succ->partner = c.from;
      continue;
    }
    sqp->captured_resume.reset();
    transport::Packet pkt;
    pkt.opcode = transport::Opcode::kResume;
    pkt.dest_qpn = qpn;
    pkt.psn = c.psn;
    pkt.resume = transport::ResumeInfo{c.from.gid, c.from.qpn, c.psn};
    transport::Outbox out;
    transport::HandleResume(*dctx, *succ, pkt, c.from.gid, out);
    dst->Transmit(qpn, out);
    ++job.report.resumes_relayed;
  }
}

bool Migrator::SuccessorsSettled(Job& job) {
  transport::Host* dst = FindHost(job.spec.dst);
  verbs::Context* dctx = dst->device().FindContext(job.spec.ctx_id);
  if (dctx == nullptr) return true;
  for (const auto& [qpn, qp] : dctx->qps()) {
    if (Settles(qp->state) && qp->req.resume_pending) return false;
  }
  return true;
}

void Migrator::PollAwaiting() {
  for (auto& jp : jobs_) {
    Job& job = *jp;
    if (!job.awaiting) continue;
    RelayCaptured(job);
    if (!SuccessorsSettled(job)) continue;
    transport::Host* src = FindHost(job.spec.src);
    (void)src->device().DestroyContext(job.spec.ctx_id);
    job.awaiting = false;
    job.report.finished = true;
    job.report.succeeded = true;
    job.report.source_destroyed_at = net_.now();
    Notify(job, MigrationEvent::kSourceDestroyed);
  }
}

void Migrator::Fail(Job& job, std::string error) {
  job.sending = false;
  job.awaiting = false;
  job.report.finished = true;
  job.report.succeeded = false;
  job.report.error = std::move(error);
  Notify(job, MigrationEvent::kFailed);
}

void Migrator::Notify(Job& job, MigrationEvent ev) {
  if (listener_) listener_(job.spec.ctx_id, ev, job.report);
}

absl::Status Migrator::Teardown(uint32_t ctx_id,
                                const std::vector<verbs::Gid>& nodes) {
  if (!locations_.contains(ctx_id)) {
    return absl::InvalidArgumentError(absl::StrCat("unknown context ", ctx_id));
  }
  for (const auto& gid : nodes) {
    transport::Host* host = FindHost(gid);
    if (host == nullptr) {
      return absl::InvalidArgumentError(
          absl::StrCat("unknown node ", gid.ToString()));
    }
  }
  for (const auto& gid : nodes) {
    transport::Host* host = FindHost(gid);
    if (host->device().FindContext(ctx_id) != nullptr) {
      (void)host->device().DestroyContext(ctx_id);
    }
  }
  for (auto& jp : jobs_) {
    if (jp->spec.ctx_id == ctx_id && jp->awaiting) {
      jp->awaiting = false;
      jp->report.finished = true;
    }
  }
  return absl::OkStatus();
}

std::vector<MigrationReport> Migrator::reports() const {
  std::vector<MigrationReport> out;
  out.reserve(jobs_.size());
  for (const auto& j : jobs_) out.push_back(j->report);
  return out;
}

bool Migrator::AllFinished() const {
  return std::all_of(jobs_.begin(), jobs_.end(),
                     [](const auto& j) { return j->report.finished; });
}

}  // namespace migrsim::migrator
