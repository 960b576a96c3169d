#include "transport/host.h"

#include <vector>

namespace migrsim::transport {

Host::Host(std::string name, verbs::NodeAddress address,
           verbs::DeviceConfig config, bool migration_enabled)
    : name_(std::move(name)),
      device_(address, config),
      migration_enabled_(migration_enabled) {}

absl::Status Host::AttachTo(netsim::Network& net) {
  if (auto s = net.Attach(this); !s.ok()) return s;
  net_ = &net;
  return absl::OkStatus();
}

void Host::Transmit(uint32_t src_qpn, Outbox& out) {
  for (Outbound& o : out) {
    netsim::Datagram d;
    d.src = gid();
    d.dst = o.dst;
    d.kind = netsim::DatagramKind::kRoce;
    d.src_qpn = src_qpn;
    d.info = TraceOf(o.pkt, src_qpn);
    d.bytes = Encode(o.pkt);
    net_->Send(std::move(d));
  }
  out.clear();
}

void Host::Deliver(netsim::Network& net, const netsim::Datagram& d) {
  if (d.kind != netsim::DatagramKind::kRoce) {
    if (chunk_handler_) chunk_handler_(net, d);
    return;
  }
  absl::StatusOr<Packet> pkt = Decode(d.bytes);
  if (!pkt.ok()) {
    ++counters_.decode_errors;
    return;
  }
  verbs::QueuePair* qp = device_.FindQp(pkt->dest_qpn);
  verbs::Context* ctx = qp ? device_.FindContext(qp->ctx_id) : nullptr;
  if (!qp || !ctx) {
    ++counters_.unknown_qpn;
    return;
  }
  Outbox out;
  if (pkt->opcode == Opcode::kResume) {
    if (!migration_enabled_) {
      ++counters_.resumes_ignored;
      return;
    }
    HandleResume(*ctx, *qp, *pkt, d.src, out);
  } else if (pkt->opcode == Opcode::kAck) {
    if (qp->state == verbs::QpState::kStopped) return;
    CompleterHandle(*ctx, *qp, *pkt, d.src, net.now());
  } else {
    ResponderHandle(*ctx, *qp, *pkt, d.src, d.src_qpn, out);
  }
  Transmit(qp->qpn, out);
}

void Host::Step(netsim::Network& net) {
  std::vector<verbs::QueuePair*> qps;
  qps.reserve(device_.qp_index().size());
  for (const auto& [qpn, qp] : device_.qp_index()) qps.push_back(qp);
  Outbox out;
  for (verbs::QueuePair* qp : qps) {
    verbs::Context* ctx = device_.FindContext(qp->ctx_id);
    if (!ctx) continue;
    RequesterStep(*ctx, *qp, net.now(), out);
    TimerStep(*ctx, *qp, gid(), net.now(), out);
    Transmit(qp->qpn, out);
  }
}

std::optional<Tick> Host::NextActivity(Tick now) const {
  std::optional<Tick> best;
  for (const auto& [qpn, qp] : device_.qp_index()) {
    std::optional<Tick> t = transport::NextActivity(*qp, now);
    if (t && (!best || *t < *best)) best = t;
  }
  return best;
}

void Host::StateHistogram(std::map<std::string, uint64_t>& out) const {
  for (const auto& [qpn, qp] : device_.qp_index()) {
    ++out[std::string(verbs::QpStateName(qp->state))];
  }
}

}  // namespace migrsim::transport
