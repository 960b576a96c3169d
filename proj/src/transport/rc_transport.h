#ifndef MIGRSIM_TRANSPORT_RC_TRANSPORT_H_
#define MIGRSIM_TRANSPORT_RC_TRANSPORT_H_

#include <optional>
#include <vector>

#include "transport/packet.h"
#include "verbs/device.h"

namespace migrsim::transport {

// A packet to put on the wire, addressed to a node.
struct Outbound {
  verbs::Gid dst;
  Packet pkt;
};
using Outbox = std::vector<Outbound>;

// Per-QP reliable-connection tasks. Each function mutates the QP through its
// owning context (so completions and state changes go through the verbs
// layer) and appends any packets to send to `out`.

// True when RequesterStep would emit a packet right now.
bool RequesterReady(const verbs::QueuePair& qp);

// Emits at most one data packet: the next segment of the current send WQE.
void RequesterStep(verbs::Context& ctx, verbs::QueuePair& qp, Tick now,
                   Outbox& out);

// Inbound SEND/WRITE packet. `src` is the sending node.
void ResponderHandle(verbs::Context& ctx, verbs::QueuePair& qp,
                     const Packet& pkt, const verbs::Gid& src,
                     uint32_t src_qpn, Outbox& out);

// Inbound ACK/NAK.
void CompleterHandle(verbs::Context& ctx, verbs::QueuePair& qp,
                     const Packet& ack, const verbs::Gid& src, Tick now);

// Inbound RESUME.
void HandleResume(verbs::Context& ctx, verbs::QueuePair& qp,
                  const Packet& pkt, const verbs::Gid& src, Outbox& out);

// Retransmission timeout and resume re-send.
void TimerStep(verbs::Context& ctx, verbs::QueuePair& qp,
               const verbs::Gid& self, Tick now, Outbox& out);

// Announces the QP's location to its partner and waits for the answer
// before transmitting data again.
void SendResume(verbs::QueuePair& qp, const verbs::Gid& self, Tick now,
                Outbox& out);

// Earliest tick after `now` with requester or timer work for this QP.
std::optional<Tick> NextActivity(const verbs::QueuePair& qp, Tick now);

// Go-back-N: next transmission restarts at `psn`.
void Rewind(verbs::QueuePair& qp, uint32_t psn);

// Number of packets a message of `len` bytes occupies at `mtu`.
inline uint32_t PacketCount(uint64_t len, uint32_t mtu) {
  return len == 0 ? 1 : static_cast<uint32_t>((len + mtu - 1) / mtu);
}

}  // namespace migrsim::transport

#endif  // MIGRSIM_TRANSPORT_RC_TRANSPORT_H_
