#ifndef MIGRSIM_TRANSPORT_HOST_H_
#define MIGRSIM_TRANSPORT_HOST_H_

#include <cstdint>
#include <functional>
#include <string>

#include "netsim/network.h"
#include "transport/rc_transport.h"
#include "verbs/device.h"

namespace migrsim::transport {

struct HostCounters {
  uint64_t decode_errors = 0;
  uint64_t unknown_qpn = 0;
  uint64_t resumes_ignored = 0;
};

// A simulated machine: one RDMA device attached to the network, running the
// transport tasks of all its QPs.
class Host : public netsim::SimNode {
 public:
  using ChunkHandler =
      std::function<void(netsim::Network&, const netsim::Datagram&)>;

  Host(std::string name, verbs::NodeAddress address, verbs::DeviceConfig config,
       bool migration_enabled);

  // Registers with `net`; the host sends through it from then on.
  absl::Status AttachTo(netsim::Network& net);

  const verbs::Gid& gid() const override { return device_.address().gid; }
  const std::string& name() const override { return name_; }
  void Deliver(netsim::Network& net, const netsim::Datagram& d) override;
  void Step(netsim::Network& net) override;
  std::optional<Tick> NextActivity(Tick now) const override;
  void StateHistogram(std::map<std::string, uint64_t>& out) const override;

  verbs::Device& device() { return device_; }
  const verbs::Device& device() const { return device_; }
  netsim::Network* network() { return net_; }
  bool migration_enabled() const { return migration_enabled_; }
  const HostCounters& counters() const { return counters_; }

  // Image chunks and their acks are handed to the migrator.
  void set_chunk_handler(ChunkHandler h) { chunk_handler_ = std::move(h); }

  // Puts packets produced on behalf of `src_qpn` on the wire.
  void Transmit(uint32_t src_qpn, Outbox& out);

 private:
  std::string name_;
  verbs::Device device_;
  bool migration_enabled_;
  netsim::Network* net_ = nullptr;
  ChunkHandler chunk_handler_;
  HostCounters counters_;
};

}  // namespace migrsim::transport

#endif  // MIGRSIM_TRANSPORT_HOST_H_
