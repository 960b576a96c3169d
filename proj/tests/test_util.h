#ifndef MIGRSIM_TESTS_TEST_UTIL_H_
#define MIGRSIM_TESTS_TEST_UTIL_H_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "common/prng.h"
#include "gtest/gtest.h"
#include "netsim/network.h"
#include "transport/host.h"
#include "verbs/device.h"

namespace migrsim::testing {

// Host at node index `index` with gid derived from `gid_seed`.
inline std::unique_ptr<transport::Host> MakeHost(const std::string& name,
                                                 uint64_t gid_seed,
                                                 uint32_t index,
                                                 bool migration = true) {
  verbs::NodeAddress addr{verbs::Gid::FromSeed(gid_seed),
                          static_cast<uint16_t>(index + 1), gid_seed};
  return std::make_unique<transport::Host>(
      name, addr,
      verbs::DeviceConfig::ForNodeIndex(index, SplitMix64(gid_seed * 977)),
      migration);
}

// One QP with its own PD, MR and CQ inside a context.
struct Endpoint {
  transport::Host* host = nullptr;
  verbs::Context* ctx = nullptr;
  uint32_t pd = 0;
  uint32_t mrn = 0;
  uint32_t lkey = 0;
  uint32_t rkey = 0;
  uint64_t base = 0;
  uint32_t cq = 0;
  uint32_t qpn = 0;

  verbs::QueuePair* qp() { return ctx->FindQp(qpn); }
};

inline Endpoint MakeEndpoint(transport::Host& h, uint32_t ctx_id,
                             uint64_t base, uint64_t mr_len,
                             uint32_t max_inflight = 64) {
  Endpoint e;
  e.host = &h;
  auto ctx = h.device().OpenContext(ctx_id);
  EXPECT_TRUE(ctx.ok()) << ctx.status();
  e.ctx = *ctx;
  e.pd = *e.ctx->AllocPd();
  auto mr = e.ctx->RegMr(e.pd, base, mr_len,
                         verbs::kAccessLocalWrite | verbs::kAccessRemoteWrite);
  EXPECT_TRUE(mr.ok()) << mr.status();
  e.mrn = (*mr)->mrn;
  e.lkey = (*mr)->lkey;
  e.rkey = (*mr)->rkey;
  e.base = base;
  e.cq = *e.ctx->CreateCq(4096);
  verbs::QpInitAttr init;
  init.pd = e.pd;
  init.send_cq = e.cq;
  init.recv_cq = e.cq;
  init.caps = {1024, 1024};
  init.max_inflight = max_inflight;
  auto qp = e.ctx->CreateQp(init);
  EXPECT_TRUE(qp.ok()) << qp.status();
  e.qpn = (*qp)->qpn;
  return e;
}

struct ConnectOptions {
  uint32_t mtu = 1024;
  uint32_t psn_a = 100;
  uint32_t psn_b = 5000;
  uint32_t timeout_ticks = 32;
  uint32_t max_retries = 7;
};

inline void Connect(Endpoint& a, Endpoint& b, const ConnectOptions& o = {}) {
  auto bring_up = [&](Endpoint& self, Endpoint& peer, uint32_t my_psn,
                      uint32_t peer_psn) {
    verbs::QpAttr attr;
    attr.mtu = o.mtu;
    ASSERT_TRUE(
        self.ctx->ModifyQp(self.qpn, verbs::QpState::kInit, attr).ok());
    attr = {};
    attr.partner = verbs::PartnerAddress{peer.host->gid(), peer.qpn};
    attr.expected_psn = peer_psn;
    ASSERT_TRUE(self.ctx->ModifyQp(self.qpn, verbs::QpState::kRtr, attr).ok());
    attr = {};
    attr.next_psn = my_psn;
    attr.timeout_ticks = o.timeout_ticks;
    attr.max_retries = o.max_retries;
    ASSERT_TRUE(self.ctx->ModifyQp(self.qpn, verbs::QpState::kRts, attr).ok());
  };
  bring_up(a, b, o.psn_a, o.psn_b);
  bring_up(b, a, o.psn_b, o.psn_a);
}

inline std::vector<uint8_t> Pattern(std::size_t n, uint8_t salt) {
  std::vector<uint8_t> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = static_cast<uint8_t>(i * 31 + salt);
  }
  return v;
}

inline std::vector<verbs::WorkCompletion> Drain(Endpoint& e) {
  std::vector<verbs::WorkCompletion> all;
  for (;;) {
    auto wcs = e.ctx->PollCq(e.cq, 256);
    if (!wcs.ok() || wcs->empty()) break;
    all.insert(all.end(), wcs->begin(), wcs->end());
  }
  return all;
}

}  // namespace migrsim::testing

#endif  // MIGRSIM_TESTS_TEST_UTIL_H_
