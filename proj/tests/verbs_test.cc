#include <set>

#include "gtest/gtest.h"
#include "netsim/network.h"
#include "test_util.h"
#include "transport/rc_transport.h"
#include "verbs/device.h"

namespace migrsim {
namespace {

using verbs::Device;
using verbs::DeviceConfig;
using verbs::QpState;

DeviceConfig SmallConfig() {
  DeviceConfig c;
  c.qpn_range = {0x100, 0x200};
  c.mrn_range = {1, 100};
  c.key_seed = 42;
  return c;
}

struct Fixture : ::testing::Test {
  Fixture() : dev({verbs::Gid::FromSeed(1), 1, 1}, SmallConfig()) {
    ctx = *dev.OpenContext(1);
    pd = *ctx->AllocPd();
    cq = *ctx->CreateCq(64);
  }
  absl::StatusOr<verbs::QueuePair*> NewQp() {
    verbs::QpInitAttr a;
    a.pd = pd;
    a.send_cq = cq;
    a.recv_cq = cq;
    return ctx->CreateQp(a);
  }
  Device dev;
  verbs::Context* ctx;
  uint32_t pd;
  uint32_t cq;
};

// Independent oracle for the documented rule: the first free id at or after
// last + 1; inside the node's own range [lo, hi) the scan wraps within the
// range, outside it the scan continues upward through the global space.
uint32_t BruteForceNext(uint32_t last, uint32_t lo, uint32_t hi,
                        const std::set<uint32_t>& used) {
  const uint32_t start = last + 1;
  if (start >= lo && start < hi) {
    for (uint32_t i = 0; i < hi - lo; ++i) {
      uint32_t v = lo + (start - lo + i) % (hi - lo);
      if (!used.contains(v)) return v;
    }
    return 0;
  }
  for (uint32_t v = start; v < verbs::kQpnSpace.hi; ++v) {
    if (!used.contains(v)) return v;
  }
  return 0;
}

TEST_F(Fixture, FirstQpnIsRangeStartInReset) {
  auto qp = NewQp();
  ASSERT_TRUE(qp.ok());
  EXPECT_EQ((*qp)->qpn, 0x100u);
  EXPECT_EQ((*qp)->state, QpState::kReset);
}

TEST_F(Fixture, SetLastQpnSteersNextAllocation) {
  ASSERT_TRUE(dev.SetLastQpn(0x180).ok());
  EXPECT_EQ((*NewQp())->qpn, 0x181u);
}

TEST_F(Fixture, OccupiedSuccessorSkipsToNextFree) {
  ASSERT_TRUE(dev.SetLastQpn(0x180).ok());
  ASSERT_EQ((*NewQp())->qpn, 0x181u);
  ASSERT_TRUE(dev.SetLastQpn(0x180).ok());
  EXPECT_EQ((*NewQp())->qpn, 0x182u);
}

TEST_F(Fixture, AllocationMatchesFreeSlotScan) {
  Xorshift64Star rng(7);
  std::set<uint32_t> used;
  for (int i = 0; i < 200; ++i) {
    const uint32_t last = 0xF0 + rng.Next32() % 0x120;
    ASSERT_TRUE(dev.SetLastQpn(last).ok());
    const uint32_t want = BruteForceNext(last, 0x100, 0x200, used);
    auto qp = NewQp();
    if (want == 0) {
      EXPECT_EQ(qp.status().code(), absl::StatusCode::kResourceExhausted);
      break;
    }
    ASSERT_TRUE(qp.ok()) << qp.status();
    EXPECT_EQ((*qp)->qpn, want) << "last=" << last;
    used.insert(want);
  }
}

TEST_F(Fixture, QpnExhaustionIsResourceError) {
  for (int i = 0; i < 0x100; ++i) ASSERT_TRUE(NewQp().ok());
  EXPECT_EQ(NewQp().status().code(), absl::StatusCode::kResourceExhausted);
}

TEST_F(Fixture, InvalidHandlesAreArgumentErrors) {
  verbs::QpInitAttr a;
  a.pd = 999;
  a.send_cq = cq;
  a.recv_cq = cq;
  EXPECT_EQ(ctx->CreateQp(a).status().code(),
            absl::StatusCode::kInvalidArgument);
  EXPECT_EQ(ctx->PollCq(999, 1).status().code(),
            absl::StatusCode::kInvalidArgument);
}

TEST_F(Fixture, CanonicalBringUpReachesRts) {
  auto qp = *NewQp();
  verbs::QpAttr a;
  ASSERT_TRUE(ctx->ModifyQp(qp->qpn, QpState::kInit, a).ok());
  a.partner = verbs::PartnerAddress{verbs::Gid::FromSeed(1), 0x100};
  a.expected_psn = 0;
  ASSERT_TRUE(ctx->ModifyQp(qp->qpn, QpState::kRtr, a).ok());
  a = {};
  a.next_psn = 0;
  ASSERT_TRUE(ctx->ModifyQp(qp->qpn, QpState::kRts, a).ok());
  EXPECT_EQ(qp->state, QpState::kRts);
}

TEST_F(Fixture, ResetToRtsIsStateError) {
  auto qp = *NewQp();
  verbs::QpAttr a;
  a.next_psn = 0;
  EXPECT_EQ(ctx->ModifyQp(qp->qpn, QpState::kRts, a).code(),
            absl::StatusCode::kFailedPrecondition);
  EXPECT_EQ(qp->state, QpState::kReset);
}

TEST_F(Fixture, MissingAttributesAreArgumentErrors) {
  auto qp = *NewQp();
  ASSERT_TRUE(ctx->ModifyQp(qp->qpn, QpState::kInit, {}).ok());
  EXPECT_EQ(ctx->ModifyQp(qp->qpn, QpState::kRtr, {}).code(),
            absl::StatusCode::kInvalidArgument);
}

TEST_F(Fixture, UserCannotEnterMigrationStates) {
  auto qp = *NewQp();
  EXPECT_FALSE(ctx->ModifyQp(qp->qpn, QpState::kStopped, {}).ok());
  EXPECT_FALSE(ctx->ModifyQp(qp->qpn, QpState::kPaused, {}).ok());
}

TEST_F(Fixture, AnyStateToErrorAndReset) {
  auto qp = *NewQp();
  ASSERT_TRUE(ctx->ModifyQp(qp->qpn, QpState::kInit, {}).ok());
  ASSERT_TRUE(ctx->ModifyQp(qp->qpn, QpState::kError, {}).ok());
  EXPECT_EQ(qp->state, QpState::kError);
  ASSERT_TRUE(ctx->ModifyQp(qp->qpn, QpState::kReset, {}).ok());
  EXPECT_EQ(qp->state, QpState::kReset);
}

TEST_F(Fixture, FirstMrnAndDistinctNonzeroKeys) {
  auto a = ctx->RegMr(pd, 0x1000, 4096, verbs::kAccessLocalWrite);
  auto b = ctx->RegMr(pd, 0x9000, 4096, verbs::kAccessLocalWrite);
  ASSERT_TRUE(a.ok() && b.ok());
  EXPECT_EQ((*a)->mrn, 1u);
  std::set<uint32_t> keys = {(*a)->lkey, (*a)->rkey, (*b)->lkey, (*b)->rkey};
  EXPECT_EQ(keys.size(), 4u);
  EXPECT_FALSE(keys.contains(0));
}

TEST_F(Fixture, ZeroLengthMrIsArgumentError) {
  EXPECT_EQ(ctx->RegMr(pd, 0x1000, 0, 0).status().code(),
            absl::StatusCode::kInvalidArgument);
}

TEST_F(Fixture, MrnExhaustionIsResourceError) {
  for (int i = 0; i < 99; ++i) {
    ASSERT_TRUE(ctx->RegMr(pd, 0x1000 + i * 0x100, 16, 0).ok());
  }
  EXPECT_EQ(ctx->RegMr(pd, 0x100000, 16, 0).status().code(),
            absl::StatusCode::kResourceExhausted);
}

TEST_F(Fixture, SetLastMrnSteersNextAllocation) {
  ASSERT_TRUE(dev.SetLastMrn(7).ok());
  EXPECT_EQ((*ctx->RegMr(pd, 0x1000, 16, 0))->mrn, 8u);
}

TEST_F(Fixture, PostSendInResetIsStateError) {
  auto qp = *NewQp();
  verbs::SendRequest sr;
  EXPECT_EQ(ctx->PostSend(qp->qpn, sr).code(),
            absl::StatusCode::kFailedPrecondition);
}

TEST_F(Fixture, PollEmptyCq) {
  auto wcs = ctx->PollCq(cq, 8);
  ASSERT_TRUE(wcs.ok());
  EXPECT_TRUE(wcs->empty());
}

TEST_F(Fixture, BadLkeyCompletesWithLocalLengthError) {
  auto qp = *NewQp();
  ASSERT_TRUE(ctx->ModifyQp(qp->qpn, QpState::kInit, {}).ok());
  verbs::QpAttr a;
  a.partner = verbs::PartnerAddress{verbs::Gid::FromSeed(2), 0x100};
  a.expected_psn = 0;
  ASSERT_TRUE(ctx->ModifyQp(qp->qpn, QpState::kRtr, a).ok());
  a = {};
  a.next_psn = 0;
  ASSERT_TRUE(ctx->ModifyQp(qp->qpn, QpState::kRts, a).ok());
  verbs::SendRequest sr;
  sr.wr_id = 9;
  sr.local = {0xdead, 0x1000, 64};
  ASSERT_TRUE(ctx->PostSend(qp->qpn, sr).ok());
  auto wcs = *ctx->PollCq(cq, 4);
  ASSERT_EQ(wcs.size(), 1u);
  EXPECT_EQ(wcs[0].wr_id, 9u);
  EXPECT_EQ(wcs[0].status, verbs::WcStatus::kLocLenErr);
}

TEST(PsnArithmetic, WrapsAt24Bits) {
  EXPECT_EQ(verbs::PsnAdd(0xFFFFFF, 1), 0u);
  EXPECT_EQ(verbs::PsnDiff(0, 0xFFFFFF), 1);
  EXPECT_TRUE(verbs::PsnLess(0xFFFFFE, 2));
}

// Loopback pair used for the completion-queue examples.
struct PairTest : ::testing::Test {
  PairTest() : net(Cfg()) {
    ha = testing::MakeHost("A", 1, 0);
    hb = testing::MakeHost("B", 2, 1);
    EXPECT_TRUE(ha->AttachTo(net).ok());
    EXPECT_TRUE(hb->AttachTo(net).ok());
    a = testing::MakeEndpoint(*ha, 1, 0x10000, 1 << 16);
    b = testing::MakeEndpoint(*hb, 1, 0x20000, 1 << 16);
    testing::Connect(a, b);
  }
  static netsim::NetConfig Cfg() {
    netsim::NetConfig c;
    c.latency_ticks = 3;
    return c;
  }
  netsim::Network net;
  std::unique_ptr<transport::Host> ha, hb;
  testing::Endpoint a, b;
};

TEST_F(PairTest, CompletionsAreFifo) {
  for (uint64_t i = 0; i < 3; ++i) {
    ASSERT_TRUE(b.ctx->PostRecv(b.qpn, {i, {b.lkey, b.base, 64}}).ok());
    verbs::SendRequest sr;
    sr.wr_id = 100 + i;
    sr.local = {a.lkey, a.base, 16};
    ASSERT_TRUE(a.ctx->PostSend(a.qpn, sr).ok());
  }
  net.RunToQuiescence();
  auto first = *a.ctx->PollCq(a.cq, 2);
  auto rest = *a.ctx->PollCq(a.cq, 2);
  ASSERT_EQ(first.size(), 2u);
  ASSERT_EQ(rest.size(), 1u);
  EXPECT_EQ(first[0].wr_id, 100u);
  EXPECT_EQ(first[1].wr_id, 101u);
  EXPECT_EQ(rest[0].wr_id, 102u);
}

TEST_F(PairTest, OversizedSendIntoSmallReceive) {
  ASSERT_TRUE(b.ctx->PostRecv(b.qpn, {1, {b.lkey, b.base, 512}}).ok());
  verbs::SendRequest sr;
  sr.wr_id = 5;
  sr.local = {a.lkey, a.base, 1024};
  ASSERT_TRUE(a.ctx->PostSend(a.qpn, sr).ok());
  net.RunToQuiescence();
  auto recv = testing::Drain(b);
  ASSERT_EQ(recv.size(), 1u);  // one WC for the one consumed RR
  EXPECT_EQ(recv[0].status, verbs::WcStatus::kLocLenErr);
  auto send = testing::Drain(a);
  ASSERT_EQ(send.size(), 1u);
  EXPECT_NE(send[0].status, verbs::WcStatus::kSuccess);
  bool saw_nak = false;
  for (const auto& r : net.trace().records()) {
    if (r.syndrome == static_cast<uint8_t>(transport::Syndrome::kNakRemOp)) {
      saw_nak = true;
    }
  }
  EXPECT_TRUE(saw_nak);
}

TEST_F(PairTest, SqdHoldsNewSendRequests) {
  ASSERT_TRUE(a.ctx->ModifyQp(a.qpn, QpState::kSqd, {}).ok());
  verbs::SendRequest sr;
  sr.local = {a.lkey, a.base, 16};
  ASSERT_TRUE(a.ctx->PostSend(a.qpn, sr).ok());
  transport::Outbox out;
  transport::RequesterStep(*a.ctx, *a.qp(), 0, out);
  EXPECT_TRUE(out.empty());
  EXPECT_FALSE(transport::RequesterReady(*a.qp()));
}

}  // namespace
}  // namespace migrsim
