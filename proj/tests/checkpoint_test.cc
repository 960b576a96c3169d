#include "checkpoint/checkpoint.h"

#include "checkpoint/image.h"
#include "gtest/gtest.h"
#include "test_util.h"
#include "transport/rc_transport.h"

namespace migrsim::checkpoint {
namespace {

using verbs::QpState;

struct CheckpointTest : ::testing::Test {
  void SetUp() override {
    net = std::make_unique<netsim::Network>(netsim::NetConfig{});
    ha = testing::MakeHost("A", 1, 0);
    hb = testing::MakeHost("B", 2, 1);
    hc = testing::MakeHost("C", 3, 2);
    ASSERT_TRUE(ha->AttachTo(*net).ok());
    ASSERT_TRUE(hb->AttachTo(*net).ok());
    ASSERT_TRUE(hc->AttachTo(*net).ok());
    a = testing::MakeEndpoint(*ha, 1, 0x10000, 8192);
    b = testing::MakeEndpoint(*hb, 1, 0x20000, 8192);
    testing::Connect(a, b);
  }
  std::unique_ptr<netsim::Network> net;
  std::unique_ptr<transport::Host> ha, hb, hc;
  testing::Endpoint a, b;
};

TEST_F(CheckpointTest, DumpCountsObjectsAndStopsQps) {
  auto host = testing::MakeHost("D", 4, 3);
  auto ctx = *host->device().OpenContext(9);
  const uint32_t pd = *ctx->AllocPd();
  const uint32_t cq = *ctx->CreateCq(8);
  verbs::QpInitAttr init;
  init.pd = pd;
  init.send_cq = cq;
  init.recv_cq = cq;
  auto qp = *ctx->CreateQp(init);
  auto img = DumpContext(*host, 9);
  ASSERT_TRUE(img.ok()) << img.status();
  EXPECT_EQ(img->object_count(), 3u);
  EXPECT_EQ(qp->state, QpState::kStopped);
  EXPECT_EQ(img->qps[0].state, QpState::kReset);
}

TEST_F(CheckpointTest, DumpRefusedWithoutMigrationSupport) {
  auto host = testing::MakeHost("D", 4, 3, /*migration=*/false);
  ASSERT_TRUE(host->device().OpenContext(1).ok());
  EXPECT_EQ(DumpContext(*host, 1).status().code(),
            absl::StatusCode::kFailedPrecondition);
}

TEST_F(CheckpointTest, UnknownContextIsArgumentError) {
  EXPECT_EQ(DumpContext(*ha, 99).status().code(),
            absl::StatusCode::kInvalidArgument);
}

TEST_F(CheckpointTest, PartnerSendingToDumpedQpSeesNakStopped) {
  ASSERT_TRUE(DumpContext(*hb, 1).ok());
  verbs::SendRequest sr;
  sr.local = {a.lkey, a.base, 64};
  ASSERT_TRUE(a.ctx->PostSend(a.qpn, sr).ok());
  net->RunToQuiescence();
  bool nak = false;
  for (const auto& r : net->trace().records()) {
    if (r.syndrome == static_cast<uint8_t>(transport::Syndrome::kNakStopped)) {
      nak = true;
    }
  }
  EXPECT_TRUE(nak);
  EXPECT_EQ(a.qp()->state, QpState::kPaused);
}

TEST_F(CheckpointTest, ErrorStateIsPreserved) {
  ASSERT_TRUE(a.ctx->ModifyQp(a.qpn, QpState::kError, {}).ok());
  auto img = DumpContext(*ha, 1);
  ASSERT_TRUE(img.ok());
  EXPECT_EQ(img->qps[0].state, QpState::kError);
  ASSERT_TRUE(ha->device().DestroyContext(1).ok());
  ASSERT_TRUE(RestoreImage(*hc, 1, *img).ok());
  EXPECT_EQ(hc->device().FindQp(a.qpn)->state, QpState::kError);
}

TEST(IdSteering, SetLastThenCreate) {
  verbs::DeviceConfig cfg;
  cfg.qpn_range = {0x40, 0x80};
  cfg.mrn_range = {1, 64};
  verbs::Device dev({verbs::Gid::FromSeed(3), 1, 3}, cfg);
  auto ctx = *dev.OpenContext(1);
  const uint32_t pd = *ctx->AllocPd();
  const uint32_t cq = *ctx->CreateCq(8);
  verbs::QpInitAttr init{pd, cq, cq};
  ASSERT_TRUE(dev.SetLastQpn(0x41).ok());
  EXPECT_EQ((*ctx->CreateQp(init))->qpn, 0x42u);
  ASSERT_TRUE(dev.SetLastMrn(7).ok());
  EXPECT_EQ((*ctx->RegMr(pd, 0x1000, 64, 0))->mrn, 8u);
  // Occupied target: allocation moves on, restore reports the mismatch.
  ASSERT_TRUE(dev.SetLastQpn(0x41).ok());
  EXPECT_EQ((*ctx->CreateQp(init))->qpn, 0x43u);
}

TEST_F(CheckpointTest, OccupiedQpnIsCollision) {
  auto img = DumpContext(*ha, 1);
  ASSERT_TRUE(img.ok());
  // C already has a QP with A's qpn.
  auto cctx = *hc->device().OpenContext(5);
  const uint32_t pd = *cctx->AllocPd();
  const uint32_t cq = *cctx->CreateCq(8);
  ASSERT_TRUE(hc->device().SetLastQpn(a.qpn - 1).ok());
  ASSERT_EQ((*cctx->CreateQp({pd, cq, cq}))->qpn, a.qpn);
  auto st = RestoreImage(*hc, 1, *img);
  EXPECT_EQ(st.code(), absl::StatusCode::kAlreadyExists) << st;
}

TEST_F(CheckpointTest, OccupiedMrnIsCollision) {
  auto img = DumpContext(*ha, 1);
  ASSERT_TRUE(img.ok());
  auto cctx = *hc->device().OpenContext(5);
  const uint32_t pd = *cctx->AllocPd();
  ASSERT_TRUE(hc->device().SetLastMrn(a.mrn - 1).ok());
  ASSERT_EQ((*cctx->RegMr(pd, 0x1000, 16, 0))->mrn, a.mrn);
  EXPECT_EQ(RestoreImage(*hc, 1, *img).code(), absl::StatusCode::kAlreadyExists);
}

TEST_F(CheckpointTest, StagedRestoreEmitsResumeWithDumpedPsn) {
  verbs::SendRequest sr;
  sr.local = {a.lkey, a.base, 4000};
  ASSERT_TRUE(a.ctx->PostSend(a.qpn, sr).ok());
  // Let A emit but deliver nothing: B's side is black-holed.
  net->set_drop_filter([](const netsim::Datagram&) { return true; });
  net->RunUntil(nullptr, 3);
  auto img = DumpContext(*ha, 1);
  ASSERT_TRUE(img.ok());
  const uint32_t fu = img->qps[0].first_unacked_psn;
  ASSERT_TRUE(ha->device().DestroyContext(1).ok());
  std::vector<transport::Packet> sent;
  net->set_drop_filter([&](const netsim::Datagram& d) {
    if (auto p = transport::Decode(d.bytes); p.ok()) sent.push_back(*p);
    return false;
  });

  ASSERT_TRUE(hc->device().OpenContext(1).ok());
  auto mr = EncodeBody(img->mrs[0]);
  ASSERT_TRUE(RestoreObject(*hc, 1, ObjectType::kPd, RestoreCommand::kCreate,
                            EncodeBody(img->pds[0]))
                  .ok());
  auto mrn = RestoreObject(*hc, 1, ObjectType::kMr, RestoreCommand::kCreate, mr);
  ASSERT_TRUE(mrn.ok()) << mrn.status();
  EXPECT_EQ(*mrn, a.mrn);
  ASSERT_TRUE(RestoreObject(*hc, 1, ObjectType::kMr, RestoreCommand::kSetMrKeys, mr)
                  .ok());
  ASSERT_TRUE(RestoreObject(*hc, 1, ObjectType::kCq, RestoreCommand::kCreate,
                            EncodeBody(img->cqs[0]))
                  .ok());
  const QpRecord& q = img->qps[0];
  auto qpn = RestoreObject(*hc, 1, ObjectType::kQp, RestoreCommand::kCreate,
                           EncodeBody(q));
  ASSERT_TRUE(qpn.ok()) << qpn.status();
  EXPECT_EQ(*qpn, a.qpn);
  verbs::Context* ctx = hc->device().FindContext(1);
  // REFILL before RTS is refused.
  ASSERT_TRUE(ctx->ModifyQp(q.qpn, QpState::kInit, {}).ok());
  EXPECT_EQ(RestoreObject(*hc, 1, ObjectType::kQp, RestoreCommand::kRefill,
                          EncodeBody(q))
                .status()
                .code(),
            absl::StatusCode::kFailedPrecondition);
  verbs::QpAttr attr;
  attr.partner = q.partner;
  attr.expected_psn = q.expected_psn;
  ASSERT_TRUE(ctx->ModifyQp(q.qpn, QpState::kRtr, attr).ok());
  attr = {};
  attr.next_psn = q.next_psn;
  ASSERT_TRUE(ctx->ModifyQp(q.qpn, QpState::kRts, attr).ok());
  ASSERT_TRUE(RestoreObject(*hc, 1, ObjectType::kQp, RestoreCommand::kRefill,
                            EncodeBody(q))
                  .ok());
  ASSERT_FALSE(sent.empty());
  EXPECT_EQ(sent[0].opcode, transport::Opcode::kResume);
  EXPECT_EQ(sent[0].psn, fu);
  EXPECT_EQ(sent[0].resume->src_gid, hc->gid());

  // Keys are the dumped ones.
  const auto& m = ctx->mrs().at(a.mrn);
  EXPECT_EQ(m.lkey, a.lkey);
  EXPECT_EQ(m.rkey, a.rkey);
}

TEST_F(CheckpointTest, RestoreOnFreshNodeReproducesImage) {
  for (uint64_t i = 0; i < 3; ++i) {
    ASSERT_TRUE(a.ctx->PostRecv(a.qpn, {i, {a.lkey, a.base + i * 64, 64}}).ok());
  }
  ASSERT_TRUE(a.ctx->WriteMemory(a.base, testing::Pattern(8192, 3)).ok());
  auto img = DumpContext(*ha, 1);
  ASSERT_TRUE(img.ok());
  ASSERT_TRUE(ha->device().DestroyContext(1).ok());
  ASSERT_TRUE(RestoreImage(*hc, 1, *img).ok());
  auto again = DumpContext(*hc, 1);
  ASSERT_TRUE(again.ok());
  again->node_gid = img->node_gid;
  EXPECT_EQ(*again, *img);
  EXPECT_EQ(EncodeImage(*again), EncodeImage(*img));
}

TEST_F(CheckpointTest, ImageCodecRoundTripAndRejects) {
  auto img = DumpContext(*ha, 1);
  ASSERT_TRUE(img.ok());
  auto bytes = EncodeImage(*img);
  ASSERT_GE(bytes.size(), 4u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "MGRD");
  auto back = DecodeImage(bytes);
  ASSERT_TRUE(back.ok()) << back.status();
  EXPECT_EQ(*back, *img);
  EXPECT_EQ(EncodeImage(*back), bytes);

  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_FALSE(DecodeImage(bad).ok());
  bad = bytes;
  bad.pop_back();
  EXPECT_FALSE(DecodeImage(bad).ok());
  bad = bytes;
  bad.push_back(0);
  EXPECT_FALSE(DecodeImage(bad).ok());
}

TEST_F(CheckpointTest, PlanOrdersCreationBeforeQpWalk) {
  auto img = DumpContext(*ha, 1);
  ASSERT_TRUE(img.ok());
  auto plan = PlanRestore(*img);
  std::vector<StepAction> qp_actions;
  std::vector<ObjectType> types;
  for (const auto& s : plan) {
    types.push_back(s.type);
    if (s.type == ObjectType::kQp) qp_actions.push_back(s.action);
  }
  EXPECT_TRUE(std::is_sorted(types.begin(), types.end()));
  EXPECT_EQ(qp_actions,
            (std::vector<StepAction>{StepAction::kCreate, StepAction::kToInit,
                                     StepAction::kToRtr, StepAction::kToRts,
                                     StepAction::kRefill}));
}

}  // namespace
}  // namespace migrsim::checkpoint
