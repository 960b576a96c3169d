#include "gtest/gtest.h"
#include "test_util.h"
#include "transport/packet.h"
#include "transport/rc_transport.h"

namespace migrsim::transport {
namespace {

using verbs::QpState;

struct TransportTest : ::testing::Test {
  void SetUp() override { Build({}); }

  void Build(testing::ConnectOptions o) {
    ha.reset();
    hb.reset();
    net = std::make_unique<netsim::Network>(netsim::NetConfig{});
    ha = testing::MakeHost("A", 1, 0);
    hb = testing::MakeHost("B", 2, 1);
    ASSERT_TRUE(ha->AttachTo(*net).ok());
    ASSERT_TRUE(hb->AttachTo(*net).ok());
    a = testing::MakeEndpoint(*ha, 1, 0x10000, 1 << 16);
    b = testing::MakeEndpoint(*hb, 1, 0x20000, 1 << 16);
    testing::Connect(a, b, o);
  }

  void PostSend(uint64_t wr_id, uint32_t len) {
    verbs::SendRequest sr;
    sr.wr_id = wr_id;
    sr.local = {a.lkey, a.base, len};
    ASSERT_TRUE(a.ctx->PostSend(a.qpn, sr).ok());
  }

  // Runs the requester until it stops producing packets.
  Outbox Emit(Tick now = 0) {
    Outbox all;
    for (int i = 0; i < 100; ++i) {
      Outbox out;
      RequesterStep(*a.ctx, *a.qp(), now, out);
      if (out.empty()) break;
      EXPECT_EQ(out.size(), 1u);
      all.insert(all.end(), out.begin(), out.end());
    }
    return all;
  }

  Packet DataPacket(Opcode op, uint32_t psn, uint32_t len) {
    Packet p;
    p.opcode = op;
    p.dest_qpn = b.qpn;
    p.psn = psn;
    p.ack_requested = EndsMessage(op);
    p.payload.assign(len, 0x7E);
    return p;
  }

  Packet AckFor(uint32_t psn, Syndrome s = Syndrome::kAckOk) {
    Packet p;
    p.opcode = Opcode::kAck;
    p.dest_qpn = a.qpn;
    p.psn = psn;
    p.aeth = Aeth{s, 0};
    return p;
  }

  std::unique_ptr<netsim::Network> net;
  std::unique_ptr<Host> ha, hb;
  testing::Endpoint a, b;
};

TEST_F(TransportTest, SegmentsIntoMtuPackets) {
  Build({.psn_a = 5});
  PostSend(1, 3000);
  auto out = Emit();
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].pkt.opcode, Opcode::kSendFirst);
  EXPECT_EQ(out[0].pkt.psn, 5u);
  EXPECT_EQ(out[1].pkt.opcode, Opcode::kSendMiddle);
  EXPECT_EQ(out[1].pkt.psn, 6u);
  EXPECT_EQ(out[2].pkt.opcode, Opcode::kSendLast);
  EXPECT_EQ(out[2].pkt.psn, 7u);
  EXPECT_EQ(out[2].pkt.payload.size(), 3000u - 2048u);
  EXPECT_EQ(a.qp()->req.next_psn, 8u);
  EXPECT_TRUE(out[2].pkt.ack_requested);
}

TEST_F(TransportTest, TwoAndAHalfMtu) {
  PostSend(1, 2560);
  auto out = Emit();
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].pkt.payload.size(), 1024u);
  EXPECT_EQ(out[1].pkt.payload.size(), 1024u);
  EXPECT_EQ(out[2].pkt.payload.size(), 512u);
}

TEST_F(TransportTest, ZeroLengthSendIsSendOnly) {
  PostSend(1, 0);
  auto out = Emit();
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].pkt.opcode, Opcode::kSendOnly);
  EXPECT_TRUE(out[0].pkt.payload.empty());
}

TEST_F(TransportTest, PausedAndStoppedEmitNothing) {
  PostSend(1, 100);
  a.ctx->SetState(*a.qp(), QpState::kPaused);
  EXPECT_TRUE(Emit().empty());
  a.ctx->SetState(*a.qp(), QpState::kStopped);
  EXPECT_TRUE(Emit().empty());
}

TEST_F(TransportTest, InOrderSendOnlyDelivered) {
  Build({.psn_a = 7});
  ASSERT_TRUE(b.ctx->PostRecv(b.qpn, {3, {b.lkey, b.base, 64}}).ok());
  Outbox out;
  ResponderHandle(*b.ctx, *b.qp(), DataPacket(Opcode::kSendOnly, 7, 16),
                  ha->gid(), a.qpn, out);
  EXPECT_EQ(b.qp()->rsp.expected_psn, 8u);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].pkt.opcode, Opcode::kAck);
  EXPECT_EQ(out[0].pkt.psn, 7u);
  EXPECT_EQ(out[0].pkt.aeth->syndrome, Syndrome::kAckOk);
  auto wcs = testing::Drain(b);
  ASSERT_EQ(wcs.size(), 1u);
  EXPECT_EQ(wcs[0].byte_len, 16u);
  EXPECT_EQ(*b.ctx->ReadMemory(b.base, 16), std::vector<uint8_t>(16, 0x7E));
}

TEST_F(TransportTest, StoppedResponderNaks) {
  Build({.psn_a = 7});
  ASSERT_TRUE(b.ctx->PostRecv(b.qpn, {3, {b.lkey, b.base, 64}}).ok());
  b.ctx->SetState(*b.qp(), QpState::kStopped);
  Outbox out;
  ResponderHandle(*b.ctx, *b.qp(), DataPacket(Opcode::kSendOnly, 7, 16),
                  ha->gid(), a.qpn, out);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].pkt.psn, 7u);
  EXPECT_EQ(out[0].pkt.aeth->syndrome, Syndrome::kNakStopped);
  EXPECT_EQ(b.qp()->rsp.expected_psn, 7u);
  EXPECT_EQ(b.qp()->rq.size(), 1u);
  EXPECT_TRUE(testing::Drain(b).empty());
}

TEST_F(TransportTest, GapTriggersSequenceNak) {
  Build({.psn_a = 7});
  ASSERT_TRUE(b.ctx->PostRecv(b.qpn, {3, {b.lkey, b.base, 64}}).ok());
  Outbox out;
  ResponderHandle(*b.ctx, *b.qp(), DataPacket(Opcode::kSendOnly, 9, 16),
                  ha->gid(), a.qpn, out);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].pkt.aeth->syndrome, Syndrome::kNakPsnSeq);
  EXPECT_EQ(out[0].pkt.psn, 7u);
}

TEST_F(TransportTest, DuplicateIsReacked) {
  Build({.psn_a = 7});
  ASSERT_TRUE(b.ctx->PostRecv(b.qpn, {3, {b.lkey, b.base, 64}}).ok());
  Outbox out;
  auto p = DataPacket(Opcode::kSendOnly, 7, 16);
  ResponderHandle(*b.ctx, *b.qp(), p, ha->gid(), a.qpn, out);
  out.clear();
  ResponderHandle(*b.ctx, *b.qp(), p, ha->gid(), a.qpn, out);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].pkt.aeth->syndrome, Syndrome::kAckOk);
  EXPECT_EQ(testing::Drain(b).size(), 1u);
}

// Loopback oracle: drop the packets carrying PSN 7 and 8 on the wire and
// watch for the receiver's NAK naming the first missing PSN.
TEST_F(TransportTest, LoopbackDropsProduceSequenceNak) {
  Build({.psn_a = 5});
  for (uint64_t i = 0; i < 6; ++i) {
    ASSERT_TRUE(b.ctx->PostRecv(b.qpn, {i, {b.lkey, b.base, 1024}}).ok());
    PostSend(i, 100);
  }
  int dropped = 0;
  net->set_drop_filter([&](const netsim::Datagram& d) {
    if (d.src == ha->gid() && (d.info.psn == 7 || d.info.psn == 8) &&
        dropped < 2) {
      ++dropped;
      return true;
    }
    return false;
  });
  net->RunToQuiescence();
  bool saw = false;
  for (const auto& r : net->trace().records()) {
    if (r.dir == netsim::TraceDir::kTx && r.node == 1 && r.syndrome &&
        *r.syndrome == static_cast<uint8_t>(Syndrome::kNakPsnSeq)) {
      EXPECT_EQ(r.psn, 7u);
      saw = true;
    }
  }
  EXPECT_TRUE(saw);
  EXPECT_EQ(testing::Drain(b).size(), 6u);
}

TEST_F(TransportTest, AckRetiresThroughPsn) {
  Build({.psn_a = 5});
  PostSend(1, 3000);
  ASSERT_EQ(Emit().size(), 3u);
  CompleterHandle(*a.ctx, *a.qp(), AckFor(6), hb->gid(), 10);
  EXPECT_EQ(a.qp()->req.first_unacked_psn, 7u);
  ASSERT_EQ(a.qp()->req.inflight.size(), 1u);
  EXPECT_EQ(a.qp()->req.inflight.front().psn, 7u);
  EXPECT_TRUE(testing::Drain(a).empty());
  CompleterHandle(*a.ctx, *a.qp(), AckFor(7), hb->gid(), 11);
  auto wcs = testing::Drain(a);
  ASSERT_EQ(wcs.size(), 1u);
  EXPECT_EQ(wcs[0].wr_id, 1u);
}

TEST_F(TransportTest, StaleAckIsNoOp) {
  Build({.psn_a = 5});
  PostSend(1, 3000);
  Emit();
  CompleterHandle(*a.ctx, *a.qp(), AckFor(6), hb->gid(), 10);
  const auto before = a.qp()->req.inflight;
  CompleterHandle(*a.ctx, *a.qp(), AckFor(5), hb->gid(), 12);
  EXPECT_EQ(a.qp()->req.inflight, before);
  EXPECT_EQ(a.qp()->req.first_unacked_psn, 7u);
}

TEST_F(TransportTest, NakStoppedPauses) {
  PostSend(1, 100);
  auto out = Emit();
  ASSERT_EQ(out.size(), 1u);
  PostSend(2, 100);
  CompleterHandle(*a.ctx, *a.qp(), AckFor(out[0].pkt.psn, Syndrome::kNakStopped),
                  hb->gid(), 5);
  EXPECT_EQ(a.qp()->state, QpState::kPaused);
  EXPECT_EQ(a.qp()->retry.retries_used, 0u);
  EXPECT_TRUE(Emit().empty());
}

TEST_F(TransportTest, TimeoutResendsWindowInOrder) {
  Build({.psn_a = 5});
  PostSend(1, 3000);
  ASSERT_EQ(Emit(0).size(), 3u);
  Outbox t;
  TimerStep(*a.ctx, *a.qp(), ha->gid(), 1000, t);
  auto again = Emit(1000);
  ASSERT_EQ(again.size(), 3u);
  EXPECT_EQ(again[0].pkt.psn, 5u);
  EXPECT_EQ(again[1].pkt.psn, 6u);
  EXPECT_EQ(again[2].pkt.psn, 7u);
  EXPECT_EQ(a.qp()->retry.retries_used, 1u);
}

TEST_F(TransportTest, PausedTimerIsFrozen) {
  PostSend(1, 3000);
  ASSERT_EQ(Emit(0).size(), 3u);
  CompleterHandle(*a.ctx, *a.qp(),
                  AckFor(a.qp()->req.first_unacked_psn, Syndrome::kNakStopped),
                  hb->gid(), 1);
  ASSERT_EQ(a.qp()->state, QpState::kPaused);
  Outbox t;
  TimerStep(*a.ctx, *a.qp(), ha->gid(), 1'000'000, t);
  EXPECT_TRUE(t.empty());
  EXPECT_TRUE(Emit(1'000'000).empty());
  EXPECT_EQ(a.qp()->retry.retries_used, 0u);
}

TEST_F(TransportTest, RetryBudgetExhaustion) {
  Build({.max_retries = 3});
  PostSend(1, 100);
  Emit(0);
  Tick now = 0;
  for (int i = 0; i < 4; ++i) {
    now += 1'000'000;
    Outbox t;
    TimerStep(*a.ctx, *a.qp(), ha->gid(), now, t);
    if (i < 3) {
      EXPECT_NE(a.qp()->state, QpState::kError) << "timeout " << i + 1;
      Emit(now);
    }
  }
  EXPECT_EQ(a.qp()->state, QpState::kError);
  auto wcs = testing::Drain(a);
  ASSERT_FALSE(wcs.empty());
  EXPECT_EQ(wcs[0].status, verbs::WcStatus::kRetryExcErr);
}

TEST_F(TransportTest, ResumeCarriesFirstUnacked) {
  Build({.psn_a = 4});
  PostSend(1, 6 * 1024);
  Emit();
  CompleterHandle(*a.ctx, *a.qp(), AckFor(4), hb->gid(), 1);
  Outbox out;
  SendResume(*a.qp(), ha->gid(), 2, out);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].pkt.opcode, Opcode::kResume);
  EXPECT_EQ(out[0].pkt.psn, 5u);
  EXPECT_EQ(out[0].pkt.resume->first_unacked_psn, 5u);
  EXPECT_EQ(out[0].pkt.resume->src_qpn, a.qpn);
}

TEST_F(TransportTest, ResumeAnsweredWithLastReceived) {
  Build({.psn_a = 7});
  Packet r;
  r.opcode = Opcode::kResume;
  r.dest_qpn = b.qpn;
  r.psn = 5;
  auto moved = verbs::Gid::FromSeed(77);
  r.resume = ResumeInfo{moved, 0x40001, 5};
  Outbox out;
  HandleResume(*b.ctx, *b.qp(), r, moved, out);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].dst, moved);
  EXPECT_EQ(out[0].pkt.psn, 6u);
  EXPECT_EQ(out[0].pkt.aeth->syndrome, Syndrome::kAckOk);
  EXPECT_EQ(b.qp()->partner->gid, moved);
  EXPECT_EQ(b.qp()->partner->qpn, 0x40001u);
  EXPECT_EQ(b.qp()->state, QpState::kRts);
  // Idempotent.
  out.clear();
  HandleResume(*b.ctx, *b.qp(), r, moved, out);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].pkt.psn, 6u);
}

TEST_F(TransportTest, ResumeUnpausesAndQueuedWorkFlows) {
  PostSend(1, 100);
  auto first = Emit();
  CompleterHandle(*a.ctx, *a.qp(),
                  AckFor(first[0].pkt.psn, Syndrome::kNakStopped), hb->gid(),
                  1);
  PostSend(2, 100);
  ASSERT_EQ(a.qp()->state, QpState::kPaused);
  Packet r;
  r.opcode = Opcode::kResume;
  r.dest_qpn = a.qpn;
  auto moved = verbs::Gid::FromSeed(55);
  r.resume = ResumeInfo{moved, 0x50001, 0};
  Outbox out;
  HandleResume(*a.ctx, *a.qp(), r, moved, out);
  EXPECT_EQ(a.qp()->state, QpState::kRts);
  EXPECT_EQ(a.qp()->partner->gid, moved);
  auto resent = Emit(2);
  ASSERT_FALSE(resent.empty());
  EXPECT_EQ(resent[0].dst, moved);
  EXPECT_EQ(resent[0].pkt.dest_qpn, 0x50001u);
}

TEST_F(TransportTest, StoppedQpRefusesResume) {
  b.ctx->SetState(*b.qp(), QpState::kStopped);
  Packet r;
  r.opcode = Opcode::kResume;
  r.dest_qpn = b.qpn;
  r.psn = 3;
  r.resume = ResumeInfo{verbs::Gid::FromSeed(66), 0x60001, 3};
  Outbox out;
  HandleResume(*b.ctx, *b.qp(), r, verbs::Gid::FromSeed(66), out);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].pkt.aeth->syndrome, Syndrome::kNakStopped);
  EXPECT_EQ(b.qp()->state, QpState::kStopped);
}

TEST_F(TransportTest, ResumeIsSentEvenIfPartnerNeverPaused) {
  a.qp()->req.resume_pending = true;
  Outbox out;
  SendResume(*a.qp(), ha->gid(), 0, out);
  for (auto& o : out) {
    Outbox reply;
    HandleResume(*b.ctx, *b.qp(), o.pkt, ha->gid(), reply);
    ASSERT_EQ(reply.size(), 1u);
    EXPECT_EQ(reply[0].pkt.aeth->syndrome, Syndrome::kAckOk);
  }
  EXPECT_EQ(out.size(), 1u);
  EXPECT_EQ(b.qp()->state, QpState::kRts);
}

// RESUME delivery under 50% loss on the resume path: the requester keeps
// retrying and the pair reconnects for every seed.
TEST(ResumeLoss, ConvergesUnderSeedSweep) {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    netsim::NetConfig c;
    c.seed = seed;
    netsim::Network net(c);
    auto ha = testing::MakeHost("A", 1, 0);
    auto hb = testing::MakeHost("B", 2, 1);
    ASSERT_TRUE(ha->AttachTo(net).ok());
    ASSERT_TRUE(hb->AttachTo(net).ok());
    auto a = testing::MakeEndpoint(*ha, 1, 0x10000, 4096);
    auto b = testing::MakeEndpoint(*hb, 1, 0x20000, 4096);
    testing::Connect(a, b, {.timeout_ticks = 8});
    ASSERT_TRUE(b.ctx->PostRecv(b.qpn, {1, {b.lkey, b.base, 64}}).ok());
    verbs::SendRequest sr;
    sr.local = {a.lkey, a.base, 32};
    ASSERT_TRUE(a.ctx->PostSend(a.qpn, sr).ok());
    a.qp()->req.resume_pending = true;
    Outbox out;
    SendResume(*a.qp(), ha->gid(), 0, out);
    Xorshift64Star rng(seed);
    net.set_drop_filter([&](const netsim::Datagram& d) {
      return d.info.op == "RESUME" && rng.NextUnit() < 0.5;
    });
    ha->Transmit(a.qpn, out);
    net.RunToQuiescence();
    EXPECT_FALSE(a.qp()->req.resume_pending) << "seed " << seed;
    EXPECT_EQ(testing::Drain(b).size(), 1u) << "seed " << seed;
    EXPECT_EQ(testing::Drain(a).size(), 1u) << "seed " << seed;
  }
}

}  // namespace
}  // namespace migrsim::transport
