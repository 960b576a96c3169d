#include <sstream>

#include "gtest/gtest.h"
#include "netsim/network.h"
#include "test_util.h"

namespace migrsim::netsim {
namespace {

// Counts deliveries and the tick they happened at.
class Sink : public SimNode {
 public:
  Sink(std::string name, uint64_t seed)
      : name_(std::move(name)), gid_(verbs::Gid::FromSeed(seed)) {}
  const verbs::Gid& gid() const override { return gid_; }
  const std::string& name() const override { return name_; }
  void Deliver(Network& net, const Datagram&) override {
    ticks.push_back(net.now());
  }
  void Step(Network&) override {}
  std::optional<Tick> NextActivity(Tick) const override { return std::nullopt; }
  void StateHistogram(std::map<std::string, uint64_t>&) const override {}
  std::vector<Tick> ticks;

 private:
  std::string name_;
  verbs::Gid gid_;
};

Datagram To(const SimNode& from, const SimNode& to) {
  Datagram d;
  d.src = from.gid();
  d.dst = to.gid();
  d.kind = DatagramKind::kImageChunk;
  d.info.op = "CHUNK";
  return d;
}

TEST(Network, LosslessDeliversOnceAfterLatency) {
  NetConfig c;
  c.latency_ticks = 4;
  Network net(c);
  Sink a("a", 1), b("b", 2);
  ASSERT_TRUE(net.Attach(&a).ok());
  ASSERT_TRUE(net.Attach(&b).ok());
  for (int i = 0; i < 100; ++i) net.Send(To(a, b));
  net.RunToQuiescence();
  ASSERT_EQ(b.ticks.size(), 100u);
  for (Tick t : b.ticks) EXPECT_EQ(t, 4u);
  EXPECT_EQ(net.counters().dropped, 0u);
}

uint64_t DropsFor(uint64_t seed) {
  NetConfig c;
  c.seed = seed;
  c.loss_rate = 0.999;
  Network net(c);
  Sink a("a", 1), b("b", 2);
  EXPECT_TRUE(net.Attach(&a).ok());
  EXPECT_TRUE(net.Attach(&b).ok());
  for (int i = 0; i < 10000; ++i) net.Send(To(a, b));
  net.RunToQuiescence();
  EXPECT_EQ(b.ticks.size() + net.counters().dropped, 10000u);
  return net.counters().dropped;
}

TEST(Network, SeededLossIsReproducible) {
  const uint64_t d = DropsFor(11);
  EXPECT_EQ(DropsFor(11), d);
  EXPECT_GT(d, 9900u);
  EXPECT_LT(d, 10000u);
}

TEST(Network, UnknownDestinationIsDropped) {
  Network net(NetConfig{});
  Sink a("a", 1), ghost("ghost", 3);
  ASSERT_TRUE(net.Attach(&a).ok());
  net.Send(To(a, ghost));
  net.RunToQuiescence();
  EXPECT_EQ(net.counters().unroutable, 1u);
}

TEST(Network, DuplicateGidRejected) {
  Network net(NetConfig{});
  Sink a("a", 1), a2("a2", 1);
  ASSERT_TRUE(net.Attach(&a).ok());
  EXPECT_FALSE(net.Attach(&a2).ok());
}

TEST(Network, EmptyRunEndsAtTickZero) {
  Network net(NetConfig{});
  auto r = net.RunToQuiescence();
  EXPECT_EQ(r.end_tick, 0u);
  EXPECT_TRUE(r.quiescent);
}

TEST(Network, BudgetExhaustionIsReportedNotThrown) {
  Network net(NetConfig{});
  net.AddTickHook([](Network& n) -> std::optional<Tick> { return n.now() + 1; });
  auto r = net.RunUntil([] { return false; }, 50);
  EXPECT_TRUE(r.budget_exhausted);
  EXPECT_FALSE(r.predicate_met);
}

TEST(Network, ConfigValidation) {
  NetConfig c;
  c.loss_rate = 1.0;
  EXPECT_FALSE(c.Validate().ok());
  c.loss_rate = -0.1;
  EXPECT_FALSE(c.Validate().ok());
  c = {};
  c.latency_ticks = 0;
  EXPECT_FALSE(c.Validate().ok());
}

struct Ping {
  Tick recv_wc = 0;
  Tick ack_rx = 0;
};

Ping RunPing() {
  NetConfig c;
  c.latency_ticks = 3;
  Network net(c);
  auto ha = testing::MakeHost("A", 1, 0);
  auto hb = testing::MakeHost("B", 2, 1);
  EXPECT_TRUE(ha->AttachTo(net).ok());
  EXPECT_TRUE(hb->AttachTo(net).ok());
  auto a = testing::MakeEndpoint(*ha, 1, 0x10000, 4096);
  auto b = testing::MakeEndpoint(*hb, 1, 0x20000, 4096);
  testing::Connect(a, b);
  EXPECT_TRUE(b.ctx->PostRecv(b.qpn, {1, {b.lkey, b.base, 64}}).ok());
  verbs::SendRequest sr;
  sr.local = {a.lkey, a.base, 32};
  EXPECT_TRUE(a.ctx->PostSend(a.qpn, sr).ok());
  Ping p;
  net.AddTickHook([&](Network& n) -> std::optional<Tick> {
    // Deliveries are processed before hooks, so this sees the WC the tick it
    // is raised.
    if (p.recv_wc == 0 && !b.ctx->cqs().at(b.cq).ring.empty()) {
      p.recv_wc = n.now();
    }
    return std::nullopt;
  });
  net.RunToQuiescence();
  for (const auto& r : net.trace().records()) {
    if (r.dir == TraceDir::kRx && r.op == "ACK") p.ack_rx = r.tick;
  }
  return p;
}

TEST(Network, PingLatencyArithmetic) {
  Ping p = RunPing();
  EXPECT_EQ(p.recv_wc, 3u);
  EXPECT_EQ(p.ack_rx, 6u);
}

std::string TraceText(uint64_t seed, double loss, double dup) {
  NetConfig c;
  c.seed = seed;
  c.loss_rate = loss;
  c.dup_rate = dup;
  Network net(c);
  auto ha = testing::MakeHost("A", 1, 0);
  auto hb = testing::MakeHost("B", 2, 1);
  EXPECT_TRUE(ha->AttachTo(net).ok());
  EXPECT_TRUE(hb->AttachTo(net).ok());
  auto a = testing::MakeEndpoint(*ha, 1, 0x10000, 1 << 16);
  auto b = testing::MakeEndpoint(*hb, 1, 0x20000, 1 << 16);
  testing::ConnectOptions o;
  o.max_retries = verbs::kInfiniteRetries;
  testing::Connect(a, b, o);
  for (uint64_t i = 0; i < 50; ++i) {
    EXPECT_TRUE(b.ctx->PostRecv(b.qpn, {i, {b.lkey, b.base, 4096}}).ok());
    verbs::SendRequest sr;
    sr.wr_id = i;
    sr.local = {a.lkey, a.base, 3000};
    EXPECT_TRUE(a.ctx->PostSend(a.qpn, sr).ok());
  }
  net.RunToQuiescence();
  auto sends = testing::Drain(a);
  auto recvs = testing::Drain(b);
  EXPECT_EQ(sends.size(), 50u);
  EXPECT_EQ(recvs.size(), 50u);
  for (std::size_t i = 0; i < recvs.size(); ++i) {
    EXPECT_EQ(recvs[i].wr_id, i);
    EXPECT_EQ(recvs[i].status, verbs::WcStatus::kSuccess);
  }
  std::ostringstream ss;
  net.trace().Write(ss);
  return ss.str();
}

TEST(Network, DuplicatesProduceNoDuplicateCompletions) {
  TraceText(3, 0.0, 0.5);
}

TEST(Network, IdenticalSeedIdenticalTrace) {
  EXPECT_EQ(TraceText(9, 0.1, 0.1), TraceText(9, 0.1, 0.1));
  EXPECT_NE(TraceText(9, 0.1, 0.1), TraceText(10, 0.1, 0.1));
}

TEST(Trace, LineFormat) {
  Trace t;
  t.AddNode("N1");
  TraceRecord r;
  r.tick = 12;
  r.dir = TraceDir::kTx;
  r.node = 0;
  r.qpn = 65536;
  r.op = "ACK";
  r.psn = 7;
  r.syndrome = 0x6f;
  EXPECT_EQ(t.FormatLine(r), "12 tx N1 65536 ACK 7 0x6f 0");
  r.syndrome.reset();
  r.op = "SEND_ONLY";
  r.len = 64;
  EXPECT_EQ(t.FormatLine(r), "12 tx N1 65536 SEND_ONLY 7 - 64");
}

TEST(Trace, HashIsFnv1aOfWrittenText) {
  Trace t;
  t.AddNode("N1");
  TraceRecord r;
  r.op = "RESUME";
  t.Add(r);
  std::ostringstream ss;
  t.Write(ss);
  // Reference FNV-1a 64 computed here, independent of the Trace code.
  uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char ch : ss.str()) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  EXPECT_EQ(t.Hash(), h);
}

}  // namespace
}  // namespace migrsim::netsim
