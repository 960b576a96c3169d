#include "scenario/scenario.h"

#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "scenario/runner.h"

namespace migrsim::scenario {
namespace {

using ::testing::HasSubstr;

constexpr char kPair[] = R"(net:
  seed: 3
  latency_ticks: 2
nodes:
  - name: a
  - name: b
contexts:
  - id: 1
    node: a
    qps:
      - name: qa
        partner: qb
  - id: 2
    node: b
    qps:
      - name: qb
        partner: qa
traffic:
  - qp: qa
    count: 20
    msg_size: [100, 3000]
    interval_ticks: 1
)";

RunResult Execute(const Scenario& s, const RunOptions& o) {
  auto r = RunScenario(s, o);
  EXPECT_TRUE(r.ok()) << r.status();
  return r.ok() ? *std::move(r) : RunResult{};
}

std::string ErrorOf(std::string_view text) {
  auto s = ParseScenario(text, "t.yaml");
  EXPECT_FALSE(s.ok());
  return std::string(s.status().message());
}

TEST(ScenarioParse, DefaultsApplied) {
  auto s = ParseScenario(kPair, "t.yaml");
  ASSERT_TRUE(s.ok()) << s.status();
  EXPECT_EQ(s->net.seed, 3u);
  EXPECT_EQ(s->net.latency_ticks, 2u);
  ASSERT_EQ(s->nodes.size(), 2u);
  EXPECT_EQ(s->nodes[0].gid_seed, 1u);
  EXPECT_EQ(s->nodes[1].gid_seed, 2u);
  const auto& c = s->contexts[0];
  EXPECT_EQ(c.pds, 1u);
  ASSERT_EQ(c.mrs.size(), 1u);
  EXPECT_EQ(c.mrs[0].size, 1u << 20);
  ASSERT_EQ(c.cq_depths.size(), 1u);
  EXPECT_EQ(c.cq_depths[0], 4096u);
  EXPECT_EQ(s->traffic[0].min_size, 100u);
  EXPECT_EQ(s->traffic[0].max_size, 3000u);
  EXPECT_TRUE(s->migration_enabled);
}

TEST(ScenarioParse, DanglingPartnerNamesKeyAndLine) {
  std::string text = kPair;
  text.replace(text.find("partner: qa"), 11, "partner: qz");
  const std::string e = ErrorOf(text);
  EXPECT_THAT(e, HasSubstr("t.yaml:17:"));
  EXPECT_THAT(e, HasSubstr("contexts[1].qps[0].partner"));
  EXPECT_THAT(e, HasSubstr("qz"));
}

TEST(ScenarioParse, UnknownKeyRejected) {
  std::string text = kPair;
  text.replace(text.find("latency_ticks"), 13, "latency_tickz");
  const std::string e = ErrorOf(text);
  EXPECT_THAT(e, HasSubstr("t.yaml:3:"));
  EXPECT_THAT(e, HasSubstr("latency_tickz"));
}

TEST(ScenarioParse, WrongTypeRejected) {
  std::string text = kPair;
  text.replace(text.find("count: 20"), 9, "count: many");
  const std::string e = ErrorOf(text);
  EXPECT_THAT(e, HasSubstr("t.yaml:20:"));
  EXPECT_THAT(e, HasSubstr("traffic[0].count"));
}

TEST(ScenarioParse, SyntaxErrorIsLineAnchored) {
  EXPECT_THAT(ErrorOf("nodes: [a, b\n"), HasSubstr("t.yaml:"));
}

TEST(ScenarioParse, MissingNodeReference) {
  std::string text = kPair;
  text.replace(text.find("node: b"), 7, "node: q");
  EXPECT_THAT(ErrorOf(text), HasSubstr("contexts[1].node"));
}

TEST(ScenarioParse, MigrationRequiresSupport) {
  std::string text = kPair;
  text += "migration_enabled: false\nmigrations:\n  - context: 2\n    to: a\n"
          "    at: 10\n";
  EXPECT_THAT(ErrorOf(text), HasSubstr("migration"));
}

TEST(ScenarioParse, MigrationTargetMustDiffer) {
  std::string text = kPair;
  text += "migrations:\n  - context: 2\n    to: b\n    at: 10\n";
  EXPECT_THAT(ErrorOf(text), HasSubstr("migrations[0]"));
}

TEST(ScenarioParse, OversizedMessageRejected) {
  std::string text = kPair;
  text += "  - qp: qb\n    count: 1\n    msg_size: 2000000\n";
  EXPECT_THAT(ErrorOf(text), HasSubstr("traffic[1]"));
}

TEST(ScenarioParse, InfiniteRetries) {
  std::string text = kPair;
  text.replace(text.find("partner: qb"), 11,
               "partner: qb\n        max_retries: infinite");
  auto s = ParseScenario(text, "t.yaml");
  ASSERT_TRUE(s.ok()) << s.status();
  EXPECT_EQ(s->contexts[0].qps[0].max_retries, verbs::kInfiniteRetries);
}

TEST(ScenarioLayout, ThirdsOfTheMemoryRegion) {
  auto s = ParseScenario(kPair, "t.yaml");
  ASSERT_TRUE(s.ok());
  auto layout = ComputeLayout(*s);
  const QpLayout& l = layout[0][0];
  EXPECT_EQ(l.send_base, MrBase(0));
  EXPECT_EQ(l.recv_base - l.send_base, (1u << 20) / 3);
  EXPECT_EQ(l.slot_size, 3000u);
  EXPECT_GT(l.send_slots, 0u);
  EXPECT_LE(l.send_slots, 128u);
}

TEST(Runner, DeliversEverything) {
  auto s = ParseScenario(kPair, "t.yaml");
  ASSERT_TRUE(s.ok());
  RunResult r = Execute(*s, {});
  EXPECT_TRUE(r.passed()) << (r.failures.empty() ? "" : r.failures[0]);
  ASSERT_EQ(r.flows.size(), 1u);
  EXPECT_EQ(r.flows[0].delivered, 20u);
  EXPECT_EQ(r.final_states.at("qa"), "RTS");
  EXPECT_FALSE(r.sim.budget_exhausted);
}

TEST(Runner, PayloadsAreSeedDependent) {
  EXPECT_EQ(FlowPayload(1, "qa", 0, 64), FlowPayload(1, "qa", 0, 64));
  EXPECT_NE(FlowPayload(1, "qa", 0, 64), FlowPayload(2, "qa", 0, 64));
  EXPECT_NE(FlowPayload(1, "qa", 0, 64), FlowPayload(1, "qa", 1, 64));
  TrafficSpec t;
  t.count = 1000;
  t.min_size = 10;
  t.max_size = 20;
  auto sizes = FlowSizes(1, "qa", t);
  for (uint32_t v : sizes) {
    EXPECT_GE(v, 10u);
    EXPECT_LE(v, 20u);
  }
}

TEST(Runner, WriteTrafficWithMigration) {
  std::string text = kPair;
  text.replace(text.find("    interval_ticks: 1\n"), 22,
               "    interval_ticks: 1\n    opcode: write\n");
  text.replace(text.find("  - name: b\n"), 12, "  - name: b\n  - name: c\n");
  text += "migrations:\n  - context: 2\n    to: c\n    at: 8\n"
          "expect:\n  trace_excludes: [NAK_REM_ACCESS]\n";
  auto s = ParseScenario(text, "t.yaml");
  ASSERT_TRUE(s.ok()) << s.status();
  RunResult r = Execute(*s, {});
  EXPECT_TRUE(r.passed()) << (r.failures.empty() ? "" : r.failures[0]);
  ASSERT_EQ(r.migrations.size(), 1u);
  EXPECT_TRUE(r.migrations[0].succeeded);
  EXPECT_EQ(r.flows[0].write_mismatches, 0u);
}

TEST(Runner, SharedReceiveQueue) {
  constexpr char kSrq[] = R"(nodes:
  - name: a
  - name: b
contexts:
  - id: 1
    node: a
    qps:
      - {name: a0, partner: b0}
      - {name: a1, partner: b1}
  - id: 2
    node: b
    srqs: [{depth: 64}]
    qps:
      - {name: b0, partner: a0, srq: 0}
      - {name: b1, partner: a1, srq: 0}
traffic:
  - {qp: a0, count: 50, msg_size: 512, interval_ticks: 1}
  - {qp: a1, count: 50, msg_size: 700, interval_ticks: 1}
)";
  auto s = ParseScenario(kSrq, "srq.yaml");
  ASSERT_TRUE(s.ok()) << s.status();
  RunResult r = Execute(*s, {});
  EXPECT_TRUE(r.passed()) << (r.failures.empty() ? "" : r.failures[0]);
}

TEST(Runner, UnmetExpectationFails) {
  std::string text = kPair;
  text += "expect:\n  trace_contains: [RESUME]\n";
  auto s = ParseScenario(text, "t.yaml");
  ASSERT_TRUE(s.ok());
  RunResult r = Execute(*s, {});
  EXPECT_FALSE(r.passed());
}

TEST(Runner, BudgetExhaustionFails) {
  auto s = ParseScenario(kPair, "t.yaml");
  ASSERT_TRUE(s.ok());
  RunOptions o;
  o.max_ticks = 5;
  RunResult r = Execute(*s, o);
  EXPECT_FALSE(r.passed());
  EXPECT_TRUE(r.sim.budget_exhausted);
}

// b0 is dumped while Paused and a0's successor announces itself to b0's old
// home, which captures the RESUME. b0's successor must come up resumed.
TEST(Runner, CrossingMigrationsBothResume) {
  constexpr char kCross[] = R"(net: {seed: 2, latency_ticks: 5, loss_rate: 0.02}
nodes: [{name: a}, {name: b}, {name: a2}, {name: b2}]
contexts:
  - id: 1
    node: a
    mrs: [{size: 262144}]
    qps: [{name: a0, partner: b0, max_retries: infinite}]
  - id: 2
    node: b
    mrs: [{size: 262144}]
    qps: [{name: b0, partner: a0, max_retries: infinite}]
traffic:
  - {qp: a0, count: 3000, msg_size: [1024, 4096]}
  - {qp: b0, count: 3000, msg_size: [1024, 4096]}
migrations:
  - {context: 1, to: a2, at: 1574}
  - {context: 2, to: b2, at: 1632}
)";
  auto s = ParseScenario(kCross, "cross.yaml");
  ASSERT_TRUE(s.ok()) << s.status();
  RunResult r = Execute(*s, {});
  EXPECT_TRUE(r.passed()) << (r.failures.empty() ? "" : r.failures[0]);
  EXPECT_EQ(r.final_states.at("a0"), "RTS");
  EXPECT_EQ(r.final_states.at("b0"), "RTS");
  ASSERT_EQ(r.migrations.size(), 2u);
  EXPECT_GE(r.migrations[0].resumes_relayed + r.migrations[1].resumes_relayed,
            1u);
}

}  // namespace
}  // namespace migrsim::scenario
