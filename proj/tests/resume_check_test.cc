#include "scenario/resume_check.h"

#include "gtest/gtest.h"

namespace migrsim::scenario {
namespace {

using transport::Opcode;

struct Expect {
  Opcode op;
  uint32_t psn;
};

std::vector<Expect> Summarize(const ResumeCheck& r) {
  std::vector<Expect> out;
  for (const auto& w : r.actual) out.push_back({w.pkt.opcode, w.pkt.psn});
  return out;
}

// Sequences below come from hand-executing the protocol rules: the
// restored QP names its first unacknowledged PSN, the receiver answers with
// expected - 1, and the sender restarts at the receiver's expected PSN.
void ExpectSequence(const ResumeSnapshot& s, const std::vector<Expect>& want) {
  auto r = RunResumeCheck(s);
  ASSERT_TRUE(r.ok()) << r.status();
  EXPECT_TRUE(r->match) << r->diff;
  EXPECT_TRUE(r->completed);
  auto got = Summarize(*r);
  ASSERT_EQ(got.size(), want.size()) << r->diff;
  for (std::size_t i = 0; i < want.size(); ++i) {
    EXPECT_EQ(got[i].op, want[i].op) << i;
    EXPECT_EQ(got[i].psn, want[i].psn) << i;
  }
}

TEST(ResumeCheck, DefaultSnapshot) {
  ExpectSequence({}, {{Opcode::kResume, 5},
                      {Opcode::kAck, 6},
                      {Opcode::kSendMiddle, 7},
                      {Opcode::kSendMiddle, 8},
                      {Opcode::kSendLast, 9},
                      {Opcode::kAck, 9}});
}

TEST(ResumeCheck, FirstUnackedSix) {
  ResumeSnapshot s;
  s.first_unacked = 6;
  ExpectSequence(s, {{Opcode::kResume, 6},
                     {Opcode::kAck, 6},
                     {Opcode::kSendMiddle, 7},
                     {Opcode::kSendMiddle, 8},
                     {Opcode::kSendLast, 9},
                     {Opcode::kAck, 9}});
}

TEST(ResumeCheck, NothingUnacked) {
  ResumeSnapshot s;
  s.first_unacked = 8;
  s.receiver_expects = 8;
  ExpectSequence(s, {{Opcode::kResume, 8},
                     {Opcode::kAck, 7},
                     {Opcode::kSendMiddle, 8},
                     {Opcode::kSendLast, 9},
                     {Opcode::kAck, 9}});
}

TEST(ResumeCheck, WholeMessageResent) {
  ResumeSnapshot s;
  s.first_unacked = 4;
  s.receiver_expects = 4;
  s.next_psn = 6;
  ExpectSequence(s, {{Opcode::kResume, 4},
                     {Opcode::kAck, 3},
                     {Opcode::kSendFirst, 4},
                     {Opcode::kSendMiddle, 5},
                     {Opcode::kSendMiddle, 6},
                     {Opcode::kSendMiddle, 7},
                     {Opcode::kSendMiddle, 8},
                     {Opcode::kSendLast, 9},
                     {Opcode::kAck, 9}});
}

TEST(ResumeCheck, BytesOnTheWireMatchExpected) {
  auto r = RunResumeCheck({});
  ASSERT_TRUE(r.ok());
  ASSERT_EQ(r->actual.size(), r->expected.size());
  for (std::size_t i = 0; i < r->actual.size(); ++i) {
    EXPECT_EQ(r->actual[i].bytes, transport::Encode(r->expected[i])) << i;
  }
  EXPECT_EQ(r->actual[0].from, "N2");
  EXPECT_EQ(r->actual[1].from, "N1");
}

TEST(ResumeCheck, RejectsInconsistentSnapshots) {
  ResumeSnapshot s;
  s.first_unacked = 3;
  EXPECT_FALSE(RunResumeCheck(s).ok());
  s = {};
  s.receiver_expects = 9;
  s.next_psn = 8;
  EXPECT_FALSE(RunResumeCheck(s).ok());
  s = {};
  s.mtu = 1000;
  EXPECT_FALSE(RunResumeCheck(s).ok());
}

}  // namespace
}  // namespace migrsim::scenario
