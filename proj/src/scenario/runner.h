#ifndef MIGRSIM_SCENARIO_RUNNER_H_
#define MIGRSIM_SCENARIO_RUNNER_H_

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "migrator/migrator.h"
#include "netsim/network.h"
#include "scenario/scenario.h"
#include "transport/host.h"

namespace migrsim::scenario {

struct RunOptions {
  std::optional<uint64_t> seed;
  std::optional<Tick> max_ticks;
  std::optional<bool> migration_enabled;
};

struct TimelineEntry {
  Tick tick = 0;
  std::string node;
  std::string qp;
  uint32_t qpn = 0;
  verbs::QpState from = verbs::QpState::kReset;
  verbs::QpState to = verbs::QpState::kReset;
};

struct FlowResult {
  std::string qp;
  uint64_t count = 0;
  uint64_t posted = 0;
  uint64_t completed_ok = 0;
  uint64_t completed_err = 0;
  // Receiver side: messages that arrived intact and in order.
  uint64_t delivered = 0;
  uint64_t corrupt = 0;
  uint64_t write_mismatches = 0;
  uint64_t max_latency_ticks = 0;
};

struct RunResult {
  netsim::SimReport sim;
  std::vector<migrator::MigrationReport> migrations;
  std::vector<FlowResult> flows;
  // Application-visible completions per QP name, in poll order.
  std::map<std::string, std::vector<verbs::WorkCompletion>> wc_streams;
  std::map<std::string, std::string> final_states;  // QP name -> state name
  std::map<std::string, std::optional<verbs::PartnerAddress>> final_partners;
  std::map<std::string, uint64_t> wc_errors;  // status name -> count
  uint64_t unexpected_completions = 0;
  transport::HostCounters host_counters;
  std::vector<TimelineEntry> timeline;
  std::vector<std::string> failures;  // unmet expectations

  bool passed() const { return failures.empty(); }
};

// Builds the simulated cluster described by a scenario and drives its
// application model: each traffic flow posts deterministic messages,
// receivers check size, content and order, and WRITE targets are compared
// against a shadow copy at the end.
class Runner {
 public:
  Runner(Scenario scenario, RunOptions opts);
  ~Runner();
  Runner(const Runner&) = delete;
  Runner& operator=(const Runner&) = delete;

  // Creates hosts, contexts and connected QPs; schedules migrations.
  absl::Status Build();
  RunResult Run();

  const Scenario& scenario() const { return scenario_; }
  netsim::Network& network() { return *net_; }
  migrator::Migrator& migrator() { return *migrator_; }
  transport::Host* host(std::string_view node);
  // QPN of a scenario QP, valid after Build().
  uint32_t qpn(std::string_view qp) const;

 private:
  struct App;
  Scenario scenario_;
  RunOptions opts_;
  std::unique_ptr<netsim::Network> net_;
  std::unique_ptr<migrator::Migrator> migrator_;
  std::vector<std::unique_ptr<transport::Host>> hosts_;
  std::unique_ptr<App> app_;
};

absl::StatusOr<RunResult> RunScenario(const Scenario& s,
                                      const RunOptions& opts = {});

// One JSON object per line: a "run" record, then one "migration" record per
// migration.
void WriteStats(std::ostream& out, const RunResult& r);
void WriteTimeline(std::ostream& out, const RunResult& r);

// Deterministic message length and contents for message `idx` of a flow.
std::vector<uint32_t> FlowSizes(uint64_t seed, std::string_view qp,
                                const TrafficSpec& t);
std::vector<uint8_t> FlowPayload(uint64_t seed, std::string_view qp,
                                 uint64_t idx, uint32_t len);

}  // namespace migrsim::scenario

#endif  // MIGRSIM_SCENARIO_RUNNER_H_
