// Command-line front end over the C API.

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "migrsim/migrsim.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAssert = 1;
constexpr int kExitUsage = 2;

struct RunFlags {
  std::string file;
  std::optional<uint64_t> seed;
  std::optional<uint64_t> max_ticks;
  std::optional<std::string> migration_enabled;
  std::string trace;
  std::string stats;
  std::string timeline;
};

struct VerifyFlags {
  migrsim_resume_snapshot snap{};
  std::string trace;
};

int ReportError(const char* what) {
  std::fprintf(stderr, "migrsim: %s: %s\n", what, migrsim_last_error());
  return kExitUsage;
}

int DoRun(const RunFlags& f) {
  migrsim_run_options opts{};
  if (f.seed) {
    opts.has_seed = 1;
    opts.seed = *f.seed;
  }
  if (f.max_ticks) {
    opts.has_max_ticks = 1;
    opts.max_ticks = *f.max_ticks;
  }
  if (f.migration_enabled) {
    opts.has_migration_enabled = 1;
    if (*f.migration_enabled == "true") {
      opts.migration_enabled = 1;
    } else if (*f.migration_enabled == "false") {
      opts.migration_enabled = 0;
    } else {
      std::fprintf(stderr,
                   "migrsim: --migration-enabled: expected true or false, "
                   "got '%s'\n",
                   f.migration_enabled->c_str());
      return kExitUsage;
    }
  }

  migrsim_run* run = nullptr;
  if (migrsim_run_load(f.file.c_str(), &opts, &run) != MIGRSIM_OK) {
    std::fprintf(stderr, "%s\n", migrsim_last_error());
    return kExitUsage;
  }
  migrsim_run_summary sum{};
  if (migrsim_run_execute(run, &sum) != MIGRSIM_OK) {
    std::fprintf(stderr, "%s\n", migrsim_last_error());
    migrsim_run_destroy(run);
    return kExitUsage;
  }

  int rc = kExitOk;
  if (!f.trace.empty() &&
      migrsim_run_write_trace(run, f.trace.c_str()) != MIGRSIM_OK) {
    rc = ReportError("--trace");
  }
  if (!f.stats.empty() &&
      migrsim_run_write_stats(run, f.stats.c_str()) != MIGRSIM_OK) {
    rc = ReportError("--stats");
  }
  if (!f.timeline.empty() &&
      migrsim_run_write_timeline(run, f.timeline.c_str()) != MIGRSIM_OK) {
    rc = ReportError("--timeline");
  }

  std::printf(
      "end_tick=%" PRIu64 " trace_hash=%016" PRIx64 " sent=%" PRIu64
      " dropped=%" PRIu64 " delivered=%" PRIu64 " wc_errors=%" PRIu64
      " migrations=%u failed_migrations=%u\n",
      sum.end_tick, sum.trace_hash, sum.packets_sent, sum.packets_dropped,
      sum.messages_delivered, sum.wc_errors, sum.migrations,
      sum.migrations_failed);
  for (uint32_t i = 0; i < sum.failures; ++i) {
    std::fprintf(stderr, "FAIL: %s\n", migrsim_run_failure(run, i));
  }
  std::printf("%s\n", sum.passed ? "PASS" : "FAIL");
  migrsim_run_destroy(run);
  if (rc != kExitOk) return rc;
  return sum.passed ? kExitOk : kExitAssert;
}

int DoVerify(const VerifyFlags& f) {
  std::vector<char> report(1 << 16), trace(1 << 16);
  int match = 0;
  if (migrsim_resume_check(&f.snap, &match, report.data(), report.size(),
                           trace.data(), trace.size()) != MIGRSIM_OK) {
    std::fprintf(stderr, "migrsim: verify-fig6: %s\n", migrsim_last_error());
    return kExitUsage;
  }
  if (!f.trace.empty()) {
    std::ofstream out(f.trace, std::ios::trunc);
    if (!out) {
      std::fprintf(stderr, "migrsim: cannot write %s\n", f.trace.c_str());
      return kExitUsage;
    }
    out << trace.data();
  }
  std::fputs(report.data(), match ? stdout : stderr);
  std::printf("%s\n", match ? "PASS" : "FAIL");
  return match ? kExitOk : kExitAssert;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic RC transport simulator with live migration"};
  app.require_subcommand(1);
  app.set_version_flag("--version", migrsim_version());

  RunFlags rf;
  auto* run = app.add_subcommand("run", "Execute a scenario file");
  run->add_option("file", rf.file, "Scenario file")->required();
  run->add_option("--seed", rf.seed, "Override net.seed");
  run->add_option("--max-ticks", rf.max_ticks, "Override net.max_ticks");
  run->add_option("--migration-enabled", rf.migration_enabled,
                  "Override migration_enabled (true|false)");
  run->add_option("--trace", rf.trace, "Write the packet trace here");
  run->add_option("--stats", rf.stats, "Write JSON-lines stats here");
  run->add_option("--timeline", rf.timeline,
                  "Write the per-QP state timeline here");

  VerifyFlags vf;
  migrsim_resume_snapshot_default(&vf.snap);
  auto* verify = app.add_subcommand(
      "verify-fig6", "Check the post-restore resume handshake packet sequence");
  verify->add_option("--first-psn", vf.snap.first_psn, "First PSN of message")
      ->capture_default_str();
  verify->add_option("--first-unacked", vf.snap.first_unacked,
                     "Sender's first unacknowledged PSN")
      ->capture_default_str();
  verify->add_option("--next-psn", vf.snap.next_psn, "Sender's next PSN")
      ->capture_default_str();
  verify->add_option("--last-psn", vf.snap.last_psn, "Last PSN of message")
      ->capture_default_str();
  verify->add_option("--receiver-expects", vf.snap.receiver_expects,
                     "Receiver's expected PSN")
      ->capture_default_str();
  verify->add_option("--mtu", vf.snap.mtu, "Path MTU")->capture_default_str();
  verify->add_option("--latency", vf.snap.latency_ticks, "Link latency ticks")
      ->capture_default_str();
  verify->add_option("--trace", vf.trace, "Write the packet trace here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  if (run->parsed()) return DoRun(rf);
  return DoVerify(vf);
}
