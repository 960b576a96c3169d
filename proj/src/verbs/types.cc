#include "verbs/types.h"

#include <array>
#include <cstdio>

#include "common/prng.h"

namespace migrsim::verbs {

std::string Gid::ToString() const {
  std::string out;
  out.reserve(39);
  char buf[8];
  for (int i = 0; i < 16; i += 2) {
    if (i) out.push_back(':');
    std::snprintf(buf, sizeof(buf), "%02x%02x", raw[i], raw[i + 1]);
    out += buf;
  }
  return out;
}

Gid Gid::FromSeed(uint64_t seed) {
  Gid g;
  g.raw[0] = 0xfe;
  g.raw[1] = 0x80;
  uint64_t v = SplitMix64(seed);
  for (int i = 0; i < 8; ++i) g.raw[8 + i] = static_cast<uint8_t>(v >> (56 - 8 * i));
  return g;
}

namespace {
constexpr std::array<std::string_view, 9> kStateNames = {
    "RESET", "INIT", "RTR", "RTS", "SQD", "SQE", "ERROR", "STOPPED", "PAUSED"};
}  // namespace

std::string_view QpStateName(QpState s) {
  auto i = static_cast<std::size_t>(s);
  return i < kStateNames.size() ? kStateNames[i] : "UNKNOWN";
}

std::optional<QpState> QpStateFromName(std::string_view name) {
  for (std::size_t i = 0; i < kStateNames.size(); ++i) {
    if (kStateNames[i] == name) return static_cast<QpState>(i);
  }
  return std::nullopt;
}

std::string_view WcStatusName(WcStatus s) {
  switch (s) {
    case WcStatus::kSuccess:
      return "SUCCESS";
    case WcStatus::kLocLenErr:
      return "LOC_LEN_ERR";
    case WcStatus::kRemAccessErr:
      return "REM_ACCESS_ERR";
    case WcStatus::kRetryExcErr:
      return "RETRY_EXC_ERR";
    case WcStatus::kWrFlushErr:
      return "WR_FLUSH_ERR";
  }
  return "UNKNOWN";
}

}  // namespace migrsim::verbs
