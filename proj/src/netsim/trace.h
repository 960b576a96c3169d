#ifndef MIGRSIM_NETSIM_TRACE_H_
#define MIGRSIM_NETSIM_TRACE_H_

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "verbs/types.h"

namespace migrsim::netsim {

enum class TraceDir : uint8_t { kTx, kRx, kDrop };

std::string_view TraceDirName(TraceDir d);

// What the trace needs to know about a datagram; filled by the sender so the
// network does not parse payloads.
struct TraceInfo {
  uint32_t src_qpn = 0;
  uint32_t dst_qpn = 0;
  std::string_view op;  // static mnemonic, e.g. "SEND_ONLY"
  uint32_t psn = 0;
  std::optional<uint8_t> syndrome;
  uint32_t len = 0;
};

struct TraceRecord {
  Tick tick = 0;
  TraceDir dir = TraceDir::kTx;
  uint16_t node = 0;  // index into Trace::node_names()
  uint32_t qpn = 0;
  std::string_view op;
  uint32_t psn = 0;
  std::optional<uint8_t> syndrome;
  uint32_t len = 0;

  bool operator==(const TraceRecord&) const = default;
};

// In-memory packet trace. Text form is one record per line:
//   tick dir node qpn opcode psn syndrome len
class Trace {
 public:
  uint16_t AddNode(std::string name);
  const std::vector<std::string>& node_names() const { return names_; }
  std::string_view NodeName(uint16_t idx) const { return names_.at(idx); }

  void set_enabled(bool on) { enabled_ = on; }
  bool enabled() const { return enabled_; }
  void Add(const TraceRecord& r);

  const std::vector<TraceRecord>& records() const { return records_; }
  std::string FormatLine(const TraceRecord& r) const;
  void Write(std::ostream& out) const;
  // FNV-1a 64 over the text form; equal hashes mean byte-identical files.
  uint64_t Hash() const;

 private:
  bool enabled_ = true;
  std::vector<std::string> names_;
  std::vector<TraceRecord> records_;
};

}  // namespace migrsim::netsim

#endif  // MIGRSIM_NETSIM_TRACE_H_
