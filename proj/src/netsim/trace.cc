#include "netsim/trace.h"

#include <cstdio>

#include "common/prng.h"

namespace migrsim::netsim {

std::string_view TraceDirName(TraceDir d) {
  switch (d) {
    case TraceDir::kTx:
      return "tx";
    case TraceDir::kRx:
      return "rx";
    case TraceDir::kDrop:
      return "drop";
  }
  return "?";
}

uint16_t Trace::AddNode(std::string name) {
  names_.push_back(std::move(name));
  return static_cast<uint16_t>(names_.size() - 1);
}

void Trace::Add(const TraceRecord& r) {
  if (enabled_) records_.push_back(r);
}

std::string Trace::FormatLine(const TraceRecord& r) const {
  char syn[8] = "-";
  if (r.syndrome) std::snprintf(syn, sizeof(syn), "0x%02x", *r.syndrome);
  std::string out;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%llu %s ",
                static_cast<unsigned long long>(r.tick),
                std::string(TraceDirName(r.dir)).c_str());
  out += buf;
  out += NodeName(r.node);
  std::snprintf(buf, sizeof(buf), " %u ", r.qpn);
  out += buf;
  out += r.op;
  std::snprintf(buf, sizeof(buf), " %u %s %u", r.psn, syn, r.len);
  out += buf;
  return out;
}

void Trace::Write(std::ostream& out) const {
  for (const TraceRecord& r : records_) out << FormatLine(r) << '\n';
}

uint64_t Trace::Hash() const {
  Fnv1a64 h;
  for (const TraceRecord& r : records_) {
    std::string line = FormatLine(r);
    line.push_back('\n');
    h.Update(line.data(), line.size());
  }
  return h.digest();
}

}  // namespace migrsim::netsim
