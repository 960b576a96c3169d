#include "scenario/scenario.h"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "yaml-cpp/yaml.h"

namespace migrsim::scenario {
namespace {

// Thrown inside the parser only; converted to a Status at the boundary.
struct ParseError {
  Mark mark;
  std::string path;
  std::string what;
};

Mark MarkOf(const YAML::Node& n) {
  const YAML::Mark m = n.Mark();
  if (m.line < 0) return {};
  return {m.line + 1, m.column + 1};
}

std::string Format(std::string_view file, const Mark& m, std::string_view path,
                   std::string_view what) {
  std::string out;
  if (!file.empty()) absl::StrAppend(&out, std::string(file), ":");
  if (m.line > 0) absl::StrAppend(&out, m.line, ":", m.column, ":");
  if (!out.empty()) out += " ";
  absl::StrAppend(&out, std::string(path), ": ", std::string(what));
  return out;
}

bool IsValidMtu(uint32_t m) {
  return m == 256 || m == 512 || m == 1024 || m == 2048 || m == 4096;
}

class Parser {
 public:
  Scenario Parse(const YAML::Node& root) {
    Scenario s;
    if (!root.IsMap()) Fail(root, "", "top level must be a mapping");
    CheckKeys(root, "", {"net", "migration_enabled", "nodes", "contexts",
                         "traffic", "migrations", "expect"});
    if (auto n = root["net"]) ParseNet(n, s.net);
    if (auto n = root["migration_enabled"]) {
      s.migration_enabled = Get<bool>(n, "migration_enabled");
    }
    ForEach(root, "nodes", [&](const YAML::Node& n, const std::string& p,
                               std::size_t i) {
      CheckKeys(n, p, {"name", "gid_seed"});
      NodeSpec node;
      node.mark = MarkOf(n);
      node.name = Required<std::string>(n, p, "name");
      node.gid_seed = Optional<uint64_t>(n, p, "gid_seed", i + 1);
      s.nodes.push_back(std::move(node));
    });
    ForEach(root, "contexts", [&](const YAML::Node& n, const std::string& p,
                                  std::size_t) {
      s.contexts.push_back(ParseContext(n, p));
    });
    ForEach(root, "traffic", [&](const YAML::Node& n, const std::string& p,
                                 std::size_t) {
      s.traffic.push_back(ParseTraffic(n, p));
    });
    ForEach(root, "migrations", [&](const YAML::Node& n, const std::string& p,
                                    std::size_t) {
      CheckKeys(n, p, {"context", "to", "at", "transfer"});
      MigrationEntry m;
      m.mark = MarkOf(n);
      m.ctx = Required<uint32_t>(n, p, "context");
      m.to = Required<std::string>(n, p, "to");
      m.at = Required<uint64_t>(n, p, "at");
      std::string t = Optional<std::string>(n, p, "transfer", "in_band");
      if (t == "in_band") {
        m.transfer = migrator::Transfer::kInBand;
      } else if (t == "out_of_band") {
        m.transfer = migrator::Transfer::kOutOfBand;
      } else {
        Fail(n["transfer"], p + ".transfer",
             "expected in_band or out_of_band, got '" + t + "'");
      }
      s.migrations.push_back(std::move(m));
    });
    if (auto n = root["expect"]) ParseExpect(n, s.expect);
    return s;
  }

 private:
  [[noreturn]] static void Fail(const YAML::Node& n, std::string path,
                                std::string what) {
    throw ParseError{MarkOf(n), std::move(path), std::move(what)};
  }

  static std::string Join(const std::string& p, std::string_view key) {
    return p.empty() ? std::string(key) : absl::StrCat(p, ".", std::string(key));
  }

  static void CheckKeys(const YAML::Node& n, const std::string& path,
                        std::initializer_list<std::string_view> keys) {
    if (!n.IsMap()) Fail(n, path.empty() ? "<root>" : path, "expected a mapping");
    for (const auto& kv : n) {
      std::string k = kv.first.as<std::string>();
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
        Fail(kv.first, Join(path, k), "unknown key");
      }
    }
  }

  template <typename T>
  static T Get(const YAML::Node& n, const std::string& path) {
    try {
      if (!n.IsScalar()) Fail(n, path, "expected a scalar");
      if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
        std::string raw = n.Scalar();
        if (!raw.empty() && raw[0] == '-') {
          Fail(n, path, "expected a non-negative integer");
        }
      }
      return n.as<T>();
    } catch (const YAML::BadConversion&) {
      Fail(n, path, absl::StrCat("cannot parse '", n.Scalar(), "'"));
    }
  }

  template <typename T>
  static T Required(const YAML::Node& n, const std::string& p,
                    std::string_view key) {
    YAML::Node v = n[std::string(key)];
    if (!v) Fail(n, Join(p, key), "missing required key");
    return Get<T>(v, Join(p, key));
  }

  template <typename T>
  static T Optional(const YAML::Node& n, const std::string& p,
                    std::string_view key, T def) {
    YAML::Node v = n[std::string(key)];
    if (!v) return def;
    return Get<T>(v, Join(p, key));
  }

  template <typename F>
  static void ForEach(const YAML::Node& parent, std::string_view key, F f) {
    YAML::Node list = parent[std::string(key)];
    if (!list) return;
    if (!list.IsSequence()) Fail(list, std::string(key), "expected a list");
    for (std::size_t i = 0; i < list.size(); ++i) {
      f(list[i], absl::StrCat(std::string(key), "[", i, "]"), i);
    }
  }

  static void ParseNet(const YAML::Node& n, netsim::NetConfig& c) {
    CheckKeys(n, "net",
              {"seed", "latency_ticks", "loss_rate", "dup_rate", "max_ticks"});
    c.seed = Optional<uint64_t>(n, "net", "seed", c.seed);
    c.latency_ticks = Optional<uint32_t>(n, "net", "latency_ticks",
                                         c.latency_ticks);
    c.loss_rate = Optional<double>(n, "net", "loss_rate", c.loss_rate);
    c.dup_rate = Optional<double>(n, "net", "dup_rate", c.dup_rate);
    c.max_ticks = Optional<uint64_t>(n, "net", "max_ticks", c.max_ticks);
    if (auto st = c.Validate(); !st.ok()) {
      Fail(n, "net", std::string(st.message()));
    }
  }

  static ContextSpec ParseContext(const YAML::Node& n, const std::string& p) {
    CheckKeys(n, p, {"id", "node", "pds", "mrs", "cqs", "srqs", "qps"});
    ContextSpec c;
    c.mark = MarkOf(n);
    c.id = Required<uint32_t>(n, p, "id");
    c.node = Required<std::string>(n, p, "node");
    c.node_mark = MarkOf(n["node"]);
    c.pds = Optional<uint32_t>(n, p, "pds", 1);
    if (YAML::Node mrs = n["mrs"]) {
      if (!mrs.IsSequence()) Fail(mrs, Join(p, "mrs"), "expected a list");
      for (std::size_t i = 0; i < mrs.size(); ++i) {
        std::string q = absl::StrCat(p, ".mrs[", i, "]");
        CheckKeys(mrs[i], q, {"size", "pd"});
        MrSpec m;
        m.mark = MarkOf(mrs[i]);
        m.size = Required<uint64_t>(mrs[i], q, "size");
        m.pd = Optional<uint32_t>(mrs[i], q, "pd", 0);
        c.mrs.push_back(m);
      }
    } else {
      c.mrs.push_back({1 << 20, 0, c.mark});
    }
    if (YAML::Node cqs = n["cqs"]) {
      if (!cqs.IsSequence()) Fail(cqs, Join(p, "cqs"), "expected a list");
      for (std::size_t i = 0; i < cqs.size(); ++i) {
        std::string q = absl::StrCat(p, ".cqs[", i, "]");
        CheckKeys(cqs[i], q, {"depth"});
        c.cq_depths.push_back(Required<uint32_t>(cqs[i], q, "depth"));
      }
    } else {
      c.cq_depths.push_back(4096);
    }
    if (YAML::Node srqs = n["srqs"]) {
      if (!srqs.IsSequence()) Fail(srqs, Join(p, "srqs"), "expected a list");
      for (std::size_t i = 0; i < srqs.size(); ++i) {
        std::string q = absl::StrCat(p, ".srqs[", i, "]");
        CheckKeys(srqs[i], q, {"depth", "pd"});
        SrqSpec sr;
        sr.mark = MarkOf(srqs[i]);
        sr.depth = Optional<uint32_t>(srqs[i], q, "depth", 256);
        sr.pd = Optional<uint32_t>(srqs[i], q, "pd", 0);
        c.srqs.push_back(sr);
      }
    }
    if (YAML::Node qps = n["qps"]) {
      if (!qps.IsSequence()) Fail(qps, Join(p, "qps"), "expected a list");
      for (std::size_t i = 0; i < qps.size(); ++i) {
        c.qps.push_back(ParseQp(qps[i], absl::StrCat(p, ".qps[", i, "]")));
      }
    }
    return c;
  }

  static QpSpec ParseQp(const YAML::Node& n, const std::string& p) {
    CheckKeys(n, p,
              {"name", "partner", "pd", "mr", "mtu", "send_depth",
               "recv_depth", "send_cq", "recv_cq", "srq", "max_inflight",
               "timeout_ticks", "max_retries"});
    QpSpec q;
    q.mark = MarkOf(n);
    q.name = Required<std::string>(n, p, "name");
    q.partner = Required<std::string>(n, p, "partner");
    q.partner_mark = MarkOf(n["partner"]);
    q.pd = Optional<uint32_t>(n, p, "pd", q.pd);
    q.mr = Optional<uint32_t>(n, p, "mr", q.mr);
    q.mtu = Optional<uint32_t>(n, p, "mtu", q.mtu);
    q.send_depth = Optional<uint32_t>(n, p, "send_depth", q.send_depth);
    q.recv_depth = Optional<uint32_t>(n, p, "recv_depth", q.recv_depth);
    q.send_cq = Optional<uint32_t>(n, p, "send_cq", q.send_cq);
    q.recv_cq = Optional<uint32_t>(n, p, "recv_cq", q.recv_cq);
    if (n["srq"]) q.srq = Get<uint32_t>(n["srq"], Join(p, "srq"));
    q.max_inflight = Optional<uint32_t>(n, p, "max_inflight", q.max_inflight);
    q.timeout_ticks =
        Optional<uint32_t>(n, p, "timeout_ticks", q.timeout_ticks);
    if (YAML::Node r = n["max_retries"]) {
      if (r.IsScalar() && r.Scalar() == "infinite") {
        q.max_retries = verbs::kInfiniteRetries;
      } else {
        q.max_retries = Get<uint32_t>(r, Join(p, "max_retries"));
      }
    }
    return q;
  }

  static TrafficSpec ParseTraffic(const YAML::Node& n, const std::string& p) {
    CheckKeys(n, p, {"qp", "count", "msg_size", "interval_ticks", "start_tick",
                     "opcode"});
    TrafficSpec t;
    t.mark = MarkOf(n);
    t.qp = Required<std::string>(n, p, "qp");
    t.qp_mark = MarkOf(n["qp"]);
    t.count = Required<uint64_t>(n, p, "count");
    YAML::Node size = n["msg_size"];
    const std::string sp = Join(p, "msg_size");
    if (!size) Fail(n, sp, "missing required key");
    if (size.IsSequence()) {
      if (size.size() != 2) Fail(size, sp, "expected [min, max]");
      t.min_size = Get<uint32_t>(size[0], sp);
      t.max_size = Get<uint32_t>(size[1], sp);
    } else {
      t.min_size = t.max_size = Get<uint32_t>(size, sp);
    }
    t.interval_ticks = Optional<uint64_t>(n, p, "interval_ticks", 0);
    t.start_tick = Optional<uint64_t>(n, p, "start_tick", 0);
    std::string op = Optional<std::string>(n, p, "opcode", "send");
    if (op == "send") {
      t.opcode = verbs::WrOpcode::kSend;
    } else if (op == "write") {
      t.opcode = verbs::WrOpcode::kRdmaWrite;
    } else {
      Fail(n["opcode"], Join(p, "opcode"),
           "expected send or write, got '" + op + "'");
    }
    return t;
  }

  static std::vector<std::string> Strings(const YAML::Node& n,
                                          const std::string& p) {
    if (!n.IsSequence()) Fail(n, p, "expected a list");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n.size(); ++i) {
      out.push_back(Get<std::string>(n[i], absl::StrCat(p, "[", i, "]")));
    }
    return out;
  }

  static void ParseExpect(const YAML::Node& n, Expect& e) {
    CheckKeys(n, "expect",
              {"all_delivered", "no_wc_errors", "migrations_succeed",
               "trace_contains", "trace_excludes", "final_states",
               "max_end_tick"});
    e.all_delivered = Optional<bool>(n, "expect", "all_delivered", true);
    e.no_wc_errors = Optional<bool>(n, "expect", "no_wc_errors", true);
    e.migrations_succeed =
        Optional<bool>(n, "expect", "migrations_succeed", true);
    if (n["trace_contains"]) {
      e.trace_contains = Strings(n["trace_contains"], "expect.trace_contains");
    }
    if (n["trace_excludes"]) {
      e.trace_excludes = Strings(n["trace_excludes"], "expect.trace_excludes");
    }
    if (YAML::Node fs = n["final_states"]) {
      if (!fs.IsMap()) Fail(fs, "expect.final_states", "expected a mapping");
      for (const auto& kv : fs) {
        std::string qp = kv.first.as<std::string>();
        std::string p = "expect.final_states." + qp;
        std::string name = Get<std::string>(kv.second, p);
        auto st = verbs::QpStateFromName(name);
        if (!st) Fail(kv.second, p, "unknown QP state '" + name + "'");
        e.final_states[qp] = *st;
      }
    }
    if (n["max_end_tick"]) {
      e.max_end_tick = Get<uint64_t>(n["max_end_tick"], "expect.max_end_tick");
    }
  }
};

// Message size bounds of traffic flowing out of / into a QP.
struct FlowNeeds {
  uint32_t max_size = 0;
  bool sends = false;
  bool receives_send = false;
  bool receives_write = false;
};

}  // namespace

const NodeSpec* Scenario::FindNode(std::string_view name) const {
  for (const auto& n : nodes) {
    if (n.name == name) return &n;
  }
  return nullptr;
}

const ContextSpec* Scenario::FindContext(uint32_t id) const {
  for (const auto& c : contexts) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

std::optional<std::pair<std::size_t, std::size_t>> Scenario::FindQp(
    std::string_view name) const {
  for (std::size_t c = 0; c < contexts.size(); ++c) {
    for (std::size_t q = 0; q < contexts[c].qps.size(); ++q) {
      if (contexts[c].qps[q].name == name) return std::make_pair(c, q);
    }
  }
  return std::nullopt;
}

std::vector<std::vector<QpLayout>> ComputeLayout(const Scenario& s) {
  std::map<std::string, FlowNeeds> needs;
  for (const auto& t : s.traffic) {
    auto loc = s.FindQp(t.qp);
    if (!loc) continue;
    const QpSpec& q = s.contexts[loc->first].qps[loc->second];
    FlowNeeds& out = needs[q.name];
    FlowNeeds& in = needs[q.partner];
    out.sends = true;
    out.max_size = std::max(out.max_size, t.max_size);
    in.max_size = std::max(in.max_size, t.max_size);
    if (t.opcode == verbs::WrOpcode::kSend) {
      in.receives_send = true;
    } else {
      in.receives_write = true;
    }
  }
  std::vector<std::vector<QpLayout>> layout(s.contexts.size());
  for (std::size_t c = 0; c < s.contexts.size(); ++c) {
    const ContextSpec& ctx = s.contexts[c];
    std::map<uint32_t, uint32_t> users;
    for (const auto& q : ctx.qps) ++users[q.mr];
    std::map<uint32_t, uint32_t> seen;
    layout[c].resize(ctx.qps.size());
    for (std::size_t i = 0; i < ctx.qps.size(); ++i) {
      const QpSpec& q = ctx.qps[i];
      if (q.mr >= ctx.mrs.size()) continue;
      const uint64_t share = ctx.mrs[q.mr].size / users[q.mr];
      const uint64_t third = share / 3;
      const uint64_t base = MrBase(q.mr) + share * seen[q.mr]++;
      QpLayout& l = layout[c][i];
      l.slot_size = std::max<uint32_t>(1, needs[q.name].max_size);
      l.send_base = base;
      l.recv_base = base + third;
      l.write_base = base + 2 * third;
      const uint64_t per = third / l.slot_size;
      auto cap = [&](uint64_t depth) {
        return static_cast<uint32_t>(std::min<uint64_t>(per, depth));
      };
      l.send_slots = cap(q.send_depth);
      l.recv_slots = q.srq ? cap(ctx.srqs.size() > *q.srq
                                     ? ctx.srqs[*q.srq].depth
                                     : 0)
                           : cap(q.recv_depth);
      l.write_slots = cap(per);
    }
  }
  return layout;
}

absl::Status Validate(const Scenario& s, std::string_view file) {
  auto err = [&](const Mark& m, std::string_view path, std::string_view what) {
    return absl::InvalidArgumentError(Format(file, m, path, what));
  };
  if (auto st = s.net.Validate(); !st.ok()) {
    return err({}, "net", std::string(st.message()));
  }
  if (s.nodes.empty()) return err({}, "nodes", "at least one node is required");
  std::set<std::string> node_names;
  std::set<uint64_t> seeds;
  for (std::size_t i = 0; i < s.nodes.size(); ++i) {
    const NodeSpec& n = s.nodes[i];
    std::string p = absl::StrCat("nodes[", i, "]");
    if (n.name.empty()) return err(n.mark, p + ".name", "must not be empty");
    if (!node_names.insert(n.name).second) {
      return err(n.mark, p + ".name", "duplicate node '" + n.name + "'");
    }
    if (!seeds.insert(n.gid_seed).second) {
      return err(n.mark, p + ".gid_seed", "duplicate gid_seed");
    }
  }

  std::set<uint32_t> ctx_ids;
  std::set<std::string> qp_names;
  for (std::size_t c = 0; c < s.contexts.size(); ++c) {
    const ContextSpec& ctx = s.contexts[c];
    std::string p = absl::StrCat("contexts[", c, "]");
    if (ctx.id == 0) return err(ctx.mark, p + ".id", "must be nonzero");
    if (!ctx_ids.insert(ctx.id).second) {
      return err(ctx.mark, p + ".id", absl::StrCat("duplicate id ", ctx.id));
    }
    if (!s.FindNode(ctx.node)) {
      return err(ctx.node_mark, p + ".node", "unknown node '" + ctx.node + "'");
    }
    for (std::size_t i = 0; i < ctx.mrs.size(); ++i) {
      const MrSpec& m = ctx.mrs[i];
      std::string q = absl::StrCat(p, ".mrs[", i, "]");
      if (m.size == 0 || m.size > kMaxMrSize) {
        return err(m.mark, q + ".size",
                   absl::StrCat("must be in [1, ", kMaxMrSize, "]"));
      }
      if (m.pd >= ctx.pds) return err(m.mark, q + ".pd", "no such PD");
    }
    for (std::size_t i = 0; i < ctx.cq_depths.size(); ++i) {
      if (ctx.cq_depths[i] == 0) {
        return err(ctx.mark, absl::StrCat(p, ".cqs[", i, "].depth"),
                   "must be positive");
      }
    }
    for (std::size_t i = 0; i < ctx.srqs.size(); ++i) {
      const SrqSpec& sr = ctx.srqs[i];
      std::string q = absl::StrCat(p, ".srqs[", i, "]");
      if (sr.depth == 0) return err(sr.mark, q + ".depth", "must be positive");
      if (sr.pd >= ctx.pds) return err(sr.mark, q + ".pd", "no such PD");
    }
    for (std::size_t i = 0; i < ctx.qps.size(); ++i) {
      const QpSpec& qp = ctx.qps[i];
      std::string q = absl::StrCat(p, ".qps[", i, "]");
      if (qp.name.empty()) return err(qp.mark, q + ".name", "must not be empty");
      if (!qp_names.insert(qp.name).second) {
        return err(qp.mark, q + ".name", "duplicate QP '" + qp.name + "'");
      }
      if (qp.pd >= ctx.pds) return err(qp.mark, q + ".pd", "no such PD");
      if (qp.mr >= ctx.mrs.size()) return err(qp.mark, q + ".mr", "no such MR");
      if (ctx.mrs[qp.mr].pd != qp.pd) {
        return err(qp.mark, q + ".mr", "MR belongs to a different PD");
      }
      if (!IsValidMtu(qp.mtu)) {
        return err(qp.mark, q + ".mtu", "must be 256, 512, 1024, 2048 or 4096");
      }
      if (qp.send_depth == 0 || qp.recv_depth == 0) {
        return err(qp.mark, q, "queue depths must be positive");
      }
      if (qp.send_cq >= ctx.cq_depths.size()) {
        return err(qp.mark, q + ".send_cq", "no such CQ");
      }
      if (qp.recv_cq >= ctx.cq_depths.size()) {
        return err(qp.mark, q + ".recv_cq", "no such CQ");
      }
      if (qp.srq) {
        if (*qp.srq >= ctx.srqs.size()) {
          return err(qp.mark, q + ".srq", "no such SRQ");
        }
        if (ctx.srqs[*qp.srq].pd != qp.pd) {
          return err(qp.mark, q + ".srq", "SRQ belongs to a different PD");
        }
      }
      if (qp.max_inflight == 0) {
        return err(qp.mark, q + ".max_inflight", "must be positive");
      }
      if (qp.timeout_ticks == 0) {
        return err(qp.mark, q + ".timeout_ticks", "must be positive");
      }
    }
  }

  // Every partner must exist before mutual pairing is checked, so a typo is
  // reported where it was made.
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t c = 0; c < s.contexts.size(); ++c) {
      for (std::size_t i = 0; i < s.contexts[c].qps.size(); ++i) {
        const QpSpec& qp = s.contexts[c].qps[i];
        std::string q =
            absl::StrCat("contexts[", c, "].qps[", i, "].partner");
        auto loc = s.FindQp(qp.partner);
        if (pass == 0) {
          if (!loc) {
            return err(qp.partner_mark, q, "unknown QP '" + qp.partner + "'");
          }
          if (qp.partner == qp.name) {
            return err(qp.partner_mark, q, "a QP cannot be its own partner");
          }
          continue;
        }
        const QpSpec& other = s.contexts[loc->first].qps[loc->second];
        if (other.partner != qp.name) {
          return err(qp.partner_mark, q,
                     "'" + qp.partner + "' is paired with '" + other.partner +
                         "', not '" + qp.name + "'");
        }
      }
    }
  }

  std::set<std::string> flows;
  for (std::size_t i = 0; i < s.traffic.size(); ++i) {
    const TrafficSpec& t = s.traffic[i];
    std::string p = absl::StrCat("traffic[", i, "]");
    if (!s.FindQp(t.qp)) {
      return err(t.qp_mark, p + ".qp", "unknown QP '" + t.qp + "'");
    }
    if (!flows.insert(t.qp).second) {
      return err(t.qp_mark, p + ".qp", "QP '" + t.qp + "' already has traffic");
    }
    if (t.count == 0) return err(t.mark, p + ".count", "must be positive");
    if (t.min_size == 0 || t.min_size > t.max_size) {
      return err(t.mark, p + ".msg_size", "need 1 <= min <= max");
    }
  }
  // Slots are sized for the larger direction, so blame the biggest message
  // among the flows that do not fit.
  auto layout = ComputeLayout(s);
  std::optional<std::size_t> too_big;
  for (std::size_t i = 0; i < s.traffic.size(); ++i) {
    const TrafficSpec& t = s.traffic[i];
    auto [c, q] = *s.FindQp(t.qp);
    auto [pc, pq] = *s.FindQp(s.contexts[c].qps[q].partner);
    const QpLayout& src = layout[c][q];
    const QpLayout& dst = layout[pc][pq];
    const bool send = t.opcode == verbs::WrOpcode::kSend;
    if (src.send_slots == 0 || (send ? dst.recv_slots : dst.write_slots) == 0) {
      if (!too_big || s.traffic[*too_big].max_size < t.max_size) too_big = i;
    }
  }
  if (too_big) {
    return err(s.traffic[*too_big].mark, absl::StrCat("traffic[", *too_big, "]"),
               "MR too small for messages of this size");
  }

  std::map<uint32_t, std::pair<std::string, Tick>> where;
  for (const auto& ctx : s.contexts) where[ctx.id] = {ctx.node, 0};
  for (std::size_t i = 0; i < s.migrations.size(); ++i) {
    const MigrationEntry& m = s.migrations[i];
    std::string p = absl::StrCat("migrations[", i, "]");
    if (!s.migration_enabled) {
      return err(m.mark, p, "migrations require migration_enabled: true");
    }
    auto it = where.find(m.ctx);
    if (it == where.end()) {
      return err(m.mark, p + ".context", absl::StrCat("unknown context ", m.ctx));
    }
    if (!s.FindNode(m.to)) {
      return err(m.mark, p + ".to", "unknown node '" + m.to + "'");
    }
    if (it->second.first == m.to) {
      return err(m.mark, p + ".to", "context is already on '" + m.to + "'");
    }
    if (i > 0 && it->second.second > 0 && m.at <= it->second.second) {
      return err(m.mark, p + ".at",
                 "migrations of one context must have increasing ticks");
    }
    if (m.at > s.net.max_ticks) {
      return err(m.mark, p + ".at", "beyond net.max_ticks");
    }
    it->second = {m.to, m.at};
  }
  for (const auto& [qp, st] : s.expect.final_states) {
    if (!s.FindQp(qp)) {
      return err({}, "expect.final_states." + qp, "unknown QP");
    }
  }
  return absl::OkStatus();
}

absl::StatusOr<Scenario> ParseScenario(std::string_view text,
                                       std::string_view filename) {
  Scenario s;
  try {
    YAML::Node root = YAML::Load(std::string(text));
    if (!root || root.IsNull()) {
      return absl::InvalidArgumentError(
          Format(filename, {}, "<root>", "empty scenario"));
    }
    s = Parser().Parse(root);
  } catch (const ParseError& e) {
    return absl::InvalidArgumentError(
        Format(filename, e.mark, e.path, e.what));
  } catch (const YAML::ParserException& e) {
    Mark m{e.mark.line + 1, e.mark.column + 1};
    return absl::InvalidArgumentError(
        Format(filename, m, "<syntax>", e.msg));
  } catch (const YAML::Exception& e) {
    Mark m = e.mark.line >= 0 ? Mark{e.mark.line + 1, e.mark.column + 1}
                              : Mark{};
    return absl::InvalidArgumentError(Format(filename, m, "<yaml>", e.msg));
  }
  if (auto st = Validate(s, filename); !st.ok()) return st;
  return s;
}

absl::StatusOr<Scenario> LoadScenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    return absl::InvalidArgumentError(
        absl::StrCat(path, ": cannot open scenario file"));
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseScenario(ss.str(), path);
}

}  // namespace migrsim::scenario
