#!/usr/bin/env python3
"""Black-box checks of the migrsim CLI: exit codes, determinism, and the
in-band transfer figures recomputed from the packet trace."""

import argparse
import json
import os
import subprocess
import sys
import tempfile

CLI = None
SCENARIOS = None


def run(*args):
    p = subprocess.run([CLI, *args], capture_output=True, text=True)
    return p.returncode, p.stdout, p.stderr


def expect(cond, msg):
    if not cond:
        print("FAIL:", msg)
        sys.exit(1)


def scenario(name):
    return os.path.join(SCENARIOS, name)


def case_migrate(tmp):
    trace = os.path.join(tmp, "trace.txt")
    rc, out, err = run("run", scenario("migrate_send.yaml"), "--trace", trace)
    expect(rc == 0, f"exit {rc}: {out}{err}")
    text = open(trace).read()
    expect(" NAK_STOPPED " in text or "0x6f" in text, "no NAK_STOPPED in trace")
    expect(" RESUME " in text, "no RESUME in trace")


def case_crossing(tmp):
    rc, out, err = run("run", scenario("crossing.yaml"))
    expect(rc == 0, f"exit {rc}: {out}{err}")
    expect("failed_migrations=0" in out, out)


def case_bad_partner(tmp):
    rc, _, err = run("run", scenario("bad_partner.yaml"))
    expect(rc == 2, f"exit {rc}")
    expect("bad_partner.yaml:" in err and "partner" in err, err)


def case_bad_flag(tmp):
    rc, _, _ = run("run", scenario("migrate_send.yaml"),
                   "--migration-enabled", "bogus")
    expect(rc == 2, f"exit {rc}")
    rc, _, _ = run("run")
    expect(rc == 2, f"missing file: exit {rc}")
    rc, _, _ = run("run", os.path.join(tmp, "missing.yaml"))
    expect(rc == 2, f"unreadable file: exit {rc}")


def case_unmet_expectation(tmp):
    path = os.path.join(tmp, "unmet.yaml")
    with open(path, "w") as f:
        f.write("""net: {seed: 2, latency_ticks: 2, max_ticks: 100000}
nodes: [{name: x}, {name: y}]
contexts:
  - {id: 1, node: x, mrs: [{size: 65536}], qps: [{name: qx, partner: qy}]}
  - {id: 2, node: y, mrs: [{size: 65536}], qps: [{name: qy, partner: qx}]}
traffic:
  - {qp: qx, count: 5, msg_size: 100}
expect:
  trace_contains: [RESUME]
""")
    rc, _, err = run("run", path)
    expect(rc == 1, f"exit {rc}")
    expect("FAIL" in err, err)


def case_determinism(tmp):
    traces = []
    for i in range(2):
        t = os.path.join(tmp, f"t{i}.txt")
        rc, out, err = run("run", scenario("migrate_send.yaml"), "--seed", "7",
                           "--trace", t)
        expect(rc == 0, f"exit {rc}: {err}")
        traces.append(open(t, "rb").read())
    expect(traces[0] == traces[1], "same seed produced different traces")
    t = os.path.join(tmp, "t8.txt")
    run("run", scenario("migrate_send.yaml"), "--seed", "8", "--trace", t)
    expect(open(t, "rb").read() != traces[0], "seed has no effect")


def case_resume_check(tmp):
    for extra in ([], ["--first-unacked", "6"],
                  ["--first-unacked", "8", "--receiver-expects", "8"]):
        rc, out, err = run("verify-fig6", *extra)
        expect(rc == 0, f"{extra}: exit {rc}: {out}{err}")
        expect("PASS" in out, out)
    rc, _, _ = run("verify-fig6", "--first-unacked", "99")
    expect(rc == 2, f"invalid snapshot: exit {rc}")


CHUNK = 4096


def case_transfer_figures(tmp):
    """Recomputes transfer duration, chunk count, image size and retransmits
    from the raw trace and compares them with the stats migration record."""
    trace = os.path.join(tmp, "trace.txt")
    stats = os.path.join(tmp, "stats.jsonl")
    rc, _, err = run("run", scenario("migrate_send.yaml"), "--trace", trace,
                     "--stats", stats)
    expect(rc == 0, err)
    migs = [json.loads(line) for line in open(stats) if line.strip()]
    migs = [m for m in migs if m.get("record") == "migration"]
    expect(len(migs) == 1, f"{len(migs)} migration records")
    m = migs[0]

    first_tx = None
    last_rx = 0
    sizes = {}
    tx_count = 0
    for line in open(trace):
        tick, direction, _node, _qpn, op, idx, _syn, length = line.split()
        if op != "CHUNK":
            continue
        tick, idx, length = int(tick), int(idx), int(length)
        if direction == "tx":
            tx_count += 1
            if first_tx is None:
                first_tx = tick
        else:
            sizes.setdefault(idx, length)
            last_rx = max(last_rx, tick)

    expect(first_tx is not None, "no chunks in trace")
    n = len(sizes)
    expect(sorted(sizes) == list(range(n)), "chunk indices not contiguous")
    expect(all(sizes[i] == CHUNK for i in range(n - 1)), "short inner chunk")
    expect(0 < sizes[n - 1] <= CHUNK, "bad final chunk")
    checks = {
        "chunks": n,
        "image_bytes": sum(sizes.values()),
        "transfer_ticks": last_rx - first_tx,
        "chunk_retransmits": tx_count - n,
    }
    for k, v in checks.items():
        expect(m[k] == v, f"{k}: stats {m[k]}, trace {v}")
    expect(m["checkpoint_ticks"] + m["transfer_ticks"] + m["restore_ticks"] ==
           m["total_ticks"], "phase durations do not sum")
    expect(m["trigger_tick"] + m["total_ticks"] == m["restored_at"],
           "restored_at inconsistent")


CASES = {k[5:]: v for k, v in globals().items() if k.startswith("case_")}


def main():
    global CLI, SCENARIOS
    ap = argparse.ArgumentParser()
    ap.add_argument("--cli", required=True)
    ap.add_argument("--scenarios", required=True)
    ap.add_argument("case", choices=sorted(CASES))
    a = ap.parse_args()
    CLI, SCENARIOS = a.cli, a.scenarios
    with tempfile.TemporaryDirectory() as tmp:
        CASES[a.case](tmp)
    print("ok", a.case)


if __name__ == "__main__":
    main()
