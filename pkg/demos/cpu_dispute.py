"""A prover lies about one step while hashing the input; watch the search.

The verifier bisects the step-hash chain to the first bad step, then routes
the challenge by opcode.  Pass a tamper kind and a step to try others, e.g.
``python demos/cpu_dispute.py write_value 30``.
"""
import sys

from esspi.dispute import ProverTamper, round_bound, run_dispute, workload_for_steps

kind = ProverTamper(sys.argv[1]) if len(sys.argv) > 1 else ProverTamper.LSSW_LIE
step = int(sys.argv[2]) if len(sys.argv) > 2 else 5

wl = workload_for_steps(256, upi_len=128)
res = run_dispute(wl, kind, step)
for line in res.log[1:]:
    extra = {k: v for k, v in line.items() if k not in ("round", "actor", "kind")}
    short = ", ".join(f"{k}={str(v)[:16]}" for k, v in extra.items())
    print(f"[{line['round']:>2}] {line['actor']:<9}{line['kind']:<24}{short}")
print()
print(f"verdict: {res.winner} ({res.reason})")
print(f"rounds {res.rounds}, bound {round_bound(256, wl.ab, res.x)}; r={res.r} x={res.x} z={res.z}")
