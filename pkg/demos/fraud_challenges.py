"""Every way the commit/reveal pair can be malformed, and who catches it.

For each tamper the verifier builds all fraud claims from public chain data;
exactly one challenge convicts (or the primary program halts).
"""
from esspi.scenarios import EXPECTED, SCENARIOS, run_scenario

for name in SCENARIOS:
    rep = run_scenario(name)
    how = rep.detail.get("challenge") or rep.detail.get("halt_reason") or rep.detail.get("challenges", "")
    mark = "ok " if rep.ok else "BAD"
    print(f"{mark} {name:<13} winner={rep.winner:<9} via {rep.winning_path:<13} {how}")

assert all(run_scenario(n).ok for n in EXPECTED)
