"""An honest prover publishes a user input through the commit/reveal envelope.

The verifier pulls the program input out of the reveal, the primary program
hashes it in input-check mode and the midstate matches the signed V, so the
protocol continues through K^B_1 and no dispute is opened.
"""
import sys

from esspi.scenarios import run_scenario

ui = sys.argv[1].encode() if len(sys.argv) > 1 else b"header chain segment 812000..812015"
rep = run_scenario("honest", seed=1, user_input=ui)

print("winner        ", rep.winner)
print("winning path  ", rep.winning_path)
print("decoded input ", bytes.fromhex(rep.detail["user_input"]))
print("chain vbytes  ", rep.vbytes)
print("ledger events:")
for ev in rep.transcript:
    if ev.get("event") == "submit":
        print(f"  h={ev['height']:<3} {ev['label']:<8} {'accepted' if ev['accepted'] else 'rejected: ' + ev['reason']}")
