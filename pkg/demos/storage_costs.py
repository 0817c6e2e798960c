"""How much chain space does it take to publish a user input?

Prints the cost of each storage method for a few payload sizes, then the
per-bit cost of committing the same bytes with one-time signatures.
"""
from esspi.ots import OtParams, ot_witness_cost
from esspi.storage import METHODS, expansion_factor

SIZES = (80, 4096, 100_000)

print(f"{'size':>8}  {'method':<14}{'txs':>6}{'outputs':>9}{'factor':>9}")
for n in SIZES:
    for m in METHODS:
        e = expansion_factor(m, n)
        print(f"{n:>8}  {m:<14}{e.n_txs:>6}{e.n_outputs:>9}{e.factor:>9.2f}")
    print()

# one-time signatures: cost per signed bit
p = OtParams()
for bits in (32, 256, 8 * 1024):
    c = ot_witness_cost(p, bits)
    print(f"one-time signature over {bits:>5} bits: {c.total:>8.0f} vbytes, {c.per_bit:5.1f} per bit")
