"""Signed program inputs for optimistic Bitcoin computation, on a simulated ledger.

Submodules
----------
hashcore   SHA-256 compression function, midstates and padding
ots        Winternitz one-time signatures and their script cost
tx, script, sighash, taproot, keys
           byte-exact transaction model and signature messages
scriptvm   interpreter for the tapscript subset the graphs use
storage    data-carrying transaction encodings and their cost
cpu        word machine with the input check mode and its trace hash chain
dag        pre-signed covenant transaction graphs
fraud      fraud challenge verdicts
dispute    partition search between prover and verifier
ledger     UTXO set with relative timelocks
scenarios  end-to-end honest and adversarial runs
"""
from . import cpu, dag, dispute, fraud, hashcore, ledger, ots, scenarios, scriptvm, sighash, storage, taproot, tx
from .hashcore import Midstate, owcf_compress, sha256
from .ledger import Ledger
from .ots import OtParams, ot_keygen, ot_sign, ot_verify
from .scenarios import SCENARIOS, run_scenario
from .storage import encode_user_input, expansion_factor
from .tx import OutPoint, Tx, TxIn, TxOut

__version__ = "0.1.0"

__all__ = [
    "cpu", "dag", "dispute", "fraud", "hashcore", "ledger", "ots", "scenarios", "scriptvm", "sighash", "storage",
    "taproot", "tx", "Midstate", "owcf_compress", "sha256", "Ledger", "OtParams", "ot_keygen", "ot_sign",
    "ot_verify", "SCENARIOS", "run_scenario", "encode_user_input", "expansion_factor", "OutPoint", "Tx", "TxIn",
    "TxOut", "__version__",
]
