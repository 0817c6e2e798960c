"""Command line entry point: ``esspi``.

Every command prints JSON on stdout; ``--pretty`` switches to a plain table.
Exit status is 0 when the outcome matches expectations, 1 when it does not
and 2 on usage errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import dag as D
from . import dispute, scenarios, storage
from .ledger import Ledger

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _emit(obj: dict, pretty: bool, table=None) -> None:
    if pretty and table is not None:
        print(table)
    else:
        print(json.dumps({"schema": SCHEMA_VERSION, **obj}, indent=None if not pretty else 2, sort_keys=True))


def _format_table(header: list[str], rows: list[list]) -> str:
    cells = [[str(c) for c in header]] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


# scenario

def cmd_scenario_run(args) -> int:
    ui = None
    if args.input:
        ui = Path(args.input).read_bytes()
    try:
        rep = scenarios.run_scenario(args.name, seed=args.seed, user_input=ui)
    except scenarios.ScenarioError as e:
        if "unknown" in str(e):
            raise UsageError(str(e)) from None
        _emit({"scenario": args.name, "error": str(e)}, args.pretty, f"{args.name}: {e}")
        return EXIT_UNEXPECTED
    out = rep.as_dict()
    if args.ledger_out:
        Path(args.ledger_out).write_text(json.dumps(rep.ledger_dump, indent=2, sort_keys=True))
    if args.transcript_out:
        Path(args.transcript_out).write_text(dispute.dump_log(dispute.DisputeResult("", "", 0, log=rep.dispute_log))
                                             if rep.dispute_log else "")
    rows = [["scenario", rep.scenario], ["winner", rep.winner], ["expected", "/".join(rep.expected)],
            ["winning path", rep.winning_path], ["rounds", rep.rounds], ["vbytes", rep.vbytes],
            ["ledger state", rep.ledger_state[:16] + "..."], ["transcript", rep.transcript_hash()[:16] + "..."],
            ["ok", rep.ok]]
    _emit(out, args.pretty, _format_table(["field", "value"], rows))
    return EXIT_OK if rep.ok else EXIT_UNEXPECTED


def cmd_scenario_list(args) -> int:
    rows = [[n, *scenarios.EXPECTED[n]] for n in scenarios.SCENARIOS]
    _emit({"scenarios": [{"name": r[0], "winner": r[1], "path": r[2]} for r in rows]}, args.pretty,
          _format_table(["scenario", "winner", "path"], rows))
    return EXIT_OK


# storage

def _parse_sizes(text: str) -> list[int]:
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"bad --sizes value {text!r}") from None
    if not sizes or any(s <= 0 for s in sizes):
        raise UsageError("--sizes needs positive integers")
    return sizes


def storage_table(sizes: list[int], policy: str = "standard") -> list[dict]:
    rows = []
    for n in sizes:
        for m in storage.METHODS:
            e = storage.expansion_factor(m, n, policy)
            rows.append({"size": n, "method": m, "n_txs": e.n_txs, "n_outputs": e.n_outputs,
                         "vbytes": storage.weight_to_vbytes(e.total_weight), "factor": round(e.factor, 3),
                         "per_tx_capacity": storage.per_tx_capacity(m, storage.policy_by_name(policy))})
    return rows


def cmd_storage_table(args) -> int:
    sizes = _parse_sizes(args.sizes)
    rows = storage_table(sizes, args.policy)
    tab = _format_table(["size", "method", "txs", "outputs", "vbytes", "factor", "cap/tx"],
                        [[r["size"], r["method"], r["n_txs"], r["n_outputs"], r["vbytes"], r["factor"],
                          r["per_tx_capacity"]] for r in rows])
    _emit({"policy": args.policy, "rows": rows}, args.pretty, tab)
    return EXIT_OK


# dag

def cmd_dag_build(args) -> int:
    setup = scenarios.setup_for(args.seed, T=args.T, variant=args.variant)
    led = Ledger()
    fund = led.fund(D.funding_output(setup.params), "alice funding")
    dag = D.build_dag(args.variant, setup.params, fund)
    D.presign_covenants(dag, setup.alice, setup.bob)
    text = D.dag_json(dag)
    if args.out:
        Path(args.out).write_text(text)
    info = {"variant": args.variant, "transactions": sorted(dag.txs), "out": args.out}
    if not args.out:
        info["dag"] = json.loads(text)
    rows = [[n, dag.tx(n).txid_hex[:16] + "...", dag.txs[n].presigned] for n in sorted(dag.txs)]
    _emit(info, args.pretty, _format_table(["tx", "txid", "presigned"], rows))
    return EXIT_OK


# dispute

def cmd_dispute_trace(args) -> int:
    base, kind, step = scenarios.parse_scenario(args.scenario) if args.scenario != "honest" else ("honest", None, 0)
    if base not in ("CPU_TAMPER", "honest"):
        raise UsageError("dispute trace takes CPU_TAMPER(kind,step) or honest")
    wl = dispute.workload_for_steps(args.steps, seed=args.seed)
    res = dispute.run_dispute(wl, kind, step, verifier=args.verifier, rng_seed=args.seed)
    text = dispute.dump_log(res)
    if args.out:
        Path(args.out).write_text(text)
    out = res.as_dict()
    out["round_bound"] = dispute.round_bound(len(dispute.honest_source(wl).records), wl.ab, res.x)
    expected = "prover" if kind is None else "verifier"
    rows = [[k, v] for k, v in out.items()]
    _emit(out, args.pretty, _format_table(["field", "value"], rows))
    return EXIT_OK if res.winner == expected else EXIT_UNEXPECTED


def cmd_dispute_replay(args) -> int:
    try:
        text = Path(args.file).read_text()
    except OSError as e:
        raise UsageError(str(e)) from None
    try:
        res = dispute.replay(text)
    except ValueError as e:
        _emit({"replayed": False, "error": str(e)}, args.pretty, f"replay failed: {e}")
        return EXIT_UNEXPECTED
    out = {"replayed": True, **res.as_dict()}
    _emit(out, args.pretty, _format_table(["field", "value"], [[k, v] for k, v in out.items()]))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="esspi", description="Signed program input laboratory")
    sub = p.add_subparsers(dest="group", required=True)

    sc = sub.add_parser("scenario").add_subparsers(dest="cmd", required=True)
    r = sc.add_parser("run", help="run one scenario end to end")
    r.add_argument("name")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--input", help="file holding the user input bytes")
    r.add_argument("--ledger-out", help="write the final ledger as JSON")
    r.add_argument("--transcript-out", help="write the dispute log (JSON lines) if one ran")
    r.add_argument("--pretty", action="store_true")
    r.set_defaults(func=cmd_scenario_run)
    ls = sc.add_parser("list")
    ls.add_argument("--pretty", action="store_true")
    ls.set_defaults(func=cmd_scenario_list)

    st = sub.add_parser("storage").add_subparsers(dest="cmd", required=True)
    t = st.add_parser("table", help="cost of each storage method")
    t.add_argument("--sizes", default="80,4096,102400")
    t.add_argument("--policy", choices=("standard", "nonstandard"), default="standard")
    t.add_argument("--pretty", action="store_true")
    t.set_defaults(func=cmd_storage_table)

    dg = sub.add_parser("dag").add_subparsers(dest="cmd", required=True)
    b = dg.add_parser("build", help="build and pre-sign a transaction graph")
    b.add_argument("--variant", choices=("simple", "ecdsa", "envelope"), default="envelope")
    b.add_argument("--out")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--T", type=int, default=D.DEFAULT_T)
    b.add_argument("--pretty", action="store_true")
    b.set_defaults(func=cmd_dag_build)

    dp = sub.add_parser("dispute").add_subparsers(dest="cmd", required=True)
    tr = dp.add_parser("trace", help="run a CPU dispute and write its log")
    tr.add_argument("scenario", help="CPU_TAMPER(kind,step) or honest")
    tr.add_argument("--steps", type=int, default=64)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--verifier", choices=("honest", "adversarial"), default="honest")
    tr.add_argument("--out")
    tr.add_argument("--pretty", action="store_true")
    tr.set_defaults(func=cmd_dispute_trace)
    rp = dp.add_parser("replay", help="re-run a dispute log and compare")
    rp.add_argument("file")
    rp.add_argument("--pretty", action="store_true")
    rp.set_defaults(func=cmd_dispute_replay)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        return args.func(args)
    except (UsageError, scenarios.ScenarioError, storage.StorageError, D.DagError) as e:
        print(f"esspi: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
