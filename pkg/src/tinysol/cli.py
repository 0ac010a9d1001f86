"""Command-line entry point: check, run, trace, bound and conformance."""

from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

from .chain import (
    ChainState, SnapshotError, exec_transaction, exec_transaction_traced, genesis, restore,
    run_chain, snapshot,
)
from .env import EnvError, state_to_json
from .parser import ParseError, SourceFile, parse_file
from .syntax import Blockchain, IfaceT, ShapeError, pretty_print
from .typesys import Gamma, TypeCheckError, check_declarations, min_gas

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class CliError(Exception):
    """Aborts a command with exit code 2."""


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2)


def _load(path: str) -> SourceFile:
    try:
        return parse_file(path)
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror or exc}") from None
    except ParseError as exc:
        raise CliError(f"{path}:{exc}") from None


def _gamma(src: SourceFile) -> Gamma:
    return Gamma.from_program(src.contracts, src.interfaces)


def _chain(src: SourceFile, snapshot_in: str | None) -> ChainState:
    try:
        cs = genesis(Blockchain(src.contracts, src.interfaces, src.txs))
    except (EnvError, ShapeError) as exc:
        raise CliError(f"genesis failed: {exc}") from None
    if snapshot_in:
        try:
            with open(snapshot_in, "rb") as fh:
                state = restore(fh.read())
        except OSError as exc:
            raise CliError(f"{snapshot_in}: {exc.strerror or exc}") from None
        except SnapshotError as exc:
            raise CliError(str(exc)) from None
        cs = ChainState(state, cs.table, cs.pending, (), cs.interfaces, cs.bindings)
    return cs


def _tx_bound(gamma: Gamma, src: SourceFile, i: int) -> dict:
    tx = src.txs[i]
    out = {"index": i, "tx": pretty_print(tx), "gas": tx.gas}
    try:
        caller = IfaceT(gamma.of_address(tx.caller))
        need = min_gas(gamma, {"this": caller}, tx.as_call())
    except TypeCheckError as exc:
        out["untyped"] = exc.to_json()
        return out
    out["min_gas"] = need
    out["sufficient"] = tx.gas >= need
    return out


# -- commands -------------------------------------------------------------------------


def cmd_check(args) -> int:
    src = _load(args.file)
    gamma = _gamma(src)
    report = check_declarations(gamma, src.contracts, src.interfaces, collect=True)
    txs = [_tx_bound(gamma, src, i) for i in range(len(src.txs))]
    if args.json:
        print(_dump({"ok": report.ok, **report.to_json(), "transactions": txs}))
    else:
        for c, methods in sorted(report.methods.items()):
            for m, r in sorted(methods.items()):
                computed = "-" if r.computed_n is None else r.computed_n
                print(f"{c}.{m}: computed_n={computed} declared_n={r.declared_n} "
                      f"min_gas={r.min_gas}")
        for t in txs:
            if "min_gas" in t:
                flag = "" if t["sufficient"] else " (insufficient)"
                print(f"tx {t['index']}: min_gas={t['min_gas']} gas={t['gas']}{flag}")
            else:
                print(f"tx {t['index']}: untyped ({t['untyped']['code']})")
        for e in report.errors:
            where = f" in {e.where}" if e.where else ""
            line = f" (line {e.line})" if e.line else ""
            print(f"error[{e.code}]{where}: {e.message}{line}")
        print("ok" if report.ok else f"{len(report.errors)} error(s)")
    return EXIT_OK if report.ok else EXIT_FAIL


def cmd_run(args) -> int:
    src = _load(args.file)
    cs = run_chain(_chain(src, args.snapshot_in))
    if args.snapshot_out:
        with open(args.snapshot_out, "wb") as fh:
            fh.write(snapshot(cs.state))
    if args.json:
        print(_dump({"receipts": [r.to_json() for r in cs.log],
                     "state": state_to_json(cs.state)}))
    else:
        for i, r in enumerate(cs.log):
            extra = f" ({r.reason})" if r.reason else f" gas_used={r.gas_used}"
            print(f"tx {i}: {pretty_print(r.tx)} -> {r.outcome}{extra}")
        print(snapshot(cs.state).decode())
    return EXIT_OK


def cmd_trace(args) -> int:
    src = _load(args.file)
    if not 0 <= args.tx < len(src.txs):
        raise CliError(f"transaction index {args.tx} out of range (file has {len(src.txs)})")
    cs = _chain(src, args.snapshot_in)
    for _ in range(args.tx):
        cs = exec_transaction(cs)
    cs, result = exec_transaction_traced(cs)
    receipt = cs.log[-1]
    if result is None:
        print(f"transaction skipped: {receipt.reason}", file=sys.stderr)
        return EXIT_OK
    for entry in result.trace:
        print(json.dumps(entry.to_json(), sort_keys=True))
    print(f"{receipt.outcome} gas_used={receipt.gas_used}", file=sys.stderr)
    return EXIT_OK


def cmd_bound(args) -> int:
    src = _load(args.file)
    gamma = _gamma(src)
    target = args.target
    if target.isdigit():
        i = int(target)
        if i >= len(src.txs):
            raise CliError(f"transaction index {i} out of range")
        out = _tx_bound(gamma, src, i)
    else:
        contract, _, method = target.partition(".")
        report = check_declarations(gamma, src.contracts, src.interfaces, collect=True)
        r = report.methods.get(contract, {}).get(method)
        if r is None:
            errs = [e.to_json() for e in report.errors if e.where == contract]
            raise CliError(f"no bound for {target}" + (f": {errs[0]['message']}" if errs else ""))
        out = {"method": target, **r.to_json()}
    if args.json:
        print(_dump(out))
    else:
        print(" ".join(f"{k}={v}" for k, v in sorted(out.items()) if not isinstance(v, dict)))
    return EXIT_OK if "untyped" not in out else EXIT_FAIL


def cmd_conformance(args) -> int:
    from .conformance import report_json, run_all

    report = run_all(cases=args.cases, seed=args.seed, steps=args.steps)
    if args.json:
        print(report_json(report))
    else:
        for name, s in report["suites"].items():
            status = "PASS" if s["ok"] else "FAIL"
            print(f"{status} {name}: {s['cases']} cases, {len(s['failures'])} failures, "
                  f"{s['seconds']}s")
            for f in s["failures"][:3]:
                print(f"  {f}")
    return EXIT_OK if report["ok"] else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tinysol", description="TinySol checker and interpreter")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="type-check contracts and report gas bounds")
    c.add_argument("file")
    c.add_argument("--json", action="store_true")
    c.set_defaults(func=cmd_check)

    r = sub.add_parser("run", help="execute every transaction in a file")
    r.add_argument("file")
    r.add_argument("--json", action="store_true")
    r.add_argument("--snapshot-in", metavar="PATH")
    r.add_argument("--snapshot-out", metavar="PATH")
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("trace", help="JSON-lines step trace of one transaction")
    t.add_argument("file")
    t.add_argument("--tx", type=int, default=0, metavar="N")
    t.add_argument("--snapshot-in", metavar="PATH")
    t.set_defaults(func=cmd_trace)

    b = sub.add_parser("bound", help="static bound of a method (C.f) or a transaction index")
    b.add_argument("file")
    b.add_argument("target")
    b.add_argument("--json", action="store_true")
    b.set_defaults(func=cmd_bound)

    k = sub.add_parser("conformance", help="run the randomized soundness suites")
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--cases", type=int, default=1000)
    k.add_argument("--steps", type=int, default=100_000)
    k.add_argument("--json", action="store_true")
    k.set_defaults(func=cmd_conformance)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"tinysol: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
