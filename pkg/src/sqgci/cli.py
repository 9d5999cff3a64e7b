"""Command-line entry point: ``sqgci <subcommand> ...`` (or ``python -m sqgci``)."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import spectral as sp
from . import io
from .engine import (
    IterState,
    RunAborted,
    init_state,
    run,
    validate_params,
)
from .verification import TestFunctionBank, decay_report, pm4_residual, weak_residual

log = logging.getLogger("sqgci")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


def _load_config(path) -> io.RunConfig:
    return io.RunConfig.load(path)


def cmd_validate_params(args) -> int:
    cfg = _load_config(args.config)
    verdict = validate_params(cfg.params())
    print(verdict.format())
    if verdict.window_empty:
        print("parameter window is empty")
    return EXIT_OK if verdict.valid else EXIT_FAIL


def _refuse_invalid(cfg: io.RunConfig) -> bool:
    verdict = validate_params(cfg.params())
    if not verdict.valid:
        print(verdict.format(), file=sys.stderr)
        print("refusing to run with invalid parameters", file=sys.stderr)
        return True
    return False


def cmd_init(args) -> int:
    cfg = _load_config(args.config)
    if _refuse_invalid(cfg):
        return EXIT_FAIL
    out = Path(args.out or cfg.out_dir)
    try:
        state, rep = init_state(cfg.params(), cfg.engine_config())
    except ValueError as exc:
        print(f"init failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    io._atomic_write(out / "config.txt", cfg.to_text().encode())
    path = io.save_state(out, state, rep)
    print(f"wrote {path}")
    return EXIT_OK


def _increment(prev: IterState, new: IterState):
    """``M = mu_new - mu_prev`` on the new grid."""
    return new.mu - sp.resample(prev.mu, new.grid)


def cmd_run(args) -> int:
    cfg = _load_config(args.config)
    if args.stages is not None:
        cfg = io.dataclasses.replace(cfg, stages=args.stages)
    if _refuse_invalid(cfg):
        return EXIT_FAIL
    out = Path(args.out or cfg.out_dir)
    p, ecfg = cfg.params(), cfg.engine_config()

    existing = io.list_states(out)
    start = None
    if existing:
        stored = out / "config.txt"
        if stored.exists():
            old = io.RunConfig.from_text(stored.read_text())
            if old.physics_key() != cfg.physics_key():
                print(f"{out} holds a run with a different configuration", file=sys.stderr)
                return EXIT_USAGE
        start = io.load_state(existing[-1])
        print(f"resuming from {existing[-1].name}")
    io._atomic_write(out / "config.txt", cfg.to_text().encode())

    last = {"state": start[0] if start else None}

    def save(state, rep):
        prev = last["state"]
        inc = _increment(prev, state) if prev is not None and state.n > prev.n else None
        io.save_state(out, state, rep, inc)
        last["state"] = state
        print(f"state {state.n:>2}  parity {rep.parity:<4}  N={rep.grid:<5}  "
              f"||Gt||_X={rep.norms['Gt_X']:.5g}  delta={rep.delta:.5g}", flush=True)

    try:
        run(p, ecfg, start=start, callback=save, keep_states=False)
    except RunAborted as exc:
        print(f"run aborted: {exc.result.error}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_verify(args) -> int:
    root = Path(args.state)
    dirs = io.list_states(root)
    if not dirs and (root / "meta.json").exists():
        dirs = [root]
    if not dirs:
        print(f"no states under {root}", file=sys.stderr)
        return EXIT_USAGE
    cfg = io.RunConfig.from_text((dirs[0].parent / "config.txt").read_text()) \
        if (dirs[0].parent / "config.txt").exists() else io.RunConfig()
    nu, gamma = cfg.nu, cfg.gamma
    ok = True
    reports = []
    prev = None
    for d in dirs:
        state, rep = io.load_state(d)
        reports.append(rep)
        res = pm4_residual(state, nu, gamma)
        good = res.worst < args.pm4_tol
        line = f"{d.name}: pm4 {res.eq1:.2e} {res.eq2:.2e}"
        if prev is not None and state.n == prev.n + 1:
            fixed = "eta" if prev.parity == "A" else "eta_t"
            a = getattr(state, fixed).samples
            b = sp.resample(getattr(prev, fixed), state.grid).samples
            skip = float(np.max(np.abs(a - b)))
            line += f"  skip({fixed}) {skip:.1e}"
            good = good and (skip == 0.0 if state.grid == prev.grid else skip < 1e-12)
        print(line + ("" if good else "  FAIL"))
        ok = ok and good
        prev = state
    last = prev
    theta = sp.apply_multiplier(last.eta, sp.lam(1.0))
    f_total = sp.apply_multiplier(last.G + last.Gt, sp.MultiplierSpec(
        lambda k1, k2: -(k1**2 + k2**2), 0.0, "Delta"))
    wr = weak_residual(theta, f_total, nu, gamma, TestFunctionBank(args.k_test))
    print(f"weak residual (theta, f = Delta(G + Gt)): {wr.max_normalized:.2e}")
    ok = ok and wr.max_normalized < args.weak_tol
    if len(reports) >= 2:
        print(decay_report(reports).format())
    return EXIT_OK if ok else EXIT_FAIL


def cmd_norms(args) -> int:
    f = io.load_field(args.field)
    if args.kind == "holder" and args.s is None:
        print("--s is required for the Holder norm", file=sys.stderr)
        return EXIT_USAGE
    print(repr(sp.norm(f, args.kind, args.s)))
    return EXIT_OK


def cmd_export(args) -> int:
    f = io.load_field(args.field)
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        if args.format == "csv":
            np.savetxt(out, f.samples, delimiter=",", fmt="%.17g")
        else:
            h = sp.transform(f).coeffs
            mag = np.abs(h)
            thresh = args.threshold * mag.max() if mag.max() > 0 else 0.0
            n = f.n
            out.write("k1,k2,abs_coeff\n")
            for i, j in zip(*np.nonzero(mag > thresh)):
                k1 = i if i <= n // 2 else i - n
                k2 = j if j <= n // 2 else j - n
                out.write(f"{k1},{k2},{mag[i, j]:.17g}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sqgci", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate-params", help="check the parameter window")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_validate_params)

    s = sub.add_parser("init", help="write the initial state")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_init)

    s = sub.add_parser("run", help="run (or resume) the iteration")
    s.add_argument("--config", required=True)
    s.add_argument("--stages", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("verify", help="check stored states")
    s.add_argument("--state", required=True)
    s.add_argument("--k-test", type=int, default=4)
    s.add_argument("--pm4-tol", type=float, default=1e-9)
    s.add_argument("--weak-tol", type=float, default=1e-9)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("norms", help="print a norm of a field file")
    s.add_argument("--field", required=True)
    s.add_argument("--kind", choices=("sup", "X", "holder"), default="sup")
    s.add_argument("--s", type=float)
    s.set_defaults(func=cmd_norms)

    s = sub.add_parser("export", help="samples or spectrum as CSV")
    s.add_argument("--field", required=True)
    s.add_argument("--format", choices=("csv", "spectrum"), default="csv")
    s.add_argument("--threshold", type=float, default=1e-12,
                   help="relative cutoff for spectrum rows")
    s.add_argument("--out")
    s.set_defaults(func=cmd_export)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
