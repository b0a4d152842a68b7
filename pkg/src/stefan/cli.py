"""Command-line entry point: ``stefan verify | run | sweep | audit``."""

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

from .config import RunConfig, load_config
from .diagnostics import check_halving, gronwall_report, record
from .errors import PreconditionError, StefanError
from .models import MODEL_KINDS, audit_assumptions_b, audit_hypothesis_h, make_model
from .solver import Trajectory, run
from .verify import MUTANTS, SUITES, run_suites

log = logging.getLogger("stefan")


def _g(x):
    return format(x, ".17g")


def _tag(x):
    # shortest round-trip form, for keys and file names
    return repr(float(x))


def csv_header(n):
    return "t,H,D,H_rel,rS_min,min_c,sum_dev,dt," + ",".join(f"mass_{i}" for i in range(1, n + 1))


def trajectory_rows(traj: Trajectory, model, ref: Optional[Trajectory] = None) -> List[str]:
    rows = []
    for k, snap in enumerate(traj.snapshots):
        rec = record(snap, model, None if ref is None else ref.snapshots[k], traj.snapshot_dt[k])
        cells = [rec.t, rec.entropy, rec.dissipation, rec.rel_entropy, rec.rs_min, rec.min_c, rec.sum_dev, rec.dt]
        cells += list(rec.mass)
        rows.append(",".join("" if v is None else _g(v) for v in cells))
    return rows


def write_csv(path, traj: Trajectory, model, ref: Optional[Trajectory] = None):
    lines = [csv_header(model.n)] + trajectory_rows(traj, model, ref)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


ONLY_TARGETS = 1 << 62


def simulate(cfg: RunConfig, snapshot_times=None) -> Trajectory:
    """Run a config; with ``snapshot_times`` only those times (and t_end) are recorded."""
    stride = cfg.snapshot_stride if snapshot_times is None else ONLY_TARGETS
    traj = run(cfg.solver_config(), cfg.initial_field(), stride, snapshot_times)
    if snapshot_times is not None and traj.times != list(snapshot_times):
        raise StefanError("paired run did not land on the shared snapshot times")
    return traj


def _same_run(a: RunConfig, b: RunConfig):
    return replace(a, output=None) == replace(b, output=None)


def _same_setup(a: RunConfig, b: RunConfig):
    keys = ("model", "n", "d", "gamma", "beta", "theta", "k", "masses", "cells", "length", "t_end")
    bad = [k for k in keys if getattr(a, k) != getattr(b, k)]
    if bad:
        raise StefanError(f"reference config differs in {', '.join(bad)}")


def cmd_run(args):
    cfg = load_config(args.config)
    model = cfg.build_model()
    out = args.output or cfg.output or str(Path(args.config).with_suffix(".csv"))
    if args.reference:
        ref_cfg = load_config(args.reference)
        _same_setup(cfg, ref_cfg)
        traj = simulate(cfg)
        # identical configs give identical trajectories; skip the second run
        ref = traj if _same_run(cfg, ref_cfg) else simulate(ref_cfg, snapshot_times=traj.times)
    else:
        ref, traj = None, simulate(cfg)
    write_csv(out, traj, model, ref)
    print(f"wrote {len(traj.snapshots)} rows to {out}")
    return 0


def _threads():
    try:
        return max(1, int(os.environ.get("STEFAN_THREADS", "1")))
    except ValueError:
        return 1


def parse_epsilons(text) -> List[float]:
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def sweep(cfg: RunConfig, epsilons: Sequence[float], seed=None, threads=1):
    """Reference run plus one perturbed run per epsilon (and epsilon = 0) on a shared time grid."""
    if seed is not None:
        cfg = replace(cfg, seed=int(seed))
    model = cfg.build_model()
    base = cfg.with_epsilon(0.0)
    ref = simulate(base)
    times = ref.times

    def member(eps):
        if eps == 0.0:
            # the unperturbed member repeats the reference run exactly
            return simulate(base)
        return simulate(cfg.with_epsilon(eps), snapshot_times=times)

    todo = [0.0] + list(epsilons)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        runs = list(pool.map(member, todo))
    pairs = [(eps, traj, ref) for eps, traj in zip(todo, runs)]
    return model, ref, pairs, gronwall_report(pairs, model)


def report_lines(rep):
    lines = [f"epsilons={','.join(_tag(e) for e in rep.epsilons)}"]
    for e, h0, r in zip(rep.epsilons, rep.h0, rep.sup_ratio):
        lines.append(f"h0[{_tag(e)}]={_g(h0)}")
        lines.append(f"sup_ratio[{_tag(e)}]={_g(r)}")
    lines.append(f"fitted_order={_g(rep.fitted_order)}")
    lines.append(f"sup_ratio_spread={_g(rep.ratio_spread())}")
    lines.append(f"zero_epsilon_max_h={_g(rep.zero_pair_max)}")
    return lines


def cmd_sweep(args):
    eps = parse_epsilons(args.epsilons)
    try:
        check_halving(eps)
    except PreconditionError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    cfg = load_config(args.config)
    model, ref, pairs, rep = sweep(cfg, eps, args.seed, _threads())
    out = Path(args.output or Path(args.config).with_suffix(""))
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "reference.csv", ref, model)
    for e, traj, r in pairs:
        write_csv(out / f"eps_{_tag(e)}.csv", traj, model, r)
    lines = report_lines(rep)
    (out / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return 0


def cmd_verify(args):
    names = [args.suite] if args.suite else None
    summary = run_suites(names, seed=args.seed, mutant=args.mutant)
    for line in summary.lines():
        print(line)
    print(f"suites={len(summary.results)} failures={summary.failures}")
    return summary.exit_code


def cmd_audit(args):
    n = args.n or (3 if args.model == "tumor" else 2)
    kw = dict(n=n)
    if args.model in ("classic-ms", "pvd", "porous-medium"):
        kw["d"] = args.d or [1.0] * (n * (n - 1) // 2)
    if args.model == "porous-medium":
        kw["gamma"] = args.gamma
    if args.model == "tumor":
        kw.update(beta=args.beta, theta=args.theta, k=[args.k] * 3 if args.k is not None else None)
    if args.model == "molar-mass":
        kw["masses"] = args.masses or [1.0] * n
    spec = make_model(args.model, **kw)
    ok = True
    for i, e in enumerate(spec.entropies):
        h = audit_hypothesis_h(e)
        ok &= h.passed
        print(f"hypothesis-H species={i + 1} K1={h.k1_estimate:.6g} K2={h.k2_estimate:.6g} "
              f"status={'PASS' if h.passed else 'FAIL'}")
        if args.model != "molar-mass":
            break
    rep = audit_assumptions_b(spec, samples=args.samples, seed=args.seed)
    for name, res in rep.clauses.items():
        print(f"{name} status={'PASS' if res.passed else 'FAIL'} {res.detail}")
    # a failing clause is a finding about the model, not an error of the audit
    return 0 if ok else 1


def build_parser():
    p = argparse.ArgumentParser(prog="stefan", description="Maxwell-Stefan cross-diffusion toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run the property suites")
    v.add_argument("--suite", choices=list(SUITES))
    v.add_argument("--seed", type=int, default=20240607)
    v.add_argument("--mutant", choices=MUTANTS, help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("run", help="integrate one scenario and write a CSV")
    r.add_argument("--config", required=True)
    r.add_argument("--reference")
    r.add_argument("--output")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="relative-entropy scaling sweep over epsilons")
    s.add_argument("--config", required=True)
    s.add_argument("--epsilons", required=True, help="comma-separated, each half the previous")
    s.add_argument("--seed", type=int)
    s.add_argument("--output", help="output directory")
    s.set_defaults(func=cmd_sweep)

    a = sub.add_parser("audit", help="check the structural hypotheses of a model")
    a.add_argument("model", choices=MODEL_KINDS)
    a.add_argument("--n", type=int)
    a.add_argument("--d", type=float, nargs="+")
    a.add_argument("--gamma", type=float)
    a.add_argument("--beta", type=float)
    a.add_argument("--theta", type=float)
    a.add_argument("--k", type=float)
    a.add_argument("--masses", type=float, nargs="+")
    a.add_argument("--samples", type=int, default=500)
    a.add_argument("--seed", type=int, default=1)
    a.set_defaults(func=cmd_audit)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (StefanError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
