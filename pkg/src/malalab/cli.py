"""Command-line driver: verification suite and experiment sweeps.

Subcommands
-----------
verify          run the oracle + kernel + finite-chain verification suite
sweep-accept    mean acceptance across a dimension grid (Gaussian default)
sweep-collapse  adversarial acceptance collapse with Gaussian companion rows
sweep-gap       Dirichlet-form spectral-gap upper estimates over an h grid
mix             sliced-TV mixing-step counts (lower-bound proxy, trend only)
finite-selftest per-instance exact finite-chain report

Configuration is a plain-text key=value file (``--config``), overridable
with repeated ``--set key=value`` flags; ``--seed`` beats the ``SEED``
environment variable, which beats the config file. Sweep cells execute in
parallel under ``--threads`` with per-cell derived seeds and rows are
written in a canonical sorted order, so output files are byte-identical for
identical config+seed regardless of scheduling.

Sweep CSV header (stable): ``experiment,d,h,eta,estimator,value,std_error,n,seed``.

The theorem1 step-size rule is h = c·alpha^{1/2} / (beta^{4/3}·d^{1/2}·
log(d·kappa·M0/eps)); its constant c (default 0.1) and the acceptance-floor
constant c0 = 0.5 used by sweep-accept are calibration choices, not derived
values. Mixing counts are lower bounds on the TV mixing time because the
sliced proxy lower-bounds TV; rows are labeled accordingly.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace

import numpy as np

from . import diagnostics, kernels, verify
from .potentials import Potential, adversarial_cosine, gaussian
from .rng import substream

SWEEP_HEADER = ("experiment", "d", "h", "eta", "estimator", "value",
                "std_error", "n", "seed")


@dataclass(frozen=True)
class SweepConfig:
    """Sweep parameters; every field can come from a key=value config file."""

    kind: str = "gaussian"
    eta: float = 0.2
    d_grid: tuple[int, ...] = (64,)
    h_rule: str = "power"  # fixed | power | theorem1
    c: float = 0.5
    p: float = -1.0 / 3.0
    h_grid: tuple[float, ...] = ()
    n_states: int = 200
    n_mc: int = 200
    n_replicas: int = 4096
    m0: float = 1.0
    eps: float = 0.25
    max_steps: int = 2000
    start: str = "warm-half"  # warm-half | exact | origin
    n_instances: int = 500
    seed: int = 0


_INT_TUPLE = {"d_grid"}
_FLOAT_TUPLE = {"h_grid"}
_INTS = {"n_states", "n_mc", "n_replicas", "max_steps", "n_instances", "seed"}
_FLOATS = {"eta", "c", "p", "m0", "eps"}


def _coerce(key: str, raw: str):
    if key in _INT_TUPLE:
        return tuple(int(tok) for tok in raw.split(",") if tok.strip())
    if key in _FLOAT_TUPLE:
        return tuple(float(tok) for tok in raw.split(",") if tok.strip())
    if key in _INTS:
        return int(raw)
    if key in _FLOATS:
        return float(raw)
    return raw.strip()


def load_config(base: SweepConfig, path: str | None, sets: list[str]) -> SweepConfig:
    """Apply a key=value file and then --set overrides to the defaults."""
    known = {f.name for f in fields(SweepConfig)}
    updates = {}
    entries: list[str] = []
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            entries.extend(fh.read().splitlines())
    entries.extend(sets)
    for raw in entries:
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"expected key=value, got {line!r}")
        key, val = (tok.strip() for tok in line.split("=", 1))
        if key not in known:
            raise ValueError(f"unknown config key {key!r}")
        updates[key] = _coerce(key, val)
    return replace(base, **updates)


def target_for(cfg: SweepConfig, d: int) -> Potential:
    if cfg.kind == "gaussian":
        return gaussian(d)
    if cfg.kind == "adversarial":
        return adversarial_cosine(d, cfg.eta)
    raise ValueError(f"unknown target kind {cfg.kind!r}")


def step_size(cfg: SweepConfig, d: int, p: Potential) -> float:
    """Resolve the step-size rule at dimension d."""
    if cfg.h_rule == "fixed":
        return cfg.c
    if cfg.h_rule == "power":
        return cfg.c * d**cfg.p
    if cfg.h_rule == "theorem1":
        kappa = p.beta / p.alpha
        return (cfg.c * math.sqrt(p.alpha)
                / (p.beta ** (4.0 / 3.0) * math.sqrt(d)
                   * math.log(d * kappa * cfg.m0 / cfg.eps)))
    raise ValueError(f"unknown h_rule {cfg.h_rule!r}")


def _fmt(value) -> str:
    if value is None or value == "":
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_sweep_csv(path: str, rows) -> None:
    rows = sorted(rows, key=lambda r: (r[0], r[1], r[2], str(r[3]), r[4]))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_HEADER)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _run_cells(cells, threads: int):
    if threads <= 1:
        results = [cell() for cell in cells]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda cell: cell(), cells))
    return [row for cell_rows in results for row in cell_rows]


# ---------------------------------------------------------------------------
# subcommands


def cmd_verify(args) -> int:
    rows = verify.run_all_checks(args.seed, corrupt_accept=args.corrupt_accept)
    rows = sorted(rows, key=lambda r: r.name)
    out = args.out or "verify.csv"
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("check", "value", "bound", "slack", "passed"))
        for r in rows:
            writer.writerow((r.name, repr(r.value), repr(r.bound),
                             repr(r.slack), str(r.passed).lower()))
    failures = [r for r in rows if not r.passed]
    print(f"verify: {len(rows) - len(failures)}/{len(rows)} checks passed -> {out}")
    for r in failures:
        print(f"FAIL {r.name}: value={r.value:.6g} bound={r.bound:.6g} "
              f"slack={r.slack:.3g}")
    return 0 if not failures else 1


def _acceptance_cell(cfg: SweepConfig, experiment: str, kind: str, d: int, idx: int):
    def cell():
        p = gaussian(d) if kind == "gaussian" else adversarial_cosine(d, cfg.eta)
        h = step_size(cfg, d, p)
        res = diagnostics.mean_acceptance(
            p, h, cfg.n_states, cfg.n_mc,
            seed=substream(cfg.seed, "sweep", experiment, idx),
        )
        eta = "" if kind == "gaussian" else cfg.eta
        return [(experiment, d, h, eta, "mean_acceptance",
                 res.estimate.value, res.estimate.std_error,
                 res.n_states * res.n_mc, cfg.seed)]

    return cell


def cmd_sweep_accept(args) -> int:
    defaults = SweepConfig(kind="gaussian", d_grid=tuple(2**k for k in range(6, 13)),
                           h_rule="power", c=0.5, p=-1.0 / 3.0)
    cfg = load_config(defaults, args.config, args.set)
    cfg = replace(cfg, seed=args.seed)
    cells = [_acceptance_cell(cfg, "accept", cfg.kind, d, i)
             for i, d in enumerate(cfg.d_grid)]
    rows = _run_cells(cells, args.threads)
    out = args.out or "sweep_accept.csv"
    write_sweep_csv(out, rows)
    print(f"sweep-accept: {len(rows)} rows -> {out}")
    return 0


def cmd_sweep_collapse(args) -> int:
    defaults = SweepConfig(kind="adversarial", eta=0.2,
                           d_grid=tuple(2**k for k in range(8, 17)),
                           h_rule="power", c=1.0, p=-0.4,
                           n_states=256, n_mc=64)
    cfg = load_config(defaults, args.config, args.set)
    cfg = replace(cfg, seed=args.seed)
    cells = []
    for i, d in enumerate(cfg.d_grid):
        cells.append(_acceptance_cell(cfg, "collapse", "adversarial", d, 2 * i))
        cells.append(_acceptance_cell(cfg, "collapse", "gaussian", d, 2 * i + 1))
    rows = _run_cells(cells, args.threads)
    out = args.out or "sweep_collapse.csv"
    write_sweep_csv(out, rows)
    print(f"sweep-collapse: {len(rows)} rows -> {out}")
    return 0


def cmd_sweep_gap(args) -> int:
    defaults = SweepConfig(kind="adversarial", eta=0.2, d_grid=(64,),
                           h_grid=(1e-3, 1e-2, 0.05, 0.1, 0.3, 0.5),
                           n_states=100_000)
    cfg = load_config(defaults, args.config, args.set)
    cfg = replace(cfg, seed=args.seed)
    if not cfg.h_grid:
        raise ValueError("sweep-gap requires a nonempty h_grid")

    def gap_cell(d: int, h: float, idx: int):
        def cell():
            p = target_for(cfg, d)
            res = diagnostics.dirichlet_gap_upper(
                p, h, cfg.n_states, substream(cfg.seed, "sweep", "gap", idx)
            )
            eta = "" if cfg.kind == "gaussian" else cfg.eta
            return [("gap", d, h, eta, "dirichlet_gap_upper",
                     res.value, res.std_error, res.n_samples, cfg.seed)]

        return cell

    cells = [gap_cell(d, h, i * len(cfg.h_grid) + j)
             for i, d in enumerate(cfg.d_grid)
             for j, h in enumerate(cfg.h_grid)]
    rows = _run_cells(cells, args.threads)
    out = args.out or "sweep_gap.csv"
    write_sweep_csv(out, rows)
    print(f"sweep-gap: {len(rows)} rows -> {out}")
    return 0


def cmd_mix(args) -> int:
    defaults = SweepConfig(kind="gaussian", d_grid=(64,), h_rule="theorem1",
                           c=0.1, eps=0.25, n_replicas=4096, max_steps=2000)
    cfg = load_config(defaults, args.config, args.set)
    cfg = replace(cfg, seed=args.seed)

    def mix_cell(d: int, idx: int):
        def cell():
            p = target_for(cfg, d)
            h = step_size(cfg, d, p)
            if cfg.start == "warm-half":
                def sampler(n, rng):
                    return math.sqrt(0.5) * rng.standard_normal((n, d))
            elif cfg.start == "exact":
                def sampler(n, rng):
                    return kernels.sample_separable_target(p, n, rng)
            elif cfg.start == "origin":
                def sampler(n, rng):
                    return np.zeros((n, d))
            else:
                raise ValueError(f"unknown start {cfg.start!r}")
            steps = diagnostics.mixing_time_measure(
                p, h, sampler, cfg.eps, cfg.max_steps, cfg.n_replicas,
                substream(cfg.seed, "sweep", "mix", idx),
            )
            eta = "" if cfg.kind == "gaussian" else cfg.eta
            return [("mix", d, h, eta, "sliced_tv_mixing_steps_lower_bound",
                     float(steps), 0.0, cfg.n_replicas, cfg.seed)]

        return cell

    cells = [mix_cell(d, i) for i, d in enumerate(cfg.d_grid)]
    rows = _run_cells(cells, args.threads)
    out = args.out or "mix.csv"
    write_sweep_csv(out, rows)
    print(f"mix: {len(rows)} rows (lower-bound proxy, trend only) -> {out}")
    return 0


def cmd_finite_selftest(args) -> int:
    defaults = SweepConfig()
    cfg = load_config(defaults, args.config, args.set)
    cfg = replace(cfg, seed=args.seed)
    rows, all_ok = verify.finite_selftest_rows(cfg.n_instances, cfg.seed)
    out = args.out or "finite_selftest.csv"
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("instance_seed", "check", "slack"))
        for inst_seed, check, slack in rows:
            writer.writerow((inst_seed, check, repr(slack)))
    print(f"finite-selftest: {len(rows)} rows, "
          f"{'all passed' if all_ok else 'FAILURES'} -> {out}")
    return 0 if all_ok else 1


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("SEED")
    if env is not None:
        return int(env)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="malalab",
        description="Langevin sampling laboratory: verification and sweeps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", default=None, help="key=value config file")
        sp.add_argument("--seed", type=int, default=None,
                        help="master seed (default: SEED env var, then 0)")
        sp.add_argument("--out", default=None, help="output CSV path")
        sp.add_argument("--threads", type=int, default=1,
                        help="parallel sweep cells (default 1)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VAL",
                        help="override a config key (repeatable)")

    sp = sub.add_parser("verify", help="run the verification suite")
    common(sp)
    sp.add_argument("--corrupt-accept", action="store_true",
                    help="test fixture: bias the acceptance ratio (must fail)")
    sp.set_defaults(func=cmd_verify)

    for name, func in (("sweep-accept", cmd_sweep_accept),
                       ("sweep-collapse", cmd_sweep_collapse),
                       ("sweep-gap", cmd_sweep_gap),
                       ("mix", cmd_mix),
                       ("finite-selftest", cmd_finite_selftest)):
        sp = sub.add_parser(name)
        common(sp)
        sp.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.seed = _resolve_seed(args)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
