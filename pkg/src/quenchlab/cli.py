"""Experiment runner: seeded batch execution with CSV/JSON emission.

Subcommands: polymer, pspm, msk, fpp, lpp, fluct, metric-selftest.  A
--config JSON file overrides command-line flags (unknown keys are rejected),
and the QUENCHLAB_SEED environment variable overrides the seed from either
source.  Every run writes a manifest.json with the resolved configuration,
the library version, and the wall time; all other outputs are deterministic
functions of (config, seed).

Exit codes: 0 success, 2 configuration error, 3 numerical non-convergence
(or failed self-test), 4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import random
import sys
import time
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .env import DistSpec, WalkKernel, sample_environment
from .errors import ConvergenceError, DomainError, ParameterError, QuenchLabError
from . import localize, msk, polymer, pspm
from . import growth

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

_DIST_DEFAULTS = {
    "gaussian": {"mean": 0.0, "sd": 1.0},
    "bernoulli_pm1": {"p": 0.5},
    "uniform": {"a": 0.0, "b": 1.0},
    "exponential": {"rate": 1.0},
}


def _dist_from(opts) -> DistSpec:
    params = dict(_DIST_DEFAULTS[opts["dist"]])
    params.update(opts.get("dist_params") or {})
    return DistSpec(opts["dist"], params)


def _parse_grid(text: str) -> List[float]:
    if ":" in text:
        lo, hi, num = text.split(":")
        return [float(v) for v in np.linspace(float(lo), float(hi), int(num))]
    return [float(v) for v in text.split(",") if v]


def _write_csv(path: str, header: List[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _write_manifest(out_dir: str, command: str, opts: Dict, t0: float) -> None:
    manifest = {
        "command": command,
        "config": {k: v for k, v in sorted(opts.items()) if k != "config"},
        "version": __version__,
        "wall_time_s": time.time() - t0,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands


def run_polymer(opts) -> int:
    dist = _dist_from(opts)
    env = sample_environment(dist, opts["d"], opts["n"], opts["seed"])
    run = polymer.forward_measures(env, opts["beta"])
    out = opts["outdir"]
    os.makedirs(out, exist_ok=True)
    polymer.dump_frames(run, out)
    marginals = polymer.ith_point_marginals(run)
    overlap = polymer.replica_overlap(run)
    try:
        w_n = polymer.normalized_partition(run)
    except DomainError:
        w_n = math.nan
    _write_csv(
        os.path.join(out, "summary.csv"),
        ["d", "n", "beta", "seed", "log_z", "free_energy", "overlap", "normalized_partition"],
        [
            [
                opts["d"],
                opts["n"],
                float(opts["beta"]),
                opts["seed"],
                run.log_z,
                polymer.free_energy(run),
                overlap,
                w_n,
            ]
        ],
    )
    report = localize.localization_report(
        marginals, delta=opts["delta"], K_geo=opts["k_geo"], K_fav=opts["k_fav"]
    )
    report.to_csv(os.path.join(out, "localization.csv"))
    report.to_json(os.path.join(out, "localization.json"))
    return EXIT_OK


def run_pspm(opts) -> int:
    dist = _dist_from(opts)
    walk = WalkKernel.srw(opts["d"])
    env = sample_environment(dist, opts["d"], opts["n"], opts["seed"])
    run = polymer.forward_measures(env, opts["beta"])
    rho = pspm.empirical_from_run(run)
    # shifted empirical measure: the same endpoint laws one step later
    from .polymer import LatticePMF

    rho_shift = pspm.EmpiricalMeasure(
        tuple(
            pspm.canonicalize(pspm.PSPM.from_pmf(LatticePMF.from_dense(run.fs[i])))
            for i in range(1, run.n + 1)
        )
    )
    rows = []
    for rep in range(opts["reps"]):
        updated = pspm.update_empirical(rho, opts["beta"], walk, dist, seed=opts["seed"] + 7919 * rep)
        w = pspm.wasserstein_estimate(rho_shift, updated, opts["alpha"])
        rows.append([rep, w])
    out = opts["outdir"]
    os.makedirs(out, exist_ok=True)
    _write_csv(os.path.join(out, "wasserstein.csv"), ["rep", "w_upper"], rows)
    vals = [r[1] for r in rows]
    mean = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    _write_csv(
        os.path.join(out, "wasserstein_summary.csv"),
        ["n", "alpha", "beta", "mean_w_upper", "se"],
        [[opts["n"], float(opts["alpha"]), float(opts["beta"]), mean, se]],
    )
    with open(os.path.join(out, "endpoint_pspm.json"), "w") as fh:
        json.dump(rho.atoms[-1].to_json(), fh, sort_keys=True)
        fh.write("\n")
    return EXIT_OK


_MSK_HEADER = [
    "beta",
    "h",
    "q1",
    "q2",
    "residual",
    "P_RS",
    "gamma1",
    "gamma2",
    "at_threshold_sq",
    "broken",
    "witness_gap",
]


def run_msk(opts) -> int:
    quad = msk.Quadrature.make(opts["quad_order"])
    betas = sorted(_parse_grid(opts["beta_grid"]))
    hs = sorted(_parse_grid(opts["h_grid"]))
    rows = []
    any_failed = False
    for beta in betas:
        for h in hs:
            model = msk.two_species(opts["lam1"], opts["d11"], opts["d22"], beta, h)
            try:
                point, _ = msk.rs_fixed_point(model, quad)
            except ConvergenceError as e:
                any_failed = True
                rows.append([beta, h, "", "", float(e.residual), "", "", "", "", "", ""])
                continue
            p_rs = msk.rs_free_energy(model, point.q, quad)
            if h > 0:
                at = msk.at_line_check(model, point, quad)
                gap = ""
                if at.broken:
                    wit = msk.verify_symmetry_breaking(model, quad, point=point)
                    gap = wit.gap if wit is not None else 0.0
                rows.append(
                    [
                        beta,
                        h,
                        float(point.q[0]),
                        float(point.q[1]),
                        point.residual,
                        p_rs,
                        float(at.gamma[0]),
                        float(at.gamma[1]),
                        at.threshold_beta_sq,
                        at.broken,
                        gap,
                    ]
                )
            else:
                rows.append(
                    [beta, h, float(point.q[0]), float(point.q[1]), point.residual, p_rs, "", "", "", "", ""]
                )
    out = opts["outdir"]
    os.makedirs(out, exist_ok=True)
    _write_csv(os.path.join(out, "msk_sweep.csv"), _MSK_HEADER, rows)
    return EXIT_NUMERIC if any_failed else EXIT_OK


def _run_passage(opts, model: str) -> int:
    dist = _dist_from(opts)
    growth.percolation_guards(dist, model)
    size = opts["size"]
    kind = "edge" if model == "fpp" else "vertex"
    f = growth.sample_field(kind, dist, (size, size), opts["seed"])
    src = (0, 0)
    dst = (size - 1, size - 1)
    if model == "fpp":
        t, path = growth.fpp_passage(f, src, dst)
    else:
        t, path = growth.lpp_passage(f, src, dst)
    out = opts["outdir"]
    os.makedirs(out, exist_ok=True)
    _write_csv(
        os.path.join(out, "summary.csv"),
        ["model", "size", "seed", "src", "dst", "T"],
        [[model, size, opts["seed"], f"{src[0]};{src[1]}", f"{dst[0]};{dst[1]}", float(t)]],
    )
    _write_csv(
        os.path.join(out, "geodesic.csv"),
        ["k", "x1", "x2"],
        [[k, a, b] for k, (a, b) in enumerate(path)],
    )
    return EXIT_OK


def run_fluct(opts) -> int:
    dist = _dist_from(opts)
    config = growth.FluctConfig(
        model=opts["model"],
        dist=dist,
        n_list=tuple(int(v) for v in _parse_grid(opts["n_list"])),
        replicas=opts["replicas"],
        m=opts["m"],
        alpha_coef=opts["alpha"],
        mode=opts["mode"],
        beta=opts["beta"],
        seed=opts["seed"],
    )
    stats = growth.fluctuation_experiment(config, jobs=opts["jobs"])
    stats.write_csv(opts["outdir"])
    return EXIT_OK


def run_metric_selftest(opts) -> int:
    rng = random.Random(opts["seed"])
    alpha = opts["alpha"]
    failures = []

    def rand_small():
        n_atoms = rng.randint(1, 5)
        copies, remaining = [], n_atoms
        total = rng.uniform(0.3, 1.0)
        n_copies = rng.randint(1, 2)
        for c in range(n_copies):
            k = rng.randint(1, remaining) if c < n_copies - 1 else remaining
            remaining -= k
            coords = set()
            while len(coords) < k:
                coords.add((rng.randint(-6, 6),))
            raw = [rng.uniform(0.05, 1.0) for _ in range(k)]
            s = sum(raw) * n_copies / total
            copies.append({x: v / s for x, v in zip(sorted(coords), raw)})
            if remaining == 0:
                break
        return pspm.PSPM.from_copies(1, copies)

    n_triples = opts["triples"]
    for _ in range(n_triples):
        f, g, h = rand_small(), rand_small(), rand_small()
        dfg = pspm.d_alpha(f, g, alpha)
        dgf = pspm.d_alpha(g, f, alpha)
        if dfg != dgf:
            failures.append(("symmetry", dfg, dgf))
        dgh = pspm.d_alpha(g, h, alpha)
        dfh = pspm.d_alpha(f, h, alpha)
        if dfh > dfg + dgh + 1e-12:
            failures.append(("triangle", dfh, dfg + dgh))
        up = pspm.d_alpha(f, g, alpha, mode="upper")
        if up < dfg - 1e-12:
            failures.append(("upper_vs_exact", up, dfg))
        shift = rng.randint(-4, 4)
        shifted = pspm.PSPM.from_copies(
            1, [{(x[0] + shift,): m for x, m in c.items()} for c in reversed(f.copies)]
        )
        dz = pspm.d_alpha(f, shifted, alpha)
        if dz != 0.0:
            failures.append(("zero_on_equivalence", dz, 0.0))
    for name in ("symmetry", "triangle", "upper_vs_exact", "zero_on_equivalence"):
        bad = [f for f in failures if f[0] == name]
        print(f"metric-selftest {name}: {'FAIL ' + str(bad[0]) if bad else 'PASS'} ({n_triples} triples)")
    return EXIT_NUMERIC if failures else EXIT_OK


# ---------------------------------------------------------------------------
# argument plumbing


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="quenchlab", description=__doc__)
    top.add_argument("--version", action="version", version=__version__)
    sub = top.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--outdir", default="quenchlab-out")
        p.add_argument("--config", default=None, help="JSON file overriding these flags")
        p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("polymer", help="transfer-matrix run with frame dumps")
    common(p)
    p.add_argument("--dist", choices=sorted(_DIST_DEFAULTS), default="gaussian")
    p.add_argument("--dist-params", type=json.loads, default=None)
    p.add_argument("--d", type=int, choices=(1, 2), default=1)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--k-geo", type=int, default=4)
    p.add_argument("--k-fav", type=int, default=2)

    p = sub.add_parser("pspm", help="empirical-measure self-coupling distance")
    common(p)
    p.add_argument("--dist", choices=sorted(_DIST_DEFAULTS), default="gaussian")
    p.add_argument("--dist-params", type=json.loads, default=None)
    p.add_argument("--d", type=int, choices=(1, 2), default=1)
    p.add_argument("--n", type=int, default=24)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=1.5)
    p.add_argument("--reps", type=int, default=4)

    p = sub.add_parser("msk", help="two-species sweep with instability detection")
    common(p)
    p.add_argument("--lam1", type=float, default=0.5)
    p.add_argument("--d11", type=float, default=2.0)
    p.add_argument("--d22", type=float, default=2.0)
    p.add_argument("--beta-grid", default="0.4:1.2:5")
    p.add_argument("--h-grid", default="0.5")
    p.add_argument("--quad-order", type=int, default=160)

    for name in ("fpp", "lpp"):
        p = sub.add_parser(name, help=f"single {name} instance with geodesic")
        common(p)
        p.add_argument("--dist", choices=sorted(_DIST_DEFAULTS), default="exponential")
        p.add_argument("--dist-params", type=json.loads, default=None)
        p.add_argument("--size", type=int, default=32)

    p = sub.add_parser("fluct", help="coupled fluctuation experiment")
    common(p)
    p.add_argument("--model", choices=("fpp", "lpp", "polymer"), default="fpp")
    p.add_argument("--dist", choices=sorted(_DIST_DEFAULTS), default="exponential")
    p.add_argument("--dist-params", type=json.loads, default=None)
    p.add_argument("--n-list", default="64,128,256")
    p.add_argument("--replicas", type=int, default=200)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--mode", choices=("min", "max"), default="min")
    p.add_argument("--beta", type=float, default=1.0)

    p = sub.add_parser("metric-selftest", help="metric axioms on random instances")
    common(p)
    p.add_argument("--alpha", type=float, default=1.5)
    p.add_argument("--triples", type=int, default=50)

    return top


_HANDLERS = {
    "polymer": run_polymer,
    "pspm": run_pspm,
    "msk": run_msk,
    "fpp": lambda o: _run_passage(o, "fpp"),
    "lpp": lambda o: _run_passage(o, "lpp"),
    "fluct": run_fluct,
    "metric-selftest": run_metric_selftest,
}


def _resolve_options(args: argparse.Namespace, parser: argparse.ArgumentParser) -> Dict:
    opts = {k: v for k, v in vars(args).items() if k != "command"}
    if args.config:
        try:
            with open(args.config) as fh:
                overrides = json.load(fh)
        except OSError as e:
            raise ParameterError(f"cannot read config file: {e}") from e
        except json.JSONDecodeError as e:
            raise ParameterError(f"config is not valid JSON: {e}") from e
        if not isinstance(overrides, dict):
            raise ParameterError("config must be a JSON object")
        unknown = set(overrides) - set(opts)
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        opts.update(overrides)
    env_seed = os.environ.get("QUENCHLAB_SEED")
    if env_seed is not None:
        try:
            opts["seed"] = int(env_seed)
        except ValueError:
            raise ParameterError(f"QUENCHLAB_SEED must be an integer, got {env_seed!r}")
    return opts


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code not in (0, None) else 0
    t0 = time.time()
    try:
        opts = _resolve_options(args, parser)
        code = _HANDLERS[args.command](opts)
        os.makedirs(opts["outdir"], exist_ok=True)
        _write_manifest(opts["outdir"], args.command, opts, t0)
        return code
    except ConvergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ParameterError, DomainError, QuenchLabError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
