"""Command-line scenario runner.

Usage::

    python -m multitime --config PATH [--output DIR] [--verbose]

Exit status: 0 success, 2 configuration error, 3 numerical failure,
4 I/O error. Every run writes ``manifest.json`` next to its outputs.
"""
from __future__ import annotations

import argparse
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy
import sympy

from . import __version__, config as cfgmod
from .config import ConfigError, ScenarioConfig
from .delta import (
    SpacetimeConfig, admissible_partitions, coarsest_partition, construct_phi, gaussian_pair,
    overlap_welldefinedness,
)
from .errors import (
    BoundaryContactError, ConsistencyAssertionError, InconsistentInputError, IntegratorFailure,
    InvalidInputError, ShapeError,
)
from .holonomy import (
    consistency_residual, rectangle_holonomy, rectangle_loop, residual_tensor, stokes_gap,
)
from .io import write_csv, write_json, write_snapshot
from .lattice import (
    AnalyticState, Grid, PartialHamiltonianSpec, characteristic_evolve, commutator_check,
    coulomb_dirac_rhs, coulomb_schrodinger_rhs, coulomb_test_points, gaussian_pair_callable,
    gaussian_state, order_gap, outside_cone_amplitude, product_state, support_bounds,
)
from .operators import op_norm, operator_to_dict
from .paths import SurfacePatch
from .potentials import gauge_decompose, relation_residuals, sample_configurations

log = logging.getLogger("multitime")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
NUMERIC_ERRORS = (IntegratorFailure, InconsistentInputError, BoundaryContactError,
                  ConsistencyAssertionError)


def _slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


# ------------------------------------------------------------------ scenarios

def run_consistency_check(p: dict, out: Path, rng, cfg) -> list:
    field = cfgmod.build_field(p["field"], rng, cfg.base_dir)
    rows, report = [], []
    for k, pt in enumerate(p["points"]):
        rep = consistency_residual(field, pt, p["fd_step"])
        entry = {"point": list(map(float, pt)), "pairs": []}
        for (j, i), r in rep.residual.items():
            n = float(op_norm(r))
            rows.append([k, j + 1, i + 1, n])
            entry["pairs"].append({"j": j + 1, "k": i + 1, "norm": n,
                                   "R": operator_to_dict(r), "F": operator_to_dict(rep.F(j, i))})
        report.append(entry)
    write_csv(out / "residuals.csv", ["point_id", "j", "k", "norm_R"], rows)
    write_json(out / "curvature.json", report)
    return ["residuals.csv", "curvature.json"]


def run_holonomy_scan(p: dict, out: Path, rng, cfg) -> list:
    field = cfgmod.build_field(p["field"], rng, cfg.base_dir)
    j, k = p["axes"]
    lo, hi = p["dt_exponents"]
    corner = np.asarray(p["corner"], dtype=float)
    r = residual_tensor(field, corner[None], p["fd_step"])[0, j, k]
    eye = np.eye(field.dim)
    rows = []
    for e in range(lo, hi + 1):
        dt = 2.0 ** -e
        diff = rectangle_holonomy(field, corner, j, k, dt, p["steps"])
        loop = rectangle_loop(field, corner, j, k, dt, p["steps"])
        defect = float(op_norm(loop - eye))
        law = float(op_norm(diff + r * dt ** 2)) / dt ** 2
        rows.append([dt, defect, float(op_norm(diff)), law, defect / dt ** 2])
    write_csv(out / "holonomy_scan.csv",
              ["dt", "loop_defect", "difference_norm", "law_residual", "ratio"], rows)
    arr = np.array(rows)
    pos = arr[:, 3] > 0
    summary = {
        "curvature_norm": float(op_norm(r)),
        "final_ratio": float(arr[-1, 4]),
        "law_residual_slope": _slope(arr[pos, 0], arr[pos, 3]) if pos.sum() >= 2 else None,
    }
    write_json(out / "summary.json", summary)
    return ["holonomy_scan.csv", "summary.json"]


def run_stokes(p: dict, out: Path, rng, cfg) -> list:
    field = cfgmod.build_field(p["field"], rng, cfg.base_dir)
    rows = []
    for m in p["meshes"]:
        patch = SurfacePatch.rectangle(p["corner"], p["sides"], mesh=(m, m))
        rows.append([m, stokes_gap(field, patch, p["boundary_steps"], p["fd_step"])])
    write_csv(out / "stokes.csv", ["mesh", "gap"], rows)
    gaps = [g for _, g in rows]
    write_json(out / "summary.json", {
        "gaps": gaps, "halving_ratios": [a / b for a, b in zip(gaps, gaps[1:]) if b > 0]})
    return ["stokes.csv", "summary.json"]


def run_potential_analyze(p: dict, out: Path, rng, cfg) -> list:
    pot = cfgmod.build_potential(p["potential"])
    x = sample_configurations(rng, p["n_samples"], pot.n_particles, pot.space_dim,
                              spread=p["spread"], min_separation=p["min_separation"])
    tab = relation_residuals(pot, x, p["fd_step"])
    tab.to_csv(out / "residuals.csv")
    write_json(out / "summary.json", {
        "max_r1": tab.max("r1"), "max_r2": tab.max("r2"), "flagged": list(tab.flagged)})
    return ["residuals.csv", "summary.json"]


def run_gauge_decompose(p: dict, out: Path, rng, cfg) -> list:
    pot = cfgmod.build_potential(p["potential"])
    pos = None if p["positions"] is None else np.asarray(p["positions"], dtype=float)
    dec = gauge_decompose(pot, p["box"], p["grid"], pos, p["tol"], seed=cfg.seed)
    mesh = np.meshgrid(*dec.axes, indexing="ij")
    cols = [f"t{j + 1}" for j in range(len(dec.axes))] + ["theta"]
    flat = [m.ravel() for m in mesh] + [dec.theta_grid.ravel()]
    write_csv(out / "theta.csv", cols, zip(*flat))
    write_json(out / "summary.json", {
        "residual": dec.residual, "grid_shape": list(dec.theta_grid.shape),
        "theta_range": [float(dec.theta_grid.min()), float(dec.theta_grid.max())]})
    return ["theta.csv", "summary.json"]


def run_coulomb_commutator(p: dict, out: Path, rng, cfg) -> list:
    kind, q, m = p["kind"], p["charge"], p["mass"]
    if kind not in ("schrodinger", "dirac"):
        raise ConfigError(f"coulomb-commutator kind must be 'schrodinger' or 'dirac', got {kind!r}")

    def pot(x):
        return 0.5 * q / np.linalg.norm(x[..., 0, :] - x[..., 1, :], axis=-1)

    specs = [PartialHamiltonianSpec(j, kind, m, pot, p["stencil_order"]) for j in (0, 1)]
    c1, c2 = p["centers"]
    n1, n2 = p["probe_counts"]
    pts = coulomb_test_points(c1, c2, p["probe_spacing"], n1, n2)
    if kind == "dirac":
        fn = gaussian_pair_callable(c1, c2, p["width"], cfgmod.spinor(p["spinor"]))
        spin, rhs = (4, 4), coulomb_dirac_rhs(q)
    else:
        fn = gaussian_pair_callable(c1, c2, p["width"])
        spin, rhs = (1, 1), coulomb_schrodinger_rhs(m, q)
    rows = []
    for h in p["spacings"]:
        res = commutator_check(*specs, AnalyticState(fn, pts, h, spin), rhs)
        log.info("spacing %g residual %.3e", h, res)
        rows.append([h, res])
    write_csv(out / "commutator.csv", ["spacing", "residual"], rows)
    slopes = [float(np.log(a[1] / b[1]) / np.log(a[0] / b[0])) for a, b in zip(rows, rows[1:])]
    write_json(out / "summary.json", {"residuals": [r for _, r in rows], "slopes": slopes})
    return ["commutator.csv", "summary.json"]


def run_order_gap(p: dict, out: Path, rng, cfg) -> list:
    g = Grid.centered(1, p["points"], p["spacing"])
    c1, c2 = p["centers"]
    psi = product_state([gaussian_state(g, c1, p["width"], (1, 0), cutoff=None),
                         gaussian_state(g, c2, p["width"], (0, 1), cutoff=None)])
    amp, rng_w = p["amplitude"], p["range"]

    def v(x):
        return amp * np.exp(-(x[..., 0, 0] - x[..., 1, 0]) ** 2 / (2 * rng_w ** 2))

    s1, s2 = (PartialHamiltonianSpec(j, "dirac1d", p["mass"], v) for j in (0, 1))
    f1, f2 = s1.without_potential(), s2.without_potential()
    rows = []
    for t1, t2 in p["times"]:
        gap, norm = order_gap(s1, s2, psi, t1, t2, p["dt"])
        free, _ = order_gap(f1, f2, psi, t1, t2, p["dt"])
        rows.append([t1, t2, gap, norm, free])
    write_csv(out / "order_gap.csv", ["t1", "t2", "gap", "normalized", "free_gap"], rows)
    return ["order_gap.csv"]


def run_lightcone(p: dict, out: Path, rng, cfg) -> list:
    g = Grid(1, p["points"], p["spacing"])
    psi = cfgmod.build_state(p["state"], g)
    pot = None
    if p["potential"] is not None:
        x = sympy.Symbol("x")
        expr = sympy.sympify(p["potential"], locals={"x": x})
        if expr.free_symbols - {x}:
            raise ConfigError("lightcone potential may only use the symbol 'x'")
        pot = np.broadcast_to(np.asarray(sympy.lambdify(x, expr, "numpy")(g.coords), float),
                              g.coords.shape)
    bounds = support_bounds(psi.values, [0])
    norm0 = psi.norm()
    rows, done = [], 0
    cur = psi
    while done < p["steps"]:
        n = min(p["report_every"], p["steps"] - done)
        cur = characteristic_evolve(cur, n * g.spacing, [0], p["mass"], pot)
        done += n
        rows.append([done, outside_cone_amplitude(cur.values, bounds, done),
                     abs(cur.norm() - norm0)])
    write_csv(out / "lightcone.csv", ["step", "max_amplitude_outside_cone", "norm_drift"], rows)
    write_snapshot(out / "final.bin", cur, [done * g.spacing])
    return ["lightcone.csv", "final.bin"]


def _delta_setup(p: dict):
    g = Grid(1, p["points"], p["spacing"])
    factors = [cfgmod.build_state(s, g) for s in p["phi0"]]
    if any(f.spin_dims != (2,) for f in factors):
        raise ConfigError("phi0 factors must be 2-spinors")
    wspec = cfgmod._keys(p["w"], "w", {"amplitude": cfgmod.REQUIRED, "width": cfgmod.REQUIRED})
    w = gaussian_pair(wspec["amplitude"], wspec["width"], p["delta"], p["spacing"])
    targets = []
    for k, t in enumerate(p["targets"]):
        t = cfgmod._keys(t, f"target {k + 1}", {"times": cfgmod.REQUIRED,
                                                "positions": cfgmod.REQUIRED})
        pos = np.asarray(t["positions"], dtype=float)
        targets.append(SpacetimeConfig(t["times"], pos.reshape(len(pos), -1)))
    for q in targets:
        if q.n_particles != len(factors):
            raise ConfigError("target particle count differs from the number of phi0 factors")
    return g, factors, w, targets


def run_delta_evolve(p: dict, out: Path, rng, cfg) -> list:
    g, factors, w, targets = _delta_setup(p)
    results, outputs = [], ["targets.json"]
    for k, q in enumerate(targets):
        parts = admissible_partitions(q, p["delta"])
        rep = overlap_welldefinedness(q, factors, w, p["delta"], p["mass"],
                                      p["all_pivots"], p["trim"])
        log.info("target %d: %d partitions, deviation %.3e", k + 1, len(parts), rep.deviation)
        base = rep.values[rep.labels.index((coarsest_partition(q).as_lists(), 0))]
        results.append({
            "config": q.to_dict(),
            "admissible_partitions": [pt.as_lists() for pt in parts],
            "value": base,
            "deviations": {
                "max": rep.deviation,
                "constructions": [{"partition": lab, "pivot": pv,
                                   "deviation": float(np.max(np.abs(v - base)))}
                                  for (lab, pv), v in zip(rep.labels, rep.values)],
            },
        })
        if p["export_slices"]:
            sl = construct_phi(product_state(factors), q, w, p["delta"], p["mass"],
                               return_slice=True)
            name = f"slice_{k + 1}.bin"
            write_snapshot(out / name, sl.data, q.times)
            outputs.append(name)
    write_json(out / "targets.json", results)
    return outputs


def run_overlap_test(p: dict, out: Path, rng, cfg) -> list:
    g, factors, w, targets = _delta_setup(p)
    rows, worst = [], 0.0
    for k, q in enumerate(targets):
        parts = admissible_partitions(q, p["delta"])
        if len(parts) < 2:
            raise ConfigError(f"target {k + 1} has a single admissible partition")
        rep = overlap_welldefinedness(q, factors, w, p["delta"], p["mass"], True, p["trim"])
        rows.append([k + 1, len(parts), len(rep.values), rep.deviation])
        worst = max(worst, rep.deviation)
    write_csv(out / "overlap.csv", ["target_id", "partitions", "constructions", "deviation"], rows)
    write_json(out / "summary.json", {"max_deviation": worst, "tolerance": p["tolerance"]})
    if worst > p["tolerance"]:
        raise ConsistencyAssertionError(
            f"overlap deviation {worst:.3e} exceeds tolerance {p['tolerance']:.3e}")
    return ["overlap.csv", "summary.json"]


SCENARIOS = {
    "consistency-check": run_consistency_check,
    "holonomy-scan": run_holonomy_scan,
    "stokes": run_stokes,
    "potential-analyze": run_potential_analyze,
    "gauge-decompose": run_gauge_decompose,
    "coulomb-commutator": run_coulomb_commutator,
    "order-gap": run_order_gap,
    "lightcone": run_lightcone,
    "delta-evolve": run_delta_evolve,
    "overlap-test": run_overlap_test,
}


def _versions() -> dict:
    return {"multitime": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "sympy": sympy.__version__}


def run(cfg: ScenarioConfig) -> list:
    """Execute ``cfg`` and write its outputs plus ``manifest.json``."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    start = time.perf_counter()
    outputs = SCENARIOS[cfg.scenario](cfg.parameters, out, rng, cfg)
    wall = time.perf_counter() - start
    write_json(out / "manifest.json", {
        "scenario": cfg.scenario,
        "seed": cfg.seed,
        "config": cfg.source,
        "effective_parameters": cfg.parameters,
        "versions": _versions(),
        "wall_time_seconds": wall,
        "outputs": sorted(outputs),
    })
    return outputs


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="multitime", description="Run a multi-time scenario.")
    ap.add_argument("--config", required=True, help="TOML scenario file")
    ap.add_argument("--output", help="override output_dir")
    ap.add_argument("--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = cfgmod.load(args.config)
        if args.output:
            cfg.output_dir = Path(args.output)
        outputs = run(cfg)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InvalidInputError, ShapeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    log.info("wrote %s to %s", ", ".join(sorted(outputs)), cfg.output_dir)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
