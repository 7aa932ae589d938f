"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Tolerances are the stated ones; setups are fixed and seeded.
"""
import time

import numpy as np
import pytest
from sympy.utilities.iterables import multiset_partitions

from multitime.delta import (
    SpacetimeConfig, admissible_partitions, coarsest_partition, construct_phi, finest_partition,
    free_multitime, gaussian_pair as delta_gaussian_pair, in_S_delta_P, is_delta_spacelike,
    order_independence, overlap_welldefinedness,
)
from multitime.fields import (
    commuting_diagonal, constant_field, gradient_scalar, random_hermitian, random_unitary,
)
from multitime.holonomy import (
    path_independence_gap, rectangle_holonomy, residual_tensor, stokes_gap,
)
from multitime.lattice import (
    AnalyticState, Grid, PartialHamiltonianSpec, characteristic_evolve, commutator_check,
    coulomb_dirac_rhs, coulomb_schrodinger_rhs, coulomb_test_points, gaussian_pair_callable,
    gaussian_state, nparticle_dirac_evolve, order_gap, outside_cone_amplitude, product_state,
    support_bounds,
)
from multitime.operators import PAULI_X, PAULI_Z, commutator, op_norm
from multitime.partitions import Partition
from multitime.paths import SurfacePatch, TimePath
from multitime.potentials import coulomb_split, gauge_decompose, gradient_gauge, relation_residuals


@pytest.fixture
def verdict(record_property, capsys):
    """Print and record ``[Cn] PASS|FAIL detail``, then assert."""
    def report(n, ok, detail, started):
        line = f"[C{n}] {'PASS' if ok else 'FAIL'} {detail} ({time.perf_counter() - started:.1f}s)"
        record_property("criterion", line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
    return report


# ------------------------------------------------------------------ C1

def _random_g(rng):
    a, b, c, d = rng.uniform(-1, 1, 4)
    k = rng.uniform(0.5, 2.0)
    return f"{a}*t1*t2 + {b}*sin({k}*t1)*t2**2 + {c}*t2**3 + {d}*exp(t1*t2/2)"


def _consistent_fields(rng, n):
    out = []
    for i in range(n):
        dim = int(rng.integers(2, 9))
        if i % 2 == 0:
            out.append(commuting_diagonal(rng.normal(size=(2, dim)), random_unitary(rng, dim)))
        else:
            out.append(gradient_scalar(_random_g(rng), random_hermitian(rng, dim)))
    return out


def _inconsistent_fields(rng, n):
    probe = np.stack(np.meshgrid(np.linspace(0, 1, 5), np.linspace(0, 1, 5)), -1).reshape(-1, 2)
    out = []
    while len(out) < n:
        dim = int(rng.integers(2, 9))
        f = constant_field(np.stack([random_hermitian(rng, dim), random_hermitian(rng, dim)]))
        if len(out) % 2:
            f = f + gradient_scalar(_random_g(rng), random_hermitian(rng, dim))
        r = residual_tensor(f, probe)[:, 0, 1]
        if np.max(op_norm(r)) >= 0.1:
            out.append(f)
    return out


def test_c1_flatness_iff_path_independence(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    start, end = [0.0, 0.0], [1.0, 1.0]

    def gap(f):
        paths = [TimePath.random_staircase(rng, start, end, steps=1000) for _ in range(5)]
        return path_independence_gap(f, start, end, paths)

    flat = [gap(f) for f in _consistent_fields(rng, 20)]
    curved = [gap(f) for f in _inconsistent_fields(rng, 20)]
    ok = max(flat) <= 1e-6 and min(curved) >= 1e-3
    verdict(1, ok, f"flat max gap {max(flat):.2e} <= 1e-6, curved min gap {min(curved):.2e} >= 1e-3",
            t0)


# ------------------------------------------------------------------ C2

def test_c2_second_order_loop_law(verdict):
    t0 = time.perf_counter()
    f = constant_field(np.stack([PAULI_X, PAULI_Z]))
    c = commutator(PAULI_X, PAULI_Z)
    dts = 2.0 ** -np.arange(4, 11)
    diffs = [rectangle_holonomy(f, [0, 0], 0, 1, dt) for dt in dts]
    resid = np.array([op_norm(d + c * dt ** 2) / dt ** 2 for d, dt in zip(diffs, dts)])
    slope = np.polyfit(np.log(dts), np.log(resid), 1)[0]
    ratio = op_norm(diffs[-1]) / dts[-1] ** 2
    ok = slope >= 0.9 and abs(ratio - 2.0) <= 0.05 * 2.0
    verdict(2, ok, f"residual slope {slope:.3f} >= 0.9, ratio {ratio:.6f} = 2 +- 5%", t0)


# ------------------------------------------------------------------ C3

def test_c3_nonabelian_stokes(verdict):
    t0 = time.perf_counter()
    f = constant_field(0.3 * np.stack([PAULI_X, PAULI_Z]))
    gaps = [stokes_gap(f, SurfacePatch.rectangle([0, 0], [1, 1], mesh=(m, m))) for m in (64, 128)]
    halving = gaps[0] / gaps[1]
    ok = gaps[1] <= 1e-3 and 0.75 * 2 <= halving <= 1.25 * 2
    verdict(3, ok, f"gap(128) {gaps[1]:.2e} <= 1e-3, gap(64)/gap(128) {halving:.3f} in [1.5, 2.5]",
            t0)


# ------------------------------------------------------------------ C4

def _coulomb_sweep(kind, n1):
    pot = lambda x: 0.5 / np.linalg.norm(x[..., 0, :] - x[..., 1, :], axis=-1)
    s1, s2 = (PartialHamiltonianSpec(j, kind, 1.0, pot, 4) for j in (0, 1))
    c1, c2 = (1.0, 0.0, 0.0), (-1.0, 0.0, 0.0)
    pts = coulomb_test_points(c1, c2, 0.05, n1=n1, n2=2)
    if kind == "dirac":
        fn = gaussian_pair_callable(c1, c2, 0.3, np.array([1, 0.5j, 0, 0.2]))
        spin, rhs = (4, 4), coulomb_dirac_rhs()
    else:
        fn = gaussian_pair_callable(c1, c2, 0.3)
        spin, rhs = (1, 1), coulomb_schrodinger_rhs(1.0, 1.0)
    return [commutator_check(s1, s2, AnalyticState(fn, pts, h, spin), rhs)
            for h in (0.1, 0.05, 0.025)]


def test_c4_coulomb_split_commutator(verdict):
    t0 = time.perf_counter()
    parts, ok = [], True
    for kind, n1 in (("schrodinger", 32), ("dirac", 16)):
        r = _coulomb_sweep(kind, n1)
        slopes = np.log2(np.array(r[:-1]) / r[1:])
        ok &= r[-1] <= 1e-2 and bool(np.all(slopes >= 3.5))
        parts.append(f"{kind} residual {r[-1]:.2e} slopes {np.round(slopes, 2).tolist()}")
    verdict(4, ok, "; ".join(parts), t0)


# ------------------------------------------------------------------ C5

def test_c5_order_of_evolution_gap(verdict):
    t0 = time.perf_counter()
    g = Grid.centered(1, 128, 0.125)
    psi = product_state([gaussian_state(g, -0.5, 1.0, (1, 0), cutoff=None),
                         gaussian_state(g, 0.5, 1.0, (0, 1), cutoff=None)])
    v = lambda x: 0.5 * np.exp(-(x[..., 0, 0] - x[..., 1, 0]) ** 2 / 2)
    s1, s2 = (PartialHamiltonianSpec(j, "dirac1d", 1.0, v) for j in (0, 1))
    _, norm = order_gap(s1, s2, psi, 0.1, 0.1)
    free, _ = order_gap(s1.without_potential(), s2.without_potential(), psi, 0.1, 0.1)
    ok = 0.8 <= norm <= 1.2 and free <= 1e-8
    verdict(5, ok, f"normalized gap {norm:.4f} in [0.8, 1.2], W=0 gap {free:.2e} <= 1e-8", t0)


# ------------------------------------------------------------------ C6

def test_c6_gauge_decomposition(verdict):
    t0 = time.perf_counter()
    dec = gauge_decompose(gradient_gauge("t1*t2", ["x**2", "cos(x)"]), [(-1, 1), (-1, 1)], grid=64)
    t1, t2 = np.meshgrid(*dec.axes, indexing="ij")
    err = float(np.max(np.abs(dec.theta_grid - t1 * t2)))
    x = np.array([[[0.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]]])
    r2 = relation_residuals(coulomb_split(2), x).max("r2")
    ok = err <= 1e-6 and r2 >= 0.1
    verdict(6, ok, f"theta error {err:.2e} <= 1e-6, half-Coulomb r2 {r2:.3f} >= 0.1", t0)


# ------------------------------------------------------------------ C7

def test_c7_exact_light_cone(verdict):
    t0 = time.perf_counter()
    g = Grid(1, 1200, 0.1)
    psi = gaussian_state(g, 60.0, 0.5, (0.6, 0.8j))
    bounds = support_bounds(psi.values, [0])
    v = 0.7 * np.cos(g.coords) + 0.2 * np.sin(0.3 * g.coords)
    worst = 0.0
    for mass in (0.0, 1.0):
        for pot in (None, v):
            out = characteristic_evolve(psi, 500 * g.spacing, [0], mass, pot)
            worst = max(worst, outside_cone_amplitude(out.values, bounds, 500))
    verdict(7, worst == 0.0, f"max |psi| outside cone after 500 steps = {worst!r} (4 cases)", t0)


# ------------------------------------------------------------------ C8

H, DELTA, MASS = 1.0, 8.0, 0.5

OVERLAP_TARGETS = [
    ([4, 6, 6], [18, 29, 40]),
    ([6, 6, 3], [21, 30, 42]),
    ([5, 5, 5], [16, 28, 40]),
    ([3, 3, 7], [20, 31, 44]),
    ([2, 6, 6], [15, 28, 37]),
]
TWO_FAMILY_TARGETS = OVERLAP_TARGETS[:2] + [
    ([3, 3, 7], [20, 31, 44]),
    ([2, 6, 6], [15, 28, 37]),
    ([5, 2, 5], [17, 30, 42]),
]


def _delta_setup():
    g = Grid(1, 64, H)
    phi = product_state([gaussian_state(g, c, 2.5, (1, 1j)) for c in (20, 30, 40)])
    return g, phi, delta_gaussian_pair(0.8, 3.0, DELTA, H)


def _q(times, pos):
    return SpacetimeConfig(times, [[x] for x in pos])


def test_c8_delta_model_consistency(verdict):
    t0 = time.perf_counter()
    g, phi, w = _delta_setup()
    notes, ok = [], True

    # (a) one family: the construction is the single-time interacting solve
    a_err = 0.0
    for t, pos in ((4, [18, 30, 41]), (6, [22, 28, 40])):
        q = _q([t] * 3, pos)
        sl = construct_phi(phi, q, w, DELTA, MASS, return_slice=True)
        ref = nparticle_dirac_evolve(phi, [0, 1, 2], t, w, MASS)
        a_err = max(a_err, float(np.max(np.abs(sl.data.values - ref.values))))
    ok &= a_err <= 1e-10
    notes.append(f"(a) {a_err:.1e}<=1e-10")

    # (b) every admissible partition and construction order agrees
    b_dev, b_int = 0.0, 0.0
    for times, pos in OVERLAP_TARGETS:
        q = _q(times, pos)
        assert len(admissible_partitions(q, DELTA)) >= 2
        b_dev = max(b_dev, overlap_welldefinedness(q, phi, w, DELTA, MASS).deviation)
        free = construct_phi(phi, q, None, DELTA, MASS).value
        b_int = max(b_int, float(np.max(np.abs(construct_phi(phi, q, w, DELTA, MASS).value - free))))
    ok &= b_dev <= 1e-8 and b_int > 1e-4
    notes.append(f"(b) {b_dev:.1e}<=1e-8 on {len(OVERLAP_TARGETS)} configs "
                 f"(interaction effect {b_int:.1e})")

    # (c) two-family targets: forward induction vs the other pivot
    c_dev = 0.0
    for times, pos in TWO_FAMILY_TARGETS:
        q = _q(times, pos)
        assert len(coarsest_partition(q)) == 2
        c_dev = max(c_dev, order_independence(q, phi, w, DELTA, MASS).deviation)
    ok &= c_dev <= 1e-8
    notes.append(f"(c) {c_dev:.1e}<=1e-8 on {len(TWO_FAMILY_TARGETS)} targets")

    # (d) no interaction: each particle evolves freely to its own time
    d_err = 0.0
    for times, pos in OVERLAP_TARGETS:
        q = _q(times, pos)
        ref = free_multitime(phi, times, MASS).values[tuple(pos)]
        d_err = max(d_err, float(np.max(np.abs(construct_phi(phi, q, None, DELTA, MASS).value - ref))))
    ok &= d_err <= 1e-9
    notes.append(f"(d) {d_err:.1e}<=1e-9")

    elapsed = time.perf_counter() - t0
    ok &= elapsed < 300
    verdict(8, ok, "; ".join(notes), t0)


# ------------------------------------------------------------------ C9

def _random_q(rng, n, d):
    while True:
        levels = rng.integers(0, 3, n)
        times = rng.uniform(-1, 1, 3)[levels]
        q = SpacetimeConfig(times, rng.uniform(-6, 6, (n, d)))
        if is_delta_spacelike(q, 1.0):
            return q


def test_c9_partition_lattice(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    bad, checked = 0, 0
    for n in range(1, 6):
        parts = [Partition(p, n) for p in multiset_partitions(list(range(n)))]
        for k in range(100):
            q = _random_q(rng, n, 1 if k % 2 else 3)
            brute = {p for p in parts if in_S_delta_P(q, p, 1.0)}
            adm = admissible_partitions(q, 1.0)
            fine, coarse = finest_partition(q, 1.0), coarsest_partition(q)
            good = (set(adm) == brute and len(adm) == len(brute)
                    and all(fine <= p <= coarse for p in adm)
                    and fine in brute and coarse in brute)
            bad += not good
            checked += 1
    verdict(9, bad == 0, f"{checked - bad}/{checked} configurations match brute force (N=1..5)", t0)
