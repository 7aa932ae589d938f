"""Partition lattice, δ-spacelike predicates and the family-wise construction."""
import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from sympy.utilities.iterables import multiset_partitions

from multitime.delta import (
    SpacetimeConfig, admissible_partitions, coarsest_partition, construct_phi,
    family_residual, finest_partition, free_multitime, gaussian_pair, in_S_delta_P,
    is_delta_spacelike, is_spacelike, order_independence, overlap_welldefinedness,
)
from multitime.errors import ConsistencyAssertionError, InvalidInputError
from multitime.lattice import (
    Grid, gaussian_state, nparticle_dirac_evolve, product_state,
)
from multitime.partitions import Partition, all_partitions, partitions_between

BELL = [1, 1, 2, 5, 15, 52, 203]


class TestPartition:
    def test_canonical_form(self):
        assert Partition([[2, 0], [1]]) == Partition([[1], [0, 2]])
        assert repr(Partition([[2, 0], [1]])) == "{{1,3}, {2}}"

    @pytest.mark.parametrize("blocks", [[[0], [0, 1]], [[0], []], [[0], [2]]])
    def test_invalid(self, blocks):
        with pytest.raises(InvalidInputError):
            Partition(blocks, 3 if blocks == [[0], [2]] else None)

    @pytest.mark.parametrize("n", range(7))
    def test_bell_numbers(self, n):
        parts = all_partitions(n)
        assert len(parts) == BELL[n] == len(set(parts))

    def test_refinement_order(self):
        n = 4
        assert Partition.discrete(n) <= Partition([[0, 1], [2, 3]]) <= Partition.indiscrete(n)
        assert not Partition([[0, 1], [2, 3]]) <= Partition([[0, 2], [1, 3]])

    @given(st.integers(1, 5), st.data())
    @settings(max_examples=60, deadline=None)
    def test_interval_matches_filter(self, n, data):
        parts = all_partitions(n)
        fine = data.draw(st.sampled_from(parts))
        coarser = [p for p in parts if fine <= p]
        coarse = data.draw(st.sampled_from(coarser))
        brute = {p for p in parts if fine <= p <= coarse}
        assert set(partitions_between(fine, coarse)) == brute


class TestPredicates:
    def test_equal_times_distinct(self):
        q = SpacetimeConfig([0, 0, 0], [[0], [1], [2]])
        assert is_spacelike(q)
        assert is_delta_spacelike(q, 5.0)
        assert in_S_delta_P(q, Partition.indiscrete(3), 5.0)

    def test_same_place_different_time_is_timelike(self):
        assert not is_spacelike(SpacetimeConfig([0, 1], [[0], [0]]))

    def test_lightlike_is_not_spacelike(self):
        assert not is_spacelike(SpacetimeConfig([0, 1], [[0], [1]]))
        assert is_spacelike(SpacetimeConfig([0, 1], [[0], [1.0001]]))

    def test_repeated_point(self):
        assert is_spacelike(SpacetimeConfig([0.5, 0.5], [[1, 2, 3], [1, 2, 3]]))

    def test_two_family_layout(self):
        # families {1,2,3} at T1 and {4,5} at T2 far apart
        t1, t2, d = 0.0, 1.0, 0.5
        x = [[0, 0, 0], [0.3, 0, 0], [0, 0.3, 0], [5, 0, 0], [5, 0.3, 0]]
        q = SpacetimeConfig([t1, t1, t1, t2, t2], x)
        p = Partition([[0, 1, 2], [3, 4]])
        assert in_S_delta_P(q, p, d)
        assert is_delta_spacelike(q, d)
        assert p in admissible_partitions(q, d)

    def test_boundary_distance_is_excluded(self):
        q = SpacetimeConfig([0.0, 1.0], [[0.0], [1.5]])
        assert not is_delta_spacelike(q, 0.5)
        assert not in_S_delta_P(q, Partition.discrete(2), 0.5)
        assert is_delta_spacelike(SpacetimeConfig([0.0, 1.0], [[0.0], [1.5 + 1e-12]]), 0.5)

    def test_delta_must_be_positive(self):
        q = SpacetimeConfig([0, 0], [[0], [1]])
        with pytest.raises(InvalidInputError):
            is_delta_spacelike(q, 0.0)

    def test_partitions_for_equal_times(self):
        q = SpacetimeConfig([0, 0, 0], [[0], [10], [20]])
        assert coarsest_partition(q) == Partition.indiscrete(3)
        assert finest_partition(q, 1.0) == Partition.discrete(3)
        assert len(admissible_partitions(q, 1.0)) == 5

    def test_close_pair_is_inseparable(self):
        q = SpacetimeConfig([0, 0], [[0], [0.2]])
        assert finest_partition(q, 0.5) == coarsest_partition(q) == Partition.indiscrete(2)

    def test_outside_S_delta_raises(self):
        q = SpacetimeConfig([0, 1], [[0], [1]])
        with pytest.raises(InvalidInputError):
            admissible_partitions(q, 0.5)


def _random_config(rng, n, d):
    """Random δ-spacelike configuration with a few shared times."""
    while True:
        levels = rng.integers(0, 3, n)
        times = rng.uniform(-1, 1, 3)[levels]
        pos = rng.uniform(-6, 6, (n, d))
        q = SpacetimeConfig(times, pos)
        if is_delta_spacelike(q, 1.0):
            return q


@given(st.integers(1, 5), st.sampled_from([1, 3]), st.integers(0, 2**31))
@settings(max_examples=80, deadline=None)
def test_admissible_equals_brute_force(n, d, seed):
    q = _random_config(np.random.default_rng(seed), n, d)
    brute = {Partition(p, n) for p in multiset_partitions(list(range(n)))
             if in_S_delta_P(q, Partition(p, n), 1.0)}
    adm = admissible_partitions(q, 1.0)
    assert set(adm) == brute
    fine, coarse = finest_partition(q, 1.0), coarsest_partition(q)
    assert all(fine <= p <= coarse for p in adm)
    assert fine in brute and coarse in brute


# ------------------------------------------------------------ construction

H = 1.0
DELTA = 8.0
MASS = 0.5
SPINOR = (1.0, 1.0j)


@pytest.fixture(scope="module")
def grid():
    return Grid(1, 48, H)


@pytest.fixture(scope="module")
def phi2(grid):
    return product_state([gaussian_state(grid, c, 2.5, SPINOR) for c in (18, 27)])


@pytest.fixture(scope="module")
def w():
    return gaussian_pair(0.8, 3.0, DELTA, H)


def test_zero_times_return_phi0(phi2, w):
    q = SpacetimeConfig([0, 0], [[17], [29]])
    sl = construct_phi(phi2, q, w, DELTA, MASS, return_slice=True)
    assert np.array_equal(sl.data.values, phi2.values)
    assert sl.trace == []


def test_single_family_is_single_time_solver(phi2, w):
    q = SpacetimeConfig([3, 3], [[18], [26]])
    sl = construct_phi(phi2, q, w, DELTA, MASS, return_slice=True)
    ref = nparticle_dirac_evolve(phi2, [0, 1], 3.0, w, MASS)
    assert np.max(np.abs(sl.data.values - ref.values)) <= 1e-10


def test_free_multitime(phi2):
    q = SpacetimeConfig([2, 6], [[15], [31]])
    sl = construct_phi(phi2, q, None, DELTA, MASS)
    ref = free_multitime(phi2, [2, 6], MASS).values[15, 31]
    assert np.max(np.abs(sl.value - ref)) <= 1e-9


def test_construction_orders_agree(phi2, w):
    q = SpacetimeConfig([4, 6], [[16], [27]])
    rep = order_independence(q, phi2, w, DELTA, MASS)
    assert len(rep.values) == 2
    assert np.max(np.abs(rep.values[0])) > 1e-3
    assert rep.deviation <= 1e-8


def test_interaction_matters(phi2, w):
    q = SpacetimeConfig([4, 6], [[16], [27]])
    a = construct_phi(phi2, q, w, DELTA, MASS).value
    b = construct_phi(phi2, q, None, DELTA, MASS).value
    assert np.max(np.abs(a - b)) > 1e-4


def test_trim_is_bitwise_identical(phi2, w):
    q = SpacetimeConfig([4, 6], [[16], [27]])
    for pivot in (0, 1):
        a = construct_phi(phi2, q, w, DELTA, MASS, pivot=pivot).value
        b = construct_phi(phi2, q, w, DELTA, MASS, pivot=pivot, trim=True).value
        assert np.array_equal(a, b)


def test_locality_outside_dependency_cone(phi2, w):
    q = SpacetimeConfig([4, 6], [[16], [27]])
    r = 6
    vals = phi2.values.copy()
    rng = np.random.default_rng(1)
    noise = rng.normal(size=vals.shape) + 1j * rng.normal(size=vals.shape)
    mask = np.ones(vals.shape[:2], bool)
    mask[16 - r:16 + r + 1, 27 - r:27 + r + 1] = False
    mask[:6] = mask[-6:] = False
    mask[:, :6] = mask[:, -6:] = False
    vals[mask] += 1e-3 * noise[mask]
    a = construct_phi(phi2, q, w, DELTA, MASS).value
    b = construct_phi(phi2.with_values(vals), q, w, DELTA, MASS).value
    assert np.array_equal(a, b)


def test_norm_conserved_per_family_solve(phi2, w):
    sl = construct_phi(phi2, SpacetimeConfig([4, 6], [[16], [27]]), w, DELTA, MASS)
    assert [s["particles"] for s in sl.trace] == [[1, 2], [2]]
    assert all(s["norm_drift"] <= 1e-9 for s in sl.trace)


def test_target_outside_S_delta(phi2, w):
    with pytest.raises(InvalidInputError):
        construct_phi(phi2, SpacetimeConfig([0, 5], [[20], [30]]), w, DELTA, MASS)


def test_forced_partition_must_be_admissible(phi2, w):
    q = SpacetimeConfig([1, 1], [[20], [24]])
    with pytest.raises(InvalidInputError):
        construct_phi(phi2, q, w, DELTA, MASS, partition=Partition.discrete(2))


def test_long_range_potential_rejected(phi2):
    with pytest.raises(InvalidInputError):
        construct_phi(phi2, SpacetimeConfig([1, 1], [[20], [24]]),
                      lambda x: np.exp(-np.asarray(x) ** 2 / 200), DELTA, MASS)


def test_cross_family_assertion_fires():
    grid = Grid(1, 40, 1.0)
    phi = product_state([gaussian_state(grid, c, 2.0, SPINOR) for c in (15, 24)])
    calls = {"n": 0}

    def sneaky(x):
        x = np.asarray(x, dtype=float)
        calls["n"] += 1
        # passes the range check on the first call, then acts at every distance
        return np.where(np.abs(x) < 3, 1.0, 0.0) if calls["n"] == 1 else np.ones_like(x)

    with pytest.raises(ConsistencyAssertionError):
        construct_phi(phi, SpacetimeConfig([1, 3], [[14], [24]]), sneaky, 3.0)


def test_overlap_three_particles():
    grid = Grid(1, 64, H)
    phi = product_state([gaussian_state(grid, c, 2.5, SPINOR) for c in (20, 30, 40)])
    w = gaussian_pair(0.8, 3.0, DELTA, H)
    q = SpacetimeConfig([4, 6, 6], [[18], [29], [40]])
    parts = admissible_partitions(q, DELTA)
    assert set(parts) == {Partition([[0], [1, 2]]), Partition.discrete(3)}
    rep = overlap_welldefinedness(q, phi, w, DELTA, MASS, trim=True)
    assert len(rep.values) == 5
    assert rep.deviation <= 1e-8


def test_family_equation_residual_converges():
    res = []
    for h in (0.5, 0.25):
        grid = Grid(1, int(40 / h), h)
        phi = product_state([gaussian_state(grid, c, 2.5, SPINOR) for c in (12.0, 26.0)])
        w = gaussian_pair(0.8, 3.0, 6.0, h)
        q = SpacetimeConfig([1.0, 2.0], [[10.0], [27.0]])
        res.append(family_residual(phi, q, [1], w, 6.0, MASS))
    assert res[1] < res[0] / 3
