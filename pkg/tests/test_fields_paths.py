import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from multitime.errors import InvalidInputError, ShapeError
from multitime.fields import (
    HamiltonianField, commuting_diagonal, constant_field, gradient_scalar,
    pauli_pair, random_unitary, scalar_potential, tabulate, tabulated_field,
)
from multitime.operators import PAULI_X, PAULI_Z, commutator, is_hermitian
from multitime.paths import SurfacePatch, TimePath


class TestFields:
    def test_pauli_pair_values(self):
        h = pauli_pair()([0.3, -1.0])
        np.testing.assert_array_equal(h[0], PAULI_X)
        np.testing.assert_array_equal(h[1], PAULI_Z)

    def test_batch_shape(self):
        f = pauli_pair()
        assert f.evaluate(np.zeros((5, 2))).shape == (5, 2, 2, 2)
        with pytest.raises(ShapeError):
            f.evaluate(np.zeros((5, 3)))

    def test_commuting_diagonal_with_basis(self):
        u = random_unitary(np.random.default_rng(0), 3)
        f = commuting_diagonal([[1, 2, 3], [0, -1, 5]], basis=u)
        h1, h2 = f([0, 0])
        assert np.max(np.abs(commutator(h1, h2))) < 1e-12
        assert is_hermitian(h1, 1e-12)

    def test_gradient_scalar_from_string(self):
        f = gradient_scalar("t1*t2 + sin(t1)", PAULI_X)
        t = np.array([0.4, 1.5])
        h1, h2 = f(t)
        np.testing.assert_allclose(h1, (t[1] + np.cos(t[0])) * PAULI_X)
        np.testing.assert_allclose(h2, t[0] * PAULI_X)
        assert scalar_potential(f)(t[None])[0] == pytest.approx(0.6 + np.sin(0.4))

    def test_gradient_scalar_unknown_symbol(self):
        with pytest.raises(InvalidInputError):
            gradient_scalar("t1*y", PAULI_X)

    def test_constant_gradient_broadcasts(self):
        f = gradient_scalar("t1 + 2*t2", PAULI_Z)
        out = f.evaluate(np.zeros((3, 2)))
        np.testing.assert_array_equal(out[:, 1], np.broadcast_to(2 * PAULI_Z, (3, 2, 2)))

    def test_validate_detects_non_hermitian(self):
        bad = HamiltonianField(1, 2, lambda p: np.broadcast_to(
            np.array([[0, 1], [0, 0]], complex), (len(p), 1, 2, 2)))
        with pytest.raises(InvalidInputError):
            bad.validate(np.zeros((1, 1)))

    def test_tabulated_reproduces_bilinear_field(self):
        # H_j linear in each time -> multilinear interpolation is exact
        f = gradient_scalar("t1*t2", PAULI_X)
        axes = [np.linspace(0, 1, 5), np.linspace(0, 1, 7)]
        tab = tabulated_field(axes, tabulate(f, axes))
        pts = np.random.default_rng(1).uniform(0, 1, size=(20, 2))
        np.testing.assert_allclose(tab.evaluate(pts), f.evaluate(pts), atol=1e-13)
        with pytest.raises(InvalidInputError):
            tab([2.0, 0.0])

    def test_field_sum(self):
        f = pauli_pair() + constant_field(np.stack([PAULI_Z, PAULI_X]))
        np.testing.assert_array_equal(f([0, 0])[0], PAULI_X + PAULI_Z)


class TestTimePath:
    def test_staircase_vertices(self):
        p = TimePath.staircase([0, 0], [1, 2], order=[1, 0])
        np.testing.assert_array_equal(p.vertices, [[0, 0], [0, 2], [1, 2]])
        assert p.is_axiparallel() and not p.is_closed()

    def test_repeated_vertex_rejected(self):
        with pytest.raises(InvalidInputError):
            TimePath([[0, 0], [0, 0], [1, 0]])

    def test_trivial_path(self):
        p = TimePath.trivial([1.0, 2.0])
        assert p.degenerate and p.length == 0

    def test_reverse_and_concat(self):
        a = TimePath([[0, 0], [1, 0]], 3)
        b = TimePath([[1, 0], [1, 1]], 5)
        ab = a.concat(b)
        np.testing.assert_array_equal(ab.steps, [3, 5])
        r = ab.reversed()
        np.testing.assert_array_equal(r.vertices, [[1, 1], [1, 0], [0, 0]])
        with pytest.raises(InvalidInputError):
            b.concat(b)

    def test_step_samples_cover_the_path(self):
        p = TimePath([[0, 0], [1, 0], [1, 2]], [4, 2])
        mids, deltas = p.step_samples()
        assert mids.shape == (6, 2)
        np.testing.assert_allclose(deltas.sum(axis=0), [1, 2])
        np.testing.assert_allclose(mids[0], [0.125, 0])
        np.testing.assert_allclose(p.node_samples()[-1], [1, 2])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(2, 4))
    def test_random_staircase_is_monotone_and_axiparallel(self, seed, n):
        rng = np.random.default_rng(seed)
        end = rng.uniform(0.1, 2.0, size=n)
        p = TimePath.random_staircase(rng, np.zeros(n), end)
        assert p.is_axiparallel()
        np.testing.assert_array_equal(p.start, np.zeros(n))
        np.testing.assert_array_equal(p.end, end)
        assert np.all(np.diff(p.vertices, axis=0) >= 0)


class TestSurfacePatch:
    def test_rectangle_boundary_closes(self):
        patch = SurfacePatch.rectangle([0, 0], [1, 2], mesh=(3, 4))
        b = patch.boundary_path()
        assert b.is_closed() and b.is_axiparallel()
        assert b.length == pytest.approx(6.0)

    def test_bilinear_matches_vertices(self):
        vg = np.array([[[0, 0], [0, 1]], [[1, 0], [2, 2]]], float)
        patch = SurfacePatch.bilinear(vg)
        np.testing.assert_allclose(patch.f(np.array(1.0), np.array(1.0)), [2, 2])
        np.testing.assert_allclose(patch.f(np.array(0.5), np.array(0.5)), [0.75, 0.75])
        assert patch.boundary_path().is_closed()

    def test_degenerate_patch(self):
        patch = SurfacePatch(lambda s, t: np.zeros(np.shape(s) + (2,)), 2, (1, 1))
        assert patch.is_degenerate()
        assert patch.boundary_path().degenerate
