"""Flat versus curved time-dependent Hamiltonian fields.

A pair of partial Hamiltonians defines a propagator along any path in
two-time space. When the residual tensor vanishes the propagator only
depends on the endpoints; otherwise small loops pick up a defect set by
the commutator.

Run: python3 demos/01_flatness_and_holonomy.py
"""
import numpy as np

from multitime.fields import commuting_diagonal, constant_field, random_unitary
from multitime.holonomy import path_independence_gap, rectangle_holonomy, stokes_gap
from multitime.operators import PAULI_X, PAULI_Z, commutator, op_norm
from multitime.paths import SurfacePatch, TimePath

rng = np.random.default_rng(0)
start, end = [0.0, 0.0], [1.0, 1.0]
paths = [TimePath.random_staircase(rng, start, end, steps=400) for _ in range(4)]

# Diagonal in a shared rotated basis: the two generators commute everywhere.
flat = commuting_diagonal(rng.normal(size=(2, 4)), random_unitary(rng, 4))
curved = constant_field(np.stack([PAULI_X, PAULI_Z]))
print(f"path gap, commuting field : {path_independence_gap(flat, start, end, paths):.2e}")
print(f"path gap, Pauli pair      : {path_independence_gap(curved, start, end, paths):.2e}")

# The loop defect shrinks like dt**2 with prefactor ||[H1, H2]|| = 2.
print("\n dt        ||U_WN - U_SE|| / dt^2")
for k in range(4, 11, 2):
    dt = 2.0 ** -k
    d = rectangle_holonomy(curved, [0, 0], 0, 1, dt)
    print(f" 2^-{k:<5d} {op_norm(d) / dt ** 2:.6f}")
print(f" ||[H1,H2]|| = {op_norm(commutator(PAULI_X, PAULI_Z)):.1f}")

# Integrating the curvature over a surface recovers the boundary holonomy.
weak = constant_field(0.3 * np.stack([PAULI_X, PAULI_Z]))
print("\n mesh   stokes gap")
for m in (32, 64, 128):
    print(f" {m:<6d} {stokes_gap(weak, SurfacePatch.rectangle([0, 0], [1, 1], mesh=(m, m))):.2e}")
