"""Exact finite propagation on the characteristic Dirac lattice.

With dt equal to the grid spacing each step moves every spinor
component exactly one cell, so nothing leaks past the light cone, with
or without mass and potential.

Run: python3 demos/03_light_cone.py
"""
import numpy as np

from multitime.lattice import (
    Grid, characteristic_evolve, gaussian_state, outside_cone_amplitude, support_bounds,
)

g = Grid(1, 1200, 0.1)
psi = gaussian_state(g, 60.0, 0.5, (0.6, 0.8j))
bounds = support_bounds(psi.values, [0])
v = 0.7 * np.cos(g.coords)

for steps in (100, 250, 500):
    out = characteristic_evolve(psi, steps * g.spacing, [0], 1.0, v)
    leak = outside_cone_amplitude(out.values, bounds, steps)
    print(f"{steps:4d} steps: norm {out.norm():.12f}, outside cone {leak!r}")
