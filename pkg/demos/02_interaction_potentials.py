"""Which interaction potentials admit consistent two-time dynamics.

A potential split into per-particle parts is consistent when the parts
are a pure gauge in the time variables. The gradient case recovers the
gauge function; the half-and-half Coulomb split does not.

Run: python3 demos/02_interaction_potentials.py
"""
import numpy as np

from multitime.potentials import coulomb_split, gauge_decompose, gradient_gauge, relation_residuals

pot = gradient_gauge("t1*t2", ["x**2", "cos(x)"])
dec = gauge_decompose(pot, [(-1, 1), (-1, 1)], grid=64)
t1, t2 = np.meshgrid(*dec.axes, indexing="ij")
print(f"gradient gauge: max |theta - t1*t2| = {np.max(np.abs(dec.theta_grid - t1 * t2)):.2e}")

# Two particles at equal times, one unit apart along x.
x = np.array([[[0.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]]])
res = relation_residuals(coulomb_split(2), x)
print(f"half Coulomb: relation residual r2 = {res.max('r2'):.3f} (nonzero, so inconsistent)")
