"""Piecewise-linear paths and parametrized surfaces in the space of time tuples."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidInputError, ShapeError


class TimePath:
    """Piecewise-linear curve through ``vertices`` in R^N.

    Each segment is integrated with ``steps[i]`` equal substeps. A path whose
    vertices all coincide is a valid degenerate path of zero length; otherwise
    consecutive vertices must differ.

    Parameters
    ----------
    vertices : array_like, shape (m, N), m >= 2
    steps : int or sequence of int
        Substeps per segment (one value per segment or a single shared value).
    """

    def __init__(self, vertices, steps: int | Sequence[int] = 1000):
        v = np.array(vertices, dtype=float)
        if v.ndim != 2 or v.shape[0] < 2:
            raise ShapeError("a path needs at least two vertices of shape (N,)")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("vertices must be finite")
        seg = np.diff(v, axis=0)
        zero = np.all(seg == 0.0, axis=1)
        self.degenerate = bool(np.all(zero))
        if zero.any() and not self.degenerate:
            raise InvalidInputError("consecutive vertices must be distinct")
        steps = np.broadcast_to(np.asarray(steps, dtype=int), (len(seg),)).copy()
        if np.any(steps < 1):
            raise InvalidInputError("steps per segment must be >= 1")
        v.setflags(write=False)
        steps.setflags(write=False)
        self.vertices = v
        self.steps = steps

    @classmethod
    def trivial(cls, point) -> "TimePath":
        p = np.asarray(point, dtype=float)
        return cls([p, p], 1)

    @classmethod
    def staircase(cls, start, end, order: Sequence[int] | None = None,
                  steps: int = 1000) -> "TimePath":
        """Axiparallel path changing one coordinate at a time in ``order``.

        Axes with no displacement are skipped.
        """
        start = np.asarray(start, dtype=float)
        end = np.asarray(end, dtype=float)
        order = range(len(start)) if order is None else order
        verts = [start.copy()]
        cur = start.copy()
        for ax in order:
            if cur[ax] != end[ax]:
                cur = cur.copy()
                cur[ax] = end[ax]
                verts.append(cur)
        if len(verts) == 1:
            return cls.trivial(start)
        return cls(verts, steps)

    @classmethod
    def random_staircase(cls, rng: np.random.Generator, start, end,
                         n_turns: int = 4, steps: int = 1000) -> "TimePath":
        """Monotone axiparallel path with random breakpoints.

        The displacement along each axis is split into ``n_turns`` random
        pieces, and the pieces are visited in a random axis order.
        """
        start = np.asarray(start, dtype=float)
        end = np.asarray(end, dtype=float)
        n = len(start)
        moves = []
        for ax in range(n):
            if start[ax] == end[ax]:
                continue
            w = rng.dirichlet(np.ones(n_turns))
            moves += [(ax, frac) for frac in w]
        rng.shuffle(moves)
        remaining = {ax: sum(1 for a, _ in moves if a == ax) for ax, _ in moves}
        verts = [start.copy()]
        cur = start.copy()
        for ax, frac in moves:
            nxt = cur.copy()
            remaining[ax] -= 1
            # the last piece along an axis lands exactly on the endpoint
            nxt[ax] = end[ax] if remaining[ax] == 0 else nxt[ax] + frac * (end[ax] - start[ax])
            if not np.array_equal(nxt, cur):
                verts.append(nxt)
                cur = nxt
        if len(verts) == 1:
            return cls.trivial(start)
        return cls(_merge_collinear(np.array(verts)), steps)

    @property
    def n_times(self) -> int:
        return self.vertices.shape[1]

    @property
    def start(self) -> np.ndarray:
        return self.vertices[0]

    @property
    def end(self) -> np.ndarray:
        return self.vertices[-1]

    @property
    def length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.vertices, axis=0), axis=1)))

    def is_axiparallel(self) -> bool:
        seg = np.diff(self.vertices, axis=0)
        return bool(np.all(np.count_nonzero(seg, axis=1) <= 1))

    def is_closed(self) -> bool:
        return bool(np.array_equal(self.vertices[0], self.vertices[-1]))

    def reversed(self) -> "TimePath":
        return TimePath(self.vertices[::-1], self.steps[::-1])

    def concat(self, other: "TimePath") -> "TimePath":
        if not np.array_equal(self.end, other.start):
            raise InvalidInputError("paths do not join")
        if self.degenerate:
            return other
        if other.degenerate:
            return self
        return TimePath(np.vstack([self.vertices, other.vertices[1:]]),
                        np.concatenate([self.steps, other.steps]))

    def step_samples(self) -> tuple[np.ndarray, np.ndarray]:
        """Midpoints and displacement vectors of every substep, in path order."""
        mids, deltas = [], []
        for a, b, n in zip(self.vertices[:-1], self.vertices[1:], self.steps):
            frac = (np.arange(n) + 0.5) / n
            mids.append(a + frac[:, None] * (b - a))
            deltas.append(np.broadcast_to((b - a) / n, (n, len(a))))
        return np.concatenate(mids), np.concatenate(deltas)

    def node_samples(self) -> np.ndarray:
        """All substep endpoints, including both path ends."""
        nodes = [self.vertices[:1]]
        for a, b, n in zip(self.vertices[:-1], self.vertices[1:], self.steps):
            frac = np.arange(1, n + 1) / n
            nodes.append(a + frac[:, None] * (b - a))
        return np.concatenate(nodes)

    def __repr__(self) -> str:
        return f"TimePath({len(self.vertices)} vertices, N={self.n_times})"


def _merge_collinear(v: np.ndarray) -> np.ndarray:
    """Drop interior vertices that continue along the same axis."""
    keep = [0]
    for i in range(1, len(v) - 1):
        d0 = v[i] - v[keep[-1]]
        d1 = v[i + 1] - v[i]
        if np.count_nonzero(d0) == 1 and np.array_equal(d0 != 0, d1 != 0):
            continue
        keep.append(i)
    keep.append(len(v) - 1)
    return v[keep]


@dataclass(frozen=True)
class SurfacePatch:
    """A map ``f: [0,1]^2 -> R^N`` with a mesh for ordered integration.

    ``f`` accepts arrays ``s, t`` of equal shape and returns ``shape + (N,)``.
    """

    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    n_times: int
    mesh: tuple[int, int] = (64, 64)

    def __post_init__(self):
        if len(self.mesh) != 2 or min(self.mesh) < 1:
            raise InvalidInputError("mesh must be two positive counts")

    @classmethod
    def rectangle(cls, corner, sides, axes=(0, 1), n_times: int | None = None,
                  mesh=(64, 64)) -> "SurfacePatch":
        """Axiparallel rectangle ``corner + s*sides[0] e_a + t*sides[1] e_b``."""
        corner = np.asarray(corner, dtype=float)
        n = len(corner) if n_times is None else n_times
        a, b = axes

        def f(s, t):
            s, t = np.broadcast_arrays(np.asarray(s, float), np.asarray(t, float))
            out = np.broadcast_to(corner, s.shape + (n,)).copy()
            out[..., a] += s * sides[0]
            out[..., b] += t * sides[1]
            return out

        return cls(f, n, tuple(mesh))

    @classmethod
    def bilinear(cls, vertex_grid, mesh=(64, 64)) -> "SurfacePatch":
        """Piecewise-bilinear patch through a ``(rows+1, cols+1, N)`` vertex grid.

        Axis 0 of ``vertex_grid`` runs along ``s``, axis 1 along ``t``.
        """
        vg = np.asarray(vertex_grid, dtype=float)
        if vg.ndim != 3 or min(vg.shape[:2]) < 2:
            raise ShapeError("vertex grid must be (>=2, >=2, N)")
        ns, nt = vg.shape[0] - 1, vg.shape[1] - 1

        def f(s, t):
            s, t = np.broadcast_arrays(np.asarray(s, float), np.asarray(t, float))
            x, y = s * ns, t * nt
            i = np.clip(np.floor(x).astype(int), 0, ns - 1)
            j = np.clip(np.floor(y).astype(int), 0, nt - 1)
            u, w = (x - i)[..., None], (y - j)[..., None]
            return ((1 - u) * (1 - w) * vg[i, j] + u * (1 - w) * vg[i + 1, j]
                    + (1 - u) * w * vg[i, j + 1] + u * w * vg[i + 1, j + 1])

        return cls(f, vg.shape[2], tuple(mesh))

    def with_mesh(self, mesh) -> "SurfacePatch":
        return SurfacePatch(self.f, self.n_times, tuple(mesh))

    def base_point(self) -> np.ndarray:
        return np.asarray(self.f(np.array(0.0), np.array(0.0)), dtype=float)

    def is_degenerate(self, tol: float = 0.0) -> bool:
        s, t = np.meshgrid(np.linspace(0, 1, 5), np.linspace(0, 1, 5), indexing="ij")
        pts = self.f(s, t).reshape(-1, self.n_times)
        return bool(np.max(np.abs(pts - pts[0])) <= tol)

    def boundary_vertices(self, per_edge: int | None = None) -> np.ndarray:
        """Closed polyline (0,0)->(1,0)->(1,1)->(0,1)->(0,0) in parameter space."""
        ns, nt = self.mesh if per_edge is None else (per_edge, per_edge)
        s = np.linspace(0, 1, ns + 1)
        t = np.linspace(0, 1, nt + 1)
        params = np.concatenate([
            np.stack([s, np.zeros_like(s)], 1),
            np.stack([np.ones_like(t[1:]), t[1:]], 1),
            np.stack([s[::-1][1:], np.ones_like(s[1:])], 1),
            np.stack([np.zeros_like(t[1:]), t[::-1][1:]], 1),
        ])
        return np.asarray(self.f(params[:, 0], params[:, 1]), dtype=float)

    def boundary_path(self, per_edge: int | None = None, steps: int = 4) -> TimePath:
        """Boundary curve as a closed :class:`TimePath` (vertices on the mesh).

        Repeated vertices, for instance along an edge that ``f`` collapses to a
        point, are removed.
        """
        v = self.boundary_vertices(per_edge)
        keep = np.concatenate([[True], np.any(np.diff(v, axis=0) != 0, axis=1)])
        v = v[keep]
        if len(v) < 2:
            return TimePath.trivial(v[0])
        if not np.array_equal(v[0], v[-1]):
            v = np.vstack([v, v[:1]])
        return TimePath(v, steps)
