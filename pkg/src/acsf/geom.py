"""Periodic uniform meshes, piecewise linear closed curves and discrete norms.

Node ``j`` (``0 <= j < J``) sits at ``q_j = j/J``; node ``J`` is identified with
node ``0`` through modular indexing. Element ``j`` is the interval
``[q_{j-1}, q_j]``, so element quantities are indexed by their *right* node:
``d_j = (X_j - X_{j-1}) / h``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateCurveError

__all__ = [
    "PeriodicMesh",
    "DiscreteCurve",
    "element_derivative",
    "element_lengths",
    "one_sided_limits",
    "lumped_inner",
    "ratio",
    "error_norms",
    "interpolate",
    "equidistribute",
    "polygon_curve",
    "write_curve_csv",
    "read_curve_csv",
    "write_svg",
]

# 3-point Gauss-Legendre rule on [0, 1]
_GAUSS_X = 0.5 + 0.5 * np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
_GAUSS_W = np.array([5.0, 8.0, 5.0]) / 18.0


@dataclass(frozen=True)
class PeriodicMesh:
    """Uniform partition of the periodic interval ``[0, 1)`` into ``J`` elements."""

    J: int

    def __post_init__(self):
        if int(self.J) != self.J or self.J < 3:
            raise ValueError(f"a periodic mesh needs an integer J >= 3, got {self.J!r}")

    @property
    def h(self) -> float:
        return 1.0 / self.J

    @property
    def nodes(self) -> np.ndarray:
        """Parameter values ``q_0, ..., q_{J-1}``."""
        return np.arange(self.J) / self.J

    @property
    def element_sizes(self) -> np.ndarray:
        return np.full(self.J, self.h)


@dataclass(frozen=True)
class DiscreteCurve:
    """Closed piecewise linear curve given by its ``J`` nodal positions."""

    positions: np.ndarray
    time: float = 0.0
    mesh: PeriodicMesh = field(init=False, repr=False)

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ValueError(f"positions must have shape (J, 2), got {pos.shape}")
        if self.time < 0:
            raise ValueError("time must be nonnegative")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "mesh", PeriodicMesh(pos.shape[0]))

    @property
    def J(self) -> int:
        return self.mesh.J

    def with_positions(self, positions, time=None) -> "DiscreteCurve":
        return DiscreteCurve(positions, self.time if time is None else time)

    def check_nondegenerate(self, tol: float = 0.0) -> None:
        """Raise :class:`DegenerateCurveError` if some element is shorter than ``tol``."""
        lengths = element_lengths(self.positions)
        j = int(np.argmin(lengths))
        if not lengths[j] > tol:
            raise DegenerateCurveError(
                f"element {j} has length {lengths[j]:.3e}", element=j
            )


def _positions(curve) -> np.ndarray:
    return curve.positions if isinstance(curve, DiscreteCurve) else np.asarray(curve, dtype=float)


def element_derivative(curve) -> np.ndarray:
    """Piecewise constant ``x_rho``: row ``j`` is ``(X_j - X_{j-1}) J``."""
    X = _positions(curve)
    return (X - np.roll(X, 1, axis=0)) * X.shape[0]


def element_lengths(curve) -> np.ndarray:
    """Chord lengths ``|X_j - X_{j-1}|``."""
    X = _positions(curve)
    return np.linalg.norm(X - np.roll(X, 1, axis=0), axis=1)


def one_sided_limits(u, kind: str = "nodal"):
    """Return ``(u(q_j^-), u(q_{j-1}^+))`` for every element ``j``.

    ``kind`` is ``"nodal"`` for continuous piecewise linear data given by nodal
    values, ``"element"`` for piecewise constant data, or ``"limits"`` when
    ``u`` already is such a pair.
    """
    if kind == "limits":
        left, right = u
        return np.asarray(left, dtype=float), np.asarray(right, dtype=float)
    u = np.asarray(u, dtype=float)
    if kind == "nodal":
        return u, np.roll(u, 1, axis=0)
    if kind == "element":
        return u, u
    raise ValueError(f"unknown field kind {kind!r}")


def lumped_inner(u, v, mesh: PeriodicMesh | int, u_kind="nodal", v_kind="nodal") -> float:
    """Mass lumped inner product ``(u, v)^h``.

    Each element contributes ``h/2`` times the sum of the products of the
    one-sided limits at its two end points. Vector valued fields are contracted
    over all trailing axes.
    """
    J = mesh.J if isinstance(mesh, PeriodicMesh) else int(mesh)
    um, up = one_sided_limits(u, u_kind)
    vm, vp = one_sided_limits(v, v_kind)
    if len(um) != J or len(vm) != J:
        raise ValueError(f"field sizes {len(um)}, {len(vm)} do not match mesh size {J}")
    prod = um * vm + up * vp
    return 0.5 / J * float(np.sum(prod))


def ratio(curve) -> float:
    """Longest over shortest element length."""
    lengths = element_lengths(curve)
    shortest = lengths.min()
    if not shortest > 0:
        raise DegenerateCurveError(
            "ratio undefined for a zero-length element", element=int(np.argmin(lengths))
        )
    return float(lengths.max() / shortest)


def error_norms(curve, exact_position: Callable, exact_derivative: Callable) -> tuple[float, float]:
    """``L2`` and full ``H1`` norms of ``x - x_h`` by 3-point Gauss per element.

    ``exact_position(rho)`` and ``exact_derivative(rho)`` map an array of
    parameters of shape ``(n,)`` to arrays of shape ``(n, 2)``.
    """
    X = _positions(curve)
    J = X.shape[0]
    h = 1.0 / J
    Xl = np.roll(X, 1, axis=0)
    left = (np.arange(J) - 1) * h  # element j spans [q_{j-1}, q_j]
    s = _GAUSS_X
    rho = (left[:, None] + h * s[None, :]).ravel()
    xh = (Xl[:, None, :] + s[None, :, None] * (X - Xl)[:, None, :]).reshape(-1, 2)
    dh = np.repeat((X - Xl) * J, 3, axis=0)
    w = np.tile(_GAUSS_W * h, J)
    e0 = np.asarray(exact_position(rho)) - xh
    e1 = np.asarray(exact_derivative(rho)) - dh
    l2sq = float(np.sum(w * np.sum(e0 * e0, axis=1)))
    semi = float(np.sum(w * np.sum(e1 * e1, axis=1)))
    return float(np.sqrt(l2sq)), float(np.sqrt(l2sq + semi))


def interpolate(param: Callable, J: int, time: float = 0.0) -> DiscreteCurve:
    """Nodal interpolant of a closed parameterisation ``param(rho) -> (n, 2)``."""
    mesh = PeriodicMesh(J)
    return DiscreteCurve(np.asarray(param(mesh.nodes), dtype=float), time)


def equidistribute(param: Callable, J: int, fine: int = 20000, time: float = 0.0) -> DiscreteCurve:
    """Sample ``J`` points equally spaced in arclength along ``param``."""
    rho = np.arange(fine + 1) / fine
    pts = np.asarray(param(rho), dtype=float)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    target = np.arange(J) / J * s[-1]
    x = np.interp(target, s, pts[:, 0])
    y = np.interp(target, s, pts[:, 1])
    return DiscreteCurve(np.column_stack([x, y]), time)


def polygon_curve(vertices: Sequence, J: int, time: float = 0.0) -> DiscreteCurve:
    """Closed polygon through ``vertices`` resampled with ``J`` nodes equally spaced in arclength."""
    V = np.asarray(vertices, dtype=float)
    closed = np.vstack([V, V[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    target = np.arange(J) / J * s[-1]
    x = np.interp(target, s, closed[:, 0])
    y = np.interp(target, s, closed[:, 1])
    return DiscreteCurve(np.column_stack([x, y]), time)


def write_curve_csv(curve, path) -> Path:
    """Write ``rho,x1,x2`` rows, one per node."""
    X = _positions(curve)
    J = X.shape[0]
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rho", "x1", "x2"])
        for j in range(J):
            w.writerow([repr(j / J), repr(float(X[j, 0])), repr(float(X[j, 1]))])
    return path


def read_curve_csv(path, time: float = 0.0) -> DiscreteCurve:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    X = np.array([[float(r["x1"]), float(r["x2"])] for r in rows])
    return DiscreteCurve(X, time)


def write_svg(curves, path, viewbox=None, size: int = 600, stroke: float | None = None) -> Path:
    """Draw one or more closed curves as SVG polylines.

    ``viewbox`` is ``(xmin, ymin, width, height)`` in curve coordinates; when
    omitted it is fitted to all curves with a 5% margin. The y axis points up.
    """
    if isinstance(curves, DiscreteCurve) or np.ndim(curves) == 2:
        curves = [curves]
    arrays = [_positions(c) for c in curves]
    if viewbox is None:
        allpts = np.vstack(arrays)
        lo, hi = allpts.min(axis=0), allpts.max(axis=0)
        span = max(float(np.max(hi - lo)), 1e-12)
        pad = 0.05 * span
        viewbox = (lo[0] - pad, lo[1] - pad, hi[0] - lo[0] + 2 * pad, hi[1] - lo[1] + 2 * pad)
    x0, y0, w, hgt = (float(v) for v in viewbox)
    if stroke is None:
        stroke = 0.004 * max(w, hgt)
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" '
        f'height="{int(round(size * hgt / w))}" viewBox="{x0} {-(y0 + hgt)} {w} {hgt}">',
        f'<g transform="scale(1,-1)" fill="none" stroke="black" stroke-width="{stroke}">',
    ]
    for X in arrays:
        pts = " ".join(f"{p[0]:.8g},{p[1]:.8g}" for p in X)
        lines.append(f'<polygon points="{pts}"/>')
    lines += ["</g>", "</svg>"]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path
