"""Quadrature rules on reference simplices.

All rules have strictly positive weights and points strictly inside the
reference element; weights sum to the reference measure (1, 1/2, 1/6 for
segment, triangle, tetrahedron).  Segment rules are Gauss-Legendre.
Triangle rules up to exactness degree 8 use the compact symmetric tables of
Dunavant; tetrahedra (and triangles beyond the tables) use conical-product
Gauss-Jacobi rules, which are exact for any requested total degree at the
cost of more points.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

from .errors import ParameterError


@dataclass(frozen=True)
class QuadratureRule:
    """Points (in reference coordinates) and weights of a fixed rule."""

    dim: int
    exactness: int
    points: np.ndarray
    weights: np.ndarray

    @property
    def num_points(self) -> int:
        return self.weights.shape[0]


def _gauss_01(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1.0) / 2.0, w / 2.0


def _gauss_jacobi_01(n: int, alpha: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights for integral_0^1 (1-s)^alpha f(s) ds."""
    if alpha == 0:
        return _gauss_01(n)
    x, w = roots_jacobi(n, alpha, 0.0)
    return (x + 1.0) / 2.0, w / 2.0 ** (alpha + 1)


def _conical(dim: int, exactness: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed-coordinate product rule on the unit simplex."""
    n = max(1, (exactness + 2) // 2)  # 2n-1 >= exactness
    axes = [_gauss_jacobi_01(n, alpha) for alpha in range(dim - 1, -1, -1)]
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    flat = [g.ravel() for g in grids]
    weights = np.ones_like(flat[0])
    for wg in wgrids:
        weights = weights * wg.ravel()
    pts = np.empty((flat[0].size, dim))
    # x_k = t_k * prod_{j<k} (1 - t_j); the Jacobi weights absorb the
    # Jacobian factors of the collapse exactly
    scale = np.ones_like(flat[0])
    for k in range(dim):
        pts[:, k] = flat[k] * scale
        scale = scale * (1.0 - flat[k])
    return pts, weights


def _orbit_points(orbit: tuple) -> tuple[np.ndarray, float]:
    """Expand a symmetric triangle orbit into barycentric rows."""
    kind, w = orbit[0], orbit[1]
    if kind == "S3":
        rows = [(1 / 3, 1 / 3, 1 / 3)]
    elif kind == "S21":
        a = orbit[2]
        b = 1.0 - 2.0 * a
        rows = [(b, a, a), (a, b, a), (a, a, b)]
    elif kind == "S111":
        a, b = orbit[2], orbit[3]
        c = 1.0 - a - b
        rows = [(c, a, b), (a, c, b), (a, b, c), (c, b, a), (b, c, a), (b, a, c)]
    else:  # pragma: no cover - table integrity
        raise ParameterError(f"unknown orbit kind {kind}")
    return np.array(rows), w


# Symmetric triangle rules (Dunavant); weights are relative to unit total
# and scaled by the reference area 1/2 on expansion.
_TRIANGLE_TABLES = {
    2: [("S21", 1 / 3, 1 / 6)],
    4: [
        ("S21", 0.223381589678011, 0.445948490915965),
        ("S21", 0.109951743655322, 0.091576213509771),
    ],
    6: [
        ("S21", 0.050844906370207, 0.063089014491502),
        ("S21", 0.116786275726379, 0.249286745170910),
        ("S111", 0.082851075618374, 0.310352451033785, 0.053145049844816),
    ],
    8: [
        ("S3", 0.144315607677787),
        ("S21", 0.095091634267285, 0.459292588292723),
        ("S21", 0.103217370534718, 0.170569307751760),
        ("S21", 0.032458497623198, 0.050547228317031),
        ("S111", 0.027230314174435, 0.263112829634638, 0.008394777409958),
    ],
}


@lru_cache(maxsize=None)
def simplex_rule(dim: int, exactness: int) -> QuadratureRule:
    """Rule on the unit simplex exact for total polynomial degree ``exactness``."""
    if exactness < 0:
        raise ParameterError(f"negative exactness {exactness}")
    if dim == 1:
        n = max(1, (exactness + 2) // 2)
        x, w = _gauss_01(n)
        return QuadratureRule(1, 2 * n - 1, x[:, None], w)
    if dim == 2:
        table_deg = min((d for d in _TRIANGLE_TABLES if d >= exactness), default=None)
        if table_deg is not None:
            pts, wts = [], []
            for orbit in _TRIANGLE_TABLES[table_deg]:
                rows, w = _orbit_points(orbit)
                pts.append(rows[:, 1:])
                wts.extend([w * 0.5] * rows.shape[0])
            return QuadratureRule(2, table_deg, np.vstack(pts), np.array(wts))
        p, w = _conical(2, exactness)
        return QuadratureRule(2, exactness, p, w)
    if dim == 3:
        p, w = _conical(3, exactness)
        return QuadratureRule(3, exactness, p, w)
    raise ParameterError(f"unsupported dimension {dim}")
