"""Formal Christoffel symbols, nonlinear connection, Chern and Cartan connections.

Index conventions: ``gamma[i, j, k]`` is the upper index ``i`` with lower
``j, k``; ``dg[i, j, k]`` stores ``dg_ij / dx^k``. x-derivatives of the
fundamental tensor are central differences of the closed form with step
``X_STEP`` per axis, so tabulated fields are differentiated through their
interpolant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StrongConvexityError
from .fields import RandersField
from .randers import X_STEP, _nonzero, _vec, dgdy_from_ab, fundamental_from_ab, norm_from_ab

ANALYTIC_TOL = 1e-6
TABULATED_TOL = 1e-3


def _g(field: RandersField, x, y) -> np.ndarray:
    return fundamental_from_ab(field.a(x), field.beta(x), y)


def _dgdx(field: RandersField, x, y) -> np.ndarray:
    n = field.dim
    out = np.empty((n, n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = X_STEP
        out[:, :, k] = (_g(field, x + e, y) - _g(field, x - e, y)) / (2 * X_STEP)
    return out


def _cyclic(g_inv: np.ndarray, d: np.ndarray) -> np.ndarray:
    """``1/2 g^is (d_sjk - d_jks + d_skj)`` with ``d[i, j, k] = D_k g_ij``."""
    lowered = 0.5 * (d - np.einsum("jks->sjk", d) + np.einsum("skj->sjk", d))
    return np.einsum("is,sjk->ijk", g_inv, lowered)


def _inverse(g: np.ndarray, x, y) -> np.ndarray:
    if np.linalg.eigvalsh(g)[0] <= 0:
        raise StrongConvexityError(
            f"fundamental tensor singular or indefinite at x={np.asarray(x).tolist()}, y={np.asarray(y).tolist()}"
        )
    return np.linalg.inv(g)


def christoffel(field: RandersField, x, y) -> np.ndarray:
    """``gamma^i_jk = 1/2 g^is (d_k g_sj - d_s g_jk + d_j g_sk)`` at ``(x, y)``."""
    x = _vec(x, field.dim, "x")
    y = _vec(y, field.dim, "y")
    _nonzero(y)
    g_inv = _inverse(_g(field, x, y), x, y)
    return _cyclic(g_inv, _dgdx(field, x, y))


def _nonlinear(field, x, y, g_inv, gamma) -> np.ndarray:
    a, b = field.a(x), field.beta(x)
    F = float(norm_from_ab(a, b, y))
    A_up = np.einsum("il,ljk->ijk", g_inv, 0.5 * F * dgdy_from_ab(a, b, y))
    G = np.einsum("krs,r,s->k", gamma, y, y)
    return np.einsum("ijk,k->ij", gamma, y) - np.einsum("ijk,k->ij", A_up, G) / F


def nonlinear_connection(field: RandersField, x, y) -> np.ndarray:
    """``N^i_j = gamma^i_jk y^k - A^i_jk gamma^k_rs y^r y^s / F``."""
    x = _vec(x, field.dim, "x")
    y = _vec(y, field.dim, "y")
    _nonzero(y)
    g_inv = _inverse(_g(field, x, y), x, y)
    gamma = _cyclic(g_inv, _dgdx(field, x, y))
    return _nonlinear(field, x, y, g_inv, gamma)


@dataclass(frozen=True)
class ConnectionBundle:
    """Connection data at one point of the slit tangent bundle.

    ``chern`` holds the horizontal coefficients ``Gamma^i_jk`` (the Chern
    connection forms are ``omega^i_j = Gamma^i_jk dx^k``). ``cartan_v`` holds
    the Cartan addition ``A^k_ij`` as coefficients of the normalized coframe
    ``delta y^j / F``, so the Cartan forms are
    ``omega^k_i + cartan_v[k, i, j] delta y^j / F``.
    """

    x: np.ndarray
    y: np.ndarray
    F: float
    gamma: np.ndarray
    N: np.ndarray
    chern: np.ndarray
    cartan_v: np.ndarray
    torsion_residual: float
    compatibility_residual: float
    tolerance: float
    kind: str = "chern"

    @property
    def ok(self) -> bool:
        return self.torsion_residual <= self.tolerance and self.compatibility_residual <= self.tolerance

    @property
    def vertical_per_dy(self) -> np.ndarray:
        """Cartan addition against ``delta y^j`` itself: ``A^k_ij / F``."""
        return self.cartan_v / self.F

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "x": self.x.tolist(),
            "y": self.y.tolist(),
            "F": self.F,
            "gamma": self.gamma.tolist(),
            "N": self.N.tolist(),
            "chern": self.chern.tolist(),
            "cartan_v": self.cartan_v.tolist(),
            "torsion_residual": self.torsion_residual,
            "compatibility_residual": self.compatibility_residual,
            "tolerance": self.tolerance,
            "ok": self.ok,
        }


def _structure_residuals(field, x, y, N, Gamma, A_lower, F, directions: int, seed: int):
    """Contract the torsion-free and almost-compatibility equations with random
    tangent vectors of the slit tangent bundle.

    A tangent vector is ``X^k delta/delta x^k + Y^k d/dy^k``. ``dg_ij(X)`` is
    taken by differentiating ``g`` along the curve
    ``s -> (x + s X, y + s (Y - N X))`` rather than reusing the horizontal
    derivatives that produced ``Gamma``.
    """
    n = field.dim
    rng = np.random.default_rng(seed)
    g = _g(field, x, y)
    torsion = 0.0
    compat = 0.0
    hx = X_STEP
    for _ in range(directions):
        u, v = rng.standard_normal((2, n))
        T = np.einsum("ijk,j,k->i", Gamma, u, v) - np.einsum("ijk,j,k->i", Gamma, v, u)
        torsion = max(torsion, float(np.max(np.abs(T))))

        X, Y = rng.standard_normal((2, n))
        X /= np.linalg.norm(X)
        Y *= np.linalg.norm(y) / np.linalg.norm(Y)
        dy = Y - N @ X
        dg = (_g(field, x + hx * X, y + hx * dy) - _g(field, x - hx * X, y - hx * dy)) / (2 * hx)
        omega = np.einsum("kil,l->ki", Gamma, X)
        lhs = dg - g.T @ omega - (g @ omega).T
        rhs = 2.0 * np.einsum("ijk,k->ij", A_lower, Y) / F
        compat = max(compat, float(np.max(np.abs(lhs - rhs))))
    return torsion, compat


def _is_tabulated(field: RandersField) -> bool:
    return any(s.split("=", 1)[-1].startswith("grid:") for s in field.sources)


def chern_connection(field: RandersField, x, y, tolerance: float | None = None,
                     directions: int = 20, seed: int = 0) -> ConnectionBundle:
    """Chern connection by the cyclic solve in horizontal derivatives
    ``delta_k g_ij = d_k g_ij - N^l_k dg_ij/dy^l``, with residuals of both
    structure equations evaluated independently.
    """
    x = _vec(x, field.dim, "x")
    y = _vec(y, field.dim, "y")
    _nonzero(y)
    if tolerance is None:
        tolerance = TABULATED_TOL if _is_tabulated(field) else ANALYTIC_TOL
    a, b = field.a(x), field.beta(x)
    F = float(norm_from_ab(a, b, y))
    g_inv = _inverse(_g(field, x, y), x, y)
    dgdx = _dgdx(field, x, y)
    gamma = _cyclic(g_inv, dgdx)
    N = _nonlinear(field, x, y, g_inv, gamma)
    dgdy = dgdy_from_ab(a, b, y)
    delta = dgdx - np.einsum("ijl,lk->ijk", dgdy, N)
    Gamma = _cyclic(g_inv, delta)
    A_lower = 0.5 * F * dgdy
    A_up = np.einsum("kl,lij->kij", g_inv, A_lower)
    torsion, compat = _structure_residuals(field, x, y, N, Gamma, A_lower, F, directions, seed)
    return ConnectionBundle(x, y, F, gamma, N, Gamma, A_up, torsion, compat, tolerance)


def cartan_connection(field: RandersField, x, y, tolerance: float | None = None,
                      directions: int = 20, seed: int = 0) -> ConnectionBundle:
    """Chern horizontal part plus the vertical Cartan-tensor addition."""
    bundle = chern_connection(field, x, y, tolerance, directions, seed)
    return ConnectionBundle(bundle.x, bundle.y, bundle.F, bundle.gamma, bundle.N, bundle.chern,
                            bundle.cartan_v, bundle.torsion_residual,
                            bundle.compatibility_residual, bundle.tolerance, kind="cartan")


def connection_difference(cartan: ConnectionBundle, chern: ConnectionBundle):
    """(horizontal, vertical) coefficient differences Cartan minus Chern.

    The Chern connection has no vertical part, so the vertical difference is
    the Cartan addition itself.
    """
    vertical_chern = np.zeros_like(chern.cartan_v) if chern.kind == "chern" else chern.cartan_v
    vertical_cartan = cartan.cartan_v if cartan.kind == "cartan" else np.zeros_like(cartan.cartan_v)
    return cartan.chern - chern.chern, vertical_cartan - vertical_chern

