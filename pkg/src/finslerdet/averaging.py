"""Averages over the indicatrix (or the round sphere) of a tangent/cotangent space.

Directions ``u`` on the Euclidean unit sphere parametrize the indicatrix as
``y = u / F(x, u)``. Two measures are available:

* ``angular``  -- the pulled-back Euclidean angular measure (default);
* ``g_volume`` -- the volume induced on the indicatrix by the fundamental
  tensor, ``sqrt(det g(u)) F(u)^-n`` times the angular measure.

Monte Carlo draws come in fixed-size chunks, each with its own generator
derived from ``(seed, chunk index)``; results therefore do not depend on how
chunks are scheduled across workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np
from scipy.special import roots_jacobi

from .errors import FinslerError, StrongConvexityError
from .fields import RandersField
from .randers import fundamental_from_ab, norm_from_ab

CHUNK = 4096
MAX_QUADRATURE_DIM = 4


@dataclass(frozen=True)
class AveragingScheme:
    domain: str = "indicatrix"          # indicatrix | sphere
    method: str = "product_quadrature"  # monte_carlo | product_quadrature
    sample_count: int = 4096
    seed: int = 0
    weight: Optional[Callable] = None   # psi(x, y) >= 0, vectorized over y rows
    measure: str = "angular"            # angular | g_volume
    workers: int = 1

    def __post_init__(self):
        if self.sample_count < 1:
            raise FinslerError("sample_count must be at least 1")
        if self.domain not in ("indicatrix", "sphere"):
            raise FinslerError(f"unknown averaging domain {self.domain!r}")
        if self.method not in ("monte_carlo", "product_quadrature"):
            raise FinslerError(f"unknown averaging method {self.method!r}")
        if self.measure not in ("angular", "g_volume"):
            raise FinslerError(f"unknown measure {self.measure!r}")

    def resolved_method(self, n: int) -> str:
        if self.method == "product_quadrature" and n > MAX_QUADRATURE_DIM:
            return "monte_carlo"
        return self.method


@dataclass(frozen=True)
class AveragedMetric:
    x: np.ndarray
    h: np.ndarray
    stderr: np.ndarray
    method: str

    def to_dict(self) -> dict:
        return {"x": self.x.tolist(), "h": self.h.tolist(), "stderr": self.stderr.tolist(),
                "method": self.method}


@dataclass(frozen=True)
class AveragedValue:
    value: float
    stderr: float
    bound: float
    sampled_max: float
    method: str

    @property
    def certified(self) -> bool:
        return abs(self.value) <= self.bound

    def to_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "bound": self.bound,
                "sampled_max": self.sampled_max, "certified": self.certified,
                "method": self.method}


@dataclass(frozen=True)
class HamiltonianDecomposition:
    mean: float
    stderr: float
    fluctuation: Callable = dc_field(repr=False)
    fluctuation_average: float = 0.0
    fluctuation_stderr: float = 0.0


# ---- direction sets ---------------------------------------------------

def _sphere_quadrature(n: int, count: int):
    """Tensor-product rule on S^{n-1}: trapezoid in the azimuth, Gauss-Jacobi in
    each polar angle. Returns unit vectors (m, n) and weights summing to 1."""
    if n == 1:
        return np.array([[1.0], [-1.0]]), np.array([0.5, 0.5])
    per_axis = max(2, int(round(count ** (1.0 / (n - 1)))))
    n_az = count if n == 2 else per_axis
    phi = 2 * np.pi * np.arange(n_az) / n_az
    # hyperspherical coordinates: u = (cos t1, sin t1 cos t2, ..., sin t1..sin t_{n-2} cos phi, ... sin phi)
    polar_nodes = []
    polar_weights = []
    for k in range(n - 2):
        m = n - 2 - k  # measure sin^m(t) dt = (1 - c^2)^((m-1)/2) dc
        c, w = roots_jacobi(per_axis, (m - 1) / 2, (m - 1) / 2)
        polar_nodes.append(c)
        polar_weights.append(w)
    grids = np.meshgrid(*polar_nodes, phi, indexing="ij")
    wgrids = np.meshgrid(*polar_weights, np.full(n_az, 2 * np.pi / n_az), indexing="ij")
    cos_t = [g.ravel() for g in grids[:-1]]
    ph = grids[-1].ravel()
    w = np.prod([g.ravel() for g in wgrids], axis=0)
    U = np.empty((ph.size, n))
    s = np.ones(ph.size)
    for k, c in enumerate(cos_t):
        U[:, k] = s * c
        s = s * np.sqrt(np.clip(1 - c * c, 0.0, None))
    U[:, n - 2] = s * np.cos(ph)
    U[:, n - 1] = s * np.sin(ph)
    return U, w / w.sum()


def _mc_chunk(n: int, seed: int, index: int, size: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
    U = rng.standard_normal((size, n))
    return U / np.linalg.norm(U, axis=1, keepdims=True)


def _mc_chunks(n: int, count: int, seed: int):
    sizes = [CHUNK] * (count // CHUNK) + ([count % CHUNK] if count % CHUNK else [])
    return [(k, s) for k, s in enumerate(sizes)]


# ---- core weighted average -------------------------------------------

def _evaluate(a, b, x, U, scheme: AveragingScheme, integrand: Callable):
    """Return per-direction (integrand values, combined weights)."""
    n = U.shape[1]
    if scheme.domain == "indicatrix":
        F = norm_from_ab(a, b, U)
        if not np.all(F > 0):
            raise FinslerError("F(x, u) <= 0 for some direction: invalid structure at x")
        Y = U / F[:, None]
        if scheme.measure == "g_volume":
            mu = np.sqrt(np.linalg.det(fundamental_from_ab(a, b, U))) * F ** (-n)
        else:
            mu = np.ones(len(U))
    else:
        Y = U
        if scheme.measure == "g_volume":
            mu = np.sqrt(np.linalg.det(fundamental_from_ab(a, b, U)))
        else:
            mu = np.ones(len(U))
    psi = np.ones(len(U)) if scheme.weight is None else np.asarray(scheme.weight(x, Y), dtype=float)
    psi = np.broadcast_to(psi, (len(U),))
    if np.any(psi < 0):
        raise FinslerError("weight function is negative on the integration domain")
    return integrand(Y), psi * mu


def _average(field: RandersField, x, scheme: AveragingScheme, integrand: Callable,
             a=None, b=None):
    """Normalized weighted average of ``integrand(Y)`` (shape (m, ...)) with a
    delta-method standard error for Monte Carlo."""
    x = np.asarray(x, dtype=float)
    a = field.a(x) if a is None else a
    b = field.beta(x) if b is None else b
    n = a.shape[0]
    if np.linalg.eigvalsh(a)[0] <= 0:
        raise StrongConvexityError(f"metric not positive definite at x={x.tolist()}")
    method = scheme.resolved_method(n)
    if method == "product_quadrature":
        U, w = _sphere_quadrature(n, scheme.sample_count)
        vals, z = _evaluate(a, b, x, U, scheme, integrand)
        zw = z * w
        total = zw.sum()
        if not total > 0:
            raise FinslerError("weight integrates to zero on the domain")
        mean = np.tensordot(zw, vals, axes=(0, 0)) / total
        return mean, np.zeros_like(mean), method, vals

    chunks = _mc_chunks(n, scheme.sample_count, scheme.seed)

    def run(chunk):
        k, size = chunk
        U = _mc_chunk(n, scheme.seed, k, size)
        vals, z = _evaluate(a, b, x, U, scheme, integrand)
        return (z.sum(), np.tensordot(z, vals, axes=(0, 0)),
                np.tensordot(z * z, vals, axes=(0, 0)),
                np.tensordot(z * z, vals * vals, axes=(0, 0)), (z * z).sum(), len(z), vals)

    if scheme.workers > 1:
        with ThreadPoolExecutor(scheme.workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    # ordered reduction keeps results independent of the worker count
    sz = sum(p[0] for p in parts)
    szv = sum(p[1] for p in parts)
    sz2v = sum(p[2] for p in parts)
    sz2v2 = sum(p[3] for p in parts)
    sz2 = sum(p[4] for p in parts)
    m = sum(p[5] for p in parts)
    if not sz > 0:
        raise FinslerError("weight integrates to zero on the domain")
    mean = szv / sz
    # Var of ratio estimator: sum z^2 (v - mean)^2 / (sum z)^2 * m / (m - 1)
    ss = sz2v2 - 2 * mean * sz2v + mean * mean * sz2
    var = np.clip(ss, 0.0, None) / (sz * sz) * (m / max(m - 1, 1))
    vals = np.concatenate([p[6] for p in parts])
    return mean, np.sqrt(var), method, vals


# ---- public operations -------------------------------------------------

def indicatrix_point(field: RandersField, x, u) -> np.ndarray:
    """Radial projection ``u / F(x, u)`` onto ``{F(x, .) = 1}``."""
    u = np.asarray(u, dtype=float)
    if not np.any(u):
        raise FinslerError("direction must be nonzero")
    F = float(norm_from_ab(field.a(x), field.beta(x), u))
    if F <= 0:
        raise FinslerError(f"F(x, u) = {F} <= 0: invalid structure at x")
    return u / F


def average_metric(field: RandersField, x, scheme: AveragingScheme | None = None) -> AveragedMetric:
    """``h_ij(x) = <g_ij(x, .)>``: a Riemannian metric from the Finsler data at ``x``."""
    scheme = scheme or AveragingScheme()
    a, b = field.a(x), field.beta(x)
    h, se, method, _ = _average(field, x, scheme, lambda Y: fundamental_from_ab(a, b, Y), a, b)
    h = 0.5 * (h + h.T)
    if np.linalg.eigvalsh(h)[0] <= 0:
        raise StrongConvexityError(f"averaged metric not positive definite at x={np.asarray(x).tolist()}")
    return AveragedMetric(np.asarray(x, dtype=float), h, se, method)


def hamiltonian_sup(field: RandersField, x) -> float:
    """``sup |2 beta.p|`` over the momentum indicatrix; equals ``2 b / (1 - b)``
    for ``b = ||beta||_{a^-1}`` (attained at ``p`` anti-parallel to beta)."""
    bnorm = field.beta_norm(x)
    if bnorm >= 1:
        raise FinslerError(f"Randers condition fails at x (||beta|| = {bnorm})")
    return 2.0 * bnorm / (1.0 - bnorm)


def _momentum_structure(field: RandersField, x):
    a = field.a(x)
    a_inv = np.linalg.inv(a)
    a_inv = 0.5 * (a_inv + a_inv.T)
    return a_inv, a_inv @ field.beta(x)


def average_hamiltonian(field: RandersField, x, scheme: AveragingScheme | None = None) -> AveragedValue:
    """Average of ``H(x, p) = 2 beta^i p_i`` over ``{F*(x, p) = 1}`` weighted by psi.

    ``bound`` is the exact supremum of ``|H|`` on that set, which bounds the
    normalized average; ``sampled_max`` is the largest ``|H|`` met.
    """
    scheme = scheme or AveragingScheme()
    a_star, b_star = _momentum_structure(field, x)
    value, se, method, vals = _average(field, x, scheme, lambda P: 2.0 * (P @ b_star),
                                       a_star, b_star)
    return AveragedValue(float(value), float(se), hamiltonian_sup(field, x),
                         float(np.max(np.abs(vals))), method)


def decompose_hamiltonian(field: RandersField, x, scheme: AveragingScheme | None = None
                          ) -> HamiltonianDecomposition:
    """Split ``H = <H>_x + dH``; ``dH`` averages to zero over the same scheme."""
    scheme = scheme or AveragingScheme()
    avg = average_hamiltonian(field, x, scheme)
    a_star, b_star = _momentum_structure(field, x)
    mean = avg.value

    def fluctuation(p, b_star=b_star, mean=mean):
        return 2.0 * (np.asarray(p, dtype=float) @ b_star) - mean

    fl, fl_se, _, _ = _average(field, x, scheme, fluctuation, a_star, b_star)
    return HamiltonianDecomposition(mean, avg.stderr, fluctuation, float(fl), float(fl_se))
