"""Pointwise Randers geometry: norm, fundamental and Cartan tensors, duality,
validation and composition of fields.

Closed forms, with ``alpha = sqrt(a(y, y))``, ``l = a y / alpha``,
``h = a - l l^T`` (the angular metric of ``a``), ``m = l + b`` and
``c = b - (beta(y) / alpha) l``::

    g_ij          = (F / alpha) h_ij + m_i m_j
    dg_ij / dy^k  = (h_ij c_k + h_ik c_j + h_jk c_i) / alpha
    A_ijk         = F / 2 * dg_ij / dy^k
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ConvergenceError,
    DimensionError,
    FinslerError,
    RandersConditionError,
    StrongConvexityError,
)
from .fields import Box, RandersField

# Central-difference steps shared by every numerical derivative in the package.
Y_STEP = 1e-4
X_STEP = 1e-4


def _vec(v, n: int, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != n:
        raise DimensionError(f"{name} has {v.size} components, field dimension is {n}")
    return v


def _nonzero(y: np.ndarray, name: str = "y") -> None:
    if not np.any(y):
        raise FinslerError(f"{name} must be nonzero (F lives on the slit tangent bundle)")


# ---- array kernels (a, b fixed; y may be a batch) ---------------------

def norm_from_ab(a: np.ndarray, b: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``sqrt(a(y, y)) + b.y`` for ``y`` of shape (n,) or (m, n)."""
    alpha = np.sqrt(np.einsum("...i,ij,...j->...", y, a, y))
    return alpha + y @ b


def fundamental_from_ab(a: np.ndarray, b: np.ndarray, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    ay = y @ a
    alpha = np.sqrt(np.einsum("...i,...i->...", ay, y))
    F = alpha + y @ b
    l = ay / alpha[..., None]
    h = a - l[..., :, None] * l[..., None, :]
    m = l + b
    return (F / alpha)[..., None, None] * h + m[..., :, None] * m[..., None, :]


def dgdy_from_ab(a: np.ndarray, b: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``dg_ij/dy^k`` as an array indexed [..., i, j, k]."""
    y = np.asarray(y, dtype=float)
    ay = y @ a
    alpha = np.sqrt(np.einsum("...i,...i->...", ay, y))
    beta_y = y @ b
    l = ay / alpha[..., None]
    h = a - l[..., :, None] * l[..., None, :]
    c = b - (beta_y / alpha)[..., None] * l
    t = (np.einsum("...ij,...k->...ijk", h, c)
         + np.einsum("...ik,...j->...ijk", h, c)
         + np.einsum("...jk,...i->...ijk", h, c))
    return t / alpha[..., None, None, None]


def cartan_from_ab(a: np.ndarray, b: np.ndarray, y: np.ndarray) -> np.ndarray:
    F = norm_from_ab(a, b, y)
    return 0.5 * np.asarray(F)[..., None, None, None] * dgdy_from_ab(a, b, y)


# ---- validation ---------------------------------------------------------

@dataclass(frozen=True)
class ValidationReport:
    points: np.ndarray
    min_eigenvalues: np.ndarray
    norms: np.ndarray
    margin: float
    passed: bool

    @property
    def max_norm(self) -> float:
        return float(self.norms.max())

    @property
    def min_eigenvalue(self) -> float:
        return float(self.min_eigenvalues.min())

    @property
    def worst_point(self) -> np.ndarray:
        return self.points[int(np.argmax(self.norms))]

    def to_dict(self) -> dict:
        return {
            "pass": self.passed,
            "margin": self.margin,
            "max_norm": self.max_norm,
            "min_eigenvalue": self.min_eigenvalue,
            "samples": [
                {"x": p.tolist(), "min_eigenvalue": float(e), "norm": float(nm)}
                for p, e, nm in zip(self.points, self.min_eigenvalues, self.norms)
            ],
        }


def validate_randers(field: RandersField, sample_count: int = 100, seed: int = 0,
                     points: np.ndarray | None = None) -> ValidationReport:
    """Check positive definiteness of ``a`` and ``||beta||_{a^-1} <= 1 - margin``.

    Points are drawn uniformly from the field's domain; explicit ``points``
    are appended after the random ones.
    """
    if sample_count < 1:
        raise FinslerError("sample_count must be at least 1")
    xs = field.domain.sample(sample_count, np.random.default_rng(seed))
    if points is not None:
        xs = np.vstack([xs, np.asarray(points, dtype=float).reshape(-1, field.dim)])
    eigs = np.empty(len(xs))
    norms = np.empty(len(xs))
    for k, x in enumerate(xs):
        a = field.a(x)
        eigs[k] = np.linalg.eigvalsh(a)[0]
        if eigs[k] > 0:
            b = field.beta(x)
            norms[k] = np.sqrt(max(b @ np.linalg.solve(a, b), 0.0))
        else:
            norms[k] = np.inf
    passed = bool(np.all(eigs > 0) and np.all(norms <= 1.0 - field.margin))
    return ValidationReport(xs, eigs, norms, field.margin, passed)


def require_randers(field: RandersField, sample_count: int = 100, seed: int = 0) -> ValidationReport:
    report = validate_randers(field, sample_count, seed)
    if not report.passed:
        if report.min_eigenvalue <= 0:
            raise StrongConvexityError(
                f"metric not positive definite (min eigenvalue {report.min_eigenvalue:.6g})"
            )
        raise RandersConditionError(
            f"one-form norm {report.max_norm:.6g} exceeds 1 - margin at x={report.worst_point.tolist()}",
            norm=report.max_norm, x=report.worst_point,
        )
    return report


# ---- pointwise quantities ------------------------------------------------

def finsler_norm(field: RandersField, x, y) -> float:
    y = _vec(y, field.dim, "y")
    _nonzero(y)
    return float(norm_from_ab(field.a(x), field.beta(x), y))


def momentum_norm(field: RandersField, x, p) -> float:
    """Momentum-side Randers norm ``sqrt(a^ij p_i p_j) + beta^i p_i``.

    Same ``||beta||`` bound as the velocity side; with ``a = identity`` the two
    coincide.
    """
    p = _vec(p, field.dim, "p")
    a = field.a(x)
    a_inv = np.linalg.inv(a)
    return float(np.sqrt(p @ a_inv @ p) + p @ (a_inv @ field.beta(x)))


def _numeric_hessian_F2(a, b, y, step) -> np.ndarray:
    n = y.size
    e = np.eye(n) * step

    def f(v):
        return float(norm_from_ab(a, b, v)) ** 2

    H = np.empty((n, n))
    f0 = f(y)
    for i in range(n):
        H[i, i] = (f(y + 2 * e[i]) - 2 * f0 + f(y - 2 * e[i])) / (4 * step * step)
        for j in range(i + 1, n):
            H[i, j] = H[j, i] = (
                f(y + e[i] + e[j]) - f(y + e[i] - e[j]) - f(y - e[i] + e[j]) + f(y - e[i] - e[j])
            ) / (4 * step * step)
    return H


def fundamental_tensor(field: RandersField, x, y, mode: str = "closed_form") -> np.ndarray:
    """``g_ij = 1/2 d^2 F^2 / dy^i dy^j``; raises if the result is not SPD."""
    y = _vec(y, field.dim, "y")
    _nonzero(y)
    a, b = field.a(x), field.beta(x)
    if mode == "closed_form":
        g = fundamental_from_ab(a, b, y)
    elif mode == "numeric_hessian":
        g = 0.5 * _numeric_hessian_F2(a, b, y, Y_STEP * max(1.0, float(np.linalg.norm(y))))
    else:
        raise FinslerError(f"unknown mode {mode!r}")
    g = 0.5 * (g + g.T)
    if np.linalg.eigvalsh(g)[0] <= 0:
        raise StrongConvexityError(
            f"fundamental tensor not positive definite at x={np.asarray(x).tolist()}, y={y.tolist()}"
        )
    return g


def cartan_tensor(field: RandersField, x, y) -> np.ndarray:
    """``A_ijk = F/2 dg_ij/dy^k`` from the closed-form y-derivative of ``g``."""
    y = _vec(y, field.dim, "y")
    _nonzero(y)
    return cartan_from_ab(field.a(x), field.beta(x), y)


@dataclass(frozen=True)
class DualResult:
    y: np.ndarray
    F_star: float
    iterations: int
    residual: float


def legendre_dual(field: RandersField, x, p, damping: float = 0.5, max_iter: int = 200,
                  tol: float = 1e-10) -> DualResult:
    """Solve ``g_{y}(y, .) = p`` for ``y`` by damped fixed-point iteration.

    Starts from the ``a``-index raise of ``p``. ``F_star = F(x, y_p)`` is the
    dual norm ``max_{F(x, y) = 1} <p, y>``.
    """
    p = _vec(p, field.dim, "p")
    _nonzero(p, "p")
    a, b = field.a(x), field.beta(x)
    if np.sqrt(b @ np.linalg.solve(a, b)) >= 1.0:
        raise RandersConditionError("Randers condition fails at x; no dual", x=np.asarray(x))
    pn = float(np.linalg.norm(p))
    y = np.linalg.solve(a, p)
    residual = np.inf
    for it in range(1, max_iter + 1):
        g = fundamental_from_ab(a, b, y)
        residual = float(np.linalg.norm(g @ y - p)) / pn
        if residual <= tol:
            return DualResult(y, float(norm_from_ab(a, b, y)), it - 1, residual)
        y = (1.0 - damping) * y + damping * np.linalg.solve(g, p)
    g = fundamental_from_ab(a, b, y)
    residual = float(np.linalg.norm(g @ y - p)) / pn
    if residual <= tol:
        return DualResult(y, float(norm_from_ab(a, b, y)), max_iter, residual)
    raise ConvergenceError(
        f"Legendre fixed point did not converge in {max_iter} iterations (residual {residual:.3g})",
        residual=residual,
    )


# ---- construction from dynamics and composition -------------------------

def randers_from_deterministic(f: Callable | Sequence, domain: Box, sample_count: int = 256,
                               seed: int = 0, margin: float = 1e-6) -> RandersField:
    """Randers field reproducing ``H = f.p``: ``a = identity``, ``beta = f / 2``.

    ``f`` is either a callable ``x -> (n,)`` or a sequence of per-component
    specs (expressions, numbers, callables). Raises if ``sup ||f/2|| >= 1``
    on the sampled domain.
    """
    n = domain.dim
    if callable(f):
        def beta_fn(x, f=f):
            return 0.5 * np.asarray(f(x), dtype=float)

        def a_fn(x):
            return np.eye(n)

        field = RandersField.from_functions(a_fn, beta_fn, n, domain, margin, label="deterministic")
    else:
        if len(f) != n:
            raise DimensionError(f"f has {len(f)} components, domain dimension is {n}")
        tmp = RandersField.from_expressions(np.eye(n).tolist(), list(f), domain, margin)
        comps = tmp._beta_fn

        def beta_fn(x, comps=comps):
            return 0.5 * comps(x)

        field = RandersField(n, tmp.a_components, tuple(f), domain, margin, "deterministic",
                             tmp._a_fn, beta_fn, tmp.sources + ("scale=0.5",))
    report = validate_randers(field, sample_count, seed)
    if not report.passed:
        raise RandersConditionError(
            f"sup ||f/2|| = {report.max_norm:.6g} >= 1: not a Randers structure",
            norm=report.max_norm, x=report.worst_point,
        )
    return field


def _block_diag(m1: np.ndarray, m2: np.ndarray) -> np.ndarray:
    n1, n2 = m1.shape[0], m2.shape[0]
    out = np.zeros((n1 + n2, n1 + n2))
    out[:n1, :n1] = m1
    out[n1:, n1:] = m2
    return out


def compose_direct_sum(f1: RandersField, f2: RandersField) -> RandersField:
    """``a = a1 (+) a2``, ``beta = beta1 (+) beta2`` on the product domain."""
    n1 = f1.dim

    def a_fn(x):
        return _block_diag(f1.a(x[:n1]), f2.a(x[n1:]))

    def beta_fn(x):
        return np.concatenate([f1.beta(x[:n1]), f2.beta(x[n1:])])

    sources = tuple("1:" + s for s in f1.sources) + tuple("2:" + s for s in f2.sources)
    return RandersField(n1 + f2.dim, (), (), f1.domain.product(f2.domain),
                        max(f1.margin, f2.margin), "direct_sum", a_fn, beta_fn,
                        sources + ("compose=direct_sum",))


def compose_interacting(f1: RandersField, f2: RandersField, sample_count: int = 64,
                        seed: int = 0, metric_atol: float = 1e-10) -> RandersField:
    """Composite of two identical-metric systems with mixed one-form terms.

    Each block of the composite one-form is ``(beta1(x1) + beta2(x2)) / 2``,
    so momenta of one factor couple to the one-form of the other. Rejected if
    the metrics differ on the shared domain or the composite violates the
    Randers bound, or if either input does.
    """
    if f1.dim != f2.dim:
        raise DimensionError(f"interacting composition needs equal dimensions, got {f1.dim} and {f2.dim}")
    n = f1.dim
    for f in (f1, f2):
        require_randers(f, sample_count, seed)
    shared = f1.domain.intersect(f2.domain)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for x in shared.sample(sample_count, rng):
        worst = max(worst, float(np.max(np.abs(f1.a(x) - f2.a(x)))))
    if worst > metric_atol:
        raise FinslerError(f"interacting composition needs a1 == a2; max difference {worst:.3g}")

    def a_fn(x):
        return _block_diag(f1.a(x[:n]), f2.a(x[n:]))

    def beta_fn(x):
        half = 0.5 * (f1.beta(x[:n]) + f2.beta(x[n:]))
        return np.concatenate([half, half])

    sources = tuple("1:" + s for s in f1.sources) + tuple("2:" + s for s in f2.sources)
    field = RandersField(2 * n, (), (), f1.domain.product(f2.domain),
                         max(f1.margin, f2.margin), "interacting", a_fn, beta_fn,
                         sources + ("compose=interacting",))
    report = validate_randers(field, sample_count, seed + 1)
    if not report.passed:
        raise RandersConditionError(
            f"composed one-form norm {report.max_norm:.6g} >= 1: composition is not Randers",
            norm=report.max_norm, x=report.worst_point,
        )
    return field


def velocity_jacobian(field: RandersField, x) -> np.ndarray:
    """``d(2 beta^i)/dx^j`` by central differences; equals ``d^2 H / dp_i dx^j``."""
    x = _vec(x, field.dim, "x")
    J = np.empty((field.dim, field.dim))
    for j in range(field.dim):
        e = np.zeros(field.dim)
        e[j] = X_STEP
        J[:, j] = (field.beta_sharp(x + e) - field.beta_sharp(x - e)) / X_STEP
    return J


def cross_coupling(field: RandersField, x, split: int) -> float:
    """Largest mixed derivative ``d^2 H / dp_i dx^j`` between the blocks [:split] and [split:]."""
    J = velocity_jacobian(field, x)
    return float(max(np.max(np.abs(J[:split, split:])), np.max(np.abs(J[split:, :split]))))
