"""Randers field descriptions: a Riemannian metric ``a(x)`` plus a one-form ``beta(x)``.

Fields are immutable. Components are either parsed expressions, constants,
plain callables, or tabulated regular grids interpolated multilinearly.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import ConfigError, DimensionError, FieldEvaluationError
from .expr import FieldExpression, variable_names


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``lo <= x <= hi``; periodic axes wrap with period ``hi - lo``."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    periodic: tuple[bool, ...] = ()

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        periodic = tuple(bool(p) for p in self.periodic) or (False,) * len(lo)
        if not (len(lo) == len(hi) == len(periodic)) or not lo:
            raise DimensionError("box bounds and periodic flags must have equal, nonzero length")
        if any(h <= l for l, h in zip(lo, hi)):
            raise ConfigError(f"empty box: lo={lo} hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "periodic", periodic)

    @classmethod
    def cube(cls, n: int, lo: float = -1.0, hi: float = 1.0, periodic: bool = False) -> "Box":
        return cls((lo,) * n, (hi,) * n, (periodic,) * n)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def lo_arr(self) -> np.ndarray:
        return np.array(self.lo)

    @property
    def hi_arr(self) -> np.ndarray:
        return np.array(self.hi)

    def wrap(self, x) -> np.ndarray:
        x = np.array(x, dtype=float)
        for k, per in enumerate(self.periodic):
            if per:
                width = self.hi[k] - self.lo[k]
                x[..., k] = self.lo[k] + np.mod(x[..., k] - self.lo[k], width)
        return x

    def contains(self, x, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        for k, per in enumerate(self.periodic):
            if per:
                continue
            if x[k] < self.lo[k] - tol or x[k] > self.hi[k] + tol:
                return False
        return True

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lo_arr, self.hi_arr, size=(count, self.dim))

    def intersect(self, other: "Box") -> "Box":
        if other.dim != self.dim:
            raise DimensionError(f"cannot intersect boxes of dimension {self.dim} and {other.dim}")
        lo = tuple(max(a, b) for a, b in zip(self.lo, other.lo))
        hi = tuple(min(a, b) for a, b in zip(self.hi, other.hi))
        return Box(lo, hi, tuple(p and q for p, q in zip(self.periodic, other.periodic)))

    def product(self, other: "Box") -> "Box":
        return Box(self.lo + other.lo, self.hi + other.hi, self.periodic + other.periodic)


class TabulatedComponent:
    """Scalar field on a regular grid, multilinear interpolation inside the grid.

    File format (plain text)::

        dim n
        shape k1 .. kn
        origin o1 .. on
        spacing h1 .. hn
        v0 v1 v2 ...        # row-major values, any whitespace layout
    """

    def __init__(self, values: np.ndarray, origin: Sequence[float], spacing: Sequence[float],
                 source: str = "<array>"):
        values = np.asarray(values, dtype=float)
        self.values = values
        self.origin = tuple(float(v) for v in origin)
        self.spacing = tuple(float(v) for v in spacing)
        self.source = source
        if len(self.origin) != values.ndim or len(self.spacing) != values.ndim:
            raise DimensionError("origin/spacing length must match grid dimension")
        if any(k < 2 for k in values.shape):
            raise ConfigError(f"{source}: every grid axis needs at least two nodes")
        axes = [o + h * np.arange(k) for o, h, k in zip(self.origin, self.spacing, values.shape)]
        self._interp = RegularGridInterpolator(axes, values, method="linear",
                                               bounds_error=False, fill_value=None)
        self.digest = hashlib.sha256(
            repr((values.shape, self.origin, self.spacing)).encode() + values.tobytes()
        ).hexdigest()

    @classmethod
    def load(cls, path: str | Path) -> "TabulatedComponent":
        path = Path(path)
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise ConfigError(f"cannot read tabulated field {path}: {exc}") from exc
        header: dict[str, list[str]] = {}
        body: list[str] = []
        for raw in lines:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, *rest = line.split()
            if len(header) < 4 and key in ("dim", "shape", "origin", "spacing"):
                header[key] = rest
            else:
                body.append(line)
        missing = {"dim", "shape", "origin", "spacing"} - header.keys()
        if missing:
            raise ConfigError(f"{path}: header missing {sorted(missing)}")
        try:
            n = int(header["dim"][0])
            shape = tuple(int(v) for v in header["shape"])
            origin = [float(v) for v in header["origin"]]
            spacing = [float(v) for v in header["spacing"]]
            values = np.array(" ".join(body).split(), dtype=float)
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"{path}: malformed tabulated field: {exc}") from exc
        if len(shape) != n:
            raise DimensionError(f"{path}: shape has {len(shape)} entries, dim is {n}")
        if values.size != int(np.prod(shape)):
            raise DimensionError(f"{path}: expected {int(np.prod(shape))} values, got {values.size}")
        return cls(values.reshape(shape), origin, spacing, source=str(path))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self._interp(x.reshape(1, -1))[0] if x.ndim == 1 else self._interp(x)

    def dump(self) -> str:
        header = [
            f"dim {self.values.ndim}",
            "shape " + " ".join(str(k) for k in self.values.shape),
            "origin " + " ".join(repr(v) for v in self.origin),
            "spacing " + " ".join(repr(v) for v in self.spacing),
        ]
        return "\n".join(header + [" ".join(repr(float(v)) for v in self.values.ravel())]) + "\n"


Component = Callable[[np.ndarray], float]


def _as_component(spec, n: int):
    """Normalize a component spec into (callable, provenance string)."""
    if isinstance(spec, FieldExpression):
        return spec, "expr:" + spec.pretty()
    if isinstance(spec, TabulatedComponent):
        return spec, "grid:" + spec.digest
    if isinstance(spec, (int, float, np.floating, np.integer)):
        value = float(spec)
        return (lambda x, v=value: v), "const:" + repr(value)
    if callable(spec):
        return spec, "callable:" + getattr(spec, "__name__", "anonymous")
    raise ConfigError(f"unsupported field component {spec!r}")


@dataclass(frozen=True, eq=False)
class RandersField:
    """``F(x, y) = sqrt(a_ij(x) y^i y^j) + beta_i(x) y^i`` on a box.

    ``a_components`` is an n x n nested tuple of component specs (only the
    upper triangle is read, the matrix is symmetrized); ``beta_components`` an
    n-tuple. Use the constructors rather than building this directly.
    """

    dim: int
    a_components: tuple
    beta_components: tuple
    domain: Box
    margin: float = 1e-6
    label: str = ""
    _a_fn: Callable | None = field(default=None, repr=False)
    _beta_fn: Callable | None = field(default=None, repr=False)
    _sources: tuple = field(default=(), repr=False)

    # ---- constructors -------------------------------------------------

    @classmethod
    def from_components(cls, a, beta, domain: Box, margin: float = 1e-6, label: str = ""):
        n = len(beta)
        if len(a) != n or any(len(row) != n for row in a):
            raise DimensionError(f"metric must be {n}x{n} to match a {n}-component one-form")
        if domain.dim != n:
            raise DimensionError(f"domain has dimension {domain.dim}, field has {n}")
        a_fns, sources = [], []
        for i in range(n):
            row = []
            for j in range(n):
                fn, src = _as_component(a[min(i, j)][max(i, j)], n)
                row.append(fn)
                if i <= j:
                    sources.append(f"a{i + 1}{j + 1}=" + src)
            a_fns.append(row)
        b_fns = []
        for i in range(n):
            fn, src = _as_component(beta[i], n)
            b_fns.append(fn)
            sources.append(f"b{i + 1}=" + src)

        def a_fn(x):
            return np.array([[a_fns[i][j](x) for j in range(n)] for i in range(n)], dtype=float)

        def beta_fn(x):
            return np.array([b_fns[i](x) for i in range(n)], dtype=float)

        return cls(n, tuple(map(tuple, a)), tuple(beta), domain, margin, label,
                   a_fn, beta_fn, tuple(sources))

    @classmethod
    def constant(cls, a, beta, domain: Box | None = None, margin: float = 1e-6, label: str = ""):
        a = np.atleast_2d(np.asarray(a, dtype=float))
        beta = np.atleast_1d(np.asarray(beta, dtype=float))
        n = beta.size
        domain = domain or Box.cube(n)
        return cls.from_components([[float(v) for v in row] for row in a],
                                   [float(v) for v in beta], domain, margin, label)

    @classmethod
    def from_expressions(cls, a_sources, beta_sources, domain: Box, margin: float = 1e-6,
                         label: str = ""):
        """Build from expression strings over ``x1..xn``; numbers are accepted too."""
        n = len(beta_sources)
        names = variable_names("x", n)

        def conv(s):
            return FieldExpression.parse(s, names) if isinstance(s, str) else s

        a = [[conv(s) for s in row] for row in a_sources]
        return cls.from_components(a, [conv(s) for s in beta_sources], domain, margin, label)

    @classmethod
    def from_functions(cls, a_fn: Callable, beta_fn: Callable, dim: int, domain: Box,
                       margin: float = 1e-6, label: str = ""):
        """Wrap vector-valued callables ``a_fn(x) -> (n, n)`` and ``beta_fn(x) -> (n,)``."""
        if domain.dim != dim:
            raise DimensionError(f"domain has dimension {domain.dim}, field has {dim}")

        def a_wrapped(x):
            return np.asarray(a_fn(x), dtype=float).reshape(dim, dim)

        def b_wrapped(x):
            return np.asarray(beta_fn(x), dtype=float).reshape(dim)

        sources = (f"fn:{getattr(a_fn, '__name__', 'a')}", f"fn:{getattr(beta_fn, '__name__', 'b')}")
        return cls(dim, (), (), domain, margin, label, a_wrapped, b_wrapped, sources)

    # ---- evaluation ---------------------------------------------------

    def _point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.dim:
            raise DimensionError(f"point has {x.size} coordinates, field dimension is {self.dim}")
        return self.domain.wrap(x)

    def a(self, x) -> np.ndarray:
        x = self._point(x)
        with np.errstate(divide="raise", invalid="raise", over="raise"):
            try:
                m = self._a_fn(x)
            except (FloatingPointError, ZeroDivisionError, ValueError) as exc:
                raise FieldEvaluationError(f"metric evaluation failed ({exc})", x) from exc
        if not np.all(np.isfinite(m)):
            raise FieldEvaluationError("metric has non-finite entries", x)
        return 0.5 * (m + m.T)

    def beta(self, x) -> np.ndarray:
        x = self._point(x)
        with np.errstate(divide="raise", invalid="raise", over="raise"):
            try:
                b = self._beta_fn(x)
            except (FloatingPointError, ZeroDivisionError, ValueError) as exc:
                raise FieldEvaluationError(f"one-form evaluation failed ({exc})", x) from exc
        if not np.all(np.isfinite(b)):
            raise FieldEvaluationError("one-form has non-finite entries", x)
        return b

    def beta_sharp(self, x) -> np.ndarray:
        """The one-form with its index raised by ``a``: ``beta^i = a^ij beta_j``."""
        return np.linalg.solve(self.a(x), self.beta(x))

    def beta_norm(self, x) -> float:
        """``||beta||`` measured with the inverse metric; Randers requires this < 1."""
        b = self.beta(x)
        return float(np.sqrt(max(b @ np.linalg.solve(self.a(x), b), 0.0)))

    def with_domain(self, domain: Box) -> "RandersField":
        if domain.dim != self.dim:
            raise DimensionError(f"domain has dimension {domain.dim}, field has {self.dim}")
        return RandersField(self.dim, self.a_components, self.beta_components, domain,
                            self.margin, self.label, self._a_fn, self._beta_fn, self._sources)

    @property
    def sources(self) -> tuple[str, ...]:
        return self._sources

    def fingerprint(self) -> str:
        text = "|".join(self._sources) + f"|domain={self.domain}|margin={self.margin!r}"
        return hashlib.sha256(text.encode()).hexdigest()
