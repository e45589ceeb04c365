"""Toy canonical quantization on a 1D periodic grid.

``P = -i d/dx`` is the Fourier (spectral) derivative. The Nyquist mode
``(-1)^j`` is the only real plane wave on an even grid and its wavenumber is
ambiguous (``+N/2`` or ``-N/2``). Two conventions are offered:

* ``signed`` (default): the Nyquist mode gets ``k = -N/2``, the usual FFT
  convention; ``2bP`` then has spectrum ``{-N/2, ..., N/2 - 1} * 2b``.
* ``zero``: the Nyquist mode gets ``k = 0``; ``P`` is then purely imaginary,
  so complex conjugation anticommutes exactly with ``beta P + P beta``.

No antiunitary map can reverse the sign of an operator whose spectrum is
not symmetric about zero, so exact time-inversion antisymmetry needs ``zero``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import OperatorError

HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class GridModel:
    N: int
    L: float = 2 * np.pi
    nyquist: str = "signed"

    def __post_init__(self):
        if self.N < 8 or self.N & (self.N - 1):
            raise OperatorError(f"grid size must be a power of two >= 8, got {self.N}")
        if self.L <= 0:
            raise OperatorError("period must be positive")
        if self.nyquist not in ("signed", "zero"):
            raise OperatorError(f"unknown Nyquist convention {self.nyquist!r}")

    @property
    def xs(self) -> np.ndarray:
        return self.L * np.arange(self.N) / self.N

    @property
    def wavenumbers(self) -> np.ndarray:
        """Integer mode numbers ``m`` (momentum ``2 pi m / L``) in FFT order."""
        m = np.fft.fftfreq(self.N, d=1.0 / self.N)
        if self.nyquist == "zero":
            m[self.N // 2] = 0.0
        return m

    @property
    def momenta(self) -> np.ndarray:
        return 2 * np.pi / self.L * self.wavenumbers


@dataclass(frozen=True)
class OperatorMatrix:
    entries: np.ndarray
    hermitian: bool = False

    def __post_init__(self):
        m = np.asarray(self.entries)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise OperatorError("operator must be a square matrix")
        if self.hermitian and hermitian_residual(m) > HERMITIAN_TOL:
            raise OperatorError(f"matrix flagged Hermitian has residual {hermitian_residual(m):.3g}")

    @property
    def N(self) -> int:
        return self.entries.shape[0]

    def eigenvalues(self) -> np.ndarray:
        if self.hermitian:
            return np.linalg.eigvalsh(self.entries)
        return np.linalg.eigvals(self.entries)


def hermitian_residual(m: np.ndarray) -> float:
    scale = max(1.0, float(np.linalg.norm(m)))
    return float(np.linalg.norm(m - m.conj().T)) / scale


def _derivative_matrix(model: GridModel) -> np.ndarray:
    """Real antisymmetric spectral derivative with the Nyquist mode removed."""
    N = model.N
    k = 2j * np.pi / model.L * np.fft.fftfreq(N, d=1.0 / N)
    k[N // 2] = 0.0
    D = np.fft.ifft(k[:, None] * np.fft.fft(np.eye(N), axis=0), axis=0).real
    return 0.5 * (D - D.T)


def build_grid_operators(model: GridModel) -> tuple[OperatorMatrix, OperatorMatrix]:
    """Position (diagonal) and momentum ``-i d/dx`` operators on the grid."""
    X = OperatorMatrix(np.diag(model.xs).astype(complex), hermitian=True)
    P = -1j * _derivative_matrix(model)
    if model.nyquist == "signed":
        v = (-1.0) ** np.arange(model.N) / np.sqrt(model.N)
        P = P + (-model.N / 2) * (2 * np.pi / model.L) * np.outer(v, v)
    return X, OperatorMatrix(P, hermitian=True)


def _sample_beta(model: GridModel, beta) -> np.ndarray:
    if callable(beta):
        values = np.array([beta(np.array([x])) for x in model.xs])
        values = np.asarray(values).reshape(model.N)
    else:
        values = np.broadcast_to(np.asarray(beta), (model.N,)).copy()
    if np.iscomplexobj(values):
        if np.any(values.imag != 0):
            raise OperatorError("beta must be real-valued on the grid")
        values = values.real
    return values.astype(float)


def build_hamiltonian_operator(model: GridModel, beta, ordering: str = "symmetric") -> OperatorMatrix:
    """``H = beta(X) P + P beta(X)``, the symmetric ordering of ``2 beta(X) P``.

    ``beta`` is a constant, an array of grid values, or a callable of a
    length-1 coordinate array (e.g. ``RandersField.beta`` for a 1D field).
    """
    if ordering != "symmetric":
        raise OperatorError(f"unsupported ordering {ordering!r}; only 'symmetric' is Hermitian")
    b = _sample_beta(model, beta)
    _, P = build_grid_operators(model)
    H = b[:, None] * P.entries + P.entries * b[None, :]
    return OperatorMatrix(H, hermitian=True)


def time_inversion_check(H: OperatorMatrix) -> float:
    """``||conj(H) + H|| / ||H||`` in the spectral norm; zero for the zero operator."""
    norm = float(np.linalg.norm(H.entries, 2))
    if norm == 0.0:
        return 0.0
    return float(np.linalg.norm(H.entries.conj() + H.entries, 2)) / norm


def commutator(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return A @ B - B @ A


@dataclass(frozen=True)
class SplitResult:
    H1: OperatorMatrix
    H2: OperatorMatrix
    report: dict


def thooft_split(H: OperatorMatrix, rho: OperatorMatrix, form: str = "corrected",
                 commute_tol: float = 1e-10) -> SplitResult:
    """Split ``H`` into commuting nonnegative parts using a positive ``rho`` with ``[rho, H] = 0``.

    ``squared``:   H1 = (rho^2 + H)^2 / (4 rho), H2 = (rho^2 - H)^2 / (4 rho); H1 - H2 = rho H.
    ``corrected``: H1 = (rho + H)^2 / (4 rho),   H2 = (rho - H)^2 / (4 rho);   H1 - H2 = H.
    """
    if form not in ("squared", "corrected"):
        raise OperatorError(f"unknown split form {form!r}")
    h, r = H.entries, rho.entries
    comm = float(np.linalg.norm(commutator(r, h)))
    if comm > commute_tol * max(1.0, float(np.linalg.norm(r)) * float(np.linalg.norm(h))):
        raise OperatorError(f"rho does not commute with H (||[rho, H]|| = {comm:.3g})")
    if hermitian_residual(r) > HERMITIAN_TOL:
        raise OperatorError("rho must be Hermitian")
    evals, evecs = np.linalg.eigh(r)
    if evals[0] <= 0:
        raise OperatorError(f"rho must be positive definite (min eigenvalue {evals[0]:.3g})")
    rho_inv = (evecs / evals) @ evecs.conj().T
    base = r @ r if form == "squared" else r
    plus = base + h
    minus = base - h
    H1 = 0.25 * plus @ plus @ rho_inv
    H2 = 0.25 * minus @ minus @ rho_inv
    H1 = 0.5 * (H1 + H1.conj().T)
    H2 = 0.5 * (H2 + H2.conj().T)
    target = r @ h if form == "squared" else h
    scale = max(1.0, float(np.linalg.norm(h)))
    report = {
        "form": form,
        "rho_commutator": comm,
        "identity_residual": float(np.linalg.norm(H1 - H2 - target)) / scale,
        "identity": "H1 - H2 = rho H" if form == "squared" else "H1 - H2 = H",
        "parts_commutator": float(np.linalg.norm(commutator(H1, H2))) / scale**2,
        "min_eigenvalue_H1": float(np.linalg.eigvalsh(H1)[0]),
        "min_eigenvalue_H2": float(np.linalg.eigvalsh(H2)[0]),
    }
    unit = np.abs(evals - 1.0) <= 1e-8
    report["unit_eigenspace_dim"] = int(unit.sum())
    if unit.any():
        Q = evecs[:, unit]
        other = "corrected" if form == "squared" else "squared"
        base_o = r @ r if other == "squared" else r
        H1o = 0.25 * (base_o + h) @ (base_o + h) @ rho_inv
        report["unit_eigenspace_form_difference"] = float(
            np.linalg.norm(Q.conj().T @ (H1 - H1o) @ Q)) / scale
    return SplitResult(OperatorMatrix(H1, True), OperatorMatrix(H2, True), report)


def _require_hermitian(H: OperatorMatrix) -> None:
    if hermitian_residual(H.entries) > HERMITIAN_TOL:
        raise OperatorError("time evolution needs a Hermitian Hamiltonian")


def evolution_operator(H: OperatorMatrix, t: float) -> np.ndarray:
    """``exp(-i H t)`` via the eigendecomposition of ``H``."""
    _require_hermitian(H)
    w, V = np.linalg.eigh(H.entries)
    return (V * np.exp(-1j * w * t)) @ V.conj().T


def time_evolution(H: OperatorMatrix, psi0, t: float) -> np.ndarray:
    return evolution_operator(H, t) @ np.asarray(psi0, dtype=complex)


@dataclass(frozen=True)
class SpectrumReport:
    N: int
    shell: tuple[int, ...]
    weights: tuple[float, ...]
    eigenvalues: np.ndarray
    raw_min_eigenvalue: float
    raw_max_eigenvalue: float

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def max_eigenvalue(self) -> float:
        return float(self.eigenvalues[-1])

    def to_dict(self) -> dict:
        return {"N": self.N, "shell": list(self.shell), "weights": list(self.weights),
                "min_eigenvalue": self.min_eigenvalue, "max_eigenvalue": self.max_eigenvalue,
                "raw_min_eigenvalue": self.raw_min_eigenvalue,
                "raw_max_eigenvalue": self.raw_max_eigenvalue}


def averaged_operator(model: GridModel, beta, k0: int = 1,
                      weight: Callable | None = None) -> tuple[OperatorMatrix, tuple, tuple]:
    """Weighted compression of ``H`` onto the plane waves with ``|m| = k0``.

    ``<H> = W^1/2 Pi H Pi W^1/2`` with ``Pi`` the projector on the shell and
    ``W`` the normalized weights ``weight(p)`` at the shell momenta.
    """
    m = model.wavenumbers
    shell = [int(j) for j in np.nonzero(np.abs(m) == k0)[0]]
    if k0 <= 0 or not shell:
        raise OperatorError(f"no grid modes with |m| = {k0} at N = {model.N}")
    p = model.momenta[shell]
    w = np.ones(len(shell)) if weight is None else np.array([float(weight(pk)) for pk in p])
    if np.any(w < 0) or not w.sum() > 0:
        raise OperatorError("shell weights must be nonnegative and not all zero")
    w = w / w.sum()
    H = build_hamiltonian_operator(model, beta)
    j = np.arange(model.N)
    modes = np.exp(2j * np.pi * np.outer(j, m[shell]) / model.N) / np.sqrt(model.N)
    block = modes.conj().T @ H.entries @ modes
    sw = np.sqrt(w)
    block = sw[:, None] * block * sw[None, :]
    avg = modes @ block @ modes.conj().T
    avg = 0.5 * (avg + avg.conj().T)
    return OperatorMatrix(avg, hermitian=True), tuple(int(m[s]) for s in shell), tuple(float(v) for v in w)


def averaged_operator_spectrum(model: GridModel, beta, k0: int = 1,
                               weight: Callable | None = None) -> SpectrumReport:
    """Spectrum of the shell-averaged Hamiltonian next to the raw one."""
    avg, shell, w = averaged_operator(model, beta, k0, weight)
    raw = build_hamiltonian_operator(model, beta).eigenvalues()
    return SpectrumReport(model.N, shell, w, avg.eigenvalues(), float(raw[0]), float(raw[-1]))
