"""One function per verb: ``run(cfg, opts) -> Outcome``."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import averaging, connections, dynamics, randers, spectral
from ..errors import (CheckFailedError, ConfigError, DimensionError, RandersConditionError,
                      StrongConvexityError)
from ..expr import FieldExpression, variable_names
from .config import ExperimentConfig
from .output import csv_text


@dataclass
class Outcome:
    result: dict
    checks: list = field(default_factory=list)
    files: dict = field(default_factory=dict)
    failure: type = CheckFailedError

    def check(self, name: str, value, tolerance, passed: bool, relation: str = "<=") -> None:
        self.checks.append({"name": name, "value": value, "tolerance": tolerance,
                            "relation": relation, "pass": bool(passed)})

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks)


def _point(cfg: ExperimentConfig, section: str, key: str, n: int, default=None) -> np.ndarray:
    if default is None:
        default = 0.5 * (np.asarray(cfg.field().domain.lo) + np.asarray(cfg.field().domain.hi))
    return cfg.get_vector(section, key, n, default=default)


def _random_pairs(field, count: int, seed: int):
    rng = np.random.default_rng(seed)
    xs = field.domain.sample(count, rng)
    ys = rng.standard_normal((count, field.dim))
    return xs, ys


# ---- validate / eval / tensors ------------------------------------------

def run_validate(cfg: ExperimentConfig, opts) -> Outcome:
    f = cfg.field()
    rep = randers.validate_randers(f, cfg.samples, cfg.seed)
    out = Outcome({"norm": rep.max_norm, "min_eigenvalue": rep.min_eigenvalue,
                   "margin": rep.margin, "sample_count": int(len(rep.points)),
                   "worst_point": rep.worst_point, "dim": f.dim})
    out.check("metric_positive_definite", rep.min_eigenvalue, 0.0, rep.min_eigenvalue > 0, ">")
    out.check("randers_condition", rep.max_norm, 1.0 - rep.margin,
              rep.max_norm <= 1.0 - rep.margin)
    out.failure = StrongConvexityError if rep.min_eigenvalue <= 0 else RandersConditionError
    return out


def run_eval(cfg: ExperimentConfig, opts) -> Outcome:
    f = cfg.field()
    x = _point(cfg, "eval", "x", f.dim)
    y = cfg.get_vector("eval", "y", f.dim)
    F = randers.finsler_norm(f, x, y)
    a, b = f.a(x), f.beta(x)
    result = {"x": x, "y": y, "F": F, "F_reversed": randers.finsler_norm(f, x, -y),
              "alpha": float(np.sqrt(y @ a @ y)), "beta_y": float(b @ y),
              "a": a, "beta": b, "beta_norm": f.beta_norm(x)}
    if cfg.get("eval", "p") is not None:
        p = cfg.get_vector("eval", "p", f.dim)
        result["p"] = p
        result["F_star"] = randers.momentum_norm(f, x, p)
        result["H"] = dynamics.classical_hamiltonian(f, x, p)
    out = Outcome(result)
    worst = 0.0
    for lam in (0.5, 2.0, 10.0):
        worst = max(worst, abs(randers.finsler_norm(f, x, lam * y) - lam * F) / max(lam * abs(F), 1e-300))
    out.check("homogeneity", worst, 1e-8, worst <= 1e-8)
    out.check("positivity", F, 0.0, F > 0, ">")
    return out


def _hessian_error(f, x, y) -> float:
    gc = randers.fundamental_tensor(f, x, y)
    gn = randers.fundamental_tensor(f, x, y, mode="numeric_hessian")
    return float(np.max(np.abs(gc - gn)) / np.max(np.abs(gn)))


def run_tensors(cfg: ExperimentConfig, opts) -> Outcome:
    f = cfg.field()
    x = _point(cfg, "tensors", "x", f.dim)
    y = cfg.get_vector("tensors", "y", f.dim)
    g = randers.fundamental_tensor(f, x, y)
    A = randers.cartan_tensor(f, x, y)
    result = {"x": x, "y": y, "g": g, "cartan": A,
              "g_numeric": randers.fundamental_tensor(f, x, y, mode="numeric_hessian"),
              "min_eigenvalue_g": float(np.linalg.eigvalsh(g)[0])}
    if cfg.get("tensors", "p") is not None:
        p = cfg.get_vector("tensors", "p", f.dim)
        dual = randers.legendre_dual(f, x, p)
        result["legendre"] = {"p": p, "y": dual.y, "F_star": dual.F_star,
                              "iterations": dual.iterations, "residual": dual.residual}
    xs, ys = _random_pairs(f, cfg.samples, cfg.seed)
    hess = max([_hessian_error(f, x, y)] + [_hessian_error(f, xi, yi) for xi, yi in zip(xs, ys)])
    euler = 0.0
    for xi, yi in [(x, y), *zip(xs, ys)]:
        Ai = randers.cartan_tensor(f, xi, yi)
        euler = max(euler, float(np.max(np.abs(np.einsum("ijk,k->ij", Ai, yi)))))
    result["sample_count"] = cfg.samples + 1
    out = Outcome(result)
    out.check("closed_form_vs_hessian", hess, 1e-5, hess <= 1e-5)
    out.check("cartan_euler_identity", euler, 1e-8, euler <= 1e-8)
    out.check("strong_convexity", result["min_eigenvalue_g"], 0.0, result["min_eigenvalue_g"] > 0, ">")
    return out


# ---- connections --------------------------------------------------------

def run_connections(cfg: ExperimentConfig, opts) -> Outcome:
    f = cfg.field()
    x = _point(cfg, "connections", "x", f.dim)
    y = cfg.get_vector("connections", "y", f.dim)
    tol = cfg.get("connections", "tolerance")
    tol = None if tol is None else cfg.get_float("connections", "tolerance")
    directions = cfg.get_int("connections", "directions", 20)
    points = cfg.get_int("connections", "points", 20)
    chern = connections.chern_connection(f, x, y, tol, directions, cfg.seed)
    cartan = connections.cartan_connection(f, x, y, tol, directions, cfg.seed)
    dh, dv = connections.connection_difference(cartan, chern)
    torsion, compat, diff = chern.torsion_residual, chern.compatibility_residual, 0.0
    xs, ys = _random_pairs(f, points, cfg.seed)
    for k, (xi, yi) in enumerate(zip(xs, ys)):
        b = connections.chern_connection(f, xi, yi, tol, directions, cfg.seed + k + 1)
        c = connections.cartan_connection(f, xi, yi, tol, directions, cfg.seed + k + 1)
        h, v = connections.connection_difference(c, b)
        torsion = max(torsion, b.torsion_residual)
        compat = max(compat, b.compatibility_residual)
        diff = max(diff, float(np.max(np.abs(h))), float(np.max(np.abs(v - b.cartan_v))))
    diff = max(diff, float(np.max(np.abs(dh))), float(np.max(np.abs(dv - chern.cartan_v))))
    out = Outcome({"chern": chern.to_dict(), "point_count": points + 1,
                   "max_torsion_residual": torsion, "max_compatibility_residual": compat,
                   "cartan_minus_chern_residual": diff})
    out.check("torsion_free", torsion, chern.tolerance, torsion <= chern.tolerance)
    out.check("almost_compatible", compat, chern.tolerance, compat <= chern.tolerance)
    out.check("cartan_minus_chern_is_cartan_tensor", diff, 0.0, diff == 0.0)
    return out


# ---- averaging ----------------------------------------------------------

def _weight(cfg: ExperimentConfig, n: int) -> Callable | None:
    if cfg.get("average", "weight") is None:
        return None
    expr = cfg.parse_expression("average", "weight", variable_names("x", n) + variable_names("y", n))

    def weight(x, Y, expr: FieldExpression = expr):
        Y = np.atleast_2d(Y)
        return expr([*[float(v) for v in x], *[Y[:, k] for k in range(n)]])

    return weight


def _scheme(cfg, method, n, opts) -> averaging.AveragingScheme:
    count = cfg.get_int("average", "quadrature_nodes", 4096) if method == "product_quadrature" \
        else cfg.samples
    return averaging.AveragingScheme(
        domain=cfg.get_str("average", "domain", "indicatrix", ("indicatrix", "sphere")),
        method=method, sample_count=count, seed=cfg.seed, weight=_weight(cfg, n),
        measure=cfg.get_str("average", "measure", "angular", ("angular", "g_volume")),
        workers=opts.workers)


def run_average(cfg: ExperimentConfig, opts) -> Outcome:
    f = cfg.field()
    x = _point(cfg, "average", "x", f.dim)
    mode = cfg.get_str("average", "method", "product_quadrature",
                       ("product_quadrature", "monte_carlo", "both"))
    methods = ["product_quadrature", "monte_carlo"] if mode == "both" else [mode]
    out = Outcome({"x": x})
    runs = {}
    for method in methods:
        scheme = _scheme(cfg, method, f.dim, opts)
        h = averaging.average_metric(f, x, scheme)
        H = averaging.average_hamiltonian(f, x, scheme)
        dec = averaging.decompose_hamiltonian(f, x, scheme)
        runs[method] = (h, H)
        eig = float(np.linalg.eigvalsh(h.h)[0])
        out.result[method] = {"h": h.h, "h_stderr": h.stderr, "resolved_method": h.method,
                              "sample_count": scheme.sample_count, "h_min_eigenvalue": eig,
                              "hamiltonian": H.to_dict(),
                              "fluctuation_average": dec.fluctuation_average,
                              "fluctuation_stderr": dec.fluctuation_stderr}
        out.check(f"{method}.h_positive_definite", eig, 0.0, eig > 0, ">")
        out.check(f"{method}.hamiltonian_bound", abs(H.value), H.bound, H.certified)
        fl_tol = max(3.0 * dec.fluctuation_stderr, 1e-10)
        out.check(f"{method}.fluctuation_mean_zero", abs(dec.fluctuation_average), fl_tol,
                  abs(dec.fluctuation_average) <= fl_tol)
    if mode == "both":
        (hq, Hq), (hm, Hm) = runs["product_quadrature"], runs["monte_carlo"]
        z_h = float(np.max(np.abs(hq.h - hm.h) / np.maximum(hm.stderr, 1e-300)))
        z_H = abs(Hq.value - Hm.value) / max(Hm.stderr, 1e-300)
        out.result["agreement"] = {"h_max_z": z_h, "hamiltonian_z": z_H}
        out.check("h_quadrature_vs_monte_carlo", z_h, 3.0, z_h <= 3.0)
        out.check("hamiltonian_quadrature_vs_monte_carlo", z_H, 3.0, z_H <= 3.0)
    return out


# ---- flow ---------------------------------------------------------------

def run_flow(cfg: ExperimentConfig, opts) -> Outcome:
    f = cfg.field()
    n = f.dim
    x0 = _point(cfg, "flow", "x0", n)
    t_final = cfg.get_float("flow", "t_final")
    dt = cfg.get_float("flow", "dt")
    traj = dynamics.flow(f, x0, t_final, dt)
    header = ["t", *variable_names("x", n), *variable_names("v", n)]
    files = {"flow.csv": csv_text(header, traj.rows())}
    bounds = dynamics.bounds_check(f, traj, sample_count=cfg.samples, seed=cfg.seed)
    out = Outcome({"x0": x0, "t_final": t_final, "dt": dt, "steps": int(len(traj.times) - 1),
                   "truncated": traj.truncated, "final_time": float(traj.times[-1]),
                   "final_state": traj.states[-1], "bounds": bounds.to_dict(),
                   "csv_columns": header}, files=files)
    out.check("speed_bound", bounds.max_speed, bounds.speed_bound,
              bounds.max_speed <= bounds.speed_bound * (1 + 1e-12))
    out.check("speed_below_two", bounds.max_speed, 2.0, bounds.max_speed < 2.0, "<")
    out.check("acceleration_bound", bounds.max_accel, bounds.accel_bound,
              bounds.max_accel <= bounds.accel_bound)
    if cfg.get("flow", "period_axis") is not None:
        axis = cfg.get_int("flow", "period_axis") - 1
        if not 0 <= axis < n:
            raise DimensionError(f"[flow] period_axis must be in 1..{n}")
        length = f.domain.hi[axis] - f.domain.lo[axis]
        T = dynamics.return_time(traj, axis, cfg.get_float("flow", "period", length))
        out.result["return_time"] = T
        if cfg.get("flow", "expected_period") is not None:
            expected = cfg.get_float("flow", "expected_period")
            rel = abs(T - expected) / expected
            out.result["return_time_relative_error"] = rel
            out.check("return_time", rel, 1e-6, rel <= 1e-6)
    return out


# ---- spectrum -----------------------------------------------------------

def _rho(H: spectral.OperatorMatrix, kind: str, scale: float) -> spectral.OperatorMatrix:
    N = H.N
    if scale <= 0:
        raise ConfigError("[spectrum] rho_scale must be positive")
    if kind == "identity":
        return spectral.OperatorMatrix(scale * np.eye(N, dtype=complex), True)
    h = H.entries
    norm2 = float(np.linalg.norm(h, 2)) ** 2 or 1.0
    r = scale * (np.eye(N) + h @ h / norm2)
    return spectral.OperatorMatrix(0.5 * (r + r.conj().T), True)


def run_spectrum(cfg: ExperimentConfig, opts) -> Outcome:
    f = cfg.field()
    if f.dim != 1:
        raise DimensionError(f"spectrum needs a 1-dimensional field, got dimension {f.dim}")
    N = cfg.get_int("spectrum", "n", 128)
    L = cfg.get_float("spectrum", "l", 2 * np.pi)
    nyquist = cfg.get_str("spectrum", "nyquist", "signed", ("signed", "zero"))
    ordering = cfg.get_str("spectrum", "ordering", "symmetric")
    k0 = cfg.get_int("spectrum", "k0", 1)
    model = spectral.GridModel(N, L, nyquist)
    beta = spectral._sample_beta(model, lambda x: f.beta_sharp(x)[0])
    H = spectral.build_hamiltonian_operator(model, beta, ordering)
    evals = H.eigenvalues()
    files = {"spectrum.csv": csv_text(["index", "eigenvalue"],
                                      ([k, float(v)] for k, v in enumerate(evals)))}
    zero_model = spectral.GridModel(N, L, "zero")
    H_zero = spectral.build_hamiltonian_operator(zero_model, beta, ordering)
    ti = spectral.time_inversion_check(H_zero)
    avg = spectral.averaged_operator_spectrum(model, beta, k0)
    out = Outcome({"N": N, "L": L, "nyquist": nyquist, "ordering": ordering,
                   "raw_min_eigenvalue": float(evals[0]), "raw_max_eigenvalue": float(evals[-1]),
                   "hermitian_residual": spectral.hermitian_residual(H.entries),
                   "time_inversion_residual": spectral.time_inversion_check(H),
                   "time_inversion_residual_zero_nyquist": ti,
                   "averaged": avg.to_dict(), "csv_columns": ["index", "eigenvalue"]},
                  files=files)
    out.check("hermitian", out.result["hermitian_residual"], spectral.HERMITIAN_TOL,
              out.result["hermitian_residual"] <= spectral.HERMITIAN_TOL)
    out.check("time_inversion_zero_nyquist", ti, 1e-12, ti <= 1e-12)
    rho = _rho(H, cfg.get_str("spectrum", "rho", "identity", ("identity", "energy")),
               cfg.get_float("spectrum", "rho_scale", 1.0))
    out.result["split"] = {}
    for form in ("corrected", "squared"):
        split = spectral.thooft_split(H, rho, form)
        out.result["split"][form] = split.report
        out.check(f"split_{form}.identity", split.report["identity_residual"], 1e-10,
                  split.report["identity_residual"] <= 1e-10)
        out.check(f"split_{form}.parts_commute", split.report["parts_commutator"], 1e-10,
                  split.report["parts_commutator"] <= 1e-10)
    if np.ptp(beta) == 0.0 and beta[0] != 0.0:
        T = L / (2.0 * abs(beta[0]))
        rng = np.random.default_rng(cfg.seed)
        psi = rng.standard_normal(N) + 1j * rng.standard_normal(N)
        psi /= np.linalg.norm(psi)
        res = float(np.linalg.norm(spectral.time_evolution(H, psi, T) - psi))
        out.result["orbit_period"] = T
        out.result["periodic_return_residual"] = res
        out.check("periodic_return", res, 1e-10, res <= 1e-10)
    return out


# ---- compose ------------------------------------------------------------

def run_compose(cfg: ExperimentConfig, opts) -> Outcome:
    f1, f2 = cfg.field("metric"), cfg.field("metric2")
    mode = cfg.get_str("compose", "mode", "direct_sum", ("direct_sum", "interacting"))
    if mode == "direct_sum":
        comp = randers.compose_direct_sum(f1, f2)
    else:
        comp = randers.compose_interacting(f1, f2, cfg.samples, cfg.seed)
    rep = randers.validate_randers(comp, cfg.samples, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    xs = comp.domain.sample(cfg.get_int("compose", "points", 16), rng)
    cross = max(randers.cross_coupling(comp, x, f1.dim) for x in xs)
    out = Outcome({"mode": mode, "dim": comp.dim, "norm": rep.max_norm,
                   "cross_coupling": cross, "point_count": int(len(xs))})
    out.check("randers_condition", rep.max_norm, 1.0 - rep.margin, rep.passed)
    if mode == "direct_sum":
        out.check("no_cross_terms", cross, 0.0, cross == 0.0)
    out.failure = CheckFailedError if rep.passed else RandersConditionError
    return out


VERB_RUNNERS = {
    "validate": run_validate,
    "eval": run_eval,
    "tensors": run_tensors,
    "connections": run_connections,
    "average": run_average,
    "flow": run_flow,
    "spectrum": run_spectrum,
    "compose": run_compose,
}


def recheck_invariant(cfg: ExperimentConfig, key: str) -> tuple[str, bool]:
    """Evaluate one randomly chosen field invariant; used to vet cache hits."""
    rng = np.random.default_rng(int(key[:16], 16))
    f = cfg.field()
    x = f.domain.sample(1, rng)[0]
    y = rng.standard_normal(f.dim)
    choice = int(rng.integers(3))
    if choice == 0:
        return "randers_condition", f.beta_norm(x) <= 1.0 - f.margin
    if choice == 1:
        F = randers.finsler_norm(f, x, y)
        return "homogeneity", abs(randers.finsler_norm(f, x, 2.0 * y) - 2.0 * F) <= 1e-12 * max(1.0, F)
    g = randers.fundamental_tensor(f, x, y)
    return "fundamental_tensor_spd", bool(np.linalg.eigvalsh(g)[0] > 0)
