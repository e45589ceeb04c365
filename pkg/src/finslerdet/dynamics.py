"""Deterministic flow generated by ``H = 2 beta^i(x) p_i`` and its bounds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FinslerError
from .fields import RandersField
from .randers import momentum_norm, velocity_jacobian


def classical_hamiltonian(field: RandersField, x, p, method: str = "linear") -> float:
    """``H(x, p)`` either as ``2 beta^i p_i`` (``linear``) or as the norm
    difference ``F*(x, p) - F*(x, -p)`` (``norm_difference``)."""
    p = np.asarray(p, dtype=float)
    if method == "linear":
        return float(2.0 * field.beta_sharp(x) @ p)
    if method == "norm_difference":
        if not np.any(p):
            return 0.0
        return momentum_norm(field, x, p) - momentum_norm(field, x, -p)
    raise FinslerError(f"unknown Hamiltonian method {method!r}")


def velocity(field: RandersField, x) -> np.ndarray:
    """Hamilton's equation ``dx/dt = dH/dp = 2 beta^i(x)``."""
    return 2.0 * field.beta_sharp(x)


@dataclass(frozen=True)
class Trajectory:
    """States are lifted: periodic coordinates are not wrapped, so windings stay visible."""

    times: np.ndarray
    states: np.ndarray
    velocities: np.ndarray
    truncated: bool = False

    def __post_init__(self):
        if not (len(self.times) == len(self.states) == len(self.velocities)):
            raise FinslerError("trajectory arrays must have equal length")

    def rows(self):
        for t, x, v in zip(self.times, self.states, self.velocities):
            yield [float(t), *map(float, x), *map(float, v)]


def flow(field: RandersField, x0, t_final: float, dt: float) -> Trajectory:
    """Fixed-step classical RK4 integration of ``dx/dt = 2 beta(x)``.

    Leaving a non-periodic face of the domain stops the integration and marks
    the trajectory as truncated; the last accepted state is kept.
    """
    if dt <= 0:
        raise FinslerError("dt must be positive")
    if t_final < 0:
        raise FinslerError("t_final must be nonnegative")
    x = np.asarray(x0, dtype=float).reshape(-1)
    if not field.domain.contains(x):
        raise FinslerError(f"initial point {x.tolist()} outside the domain")
    steps = int(round(t_final / dt))
    if abs(steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise FinslerError("t_final must be an integer multiple of dt")
    times = [0.0]
    states = [x.copy()]
    vels = [velocity(field, x)]
    truncated = False
    for k in range(steps):
        k1 = vels[-1]
        k2 = velocity(field, x + 0.5 * dt * k1)
        k3 = velocity(field, x + 0.5 * dt * k2)
        k4 = velocity(field, x + dt * k3)
        x_new = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not field.domain.contains(x_new):
            truncated = True
            break
        x = x_new
        times.append((k + 1) * dt)
        states.append(x.copy())
        vels.append(velocity(field, x))
    return Trajectory(np.array(times), np.array(states), np.array(vels), truncated)


def return_time(traj: Trajectory, axis: int, period: float) -> float:
    """First time the lifted coordinate ``axis`` has advanced by ``+-period``.

    Located with cubic Hermite interpolation between the bracketing steps
    (positions and velocities are both known), refined by bisection.
    """
    s = traj.states[:, axis] - traj.states[0, axis]
    hits = np.nonzero(np.abs(s) >= period)[0]
    if hits.size == 0:
        raise FinslerError("trajectory never completes a period along the axis")
    k = int(hits[0])
    if k == 0:
        return 0.0
    t0, t1 = traj.times[k - 1], traj.times[k]
    h = t1 - t0
    target = period * np.sign(s[k])
    p0, p1 = s[k - 1], s[k]
    m0, m1 = traj.velocities[k - 1, axis] * h, traj.velocities[k, axis] * h

    def hermite(u):
        return ((2 * u**3 - 3 * u**2 + 1) * p0 + (u**3 - 2 * u**2 + u) * m0
                + (-2 * u**3 + 3 * u**2) * p1 + (u**3 - u**2) * m1) - target

    lo, hi = 0.0, 1.0
    f_lo = hermite(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = hermite(mid)
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return float(t0 + 0.5 * (lo + hi) * h)


@dataclass(frozen=True)
class BoundsReport:
    max_speed: float
    speed_bound: float
    max_accel: float
    accel_bound: float
    lipschitz: float
    sampled: bool = True

    @property
    def passed(self) -> bool:
        # speeds and the bound come from two rounding paths of the same quantity
        return (self.max_speed <= self.speed_bound * (1 + 1e-12)
                and self.max_accel <= self.accel_bound)

    def to_dict(self) -> dict:
        return {"max_speed": self.max_speed, "speed_bound": self.speed_bound,
                "max_accel": self.max_accel, "accel_bound": self.accel_bound,
                "lipschitz": self.lipschitz, "pass": self.passed,
                "certificate": "sampled" if self.sampled else "exact"}


def _a_norm(field: RandersField, x, v) -> float:
    return float(np.sqrt(max(v @ field.a(x) @ v, 0.0)))


def _a_operator_norm(field: RandersField, x, J) -> float:
    a = field.a(x)
    w, V = np.linalg.eigh(a)
    root = V @ np.diag(np.sqrt(w)) @ V.T
    return float(np.linalg.norm(root @ J @ np.linalg.inv(root), 2))


def bounds_check(field: RandersField, traj: Trajectory, sample_count: int = 256,
                 seed: int = 0, max_points: int = 1000) -> BoundsReport:
    """Compare trajectory speed and acceleration with the geometric bounds.

    Speed is measured in the ``a``-norm against ``2 sup ||beta||_{a^-1}``
    (which is < 2 for any Randers field). Acceleration is the finite
    difference of consecutive velocities, compared against the speed bound
    times a sampled Lipschitz constant of the velocity field; that part is a
    sampled certificate, not a proof.
    """
    rng = np.random.default_rng(seed)
    stride = max(1, len(traj.states) // max_points)
    mids = 0.5 * (traj.states[1:] + traj.states[:-1])
    points = field.domain.wrap(np.vstack([field.domain.sample(sample_count, rng),
                                          traj.states[::stride], mids[::stride]]))
    lip = max(_a_operator_norm(field, x, velocity_jacobian(field, x)) for x in points)
    wrapped = field.domain.wrap(traj.states)
    speeds = [_a_norm(field, x, v) for x, v in zip(wrapped, traj.velocities)]
    max_speed = max(speeds) if speeds else 0.0
    # the supremum runs over the sampled domain and every visited state
    sup_beta = max(max(field.beta_norm(x) for x in points),
                   max(field.beta_norm(x) for x in wrapped))
    speed_bound = 2.0 * sup_beta
    max_accel = 0.0
    for k in range(len(traj.times) - 1):
        dt = traj.times[k + 1] - traj.times[k]
        acc = (traj.velocities[k + 1] - traj.velocities[k]) / dt
        mid = field.domain.wrap(0.5 * (traj.states[k] + traj.states[k + 1]))
        max_accel = max(max_accel, _a_norm(field, mid, acc))
    accel_bound = speed_bound * lip
    # the sampled Lipschitz constant carries finite-difference error of order X_STEP^2
    accel_bound = accel_bound * (1 + 1e-6) + 1e-12
    return BoundsReport(float(max_speed), float(speed_bound), float(max_accel),
                        float(accel_bound), float(lip))


def max_acceleration_estimate(mass_ratio: float, c: float = 2.99792458e8,
                              planck_length: float = 1.616255e-35) -> float:
    """Maximal acceleration ``(M_U / M_p) c^2 / L_p`` in m/s^2."""
    if mass_ratio <= 0 or c <= 0 or planck_length <= 0:
        raise FinslerError("mass ratio, speed of light and minimal length must be positive")
    return mass_ratio * c * c / planck_length
