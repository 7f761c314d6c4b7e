"""Vector fields of the preconditioned dynamics and their integrators.

The continuous flow is x' = -grad phi*(grad f(x)); the matching discrete
method is x+ = x - gamma grad phi*(grad f(x)), which is exactly explicit
Euler on the flow.  Trajectories from both share one record format so a
single certificate engine can scan either.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .objectives import Objective
from .refpotential import ReferencePotential
from .report import array_digest

__all__ = [
    "Trajectory",
    "field_precondflow",
    "field_mirrorflow",
    "integrate_adaptive",
    "integrate_rk4",
    "iterate_npgm",
    "HORIZON", "VELOCITY_TOL", "DIVERGENCE", "STEP_FLOOR",
]

HORIZON = "horizon-reached"
VELOCITY_TOL = "velocity-tolerance"
DIVERGENCE = "divergence"
STEP_FLOOR = "step-floor"

DIVERGENCE_NORM = 1e12
STEP_FLOOR_FACTOR = 1e-14

VectorField = Callable[[np.ndarray], np.ndarray]


@dataclass
class Trajectory:
    """Time-stamped states and velocities of one run.

    ``times`` holds flow time t, or gamma*k for discrete runs, strictly
    increasing.  ``velocities[i]`` is the field evaluated at
    ``states[i]`` (recorded at sampling time, not re-derived later).
    ``rel_tol`` is the integrator tolerance the run was produced with;
    certificate slacks scale with it (0 for discrete runs).
    """

    times: np.ndarray
    states: np.ndarray
    velocities: np.ndarray
    accepted: int
    rejected: int
    terminal_reason: str
    kind: str = "flow"              # "flow" or "discrete"
    rel_tol: float = 0.0
    gamma: float | None = None
    _digest: str | None = dc_field(default=None, repr=False)

    @property
    def trajectory_id(self) -> str:
        if self._digest is None:
            self._digest = array_digest(self.times, self.states)
        return self._digest

    @property
    def x0(self) -> np.ndarray:
        return self.states[0]

    @property
    def t_final(self) -> float:
        return float(self.times[-1])

    def __len__(self) -> int:
        return len(self.times)


def field_precondflow(o: Objective, p: ReferencePotential) -> VectorField:
    """F(x) = -grad phi*(grad f(x)); vanishes exactly at stationary points."""

    def F(x: np.ndarray) -> np.ndarray:
        return -p.grad_conjugate(o.grad(x))

    return F


def field_mirrorflow(o: Objective, p: ReferencePotential) -> VectorField:
    """G(z) = -grad f(grad phi*(z)): the dual flow with the roles swapped."""

    def G(z: np.ndarray) -> np.ndarray:
        return -o.grad(p.grad_conjugate(z))

    return G


# --- adaptive embedded 5(4) pair -------------------------------------------

# Dormand-Prince coefficients (FSAL: stage 7 equals the 5th-order result).
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
# 5th-order weights coincide with the last A row; E = b5 - b4.
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920,
      -17253 / 339200, 22 / 525, -1 / 40)

_SAFETY = 0.9
_FACTOR_MIN = 0.2
_FACTOR_MAX = 5.0
_PI_ALPHA = 0.7 / 5.0
_PI_BETA = 0.4 / 5.0


def _hermite(theta: float, h: float, x0, f0, x1, f1):
    """Cubic Hermite state interpolant (4th-order accurate) on one step."""
    t2 = theta * theta
    t3 = t2 * theta
    return ((2 * t3 - 3 * t2 + 1) * x0 + (t3 - 2 * t2 + theta) * h * f0
            + (-2 * t3 + 3 * t2) * x1 + (t3 - t2) * h * f1)


def _rms(v: np.ndarray) -> float:
    return float(np.sqrt(np.mean(v * v)))


def _initial_step(field, x0, f0, t_end, rel_tol, abs_tol) -> float:
    sc = abs_tol + rel_tol * np.abs(x0)
    d0, d1 = _rms(x0 / sc), _rms(f0 / sc)
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, t_end)
    f1 = field(x0 + h0 * f0)
    d2 = _rms((f1 - f0) / sc) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 5.0)
    return min(100.0 * h0, h1, t_end)


def _validate_tols(rel_tol: float, abs_tol: float) -> None:
    for name, tol in (("rel_tol", rel_tol), ("abs_tol", abs_tol)):
        if not (1e-13 <= tol <= 1e-2):
            raise ValueError(f"{name} must be in [1e-13, 1e-2], got {tol}")


def integrate_adaptive(field: VectorField, x0: np.ndarray, t_end: float,
                       rel_tol: float = 1e-10, abs_tol: float = 1e-12,
                       record_every: float = 0.01,
                       stop_velocity: float = 0.0) -> Trajectory:
    """Integrate x' = field(x) with an embedded 5(4) pair and PI control.

    Records the state at every multiple of ``record_every`` (via cubic
    Hermite interpolation inside accepted steps) plus the final time,
    which the stepper lands on exactly.  Velocities are fresh field
    evaluations at the recorded states.  Aborts with a partial
    trajectory on divergence (state norm > 1e12) or when the step falls
    below 1e-14 * t_end.  With ``stop_velocity`` > 0, stops early once
    the field norm at an accepted node drops to that threshold.
    """
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    if record_every <= 0:
        raise ValueError("record_every must be positive")
    _validate_tols(rel_tol, abs_tol)

    x = np.asarray(x0, dtype=float).copy()
    f0 = field(x)
    t = 0.0

    times = [0.0]
    states = [x.copy()]
    velocities = [f0.copy()]

    rec_idx = 1
    next_rec = record_every
    eps_t = 1e-12 * t_end
    h = _initial_step(field, x, f0, t_end, rel_tol, abs_tol)
    h_floor = STEP_FLOOR_FACTOR * t_end
    err_prev = 1.0
    accepted = rejected = 0
    terminal = HORIZON

    if stop_velocity > 0.0 and float(np.linalg.norm(f0)) <= stop_velocity:
        return Trajectory(np.array(times), np.array(states),
                          np.array(velocities), 0, 0, VELOCITY_TOL,
                          rel_tol=rel_tol)

    k = [f0] + [np.empty_like(x) for _ in range(6)]
    while t < t_end - eps_t:
        if h < h_floor:
            terminal = STEP_FLOOR
            break
        h = min(h, t_end - t)

        for i in range(1, 7):
            xi = x + h * sum(a * k[j] for j, a in enumerate(_A[i]))
            k[i] = field(xi)
        x5 = x + h * sum(a * k[j] for j, a in enumerate(_A[6]))
        k[6] = field(x5)
        err_vec = h * sum(e * k[j] for j, e in enumerate(_E))
        sc = abs_tol + rel_tol * np.maximum(np.abs(x), np.abs(x5))
        err = _rms(err_vec / sc)

        if math.isfinite(err) and err <= 1.0:
            accepted += 1
            t_new = t_end if t + h >= t_end - eps_t else t + h
            if not np.all(np.isfinite(x5)) or \
                    float(np.linalg.norm(x5)) > DIVERGENCE_NORM:
                terminal = DIVERGENCE
                break
            while next_rec < t_end - eps_t and next_rec <= t_new + eps_t:
                theta = (next_rec - t) / h
                xr = _hermite(theta, h, x, k[0], x5, k[6])
                times.append(next_rec)
                states.append(xr)
                velocities.append(field(xr))
                rec_idx += 1
                next_rec = record_every * rec_idx
            t, x, k[0] = t_new, x5, k[6]
            err = max(err, 1e-10)   # keep the PI exponents finite
            factor = _SAFETY * err ** (-_PI_ALPHA) * err_prev ** _PI_BETA
            err_prev = err
            h *= min(_FACTOR_MAX, max(_FACTOR_MIN, factor))
            if stop_velocity > 0.0 and \
                    float(np.linalg.norm(k[0])) <= stop_velocity:
                terminal = VELOCITY_TOL
                break
        else:
            rejected += 1
            if math.isfinite(err):
                factor = _SAFETY * err ** (-_PI_ALPHA)
                h *= min(1.0, max(_FACTOR_MIN, factor))
            else:
                h *= _FACTOR_MIN

    if terminal in (HORIZON, VELOCITY_TOL) and t > times[-1] + eps_t:
        times.append(t)
        states.append(x)
        velocities.append(k[0])

    return Trajectory(np.array(times), np.array(states),
                      np.array(velocities), accepted, rejected, terminal,
                      rel_tol=rel_tol)


def integrate_rk4(field: VectorField, x0: np.ndarray, t_end: float,
                  h: float, record_every: float = 0.01) -> Trajectory:
    """Classical fixed-step RK4 reference integrator.

    Within each recording interval the step is record_every/ceil(.../h),
    the largest uniform step not exceeding ``h`` that lands exactly on
    the record grid; global error is O(h^4).
    """
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    if not (0 < h <= t_end):
        raise ValueError("need 0 < h <= t_end")
    if record_every <= 0:
        raise ValueError("record_every must be positive")

    x = np.asarray(x0, dtype=float).copy()
    times = [0.0]
    states = [x.copy()]
    velocities = [field(x)]
    accepted = 0
    terminal = HORIZON

    # Record grid: multiples of record_every, then t_end.
    grid = [record_every * i for i in
            range(1, int(t_end / record_every - 1e-9) + 1)]
    if not grid or grid[-1] < t_end - 1e-12 * t_end:
        grid.append(t_end)

    t = 0.0
    for tr in grid:
        n_sub = max(1, math.ceil((tr - t) / h - 1e-12))
        hs = (tr - t) / n_sub
        for _ in range(n_sub):
            k1 = field(x)
            k2 = field(x + 0.5 * hs * k1)
            k3 = field(x + 0.5 * hs * k2)
            k4 = field(x + hs * k3)
            x = x + (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            accepted += 1
            if not np.all(np.isfinite(x)) or \
                    float(np.linalg.norm(x)) > DIVERGENCE_NORM:
                terminal = DIVERGENCE
                break
        if terminal == DIVERGENCE:
            break
        t = tr
        times.append(tr)
        states.append(x.copy())
        velocities.append(field(x))

    return Trajectory(np.array(times), np.array(states),
                      np.array(velocities), accepted, 0, terminal)


def iterate_npgm(o: Objective, p: ReferencePotential, x0: np.ndarray,
                 gamma: float, k_max: int,
                 stop_grad: float = 0.0) -> Trajectory:
    """Run x+ = x - gamma grad phi*(grad f(x)) for up to k_max steps.

    The time channel stores gamma*k so discrete runs line up with the
    flow for Euler-limit comparisons.  Stops early once
    ||grad f(x)|| <= stop_grad.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")

    x = np.asarray(x0, dtype=float).copy()
    times, states, velocities = [], [], []
    terminal = HORIZON
    steps = 0

    for k in range(k_max + 1):
        g = o.grad(x)
        v = -p.grad_conjugate(g)
        times.append(gamma * k)
        states.append(x.copy())
        velocities.append(v)
        if stop_grad > 0.0 and float(np.linalg.norm(g)) <= stop_grad:
            terminal = VELOCITY_TOL
            break
        if k == k_max:
            break
        x = x + gamma * v
        steps += 1
        if not np.all(np.isfinite(x)) or \
                float(np.linalg.norm(x)) > DIVERGENCE_NORM:
            terminal = DIVERGENCE
            break

    return Trajectory(np.array(times), np.array(states),
                      np.array(velocities), steps, 0, terminal,
                      kind="discrete", rel_tol=0.0, gamma=gamma)
