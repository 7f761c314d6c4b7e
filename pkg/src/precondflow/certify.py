"""Claim monitors for the convergence guarantees of the preconditioned flow.

Each check scans recorded trajectory channels and reports the worst
violation margin against its tolerance.  The inequalities hold exactly
in continuous time; monotonicity slacks scale with the integrator
tolerance the trajectory was produced with to absorb discretization and
interpolation error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .integrate import HORIZON, VELOCITY_TOL, Trajectory
from .objectives import Objective
from .refpotential import ReferencePotential
from .report import (CertificateReport, ClaimEntry, PASS,
                     entry_from_margin, not_applicable)

__all__ = [
    "CLAIM_IDS",
    "Channels",
    "compute_channels",
    "MuSampleSpec",
    "SuiteOptions",
    "check_decrease_identity",
    "check_conj_gradient_decrease",
    "check_V_monotone_and_rate",
    "check_fejer",
    "check_gap_rate",
    "check_exponential_rate",
    "check_energy_identity",
    "check_l2_bound",
    "check_velocity_vanishes",
    "estimate_aniso_mu",
    "run_certificate_suite",
]

CLAIM_IDS = (
    "decrease-identity",
    "conj-grad-decrease",
    "V-monotone",
    "rate-1-over-t",
    "fejer-grad",
    "fejer-dist",
    "gap-rate",
    "exp-rate",
    "energy-identity",
    "l2-bound",
    "velocity-vanishes",
)

# Claims whose statement survives per-iterate for the discrete method
# with a small step; the rest are continuous-time only.
DISCRETE_CLAIMS = frozenset({
    "decrease-identity", "conj-grad-decrease", "V-monotone",
    "rate-1-over-t", "fejer-grad", "fejer-dist", "gap-rate",
})

# Central-difference slope tests on discrete runs are unreliable beyond
# this step size.
DISCRETE_SLOPE_GAMMA_MAX = 0.01


@dataclass
class Channels:
    """Scalar channels derived from one trajectory."""

    times: np.ndarray
    f: np.ndarray
    conj: np.ndarray           # phi*(grad f(x))
    grad_norm: np.ndarray
    xdot_norm: np.ndarray
    energy: np.ndarray         # <grad f(x), grad phi*(grad f(x))>
    q: np.ndarray              # conj + phi(-xdot): the running control cost
    V: np.ndarray              # t * conj + f
    f_gap: np.ndarray | None   # f - f_star, when f_star known
    dist: np.ndarray | None    # ||x - x_star||, when the minimizer is known
    W: np.ndarray | None       # scaled-gap + half squared distance Lyapunov


def compute_channels(traj: Trajectory, o: Objective,
                     p: ReferencePotential) -> Channels:
    t = traj.times
    n = len(t)
    f = np.empty(n)
    conj = np.empty(n)
    grad_norm = np.empty(n)
    energy = np.empty(n)
    q = np.empty(n)
    for i in range(n):
        x = traj.states[i]
        v = traj.velocities[i]
        g = o.grad(x)
        f[i] = o.f(x)
        conj[i] = p.conjugate(g)
        grad_norm[i] = float(np.linalg.norm(g))
        energy[i] = -float(np.dot(g, v))
        q[i] = conj[i] + p.phi(-v)
    xdot_norm = np.linalg.norm(traj.velocities, axis=1)
    V = t * conj + f

    f_gap = f - o.f_star if o.f_star is not None else None
    dist = (np.linalg.norm(traj.states - o.minimizer, axis=1)
            if o.minimizer is not None else None)

    W = None
    if (p.is_isotropic and f_gap is not None and dist is not None):
        g0 = grad_norm[0]
        if g0 > 1e-14:
            scale = p.profile.h_star_prime(g0) / g0
            W = t * scale * f_gap + 0.5 * dist ** 2
    return Channels(times=t, f=f, conj=conj, grad_norm=grad_norm,
                    xdot_norm=xdot_norm, energy=energy, q=q, V=V,
                    f_gap=f_gap, dist=dist, W=W)


def _mono_slack(traj: Trajectory, magnitude: float) -> float:
    """Monotonicity slack: 10 * rel_tol * (1 + channel magnitude)."""
    base = max(10.0 * traj.rel_tol, 1e-12)
    return base * (1.0 + abs(magnitude))


def _worst_increase(times: np.ndarray, ch: np.ndarray) -> tuple[float, float]:
    diffs = np.diff(ch)
    i = int(np.argmax(diffs))
    return float(diffs[i]), float(times[i + 1])


# --- individual claim checks ------------------------------------------------


def check_decrease_identity(traj: Trajectory, o: Objective,
                            p: ReferencePotential,
                            tol: float = 1e-5,
                            ch: Channels | None = None) -> ClaimEntry:
    """d/dt f(x(t)) = -[phi*(grad f) + phi(grad phi*(grad f))].

    Compares a central-difference slope of the recorded f channel with
    the closed-form right-hand side at interior samples; the reported
    margin is the worst discrepancy relative to 1 + |rhs|.  Discrete
    runs get a first-order slack in gamma and are not-applicable for
    coarse steps.
    """
    if traj.kind == "discrete":
        if traj.gamma is None or traj.gamma > DISCRETE_SLOPE_GAMMA_MAX:
            return not_applicable("decrease-identity")
        tol = max(tol, 2.0 * traj.gamma)
    ch = ch or compute_channels(traj, o, p)
    if len(traj) < 3:
        return ClaimEntry("decrease-identity", PASS, 0.0, math.nan, tol)
    t, f = ch.times, ch.f
    slope = (f[2:] - f[:-2]) / (t[2:] - t[:-2])
    rhs = -ch.q[1:-1]
    disc = np.abs(slope - rhs) / (1.0 + np.abs(rhs))
    i = int(np.argmax(disc))
    return entry_from_margin("decrease-identity", float(disc[i]), tol,
                             float(t[i + 1]))


def check_conj_gradient_decrease(traj: Trajectory, o: Objective,
                                 p: ReferencePotential,
                                 ch: Channels | None = None) -> ClaimEntry:
    """phi*(grad f(x(t))) is nonincreasing along convex flows."""
    if not o.is_convex:
        return not_applicable("conj-grad-decrease")
    ch = ch or compute_channels(traj, o, p)
    tol = _mono_slack(traj, float(np.max(np.abs(ch.conj))))
    margin, when = _worst_increase(ch.times, ch.conj)
    return entry_from_margin("conj-grad-decrease", margin, tol, when)


def check_V_monotone_and_rate(traj: Trajectory, o: Objective,
                              p: ReferencePotential,
                              ch: Channels | None = None
                              ) -> tuple[ClaimEntry, ClaimEntry]:
    """V(t) = t phi*(grad f) + f nonincreasing, and the 1/t rate it implies:
    phi*(grad f(x(t))) <= (f(x0) - f_star)/t at every sampled t > 0.
    """
    if not o.is_convex or o.f_star is None:
        return (not_applicable("V-monotone"), not_applicable("rate-1-over-t"))
    ch = ch or compute_channels(traj, o, p)
    tol_v = _mono_slack(traj, float(np.max(np.abs(ch.V))))
    margin_v, when_v = _worst_increase(ch.times, ch.V)
    entry_v = entry_from_margin("V-monotone", margin_v, tol_v, when_v)

    gap0 = float(ch.f[0] - o.f_star)
    pos = ch.times > 0
    if not np.any(pos):
        return entry_v, ClaimEntry("rate-1-over-t", PASS, 0.0, math.nan, 0.0)
    excess = ch.conj[pos] - gap0 / ch.times[pos]
    tol_r = _mono_slack(traj, gap0)
    i = int(np.argmax(excess))
    entry_r = entry_from_margin("rate-1-over-t", float(excess[i]), tol_r,
                                float(ch.times[pos][i]))
    return entry_v, entry_r


def check_fejer(traj: Trajectory, o: Objective, p: ReferencePotential,
                ch: Channels | None = None) -> tuple[ClaimEntry, ClaimEntry]:
    """||grad f(x(t))|| and ||x(t) - x_star|| nonincreasing (isotropic phi)."""
    if not o.is_convex or not p.is_isotropic or o.minimizer is None:
        return (not_applicable("fejer-grad"), not_applicable("fejer-dist"))
    ch = ch or compute_channels(traj, o, p)
    tol_g = _mono_slack(traj, float(np.max(ch.grad_norm)))
    margin_g, when_g = _worst_increase(ch.times, ch.grad_norm)
    tol_d = _mono_slack(traj, float(np.max(ch.dist)))
    margin_d, when_d = _worst_increase(ch.times, ch.dist)
    return (entry_from_margin("fejer-grad", margin_g, tol_g, when_g),
            entry_from_margin("fejer-dist", margin_d, tol_d, when_d))


def check_gap_rate(traj: Trajectory, o: Objective, p: ReferencePotential,
                   ch: Channels | None = None) -> ClaimEntry:
    """Suboptimality decay for isotropic phi with nonincreasing (h*)'(r)/r:

        f(x(t)) - f_star <= ||g0|| ||x0 - x_star||^2 / ((h*)'(||g0||) t)

    with g0 = grad f(x0).
    """
    if (not o.is_convex or not p.is_isotropic or not p.ratio_nonincreasing
            or o.minimizer is None or o.f_star is None):
        return not_applicable("gap-rate")
    ch = ch or compute_channels(traj, o, p)
    g0 = float(ch.grad_norm[0])
    gap0 = float(ch.f_gap[0])
    pos = ch.times > 0
    if not np.any(pos):
        return ClaimEntry("gap-rate", PASS, 0.0, math.nan, 0.0)
    if g0 < 1e-14:
        # Started at a stationary point: the gap must stay at zero.
        bound = np.zeros(int(np.sum(pos)))
    else:
        num = g0 * float(ch.dist[0]) ** 2
        bound = num / (p.profile.h_star_prime(g0) * ch.times[pos])
    excess = ch.f_gap[pos] - bound
    tol = _mono_slack(traj, gap0)
    i = int(np.argmax(excess))
    return entry_from_margin("gap-rate", float(excess[i]), tol,
                             float(ch.times[pos][i]))


def check_exponential_rate(traj: Trajectory, o: Objective,
                           p: ReferencePotential, mu: float,
                           ch: Channels | None = None) -> ClaimEntry:
    """f(x(t)) - f_star <= exp(-mu t)(f(x0) - f_star)(1 + slack)."""
    if o.f_star is None:
        return not_applicable("exp-rate")
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    ch = ch or compute_channels(traj, o, p)
    gap0 = float(ch.f_gap[0])
    slack = 1e-6 + 10.0 * traj.rel_tol
    bound = np.exp(-mu * ch.times) * gap0 * (1.0 + slack)
    floor = 1e-15 * (1.0 + abs(gap0))
    excess = ch.f_gap - bound
    i = int(np.argmax(excess))
    return entry_from_margin("exp-rate", float(excess[i]), floor,
                             float(ch.times[i]))


def check_energy_identity(traj: Trajectory, o: Objective,
                          p: ReferencePotential, rel_tol: float = 1e-6,
                          ch: Channels | None = None) -> ClaimEntry:
    """Trapezoid of <grad f, grad phi*(grad f)> equals f(x0) - f(x(T))."""
    if traj.kind == "discrete":
        return not_applicable("energy-identity")
    ch = ch or compute_channels(traj, o, p)
    quad = float(np.trapz(ch.energy, ch.times))
    drop = float(ch.f[0] - ch.f[-1])
    margin = abs(quad - drop) / max(abs(drop), 1e-12)
    return entry_from_margin("energy-identity", margin, rel_tol,
                             traj.t_final)


def check_l2_bound(traj: Trajectory, o: Objective, p: ReferencePotential,
                   slack: float = 1e-8,
                   ch: Channels | None = None) -> ClaimEntry:
    """Trapezoid of ||xdot||^2 over the horizon <= (f(x0) - f_star)/mu_phi."""
    if traj.kind == "discrete" or o.f_star is None:
        return not_applicable("l2-bound")
    ch = ch or compute_channels(traj, o, p)
    quad = float(np.trapz(ch.xdot_norm ** 2, ch.times))
    bound = float(ch.f_gap[0]) / p.mu_phi
    return entry_from_margin("l2-bound", quad - bound, slack, traj.t_final)


def check_velocity_vanishes(traj: Trajectory, o: Objective,
                            p: ReferencePotential, mu: float | None,
                            threshold: float = 1e-6,
                            ch: Channels | None = None) -> ClaimEntry:
    """||xdot(t_end)|| below threshold where the exponential estimate
    predicts it: sqrt(2 L gap0 exp(-mu T))/mu_phi <= threshold, with L
    the Hessian norm at the minimizer.
    """
    applicable = (traj.kind == "flow" and mu is not None and mu > 0
                  and o.minimizer is not None and o.f_star is not None
                  and traj.terminal_reason in (HORIZON, VELOCITY_TOL))
    if not applicable:
        return not_applicable("velocity-vanishes")
    ch = ch or compute_channels(traj, o, p)
    gap0 = float(ch.f_gap[0])
    L = float(np.linalg.norm(o.hessian(o.minimizer), 2))
    predicted = math.sqrt(2.0 * L * gap0 * math.exp(-mu * traj.t_final)) \
        / p.mu_phi
    if predicted > threshold:
        return not_applicable("velocity-vanishes")
    measured = float(ch.xdot_norm[-1])
    return entry_from_margin("velocity-vanishes", measured, threshold,
                             traj.t_final)


# --- anisotropic gradient-dominance estimation ------------------------------


@dataclass(frozen=True)
class MuSampleSpec:
    """Rejection sampling of the sublevel set {f <= f(x0)} from a box."""

    x0: np.ndarray
    count: int = 200
    radius: float | None = None     # box half-width; default from x0
    seed: int = 0
    degenerate_gap: float = 1e-12


def estimate_aniso_mu(o: Objective, p: ReferencePotential,
                      spec: MuSampleSpec) -> float:
    """Sampled lower constant for phi(grad phi*(grad f(x))) >= mu (f - f_star).

    Returns the minimum ratio over accepted samples, skipping points
    with a degenerate gap.  Raises ValueError when every sample is
    degenerate or the objective lacks f_star.
    """
    if o.f_star is None:
        raise ValueError("estimate_aniso_mu needs a known f_star")
    x0 = np.asarray(spec.x0, dtype=float)
    center = o.minimizer if o.minimizer is not None else x0
    radius = spec.radius
    if radius is None:
        radius = 2.0 * max(1.0, float(np.linalg.norm(x0 - center)))
    level = o.f(x0)

    rng = np.random.default_rng(spec.seed)
    best = math.inf
    accepted = 0
    for _ in range(200 * spec.count):
        x = center + rng.uniform(-radius, radius, size=o.dimension)
        if o.f(x) > level:
            continue
        gap = o.f(x) - o.f_star
        accepted += 1
        if gap < spec.degenerate_gap:
            continue
        g = o.grad(x)
        ratio = p.phi(p.grad_conjugate(g)) / gap
        best = min(best, ratio)
        if accepted >= spec.count:
            break
    if not math.isfinite(best):
        raise ValueError("all samples degenerate: cannot estimate mu")
    return float(max(best, 0.0))


# --- suite aggregation -------------------------------------------------------


@dataclass
class SuiteOptions:
    claims: tuple = CLAIM_IDS
    mu: float | None = None          # None: estimate when possible
    decrease_tol: float = 1e-5
    energy_rel_tol: float = 1e-6
    l2_slack: float = 1e-8
    velocity_threshold: float = 1e-6
    mu_seed: int = 0
    config_hash: str | None = None


def _resolve_mu(traj: Trajectory, o: Objective, p: ReferencePotential,
                options: SuiteOptions) -> float | None:
    if options.mu is not None:
        return options.mu
    if not (o.is_strictly_convex and o.f_star is not None):
        return None
    try:
        est = estimate_aniso_mu(
            o, p, MuSampleSpec(x0=traj.x0, seed=options.mu_seed))
    except ValueError:
        return None
    # Small guard against sampling optimism.
    return max(est - 1e-6, 0.0)


def run_certificate_suite(traj: Trajectory, o: Objective,
                          p: ReferencePotential,
                          options: SuiteOptions | None = None
                          ) -> CertificateReport:
    """Evaluate the requested claims along one trajectory.

    Emits one entry per requested claim in catalog order; hypotheses
    that fail (nonconvexity, missing ground truth, discrete-only
    restrictions) yield not-applicable entries.  Pure function of its
    inputs: identical inputs produce identical reports.
    """
    options = options or SuiteOptions()
    unknown = set(options.claims) - set(CLAIM_IDS)
    if unknown:
        raise ValueError(f"unknown claim id(s): {sorted(unknown)}")
    ch = compute_channels(traj, o, p)
    mu = _resolve_mu(traj, o, p, options)

    entries: dict[str, ClaimEntry] = {}

    def put(entry: ClaimEntry) -> None:
        entries[entry.claim_id] = entry

    want = set(options.claims)
    if "decrease-identity" in want:
        put(check_decrease_identity(traj, o, p, options.decrease_tol, ch))
    if "conj-grad-decrease" in want:
        put(check_conj_gradient_decrease(traj, o, p, ch))
    if {"V-monotone", "rate-1-over-t"} & want:
        ev, er = check_V_monotone_and_rate(traj, o, p, ch)
        put(ev)
        put(er)
    if {"fejer-grad", "fejer-dist"} & want:
        eg, ed = check_fejer(traj, o, p, ch)
        put(eg)
        put(ed)
    if "gap-rate" in want:
        put(check_gap_rate(traj, o, p, ch))
    if "exp-rate" in want:
        if mu is None:
            put(not_applicable("exp-rate"))
        else:
            put(check_exponential_rate(traj, o, p, mu, ch))
    if "energy-identity" in want:
        put(check_energy_identity(traj, o, p, options.energy_rel_tol, ch))
    if "l2-bound" in want:
        put(check_l2_bound(traj, o, p, options.l2_slack, ch))
    if "velocity-vanishes" in want:
        put(check_velocity_vanishes(traj, o, p, mu,
                                    options.velocity_threshold, ch))

    if traj.kind == "discrete":
        for cid in list(entries):
            if cid not in DISCRETE_CLAIMS:
                entries[cid] = not_applicable(cid)

    report = CertificateReport(provenance={
        "trajectory_id": traj.trajectory_id,
        "objective_dim": str(o.dimension),
        "potential": p.family_id,
        "mu_used": repr(mu) if mu is not None else "none",
    })
    if options.config_hash is not None:
        report.provenance["config_hash"] = options.config_hash
    for cid in CLAIM_IDS:
        if cid in entries:
            report.add(entries[cid])
    return report
