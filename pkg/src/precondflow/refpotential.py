"""Reference functions phi, their conjugates and preconditioner maps.

A reference function phi is even, nonnegative, strongly convex with
phi(0) = 0; its conjugate gradient grad phi* acts as a nonlinear
preconditioner on gradients.  Every shipped family is isotropic,
phi = h(||.||) for a scalar profile h, which makes the conjugate a 1-D
transform: phi*(y) = h*(||y||) and grad phi*(y) = (h*)'(||y||) y/||y||.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .report import (CertificateReport, ClaimEntry, entry_from_margin,
                     not_applicable)

__all__ = [
    "ScalarProfile",
    "ReferencePotential",
    "SampleSpec",
    "make_isotropic",
    "make_quadratic_potential",
    "make_eps_normalized",
    "make_cosh_clip",
    "make_ball_moreau",
    "make_potential",
    "numeric_conjugate_oracle",
    "verify_pair",
    "POTENTIAL_IDS",
]

# Points within this relative distance of an open domain boundary are
# treated as outside (avoids log-of-zero in the boundary families).
_BOUNDARY_PAD = 1e-12

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ScalarProfile:
    """1-D profile (h, h', h*, (h*)') of an isotropic reference function.

    ``h`` maps s >= 0 to an extended real (math.inf outside dom h);
    ``h_star_prime`` must be increasing on the nonnegative reals.
    """

    h: Callable[[float], float]
    h_prime: Callable[[float], float]
    h_star: Callable[[float], float]
    h_star_prime: Callable[[float], float]


@dataclass(frozen=True)
class ReferencePotential:
    family_id: str
    params: dict
    mu_phi: float
    dom_radius: float           # radius of dom phi; math.inf when unbounded
    dom_open: bool              # True when dom phi is an open ball
    profile: ScalarProfile | None
    ratio_nonincreasing: bool   # (h*)'(r)/r nonincreasing on the checked grid
    # Direct evaluators; for isotropic families these are derived from
    # the profile, but custom (possibly mismatched) pairs may supply them.
    phi_fn: Callable[[np.ndarray], float]
    conjugate_fn: Callable[[np.ndarray], float]
    grad_conjugate_fn: Callable[[np.ndarray], np.ndarray]

    def phi(self, v: np.ndarray) -> float:
        """phi(v); +inf outside dom phi."""
        return self.phi_fn(np.asarray(v, dtype=float))

    def conjugate(self, y: np.ndarray) -> float:
        """phi*(y) = sup_v <y, v> - phi(v); finite everywhere."""
        return self.conjugate_fn(np.asarray(y, dtype=float))

    def grad_conjugate(self, y: np.ndarray) -> np.ndarray:
        """grad phi*(y); equals 0 exactly at y = 0."""
        return self.grad_conjugate_fn(np.asarray(y, dtype=float))

    @property
    def is_isotropic(self) -> bool:
        return self.profile is not None


def make_isotropic(profile: ScalarProfile, mu: float, dom_radius: float,
                   family_id: str = "custom", params: dict | None = None,
                   dom_open: bool = True) -> ReferencePotential:
    """Build the n-dimensional potential phi = h(||.||) from a scalar profile.

    Flags whether (h*)'(r)/r is nonincreasing by scanning a log grid on
    (0, 1e3]; the flag gates the suboptimality-gap rate certificate.
    """
    if mu <= 0:
        raise ValueError(f"strong-convexity modulus must be positive, got {mu}")
    if dom_radius <= 0:
        raise ValueError(f"dom_radius must be positive, got {dom_radius}")

    h, hs, hsp = profile.h, profile.h_star, profile.h_star_prime

    def phi_fn(v: np.ndarray) -> float:
        s = float(np.linalg.norm(v))
        if dom_open and s >= dom_radius * (1.0 - _BOUNDARY_PAD):
            return math.inf
        if not dom_open and s > dom_radius:
            return math.inf
        return h(s)

    def conjugate_fn(y: np.ndarray) -> float:
        return hs(float(np.linalg.norm(y)))

    def grad_conjugate_fn(y: np.ndarray) -> np.ndarray:
        r = float(np.linalg.norm(y))
        if r == 0.0:
            return np.zeros_like(y)
        return (hsp(r) / r) * y

    return ReferencePotential(
        family_id=family_id,
        params=dict(params or {}),
        mu_phi=float(mu),
        dom_radius=float(dom_radius),
        dom_open=dom_open,
        profile=profile,
        ratio_nonincreasing=_ratio_nonincreasing_on_grid(hsp),
        phi_fn=phi_fn,
        conjugate_fn=conjugate_fn,
        grad_conjugate_fn=grad_conjugate_fn,
    )


def _ratio_nonincreasing_on_grid(h_star_prime, r_max: float = 1e3,
                                 n: int = 400, tol: float = 1e-9) -> bool:
    r = np.logspace(-6, math.log10(r_max), n)
    g = np.array([h_star_prime(ri) / ri for ri in r])
    return bool(np.all(np.diff(g) <= tol * (1.0 + np.abs(g[:-1]))))


# --- family catalog -------------------------------------------------------

def make_quadratic_potential(a: float = 1.0) -> ReferencePotential:
    """phi = (a/2)||.||^2; grad phi*(y) = y/a recovers plain gradient flow."""
    if a <= 0:
        raise ValueError(f"scale a must be positive, got {a}")
    profile = ScalarProfile(
        h=lambda s: 0.5 * a * s * s,
        h_prime=lambda s: a * s,
        h_star=lambda r: 0.5 * r * r / a,
        h_star_prime=lambda r: r / a,
    )
    return make_isotropic(profile, mu=a, dom_radius=math.inf,
                          family_id="quadratic", params={"a": a})


def make_eps_normalized(eps: float = 1.0) -> ReferencePotential:
    """phi = -eps(log(1-||x||)+||x||) on the open unit ball.

    grad phi*(y) = y/(||y||+eps): an eps-smoothed normalized gradient map.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    profile = ScalarProfile(
        h=lambda s: math.inf if s >= 1.0 else -eps * (math.log1p(-s) + s),
        h_prime=lambda s: eps * s / (1.0 - s),
        h_star=lambda r: r - eps * math.log1p(r / eps),
        h_star_prime=lambda r: r / (r + eps),
    )
    return make_isotropic(profile, mu=eps, dom_radius=1.0,
                          family_id="eps-normalized", params={"eps": eps})


def make_cosh_clip() -> ReferencePotential:
    """phi = cosh(||.||) - 1; grad phi* rescales by arcsinh (soft clipping)."""
    profile = ScalarProfile(
        h=lambda s: math.cosh(s) - 1.0,
        h_prime=math.sinh,
        h_star=lambda r: r * math.asinh(r) - math.sqrt(1.0 + r * r) + 1.0,
        h_star_prime=math.asinh,
    )
    return make_isotropic(profile, mu=1.0, dom_radius=math.inf,
                          family_id="cosh-clip", params={})


def make_ball_moreau() -> ReferencePotential:
    """phi = 0.5||.||^2 restricted to the closed unit ball.

    grad phi* is the Euclidean projection onto the ball, so the flow's
    velocity (the control input) is hard-constrained to ||u|| <= 1.
    """
    profile = ScalarProfile(
        h=lambda s: math.inf if s > 1.0 else 0.5 * s * s,
        h_prime=lambda s: s,
        h_star=lambda r: 0.5 * r * r if r <= 1.0 else r - 0.5,
        h_star_prime=lambda r: min(r, 1.0),
    )
    return make_isotropic(profile, mu=1.0, dom_radius=1.0, dom_open=False,
                          family_id="ball-moreau", params={})


POTENTIAL_IDS = ("quadratic", "eps-normalized", "cosh-clip", "ball-moreau")


def make_potential(family_id: str, params: dict | None = None) -> ReferencePotential:
    """Catalog lookup by string id with a flat parameter map."""
    params = dict(params or {})
    if family_id == "quadratic":
        return make_quadratic_potential(**_take(params, {"a"}, family_id))
    if family_id == "eps-normalized":
        return make_eps_normalized(**_take(params, {"eps"}, family_id))
    if family_id == "cosh-clip":
        _take(params, set(), family_id)
        return make_cosh_clip()
    if family_id == "ball-moreau":
        _take(params, set(), family_id)
        return make_ball_moreau()
    raise ValueError(f"unknown potential family {family_id!r}; "
                     f"known: {', '.join(POTENTIAL_IDS)}")


def _take(params: dict, allowed: set, family_id: str) -> dict:
    unknown = set(params) - allowed
    if unknown:
        raise ValueError(f"unknown parameter(s) {sorted(unknown)} "
                         f"for potential family {family_id!r}")
    return params


# --- brute-force conjugate oracle ----------------------------------------

def numeric_conjugate_oracle(p: ReferencePotential, y: np.ndarray,
                             tol: float = 1e-10,
                             max_expand: int = 200) -> tuple[float, np.ndarray]:
    """Brute-force phi*(y) for isotropic families.

    Reduces sup_v <y,v> - phi(v) to the 1-D concave problem
    max_{0 <= s < dom_radius} s||y|| - h(s), bracketed by doubling and
    refined by golden-section to interval width ``tol``.  Returns the
    value and the maximizing vector.  Test oracle: independent of the
    closed-form conjugates.
    """
    if p.profile is None:
        raise ValueError("numeric conjugate oracle needs a scalar profile")
    y = np.asarray(y, dtype=float)
    r = float(np.linalg.norm(y))
    if r == 0.0:
        return 0.0, np.zeros_like(y)

    h = p.profile.h

    def psi(s: float) -> float:
        val = h(s)
        return -math.inf if math.isinf(val) else s * r - val

    # Bracket: expand until psi decreases or the domain edge is reached.
    if math.isinf(p.dom_radius):
        hi = 1.0
        for _ in range(max_expand):
            if psi(2.0 * hi) <= psi(hi):
                hi = 2.0 * hi
                break
            hi *= 2.0
        else:
            raise RuntimeError("conjugate oracle failed to bracket the maximum")
    else:
        hi = p.dom_radius if not p.dom_open else p.dom_radius * (1.0 - 2e-12)

    lo = 0.0
    # Golden-section search on the concave 1-D objective.
    c = hi - _GOLDEN * (hi - lo)
    d = lo + _GOLDEN * (hi - lo)
    fc, fd = psi(c), psi(d)
    while hi - lo > tol:
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - _GOLDEN * (hi - lo)
            fc = psi(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _GOLDEN * (hi - lo)
            fd = psi(d)
    s_best = 0.5 * (lo + hi)
    candidates = [(psi(s), s) for s in (0.0, s_best)]
    value, s_star = max(candidates)
    return value, (s_star / r) * y


# --- conjugate-pair verification ------------------------------------------

@dataclass(frozen=True)
class SampleSpec:
    """Deterministic pseudo-random dual samples for pair verification."""

    count: int = 100
    radius: float = 10.0
    seed: int = 0


def verify_pair(p: ReferencePotential, spec: SampleSpec = SampleSpec(),
                dimension: int = 3, fy_tol: float = 1e-8,
                ineq_slack: float = 1e-10) -> CertificateReport:
    """Check the conjugate pair on sampled dual points.

    Per sample y: Fenchel-Young equality residual, evenness of phi*, and
    the range of grad phi* staying inside dom phi.  Per sample pair
    (y, y'): 1/mu_phi-Lipschitz continuity and mu_phi-cocoercivity of
    grad phi*.  The inequalities are exact in real arithmetic, so only a
    small relative slack for rounding is allowed.
    """
    rng = np.random.default_rng(spec.seed)
    ys = rng.uniform(-spec.radius, spec.radius, size=(spec.count, dimension))

    report = CertificateReport(provenance={
        "family": p.family_id,
        "samples": str(spec.count),
        "seed": str(spec.seed),
    })

    # Fenchel-Young equality: phi*(y) + phi(grad phi*(y)) = <y, grad phi*(y)>.
    worst_fy = 0.0
    for y in ys:
        g = p.grad_conjugate(y)
        inner = float(np.dot(y, g))
        resid = abs(p.conjugate(y) + p.phi(g) - inner) / (1.0 + abs(inner))
        worst_fy = max(worst_fy, resid)
    report.add(entry_from_margin("fenchel-young", worst_fy, fy_tol))

    # Evenness through the conjugate: phi*(-y) = phi*(y).
    worst_even = max(
        abs(p.conjugate(-y) - p.conjugate(y)) / (1.0 + abs(p.conjugate(y)))
        for y in ys)
    report.add(entry_from_margin("evenness", worst_even, fy_tol))

    # grad phi*(0) = 0.
    z = np.zeros(dimension)
    report.add(entry_from_margin(
        "zero-fixed-point", float(np.linalg.norm(p.grad_conjugate(z))), 0.0))

    # Range of grad phi* inside dom phi.
    norms = np.array([np.linalg.norm(p.grad_conjugate(y)) for y in ys])
    if math.isinf(p.dom_radius):
        report.add(ClaimEntry("range-in-domain", "pass", 0.0,
                              math.nan, 0.0))
    else:
        excess = float(np.max(norms) - p.dom_radius)
        # Strict inequality for open domains; rounding slack for closed ones.
        tol = 0.0 if p.dom_open else ineq_slack
        report.add(entry_from_margin("range-in-domain", excess, tol))

    # Pairwise Lipschitz and cocoercivity.
    lip = 1.0 / p.mu_phi
    worst_lip = -math.inf
    worst_coco = -math.inf
    gs = [p.grad_conjugate(y) for y in ys]
    for i in range(len(ys) - 1):
        dy = ys[i + 1] - ys[i]
        dg = gs[i + 1] - gs[i]
        ndy = float(np.linalg.norm(dy))
        ndg = float(np.linalg.norm(dg))
        if ndy == 0.0:
            continue
        worst_lip = max(worst_lip, (ndg - lip * ndy) / (lip * ndy))
        coco_gap = p.mu_phi * ndg * ndg - float(np.dot(dg, dy))
        worst_coco = max(worst_coco, coco_gap / (1.0 + ndy * ndg))
    report.add(entry_from_margin("lipschitz", worst_lip, ineq_slack))
    report.add(entry_from_margin("cocoercivity", worst_coco, ineq_slack))

    # Closed-form conjugate against the brute-force oracle (isotropic only).
    if p.is_isotropic:
        worst_oracle = 0.0
        for y in ys[: min(20, len(ys))]:
            val, _ = numeric_conjugate_oracle(p, y)
            worst_oracle = max(
                worst_oracle,
                abs(val - p.conjugate(y)) / (1.0 + abs(val)))
        report.add(entry_from_margin("oracle-match", worst_oracle, fy_tol))
    else:
        report.add(not_applicable("oracle-match"))

    return report
