"""Twice-differentiable, level-bounded test costs with known ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "Objective",
    "make_quadratic",
    "make_quartic",
    "make_rosenbrock",
    "make_objective",
    "grad_fstar",
    "GradInverseError",
    "OBJECTIVE_IDS",
]


class GradInverseError(RuntimeError):
    """Damped Newton failed to invert the gradient map to tolerance."""


@dataclass(frozen=True)
class Objective:
    dimension: int
    f: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    hess_vec: Callable[[np.ndarray, np.ndarray], np.ndarray]
    is_convex: bool
    is_strictly_convex: bool
    is_supercoercive: bool
    f_star: float | None = None
    minimizer: np.ndarray | None = None
    # Closed-form inverse gradient z -> x with grad f(x) = z, when known.
    grad_fstar_closed: Callable[[np.ndarray], np.ndarray] | None = None

    def hessian(self, x: np.ndarray) -> np.ndarray:
        """Materialize the Hessian column-wise from Hessian-vector products."""
        x = np.asarray(x, dtype=float)
        cols = [self.hess_vec(x, e) for e in np.eye(self.dimension)]
        return np.column_stack(cols)


def make_quadratic(A: np.ndarray, b: np.ndarray | None = None) -> Objective:
    """f(x) = 0.5 x'Ax - b'x for symmetric positive-definite A."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or not np.allclose(A, A.T, atol=1e-12):
        raise ValueError("A must be symmetric")
    if np.min(np.linalg.eigvalsh(A)) < 1e-12:
        raise ValueError("A must be positive definite (eigenvalues >= 1e-12)")
    b = np.zeros(n) if b is None else np.asarray(b, dtype=float)
    if b.shape != (n,):
        raise ValueError(f"b must have shape ({n},)")

    minimizer = np.linalg.solve(A, b)
    f_star = float(0.5 * minimizer @ A @ minimizer - b @ minimizer)

    return Objective(
        dimension=n,
        f=lambda x: float(0.5 * x @ A @ x - b @ x),
        grad=lambda x: A @ x - b,
        hess_vec=lambda x, v: A @ v,
        is_convex=True,
        is_strictly_convex=True,
        is_supercoercive=True,
        f_star=f_star,
        minimizer=minimizer,
        grad_fstar_closed=lambda z: np.linalg.solve(A, z + b),
    )


def make_quartic(dim: int = 2) -> Objective:
    """f(x) = ||x||^4: strictly convex and supercoercive, not strongly convex.

    The inverse gradient is left to the numerical path on purpose; it
    exercises the damped Newton solver near the degenerate origin.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")

    def f(x: np.ndarray) -> float:
        s = float(x @ x)
        return s * s

    def grad(x: np.ndarray) -> np.ndarray:
        return 4.0 * float(x @ x) * x

    def hess_vec(x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return 4.0 * float(x @ x) * v + 8.0 * float(x @ v) * x

    return Objective(
        dimension=dim,
        f=f,
        grad=grad,
        hess_vec=hess_vec,
        is_convex=True,
        is_strictly_convex=True,
        is_supercoercive=True,
        f_star=0.0,
        minimizer=np.zeros(dim),
    )


def make_rosenbrock(dim: int) -> Objective:
    """Chained Rosenbrock: nonconvex, level-bounded, minimum at all-ones."""
    if dim < 2:
        raise ValueError("rosenbrock needs dim >= 2")

    def f(x: np.ndarray) -> float:
        return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2
                            + (1.0 - x[:-1]) ** 2))

    def grad(x: np.ndarray) -> np.ndarray:
        g = np.zeros_like(x)
        d = x[1:] - x[:-1] ** 2
        g[:-1] += -400.0 * x[:-1] * d - 2.0 * (1.0 - x[:-1])
        g[1:] += 200.0 * d
        return g

    def hess_vec(x: np.ndarray, v: np.ndarray) -> np.ndarray:
        out = np.zeros_like(v)
        xi, xn = x[:-1], x[1:]
        vi, vn = v[:-1], v[1:]
        out[:-1] += (1200.0 * xi ** 2 - 400.0 * xn + 2.0) * vi - 400.0 * xi * vn
        out[1:] += -400.0 * xi * vi + 200.0 * vn
        return out

    return Objective(
        dimension=dim,
        f=f,
        grad=grad,
        hess_vec=hess_vec,
        is_convex=False,
        is_strictly_convex=False,
        is_supercoercive=True,
        f_star=0.0,
        minimizer=np.ones(dim),
    )


OBJECTIVE_IDS = ("quadratic", "quartic", "rosenbrock")


def make_objective(obj_id: str, params: dict | None = None,
                   dimension: int | None = None) -> Objective:
    """Catalog lookup by string id."""
    params = dict(params or {})
    if obj_id == "quadratic":
        if "A" not in params:
            raise ValueError("quadratic objective needs matrix parameter 'A'")
        A = np.asarray(params.pop("A"), dtype=float)
        b = params.pop("b", None)
        _reject_unknown(params, obj_id)
        o = make_quadratic(A, None if b is None else np.asarray(b, dtype=float))
    elif obj_id == "quartic":
        _reject_unknown(params, obj_id)
        o = make_quartic(dimension if dimension is not None else 2)
    elif obj_id == "rosenbrock":
        _reject_unknown(params, obj_id)
        o = make_rosenbrock(dimension if dimension is not None else 2)
    else:
        raise ValueError(f"unknown objective {obj_id!r}; "
                         f"known: {', '.join(OBJECTIVE_IDS)}")
    if dimension is not None and o.dimension != dimension:
        raise ValueError(f"objective {obj_id!r} has dimension {o.dimension}, "
                         f"config says {dimension}")
    return o


def _reject_unknown(params: dict, obj_id: str) -> None:
    if params:
        raise ValueError(f"unknown parameter(s) {sorted(params)} "
                         f"for objective {obj_id!r}")


def grad_fstar(o: Objective, z: np.ndarray, tol: float = 1e-10,
               max_iter: int = 100) -> np.ndarray:
    """Solve grad f(x) = z, i.e. evaluate grad f*(z).

    Requires a strictly convex, supercoercive objective so the gradient
    map is a bijection.  Uses the closed form when available, otherwise
    damped Newton on x -> grad f(x) - z with backtracking halving on the
    residual norm.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not (o.is_strictly_convex and o.is_supercoercive):
        raise ValueError("grad_fstar needs a strictly convex, "
                         "supercoercive objective")
    z = np.asarray(z, dtype=float)
    if o.grad_fstar_closed is not None:
        return o.grad_fstar_closed(z)

    x = z.astype(float).copy()
    resid = o.grad(x) - z
    rnorm = float(np.linalg.norm(resid))
    for _ in range(max_iter):
        if rnorm <= tol:
            return x
        H = o.hessian(x)
        # Tiny ridge keeps the step defined where the Hessian degenerates
        # (e.g. the quartic at the origin).
        ridge = 1e-12 * (1.0 + float(np.abs(H).max()))
        step = np.linalg.solve(H + ridge * np.eye(o.dimension), -resid)
        t = 1.0
        for _ in range(60):
            x_new = x + t * step
            resid_new = o.grad(x_new) - z
            rnorm_new = float(np.linalg.norm(resid_new))
            if rnorm_new < rnorm:
                break
            t *= 0.5
        else:
            raise GradInverseError(
                f"line search stalled at residual {rnorm:.3e}")
        x, resid, rnorm = x_new, resid_new, rnorm_new
    if rnorm <= tol:
        return x
    raise GradInverseError(
        f"no convergence in {max_iter} iterations (residual {rnorm:.3e})")
