"""The preconditioning map F: evaluation, graphical derivative probes, and
the contraction-based local inverse used by the semi-implicit integrator."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import (
    DegenerateCoefficient,
    MaxIterations,
    NonConvergentLimit,
    SolverDivergence,
)
from .problem import Point, Region, as_point


@dataclass(frozen=True, eq=False)
class OperatorSpec:
    """Single-valued locally Lipschitz map with monotonicity constants.

    rho is the lower-definiteness modulus of the directional derivative
    (<v, DF(x)(v)> >= rho |v|^2 on the working region); lipschitz bounds
    the local slope. An optional closed-form inverse short-circuits the
    contraction solver.
    """

    name: str
    eval: Callable[[Point], Point]
    rho: float
    lipschitz: Optional[float] = None
    directional: Optional[Callable[[Point, Point], Point]] = None
    inverse: Optional[Callable[[Point], Point]] = None

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.lipschitz is not None and self.lipschitz < self.rho:
            raise ValueError("need rho <= lipschitz")

    def __call__(self, x) -> Point:
        return as_point(self.eval(as_point(x)))


def graph_derivative(
    op: OperatorSpec,
    x,
    v,
    h0: float = 1e-4,
    return_confidence: bool = False,
):
    """Directional derivative DF(x)(v).

    Uses the analytic oracle when present, otherwise the one-sided
    difference limit (F(x + t v) - F(x)) / t extrapolated over
    t in {h0, h0/2, h0/4}; the deviation between the two finest
    extrapolants is the reported confidence.
    """
    x, v = as_point(x), as_point(v)
    if op.directional is not None:
        d = as_point(op.directional(x, v))
        return (d, 0.0) if return_confidence else d
    f0 = op(x)
    quots = [(op(x + t * v) - f0) / t for t in (h0, h0 / 2.0, h0 / 4.0)]
    e0 = 2.0 * quots[1] - quots[0]
    e1 = 2.0 * quots[2] - quots[1]
    confidence = float(np.linalg.norm(e1 - e0))
    if confidence > 1e-4 * (1.0 + float(np.linalg.norm(v))):
        raise NonConvergentLimit(
            f"difference quotients at {x} along {v} deviate by {confidence:.3g}"
        )
    d = (4.0 * e1 - e0) / 3.0
    return (d, confidence) if return_confidence else d


def lower_definite_probe(
    op: OperatorSpec,
    region: Region,
    n_samples: int,
    seed: int = 0,
    polish: bool = True,
) -> float:
    """min over sampled (x, unit v) of <v, DF(x)(v)>.

    A positive value certifies sampled lower-definiteness with that
    modulus on the probed region; the certificate says nothing beyond
    the sampled set.
    """
    if n_samples < 1:
        raise ValueError("need n_samples >= 1")
    rng = np.random.default_rng(seed)
    d = region.dimension
    xs = region.sample(n_samples, rng)
    vs = rng.normal(size=(n_samples, d))
    vs /= np.linalg.norm(vs, axis=1, keepdims=True)
    # include axis directions so coordinate-aligned minima are hit exactly
    extra_v = np.vstack([np.eye(d), -np.eye(d)])
    best = np.inf
    best_x, best_v = None, None
    for x in xs[: max(1, n_samples // (2 * d) + 1)]:
        for v in extra_v:
            val = float(v @ graph_derivative(op, x, v))
            if val < best:
                best, best_x, best_v = val, x, v
    for x, v in zip(xs, vs):
        val = float(v @ graph_derivative(op, x, v))
        if val < best:
            best, best_x, best_v = val, x, v
    if not polish:
        return best

    from scipy import optimize

    def rayleigh(z):
        xz = region.clip(z[:d])
        w = z[d:]
        nw = np.linalg.norm(w)
        if nw < 1e-12:
            return best + 1.0
        vhat = w / nw
        return float(vhat @ graph_derivative(op, xz, vhat))

    z0 = np.concatenate([best_x, best_v])
    res = optimize.minimize(
        rayleigh, z0, method="Nelder-Mead",
        options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 8000, "maxfev": 12000},
    )
    return min(best, float(res.fun))


def estimate_lipschitz(
    op: OperatorSpec, center, radius: float, n_pairs: int = 1000, seed: int = 0
) -> float:
    """Max finite-difference slope over sampled pairs, inflated 1.5x."""
    rng = np.random.default_rng(seed)
    c = as_point(center)
    d = c.shape[0]
    xs = Region.ball(c, radius).sample(2 * n_pairs, rng).reshape(n_pairs, 2, d)
    slope = 0.0
    for a, b in xs:
        gap = float(np.linalg.norm(a - b))
        if gap < 1e-12:
            continue
        slope = max(slope, float(np.linalg.norm(op(a) - op(b))) / gap)
    return 1.5 * max(slope, op.rho)


def _newton_step(op: OperatorSpec, z: Point, resid: Point) -> Optional[Point]:
    d = z.shape[0]
    J = np.empty((d, d))
    for i in range(d):
        J[:, i] = graph_derivative(op, z, np.eye(d)[i])
    try:
        return np.linalg.solve(J, -resid)
    except np.linalg.LinAlgError:
        return None


def local_inverse(
    op: OperatorSpec,
    y,
    x_guess,
    tol: float,
    max_iter: int = 100_000,
) -> Point:
    """Solve F(x) = y near x_guess to |F(x) - y| <= tol.

    Closed-form inverse when available; otherwise the fixed step
    z <- z - (rho / L^2) (F(z) - y) of the strongly monotone contraction,
    accelerated by a damped Newton step whenever the directional oracle
    is present and the step actually reduces the residual.
    """
    y, x_guess = as_point(y), as_point(x_guess)
    if op.inverse is not None:
        return as_point(op.inverse(y))
    L = op.lipschitz if op.lipschitz is not None else estimate_lipschitz(
        op, x_guess, max(1.0, float(np.linalg.norm(x_guess)))
    )
    gain = op.rho / (L * L)
    z = x_guess.copy()
    resid = op(z) - y
    best = float(np.linalg.norm(resid))
    stall = 0
    for it in range(max_iter):
        if best <= tol:
            return z
        step = None
        if op.directional is not None:
            step = _newton_step(op, z, resid)
        if step is not None:
            trial = z + step
            r_trial = op(trial) - y
            if float(np.linalg.norm(r_trial)) < best:
                z, resid = trial, r_trial
                nrm = float(np.linalg.norm(resid))
                stall = stall + 1 if nrm >= best else 0
                best = min(best, nrm)
                continue
        z = z - gain * resid
        resid = op(z) - y
        nrm = float(np.linalg.norm(resid))
        stall = stall + 1 if nrm >= best else 0
        if stall >= 10:
            raise SolverDivergence(
                f"residual stalled at {nrm:.3g} after {it + 1} iterations"
            )
        best = min(best, nrm)
    raise MaxIterations(f"no convergence to {tol:.3g} within {max_iter} iterations")


def bound_from_quadratic(A: float, B: float, C: float) -> float:
    """B/A + sqrt(C/A): any real x with A x^2 <= B x + C has |x| below this."""
    if A <= 0.0:
        raise DegenerateCoefficient("leading coefficient must be positive")
    if B < 0.0 or C < 0.0:
        raise ValueError("coefficients must be nonnegative")
    return B / A + float(np.sqrt(C / A))


# -- operator registry --------------------------------------------------------


def identity_operator(dim: int) -> OperatorSpec:
    return OperatorSpec(
        name=f"identity({dim})",
        eval=lambda x: x,
        rho=1.0,
        lipschitz=1.0,
        directional=lambda x, v: v,
        inverse=lambda y: y,
    )


def linear_operator(matrix, name: Optional[str] = None) -> OperatorSpec:
    A = np.atleast_2d(np.asarray(matrix, dtype=float))
    sym = 0.5 * (A + A.T)
    rho = float(np.min(np.linalg.eigvalsh(sym)))
    if rho <= 0:
        raise ValueError("matrix must be positive definite in the symmetric part")
    return OperatorSpec(
        name=name or f"linear({A.shape[0]}x{A.shape[1]})",
        eval=lambda x: A @ x,
        rho=rho,
        lipschitz=float(np.linalg.norm(A, 2)),
        directional=lambda x, v: A @ v,
        inverse=lambda y: np.linalg.solve(A, y),
    )


def gradient_operator(matrix) -> OperatorSpec:
    """F = grad of the quadratic x -> x^T Q x / 2 (Q symmetric PD)."""
    return linear_operator(matrix, name="grad_quadratic")


def scalar_monotone_operator() -> OperatorSpec:
    """F(x) = x + 0.5 sin x, the scalar nonlinear monotone benchmark."""
    return OperatorSpec(
        name="scalar_monotone",
        eval=lambda x: x + 0.5 * np.sin(x),
        rho=0.5,
        lipschitz=1.5,
        directional=lambda x, v: (1.0 + 0.5 * np.cos(x)) * v,
    )


OPERATORS: dict[str, Callable[[int], OperatorSpec]] = {
    "identity": identity_operator,
    "scalar_monotone": lambda dim=1: scalar_monotone_operator(),
}
