"""Moreau envelopes, proximal maps, and mollifier smoothing of phi2.

The regularization engine behind the homotopy integration mode: the
envelope of the ball-truncated phi1 supplies a C1 surrogate gradient
(x - prox(x)) / lambda, and phi2 is smoothed by convolution with a
compactly supported bump.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import OutsideLocalization, RegionViolation, SolverDivergence
from .problem import ObjectiveSplit, Point, as_point

log = logging.getLogger(__name__)

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def default_lambda0(c: float, s0: float) -> float:
    """Conservative envelope threshold given the hypomonotonicity constant c
    and the truncation scale s0."""
    return min(1.0 / (4.0 * c + 1.0), s0 / 4.0)


@dataclass(frozen=True, eq=False)
class EnvelopeParams:
    """Envelope parameter and localization of the truncated phi1.

    The truncated function is phi1 + indicator of the closed ball with
    the given center and radius; queries are restricted to the smaller
    concentric ball of radius localization_radius / 9.
    """

    lam: float
    lambda0: float
    localization_center: np.ndarray
    localization_radius: float

    def __post_init__(self):
        object.__setattr__(self, "localization_center", as_point(self.localization_center))
        if not (0.0 < self.lam < self.lambda0):
            raise ValueError("need 0 < lam < lambda0")
        if self.localization_radius <= 0.0:
            raise ValueError("localization_radius must be positive")

    @property
    def query_radius(self) -> float:
        return self.localization_radius / 9.0

    def truncated_value(self, obj: ObjectiveSplit, z: Point) -> float:
        if np.linalg.norm(z - self.localization_center) > self.localization_radius:
            return float("inf")
        return float(obj.phi1_value(z))

    def _check_query(self, x: Point) -> None:
        if np.linalg.norm(x - self.localization_center) > self.query_radius:
            raise OutsideLocalization(
                f"query at distance {np.linalg.norm(x - self.localization_center):.3g} "
                f"exceeds {self.query_radius:.3g} from the localization center"
            )


def prox(obj: ObjectiveSplit, params: EnvelopeParams, x) -> Point:
    """Minimizer of z -> phi1bar(z) + |x - z|^2 / (2 lam).

    Uses the closed-form prox when the oracle carries one (composed with
    the ball truncation), otherwise a safeguarded scalar or multistart
    search. Single-valued inside the localization regime.
    """
    x = as_point(x)
    params._check_query(x)
    if obj.phi1_prox is not None:
        z = as_point(obj.phi1_prox(params.lam, x))
        if np.linalg.norm(z - params.localization_center) <= params.localization_radius:
            return z
        log.debug("closed-form prox left the truncation ball; falling back to search")
    if x.shape[0] == 1:
        return _prox_search_1d(obj, params, x)
    return _prox_search_nd(obj, params, x)


def moreau_value(obj: ObjectiveSplit, params: EnvelopeParams, x) -> float:
    """Envelope value phi1bar(prox) + |x - prox|^2 / (2 lam); never above phi1(x)."""
    x = as_point(x)
    z = prox(obj, params, x)
    return params.truncated_value(obj, z) + float(np.dot(x - z, x - z)) / (2.0 * params.lam)


def moreau_grad(obj: ObjectiveSplit, params: EnvelopeParams, x) -> Point:
    """(x - prox(x)) / lam; lies in the sampled d phi1 at the prox point."""
    x = as_point(x)
    return (x - prox(obj, params, x)) / params.lam


def _prox_objective(obj, params, x, z) -> float:
    v = params.truncated_value(obj, z)
    if np.isinf(v):
        return float("inf")
    return v + float(np.dot(x - z, x - z)) / (2.0 * params.lam)


def _prox_search_1d(obj, params, x) -> Point:
    c = float(params.localization_center[0])
    r = params.localization_radius
    lo, hi = c - r, c + r
    # keep the bracket near x: the minimizer is within |x - z| <= sqrt-scale
    span = 4.0 * (abs(float(x[0]) - c) + r / 9.0) + 1.0
    lo = max(lo, float(x[0]) - span)
    hi = min(hi, float(x[0]) + span)
    f = lambda t: _prox_objective(obj, params, x, np.array([t]))
    grid = np.linspace(lo, hi, 257)
    vals = np.array([f(t) for t in grid])
    if not np.any(np.isfinite(vals)):
        raise SolverDivergence("prox search found no finite objective value")
    k = int(np.nanargmin(np.where(np.isfinite(vals), vals, np.nan)))
    a = grid[max(0, k - 1)]
    b = grid[min(len(grid) - 1, k + 1)]
    for _ in range(200):
        if b - a < 1e-13 * (1.0 + abs(a)):
            break
        u = b - GOLDEN * (b - a)
        v = a + GOLDEN * (b - a)
        if f(u) <= f(v):
            b = v
        else:
            a = u
    t = 0.5 * (a + b)
    if not np.isfinite(f(t)):
        raise SolverDivergence("prox refinement left the domain")
    return np.array([t])


def _prox_search_nd(obj, params, x, n_starts: int = 5) -> Point:
    # multistart local pattern descent; not certified outside the
    # single-valuedness regime
    from scipy import optimize

    def penalized(z):
        v = _prox_objective(obj, params, x, z)
        return v if np.isfinite(v) else 1e30 + float(np.dot(z - x, z - x))

    rng = np.random.default_rng(12345)
    starts = [x.copy(), params.localization_center.copy()]
    scale = max(params.lam, 0.1)
    for _ in range(n_starts - len(starts)):
        starts.append(x + scale * rng.normal(size=x.shape))
    best, best_val = None, np.inf
    for s in starts:
        res = optimize.minimize(
            penalized, s, method="Nelder-Mead",
            options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000},
        )
        if res.fun < best_val:
            best, best_val = res.x, res.fun
    if best is None or not np.isfinite(best_val):
        raise SolverDivergence("multistart prox search failed")
    return as_point(best)


# -- mollifier smoothing of phi2 ---------------------------------------------


def _bump(z2: np.ndarray) -> np.ndarray:
    """Unnormalized bump exp(1/(r^2 - 1)) on the open unit ball, 0 outside."""
    out = np.zeros_like(z2)
    inside = z2 < 1.0
    out[inside] = np.exp(1.0 / (z2[inside] - 1.0))
    return out


@dataclass(frozen=True, eq=False)
class MollifierParams:
    """Quadrature setup for convolving phi2 with the scaled unit bump."""

    lam: float
    n_nodes: int = 64
    dimension: int = 1
    normalization: float = 0.0
    mc_samples: int = 20000
    _nodes: np.ndarray = field(default=None, repr=False)
    _weights: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.dimension <= 3:
            t, w = np.polynomial.legendre.leggauss(self.n_nodes)
            grids = np.meshgrid(*([t] * self.dimension), indexing="ij")
            nodes = np.stack([g.ravel() for g in grids], axis=1)
            wgrids = np.meshgrid(*([w] * self.dimension), indexing="ij")
            weights = np.ones(nodes.shape[0])
            for g in wgrids:
                weights *= g.ravel()
        else:
            # Monte Carlo fallback over the unit cube (bump kills the corners)
            rng = np.random.default_rng(2024)
            nodes = rng.uniform(-1.0, 1.0, size=(self.mc_samples, self.dimension))
            weights = np.full(self.mc_samples, 2.0**self.dimension / self.mc_samples)
        object.__setattr__(self, "_nodes", nodes)
        object.__setattr__(self, "_weights", weights)
        if self.normalization <= 0.0:
            z2 = np.einsum("ij,ij->i", nodes, nodes)
            object.__setattr__(self, "normalization", float(self._weights @ _bump(z2)))

    def mass(self) -> float:
        """Quadrature of the normalized mollifier; 1 up to quadrature error."""
        z2 = np.einsum("ij,ij->i", self._nodes, self._nodes)
        return float(self._weights @ _bump(z2)) / self.normalization


def mollify_phi2(
    obj: ObjectiveSplit,
    mparams: MollifierParams,
    x,
    want_gradient: bool = False,
) -> tuple[float, Optional[Point]]:
    """Convolution of phi2 with the scaled bump at x, and optionally its
    gradient via the differentiated kernel.

    Requires the closed lam-ball around x to stay inside the working region.
    """
    x = as_point(x)
    lam = mparams.lam
    if not obj.region.contains_ball(x, lam):
        raise RegionViolation(f"ball of radius {lam} around {x} leaves the region")
    Z = mparams._nodes
    W = mparams._weights
    z2 = np.einsum("ij,ij->i", Z, Z)
    psi = _bump(z2) / mparams.normalization
    pts = x[None, :] - lam * Z
    fvals = np.array([float(obj.phi2_value(p)) for p in pts])
    value = float(W @ (fvals * psi))
    if not want_gradient:
        return value, None
    inside = z2 < 1.0
    gpsi = np.zeros_like(Z)
    gpsi[inside] = (
        _bump(z2[inside])[:, None]
        * (-2.0 * Z[inside] / (z2[inside] - 1.0)[:, None] ** 2)
        / mparams.normalization
    )
    # subtracting phi2(x) removes the O(1) term whose kernel integral only
    # vanishes analytically, not in quadrature
    f0 = float(obj.phi2_value(x))
    grad = (W * (fvals - f0)) @ gpsi / lam
    return value, as_point(grad)
