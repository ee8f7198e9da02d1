"""Composite objectives phi = phi1 + phi2 and their first-order oracles.

phi1 is extended-valued (values may be +inf) with a sampled subgradient
oracle and an optional exact prox; phi2 is real-valued and locally
Lipschitz with a sampled Clarke subdifferential. Samples are finite point
sets whose convex hull describes the subdifferential exactly for the 1-D
and polyhedral oracles shipped in the zoo.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import EmptySubdifferential
from .hull import hull_distance, min_norm_point

Point = np.ndarray

#: width of the window around kinks inside which an oracle reports the
#: full hull sample instead of a single branch gradient
KINK_TOL = 1e-9


def as_point(x) -> Point:
    return np.atleast_1d(np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class Region:
    """Open working region: a box or a ball."""

    kind: str
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None
    radius: float = 0.0

    @staticmethod
    def box(lower, upper) -> "Region":
        lo, hi = as_point(lower), as_point(upper)
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise ValueError("box needs lower < upper componentwise")
        return Region(kind="box", lower=lo, upper=hi)

    @staticmethod
    def ball(center, radius: float) -> "Region":
        if radius <= 0:
            raise ValueError("ball needs radius > 0")
        return Region(kind="ball", center=as_point(center), radius=float(radius))

    @property
    def dimension(self) -> int:
        ref = self.lower if self.kind == "box" else self.center
        return int(ref.shape[0])

    def contains(self, x, pad: float = 0.0) -> bool:
        x = as_point(x)
        if self.kind == "box":
            return bool(np.all(x >= self.lower + pad) and np.all(x <= self.upper - pad))
        return bool(np.linalg.norm(x - self.center) <= self.radius - pad)

    def contains_ball(self, x, r: float) -> bool:
        return self.contains(x, pad=r)

    def clip(self, x) -> Point:
        x = as_point(x)
        if self.kind == "box":
            return np.clip(x, self.lower, self.upper)
        dx = x - self.center
        n = np.linalg.norm(dx)
        if n <= self.radius:
            return x.copy()
        return self.center + dx * (self.radius / n)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "box":
            return rng.uniform(self.lower, self.upper, size=(n, self.dimension))
        d = self.dimension
        u = rng.normal(size=(n, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        r = self.radius * rng.uniform(size=(n, 1)) ** (1.0 / d)
        return self.center + u * r


# selection rule kinds
MIN_NORM = "min_norm"
LEXICOGRAPHIC = "lexicographic"
FIXED_INDEX = "fixed_index"
SIGN_BIAS = "sign_bias"


@dataclass(frozen=True)
class SelectionRule:
    """Deterministic rule picking one vector out of a sampled subdifferential.

    min_norm returns the minimum-norm element of the hull of the sampled
    Minkowski sum; sign_bias(s) picks the candidate whose induced descent
    motion is biased toward sign s (the candidate minimizing s * sum(g)).
    """

    kind: str = MIN_NORM
    index: int = 0
    sign: float = 1.0
    tie_tolerance: float = 1e-9

    def __post_init__(self):
        if self.kind not in (MIN_NORM, LEXICOGRAPHIC, FIXED_INDEX, SIGN_BIAS):
            raise ValueError(f"unknown selection rule {self.kind!r}")
        if self.kind == SIGN_BIAS and self.sign not in (-1.0, 1.0):
            object.__setattr__(self, "sign", 1.0 if self.sign >= 0 else -1.0)

    @staticmethod
    def parse(text: str) -> "SelectionRule":
        """Parse CLI spellings: min_norm, lexicographic, fixed_index:2, sign_bias:+."""
        text = text.strip().lower()
        if text in (MIN_NORM, "minnorm"):
            return SelectionRule(MIN_NORM)
        if text in (LEXICOGRAPHIC, "lex"):
            return SelectionRule(LEXICOGRAPHIC)
        if text.startswith(FIXED_INDEX):
            _, _, arg = text.partition(":")
            return SelectionRule(FIXED_INDEX, index=int(arg or 0))
        if text.startswith(SIGN_BIAS):
            _, _, arg = text.partition(":")
            sign = -1.0 if arg.strip() in ("-", "-1", "neg", "minus") else 1.0
            return SelectionRule(SIGN_BIAS, sign=sign)
        raise ValueError(f"cannot parse selection rule {text!r}")

    def spell(self) -> str:
        if self.kind == FIXED_INDEX:
            return f"{FIXED_INDEX}:{self.index}"
        if self.kind == SIGN_BIAS:
            return f"{SIGN_BIAS}:{'+' if self.sign > 0 else '-'}"
        return self.kind

    def apply(self, candidates: np.ndarray) -> Point:
        """Pick one vector from the (n, d) candidate set."""
        C = np.atleast_2d(np.asarray(candidates, dtype=float))
        if C.shape[0] == 0:
            raise EmptySubdifferential("selection over an empty candidate set")
        C = _dedupe(C, self.tie_tolerance)
        if C.shape[0] == 1:
            return C[0].copy()
        if self.kind == MIN_NORM:
            return min_norm_point(C)
        order = np.lexsort(tuple(C[:, k] for k in range(C.shape[1] - 1, -1, -1)))
        C = C[order]
        if self.kind == LEXICOGRAPHIC:
            return C[0].copy()
        if self.kind == FIXED_INDEX:
            return C[self.index % C.shape[0]].copy()
        scores = self.sign * C.sum(axis=1)
        return C[int(np.argmin(scores))].copy()


def _dedupe(C: np.ndarray, tol: float) -> np.ndarray:
    keep: list[np.ndarray] = []
    for row in C:
        if not any(np.linalg.norm(row - k) <= tol for k in keep):
            keep.append(row)
    return np.array(keep)


@dataclass(frozen=True, eq=False)
class ObjectiveSplit:
    """Oracle bundle for a composite objective phi = phi1 + phi2.

    phi1_subgrad / phi2_subgrad return (n, d) arrays sampling the
    respective subdifferentials (hull-exact for the shipped oracles);
    phi1_subgrad may raise EmptySubdifferential outside dom(d phi1).
    phi2_lipschitz_bound(center, radius) bounds |g| for every sampled
    phi2 subgradient on that ball.
    """

    phi1_value: Callable[[Point], float]
    phi1_subgrad: Callable[[Point], np.ndarray]
    phi2_value: Callable[[Point], float]
    phi2_subgrad: Callable[[Point], np.ndarray]
    phi2_lipschitz_bound: Callable[[Point, float], float]
    region: Region
    phi1_prox: Optional[Callable[[float, Point], Point]] = None

    def phi2_subgrad_select(self, x, rule: SelectionRule) -> Point:
        return rule.apply(self.phi2_subgrad(as_point(x)))

    def subgrad_candidates(self, x) -> np.ndarray:
        """Sampled Minkowski sum of the two subdifferentials at x."""
        x = as_point(x)
        g1 = np.atleast_2d(np.asarray(self.phi1_subgrad(x), dtype=float))
        g2 = np.atleast_2d(np.asarray(self.phi2_subgrad(x), dtype=float))
        if g1.shape[0] == 0:
            raise EmptySubdifferential(f"phi1 has no subgradient sample at {x}")
        if g2.shape[0] == 0:
            raise EmptySubdifferential(f"phi2 has no subgradient sample at {x}")
        return (g1[:, None, :] + g2[None, :, :]).reshape(-1, x.shape[0])


def eval_phi(obj: ObjectiveSplit, x) -> float:
    """phi1(x) + phi2(x); +inf propagates from phi1."""
    x = as_point(x)
    v1 = float(obj.phi1_value(x))
    if np.isinf(v1):
        return float("inf")
    return v1 + float(obj.phi2_value(x))


def subgrad_select(obj: ObjectiveSplit, x, rule: SelectionRule) -> Point:
    """One element of the sampled (d phi1 + d phi2)(x), chosen by the rule."""
    return rule.apply(obj.subgrad_candidates(x))


def stationarity_residual(obj: ObjectiveSplit, x) -> float:
    """dist(0; conv(sampled d phi1(x) + sampled d phi2(x)))."""
    return hull_distance(obj.subgrad_candidates(x))


@dataclass(frozen=True, eq=False)
class PlrCertificate:
    """Sampled hypomonotonicity certificate for phi1 on a ball.

    c_estimate is the smallest c >= 0 such that every sampled pair
    (x1, z1), (x2, z2) with zi in d phi1(xi) satisfies
    <z1 - z2, x1 - x2> >= -c (1 + |z1| + |z2|) |x1 - x2|^2.
    """

    center: np.ndarray
    radius: float
    c_estimate: float
    n_pairs: int
    worst_pair: Optional[tuple] = None


def check_plr(
    obj: ObjectiveSplit,
    center,
    radius: float,
    n_pairs: int,
    seed: int = 0,
) -> PlrCertificate:
    """Estimate the hypomonotonicity constant of d phi1 on a ball by sampling."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    if n_pairs < 2:
        raise ValueError("need at least two sample points")
    center = as_point(center)
    d = center.shape[0]
    rng = np.random.default_rng(seed)
    if d == 1:
        xs = center + radius * np.linspace(-1.0, 1.0, n_pairs)[:, None]
    else:
        xs = Region.ball(center, radius).sample(n_pairs, rng)
    pairs: list[tuple[Point, Point]] = []
    for x in xs:
        try:
            for z in np.atleast_2d(obj.phi1_subgrad(x)):
                pairs.append((x, z))
        except EmptySubdifferential:
            continue
    if not pairs:
        raise EmptySubdifferential("no phi1 subgradients found in the ball")
    c_best = 0.0
    worst = None
    for i in range(len(pairs)):
        x1, z1 = pairs[i]
        for j in range(i + 1, len(pairs)):
            x2, z2 = pairs[j]
            dx2 = float(np.dot(x1 - x2, x1 - x2))
            if dx2 == 0.0:
                continue
            inner = float(np.dot(z1 - z2, x1 - x2))
            if inner >= 0.0:
                continue
            c_need = -inner / ((1.0 + np.linalg.norm(z1) + np.linalg.norm(z2)) * dx2)
            if c_need > c_best:
                c_best = c_need
                worst = ((x1.copy(), z1.copy()), (x2.copy(), z2.copy()))
    return PlrCertificate(
        center=center, radius=float(radius), c_estimate=c_best,
        n_pairs=n_pairs, worst_pair=worst,
    )
