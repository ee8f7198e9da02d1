"""Benchmark registry: composite objectives with analytic references.

Each problem bundles oracle closures, an operator, a default start and
integration config, and the reference data (minimizer, expected regime,
rate parameters, certificate declarations) that the verification suite
gates on.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .analysis import KLParams
from .errors import DuplicateName, EmptySubdifferential
from .flow import FlowConfig
from .operators import OperatorSpec, identity_operator, linear_operator, scalar_monotone_operator
from .problem import (
    KINK_TOL,
    ObjectiveSplit,
    Region,
    SelectionRule,
    as_point,
)
from .problem import SIGN_BIAS

SQRT2 = float(np.sqrt(2.0))


# -- phi1 oracle factories -----------------------------------------------------


def _phi1_zero(dim: int) -> dict:
    return dict(
        value=lambda x: 0.0,
        subgrad=lambda x: np.zeros((1, dim)),
        prox=lambda lam, x: x.copy(),
    )


def _phi1_square(dim: int) -> dict:
    return dict(
        value=lambda x: 0.5 * float(x @ x),
        subgrad=lambda x: x[None, :].copy(),
        prox=lambda lam, x: x / (1.0 + lam),
    )


def _phi1_abs(dim: int) -> dict:
    if dim != 1:
        raise ValueError("abs oracle is one-dimensional")

    def subgrad(x):
        t = float(x[0])
        if abs(t) <= KINK_TOL:
            return np.array([[-1.0], [1.0]])
        return np.array([[np.sign(t)]])

    def prox(lam, x):
        t = float(x[0])
        return np.array([np.sign(t) * max(abs(t) - lam, 0.0)])

    return dict(value=lambda x: abs(float(x[0])), subgrad=subgrad, prox=prox)


def _phi1_quartic(dim: int) -> dict:
    if dim != 1:
        raise ValueError("quartic oracle is one-dimensional")

    def prox(lam, x):
        # real root of 4 lam z^3 + z - x = 0 (Cardano, single real root)
        p = 1.0 / (4.0 * lam)
        q = -float(x[0]) / (4.0 * lam)
        disc = np.sqrt(q * q / 4.0 + p**3 / 27.0)
        z = np.cbrt(-q / 2.0 + disc) + np.cbrt(-q / 2.0 - disc)
        return np.array([z])

    return dict(
        value=lambda x: float(x[0]) ** 4,
        subgrad=lambda x: np.array([[4.0 * float(x[0]) ** 3]]),
        prox=prox,
    )


HUBER_DELTA = 0.5
WEAK_CURVATURE = 0.1


def _huber(t: float) -> float:
    a = abs(t)
    return 0.5 * t * t if a <= HUBER_DELTA else HUBER_DELTA * a - 0.5 * HUBER_DELTA**2


def _phi1_huber_weak(dim: int) -> dict:
    """Huber loss minus a small quadratic: weakly convex, single smooth branch."""
    if dim != 1:
        raise ValueError("huber_weak oracle is one-dimensional")

    def value(x):
        t = float(x[0])
        return _huber(t) - WEAK_CURVATURE * t * t

    def grad(t):
        core = t if abs(t) <= HUBER_DELTA else HUBER_DELTA * np.sign(t)
        return core - 2.0 * WEAK_CURVATURE * t

    def prox(lam, x):
        t = float(x[0])
        cands = []
        z1 = t / (lam * (1.0 - 2.0 * WEAK_CURVATURE) + 1.0)
        if abs(z1) <= HUBER_DELTA + 1e-12:
            cands.append(z1)
        denom = 1.0 - 2.0 * WEAK_CURVATURE * lam
        if denom > 1e-9:
            for s in (-1.0, 1.0):
                z2 = (t - HUBER_DELTA * lam * s) / denom
                if s * z2 >= HUBER_DELTA - 1e-12:
                    cands.append(z2)
        cands.extend([HUBER_DELTA, -HUBER_DELTA])
        obj = lambda z: (_huber(z) - WEAK_CURVATURE * z * z) + (t - z) ** 2 / (2.0 * lam)
        best = min(cands, key=obj)
        return np.array([best])

    return dict(
        value=value,
        subgrad=lambda x: np.array([[grad(float(x[0]))]]),
        prox=prox,
    )


BOX_ANCHOR = np.array([1.5, 0.5])
BOX_LO = np.array([0.0, 0.0])
BOX_HI = np.array([1.0, 1.0])


def _phi1_box_quadratic(dim: int) -> dict:
    """Half squared distance to an anchor plus the indicator of a box; the
    anchor sits outside the box so the minimizer lands on a face."""
    if dim != 2:
        raise ValueError("box_quadratic oracle is two-dimensional")

    def value(x):
        if np.any(x < BOX_LO - 1e-12) or np.any(x > BOX_HI + 1e-12):
            return float("inf")
        return 0.5 * float((x - BOX_ANCHOR) @ (x - BOX_ANCHOR))

    def subgrad(x):
        if np.any(x < BOX_LO - KINK_TOL) or np.any(x > BOX_HI + KINK_TOL):
            raise EmptySubdifferential("point outside the box")
        g = x - BOX_ANCHOR
        rays = []
        for i in range(dim):
            if x[i] <= BOX_LO[i] + KINK_TOL:
                rays.append(-np.eye(dim)[i])
            if x[i] >= BOX_HI[i] - KINK_TOL:
                rays.append(np.eye(dim)[i])
        if not rays:
            return g[None, :]
        R = 2.0 * (float(np.linalg.norm(g)) + 1.0)
        combos = [np.zeros(dim)]
        for r in rays:
            combos = combos + [c + R * r for c in combos]
        return np.array([g + c for c in combos])

    def prox(lam, x):
        return np.clip((x + lam * BOX_ANCHOR) / (1.0 + lam), BOX_LO, BOX_HI)

    return dict(value=value, subgrad=subgrad, prox=prox)


PHI1_ORACLES: dict[str, Callable[[int], dict]] = {
    "zero": _phi1_zero,
    "square": _phi1_square,
    "abs": _phi1_abs,
    "quartic": _phi1_quartic,
    "huber_weak": _phi1_huber_weak,
    "box_quadratic": _phi1_box_quadratic,
}


# -- phi2 oracle factories -----------------------------------------------------


def _phi2_zero(dim: int) -> dict:
    return dict(
        value=lambda x: 0.0,
        subgrad=lambda x: np.zeros((1, dim)),
        lipschitz=lambda c, r: 0.0,
    )


def _branch_abs_grad(t: float, center: float) -> np.ndarray:
    if abs(t - center) <= KINK_TOL:
        return np.array([[-1.0], [1.0]])
    return np.array([[np.sign(t - center)]])


def _phi2_two_kink_min(dim: int) -> dict:
    """min(|x - 1|, |x + 1|): the double-well Lipschitz benchmark whose
    descent from the midpoint is genuinely nonunique."""
    if dim != 1:
        raise ValueError("two_kink_min oracle is one-dimensional")

    def value(x):
        t = float(x[0])
        return min(abs(t - 1.0), abs(t + 1.0))

    def subgrad(x):
        t = float(x[0])
        left, right = abs(t + 1.0), abs(t - 1.0)
        if abs(left - right) <= KINK_TOL:
            g = np.vstack([_branch_abs_grad(t, -1.0), _branch_abs_grad(t, 1.0)])
            return np.unique(g, axis=0)
        return _branch_abs_grad(t, -1.0 if left < right else 1.0)

    return dict(value=value, subgrad=subgrad, lipschitz=lambda c, r: 1.0)


def _phi2_scaled_abs(weight: float):
    def factory(dim: int) -> dict:
        if dim != 1:
            raise ValueError("scaled_abs oracle is one-dimensional")

        def subgrad(x):
            t = float(x[0])
            if abs(t) <= KINK_TOL:
                return np.array([[-weight], [weight]])
            return np.array([[weight * np.sign(t)]])

        return dict(
            value=lambda x: weight * abs(float(x[0])),
            subgrad=subgrad,
            lipschitz=lambda c, r: weight,
        )

    return factory


def _phi2_linear(dim: int) -> dict:
    a = np.ones(dim)
    return dict(
        value=lambda x: float(a @ x),
        subgrad=lambda x: a[None, :].copy(),
        lipschitz=lambda c, r: float(np.linalg.norm(a)),
    )


PHI2_ORACLES: dict[str, Callable[[int], dict]] = {
    "zero": _phi2_zero,
    "two_kink_min": _phi2_two_kink_min,
    "scaled_abs_025": _phi2_scaled_abs(0.25),
    "linear_unit": _phi2_linear,
}


def make_objective(phi1_id: str, phi2_id: str, region: Region) -> ObjectiveSplit:
    dim = region.dimension
    if phi1_id not in PHI1_ORACLES:
        raise KeyError(f"unknown phi1 oracle {phi1_id!r}")
    if phi2_id not in PHI2_ORACLES:
        raise KeyError(f"unknown phi2 oracle {phi2_id!r}")
    o1 = PHI1_ORACLES[phi1_id](dim)
    o2 = PHI2_ORACLES[phi2_id](dim)
    return ObjectiveSplit(
        phi1_value=o1["value"],
        phi1_subgrad=o1["subgrad"],
        phi2_value=o2["value"],
        phi2_subgrad=o2["subgrad"],
        phi2_lipschitz_bound=o2["lipschitz"],
        region=region,
        phi1_prox=o1.get("prox"),
    )


def make_operator(op_id: str, dim: int) -> OperatorSpec:
    if op_id == "identity":
        return identity_operator(dim)
    if op_id == "precond_shear":
        return linear_operator([[2.0, 1.0], [0.0, 2.0]], name="precond_shear")
    if op_id == "scalar_monotone":
        return scalar_monotone_operator()
    raise KeyError(f"unknown operator {op_id!r}")


# -- reference data ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Reference:
    """Analytic ground truth for a zoo problem."""

    minimizer: np.ndarray
    regime: str
    alt_minimizers: tuple = ()
    trajectory_id: Optional[str] = None
    alpha_range: Optional[tuple[float, float]] = None
    t_star_range: Optional[tuple[float, float]] = None
    traj_exponent: Optional[float] = None
    value_exponent: Optional[float] = None
    theta: Optional[float] = None
    kl: Optional[KLParams] = None
    subregularity_radius: Optional[float] = None
    kappa_range: Optional[tuple[float, float]] = None
    expect_modulus_growth: bool = False
    phi1_convex: bool = True


@dataclass(frozen=True, eq=False)
class ZooProblem:
    name: str
    phi1_id: str
    phi2_id: str
    operator_id: str
    objective: ObjectiveSplit
    operator: OperatorSpec
    x0_default: np.ndarray
    config: FlowConfig
    reference: Optional[Reference] = None

    @property
    def dimension(self) -> int:
        return self.objective.region.dimension


def _problem(name, phi1, phi2, op, region, x0, cfg, reference) -> ZooProblem:
    return ZooProblem(
        name=name,
        phi1_id=phi1,
        phi2_id=phi2,
        operator_id=op,
        objective=make_objective(phi1, phi2, region),
        operator=make_operator(op, region.dimension),
        x0_default=as_point(x0),
        config=cfg,
        reference=reference,
    )


def builtin_registry() -> dict[str, ZooProblem]:
    box2 = Region.box([-3.0, -3.0], [3.0, 3.0])
    box1 = Region.box([-3.0], [3.0])
    problems = [
        _problem(
            "quadratic_newton", "square", "zero", "identity", box2, [1.0, 0.7],
            FlowConfig(step_h=1e-3, t_end=16.0),
            Reference(
                minimizer=np.zeros(2), regime="exponential",
                trajectory_id="exp_decay", alpha_range=(0.95, 1.05),
                kl=KLParams(theta=0.5, M=SQRT2, eta=0.5),
                subregularity_radius=0.5, kappa_range=(0.999, 1.001),
            ),
        ),
        _problem(
            "quadratic_precond", "square", "zero", "precond_shear", box2, [1.0, 0.7],
            FlowConfig(step_h=1e-3, t_end=36.0),
            Reference(
                minimizer=np.zeros(2), regime="exponential",
                alpha_range=(0.35, 0.55),
                kl=KLParams(theta=0.5, M=SQRT2, eta=0.5),
                subregularity_radius=0.5, kappa_range=(0.999, 1.001),
            ),
        ),
        _problem(
            "abs_value", "abs", "zero", "identity", box1, [1.0],
            FlowConfig(step_h=1e-3, t_end=2.0),
            Reference(
                minimizer=np.zeros(1), regime="finite_time",
                trajectory_id="abs_ramp", t_star_range=(1.0 - 2e-3, 1.0 + 2e-3),
                kl=KLParams(theta=0.0, M=1.0, eta=0.5),
                subregularity_radius=0.5, kappa_range=(0.499, 0.501),
            ),
        ),
        _problem(
            "quartic", "quartic", "zero", "identity", box1, [1.0],
            FlowConfig(step_h=0.1, t_end=1e4),
            Reference(
                minimizer=np.zeros(1), regime="polynomial",
                trajectory_id="quartic_power",
                traj_exponent=-0.5, value_exponent=-2.0, theta=0.75,
                kl=KLParams(theta=0.75, M=1.05, eta=0.5),
                expect_modulus_growth=True,
            ),
        ),
        _problem(
            "nonunique_min", "zero", "two_kink_min", "identity", box1, [0.0],
            FlowConfig(step_h=1e-3, t_end=2.0,
                       selection=SelectionRule(SIGN_BIAS, sign=1.0)),
            Reference(
                minimizer=np.array([1.0]), alt_minimizers=(np.array([-1.0]),),
                regime="finite_time", trajectory_id="nonunique_ramp",
                t_star_range=(1.0 - 2e-3, 1.0 + 2e-3),
                kl=KLParams(theta=0.0, M=1.0, eta=0.5),
                subregularity_radius=0.4, kappa_range=(0.399, 0.401),
            ),
        ),
        _problem(
            "huber_composite", "huber_weak", "scaled_abs_025", "identity", box1, [1.0],
            FlowConfig(step_h=1e-3, t_end=3.0),
            Reference(
                minimizer=np.zeros(1), regime="finite_time",
                t_star_range=(1.9, 2.15),
                kl=KLParams(theta=0.0, M=4.0, eta=0.15),
                subregularity_radius=0.3, kappa_range=(0.45, 0.75),
                phi1_convex=False,
            ),
        ),
        _problem(
            "constrained_box", "box_quadratic", "zero", "identity",
            Region.box([-0.5, -0.5], [2.0, 2.0]), [0.2, 0.9],
            FlowConfig(step_h=1e-3, t_end=15.0),
            Reference(
                minimizer=np.array([1.0, 0.5]), regime="exponential",
                alpha_range=(0.9, 1.1),
                kl=KLParams(theta=0.5, M=SQRT2 * 1.05, eta=0.04),
                subregularity_radius=0.05, kappa_range=(0.9, 1.3),
            ),
        ),
    ]
    registry: dict[str, ZooProblem] = {}
    for p in problems:
        if p.name in registry:
            raise DuplicateName(p.name)
        registry[p.name] = p
    return registry


def zoo_list(registry: Optional[dict[str, ZooProblem]] = None) -> list[dict]:
    """Catalog rows: name, dimension, expected regime."""
    registry = builtin_registry() if registry is None else registry
    return [
        {
            "name": p.name,
            "dimension": p.dimension,
            "regime": p.reference.regime if p.reference else "-",
            "operator": p.operator.name,
        }
        for p in registry.values()
    ]


def get_problem(name: str, registry: Optional[dict[str, ZooProblem]] = None) -> ZooProblem:
    registry = builtin_registry() if registry is None else registry
    if name not in registry:
        raise KeyError(f"unknown problem {name!r}; see the catalog")
    return registry[name]
