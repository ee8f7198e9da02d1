"""Semi-implicit integration of the descent inclusion driven by F.

Each step solves F(x_{k+1}) = F(x_k) - h v_k with v_k one selected element
of the sampled (d phi1 + d phi2)(x_k): implicit in F, explicit in the
subgradient. The scheme discretizes the integral identity
F(x(t)) = F(x_0) - int (v1 + v2) ds directly, so the cumulative residual
of that identity is a per-run certificate, and strong monotonicity of F
makes rho h |dx/h|^2 <= -<v_k, dx> an exact per-step energy certificate.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, EnergyViolation, RegionExit
from .hull import hull_distance
from .operators import OperatorSpec, local_inverse
from .problem import (
    ObjectiveSplit,
    Point,
    SelectionRule,
    as_point,
    eval_phi,
    subgrad_select,
)
from .smoothing import EnvelopeParams, MollifierParams, mollify_phi2, moreau_grad, moreau_value

DIRECT = "direct"
HOMOTOPY = "homotopy"

# node event flags (bitmask, CSV column event_flag)
EVENT_NONE = 0
EVENT_CROSSING = 1
EVENT_HALVED = 2
EVENT_STATIONARY = 4


@dataclass(frozen=True)
class FlowConfig:
    """Integration parameters.

    energy_slack is the per-step allowance of the discrete energy check
    before the step is halved; max_halvings caps the halving cascade.
    In homotopy mode the subgradient selection is replaced stage by stage
    with the smoothed gradient at each value of lambda_schedule.
    """

    step_h: float = 1e-3
    t_end: float = 5.0
    selection: SelectionRule = field(default_factory=SelectionRule)
    mode: str = DIRECT
    lambda_schedule: Optional[tuple[float, ...]] = None
    inverse_tol: float = 1e-12
    energy_slack: float = 1e-9
    max_halvings: int = 40
    seed: int = 0

    def __post_init__(self):
        if self.step_h <= 0:
            raise ConfigError("step_h must be positive")
        if self.t_end <= 0:
            raise ConfigError("t_end must be positive")
        if self.step_h > self.t_end:
            raise ConfigError("step_h must not exceed t_end")
        if self.mode not in (DIRECT, HOMOTOPY):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.inverse_tol <= 0:
            raise ConfigError("inverse_tol must be positive")
        if self.energy_slack < 0:
            raise ConfigError("energy_slack must be nonnegative")
        if self.max_halvings < 0:
            raise ConfigError("max_halvings must be nonnegative")
        if self.lambda_schedule is not None:
            lams = tuple(float(l) for l in self.lambda_schedule)
            if any(l <= 0 for l in lams) or any(b >= a for a, b in zip(lams, lams[1:])):
                raise ConfigError("lambda_schedule must be a decreasing positive sequence")
            object.__setattr__(self, "lambda_schedule", lams)

    def validate_against(self, rho: float) -> None:
        if self.inverse_tol >= self.step_h * rho:
            raise ConfigError(
                f"inverse_tol {self.inverse_tol:g} must stay below step_h*rho = "
                f"{self.step_h * rho:g}"
            )

    def as_dict(self) -> dict:
        return {
            "step_h": self.step_h,
            "t_end": self.t_end,
            "selection": self.selection.spell(),
            "mode": self.mode,
            "lambda_schedule": list(self.lambda_schedule) if self.lambda_schedule else None,
            "inverse_tol": self.inverse_tol,
            "energy_slack": self.energy_slack,
            "max_halvings": self.max_halvings,
            "seed": self.seed,
        }


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Recorded run: node times, states, selections, and diagnostics.

    energy carries the literal bookkeeping rho * sum_j h_j |dx_j/h_j|^2
    + phi(x_k); integral_residuals tracks |F(x_k) - F(x_0) + sum h_j v_j|.
    """

    times: np.ndarray
    states: np.ndarray
    selections: np.ndarray
    phi_values: np.ndarray
    energy: np.ndarray
    integral_residuals: np.ndarray
    events: np.ndarray

    @property
    def dimension(self) -> int:
        return self.states.shape[1]

    @property
    def n_steps(self) -> int:
        return self.states.shape[0] - 1

    def step_sizes(self) -> np.ndarray:
        return np.diff(self.times)

    def deltas(self) -> np.ndarray:
        return np.diff(self.states, axis=0)

    def kinetic_terms(self, rho: float) -> np.ndarray:
        """Per-step rho * h |dx/h|^2."""
        h = self.step_sizes()
        d2 = np.einsum("ij,ij->i", self.deltas(), self.deltas())
        return rho * d2 / h

    def work_corrections(self) -> np.ndarray:
        """Per-step max(0, -<v_k, dx_k> - (phi_k - phi_{k+1})): the gap between
        the scheme-exact work form of the energy inequality and the phi form."""
        dx = self.deltas()
        work = -np.einsum("ij,ij->i", self.selections[:-1], dx)
        drop = self.phi_values[:-1] - self.phi_values[1:]
        return np.maximum(0.0, work - drop)


def step(op: OperatorSpec, obj: ObjectiveSplit, x_k, h: float, cfg: FlowConfig) -> Point:
    """One semi-implicit step: x_{k+1} solves F(x) = F(x_k) - h v_k."""
    x_k = as_point(x_k)
    v = subgrad_select(obj, x_k, cfg.selection)
    x_new = local_inverse(op, op(x_k) - h * v, x_k, cfg.inverse_tol)
    if not obj.region.contains(x_new):
        raise RegionExit(f"step left the working region at {x_new}")
    return x_new


class _Recorder:
    def __init__(self, x0: Point, v0: Point, phi0: float):
        self.times = [0.0]
        self.states = [x0.copy()]
        self.selections = [v0.copy()]
        self.phi = [phi0]
        self.energy = [phi0]
        self.resid = [0.0]
        self.events = [EVENT_NONE]
        self.kinetic = 0.0

    def push(self, t, x, v, phi, resid, event):
        self.times.append(t)
        self.states.append(x.copy())
        self.selections.append(v.copy())
        self.phi.append(phi)
        self.energy.append(self.kinetic + phi)
        self.resid.append(resid)
        self.events.append(event)

    def build(self) -> Trajectory:
        return Trajectory(
            times=np.array(self.times),
            states=np.array(self.states),
            selections=np.array(self.selections),
            phi_values=np.array(self.phi),
            energy=np.array(self.energy),
            integral_residuals=np.array(self.resid),
            events=np.array(self.events, dtype=int),
        )


def integrate(
    op: OperatorSpec,
    obj: ObjectiveSplit,
    x0,
    cfg: FlowConfig,
    envelope: Optional[EnvelopeParams] = None,
) -> Trajectory:
    """Run the flow from x0 to t_end under the configured mode.

    Direct mode selects subgradients by cfg.selection; homotopy mode
    integrates the smoothed system for each lambda in the schedule
    (all stages from x0, mirroring the vanishing-smoothing construction)
    and returns the smallest-lambda trajectory.
    """
    x0 = as_point(x0)
    cfg.validate_against(op.rho)
    if not obj.region.contains(x0):
        raise RegionExit("x0 outside the working region")
    if not np.isfinite(eval_phi(obj, x0)):
        raise ConfigError("x0 outside dom(phi)")
    if cfg.mode == DIRECT:
        return _integrate_direct(op, obj, x0, cfg)
    return _integrate_homotopy(op, obj, x0, cfg, envelope)


def _integrate_direct(op, obj, x0, cfg) -> Trajectory:
    rule = cfg.selection
    stop_tol = max(rule.tie_tolerance, 1e-12)

    def select(x):
        return subgrad_select(obj, x, rule)

    def hull_gap(x):
        return hull_distance(obj.subgrad_candidates(x))

    return _march(op, obj, x0, cfg, select, eval_phi=lambda x: eval_phi(obj, x),
                  hull_gap=hull_gap, stop_tol=stop_tol)


def _integrate_homotopy(op, obj, x0, cfg, envelope) -> Trajectory:
    from .problem import check_plr
    from .smoothing import default_lambda0

    if envelope is None:
        span = _region_span(obj.region)
        radius = 18.0 * max(1.0, span)
        try:
            c = check_plr(obj, x0, min(1.0, span / 2.0), 16).c_estimate
        except Exception:
            c = 0.0
        lam0 = min(default_lambda0(c, 2.0 * radius), 0.25 * _region_pad(obj.region, x0))
        envelope = EnvelopeParams(
            lam=lam0 / 2.0, lambda0=lam0,
            localization_center=x0, localization_radius=radius,
        )
    schedule = cfg.lambda_schedule or tuple(
        envelope.lambda0 * 2.0 ** (-j) for j in range(1, 9)
    )

    dim = x0.shape[0]
    traj = None
    for lam in schedule:
        env = replace(envelope, lam=lam)
        moll = MollifierParams(lam=lam, dimension=dim)

        def select(x, env=env, moll=moll):
            g1 = moreau_grad(obj, env, x)
            _, g2 = mollify_phi2(obj, moll, x, want_gradient=True)
            return g1 + g2

        def smooth_value(x, env=env, moll=moll):
            v1 = moreau_value(obj, env, x)
            v2, _ = mollify_phi2(obj, moll, x)
            return v1 + v2

        traj = _march(op, obj, x0, cfg, select, eval_phi=smooth_value,
                      hull_gap=None, stop_tol=1e-14)
    # report the true composite value along the final stage
    phi = np.array([eval_phi(obj, x) for x in traj.states])
    energy = np.concatenate(
        [[phi[0]], phi[1:] + np.cumsum(traj.kinetic_terms(op.rho))]
    )
    return Trajectory(
        times=traj.times, states=traj.states, selections=traj.selections,
        phi_values=phi, energy=energy,
        integral_residuals=traj.integral_residuals, events=traj.events,
    )


def _region_span(region) -> float:
    if region.kind == "box":
        return float(np.max(region.upper - region.lower))
    return 2.0 * region.radius


def _region_pad(region, x) -> float:
    if region.kind == "box":
        return float(min(np.min(x - region.lower), np.min(region.upper - x)))
    return float(region.radius - np.linalg.norm(x - region.center))


def _march(op, obj, x0, cfg, select, eval_phi, hull_gap, stop_tol) -> Trajectory:
    rho = op.rho
    t, x = 0.0, x0.copy()
    phi_x = float(eval_phi(x))
    v = select(x)
    rec = _Recorder(x, v, phi_x)
    F0 = op(x0)
    vsum = np.zeros_like(x0)
    h_next = cfg.step_h
    t_end = cfg.t_end
    eps_t = 1e-12 * t_end

    while t < t_end - eps_t:
        if float(np.linalg.norm(v)) <= stop_tol:
            rec.selections[-1] = np.zeros_like(x)
            _hold_constant(rec, op, x, v, phi_x, t, t_end, cfg.step_h, F0, vsum)
            break
        h_try = min(h_next, t_end - t)
        halvings = 0
        event = EVENT_NONE
        at_stationary: Optional[bool] = None
        while True:
            x_new = local_inverse(op, op(x) - h_try * v, x, cfg.inverse_tol)
            phi_new = float(eval_phi(x_new))
            dx = x_new - x
            lhs = rho * float(np.dot(dx, dx)) / h_try
            drop = phi_x - phi_new
            work = -float(np.dot(v, dx))
            if drop >= -cfg.energy_slack and lhs <= max(drop, work) + cfg.energy_slack:
                break
            # a selection blocked at a sampled stationary point would creep
            # against the kink in slack-sized steps forever: hold instead
            if halvings >= 3 and hull_gap is not None:
                if at_stationary is None:
                    at_stationary = hull_gap(x) <= stop_tol
                if at_stationary:
                    # the hold continues with the zero selection; the node's
                    # recorded selection must match for the integral identity
                    v = np.zeros_like(x)
                    rec.selections[-1] = v.copy()
                    _hold_constant(rec, op, x, v, phi_x, t, t_end, cfg.step_h, F0, vsum)
                    return rec.build()
            if halvings >= cfg.max_halvings:
                raise EnergyViolation(
                    f"energy inequality failed at t={t:.6g} after "
                    f"{cfg.max_halvings} halvings (deficit {lhs - max(drop, work):.3g})"
                )
            h_try *= 0.5
            halvings += 1
            event |= EVENT_HALVED
        if not obj.region.contains(x_new):
            raise RegionExit(f"trajectory left the region at t={t + h_try:.6g}")
        v_new = select(x_new)
        # a kink crossing is a JUMP in the selection: large against both the
        # local selection scale and the smooth drift O(|dx|) of the step
        dv = float(np.linalg.norm(v_new - v))
        crossing = (
            dv > 0.5 * (float(np.linalg.norm(v)) + float(np.linalg.norm(v_new))) + 1e-9
            and dv > 20.0 * float(np.linalg.norm(dx))
        )
        if crossing:
            event |= EVENT_CROSSING
            h_next = max(h_try * 0.5, cfg.step_h * 2.0 ** (-cfg.max_halvings))
        else:
            h_next = min(cfg.step_h, h_try * 2.0)
        t += h_try
        vsum = vsum + h_try * v
        rec.kinetic += rho * float(np.dot(dx, dx)) / h_try
        resid = float(np.linalg.norm(op(x_new) - F0 + vsum))
        rec.push(t, x_new, v_new, phi_new, resid, event)
        x, v, phi_x = x_new, v_new, phi_new
    return rec.build()


def _hold_constant(rec, op, x, v, phi_x, t, t_end, h, F0, vsum):
    resid = float(np.linalg.norm(op(x) - F0 + vsum))
    zero = np.zeros_like(x)
    first = True
    while t < t_end - 1e-12 * t_end:
        dt = min(h, t_end - t)
        t += dt
        rec.push(t, x, zero, phi_x, resid, EVENT_STATIONARY if first else EVENT_NONE)
        first = False


def integral_residual(op: OperatorSpec, traj: Trajectory) -> float:
    """max_k |F(x_k) - F(x_0) + sum_{j<k} h_j v_j|, recomputed from the record."""
    if traj.states.shape[0] == 0:
        raise ValueError("empty trajectory")
    h = traj.step_sizes()
    vsum = np.vstack([
        np.zeros((1, traj.dimension)),
        np.cumsum(h[:, None] * traj.selections[:-1], axis=0),
    ])
    F0 = op(traj.states[0])
    worst = 0.0
    for k in range(traj.states.shape[0]):
        r = float(np.linalg.norm(op(traj.states[k]) - F0 + vsum[k]))
        worst = max(worst, r)
    return worst


@dataclass(frozen=True)
class EnergyReport:
    """Pairwise verification of the dissipation inequality on a trajectory.

    worst_margin includes the per-step work correction (see
    Trajectory.work_corrections); worst_raw_margin is the uncorrected
    phi-form margin, which carries the scheme's O(h) consistency error.
    """

    worst_margin: float
    worst_pair: tuple[float, float]
    worst_raw_margin: float
    correction_total: float
    n_pairs: int

    @property
    def passed(self) -> bool:
        return self.worst_margin >= -1e-9


def energetic_check(traj: Trajectory, rho: float, max_grid: int = 257) -> EnergyReport:
    """Verify rho * sum h |dx/h|^2 <= phi(x_s) - phi(x_t) + tolerance over a
    subsampled grid of index pairs s < t; the tolerance is the accumulated
    work correction. Returns the worst margin and the pair attaining it."""
    n = traj.n_steps
    if n < 1:
        raise ValueError("trajectory has no steps")
    kin = np.concatenate([[0.0], np.cumsum(traj.kinetic_terms(rho))])
    corr = np.concatenate([[0.0], np.cumsum(traj.work_corrections())])
    idx = np.unique(np.linspace(0, n, min(max_grid, n + 1)).astype(int))
    phi = traj.phi_values[idx]
    K = kin[idx]
    C = corr[idx]
    m = len(idx)
    # margin(i, j) = phi_i - phi_j + (C_j - C_i) - (K_j - K_i) for i < j
    A = phi[:, None] - phi[None, :] + (C[None, :] - C[:, None]) - (K[None, :] - K[:, None])
    iu = np.triu_indices(m, k=1)
    margins = A[iu]
    worst = int(np.argmin(margins))
    i, j = iu[0][worst], iu[1][worst]
    raw = margins[worst] - (C[j] - C[i])
    return EnergyReport(
        worst_margin=float(margins[worst]),
        worst_pair=(float(traj.times[idx[i]]), float(traj.times[idx[j]])),
        worst_raw_margin=float(raw),
        correction_total=float(corr[-1]),
        n_pairs=len(margins),
    )
