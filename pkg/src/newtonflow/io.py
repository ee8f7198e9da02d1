"""File formats: trajectory CSV, JSON reports, run manifests, and the flat
key=value config / problem-definition files."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .errors import ConfigError, DuplicateName
from .flow import FlowConfig, Trajectory
from .problem import Region, SelectionRule, as_point

CSV_FLOAT = "%.17g"


def trajectory_csv_header(dim: int) -> list[str]:
    cols = ["t"] + [f"x_{i + 1}" for i in range(dim)]
    return cols + ["phi", "energy", "residual", "selection_norm", "event_flag"]


def write_trajectory_csv(path, traj: Trajectory) -> None:
    path = Path(path)
    d = traj.dimension
    sel_norm = np.linalg.norm(traj.selections, axis=1)
    rows = np.column_stack([
        traj.times, traj.states, traj.phi_values, traj.energy,
        traj.integral_residuals, sel_norm, traj.events.astype(float),
    ])
    header = ",".join(trajectory_csv_header(d))
    np.savetxt(path, rows, delimiter=",", header=header, comments="", fmt=CSV_FLOAT)


def read_trajectory_csv(path) -> Trajectory:
    path = Path(path)
    with path.open() as fh:
        names = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    dim = sum(1 for n in names if n.startswith("x_"))
    t = data[:, 0]
    states = data[:, 1 : 1 + dim]
    phi = data[:, 1 + dim]
    energy = data[:, 2 + dim]
    resid = data[:, 3 + dim]
    sel_norm = data[:, 4 + dim]
    events = data[:, 5 + dim].astype(int)
    # selections are stored by norm only; rebuild a 1-D surrogate so rate
    # analysis on re-loaded trajectories keeps working
    selections = np.zeros_like(states)
    selections[:, 0] = sel_norm
    return Trajectory(
        times=t, states=states, selections=selections, phi_values=phi,
        energy=energy, integral_residuals=resid, events=events,
    )


def write_manifest(path, problem_name: str, operator_name: str, cfg: FlowConfig,
                   x0: np.ndarray, seed: int) -> None:
    lines = [
        f"problem={problem_name}",
        f"operator={operator_name}",
        f"x0={','.join(CSV_FLOAT % v for v in np.atleast_1d(x0))}",
    ]
    for key, val in cfg.as_dict().items():
        if key == "lambda_schedule":
            if val:
                lines.append("lambda_schedule=" + ",".join(CSV_FLOAT % v for v in val))
            continue
        lines.append(f"{key}={val}")
    lines.append(f"seed={seed}")
    lines.append(f"code_version={__version__}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_report_json(path, report: dict) -> None:
    Path(path).write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


# -- flat key=value files ------------------------------------------------------


def parse_kv_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        out[key.strip()] = val.strip()
    return out


_CONFIG_KEYS = {
    "step_h", "t_end", "selection", "mode", "lambda_schedule",
    "inverse_tol", "energy_slack", "max_halvings", "seed",
}


def config_from_mapping(base: FlowConfig, overrides: dict) -> FlowConfig:
    """Apply overrides (strings or typed values) to a FlowConfig."""
    kwargs = {
        "step_h": base.step_h,
        "t_end": base.t_end,
        "selection": base.selection,
        "mode": base.mode,
        "lambda_schedule": base.lambda_schedule,
        "inverse_tol": base.inverse_tol,
        "energy_slack": base.energy_slack,
        "max_halvings": base.max_halvings,
        "seed": base.seed,
    }
    for key, val in overrides.items():
        if val is None:
            continue
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            if key in ("step_h", "t_end", "inverse_tol", "energy_slack"):
                kwargs[key] = float(val)
            elif key in ("max_halvings", "seed"):
                kwargs[key] = int(val)
            elif key == "selection":
                kwargs[key] = val if isinstance(val, SelectionRule) else SelectionRule.parse(str(val))
            elif key == "mode":
                kwargs[key] = str(val).strip().lower()
            elif key == "lambda_schedule":
                if isinstance(val, str):
                    kwargs[key] = tuple(float(v) for v in val.split(",") if v.strip())
                else:
                    kwargs[key] = tuple(float(v) for v in val)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {val!r} ({exc})") from exc
    return FlowConfig(**kwargs)


def load_config_file(path, base: Optional[FlowConfig] = None) -> FlowConfig:
    text = Path(path).read_text()
    return config_from_mapping(base or FlowConfig(), parse_kv_text(text))


# -- problem definition files ----------------------------------------------------


def _parse_region(text: str) -> Region:
    lows, highs = [], []
    for part in text.split(":"):
        lo, _, hi = part.partition(",")
        lows.append(float(lo))
        highs.append(float(hi))
    return Region.box(lows, highs)


def problem_from_mapping(kv: dict[str, str]):
    from .zoo import ZooProblem, make_objective, make_operator

    try:
        name = kv["name"]
        dim = int(kv["dimension"])
        phi1 = kv.get("phi1", "zero")
        phi2 = kv.get("phi2", "zero")
        op_id = kv.get("operator", "identity")
        region = _parse_region(kv["region"]) if "region" in kv else Region.box(
            [-3.0] * dim, [3.0] * dim
        )
        x0 = as_point([float(v) for v in kv.get("x0", "0").split(",")])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad problem definition: {exc}") from exc
    if region.dimension != dim or x0.shape[0] != dim:
        raise ConfigError("dimension, region, and x0 disagree")
    cfg_overrides = {k: v for k, v in kv.items() if k in _CONFIG_KEYS}
    cfg = config_from_mapping(FlowConfig(), cfg_overrides)
    return ZooProblem(
        name=name, phi1_id=phi1, phi2_id=phi2, operator_id=op_id,
        objective=make_objective(phi1, phi2, region),
        operator=make_operator(op_id, dim),
        x0_default=x0, config=cfg, reference=None,
    )


def load_problem_file(path) -> dict:
    """Parse a registry extension file: blank-line-separated key=value blocks,
    one problem each. Duplicate names (within the file) raise DuplicateName."""
    text = Path(path).read_text()
    blocks = [b for b in text.split("\n\n") if b.strip()]
    out: dict = {}
    for block in blocks:
        prob = problem_from_mapping(parse_kv_text(block))
        if prob.name in out:
            raise DuplicateName(prob.name)
        out[prob.name] = prob
    return out


def merged_registry(extension_path: Optional[str] = None) -> dict:
    from .zoo import builtin_registry

    registry = builtin_registry()
    if extension_path:
        extra = load_problem_file(extension_path)
        for name, prob in extra.items():
            if name in registry:
                raise DuplicateName(name)
            registry[name] = prob
    return registry
