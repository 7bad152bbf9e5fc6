"""Declarative experiment configs (flat TOML files).

A config names instance sources, the feedback policies to compare, the
sample count, the master seed, and any physical-parameter overrides.
Instance sources are either paths to canonical instance files or
generator labels of the form ``cond-n{n}-k{kappa}-s{seed}``.  Reference
optima come from an optional reference table file; instances without a
table entry fall back to the seeded projected-gradient oracle when
``oracle_starts`` > 0 and are refused otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .dynamics import CimParams
from .feedback import PolicyConfig, parse_policy_spec

__all__ = ["ExperimentConfig", "load_config"]

DEFAULT_PERCENTILES = (5.0, 10.0, 25.0, 50.0)
DEFAULT_KAPPAS = (1.0, 10.0, 100.0, 1000.0)
DEFAULT_LAMBDAS = (0.04, 326.0, 701.0, 1076.0)

_CIM_KEYS = {
    "T": "T",
    "dt": "dt",
    "g": "g",
    "lambda": "lam",
    "pump_max": "pump_max",
    "j0": "j0",
    "j_decay": "j_decay",
    "noise": "noise_enabled",
    "divergence_factor": "divergence_factor",
    "gradient_mode": "gradient_mode",
}


@dataclass(frozen=True)
class ExperimentConfig:
    instances: tuple[str, ...] = ()
    policies: tuple[str, ...] = ()
    samples: int = 50
    master_seed: int = 1
    out: str = "results"
    stride: int = 10
    percentiles: tuple[float, ...] = DEFAULT_PERCENTILES
    reference_file: str | None = None
    oracle_starts: int = 100
    oracle_iters: int = 1000
    oracle_seed: int = 7
    cim: CimParams = field(default_factory=CimParams)
    # sweep-mode axes
    kappa_list: tuple[float, ...] = DEFAULT_KAPPAS
    lambda_list: tuple[float, ...] = DEFAULT_LAMBDAS
    sweep_n: int = 20

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError(f"samples must be >= 1, got {self.samples}")
        if self.master_seed < 0:
            raise ValueError(f"master_seed must be nonnegative, got {self.master_seed}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.oracle_starts < 0:
            raise ValueError(f"oracle_starts must be >= 0, got {self.oracle_starts}")
        if self.sweep_n < 2:
            raise ValueError(f"sweep_n must be >= 2, got {self.sweep_n}")
        for x in self.percentiles:
            if not 0.0 < x < 100.0:
                raise ValueError(f"percentile {x} outside (0, 100)")
        for k in self.kappa_list:
            if k < 1.0:
                raise ValueError(f"kappa {k} must be >= 1")

    def policy_configs(self) -> tuple[PolicyConfig, ...]:
        return tuple(parse_policy_spec(s) for s in self.policies)

    def require_run_mode(self) -> None:
        if not self.instances:
            raise ValueError("config needs at least one instance source")
        if not self.policies:
            raise ValueError("config needs at least one policy")

    def require_sweep_mode(self) -> None:
        if not self.policies:
            raise ValueError("config needs at least one policy")
        if not self.lambda_list:
            raise ValueError("sweep needs a non-empty lambda list")
        if not self.kappa_list:
            raise ValueError("sweep needs a non-empty kappa list")


def _from_mapping(data: dict, base_dir: Path) -> ExperimentConfig:
    known = {
        "instances",
        "policies",
        "samples",
        "master_seed",
        "out",
        "stride",
        "percentiles",
        "reference_file",
        "oracle_starts",
        "oracle_iters",
        "oracle_seed",
        "kappa_list",
        "lambda_list",
        "sweep_n",
    } | set(_CIM_KEYS)
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")

    cim_kwargs = {}
    for key, attr in _CIM_KEYS.items():
        if key in data:
            val = data[key]
            cim_kwargs[attr] = (
                int(val) if attr == "T" else bool(val) if attr == "noise_enabled" else val
            )
    cim = CimParams(**cim_kwargs)

    def _resolve(p: str) -> str:
        path = Path(p)
        return str(path if path.is_absolute() else base_dir / path)

    kwargs: dict = {"cim": cim}
    if "instances" in data:
        kwargs["instances"] = tuple(str(s) for s in data["instances"])
    if "policies" in data:
        kwargs["policies"] = tuple(str(s) for s in data["policies"])
    for key in ("samples", "master_seed", "stride", "oracle_starts", "oracle_iters", "oracle_seed", "sweep_n"):
        if key in data:
            kwargs[key] = int(data[key])
    if "out" in data:
        kwargs["out"] = _resolve(str(data["out"]))
    if "reference_file" in data:
        kwargs["reference_file"] = _resolve(str(data["reference_file"]))
    if "percentiles" in data:
        kwargs["percentiles"] = tuple(float(x) for x in data["percentiles"])
    if "kappa_list" in data:
        kwargs["kappa_list"] = tuple(float(x) for x in data["kappa_list"])
    if "lambda_list" in data:
        kwargs["lambda_list"] = tuple(float(x) for x in data["lambda_list"])
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    """Load a flat TOML config; relative paths resolve against the config's directory."""
    path = Path(path)
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    config = _from_mapping(data, path.parent)
    # instance file paths (non-generator sources) resolve relative to the config
    resolved = []
    for src in config.instances:
        from .instances import parse_conditioned_label

        if parse_conditioned_label(src) is not None or Path(src).is_absolute():
            resolved.append(src)
        else:
            resolved.append(str(path.parent / src))
    return replace(config, instances=tuple(resolved))
