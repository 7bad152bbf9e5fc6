"""Pluggable feedback policies: gradient descent, momentum, Adam.

A policy turns the stream of measured gradients into an injection
direction.  The overall feedback magnitude (lambda) and the time step are
*not* applied here: the dynamics multiplies the returned direction by
``-lambda * dt``, so lambda means the same thing for every policy.

All update formulas are elementwise, so the same code serves a single
trajectory (vectors of shape ``(n,)``) and a batch of trajectories
(``(samples, n)``); the bias-correction counter ``t`` is shared across a
batch because every row takes the same number of updates.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

__all__ = [
    "GD",
    "MOMENTUM",
    "ADAM",
    "NonFiniteGradientError",
    "PolicyConfig",
    "PolicyState",
    "compute_update",
    "init_state",
    "parse_policy_spec",
]

GD = "gd"
MOMENTUM = "momentum"
ADAM = "adam"
_KINDS = (GD, MOMENTUM, ADAM)

# defaults; the damping/moment constants are the standard ones
DEFAULT_THETA = 0.9
DEFAULT_BETA1 = 0.9
DEFAULT_BETA2 = 0.999
DEFAULT_EPSILON = 1e-8


class NonFiniteGradientError(ValueError):
    """A gradient with non-finite entries reached the policy (upstream divergence)."""

    def __init__(self, message: str, roundtrip: int | None = None):
        super().__init__(message)
        self.roundtrip = roundtrip


@dataclass(frozen=True)
class PolicyConfig:
    kind: str
    theta: float = DEFAULT_THETA
    beta1: float = DEFAULT_BETA1
    beta2: float = DEFAULT_BETA2
    epsilon: float = DEFAULT_EPSILON
    name: str = ""

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; expected one of {_KINDS}")
        if self.kind == MOMENTUM and not (0.0 <= self.theta < 1.0):
            raise ValueError(f"momentum damping theta must lie in [0, 1), got {self.theta}")
        if self.kind == ADAM:
            if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
                raise ValueError(f"beta1, beta2 must lie in [0, 1), got {self.beta1}, {self.beta2}")
            if not self.epsilon > 0.0:
                raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not self.name:
            object.__setattr__(self, "name", self.kind)

    @classmethod
    def gd(cls) -> "PolicyConfig":
        return cls(kind=GD)

    @classmethod
    def momentum(cls, theta: float = DEFAULT_THETA) -> "PolicyConfig":
        return cls(kind=MOMENTUM, theta=theta)

    @classmethod
    def adam(
        cls,
        beta1: float = DEFAULT_BETA1,
        beta2: float = DEFAULT_BETA2,
        epsilon: float = DEFAULT_EPSILON,
    ) -> "PolicyConfig":
        return cls(kind=ADAM, beta1=beta1, beta2=beta2, epsilon=epsilon)


@dataclass(frozen=True)
class PolicyState:
    """Accumulators carried across roundtrips.

    g_accum is the momentum accumulator; m and v are Adam's first and
    second moment estimates; t counts completed updates (drives Adam's
    bias correction).  A fresh state is all zeros with t = 0.
    """

    g_accum: np.ndarray
    m: np.ndarray
    v: np.ndarray
    t: int = 0


def init_state(n: int, config: PolicyConfig) -> PolicyState:
    if n < 1:
        raise ValueError(f"state dimension must be >= 1, got {n}")
    zeros = np.zeros(n, dtype=np.float64)
    return PolicyState(g_accum=zeros, m=zeros.copy(), v=zeros.copy(), t=0)


def compute_update(
    state: PolicyState, grad: np.ndarray, config: PolicyConfig
) -> tuple[np.ndarray, PolicyState]:
    """One policy update: returns (direction, new state).

    The caller owns the scaling: the returned direction is the raw
    Phi(gradients) with no step size applied.
    """
    if not np.isfinite(grad).all():
        raise NonFiniteGradientError("gradient has non-finite entries", roundtrip=state.t)
    t = state.t + 1
    if config.kind == GD:
        return grad, PolicyState(state.g_accum, state.m, state.v, t)
    if config.kind == MOMENTUM:
        acc = config.theta * state.g_accum + (1.0 - config.theta) * grad
        return acc, PolicyState(acc, state.m, state.v, t)
    # Adam
    m = config.beta1 * state.m + (1.0 - config.beta1) * grad
    v = config.beta2 * state.v + (1.0 - config.beta2) * (grad * grad)
    m_hat = m / (1.0 - config.beta1**t)
    v_hat = v / (1.0 - config.beta2**t)
    direction = m_hat / (np.sqrt(v_hat) + config.epsilon)
    return direction, PolicyState(state.g_accum, m, v, t)


def parse_policy_spec(spec: str) -> PolicyConfig:
    """Parse a policy spec string like "gd", "momentum:theta=0.5",
    "adam:beta1=0.9,beta2=0.999,epsilon=1e-8".

    The full spec string becomes the policy's display name, so distinct
    parameterizations stay distinguishable in output files.
    """
    spec = spec.strip()
    kind, _, tail = spec.partition(":")
    kind = kind.strip().lower()
    if kind not in _KINDS:
        raise ValueError(f"unknown policy {kind!r} in spec {spec!r}")
    kwargs: dict[str, float] = {}
    allowed = {GD: set(), MOMENTUM: {"theta"}, ADAM: {"beta1", "beta2", "epsilon"}}[kind]
    if tail:
        for item in tail.split(","):
            key, eq, val = item.partition("=")
            key = key.strip()
            if not eq or key not in allowed:
                raise ValueError(f"bad parameter {item!r} in policy spec {spec!r}")
            try:
                kwargs[key] = float(val)
            except ValueError:
                raise ValueError(f"non-numeric value in policy spec {spec!r}") from None
            if not math.isfinite(kwargs[key]):
                raise ValueError(f"non-finite value in policy spec {spec!r}")
    config = PolicyConfig(kind=kind, name=spec, **kwargs)
    return config
