"""Box-constrained quadratic program model and the amplitude/box mapping.

A BoxQP asks for ``min x^T Q x + c^T x`` over the unit box ``[0, 1]^n``.
The optical machine evolves oscillator mean-field amplitudes on the
symmetric range ``[-sqrt(a), sqrt(a)]`` carved out by a double-well
potential, so this module also owns the affine rescaling between the two
coordinate systems and the gradient seen by the feedback loop.

The feedback gradient is evaluated on the *unclipped* affine image of the
amplitudes: the oscillators spend much of the anneal outside the feasible
box, and clipping inside the feedback would zero the gradient there and
freeze the dynamics.  Clipping applies only when amplitudes are read out
as candidate solutions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np

__all__ = [
    "AmplitudeDomain",
    "BoxPoint",
    "BoxQpInstance",
    "amplitude_to_box",
    "amplitude_to_box_unclipped",
    "feedback_gradient",
    "gradient",
    "objective",
]

GRADIENT_MODES = ("box", "amplitude")


def _as_vector(x, n: int, what: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape != (n,):
        raise ValueError(f"{what} has shape {arr.shape}, expected ({n},)")
    return arr


@dataclass(frozen=True)
class BoxQpInstance:
    """Quadratic cost ``x^T Q x + c^T x`` over the unit box.

    ``Q`` is used exactly as given: no symmetrization and no 1/2 factor.
    ``best_known`` is an optional reference objective used for optimality
    gaps; it is a best-known value, not a certificate.
    """

    Q: np.ndarray
    c: np.ndarray
    best_known: float | None = None
    label: str = ""

    def __post_init__(self):
        q = np.array(self.Q, dtype=np.float64)
        c = np.array(self.c, dtype=np.float64)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError(f"Q must be square, got shape {q.shape}")
        n = q.shape[0]
        if n < 1:
            raise ValueError("problem dimension must be >= 1")
        if c.shape != (n,):
            raise ValueError(f"c has shape {c.shape}, expected ({n},)")
        if not np.isfinite(q).all():
            raise ValueError("Q contains non-finite entries")
        if not np.isfinite(c).all():
            raise ValueError("c contains non-finite entries")
        if self.best_known is not None and not math.isfinite(self.best_known):
            raise ValueError("best_known must be finite when present")
        q.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "Q", q)
        object.__setattr__(self, "c", c)

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @cached_property
    def qsum(self) -> np.ndarray:
        """Q + Q^T, the matrix applied in the gradient."""
        s = self.Q + self.Q.T
        s.setflags(write=False)
        return s


@dataclass(frozen=True)
class BoxPoint:
    """A point of the unit box.  Construct via :meth:`clipped` or :meth:`exact`."""

    x: np.ndarray

    def __post_init__(self):
        arr = np.array(self.x, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("box point must be a vector")
        if not np.isfinite(arr).all():
            raise ValueError("box point has non-finite entries")
        if (arr < 0.0).any() or (arr > 1.0).any():
            raise ValueError("box point violates 0 <= x <= 1; use BoxPoint.clipped")
        arr.setflags(write=False)
        object.__setattr__(self, "x", arr)

    @classmethod
    def clipped(cls, x) -> "BoxPoint":
        return cls(np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0))

    @classmethod
    def exact(cls, x) -> "BoxPoint":
        return cls(x)


@dataclass(frozen=True)
class AmplitudeDomain:
    """Double-well geometry: minima sit at +-sqrt(a)."""

    a: float
    sqrt_a: float = field(default=0.0)

    def __post_init__(self):
        if not (self.a > 0.0 and math.isfinite(self.a)):
            raise ValueError(f"double-well minimum squared amplitude must be positive, got {self.a}")
        object.__setattr__(self, "sqrt_a", math.sqrt(self.a))

    @classmethod
    def from_minimum_squared(cls, a: float) -> "AmplitudeDomain":
        return cls(a=float(a))


def objective(inst: BoxQpInstance, x) -> float:
    """x^T Q x + c^T x, exactly as written (x need not lie in the box)."""
    xv = _as_vector(x, inst.n, "x")
    return float(xv @ inst.Q @ xv + inst.c @ xv)


def gradient(inst: BoxQpInstance, x) -> np.ndarray:
    """(Q + Q^T) x + c."""
    xv = _as_vector(x, inst.n, "x")
    return inst.qsum @ xv + inst.c


def amplitude_to_box_unclipped(mu, dom: AmplitudeDomain) -> np.ndarray:
    """Affine part of the amplitude->box map: x_i = (mu_i/sqrt(a) + 1)/2."""
    mu = np.asarray(mu, dtype=np.float64)
    return 0.5 * (mu / dom.sqrt_a + 1.0)


def amplitude_to_box(mu, dom: AmplitudeDomain) -> BoxPoint:
    """Rescale [-sqrt(a), sqrt(a)] to [0, 1] and project onto the box."""
    return BoxPoint.clipped(amplitude_to_box_unclipped(mu, dom))


def feedback_gradient(inst: BoxQpInstance, mu, dom: AmplitudeDomain, mode: str = "box") -> np.ndarray:
    """Gradient injected by the feedback loop, at measured amplitudes ``mu``.

    mode="box" (default): chain rule of the affine map, i.e.
    ``gradient(inst, x(mu)) / (2 sqrt(a))`` with x the unclipped image.
    mode="amplitude": the quadratic form's gradient taken directly in
    amplitude coordinates, ``(Q + Q^T) mu + c``, with no chain factor --
    the alternative reading kept for comparison.
    """
    muv = _as_vector(mu, inst.n, "mu")
    if mode == "box":
        x = amplitude_to_box_unclipped(muv, dom)
        return gradient(inst, x) * (0.5 / dom.sqrt_a)
    if mode == "amplitude":
        return gradient(inst, muv)
    raise ValueError(f"unknown gradient mode {mode!r}; expected one of {GRADIENT_MODES}")
