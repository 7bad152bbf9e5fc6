"""Evaluation machinery: optimality gaps, percentile trajectories,
roundtrip ratios, time-to-target, and sample-distribution statistics.

All functions here are pure and deterministic.  Percentiles use linear
interpolation between closest ranks (rank = 1 + (X/100)(k-1)) so outputs
are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
import warnings

import numpy as np

__all__ = [
    "PercentileTrajectory",
    "RatioResult",
    "ReferenceBeatenWarning",
    "gap_stddev",
    "percentile_series",
    "relative_gap",
    "roundtrip_ratio",
    "success_probability",
    "ttt",
]


class ReferenceBeatenWarning(UserWarning):
    """A sample achieved a better objective than the stored reference optimum."""


@dataclass(frozen=True)
class PercentileTrajectory:
    """Xth-percentile gap across samples, per recorded roundtrip.

    Defined only at roundtrips where at least one non-diverged sample
    exists; roundtrips with no surviving samples are omitted.
    """

    percentile: float
    roundtrips: np.ndarray
    gaps: np.ndarray

    def __post_init__(self):
        if not 0.0 < self.percentile < 100.0:
            raise ValueError(f"percentile must lie in (0, 100), got {self.percentile}")
        if len(self.roundtrips) != len(self.gaps):
            raise ValueError("roundtrips and gaps must have equal length")
        if len(self.roundtrips) == 0:
            raise ValueError("empty percentile trajectory")


@dataclass(frozen=True)
class RatioResult:
    """Speed comparison at the best gap both variants achieve.

    ``ratio`` is the faster variant's first-hit roundtrip over the
    slower's.  A variant that starts at or below the target gives a zero
    numerator; that degenerate case is flagged via ``zero_roundtrip``.
    """

    target_gap: float
    roundtrip_a: int
    roundtrip_b: int
    ratio: float
    faster: str
    zero_roundtrip: bool = False


def relative_gap(f_val: float, f_star: float) -> float:
    """(f(x) - f(x*)) / |f(x*)|; warns when the reference is beaten."""
    if f_star == 0.0:
        raise ValueError("reference objective is zero; gap undefined")
    gap = (f_val - f_star) / abs(f_star)
    if gap < 0.0:
        warnings.warn(
            f"objective {f_val} beats the stored reference {f_star}; the reference should be updated",
            ReferenceBeatenWarning,
            stacklevel=2,
        )
    return gap


def percentile_series(runs, x: float) -> PercentileTrajectory:
    """Xth percentile of the gap across samples, at each recorded roundtrip.

    All runs must share a recording stride.  A sample contributes at the
    roundtrips it recorded (recording stops at divergence); roundtrips
    with no surviving samples are omitted.
    """
    runs = list(runs)
    if not runs:
        raise ValueError("percentile_series needs at least one run")
    longest = max(runs, key=lambda s: len(s.roundtrips))
    grid = longest.roundtrips
    for s in runs:
        k = len(s.roundtrips)
        if not np.array_equal(s.roundtrips, grid[:k]):
            raise ValueError("runs do not share a common recording stride")
    out_r: list[int] = []
    out_g: list[float] = []
    for pos, roundtrip in enumerate(grid):
        vals = [s.gaps[pos] for s in runs if len(s.gaps) > pos]
        if not vals:
            continue
        out_r.append(int(roundtrip))
        out_g.append(float(np.percentile(vals, x, method="linear")))
    return PercentileTrajectory(
        percentile=x,
        roundtrips=np.array(out_r, dtype=np.int64),
        gaps=np.array(out_g, dtype=np.float64),
    )


def roundtrip_ratio(
    traj_a: PercentileTrajectory,
    traj_b: PercentileTrajectory,
    label_a: str = "a",
    label_b: str = "b",
) -> RatioResult:
    """Compare how fast two variants reach the best gap both achieve.

    The target is max(min_a, min_b): the better variant provably dips to
    it and the worse variant attains it at its own minimum.  Ties in the
    first-hit roundtrips resolve in favor of the first argument.
    """
    min_a = float(traj_a.gaps.min())
    min_b = float(traj_b.gaps.min())
    target = max(min_a, min_b)
    ra = int(traj_a.roundtrips[np.nonzero(traj_a.gaps <= target)[0][0]])
    rb = int(traj_b.roundtrips[np.nonzero(traj_b.gaps <= target)[0][0]])
    lo, hi = min(ra, rb), max(ra, rb)
    if hi == 0:
        ratio = 1.0  # both start at the target
    else:
        ratio = lo / hi
    return RatioResult(
        target_gap=target,
        roundtrip_a=ra,
        roundtrip_b=rb,
        ratio=ratio,
        faster=label_a if ra <= rb else label_b,
        zero_roundtrip=(lo == 0),
    )


def ttt(t_single: float, p_succ: float, s: float) -> float:
    """Expected time to hit the target with confidence s.

    t_single * log(1 - s) / log(1 - p_succ), with the repetition count
    clamped to >= 1 (p_succ >= s means a single run suffices) and an
    infinite result for p_succ = 0.
    """
    if not t_single > 0.0:
        raise ValueError(f"t_single must be positive, got {t_single}")
    if not 0.0 < s < 1.0:
        raise ValueError(f"confidence s must lie in (0, 1), got {s}")
    if not 0.0 <= p_succ <= 1.0:
        raise ValueError(f"p_succ must lie in [0, 1], got {p_succ}")
    if p_succ == 0.0:
        return math.inf
    if p_succ >= s:
        return t_single
    return t_single * math.log1p(-s) / math.log1p(-p_succ)


def gap_stddev(final_gaps) -> float:
    """Population standard deviation of each sample's best-achieved gap."""
    gaps = np.asarray(final_gaps, dtype=np.float64)
    if gaps.size == 0:
        raise ValueError("gap_stddev needs at least one sample")
    if not np.isfinite(gaps).all():
        raise ValueError("gap_stddev requires finite gaps")
    return float(np.std(gaps))


def success_probability(final_gaps, threshold: float) -> float:
    """Fraction of samples whose best gap is <= threshold.

    Diverged samples enter as NaN and count as failures.
    """
    gaps = np.asarray(final_gaps, dtype=np.float64)
    if gaps.size == 0:
        raise ValueError("success_probability needs at least one sample")
    with np.errstate(invalid="ignore"):
        hits = gaps <= threshold  # NaN compares False
    return float(np.count_nonzero(hits)) / gaps.size
