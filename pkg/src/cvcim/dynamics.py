"""Gaussian-state dynamics of the measurement-feedback optical machine.

Each oscillator pulse is tracked as a Gaussian with mean-field amplitude
mu_i and variance sigma_i.  One roundtrip applies, in order: a homodyne
measurement of the amplitudes (finite uncertainty set by the measurement
strength j_t), a feedback injection computed from the measured values by
the active policy, the double-well drift, and the measurement backaction
on the means.  The same noise realization Z drives both the measurement
outcome and the backaction.  The variance update runs alongside using the
pre-update means.

Integration is an explicit Euler(-Maruyama) recursion: the printed update
equations *are* the model, so no higher-order scheme is used.

Trajectories are deterministic functions of (instance, params, policy,
seed).  ``simulate_many`` runs a batch of samples through one vectorized
sweep; every elementwise operation acts per-row and the one matrix-vector
product is applied row by row, so a sample inside a batch reproduces its
single-trajectory run bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .boxqp import (
    GRADIENT_MODES,
    AmplitudeDomain,
    BoxQpInstance,
    amplitude_to_box,
    objective,
)
from .feedback import PolicyConfig, PolicyState, compute_update, init_state
from .metrics import relative_gap

__all__ = [
    "CimParams",
    "GapSeries",
    "TrajectoryState",
    "amplitude_domain",
    "initial_state",
    "measured_amplitudes",
    "measurement_at",
    "pump_at",
    "simulate",
    "simulate_many",
    "step",
]


@dataclass(frozen=True)
class CimParams:
    """Physical hyperparameters and schedule shapes.

    Defaults follow the reference operating point: T = 15000 roundtrips,
    dt = 0.0025, g = 0.01, lam = 550, pump ramping linearly to 2.5 and
    measurement strength decaying as 25 exp(-3 t/T).
    """

    T: int = 15000
    dt: float = 0.0025
    g: float = 0.01
    lam: float = 550.0
    pump_max: float = 2.5
    j0: float = 25.0
    j_decay: float = 3.0
    noise_enabled: bool = True
    divergence_factor: float = 10.0
    gradient_mode: str = "box"

    def __post_init__(self):
        if not (isinstance(self.T, int) and self.T >= 1):
            raise ValueError(f"T must be a positive integer, got {self.T!r}")
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.g > 0.0:
            raise ValueError(f"g must be positive, got {self.g}")
        if self.lam < 0.0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")
        if not self.j0 > 0.0:
            raise ValueError(f"j0 must be positive, got {self.j0}")
        if not self.divergence_factor > 0.0:
            raise ValueError(f"divergence_factor must be positive, got {self.divergence_factor}")
        if self.gradient_mode not in GRADIENT_MODES:
            raise ValueError(f"gradient_mode must be one of {GRADIENT_MODES}")


@dataclass(frozen=True)
class TrajectoryState:
    """Per-sample state: means, variances, roundtrip counter, policy accumulators.

    ``diverged_at`` is set at most once; a diverged state is frozen and
    must not be stepped further.
    """

    mu: np.ndarray
    sigma: np.ndarray
    roundtrip: int
    policy_state: PolicyState
    diverged_at: int | None = None


@dataclass(frozen=True)
class GapSeries:
    """Strided record of the clipped-readout optimality gap along a trajectory.

    Roundtrip indices are strictly increasing; recording stops at the
    point of divergence, so the best gap of a diverged sample is the best
    achieved before it diverged.
    """

    roundtrips: np.ndarray
    gaps: np.ndarray
    diverged_at: int | None = None

    def best_gap(self) -> float:
        return float(self.gaps.min())

    def final_gap(self) -> float:
        return float(self.gaps[-1])

    def first_reach(self, threshold: float) -> int | None:
        hits = np.nonzero(self.gaps <= threshold)[0]
        if hits.size == 0:
            return None
        return int(self.roundtrips[hits[0]])


def pump_at(t: float, params: CimParams) -> float:
    """Linear pump ramp: pump_max * t/T."""
    return params.pump_max * t / params.T

def measurement_at(t: float, params: CimParams) -> float:
    """Exponentially decaying measurement strength: j0 * exp(-j_decay * t/T)."""
    return params.j0 * math.exp(-params.j_decay * t / params.T)


def amplitude_domain(params: CimParams) -> AmplitudeDomain:
    """Double-well geometry at the end of the anneal: a = (p_T - (1 + j_T)) / g^2."""
    p_end = pump_at(params.T, params)
    j_end = measurement_at(params.T, params)
    a = (p_end - (1.0 + j_end)) / (params.g * params.g)
    if a <= 0.0:
        raise ValueError(
            f"no bistability at end of anneal: p_T = {p_end} <= 1 + j_T = {1.0 + j_end}"
        )
    return AmplitudeDomain(a)


def measured_amplitudes(mu: np.ndarray, z: np.ndarray, j: float, dt: float) -> np.ndarray:
    """Homodyne outcomes: mu + Z / sqrt(4 j dt)."""
    return mu + z / math.sqrt(4.0 * j * dt)


def initial_state(n: int, policy: PolicyConfig) -> TrajectoryState:
    """Vacuum start: mu = 0, sigma = 1/2 (which silences the backaction at t=0)."""
    return TrajectoryState(
        mu=np.zeros(n),
        sigma=np.full(n, 0.5),
        roundtrip=0,
        policy_state=init_state(n, policy),
        diverged_at=None,
    )


# ---------------------------------------------------------------------------
# step kernel, shared between the public single step and the batched runner


def _feedback_rows(
    mu_meas: np.ndarray, inst: BoxQpInstance, params: CimParams, dom: AmplitudeDomain
) -> np.ndarray:
    """Feedback gradients for (rows, n) measured amplitudes.

    The matrix-vector product is applied per row so a batch reproduces
    single-trajectory arithmetic exactly; everything else is elementwise
    and matches boxqp.feedback_gradient operation for operation.
    """
    if params.gradient_mode == "box":
        x = 0.5 * (mu_meas / dom.sqrt_a + 1.0)
    else:
        x = mu_meas
    g = np.empty_like(x)
    for i in range(x.shape[0]):
        g[i] = inst.qsum @ x[i]
    g += inst.c
    if params.gradient_mode == "box":
        g = g * (0.5 / dom.sqrt_a)
    return g


def _advance(
    mu: np.ndarray,
    sigma: np.ndarray,
    z: np.ndarray | None,
    j: float,
    p: float,
    direction: np.ndarray | None,
    params: CimParams,
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and variance updates for one roundtrip on (rows, n) arrays."""
    g2 = params.g * params.g
    lin = p - (1.0 + j)
    mu2 = mu * mu
    drift = (lin - g2 * mu2) * mu
    if direction is not None:
        drift = drift - params.lam * direction
    mu_new = mu + drift * params.dt
    if z is not None:
        mu_new = mu_new + (math.sqrt(j) * math.sqrt(params.dt)) * (sigma - 0.5) * z
    dev = sigma - 0.5
    sigma_new = sigma + (
        2.0 * (lin - 3.0 * g2 * mu2) * sigma
        - (2.0 * j) * (dev * dev)
        + ((1.0 + j) + (2.0 * g2) * mu2)
    ) * params.dt
    return mu_new, sigma_new


def _divergence_threshold(params: CimParams) -> float:
    try:
        dom = amplitude_domain(params)
    except ValueError:
        return math.inf  # below threshold everywhere: amplitudes decay, never diverge
    return params.divergence_factor * dom.sqrt_a


def _bad_rows(mu_new: np.ndarray, sigma_new: np.ndarray, thresh: float) -> np.ndarray:
    finite = np.isfinite(mu_new).all(axis=1) & np.isfinite(sigma_new).all(axis=1)
    with np.errstate(invalid="ignore"):
        inside = np.nanmax(np.abs(mu_new), axis=1) <= thresh
    return np.nonzero(~(finite & inside))[0]


def step(
    state: TrajectoryState,
    t: int,
    inst: BoxQpInstance,
    params: CimParams,
    policy: PolicyConfig,
    rng: np.random.Generator,
) -> TrajectoryState:
    """One roundtrip update of a single trajectory.

    ``t`` selects the schedule values; it is passed explicitly so the
    schedules can be held fixed for fixed-point studies.  Divergence is
    recorded in the returned state, never raised.  When lam = 0 the
    feedback path (including the policy update) is skipped entirely,
    which keeps below-threshold schedules simulable even though the
    amplitude-to-box map is undefined there.
    """
    if state.diverged_at is not None:
        raise ValueError(f"cannot step a trajectory that diverged at roundtrip {state.diverged_at}")
    if not 0 <= t < params.T:
        raise ValueError(f"roundtrip index {t} outside [0, {params.T})")
    n = state.mu.shape[0]
    if inst.n != n:
        raise ValueError(f"instance dimension {inst.n} != state dimension {n}")

    j = measurement_at(t, params)
    p = pump_at(t, params)
    mu = state.mu[None, :]
    sigma = state.sigma[None, :]

    z = rng.standard_normal(n)[None, :] if params.noise_enabled else None
    mu_meas = measured_amplitudes(mu, z, j, params.dt) if z is not None else mu

    direction = None
    pstate = state.policy_state
    if params.lam > 0.0:
        dom = amplitude_domain(params)
        fb = _feedback_rows(mu_meas, inst, params, dom)
        if not np.isfinite(fb).all():
            # upstream blow-up: freeze at the pre-update state
            return TrajectoryState(state.mu, state.sigma, t + 1, pstate, diverged_at=t + 1)
        batched = PolicyState(
            pstate.g_accum[None, :], pstate.m[None, :], pstate.v[None, :], pstate.t
        )
        direction, new_pstate = compute_update(batched, fb, policy)
        pstate = PolicyState(
            new_pstate.g_accum[0], new_pstate.m[0], new_pstate.v[0], new_pstate.t
        )

    mu_new, sigma_new = _advance(mu, sigma, z, j, p, direction, params)
    diverged = _bad_rows(mu_new, sigma_new, _divergence_threshold(params)).size > 0
    return TrajectoryState(
        mu=mu_new[0],
        sigma=sigma_new[0],
        roundtrip=t + 1,
        policy_state=pstate,
        diverged_at=t + 1 if diverged else None,
    )


# ---------------------------------------------------------------------------
# full trajectories


def _resolve_reference(inst: BoxQpInstance, f_star: float | None) -> float:
    if f_star is None:
        f_star = inst.best_known
    if f_star is None:
        raise ValueError(f"missing reference optimum for instance {inst.label!r}; gaps undefined")
    if f_star == 0.0:
        raise ValueError("reference objective is zero; gap undefined")
    return float(f_star)


def simulate_many(
    inst: BoxQpInstance,
    params: CimParams,
    policy: PolicyConfig,
    seeds,
    stride: int = 10,
    f_star: float | None = None,
    mu0: np.ndarray | None = None,
) -> list[tuple[TrajectoryState, GapSeries]]:
    """Run a batch of trajectories (one seed each) through one vectorized sweep.

    Results are identical, bit for bit, to running ``simulate`` once per
    seed; batching only amortizes interpreter overhead.  Diverged samples
    are frozen, dropped from the batch, and stop consuming their noise
    stream.
    """
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    f_ref = _resolve_reference(inst, f_star)
    dom = amplitude_domain(params)  # required: gap recording maps amplitudes to the box
    thresh = params.divergence_factor * dom.sqrt_a
    n = inst.n
    n_samples = len(seeds)
    if n_samples == 0:
        return []

    rngs = [np.random.default_rng(s) for s in seeds]
    if mu0 is None:
        mu = np.zeros((n_samples, n))
    else:
        mu0 = np.asarray(mu0, dtype=np.float64)
        if mu0.shape != (n,):
            raise ValueError(f"mu0 has shape {mu0.shape}, expected ({n},)")
        mu = np.tile(mu0, (n_samples, 1))
    sigma = np.full((n_samples, n), 0.5)
    pstate = PolicyState(
        np.zeros((n_samples, n)), np.zeros((n_samples, n)), np.zeros((n_samples, n)), 0
    )
    alive = list(range(n_samples))

    rec_r: list[list[int]] = [[] for _ in range(n_samples)]
    rec_g: list[list[float]] = [[] for _ in range(n_samples)]
    final: list[TrajectoryState | None] = [None] * n_samples

    def record(roundtrip: int) -> None:
        for row, k in enumerate(alive):
            x = amplitude_to_box(mu[row], dom)
            rec_r[k].append(roundtrip)
            rec_g[k].append(relative_gap(objective(inst, x.x), f_ref))

    def freeze(rows, mu_arr, sigma_arr, ps: PolicyState, t_next: int) -> None:
        nonlocal mu, sigma, pstate, rngs, alive
        for row in rows:
            k = alive[row]
            final[k] = TrajectoryState(
                mu=mu_arr[row].copy(),
                sigma=sigma_arr[row].copy(),
                roundtrip=t_next,
                policy_state=PolicyState(
                    ps.g_accum[row].copy(), ps.m[row].copy(), ps.v[row].copy(), ps.t
                ),
                diverged_at=t_next,
            )
        keep = [r for r in range(len(alive)) if r not in set(rows)]
        mu = mu[keep]
        sigma = sigma[keep]
        pstate = PolicyState(ps.g_accum[keep], ps.m[keep], ps.v[keep], ps.t)
        rngs = [rngs[r] for r in keep]
        alive = [alive[r] for r in keep]

    record(0)
    for t in range(params.T):
        if not alive:
            break
        j = measurement_at(t, params)
        p = pump_at(t, params)

        if params.noise_enabled:
            z = np.empty_like(mu)
            for row in range(len(alive)):
                z[row] = rngs[row].standard_normal(n)
            mu_meas = measured_amplitudes(mu, z, j, params.dt)
        else:
            z = None
            mu_meas = mu

        direction = None
        if params.lam > 0.0:
            fb = _feedback_rows(mu_meas, inst, params, dom)
            bad = np.nonzero(~np.isfinite(fb).all(axis=1))[0]
            if bad.size:
                freeze(list(bad), mu, sigma, pstate, t + 1)
                if not alive:
                    break
                keep = np.setdiff1d(np.arange(fb.shape[0]), bad)
                fb = fb[keep]
                if z is not None:
                    z = z[keep]
            direction, pstate = compute_update(pstate, fb, policy)

        mu_new, sigma_new = _advance(mu, sigma, z, j, p, direction, params)
        bad = _bad_rows(mu_new, sigma_new, thresh)
        if bad.size:
            freeze(list(bad), mu_new, sigma_new, pstate, t + 1)
            keep = np.setdiff1d(np.arange(mu_new.shape[0]), bad)
            mu_new = mu_new[keep]
            sigma_new = sigma_new[keep]
        mu, sigma = mu_new, sigma_new

        r = t + 1
        if alive and (r % stride == 0 or r == params.T):
            record(r)

    for row, k in enumerate(alive):
        final[k] = TrajectoryState(
            mu=mu[row].copy(),
            sigma=sigma[row].copy(),
            roundtrip=params.T,
            policy_state=PolicyState(
                pstate.g_accum[row].copy(), pstate.m[row].copy(), pstate.v[row].copy(), pstate.t
            ),
            diverged_at=None,
        )

    out = []
    for k in range(n_samples):
        assert final[k] is not None
        series = GapSeries(
            roundtrips=np.array(rec_r[k], dtype=np.int64),
            gaps=np.array(rec_g[k], dtype=np.float64),
            diverged_at=final[k].diverged_at,
        )
        out.append((final[k], series))
    return out


def simulate(
    inst: BoxQpInstance,
    params: CimParams,
    policy: PolicyConfig,
    seed,
    stride: int = 10,
    f_star: float | None = None,
    mu0: np.ndarray | None = None,
) -> tuple[TrajectoryState, GapSeries]:
    """Run one trajectory from the vacuum state for T roundtrips."""
    return simulate_many(inst, params, policy, [seed], stride, f_star, mu0)[0]
