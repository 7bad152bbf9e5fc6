"""Instance I/O, the conditioned random generator, and reference-optimum oracles.

The canonical instance file is plain UTF-8 text: line 1 holds the
dimension n, line 2 the n entries of c, and the next n lines the rows of
Q, all whitespace-separated.  Numbers are written with 17 significant
digits so parse/serialize round-trips are exact at the token level.

Conditioned instances follow ``Q = D(kappa) U S U^T D(kappa)`` with U a
seeded random orthogonal matrix, S diagonal with +1 in the first
floor(n/2) entries and -1 in the rest (a non-convex landscape), and
D(kappa) diagonal with entries linearly spaced from 1 to kappa (the skew
that controls conditioning).

Reference optima for gap reporting come either from a reference table
file or from the multi-start projected-gradient oracle below; the brute
force grid oracle is an independent check for small n.
"""

from __future__ import annotations

from dataclasses import dataclass
import hashlib
import math
import re

import numpy as np

from .boxqp import BoxPoint, BoxQpInstance, gradient, objective
from .fileio import fmt_float

__all__ = [
    "ConditionedSpec",
    "ReferenceTable",
    "conditioned_label",
    "generate_conditioned",
    "grid_oracle",
    "load_reference",
    "oracle_best",
    "parse_conditioned_label",
    "parse_instance",
    "random_orthogonal",
    "sample_seed_sequence",
    "serialize_instance",
    "serialize_reference",
]

GRID_BUDGET = 10**7

_LABEL_RE = re.compile(r"^cond-n(\d+)-k([0-9.eE+-]+)-s(\d+)$")


@dataclass(frozen=True)
class ConditionedSpec:
    """Generator knobs: dimension, skew kappa >= 1, and the RNG seed."""

    n: int
    kappa: float
    seed: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"conditioned instances need n >= 2, got {self.n}")
        if not (self.kappa >= 1.0 and math.isfinite(self.kappa)):
            raise ValueError(f"kappa must be >= 1, got {self.kappa}")
        if self.seed < 0:
            raise ValueError(f"seed must be a nonnegative integer, got {self.seed}")


@dataclass(frozen=True)
class ReferenceTable:
    """Best-known objective per instance label."""

    values: dict[str, float]

    def __contains__(self, label: str) -> bool:
        return label in self.values

    def get(self, label: str) -> float | None:
        return self.values.get(label)

    def __len__(self) -> int:
        return len(self.values)


def conditioned_label(spec: ConditionedSpec) -> str:
    return f"cond-n{spec.n}-k{spec.kappa:g}-s{spec.seed}"


def parse_conditioned_label(label: str) -> ConditionedSpec | None:
    """Parse a "cond-n{n}-k{kappa}-s{seed}" label; None if it is not one."""
    m = _LABEL_RE.match(label.strip())
    if m is None:
        return None
    try:
        return ConditionedSpec(n=int(m.group(1)), kappa=float(m.group(2)), seed=int(m.group(3)))
    except ValueError:
        return None


def random_orthogonal(n: int, seed: int) -> np.ndarray:
    """Seeded random orthogonal matrix.

    QR of a standard-Gaussian matrix, with columns flipped so the
    triangular factor has a nonnegative diagonal; that sign convention
    makes the output unique and the distribution well-defined.
    """
    if n < 1:
        raise ValueError(f"orthogonal matrix needs n >= 1, got {n}")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    signs = np.sign(np.diag(r))
    signs[signs == 0.0] = 1.0
    return q * signs


def generate_conditioned(spec: ConditionedSpec) -> BoxQpInstance:
    """Q = D(kappa) U S U^T D(kappa), symmetrized against rounding; c = 0."""
    u = random_orthogonal(spec.n, spec.seed)
    s = np.ones(spec.n)
    s[spec.n // 2 :] = -1.0
    d = np.linspace(1.0, spec.kappa, spec.n)
    m = (u * s) @ u.T
    m = d[:, None] * m * d[None, :]
    q = 0.5 * (m + m.T)
    return BoxQpInstance(Q=q, c=np.zeros(spec.n), label=conditioned_label(spec))


def sample_seed_sequence(master_seed: int, instance_label: str, sample_index: int) -> np.random.SeedSequence:
    """Child RNG stream for one trajectory, independent of scheduling order.

    The instance label enters through a SHA-256 digest so the derivation
    is stable across platforms and label sets.
    """
    digest = hashlib.sha256(instance_label.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "big") for i in range(0, 32, 4)]
    return np.random.SeedSequence([int(master_seed), *words, int(sample_index)])


# ---------------------------------------------------------------------------
# canonical instance files


def _parse_row(tokens: list[str], n: int, lineno: int, what: str) -> np.ndarray:
    if len(tokens) != n:
        raise ValueError(f"line {lineno}: expected {n} {what} entries, found {len(tokens)}")
    try:
        return np.array([float(t) for t in tokens], dtype=np.float64)
    except ValueError:
        bad = next(t for t in tokens if not _is_number(t))
        raise ValueError(f"line {lineno}: non-numeric token {bad!r}") from None


def _is_number(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def parse_instance(text: str, label: str = "") -> BoxQpInstance:
    """Parse the canonical instance format (see module docstring)."""
    lines = text.splitlines()
    rows = [(i + 1, ln.split()) for i, ln in enumerate(lines) if ln.strip()]
    if not rows:
        raise ValueError("line 1: empty instance file")
    lineno, header = rows[0]
    if len(header) != 1 or not header[0].isdigit():
        raise ValueError(f"line {lineno}: malformed header, expected a single positive integer")
    n = int(header[0])
    if n < 1:
        raise ValueError(f"line {lineno}: dimension must be >= 1, got {n}")
    if len(rows) != n + 2:
        raise ValueError(f"expected {n + 2} non-empty lines for n={n}, found {len(rows)}")
    lineno, tokens = rows[1]
    c = _parse_row(tokens, n, lineno, "c")
    q = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        lineno, tokens = rows[2 + i]
        q[i] = _parse_row(tokens, n, lineno, f"Q row {i + 1}")
    return BoxQpInstance(Q=q, c=c, label=label)


def serialize_instance(inst: BoxQpInstance) -> str:
    lines = [str(inst.n), " ".join(fmt_float(v) for v in inst.c)]
    for row in inst.Q:
        lines.append(" ".join(fmt_float(v) for v in row))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# reference tables


def load_reference(text: str) -> ReferenceTable:
    """Parse "label,value" lines; "#" comments and a "label,value" header allowed."""
    values: dict[str, float] = {}
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line == "label,value":
            continue  # header row
        parts = line.split(",")
        if len(parts) != 2:
            raise ValueError(f"line {i}: expected 'label,value', got {raw!r}")
        label, val = parts[0].strip(), parts[1].strip()
        if not label:
            raise ValueError(f"line {i}: empty label")
        if label in values:
            raise ValueError(f"line {i}: duplicate label {label!r}")
        try:
            fval = float(val)
        except ValueError:
            raise ValueError(f"line {i}: non-numeric value {val!r}") from None
        if not math.isfinite(fval):
            raise ValueError(f"line {i}: non-finite value for label {label!r}")
        values[label] = fval
    return ReferenceTable(values=values)


def serialize_reference(table: ReferenceTable) -> str:
    lines = ["label,value"]
    for label in sorted(table.values):
        lines.append(f"{label},{fmt_float(table.values[label])}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# reference-optimum oracles


def _projected_gradient_descent(
    inst: BoxQpInstance, x0: np.ndarray, max_iters: int, tol: float = 1e-9
) -> tuple[np.ndarray, float]:
    """Box-projected gradient descent with Armijo backtracking on the arc."""
    x = np.clip(x0, 0.0, 1.0)
    fx = objective(inst, x)
    # initial step from a cheap curvature scale; adapted multiplicatively
    scale = float(np.abs(inst.qsum).sum(axis=1).max())
    alpha = 1.0 / max(1.0, scale)
    for _ in range(max_iters):
        g = gradient(inst, x)
        if np.linalg.norm(x - np.clip(x - g, 0.0, 1.0)) <= tol:
            break
        step = alpha
        while True:
            xn = np.clip(x - step * g, 0.0, 1.0)
            d = xn - x
            fn = objective(inst, xn)
            if fn <= fx + 1e-4 * float(g @ d):
                break
            step *= 0.5
            if step < 1e-16:
                xn, fn = x, fx
                break
        if not (fn < fx) and np.array_equal(xn, x):
            break  # stationary within numerical resolution
        x, fx = xn, fn
        alpha = min(step * 2.0, 1e6)
    return x, fx


def oracle_best(
    inst: BoxQpInstance, n_starts: int = 100, max_iters: int = 1000, seed: int = 0
) -> tuple[BoxPoint, float]:
    """Best objective over multi-start projected gradient descent.

    Starts are drawn sequentially from one seeded stream, so the best
    value is monotone in n_starts for a fixed seed.  The result is a
    best-known value, not a certificate.
    """
    if n_starts < 1:
        raise ValueError(f"n_starts must be >= 1, got {n_starts}")
    rng = np.random.default_rng(seed)
    best_x: np.ndarray | None = None
    best_f = math.inf
    for _ in range(n_starts):
        x0 = rng.random(inst.n)
        x, f = _projected_gradient_descent(inst, x0, max_iters)
        if f < best_f:
            best_x, best_f = x, f
    assert best_x is not None
    return BoxPoint.clipped(best_x), best_f


def grid_oracle(inst: BoxQpInstance, points_per_axis: int) -> float:
    """Minimum of the objective over the regular grid including both endpoints."""
    if points_per_axis < 2:
        raise ValueError(f"points_per_axis must be >= 2, got {points_per_axis}")
    n = inst.n
    total = points_per_axis**n
    if total > GRID_BUDGET:
        raise ValueError(
            f"grid budget exceeded: {points_per_axis}^{n} = {total} > {GRID_BUDGET}"
        )
    axis = np.linspace(0.0, 1.0, points_per_axis)
    if n == 1:
        x = axis[:, None]
        vals = np.einsum("ki,ij,kj->k", x, inst.Q, x) + x @ inst.c
        return float(vals.min())
    # chunk along the first axis to bound memory
    tail = np.stack(
        np.meshgrid(*([axis] * (n - 1)), indexing="ij"), axis=-1
    ).reshape(-1, n - 1)
    best = math.inf
    chunk = np.empty((tail.shape[0], n))
    chunk[:, 1:] = tail
    for v in axis:
        chunk[:, 0] = v
        vals = np.einsum("ki,ij,kj->k", chunk, inst.Q, chunk) + chunk @ inst.c
        best = min(best, float(vals.min()))
    return best
