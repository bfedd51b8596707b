"""Hashcash puzzles and the solution-count model behind the target table.

A vehicle traveling between two roadside units burns its idle CPU searching
for a nonce with H(nonce || H(seed)) below a target K.  The number of
solutions found in n hash draws from an output space of size N follows a
hypergeometric law, approximated here by Poisson with rate nK/N; inverting
that rate at a wanted success probability yields the per-traverse-time
target lookup table the units load at startup.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass

DEFAULT_SPACE = 1 << 256  # SHA-256 output space


class ModelError(ValueError):
    """Invalid probability or grid for the target model."""


@dataclass(frozen=True, slots=True)
class Target:
    """Difficulty bound K within an output space of size N (smaller = harder).

    K = N is allowed as the degenerate never-fail bound (every hash output
    is below it); derived targets stay within [1, N-1].
    """

    value: int
    space: int = DEFAULT_SPACE

    def __post_init__(self):
        if not 0 <= self.value <= self.space:
            raise ModelError(f"target {self.value} outside [0, {self.space}]")


@dataclass(frozen=True, slots=True)
class PowSolution:
    nonce: int
    achieved_value: int
    valid: bool
    simulated: bool = False


def _hash_value(inner: bytes, nonce: int, space: int) -> int:
    h = hashlib.sha256(nonce.to_bytes(8, "big") + inner).digest()
    value = int.from_bytes(h, "big")
    return value if space >= DEFAULT_SPACE else value % space


def solve_puzzle(seed: bytes, target: Target, hash_budget: int) -> PowSolution:
    """Scan nonces 0..budget-1 and keep the lowest hash value seen.

    Deterministic in (seed, target, budget).  The returned solution is
    flagged valid when the best value beats the target; an unsolved budget
    is not an error.
    """
    if hash_budget < 1:
        raise ModelError("hash budget must be at least 1")
    inner = hashlib.sha256(seed).digest()
    best_nonce, best_value = 0, _hash_value(inner, 0, target.space)
    for nonce in range(1, hash_budget):
        value = _hash_value(inner, nonce, target.space)
        if value < best_value:  # strict: ties keep the lowest nonce
            best_nonce, best_value = nonce, value
    return PowSolution(best_nonce, best_value, best_value < target.value)


def verify_puzzle(seed: bytes, nonce: int, target: Target) -> bool:
    """Recompute the double hash for one nonce; two hashes, constant work."""
    inner = hashlib.sha256(seed).digest()
    return _hash_value(inner, nonce, target.space) < target.value


def count_solutions(seed: bytes, target: Target, hash_budget: int) -> int:
    """Number of winning nonces in the budget (experiment support)."""
    inner = hashlib.sha256(seed).digest()
    return sum(1 for nonce in range(hash_budget)
               if _hash_value(inner, nonce, target.space) < target.value)


# ---------------------------------------------------------------------------
# Poisson solution-count model
# ---------------------------------------------------------------------------

def poisson_pmf(k: int, lam: float) -> float:
    """P(X = k) for X ~ Poisson(lam)."""
    if k < 0 or lam < 0:
        raise ModelError("pmf needs k >= 0 and lam >= 0")
    if lam == 0:
        return 1.0 if k == 0 else 0.0
    return math.exp(k * math.log(lam) - lam - math.lgamma(k + 1))


def survival(i: int, lam: float) -> float:
    """P(X >= i), computed as 1 - sum_{k<i} pmf(k) with compensated summation."""
    if i < 0 or lam < 0:
        raise ModelError("survival needs i >= 0 and lam >= 0")
    if i == 0:
        return 1.0
    return max(0.0, 1.0 - math.fsum(poisson_pmf(k, lam) for k in range(i)))


def multi_trajectory_success_prob(i: int, j: int, lam: float) -> float:
    """Probability of sustaining i concurrent trajectories across j hops.

    Each hop independently yields X ~ Poisson(lam) puzzle solutions; all i
    trajectories survive a hop only when X >= i, so the overall probability
    is P(X >= i)^j.  i = 1 is the honest single-trajectory case.
    """
    if i < 1 or j < 1:
        raise ModelError("need i >= 1 trajectories and j >= 1 hops")
    return survival(i, lam) ** j


def solution_rate(target: Target, hash_rate: float, traverse_time: float) -> float:
    """Expected solution count lam = n*K/N for n = hash_rate * traverse_time."""
    return hash_rate * traverse_time * target.value / target.space


def sample_solution_count(lam: float, rng) -> int:
    """Draw a Poisson(lam) solution count from a numpy Generator."""
    if lam < 0:
        raise ModelError("lam must be >= 0")
    return int(rng.poisson(lam))


def analytic_target(p: float, hash_rate: float, traverse_time: float,
                    space: int = DEFAULT_SPACE) -> Target:
    """Smallest K whose solve probability over the traverse reaches p.

    Inverts P(X >= 1) = 1 - exp(-n*K/N) = p at n = hash_rate*traverse_time,
    giving K = ceil(-ln(1-p) * N / n), clamped into [1, N-1] so degenerate
    grids never produce an impossible target.
    """
    if not 0.0 < p < 1.0:
        raise ModelError(f"success rate must be in (0, 1), got {p}")
    draws = hash_rate * traverse_time
    if draws <= 0:
        raise ModelError("hash_rate * traverse_time must be positive")
    k = math.ceil(-math.log1p(-p) * space / draws)
    return Target(min(max(k, 1), space - 1), space)


# ---------------------------------------------------------------------------
# Target lookup table
# ---------------------------------------------------------------------------

TABLE_CSV_HEADER = ["traverse_time_s", "success_rate", "target_hex"]


@dataclass(slots=True)
class TargetTable:
    """Rows of (traverse_time, success_rate, K) plus the rate units verify at."""

    rows: list[tuple[float, float, int]]
    hash_rate: float
    space: int = DEFAULT_SPACE
    operating_rate: float | None = None

    def __post_init__(self):
        if not self.rows:
            raise ModelError("target table must not be empty")
        self.rows.sort(key=lambda r: (r[0], r[1]))
        if self.operating_rate is None:
            self.operating_rate = max(r[1] for r in self.rows)

    def times(self) -> list[float]:
        return sorted({r[0] for r in self.rows})

    def rates(self) -> list[float]:
        return sorted({r[1] for r in self.rows})


def build_target_table(success_rates: list[float], time_grid: list[float],
                       hash_rate: float, space: int = DEFAULT_SPACE,
                       mode: str = "analytic", trials: int = 1000,
                       operating_rate: float | None = None) -> TargetTable:
    """Fill the (time x rate) grid with targets.

    ``analytic`` mode inverts the Poisson model per cell; ``monte_carlo``
    runs ``trials`` real puzzle searches per cell and takes the empirical
    p-quantile of the per-trial minimum hash value.  Monte-Carlo is meant
    for reduced output spaces; at the full 2^256 space a single cell would
    hash for minutes.
    """
    if not success_rates or not time_grid:
        raise ModelError("success_rates and time_grid must be non-empty")
    rows = []
    for t in time_grid:
        for p in success_rates:
            if mode == "analytic":
                k = analytic_target(p, hash_rate, t, space).value
            elif mode == "monte_carlo":
                k = _monte_carlo_target(p, hash_rate, t, space, trials)
            else:
                raise ModelError(f"unknown table mode {mode!r}")
            rows.append((float(t), float(p), k))
    return TargetTable(rows=rows, hash_rate=hash_rate, space=space,
                       operating_rate=operating_rate)


def _monte_carlo_target(p: float, hash_rate: float, traverse_time: float,
                        space: int, trials: int) -> int:
    if not 0.0 < p < 1.0:
        raise ModelError(f"success rate must be in (0, 1), got {p}")
    budget = max(1, round(hash_rate * traverse_time))
    free = Target(space - 1, space)  # validity flag unused, only minima matter
    minima = sorted(
        solve_puzzle(b"trial:%d:%d" % (round(traverse_time * 1000), i), free,
                     budget).achieved_value
        for i in range(trials))
    # Smallest K with at least a p fraction of trial minima strictly below it.
    idx = max(0, math.ceil(p * trials) - 1)
    return min(max(minima[idx] + 1, 1), space - 1)


def lookup_target(table: TargetTable, traverse_time: float,
                  rate: float | None = None) -> Target:
    """Row with the greatest time <= traverse_time at the operating rate.

    Times below the first row fall back to the first (most lenient) row;
    times beyond the last saturate at the hardest row.
    """
    rate = table.operating_rate if rate is None else rate
    candidates = [r for r in table.rows if r[1] == rate]
    if not candidates:
        raise ModelError(f"no table rows at success rate {rate}")
    chosen = candidates[0]
    for row in candidates:
        if row[0] <= traverse_time:
            chosen = row
    return Target(chosen[2], table.space)


def dump_table_csv(table: TargetTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TABLE_CSV_HEADER)
    for t, p, k in table.rows:
        writer.writerow([f"{t:g}", f"{p:g}", format(k, "x")])
    return buf.getvalue()


def load_table_csv(text: str, hash_rate: float, space: int = DEFAULT_SPACE,
                   operating_rate: float | None = None) -> TargetTable:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != TABLE_CSV_HEADER:
        raise ModelError(f"unexpected table header: {header}")
    rows = [(float(t), float(p), int(k, 16)) for t, p, k in reader]
    return TargetTable(rows=rows, hash_rate=hash_rate, space=space,
                       operating_rate=operating_rate)
