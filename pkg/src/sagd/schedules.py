"""Step-size schedules, finite-difference increments and noise multipliers.

Every schedule is a pure closed-form function of the step index n.  Series
verdicts (divergence / summability) are decided analytically from the
asymptotic signature beta_n ~ coef * n^(-a) * log(n)^(-b) via the integral
test; partial sums are reported alongside as numeric evidence.  A verdict
of "inconclusive" is allowed and is preferred over a truncation-based
guess.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .utils import batch_norm, vector_norm


class ScheduleKind(str, Enum):
    HARMONIC = "harmonic"  # D / (n + 1)
    POWER = "power"  # D * n^(-gamma), value D at n = 0
    LOG_TEMPERED = "log_tempered"  # D / (n * log(1+n)^delta), value D at n = 0
    CONSTANT = "constant"  # D (testing only)


@dataclass(frozen=True)
class Schedule:
    """A positive step-size sequence beta_n with closed-form evaluation."""

    kind: ScheduleKind
    D: float = 1.0
    gamma: Optional[float] = None
    delta: Optional[float] = None

    def __post_init__(self):
        if self.D <= 0:
            raise ValueError("D must be > 0")
        if self.kind is ScheduleKind.POWER:
            if self.gamma is None or not 0 < self.gamma <= 1:
                raise ValueError("power schedule needs gamma in (0, 1]")
        if self.kind is ScheduleKind.LOG_TEMPERED:
            if self.delta is None or not 0 < self.delta <= 1:
                raise ValueError("log_tempered schedule needs delta in (0, 1]")

    def value(self, n: int) -> float:
        if n < 0:
            raise ValueError("n must be >= 0")
        k = self.kind
        if k is ScheduleKind.HARMONIC:
            return self.D / (n + 1.0)
        if k is ScheduleKind.POWER:
            return self.D if n == 0 else self.D * float(n) ** (-self.gamma)
        if k is ScheduleKind.LOG_TEMPERED:
            return self.D if n == 0 else self.D / (n * math.log1p(n) ** self.delta)
        return self.D  # constant

    def array(self, N: int) -> np.ndarray:
        """Values beta_0 .. beta_{N-1} as a vector."""
        n = np.arange(N, dtype=float)
        k = self.kind
        if k is ScheduleKind.HARMONIC:
            return self.D / (n + 1.0)
        if k is ScheduleKind.POWER:
            out = np.full(N, self.D)
            out[1:] = self.D * n[1:] ** (-self.gamma)
            return out
        if k is ScheduleKind.LOG_TEMPERED:
            out = np.full(N, self.D)
            out[1:] = self.D / (n[1:] * np.log1p(n[1:]) ** self.delta)
            return out
        return np.full(N, self.D)

    def signature(self):
        """Asymptotic (coef, n_exponent, log_exponent) of beta_n."""
        k = self.kind
        if k is ScheduleKind.HARMONIC:
            return (self.D, 1.0, 0.0)
        if k is ScheduleKind.POWER:
            return (self.D, self.gamma, 0.0)
        if k is ScheduleKind.LOG_TEMPERED:
            return (self.D, 1.0, self.delta)
        return (self.D, 0.0, 0.0)

    @property
    def vanishes(self) -> bool:
        return self.kind is not ScheduleKind.CONSTANT

    def describe(self) -> dict:
        out = {"kind": self.kind.value, "D": self.D}
        if self.gamma is not None:
            out["gamma"] = self.gamma
        if self.delta is not None:
            out["delta"] = self.delta
        return out


def harmonic(D: float = 1.0) -> Schedule:
    return Schedule(ScheduleKind.HARMONIC, D=D)


def power(gamma: float, D: float = 1.0) -> Schedule:
    return Schedule(ScheduleKind.POWER, D=D, gamma=gamma)


def log_tempered(delta: float = 1.0, D: float = 1.0) -> Schedule:
    return Schedule(ScheduleKind.LOG_TEMPERED, D=D, delta=delta)


def constant(D: float) -> Schedule:
    return Schedule(ScheduleKind.CONSTANT, D=D)


class IncrementKind(str, Enum):
    LOG_POWER = "log_power"  # 1 / log(2+n)^kappa
    POWER = "power"  # n^(-gamma), value 1 at n = 0
    CONSTANT = "constant"  # diagnostics only; violates c_n -> 0


@dataclass(frozen=True)
class IncrementSchedule:
    """Finite-difference half-width sequence c_n.

    The log_power and power kinds decay to zero as the central-difference
    increments must; the constant kind exists only for substitution
    diagnostics in the condition checkers.
    """

    kind: IncrementKind
    kappa: Optional[float] = None
    gamma: Optional[float] = None
    value0: float = 1.0

    def __post_init__(self):
        if self.kind is IncrementKind.LOG_POWER:
            if self.kappa is None or not 0 < self.kappa <= 1:
                raise ValueError("log_power increment needs kappa in (0, 1]")
        if self.kind is IncrementKind.POWER:
            if self.gamma is None or not 0 < self.gamma <= 1:
                raise ValueError("power increment needs gamma in (0, 1]")
        if self.value0 <= 0:
            raise ValueError("constant increment must be > 0")

    def value(self, n: int) -> float:
        if n < 0:
            raise ValueError("n must be >= 0")
        if self.kind is IncrementKind.LOG_POWER:
            return 1.0 / math.log(2.0 + n) ** self.kappa
        if self.kind is IncrementKind.POWER:
            return 1.0 if n == 0 else float(n) ** (-self.gamma)
        return self.value0

    def array(self, N: int) -> np.ndarray:
        n = np.arange(N, dtype=float)
        if self.kind is IncrementKind.LOG_POWER:
            return 1.0 / np.log(2.0 + n) ** self.kappa
        if self.kind is IncrementKind.POWER:
            out = np.ones(N)
            out[1:] = n[1:] ** (-self.gamma)
            return out
        return np.full(N, self.value0)

    def signature(self):
        if self.kind is IncrementKind.LOG_POWER:
            return (1.0, 0.0, self.kappa)
        if self.kind is IncrementKind.POWER:
            return (1.0, self.gamma, 0.0)
        return (self.value0, 0.0, 0.0)

    @property
    def vanishes(self) -> bool:
        return self.kind is not IncrementKind.CONSTANT

    def describe(self) -> dict:
        out = {"kind": self.kind.value}
        if self.kappa is not None:
            out["kappa"] = self.kappa
        if self.gamma is not None:
            out["gamma"] = self.gamma
        if self.kind is IncrementKind.CONSTANT:
            out["value"] = self.value0
        return out


def log_power_increment(kappa: float = 1.0) -> IncrementSchedule:
    return IncrementSchedule(IncrementKind.LOG_POWER, kappa=kappa)


def power_increment(gamma: float) -> IncrementSchedule:
    return IncrementSchedule(IncrementKind.POWER, gamma=gamma)


def constant_increment(value: float) -> IncrementSchedule:
    return IncrementSchedule(IncrementKind.CONSTANT, value0=value)


# ---------------------------------------------------------------------------
# series verdicts


def series_verdict(signature, square: bool = False) -> str:
    """Integral-test verdict for sum of coef * n^(-a) * log(n)^(-b).

    Returns "diverges", "converges" or "inconclusive".  Exact for the
    closed forms produced by Schedule/IncrementSchedule signatures and
    their products/quotients.
    """
    _, a, b = signature
    if square:
        a, b = 2 * a, 2 * b
    if a > 1:
        return "converges"
    if a < 1:
        return "diverges"
    # a == 1: sum 1/(n log^b): converges iff b > 1
    if b > 1:
        return "converges"
    return "diverges"


def combine_signatures(sig1, sig2, op: str):
    c1, a1, b1 = sig1
    c2, a2, b2 = sig2
    if op == "mul":
        return (c1 * c2, a1 + a2, b1 + b2)
    if op == "div":
        return (c1 / c2, a1 - a2, b1 - b2)
    raise ValueError(op)


@dataclass(frozen=True)
class SeriesReport:
    """Partial sum to a horizon plus the analytic tail verdict."""

    partial_sum: float
    horizon: int
    verdict: str


def _partial_sum(values: np.ndarray) -> float:
    return float(np.sum(values))


def check_rm_conditions(s: Schedule, horizon: int) -> dict:
    """Divergence of sum(beta) and summability of sum(beta^2) up to horizon.

    The verdicts are analytic (integral test on the closed form); the
    partial sums are numeric evidence at the requested horizon.
    """
    if horizon < 1000:
        raise ValueError("horizon must be >= 1e3")
    vals = s.array(horizon)
    sig = s.signature()
    return {
        "sum": SeriesReport(_partial_sum(vals), horizon, series_verdict(sig)),
        "sum_sq": SeriesReport(_partial_sum(vals**2), horizon, series_verdict(sig, square=True)),
        "vanishes": s.vanishes,
        "satisfied": s.vanishes
        and series_verdict(sig) == "diverges"
        and series_verdict(sig, square=True) == "converges",
    }


def check_kwb_conditions(eta: Schedule, c: IncrementSchedule, horizon: int) -> dict:
    """The four joint step/increment requirements for two-point schemes:

    c_n -> 0,  sum (eta/c)^2 < inf,  sum eta*c < inf,  sum eta = inf.
    """
    if horizon < 1000:
        raise ValueError("horizon must be >= 1e3")
    ev = eta.array(horizon)
    cv = c.array(horizon)
    sig_eta = eta.signature()
    sig_ratio = combine_signatures(sig_eta, c.signature(), "div")
    sig_prod = combine_signatures(sig_eta, c.signature(), "mul")
    clauses = {
        "increment_vanishes": c.vanishes,
        "ratio_sq": SeriesReport(
            _partial_sum((ev / cv) ** 2), horizon, series_verdict(sig_ratio, square=True)
        ),
        "product": SeriesReport(_partial_sum(ev * cv), horizon, series_verdict(sig_prod)),
        "step_sum": SeriesReport(_partial_sum(ev), horizon, series_verdict(sig_eta)),
    }
    clauses["satisfied"] = (
        clauses["increment_vanishes"]
        and clauses["ratio_sq"].verdict == "converges"
        and clauses["product"].verdict == "converges"
        and clauses["step_sum"].verdict == "diverges"
    )
    return clauses


def monotone_tail_start(s: Schedule, limit: int = 1000) -> Optional[int]:
    """Smallest n* <= limit past which beta_n < 1 and is nonincreasing."""
    vals = s.array(limit + 2)
    for n_star in range(limit + 1):
        tail = vals[n_star:]
        if tail[0] < 1.0 and np.all(np.diff(tail) <= 1e-15):
            return n_star
    return None


# ---------------------------------------------------------------------------
# multipliers


class MultiplierKind(str, Enum):
    CONSTANT = "constant"
    NORM_TRACKING = "norm_tracking"  # C1 * (1 + max_k ||u_k||), exactly at the bound
    SIGNED = "signed"  # C1 * (-1)^n
    CUSTOM = "custom"  # user callable; audited, not certified


@dataclass(frozen=True)
class Multiplier:
    """History-dependent noise coefficient, bounded by C1*(1 + max_k ||u_k||)."""

    kind: MultiplierKind
    C1: float = 1.0
    value: Optional[float] = None  # constant kind
    norm: str = "l2"
    fn: Optional[Callable[[int, Sequence[np.ndarray]], float]] = None

    def __post_init__(self):
        if self.C1 <= 0:
            raise ValueError("C1 must be > 0")
        if self.kind is MultiplierKind.CONSTANT:
            v = self.C1 if self.value is None else self.value
            if abs(v) > self.C1:
                raise ValueError("constant multiplier must satisfy |value| <= C1")
        if self.kind is MultiplierKind.CUSTOM and self.fn is None:
            raise ValueError("custom multiplier needs fn")

    def make_state(self) -> "MultiplierState":
        return MultiplierState(self)

    def describe(self) -> dict:
        out = {"kind": self.kind.value, "C1": self.C1}
        if self.kind is MultiplierKind.CONSTANT:
            out["value"] = self.C1 if self.value is None else self.value
        if self.kind is MultiplierKind.NORM_TRACKING:
            out["norm"] = self.norm
        return out


def constant_multiplier(value: float = 1.0, C1: Optional[float] = None) -> Multiplier:
    return Multiplier(MultiplierKind.CONSTANT, C1=abs(value) if C1 is None else C1, value=value)


def norm_tracking_multiplier(C1: float = 1.0, norm: str = "l2") -> Multiplier:
    return Multiplier(MultiplierKind.NORM_TRACKING, C1=C1, norm=norm)


def signed_multiplier(C1: float = 1.0) -> Multiplier:
    return Multiplier(MultiplierKind.SIGNED, C1=C1)


def custom_multiplier(fn, C1: float = 1.0, norm: str = "l2") -> Multiplier:
    return Multiplier(MultiplierKind.CUSTOM, C1=C1, norm=norm, fn=fn)


class MultiplierState:
    """Per-trajectory incremental evaluator: O(1) per step via a running max.

    ``step(u_n)`` folds the n-th iterate into the history and returns
    lambda_n(u_0, ..., u_n).  Custom multipliers keep the full history.
    """

    def __init__(self, spec: Multiplier):
        self.spec = spec
        self.n = -1
        self.run_max = 0.0
        self._history: Optional[list] = [] if spec.kind is MultiplierKind.CUSTOM else None

    def step(self, u: np.ndarray) -> float:
        self.n += 1
        self.run_max = max(self.run_max, vector_norm(np.asarray(u, dtype=float), self.spec.norm))
        k = self.spec.kind
        if k is MultiplierKind.CONSTANT:
            return self.spec.C1 if self.spec.value is None else self.spec.value
        if k is MultiplierKind.NORM_TRACKING:
            return self.spec.C1 * (1.0 + self.run_max)
        if k is MultiplierKind.SIGNED:
            return self.spec.C1 * (-1.0 if self.n % 2 else 1.0)
        self._history.append(np.asarray(u, dtype=float))
        return float(self.spec.fn(self.n, self._history))


class BatchMultiplierState:
    """Vectorized multiplier evaluation for a batch of trajectories."""

    def __init__(self, spec: Multiplier, n_trials: int):
        if spec.kind is MultiplierKind.CUSTOM:
            raise ValueError("custom multipliers run single-trajectory only")
        self.spec = spec
        self.n = -1
        self.run_max = np.zeros(n_trials)

    def step(self, U: np.ndarray) -> np.ndarray:
        """U has shape (trials, d); returns lambda_n per trial."""
        self.n += 1
        np.maximum(self.run_max, batch_norm(U, self.spec.norm), out=self.run_max)
        k = self.spec.kind
        if k is MultiplierKind.CONSTANT:
            v = self.spec.C1 if self.spec.value is None else self.spec.value
            return np.full(U.shape[0], v)
        if k is MultiplierKind.NORM_TRACKING:
            return self.spec.C1 * (1.0 + self.run_max)
        return np.full(U.shape[0], self.spec.C1 * (-1.0 if self.n % 2 else 1.0))


def eval_multiplier(m: Multiplier, history: Sequence[np.ndarray]) -> float:
    """One-shot evaluation of lambda_n on a full history (u_0 .. u_n)."""
    if len(history) == 0:
        raise ValueError("history must be nonempty")
    state = m.make_state()
    out = 0.0
    for u in history:
        out = state.step(u)
    return out


def multiplier_bound_holds(m: Multiplier, history: Sequence[np.ndarray], value: float) -> bool:
    """|value| <= C1 * (1 + max_k ||u_k||) for the given history."""
    mx = max(vector_norm(np.asarray(u, dtype=float), m.norm) for u in history)
    return abs(value) <= m.C1 * (1.0 + mx) + 1e-12
