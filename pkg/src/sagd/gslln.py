"""Empirical harness for the damped-average noise recursion

    S_{n+1} = (1 - t * beta_n) S_n + t * beta_n * zeta_n * W_{n+1},

whose almost-sure convergence to zero (for every damping factor t > 0 and
every uniformly bounded adapted weight sequence zeta) is the property the
convergence theory hinges on.  Almost-sure statements are not falsifiable
at a finite horizon, so the harness tests decay proxies over seeded trial
ensembles: checkpoint quantiles, a mid-run versus final comparison, and a
tail supremum.

Also provides executable oracles for two deterministic facts used by the
analysis: the damped-average extension of Kronecker's lemma and the
three-fold logarithm inequality.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .noise import NoiseModel, NoiseStream, trial_seed
from .schedules import Schedule

_CHUNK = 4096


def gslln_step(S, t, beta, zeta, W):
    """One exact update of the damped-average recursion."""
    return (1.0 - t * beta) * np.asarray(S) + t * beta * zeta * np.asarray(W)


class ZetaKind:
    CONSTANT = "constant"  # zeta_n = value
    SIGNED = "signed"  # zeta_n = (-1)^n * bound
    NOISE_SIGN = "noise_sign"  # product of signs of past draws' first coordinate


@dataclass(frozen=True)
class ZetaPolicy:
    """A uniformly bounded weight sequence computable from past data only."""

    kind: str = ZetaKind.CONSTANT
    bound: float = 1.0

    def __post_init__(self):
        if self.kind not in (ZetaKind.CONSTANT, ZetaKind.SIGNED, ZetaKind.NOISE_SIGN):
            raise ValueError(f"unknown zeta kind: {self.kind!r}")
        if self.bound <= 0:
            raise ValueError("bound must be > 0")

    def describe(self) -> dict:
        return {"kind": self.kind, "bound": self.bound}


class ZetaState:
    """Vectorized per-trial weight evaluation.

    ``value(n)`` returns zeta_n for each trial; for the noise-driven kind
    this uses only draws with index <= n, and ``update`` folds in the next
    draw after the step consumed it.
    """

    def __init__(self, policy: ZetaPolicy, n_trials: int):
        self.policy = policy
        self.sign = np.ones(n_trials)

    def value(self, n: int) -> np.ndarray:
        p = self.policy
        if p.kind == ZetaKind.CONSTANT:
            return np.full(self.sign.size, p.bound)
        if p.kind == ZetaKind.SIGNED:
            return np.full(self.sign.size, p.bound * (-1.0 if n % 2 else 1.0))
        return p.bound * self.sign

    def update(self, W: np.ndarray):
        if self.policy.kind == ZetaKind.NOISE_SIGN:
            s = np.where(W[:, 0] >= 0, 1.0, -1.0)
            self.sign *= s


@dataclass(frozen=True)
class GsllnTestSpec:
    """One empirical test grid: (t values) x (zeta policies) x trials."""

    noise: NoiseModel
    rate: Schedule
    t_grid: tuple = (0.5, 1.0, 2.0, 5.0)
    zeta_policies: tuple = (ZetaPolicy(ZetaKind.CONSTANT),)
    trials: int = 100
    horizon: int = 100_000
    checkpoints: tuple = ()
    base_seed: int = 0
    threshold: float = 0.02

    def __post_init__(self):
        if self.trials < 1 or self.horizon < 2:
            raise ValueError("need trials >= 1 and horizon >= 2")
        cps = self.checkpoints or default_checkpoints(self.horizon)
        cps = tuple(sorted(set(int(c) for c in cps)))
        if cps[-1] != self.horizon:
            raise ValueError("checkpoints must include the horizon")
        object.__setattr__(self, "checkpoints", cps)


def default_checkpoints(horizon: int) -> tuple:
    ks = {int(k) for k in np.geomspace(min(10, horizon), horizon, num=12)}
    ks.add(horizon)
    return tuple(sorted(k for k in ks if 1 <= k <= horizon))


@dataclass
class GsllnCellResult:
    t: float
    zeta: ZetaPolicy
    checkpoints: np.ndarray
    abs_s: np.ndarray  # (trials, n_checkpoints), sup-norm of S
    tail_sup: np.ndarray  # (trials,) running max of |S| over n >= horizon/2
    verdict: str
    median_final: float
    median_mid: float


@dataclass
class GsllnReport:
    spec: GsllnTestSpec
    cells: list
    wall_time: float

    def cell(self, t: float, kind: str) -> GsllnCellResult:
        for c in self.cells:
            if c.t == t and c.zeta.kind == kind:
                return c
        raise KeyError((t, kind))


def run_cell(
    noise: NoiseModel,
    rate: Schedule,
    t: float,
    zeta: ZetaPolicy,
    trials: int,
    horizon: int,
    checkpoints: Sequence[int],
    base_seed: int,
) -> dict:
    """Run one (t, zeta) cell over seeded trials, vectorized across trials."""
    cps = np.asarray(sorted(set(int(c) for c in checkpoints)), dtype=int)
    T, d, N = trials, noise.dim, horizon
    streams = [NoiseStream(noise, trial_seed(base_seed, tr)) for tr in range(T)]
    beta = rate.array(N)
    S = np.zeros((T, d))
    zstate = ZetaState(zeta, T)
    abs_s = np.full((T, cps.size), np.nan)
    tail_sup = np.zeros(T)
    half = N // 2
    cp_pos = 0
    while cp_pos < cps.size and cps[cp_pos] == 0:
        abs_s[:, cp_pos] = 0.0  # S_0 = 0
        cp_pos += 1
    n = 0
    while n < N:
        k = min(_CHUNK, N - n)
        W = np.stack([s.block(k) for s in streams], axis=1)  # (k, T, d)
        for j in range(k):
            z = zstate.value(n)
            S = (1.0 - t * beta[n]) * S + (t * beta[n]) * z[:, None] * W[j]
            zstate.update(W[j])
            n += 1
            if n >= half:
                np.maximum(tail_sup, np.max(np.abs(S), axis=1), out=tail_sup)
            while cp_pos < cps.size and cps[cp_pos] == n:
                abs_s[:, cp_pos] = np.max(np.abs(S), axis=1)
                cp_pos += 1
    return {"checkpoints": cps, "abs_s": abs_s, "tail_sup": tail_sup}


def gslln_empirical_test(spec: GsllnTestSpec) -> GsllnReport:
    """Run every grid cell and attach a decay verdict per cell.

    A cell is "consistent" when the median final |S| is below the declared
    threshold and does not exceed the mid-run median; "inconsistent" when
    either check fails decisively; medians of empty cells would be
    "inconclusive" but the spec validation prevents that.
    """
    t0 = time.perf_counter()
    cps = np.asarray(spec.checkpoints, dtype=int)
    mid_idx = int(np.searchsorted(cps, spec.horizon // 2, side="right") - 1)
    cells = []
    for t in spec.t_grid:
        for z in spec.zeta_policies:
            raw = run_cell(
                spec.noise, spec.rate, t, z, spec.trials, spec.horizon, cps, spec.base_seed
            )
            med_final = float(np.median(raw["abs_s"][:, -1]))
            med_mid = float(np.median(raw["abs_s"][:, mid_idx]))
            ok = med_final <= spec.threshold and med_final <= med_mid
            cells.append(
                GsllnCellResult(
                    t=t,
                    zeta=z,
                    checkpoints=raw["checkpoints"],
                    abs_s=raw["abs_s"],
                    tail_sup=raw["tail_sup"],
                    verdict="consistent" if ok else "inconsistent",
                    median_final=med_final,
                    median_mid=med_mid,
                )
            )
    return GsllnReport(spec=spec, cells=cells, wall_time=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# deterministic oracles


def _z_sequence(z: Union[str, Callable, Sequence], N: int) -> Callable[[int], float]:
    """Resolve a z-sequence spec; z(n) is the value entering step n (z_{n+1})."""
    if callable(z):
        return z
    if isinstance(z, str):
        if z == "alternating":
            return lambda n: -1.0 if n % 2 else 1.0
        if z == "harmonic_decay":
            return lambda n: 1.0 / (n + 1.0)
        if z == "ones":
            return lambda n: 1.0
        raise ValueError(f"unknown z spec: {z!r}")
    arr = np.asarray(z, dtype=float)
    if arr.size < N:
        raise ValueError("z array shorter than the horizon")
    return lambda n: float(arr[n])


def kronecker_oracle(
    tau: Union[Schedule, Callable[[int], float]],
    z: Union[str, Callable, Sequence],
    N: int,
    checkpoints: Optional[Sequence[int]] = None,
) -> dict:
    """Brute-force run of s_{n+1} = (1 - tau_n) s_n + tau_n z_{n+1}.

    Returns the terminal value and a trace at the requested checkpoints.
    The damping sequence must be positive with tau_n -> 0 and divergent
    partial sums for the limit statements to apply.
    """
    tau_fn = tau.value if isinstance(tau, Schedule) else tau
    z_fn = _z_sequence(z, N)
    cps = sorted(set(int(c) for c in (checkpoints or []))) or [N]
    trace = {}
    s = 0.0
    cp_iter = iter(cps)
    next_cp = next(cp_iter, None)
    for n in range(N):
        tn = tau_fn(n)
        s = (1.0 - tn) * s + tn * z_fn(n)
        if next_cp is not None and n + 1 == next_cp:
            trace[n + 1] = s
            next_cp = next(cp_iter, None)
    return {"s_N": s, "trace": trace, "N": N}


def partition_of_unity_residual(tau_values: np.ndarray) -> float:
    """| prod_{j=m..n} (1 - tau_j) + sum_k prod_{j>k} (1 - tau_j) tau_k  -  1 |

    for the window of damping values tau_m .. tau_n passed in.  The
    identity is exact algebraically; the residual measures float error.
    """
    tau = np.asarray(tau_values, dtype=float)
    one_minus = 1.0 - tau
    # suffix[k] = prod_{j > k} (1 - tau_j), suffix[last] = 1
    suffix = np.ones(tau.size)
    suffix[:-1] = np.cumprod(one_minus[::-1])[::-1][1:]
    total = float(np.prod(one_minus) + np.sum(suffix * tau))
    return abs(total - 1.0)


def log_inequality_check(x: float, y: float, delta: float) -> dict:
    """Check log(1+x) <= 3 log(1+y) under the premise x / log(1+x)^delta <= y.

    Returns applicability, the verdict and the slack; a violated premise
    reports not-applicable rather than a failure.
    """
    if x <= 0 or y <= 0 or not 0 <= delta <= 1:
        raise ValueError("need x > 0, y > 0, delta in [0, 1]")
    lhs_premise = x / math.log1p(x) ** delta
    if lhs_premise > y * (1 + 1e-12):
        return {"applicable": False, "holds": None, "slack": None}
    slack = 3.0 * math.log1p(y) - math.log1p(x)
    return {"applicable": True, "holds": slack >= -1e-12, "slack": slack}
