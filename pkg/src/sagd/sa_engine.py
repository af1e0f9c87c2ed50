"""Driver for the noisy root-finding recursion

    X_{n+1} = X_n - beta_n * ( G(X_n) + lambda_n(X_0..X_n) * W_{n+1} ).

Per-step order matters and is fixed: fold ||X_n|| into the multiplier's
running max, evaluate lambda_n, then consume the next noise draw.  A
non-finite iterate aborts the run with a divergence flag instead of
raising; heavy-tailed configurations are allowed to excurse and the
harness aggregates the flags.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .noise import NoiseModel, NoiseStream, trial_seed
from .problems import SAProblem
from .schedules import BatchMultiplierState, Multiplier, MultiplierKind, Schedule
from .utils import batch_norm, vector_norm

_CHUNK = 4096


@dataclass(frozen=True)
class RecordPolicy:
    """What to keep from a run: every step, a thinned subset, or checkpoints."""

    mode: str = "errors"  # "full" | "errors" | "thinned" | "checkpoints"
    stride: int = 1
    checkpoints: Optional[tuple] = None

    def __post_init__(self):
        if self.mode not in ("full", "errors", "thinned", "checkpoints"):
            raise ValueError(f"unknown record mode: {self.mode!r}")
        if self.mode == "thinned" and self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.mode == "checkpoints" and not self.checkpoints:
            raise ValueError("checkpoints mode needs indices")

    def wants(self, n: int, horizon: int) -> bool:
        if n == horizon:
            return True
        if self.mode in ("full", "errors"):
            return True
        if self.mode == "thinned":
            return n % self.stride == 0
        return n in self.checkpoints


@dataclass(frozen=True)
class SARunConfig:
    problem: SAProblem
    schedule: Schedule
    multiplier: Multiplier
    noise: NoiseModel
    x0: np.ndarray
    horizon: int
    seed: int = 0
    record: RecordPolicy = field(default_factory=RecordPolicy)

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not np.all(np.isfinite(self.x0)):
            raise ValueError("x0 must be finite")


@dataclass
class Trajectory:
    """One seeded run: recorded step data plus terminal state and flags."""

    run_id: int
    seed: int
    ns: np.ndarray
    beta: np.ndarray
    err: np.ndarray
    phi: np.ndarray
    lam: Optional[np.ndarray]
    states: Optional[np.ndarray]
    final_x: np.ndarray
    diverged: bool
    diverged_at: Optional[int]
    wall_time: float
    f_evals: int = 0
    extra: dict = field(default_factory=dict)


def sa_step(x: np.ndarray, beta: float, g_value: np.ndarray, lam: float, w: np.ndarray) -> np.ndarray:
    """One update of the recursion given the already-evaluated pieces."""
    return x - beta * (g_value + lam * w)


def sa_run(cfg: SARunConfig, run_id: int = 0) -> Trajectory:
    """Execute one seeded trajectory.

    Deterministic: identical config and seed reproduce the trajectory
    bit for bit.  Divergence (non-finite iterate) stops the run and
    returns the partial record with the flag set.
    """
    prob = cfg.problem
    N = cfg.horizon
    x = np.array(cfg.x0, dtype=float).reshape(prob.dim)
    stream = NoiseStream(cfg.noise, cfg.seed)
    mult = cfg.multiplier.make_state()
    beta = cfg.schedule.array(N + 1)
    full = cfg.record.mode == "full"

    ns, errs, phis, lams, states = [], [], [], [], []
    diverged = False
    diverged_at: Optional[int] = None
    t0 = time.perf_counter()
    n = 0
    while n < N and not diverged:
        k = min(_CHUNK, N - n)
        W = stream.block(k)
        for j in range(k):
            lam_n = mult.step(x)  # folds ||X_n|| into the running max first
            if cfg.record.wants(n, N):
                ns.append(n)
                errs.append(vector_norm(x - prob.x_star, prob.norm))
                phis.append(1.0 + mult.run_max)
                if full:
                    lams.append(lam_n)
                    states.append(x.copy())
            x = sa_step(x, beta[n], prob.g(x), lam_n, W[j])
            n += 1
            if not np.all(np.isfinite(x)):
                diverged = True
                diverged_at = n
                break
    if not diverged:
        # terminal state X_N
        mult_final = 1.0 + max(mult.run_max, vector_norm(x, cfg.multiplier.norm))
        ns.append(N)
        errs.append(vector_norm(x - prob.x_star, prob.norm))
        phis.append(mult_final)
        if full:
            lams.append(np.nan)
            states.append(x.copy())
    ns_arr = np.asarray(ns, dtype=int)
    return Trajectory(
        run_id=run_id,
        seed=cfg.seed,
        ns=ns_arr,
        beta=beta[ns_arr] if ns_arr.size else np.empty(0),
        err=np.asarray(errs),
        phi=np.asarray(phis),
        lam=np.asarray(lams) if full else None,
        states=np.asarray(states) if full else None,
        final_x=x,
        diverged=diverged,
        diverged_at=diverged_at,
        wall_time=time.perf_counter() - t0,
    )


def multiplier_audit(traj: Trajectory, C1: float, norm: str = "l2"):
    """Replay the recorded lambda values against the history bound.

    Requires the full-iterate record policy.  Returns (ok, first_bad_n).
    """
    if traj.states is None or traj.lam is None:
        raise ValueError("multiplier_audit needs a full-record trajectory")
    run_max = 0.0
    for idx in range(len(traj.ns) - (0 if traj.diverged else 1)):
        run_max = max(run_max, vector_norm(traj.states[idx], norm))
        lam = traj.lam[idx]
        if np.isnan(lam):
            continue
        if abs(lam) > C1 * (1.0 + run_max) + 1e-12:
            return False, int(traj.ns[idx])
    return True, None


@dataclass
class BatchResult:
    """Checkpointed errors for a batch of seeded trials (rows = trials)."""

    seeds: np.ndarray
    checkpoints: np.ndarray
    err: np.ndarray  # (trials, n_checkpoints), NaN after divergence
    phi: np.ndarray  # (trials, n_checkpoints)
    diverged: np.ndarray  # bool (trials,)
    diverged_at: np.ndarray  # int (trials,), -1 if finite throughout
    wall_time: float
    f_evals: Optional[np.ndarray] = None
    extra_cols: dict = field(default_factory=dict)


def sa_run_batch(
    problem: SAProblem,
    schedule: Schedule,
    multiplier: Multiplier,
    model: NoiseModel,
    x0: np.ndarray,
    horizon: int,
    checkpoints: Sequence[int],
    base_seed: int,
    trials: Sequence[int],
) -> BatchResult:
    """Run many seeds of one configuration with vectorized steps.

    ``trials`` are trial indices; trial t uses seed base_seed XOR t, so
    results are independent of how trials are grouped into batches.
    """
    if multiplier.kind is MultiplierKind.CUSTOM:
        raise ValueError("batch runs support built-in multipliers only")
    cps = np.asarray(sorted(set(int(c) for c in checkpoints)), dtype=int)
    if cps.size == 0 or cps[0] < 0 or cps[-1] > horizon:
        raise ValueError("checkpoints must be sorted within [0, horizon]")
    T = len(trials)
    d = problem.dim
    N = horizon
    seeds = np.array([trial_seed(base_seed, t) for t in trials], dtype=np.uint64)
    streams = [NoiseStream(model, int(s)) for s in seeds]
    beta = schedule.array(N + 1)
    X = np.tile(np.array(x0, dtype=float).reshape(1, d), (T, 1))
    mult = BatchMultiplierState(multiplier, T)
    err = np.full((T, cps.size), np.nan)
    phi = np.full((T, cps.size), np.nan)
    alive = np.ones(T, dtype=bool)
    div_at = np.full(T, -1, dtype=int)
    cp_pos = 0
    t0 = time.perf_counter()

    def record(n, cp_pos):
        while cp_pos < cps.size and cps[cp_pos] == n:
            e = batch_norm(X - problem.x_star, problem.norm)
            err[alive, cp_pos] = e[alive]
            phi[alive, cp_pos] = 1.0 + mult.run_max[alive]
            cp_pos += 1
        return cp_pos

    n = 0
    while n < N:
        k = min(_CHUNK, N - n)
        W = np.stack([s.block(k) for s in streams], axis=1)  # (k, T, d)
        for j in range(k):
            lam = mult.step(X)  # running max now includes ||X_n||
            cp_pos = record(n, cp_pos)
            X_new = X - beta[n] * (problem.g_batch(X) + lam[:, None] * W[j])
            finite = np.isfinite(X_new).all(axis=1)
            newly_dead = alive & ~finite
            if newly_dead.any():
                div_at[newly_dead] = n + 1
                X_new[newly_dead] = X[newly_dead]  # freeze last finite state
                alive = alive & finite
            if alive.all():
                X = X_new
            else:
                X[alive] = X_new[alive]
            n += 1
        if not alive.any():
            break
    mult.step(X)  # fold the terminal state into the running max
    cp_pos = record(N, cp_pos)
    return BatchResult(
        seeds=seeds,
        checkpoints=cps,
        err=err,
        phi=phi,
        diverged=div_at >= 0,
        diverged_at=div_at,
        wall_time=time.perf_counter() - t0,
        extra_cols={"beta_n": beta[cps]},
    )
