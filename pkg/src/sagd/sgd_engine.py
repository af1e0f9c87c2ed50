"""Zeroth-order block-coordinate descent from noisy function values.

Each step evaluates F at y +/- c_n e_i for every active coordinate i and
moves along the noisy two-point central difference:

    y_i <- y_i - eta_n * [ (F(y + c_n e_i) + xi_n M'_i)
                           - (F(y - c_n e_i) + xi_n M''_i) ] / (2 c_n).

Coordinates with mask psi_{n,i} = 0 are left untouched.  Noise pairs are
drawn for all coordinates every step regardless of the mask, which keeps
the draw stream independent of the masking and replayable.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .noise import NoiseModel, NoiseStream, trial_seed
from .problems import SGDProblem
from .sa_engine import BatchResult, RecordPolicy, Trajectory
from .schedules import (
    BatchMultiplierState,
    IncrementSchedule,
    Multiplier,
    MultiplierKind,
    Schedule,
    series_verdict,
)
from .utils import batch_norm, vector_norm

_CHUNK = 4096


class MaskKind:
    ALL_ONES = "all_ones"
    ROUND_ROBIN = "round_robin"
    NOISE_DRIVEN = "noise_driven"


@dataclass(frozen=True)
class MaskPolicy:
    """Which coordinates update at step n.

    ``all_ones`` updates everything; ``round_robin`` cycles blocks of size
    ``bsz`` so each coordinate is active on an arithmetic progression;
    ``noise_driven`` activates coordinate i when the running parity of
    negative signs seen in past half-difference draws is even, a
    past-measurable rule with guaranteed recurrence.
    """

    kind: str = MaskKind.ALL_ONES
    dim: int = 1
    bsz: int = 1

    def __post_init__(self):
        if self.kind not in (MaskKind.ALL_ONES, MaskKind.ROUND_ROBIN, MaskKind.NOISE_DRIVEN):
            raise ValueError(f"unknown mask kind: {self.kind!r}")
        if self.dim < 1 or self.bsz < 1:
            raise ValueError("dim and bsz must be >= 1")

    @property
    def deterministic(self) -> bool:
        return self.kind != MaskKind.NOISE_DRIVEN

    @property
    def n_blocks(self) -> int:
        return math.ceil(self.dim / self.bsz)

    def row(self, n: int) -> np.ndarray:
        """Deterministic mask row psi_n (0/1 vector of length dim)."""
        if self.kind == MaskKind.ALL_ONES:
            return np.ones(self.dim)
        if self.kind == MaskKind.ROUND_ROBIN:
            out = np.zeros(self.dim)
            j = n % self.n_blocks
            out[j * self.bsz : (j + 1) * self.bsz] = 1.0
            return out
        raise ValueError("noise_driven masks are stateful; use MaskState")

    def describe(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == MaskKind.ROUND_ROBIN:
            out["bsz"] = self.bsz
        return out


class MaskState:
    """Stateful mask evaluation; the noise-driven rule tracks sign parity
    of past half-difference draws per coordinate (and per trial)."""

    def __init__(self, policy: MaskPolicy, n_trials: int = 1):
        self.policy = policy
        self.parity = np.zeros((n_trials, policy.dim), dtype=bool)

    def row(self, n: int) -> np.ndarray:
        """(trials, dim) 0/1 array for step n, before seeing M_{n+1}."""
        if self.policy.deterministic:
            return np.broadcast_to(self.policy.row(n), self.parity.shape)
        return (~self.parity).astype(float)

    def update(self, m_half: np.ndarray):
        """Fold the step's half-difference draws (trials, dim) into the state."""
        if not self.policy.deterministic:
            self.parity ^= m_half < 0


@dataclass(frozen=True)
class SGDRunConfig:
    problem: SGDProblem
    eta: Schedule
    c: IncrementSchedule
    mask: MaskPolicy
    multiplier: Multiplier
    noise: NoiseModel
    y0: np.ndarray
    horizon: int
    seed: int = 0
    record: RecordPolicy = field(default_factory=RecordPolicy)

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not np.all(np.isfinite(self.y0)):
            raise ValueError("y0 must be finite")
        if self.mask.dim != self.problem.dim:
            raise ValueError("mask dim must match problem dim")


def sgd_step(y, f, psi_row, eta, c, xi, m_plus, m_minus):
    """One masked update; returns (y_next, n_function_evaluations)."""
    y = np.asarray(y, dtype=float).copy()
    active = np.flatnonzero(psi_row)
    for i in active:
        e = np.zeros(y.size)
        e[i] = c
        diff = ((f(y + e) + xi * m_plus[i]) - (f(y - e) + xi * m_minus[i])) / (2.0 * c)
        y[i] = y[i] - eta * diff
    return y, 2 * active.size


def sgd_run(cfg: SGDRunConfig, run_id: int = 0) -> Trajectory:
    """One seeded trajectory; errors recorded in the sup norm."""
    prob = cfg.problem
    N = cfg.horizon
    y = np.array(cfg.y0, dtype=float).reshape(prob.dim)
    stream = NoiseStream(cfg.noise, cfg.seed, paired=True)
    mult = cfg.multiplier.make_state()
    mask = MaskState(cfg.mask, 1)
    eta = cfg.eta.array(N + 1)
    cv = cfg.c.array(N + 1)
    full = cfg.record.mode == "full"

    ns, errs, phis, lams, states, actives = [], [], [], [], [], []
    evals = 0
    diverged = False
    diverged_at: Optional[int] = None
    t0 = time.perf_counter()
    n = 0
    while n < N and not diverged:
        k = min(_CHUNK, N - n)
        Mp, Mm = stream.pair_block(k)
        for j in range(k):
            xi = mult.step(y)
            psi = mask.row(n)[0]
            if cfg.record.wants(n, N):
                ns.append(n)
                errs.append(vector_norm(y - prob.x_star, "linf"))
                phis.append(1.0 + mult.run_max)
                actives.append(int(psi.sum()))
                if full:
                    lams.append(xi)
                    states.append(y.copy())
            y, ev = sgd_step(y, prob.f, psi, eta[n], cv[n], xi, Mp[j], Mm[j])
            evals += ev
            mask.update(0.5 * (Mp[j] - Mm[j])[None, :])
            n += 1
            if not np.all(np.isfinite(y)):
                diverged = True
                diverged_at = n
                break
    if not diverged:
        ns.append(N)
        errs.append(vector_norm(y - prob.x_star, "linf"))
        phis.append(1.0 + max(mult.run_max, vector_norm(y, cfg.multiplier.norm)))
        actives.append(0)
        if full:
            lams.append(np.nan)
            states.append(y.copy())
    ns_arr = np.asarray(ns, dtype=int)
    return Trajectory(
        run_id=run_id,
        seed=cfg.seed,
        ns=ns_arr,
        beta=eta[ns_arr] if ns_arr.size else np.empty(0),
        err=np.asarray(errs),
        phi=np.asarray(phis),
        lam=np.asarray(lams) if full else None,
        states=np.asarray(states) if full else None,
        final_x=y,
        diverged=diverged,
        diverged_at=diverged_at,
        wall_time=time.perf_counter() - t0,
        f_evals=evals,
        extra={"c_n": cv[ns_arr] if ns_arr.size else np.empty(0), "active": np.asarray(actives)},
    )


def sgd_run_batch(
    problem: SGDProblem,
    eta: Schedule,
    c: IncrementSchedule,
    mask: MaskPolicy,
    multiplier: Multiplier,
    model: NoiseModel,
    y0: np.ndarray,
    horizon: int,
    checkpoints: Sequence[int],
    base_seed: int,
    trials: Sequence[int],
) -> BatchResult:
    """Vectorized multi-seed runs; see sa_run_batch for the conventions."""
    if multiplier.kind is MultiplierKind.CUSTOM:
        raise ValueError("batch runs support built-in multipliers only")
    cps = np.asarray(sorted(set(int(x) for x in checkpoints)), dtype=int)
    if cps.size == 0 or cps[0] < 0 or cps[-1] > horizon:
        raise ValueError("checkpoints must be sorted within [0, horizon]")
    T = len(trials)
    d = problem.dim
    N = horizon
    seeds = np.array([trial_seed(base_seed, t) for t in trials], dtype=np.uint64)
    streams = [NoiseStream(model, int(s), paired=True) for s in seeds]
    ev = eta.array(N + 1)
    cv = c.array(N + 1)
    Y = np.tile(np.array(y0, dtype=float).reshape(1, d), (T, 1))
    mult = BatchMultiplierState(multiplier, T)
    mstate = MaskState(mask, T)
    err = np.full((T, cps.size), np.nan)
    phi = np.full((T, cps.size), np.nan)
    alive = np.ones(T, dtype=bool)
    div_at = np.full(T, -1, dtype=int)
    f_evals = np.zeros(T, dtype=np.int64)
    active_at_cp = np.full((T, cps.size), 0, dtype=int)
    cp_pos = 0
    t0 = time.perf_counter()

    def record(n, cp_pos, psi):
        while cp_pos < cps.size and cps[cp_pos] == n:
            e = batch_norm(Y - problem.x_star, "linf")
            err[alive, cp_pos] = e[alive]
            phi[alive, cp_pos] = 1.0 + mult.run_max[alive]
            if psi is not None:
                active_at_cp[alive, cp_pos] = psi[alive].sum(axis=1).astype(int)
            cp_pos += 1
        return cp_pos

    n = 0
    while n < N:
        k = min(_CHUNK, N - n)
        Mp = np.empty((k, T, d))
        Mm = np.empty((k, T, d))
        for t, s in enumerate(streams):
            a, b = s.pair_block(k)
            Mp[:, t, :] = a
            Mm[:, t, :] = b
        for j in range(k):
            xi = mult.step(Y)
            psi = mstate.row(n)
            cp_pos = record(n, cp_pos, psi)
            step = np.zeros_like(Y)
            cn = cv[n]
            for i in range(d):
                col_active = psi[:, i] > 0
                if not col_active.any():
                    continue
                e = np.zeros(d)
                e[i] = cn
                diff = (problem.f_batch(Y + e) - problem.f_batch(Y - e)) / (2.0 * cn)
                noise_i = xi * (Mp[j, :, i] - Mm[j, :, i]) / (2.0 * cn)
                step[:, i] = np.where(col_active, diff + noise_i, 0.0)
                f_evals += 2 * (col_active & alive)
            Y_new = Y - ev[n] * step
            finite = np.isfinite(Y_new).all(axis=1)
            newly_dead = alive & ~finite
            if newly_dead.any():
                div_at[newly_dead] = n + 1
                Y_new[newly_dead] = Y[newly_dead]
                alive = alive & finite
            if alive.all():
                Y = Y_new
            else:
                Y[alive] = Y_new[alive]
            mstate.update(0.5 * (Mp[j] - Mm[j]))
            n += 1
        if not alive.any():
            break
    mult.step(Y)
    cp_pos = record(N, cp_pos, None)
    return BatchResult(
        seeds=seeds,
        checkpoints=cps,
        err=err,
        phi=phi,
        diverged=div_at >= 0,
        diverged_at=div_at,
        wall_time=time.perf_counter() - t0,
        f_evals=f_evals,
        extra_cols={"eta_n": ev[cps], "c_n": cv[cps], "active_count": active_at_cp},
    )


def mask_divergence_audit(
    mask: MaskPolicy,
    eta: Schedule,
    horizon: int,
    model: Optional[NoiseModel] = None,
    seed: int = 0,
) -> dict:
    """Per-coordinate partial sums of psi_{n,i} * eta_n up to the horizon.

    Deterministic masks get an analytic divergence verdict (a coordinate
    active on an arithmetic progression inherits the schedule's integral
    test); noise-driven masks report empirical sums only.
    """
    ev = eta.array(horizon)
    if mask.deterministic:
        sums = np.zeros(mask.dim)
        if mask.kind == MaskKind.ALL_ONES:
            sums[:] = ev.sum()
        else:
            for j in range(mask.n_blocks):
                idx = np.arange(j, horizon, mask.n_blocks)
                s = float(ev[idx].sum())
                sums[j * mask.bsz : (j + 1) * mask.bsz] = s
        verdict = series_verdict(eta.signature())
        return {"sums": sums, "verdict": verdict, "basis": "analytic"}
    if model is None:
        raise ValueError("noise_driven audit needs the noise model")
    stream = NoiseStream(model, seed, paired=True)
    state = MaskState(mask, 1)
    sums = np.zeros(mask.dim)
    n = 0
    while n < horizon:
        k = min(_CHUNK, horizon - n)
        Mp, Mm = stream.pair_block(k)
        for j in range(k):
            psi = state.row(n)[0]
            sums += psi * ev[n]
            state.update(0.5 * (Mp[j] - Mm[j])[None, :])
            n += 1
    return {"sums": sums, "verdict": "empirical", "basis": "empirical"}
