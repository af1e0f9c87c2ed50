"""Measurement-noise models and reproducible draw streams.

Five families cover the hypothesis classes exercised by the convergence
checkers and engines:

* ``gaussian``            -- i.i.d. N(0, sigma^2) per coordinate.
* ``student_t``           -- i.i.d. scaled Student-t with tail index ``nu``;
                             E|W|^a is finite exactly when a < nu.
* ``log_tempered_cauchy`` -- i.i.d. symmetric with density proportional to
                             1 / ((1 + x^2) * log(e + |x|)^(p-1)), p > 1.
                             Infinite variance always; infinite mean for
                             p <= 2; the log-damped moment
                             E[|W| / log(1+|W|)^delta] is finite exactly
                             when p + delta > 2.
* ``scaled_martingale``   -- W_{n+1} = sigma * s_n * Z_{n+1} with Z i.i.d.
                             symmetric Student-t(nu) and s_n a bounded scale
                             computed from the previous draw, so
                             E[W_{n+1} | past] = 0 by construction.
* ``drifting_mean``       -- independent, W_n = (mu0 / n) * 1 + sigma * Z_n,
                             so the mean decays to zero.

Streams are deterministic: the same (model, seed) always reproduces the
same draw sequence, independent of how calls are chunked.  Each stream
owns a counter-based Philox generator and refills an internal buffer in
fixed-size blocks, so the underlying bit-stream consumption never depends
on the caller's access pattern.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy import integrate, stats

_BUFFER = 4096


class Family(str, Enum):
    GAUSSIAN = "gaussian"
    STUDENT_T = "student_t"
    LOG_TEMPERED_CAUCHY = "log_tempered_cauchy"
    SCALED_MARTINGALE = "scaled_martingale"
    DRIFTING_MEAN = "drifting_mean"


_IID_FAMILIES = (Family.GAUSSIAN, Family.STUDENT_T, Family.LOG_TEMPERED_CAUCHY)


@dataclass(frozen=True)
class NoiseModel:
    """Immutable description of a noise family plus its parameters.

    ``sigma`` is the scale (sigma = 0 is allowed as the degenerate
    zero-noise model used in exactness tests).  ``nu`` is the Student-t
    tail index (required > 1 where used), ``p`` the log-temper exponent
    (> 1) and ``mu0`` the drifting-mean magnitude.
    """

    family: Family
    dim: int
    sigma: float = 1.0
    nu: Optional[float] = None
    p: Optional[float] = None
    mu0: Optional[float] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.family in (Family.STUDENT_T, Family.SCALED_MARTINGALE):
            if self.nu is None or self.nu <= 1:
                raise ValueError("tail index nu must be > 1")
        if self.family is Family.LOG_TEMPERED_CAUCHY:
            if self.p is None or self.p <= 1:
                raise ValueError("temper exponent p must be > 1")
        if self.family is Family.DRIFTING_MEAN and self.mu0 is None:
            raise ValueError("drifting_mean requires mu0")

    @property
    def iid(self) -> bool:
        return self.family in _IID_FAMILIES

    @property
    def symmetric(self) -> bool:
        """True when W and -W are identically distributed."""
        if self.family is Family.DRIFTING_MEAN:
            return False
        return True

    @property
    def martingale_difference(self) -> bool:
        """True when E[W_{n+1} | past] = 0 holds (requires integrability)."""
        if self.family is Family.SCALED_MARTINGALE:
            return True
        if self.family in (Family.GAUSSIAN, Family.STUDENT_T):
            return True
        if self.family is Family.LOG_TEMPERED_CAUCHY:
            return self.p > 2  # mean must exist
        return False

    def describe(self) -> dict:
        out = {"family": self.family.value, "dim": self.dim, "sigma": self.sigma}
        for k in ("nu", "p", "mu0"):
            v = getattr(self, k)
            if v is not None:
                out[k] = v
        return out


def gaussian(dim: int = 1, sigma: float = 1.0) -> NoiseModel:
    return NoiseModel(Family.GAUSSIAN, dim, sigma=sigma)


def student_t(dim: int = 1, nu: float = 1.5, sigma: float = 1.0) -> NoiseModel:
    return NoiseModel(Family.STUDENT_T, dim, sigma=sigma, nu=nu)


def log_tempered_cauchy(dim: int = 1, p: float = 2.0) -> NoiseModel:
    return NoiseModel(Family.LOG_TEMPERED_CAUCHY, dim, p=p)


def scaled_martingale(dim: int = 1, nu: float = 1.5, sigma: float = 1.0) -> NoiseModel:
    return NoiseModel(Family.SCALED_MARTINGALE, dim, sigma=sigma, nu=nu)


def drifting_mean(dim: int = 1, mu0: float = 1.0, sigma: float = 1.0) -> NoiseModel:
    return NoiseModel(Family.DRIFTING_MEAN, dim, sigma=sigma, mu0=mu0)


# ---------------------------------------------------------------------------
# streams


def _ltc_fill(rng: np.random.Generator, count: int, p: float) -> np.ndarray:
    """Exact rejection sampler for the log-tempered Cauchy family.

    Proposes standard Cauchy draws and accepts with probability
    log(e + |x|)^(-(p-1)) <= 1.  Proposals are consumed in order, so the
    accepted sequence is a deterministic function of the generator state.
    """
    out = np.empty(count)
    have = 0
    while have < count:
        m = max(2 * (count - have), 256)
        x = rng.standard_cauchy(m)
        u = rng.uniform(size=m)
        acc = x[u < np.log(np.e + np.abs(x)) ** (-(p - 1.0))]
        take = min(acc.size, count - have)
        out[have : have + take] = acc[:take]
        have += take
    return out


class NoiseStream:
    """Single-owner, seeded draw stream over a NoiseModel.

    A stream is constructed either for single draws (``next`` / ``block``)
    or for paired draws (``next_pair`` / ``pair_block``); the two modes
    consume the generator differently and must not be mixed.
    """

    def __init__(self, model: NoiseModel, seed: int, paired: bool = False):
        self.model = model
        self.seed = int(seed)
        self.paired = bool(paired)
        self._rng = np.random.Generator(np.random.Philox(key=self.seed))
        self._count = 0  # draws (or pairs) handed out so far
        self._generated = 0  # draws (or pairs) produced into the buffer so far
        self._buf: Optional[np.ndarray] = None  # (k, d) or (k, 2, d)
        self._pos = 0
        # scale state for the martingale family: previous first coordinate
        self._prev_first: Optional[float] = None

    @property
    def index(self) -> int:
        """Number of draws (pairs) emitted so far; the next draw is W_{index+1}."""
        return self._count

    # -- raw fills ----------------------------------------------------------

    def _innovations(self, k: int) -> np.ndarray:
        d = self.model.dim
        fam = self.model.family
        if fam is Family.GAUSSIAN:
            return self._rng.standard_normal((k, d))
        if fam is Family.STUDENT_T:
            return self._rng.standard_t(self.model.nu, size=(k, d))
        if fam is Family.LOG_TEMPERED_CAUCHY:
            return _ltc_fill(self._rng, k * d, self.model.p).reshape(k, d)
        if fam is Family.SCALED_MARTINGALE:
            return self._rng.standard_t(self.model.nu, size=(k, d))
        if fam is Family.DRIFTING_MEAN:
            return self._rng.standard_normal((k, d))
        raise AssertionError(fam)

    def _fill_single(self, k: int, start_index: int) -> np.ndarray:
        m = self.model
        z = self._innovations(k)
        if m.family in _IID_FAMILIES:
            if m.family is Family.LOG_TEMPERED_CAUCHY:
                return z  # unit scale by construction
            return m.sigma * z
        if m.family is Family.DRIFTING_MEAN:
            n = np.arange(start_index + 1, start_index + k + 1, dtype=float)
            return m.mu0 / n[:, None] + m.sigma * z
        if m.family is Family.SCALED_MARTINGALE:
            out = np.empty_like(z)
            prev = self._prev_first
            for j in range(k):
                s = 1.0 if prev is None else 1.0 + 0.5 * math.sin(prev)
                out[j] = m.sigma * s * z[j]
                prev = out[j, 0]
            self._prev_first = prev
            return out
        raise AssertionError(m.family)

    def _fill_pair(self, k: int, start_index: int) -> np.ndarray:
        m = self.model
        d = m.dim
        za = self._innovations(k)
        zb = self._innovations(k)
        out = np.empty((k, 2, d))
        if m.family in _IID_FAMILIES:
            scale = 1.0 if m.family is Family.LOG_TEMPERED_CAUCHY else m.sigma
            out[:, 0, :] = scale * za
            out[:, 1, :] = scale * zb
        elif m.family is Family.DRIFTING_MEAN:
            n = np.arange(start_index + 1, start_index + k + 1, dtype=float)
            mu = m.mu0 / n[:, None]
            out[:, 0, :] = mu + m.sigma * za
            out[:, 1, :] = mu + m.sigma * zb
        elif m.family is Family.SCALED_MARTINGALE:
            prev = self._prev_first
            for j in range(k):
                s = 1.0 if prev is None else 1.0 + 0.5 * math.sin(prev)
                out[j, 0] = m.sigma * s * za[j]
                out[j, 1] = m.sigma * s * zb[j]
                prev = out[j, 0, 0]
            self._prev_first = prev
        else:
            raise AssertionError(m.family)
        return out

    def _refill(self):
        # buffer is always refilled with a fixed block size so the generator
        # consumption never depends on the caller's chunking
        if self.paired:
            self._buf = self._fill_pair(_BUFFER, self._generated)
        else:
            self._buf = self._fill_single(_BUFFER, self._generated)
        self._generated += _BUFFER
        self._pos = 0

    def _take(self, k: int) -> np.ndarray:
        parts = []
        need = k
        while need > 0:
            if self._buf is None or self._pos >= self._buf.shape[0]:
                self._refill()
            take = min(need, self._buf.shape[0] - self._pos)
            parts.append(self._buf[self._pos : self._pos + take])
            self._pos += take
            need -= take
        self._count += k
        return parts[0] if len(parts) == 1 else np.concatenate(parts, axis=0)

    # -- public draws -------------------------------------------------------

    def next(self) -> np.ndarray:
        """Next W_{n+1} as a (dim,) vector."""
        if self.paired:
            raise RuntimeError("stream is paired; use next_pair()")
        return self._take(1)[0].copy()

    def block(self, k: int) -> np.ndarray:
        """Next k draws stacked as (k, dim)."""
        if self.paired:
            raise RuntimeError("stream is paired; use pair_block()")
        return self._take(k).copy()

    def next_pair(self):
        """Next observation-error pair (M'_{n+1}, M''_{n+1})."""
        if not self.paired:
            raise RuntimeError("stream is single; use next()")
        b = self._take(1)
        return b[0, 0].copy(), b[0, 1].copy()

    def pair_block(self, k: int):
        """Next k pairs as two (k, dim) arrays."""
        if not self.paired:
            raise RuntimeError("stream is single; use next()")
        b = self._take(k)
        return b[:, 0, :].copy(), b[:, 1, :].copy()


def next_sa_noise(stream: NoiseStream) -> np.ndarray:
    """Draw the next additive measurement error W_{n+1}."""
    return stream.next()


def next_sgd_noise_pair(stream: NoiseStream):
    """Draw the next pair of observation errors (M', M'')."""
    return stream.next_pair()


def trial_seed(base_seed: int, trial: int) -> int:
    """Per-trial stream seed: base_seed XOR trial index."""
    return int(base_seed) ^ int(trial)


# ---------------------------------------------------------------------------
# analytic moment metadata


@dataclass(frozen=True)
class MomentVerdict:
    """Outcome of an analytic moment query.

    ``finite`` is True/False when the family metadata decides the question,
    and None when the combination is unsupported (never guessed).  ``value``
    is a numeric estimate when one is cheaply available.
    """

    finite: Optional[bool]
    value: Optional[float]
    basis: str

    @property
    def verdict(self) -> str:
        if self.finite is None:
            return "unknown"
        return "finite" if self.finite else "infinite"


def _ltc_normalizer(p: float) -> float:
    raw = lambda x: 1.0 / ((1.0 + x * x) * np.log(np.e + x) ** (p - 1.0))
    half, _ = integrate.quad(raw, 0.0, np.inf, limit=400)
    return 2.0 * half


_LTC_NORM_CACHE: dict = {}


def ltc_density(p: float) -> Callable[[np.ndarray], np.ndarray]:
    """Normalized density of the log-tempered Cauchy family (dim 1)."""
    if p not in _LTC_NORM_CACHE:
        _LTC_NORM_CACHE[p] = _ltc_normalizer(p)
    Z = _LTC_NORM_CACHE[p]
    return lambda x: 1.0 / ((1.0 + x * x) * np.log(np.e + np.abs(x)) ** (p - 1.0)) / Z


def _gaussian_abs_moment(alpha: float, sigma: float) -> float:
    return sigma**alpha * 2 ** (alpha / 2) * math.gamma((alpha + 1) / 2) / math.sqrt(math.pi)


def _student_abs_moment(alpha: float, nu: float, sigma: float) -> float:
    # valid for alpha < nu
    return (
        sigma**alpha
        * nu ** (alpha / 2)
        * math.gamma((alpha + 1) / 2)
        * math.gamma((nu - alpha) / 2)
        / (math.sqrt(math.pi) * math.gamma(nu / 2))
    )


def _ltc_abs_moment(alpha: float, p: float) -> float:
    f = ltc_density(p)
    val, _ = integrate.quad(lambda x: 2.0 * x**alpha * f(x), 0.0, np.inf, limit=400)
    return val


def moment_envelope(model: NoiseModel, alpha: float, paired: bool = False) -> MomentVerdict:
    """Is sup_n E[ ||W_n||^alpha ] finite, and roughly what is it?

    With ``paired`` the question is asked of the half difference
    M = (M' - M'') / 2 instead (same tail index; Gaussian scale shrinks
    by sqrt(2)).  Values are exact for dim 1 closed forms, quadrature for
    the log-tempered family, and upper bounds for the composite families.
    """
    if not 0 < alpha <= 2:
        raise ValueError("alpha must lie in (0, 2]")
    m = model
    d1 = m.dim == 1
    if m.family is Family.GAUSSIAN:
        sig = m.sigma / math.sqrt(2.0) if paired else m.sigma
        if d1:
            return MomentVerdict(True, _gaussian_abs_moment(alpha, sig), "closed-form")
        if alpha == 2.0:
            return MomentVerdict(True, m.dim * sig**2, "closed-form")
        val = sig**alpha * 2 ** (alpha / 2) * math.gamma((m.dim + alpha) / 2) / math.gamma(m.dim / 2)
        return MomentVerdict(True, val, "closed-form")
    if m.family is Family.STUDENT_T:
        if alpha >= m.nu:
            return MomentVerdict(False, None, "tail-index")
        if d1 and not paired:
            return MomentVerdict(True, _student_abs_moment(alpha, m.nu, m.sigma), "closed-form")
        return MomentVerdict(True, None, "tail-index")
    if m.family is Family.LOG_TEMPERED_CAUCHY:
        # tail of the density is ~ 1 / (x^2 log(x)^(p-1)): the alpha moment
        # integrand decays like x^(alpha-2) / log(x)^(p-1)
        finite = alpha < 1.0 or (alpha == 1.0 and m.p > 2.0)
        if not finite:
            return MomentVerdict(False, None, "tail-integral")
        if d1 and not paired:
            return MomentVerdict(True, _ltc_abs_moment(alpha, m.p), "quadrature")
        return MomentVerdict(True, None, "tail-integral")
    if m.family is Family.SCALED_MARTINGALE:
        if alpha >= m.nu:
            return MomentVerdict(False, None, "tail-index")
        # scale is bounded by 3/2, uniformly over n
        if d1:
            bound = 1.5**alpha * _student_abs_moment(alpha, m.nu, m.sigma)
            return MomentVerdict(True, bound, "upper-bound")
        return MomentVerdict(True, None, "upper-bound")
    if m.family is Family.DRIFTING_MEAN:
        # |mu_n| <= |mu0| so Minkowski (alpha >= 1) or subadditivity gives
        # a uniform-in-n bound
        if d1:
            if alpha >= 1:
                bound = (abs(m.mu0) + _gaussian_abs_moment(alpha, m.sigma) ** (1 / alpha)) ** alpha
            else:
                bound = abs(m.mu0) ** alpha + _gaussian_abs_moment(alpha, m.sigma)
            return MomentVerdict(True, bound, "upper-bound")
        return MomentVerdict(True, None, "upper-bound")
    return MomentVerdict(None, None, "unsupported")


def log_moment(model: NoiseModel, delta: float) -> MomentVerdict:
    """Is E[ |W_i| / log(1 + |W_i|)^delta ] finite (per coordinate)?

    Only defined for the i.i.d. symmetric families.
    """
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    m = model
    g = lambda x: x / np.where(x > 0, np.log1p(x) ** delta, 1.0)
    if m.family is Family.GAUSSIAN:
        if m.sigma == 0:
            return MomentVerdict(True, 0.0, "degenerate")
        val, _ = integrate.quad(
            lambda x: 2.0 * g(x) * stats.norm.pdf(x, scale=m.sigma), 0, np.inf, limit=200
        )
        return MomentVerdict(True, val, "quadrature")
    if m.family is Family.STUDENT_T:
        # dominated by E|W| which is finite for nu > 1
        val, _ = integrate.quad(
            lambda x: 2.0 * g(x) * stats.t.pdf(x / m.sigma, m.nu) / m.sigma, 0, np.inf, limit=300
        )
        return MomentVerdict(True, val, "quadrature")
    if m.family is Family.LOG_TEMPERED_CAUCHY:
        # integrand tail ~ 1 / (x log(x)^(p-1+delta)): finite iff p + delta > 2
        if m.p + delta <= 2.0:
            return MomentVerdict(False, None, "tail-integral")
        f = ltc_density(m.p)
        val, _ = integrate.quad(lambda x: 2.0 * g(x) * f(x), 0, np.inf, limit=500)
        return MomentVerdict(True, val, "quadrature")
    return MomentVerdict(None, None, "unsupported")


def mean_at(model: NoiseModel, n: int) -> Optional[np.ndarray]:
    """E[W_n] when it exists (n is 1-based)."""
    m = model
    if m.family is Family.DRIFTING_MEAN:
        return np.full(m.dim, m.mu0 / n)
    if m.family is Family.LOG_TEMPERED_CAUCHY and m.p <= 2.0:
        return None  # mean does not exist
    return np.zeros(m.dim)
