"""Built-in target maps with certified contraction constants.

An SA problem is a map G with a unique zero x*, shipped together with
constants (b, rho, norm) certifying the residual contraction

    || x - x* - b * G(x) ||  <=  rho * || x - x* ||      for all x,

which is what the convergence analysis needs.  An SGD problem is a scalar
objective F whose two-point central differences satisfy the per-coordinate
analogue

    | x_i - x*_i - b * (F(x + c e_i) - F(x - c e_i)) / (2c) |
        <=  rho * || x - x* ||_inf  +  a * c

for all increments c <= c_max.  The constants never enter the iteration
formulas; they exist so that certificates can be checked numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .utils import batch_norm, vector_norm


@dataclass(frozen=True)
class SAProblem:
    dim: int
    g: Callable[[np.ndarray], np.ndarray]
    g_batch: Callable[[np.ndarray], np.ndarray]
    x_star: np.ndarray
    b: float
    rho: float
    norm: str = "l2"
    meta: dict = field(default_factory=dict)

    def describe(self) -> dict:
        return dict(self.meta, dim=self.dim, b=self.b, rho=self.rho, norm=self.norm)


@dataclass(frozen=True)
class SGDProblem:
    dim: int
    f: Callable[[np.ndarray], float]
    f_batch: Callable[[np.ndarray], np.ndarray]
    x_star: np.ndarray
    b: float
    rho: float
    a: float
    c_max: float
    box: Optional[float] = None  # certificate valid for ||x - x*||_inf <= box
    meta: dict = field(default_factory=dict)

    def describe(self) -> dict:
        return dict(
            self.meta, dim=self.dim, b=self.b, rho=self.rho, a=self.a, c_max=self.c_max
        )


def _batch_from_single(g, dim):
    def gb(X):
        X = np.atleast_2d(X)
        return np.stack([np.asarray(g(x), dtype=float) for x in X])

    return gb


# ---------------------------------------------------------------------------
# built-ins


def builtin_contraction(
    dim: int,
    rho0: float,
    target=0.0,
    rotation="identity",
    seed: int = 0,
    norm: str = "l2",
) -> SAProblem:
    """G(x) = x - H(x) for the affine contraction H(x) = rho0 * R x + v.

    H has fixed point ``target`` and contraction modulus rho0 in the given
    norm (R orthogonal requires the l2 norm).  The certified constants are
    b = 1 and rho = rho0.
    """
    if not 0 <= rho0 < 1:
        raise ValueError("rho0 must lie in [0, 1)")
    x_star = np.broadcast_to(np.asarray(target, dtype=float), (dim,)).copy()
    if isinstance(rotation, str):
        if rotation == "identity":
            R = np.eye(dim)
        elif rotation == "random":
            if norm != "l2":
                raise ValueError("random rotation certifies the l2 norm only")
            rng = np.random.Generator(np.random.Philox(key=seed))
            q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
            R = q * np.sign(np.diag(r))
        else:
            raise ValueError(f"unknown rotation: {rotation!r}")
    else:
        R = np.asarray(rotation, dtype=float)
    A = np.eye(dim) - rho0 * R  # G(x) = A x - A x_star
    offset = A @ x_star

    def g(x):
        return A @ np.asarray(x, dtype=float) - offset

    def g_batch(X):
        return X @ A.T - offset

    return SAProblem(
        dim=dim,
        g=g,
        g_batch=g_batch,
        x_star=x_star,
        b=1.0,
        rho=rho0,
        norm=norm,
        meta={"kind": "contraction", "rho0": rho0, "rotation": rotation if isinstance(rotation, str) else "matrix"},
    )


def builtin_quadratic(Q: np.ndarray, p: np.ndarray) -> SAProblem:
    """Strongly convex quadratic: F = x'Qx/2 - p'x, G(x) = Qx - p.

    With eigenvalues of Q inside [g, h], the certified constants are
    b = 1/(1+g+h) and rho = (1+h)/(1+g+h) in the l2 norm.
    """
    Q = np.asarray(Q, dtype=float)
    p = np.asarray(p, dtype=float)
    dim = Q.shape[0]
    if Q.shape != (dim, dim) or not np.allclose(Q, Q.T):
        raise ValueError("Q must be symmetric")
    eig = np.linalg.eigvalsh(Q)
    g_lo, h_hi = float(eig[0]), float(eig[-1])
    if g_lo <= 0:
        raise ValueError("Q must be positive definite")
    x_star = np.linalg.solve(Q, p)
    b = 1.0 / (1.0 + g_lo + h_hi)
    rho = (1.0 + h_hi) / (1.0 + g_lo + h_hi)

    def g(x):
        return Q @ np.asarray(x, dtype=float) - p

    def g_batch(X):
        return X @ Q.T - p

    return SAProblem(
        dim=dim,
        g=g,
        g_batch=g_batch,
        x_star=x_star,
        b=b,
        rho=rho,
        norm="l2",
        meta={"kind": "quadratic", "g": g_lo, "h": h_hi},
    )


def example_constants(g: float, h: float):
    """Certified (b, rho) for Hessian spectrum inside [g, h]."""
    return 1.0 / (1.0 + g + h), (1.0 + h) / (1.0 + g + h)


def spectral_contraction_factor(Q: np.ndarray, b: float) -> float:
    """l2 operator norm of I - b*Q (for the spectral certificate check)."""
    return float(np.linalg.norm(np.eye(Q.shape[0]) - b * np.asarray(Q, dtype=float), 2))


def builtin_diagonal_quadratic_sgd(qdiag, p) -> SGDProblem:
    """Zeroth-order form of a diagonal quadratic.

    Central differences are exact for quadratics, so a = 0 and any
    increment is admissible.  The per-coordinate certificate uses the
    same (b, rho) formulas with g = min(q), h = max(q) and the sup norm.
    """
    qdiag = np.asarray(qdiag, dtype=float)
    p = np.asarray(p, dtype=float)
    dim = qdiag.size
    if np.any(qdiag <= 0):
        raise ValueError("diagonal entries must be > 0")
    g_lo, h_hi = float(qdiag.min()), float(qdiag.max())
    b, rho = example_constants(g_lo, h_hi)
    x_star = p / qdiag

    def f(x):
        x = np.asarray(x, dtype=float)
        return float(0.5 * np.sum(qdiag * x * x) - np.dot(p, x))

    def f_batch(X):
        return 0.5 * np.sum(qdiag * X * X, axis=-1) - X @ p

    return SGDProblem(
        dim=dim,
        f=f,
        f_batch=f_batch,
        x_star=x_star,
        b=b,
        rho=rho,
        a=0.0,
        c_max=math.inf,
        meta={"kind": "diagonal_quadratic", "g": g_lo, "h": h_hi},
    )


def builtin_quartic_sgd(qdiag, eps: float, box: float, c_max: float) -> SGDProblem:
    """Diagonal quadratic plus a quartic perturbation, certified on a box.

    F(x) = sum_i [ q_i x_i^2 / 2 + eps * x_i^4 ], minimized at 0.  On
    ||x||_inf <= box the coordinate Hessians stay in [g, h] with
    h = max(q) + 12*eps*box^2, and the third derivative bound
    |F_i'''| <= 24*eps*(box + c_max) prices the central-difference error
    into the linear slack a * c.
    """
    qdiag = np.asarray(qdiag, dtype=float)
    dim = qdiag.size
    if np.any(qdiag <= 0) or eps < 0 or box <= 0 or c_max <= 0:
        raise ValueError("need positive diagonal, box, c_max and eps >= 0")
    g_lo = float(qdiag.min())
    h_hi = float(qdiag.max()) + 12.0 * eps * box**2
    b, rho = example_constants(g_lo, h_hi)
    a = 4.0 * b * eps * c_max * (box + c_max)

    def f(x):
        x = np.asarray(x, dtype=float)
        return float(np.sum(0.5 * qdiag * x * x + eps * x**4))

    def f_batch(X):
        return np.sum(0.5 * qdiag * X * X + eps * X**4, axis=-1)

    return SGDProblem(
        dim=dim,
        f=f,
        f_batch=f_batch,
        x_star=np.zeros(dim),
        b=b,
        rho=rho,
        a=a,
        c_max=c_max,
        box=box,
        meta={"kind": "quartic", "eps": eps, "g": g_lo, "h": h_hi, "box": box},
    )


# ---------------------------------------------------------------------------
# certificate verifiers


@dataclass(frozen=True)
class ContractionCertificate:
    passed: bool
    max_ratio: float
    bound: float
    worst_x: np.ndarray
    n_samples: int


def _sample_around(x_star, dim, n_samples, radius, norm, seed):
    """Half uniform-in-ball, half on the radius shell (ray directions)."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    dirs = rng.standard_normal((n_samples, dim))
    dirs /= np.maximum(batch_norm(dirs, norm), 1e-300)[:, None]
    r = np.empty(n_samples)
    half = n_samples // 2
    r[:half] = radius * rng.uniform(size=half) ** (1.0 / dim)
    r[half:] = radius
    return x_star + dirs * r[:, None]


def verify_contraction(
    prob: SAProblem, n_samples: int = 10_000, radius: float = 10.0, seed: int = 0
) -> ContractionCertificate:
    """Monte-Carlo check of the residual contraction certificate.

    Reports the max over samples of ||x - x* - b G(x)|| / ||x - x*|| in
    the problem norm; passes iff it does not exceed rho + 1e-9.
    """
    if n_samples < 1000:
        raise ValueError("n_samples must be >= 1e3")
    X = _sample_around(prob.x_star, prob.dim, n_samples, radius, prob.norm, seed)
    diffs = X - prob.x_star
    dist = batch_norm(diffs, prob.norm)
    keep = dist > 1e-12  # skip exact hits of the solution
    resid = batch_norm(diffs[keep] - prob.b * prob.g_batch(X[keep]), prob.norm)
    ratios = resid / dist[keep]
    i = int(np.argmax(ratios))
    max_ratio = float(ratios[i])
    return ContractionCertificate(
        passed=max_ratio <= prob.rho + 1e-9,
        max_ratio=max_ratio,
        bound=prob.rho,
        worst_x=X[keep][i],
        n_samples=int(keep.sum()),
    )


@dataclass(frozen=True)
class DifferenceCertificate:
    passed: bool
    max_slack: float
    worst_coord: int
    worst_c: float
    worst_x: np.ndarray
    n_samples: int


def verify_difference_bound(
    prob: SGDProblem,
    n_samples: int = 2_000,
    c_grid=(0.5, 0.1, 0.01),
    radius: float = 5.0,
    seed: int = 0,
) -> DifferenceCertificate:
    """Monte-Carlo check of the central-difference certificate.

    For each coordinate i, increment c and sampled x, evaluates

        |x_i - x*_i - b (F(x+c e_i) - F(x-c e_i)) / (2c)|
            - rho ||x - x*||_inf - a c

    and passes iff the maximum slack is <= 1e-9.  Sampling is confined to
    the certified box when the problem declares one.
    """
    if n_samples < 100:
        raise ValueError("n_samples must be >= 100")
    r = radius if prob.box is None else min(radius, prob.box)
    X = _sample_around(prob.x_star, prob.dim, n_samples, r, "linf", seed)
    dist = batch_norm(X - prob.x_star, "linf")
    worst = (-math.inf, 0, 0.0, X[0])
    for c in c_grid:
        for i in range(prob.dim):
            e = np.zeros(prob.dim)
            e[i] = c
            diff = (prob.f_batch(X + e) - prob.f_batch(X - e)) / (2.0 * c)
            slack = np.abs(X[:, i] - prob.x_star[i] - prob.b * diff) - prob.rho * dist - prob.a * c
            j = int(np.argmax(slack))
            if slack[j] > worst[0]:
                worst = (float(slack[j]), i, float(c), X[j])
    return DifferenceCertificate(
        passed=worst[0] <= 1e-9,
        max_slack=worst[0],
        worst_coord=worst[1],
        worst_c=worst[2],
        worst_x=worst[3],
        n_samples=n_samples,
    )
