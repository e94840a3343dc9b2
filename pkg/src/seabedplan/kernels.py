"""Covariance functions and their log-hyperparameter derivatives.

Five kernels are supported: squared exponential, Matérn with nu = 3/2 and
nu = 5/2 (closed half-integer forms), the arcsine neural-network kernel, and
the additive Matérn mixture ``alpha * k_3/2 + beta * k_5/2``. Every
hyperparameter is positive and is optimised in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_solve

from . import _accel
from ._accel import njit

SQRT3 = math.sqrt(3.0)
SQRT5 = math.sqrt(5.0)

_STATIONARY_CODES = {"se": 0, "matern3": 1, "matern5": 2, "additive": 3}


class ConditioningError(np.linalg.LinAlgError):
    """Cholesky factorisation failed even after jitter escalation."""


@dataclass(frozen=True)
class KernelKind:
    """Which covariance function to use; ``k`` is the neighbour count of the NN kernel."""

    name: str
    k: int = 10

    def __post_init__(self):
        if self.name not in {"se", "matern3", "matern5", "nn", "additive"}:
            raise ValueError(f"unknown kernel {self.name!r}")
        if self.name == "nn" and self.k < 1:
            raise ValueError("NeuralNetwork kernel needs k >= 1")

    @property
    def stationary(self) -> bool:
        return self.name != "nn"

    @property
    def label(self) -> str:
        return f"nn{self.k}" if self.name == "nn" else self.name

    @classmethod
    def parse(cls, text: str) -> "KernelKind":
        """Parse ``se``, ``matern3``, ``matern5``, ``additive`` or ``nn``/``nn:K``/``nnK``."""
        t = text.strip().lower()
        if t.startswith("nn"):
            rest = t[2:].lstrip(":")
            return cls("nn", int(rest) if rest else 10)
        return cls(t)


SE = KernelKind("se")
MATERN3 = KernelKind("matern3")
MATERN5 = KernelKind("matern5")
ADDITIVE = KernelKind("additive")
ALL_KERNELS = (SE, MATERN3, MATERN5, KernelKind("nn", 10), ADDITIVE)


def neural_network(k: int = 10) -> KernelKind:
    return KernelKind("nn", k)


@dataclass(frozen=True)
class Hyperparameters:
    """Kernel hyperparameters.

    ``alpha`` and ``beta`` are the mixture weights of the additive Matérn
    kernel and are ignored by the others. For the NN kernel the weight
    matrix of the arcsine form is ``I / length_scale**2``.
    """

    length_scale: float = 10.0
    signal_variance: float = 1.0
    noise_variance: float = 0.01
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if not (self.length_scale > 0 and math.isfinite(self.length_scale)):
            raise ValueError("length_scale must be positive")
        if not (self.signal_variance > 0 and math.isfinite(self.signal_variance)):
            raise ValueError("signal_variance must be positive")
        if not (self.noise_variance >= 0 and math.isfinite(self.noise_variance)):
            raise ValueError("noise_variance must be non-negative")
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("mixture weights must be positive")

    @property
    def noise_std(self) -> float:
        return math.sqrt(self.noise_variance)

    def nn_weight_matrix(self) -> np.ndarray:
        return np.eye(2) / self.length_scale**2


def free_parameter_names(kind: KernelKind, h: Hyperparameters) -> list[str]:
    """Hyperparameters optimised for ``kind``; a zero noise variance stays fixed."""
    names = ["length_scale", "signal_variance"]
    if h.noise_variance > 0:
        names.append("noise_variance")
    if kind.name == "additive":
        names += ["alpha", "beta"]
    return names


def to_log_vector(kind: KernelKind, h: Hyperparameters) -> np.ndarray:
    return np.log([getattr(h, n) for n in free_parameter_names(kind, h)])


def from_log_vector(kind: KernelKind, h: Hyperparameters, theta: np.ndarray) -> Hyperparameters:
    names = free_parameter_names(kind, h)
    return replace(h, **{n: float(math.exp(t)) for n, t in zip(names, theta)})


# -- stationary cross-covariance (hot kernel) -------------------------------


@njit(fastmath=True)
def _profile_row(code, xi0, xi1, z0, z1, inv_ell, s2, a, b, out):
    m = z0.shape[0]
    if code == 0:
        for j in range(m):
            d0 = (xi0 - z0[j]) * inv_ell
            d1 = (xi1 - z1[j]) * inv_ell
            out[j] = s2 * math.exp(-0.5 * (d0 * d0 + d1 * d1))
    elif code == 1:
        for j in range(m):
            d0 = xi0 - z0[j]
            d1 = xi1 - z1[j]
            t = SQRT3 * inv_ell * math.sqrt(d0 * d0 + d1 * d1)
            out[j] = s2 * (1.0 + t) * math.exp(-t)
    elif code == 2:
        for j in range(m):
            d0 = xi0 - z0[j]
            d1 = xi1 - z1[j]
            t = SQRT5 * inv_ell * math.sqrt(d0 * d0 + d1 * d1)
            out[j] = s2 * (1.0 + t + t * t / 3.0) * math.exp(-t)
    else:
        for j in range(m):
            d0 = xi0 - z0[j]
            d1 = xi1 - z1[j]
            r = inv_ell * math.sqrt(d0 * d0 + d1 * d1)
            t3 = SQRT3 * r
            t5 = SQRT5 * r
            out[j] = s2 * (a * (1.0 + t3) * math.exp(-t3)
                           + b * (1.0 + t5 + t5 * t5 / 3.0) * math.exp(-t5))


@njit
def _stationary_cov_numba(code, X, Z, ell, s2, a, b):
    n, m = X.shape[0], Z.shape[0]
    out = np.empty((n, m))
    z0 = Z[:, 0].copy()
    z1 = Z[:, 1].copy()
    for i in range(n):
        _profile_row(code, X[i, 0], X[i, 1], z0, z1, 1.0 / ell, s2, a, b, out[i])
    return out


@njit(fastmath=True)
def _stationary_matvec_numba(code, X, Z, ell, s2, a, b, w):
    """K(X, Z) @ w without materialising K."""
    n, m = X.shape[0], Z.shape[0]
    out = np.empty(n)
    z0 = Z[:, 0].copy()
    z1 = Z[:, 1].copy()
    inv = 1.0 / ell
    for i in range(n):
        xi0 = X[i, 0]
        xi1 = X[i, 1]
        acc = 0.0
        if code == 0:
            for j in range(m):
                d0 = (xi0 - z0[j]) * inv
                d1 = (xi1 - z1[j]) * inv
                acc += w[j] * math.exp(-0.5 * (d0 * d0 + d1 * d1))
            out[i] = s2 * acc
        elif code == 1:
            for j in range(m):
                d0 = xi0 - z0[j]
                d1 = xi1 - z1[j]
                t = SQRT3 * inv * math.sqrt(d0 * d0 + d1 * d1)
                acc += w[j] * (1.0 + t) * math.exp(-t)
            out[i] = s2 * acc
        elif code == 2:
            for j in range(m):
                d0 = xi0 - z0[j]
                d1 = xi1 - z1[j]
                t = SQRT5 * inv * math.sqrt(d0 * d0 + d1 * d1)
                acc += w[j] * (1.0 + t + t * t / 3.0) * math.exp(-t)
            out[i] = s2 * acc
        else:
            for j in range(m):
                d0 = xi0 - z0[j]
                d1 = xi1 - z1[j]
                r = inv * math.sqrt(d0 * d0 + d1 * d1)
                t3 = SQRT3 * r
                t5 = SQRT5 * r
                acc += w[j] * (a * (1.0 + t3) * math.exp(-t3)
                               + b * (1.0 + t5 + t5 * t5 / 3.0) * math.exp(-t5))
            out[i] = s2 * acc
    return out


def _stationary_profile(code: int, r: np.ndarray, s2: float, a: float, b: float) -> np.ndarray:
    """Kernel value as a function of scaled distance ``r = |x - x'| / ell``."""
    if code == 0:
        return s2 * np.exp(-0.5 * r * r)
    if code == 1:
        t = SQRT3 * r
        return s2 * (1.0 + t) * np.exp(-t)
    if code == 2:
        t = SQRT5 * r
        return s2 * (1.0 + t + t * t / 3.0) * np.exp(-t)
    t3, t5 = SQRT3 * r, SQRT5 * r
    return s2 * (a * (1.0 + t3) * np.exp(-t3) + b * (1.0 + t5 + t5 * t5 / 3.0) * np.exp(-t5))


def _stationary_cov_numpy(code, X, Z, ell, s2, a, b):
    d0 = X[:, None, 0] - Z[None, :, 0]
    d1 = X[:, None, 1] - Z[None, :, 1]
    r = np.sqrt(d0 * d0 + d1 * d1) / ell
    return _stationary_profile(code, r, s2, a, b)


def _nn_cov(X: np.ndarray, Z: np.ndarray, h: Hyperparameters) -> np.ndarray:
    w = 1.0 / h.length_scale**2
    num = w * (X @ Z.T)
    nx = 1.0 + w * np.einsum("ij,ij->i", X, X)
    nz = 1.0 + w * np.einsum("ij,ij->i", Z, Z)
    arg = num / np.sqrt(nx[:, None] * nz[None, :])
    return h.signal_variance * np.arcsin(np.clip(arg, -1.0, 1.0))


def _as_points(X) -> np.ndarray:
    a = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
    if a.shape[1] != 2:
        raise ValueError("points must be 2D")
    return a


def gram_matrix(kind: KernelKind, h: Hyperparameters, X, Z=None) -> np.ndarray:
    """Covariance matrix with entry (i, j) = k(X[i], Z[j]); ``Z`` defaults to ``X``."""
    X = _as_points(X)
    Z = X if Z is None else _as_points(Z)
    if len(X) == 0 or len(Z) == 0:
        raise ValueError("gram_matrix needs non-empty inputs")
    if kind.name == "nn":
        return _nn_cov(X, Z, h)
    code = _STATIONARY_CODES[kind.name]
    args = (code, X, Z, h.length_scale, h.signal_variance, h.alpha, h.beta)
    if _accel.USE_NUMBA:
        return _stationary_cov_numba(*args)
    return _stationary_cov_numpy(*args)


def cross_cov_matvec(kind: KernelKind, h: Hyperparameters, Xs, X, w, chunk: int = 4096) -> np.ndarray:
    """``gram_matrix(kind, h, Xs, X) @ w``, streamed so the matrix is never stored whole."""
    Xs, X = _as_points(Xs), _as_points(X)
    w = np.ascontiguousarray(w, dtype=np.float64)
    if kind.stationary and _accel.USE_NUMBA:
        code = _STATIONARY_CODES[kind.name]
        return _stationary_matvec_numba(code, Xs, X, h.length_scale, h.signal_variance,
                                        h.alpha, h.beta, w)
    out = np.empty(len(Xs))
    for s in range(0, len(Xs), chunk):
        out[s:s + chunk] = gram_matrix(kind, h, Xs[s:s + chunk], X) @ w
    return out


def kernel_eval(kind: KernelKind, h: Hyperparameters, x, x2) -> float:
    return float(gram_matrix(kind, h, [x], [x2])[0, 0])


def prior_variance(kind: KernelKind, h: Hyperparameters, X) -> np.ndarray:
    """k(x, x) for each row of ``X``."""
    X = _as_points(X)
    if kind.name == "nn":
        w = 1.0 / h.length_scale**2
        q = w * np.einsum("ij,ij->i", X, X)
        return h.signal_variance * np.arcsin(q / (1.0 + q))
    if kind.name == "additive":
        return np.full(len(X), h.signal_variance * (h.alpha + h.beta))
    return np.full(len(X), h.signal_variance)


def kernel_derivatives(kind: KernelKind, h: Hyperparameters, X) -> dict[str, np.ndarray]:
    """dK/dlog(theta) for every free kernel hyperparameter (noise excluded).

    Only available for the stationary kernels.
    """
    if not kind.stationary:
        raise ValueError("analytic derivatives are only implemented for stationary kernels")
    X = _as_points(X)
    d0 = X[:, None, 0] - X[None, :, 0]
    d1 = X[:, None, 1] - X[None, :, 1]
    r = np.sqrt(d0 * d0 + d1 * d1) / h.length_scale
    s2 = h.signal_variance
    out: dict[str, np.ndarray] = {}
    if kind.name == "se":
        K = s2 * np.exp(-0.5 * r * r)
        out["length_scale"] = K * r * r
    else:
        t3, t5 = SQRT3 * r, SQRT5 * r
        e3, e5 = np.exp(-t3), np.exp(-t5)
        k3 = (1.0 + t3) * e3
        k5 = (1.0 + t5 + t5 * t5 / 3.0) * e5
        dk3 = t3 * t3 * e3
        dk5 = t5 * t5 * (1.0 + t5) / 3.0 * e5
        if kind.name == "matern3":
            K = s2 * k3
            out["length_scale"] = s2 * dk3
        elif kind.name == "matern5":
            K = s2 * k5
            out["length_scale"] = s2 * dk5
        else:
            K = s2 * (h.alpha * k3 + h.beta * k5)
            out["length_scale"] = s2 * (h.alpha * dk3 + h.beta * dk5)
            out["alpha"] = s2 * h.alpha * k3
            out["beta"] = s2 * h.beta * k5
    out["signal_variance"] = K
    return out


# -- Cholesky with jitter escalation ----------------------------------------

JITTER_START = 1e-9
JITTER_MAX = 1e-5


def stable_cholesky(A: np.ndarray, scale: float) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``A + jitter*I``.

    Jitter starts at ``1e-9 * scale`` and grows tenfold up to ``1e-5 * scale``.
    Returns the factor and the jitter actually added.
    """
    n = A.shape[0]
    jitter = JITTER_START * scale
    idx = np.arange(n)
    while True:
        B = A.copy()
        B[idx, idx] += jitter
        try:
            return np.linalg.cholesky(B), jitter
        except np.linalg.LinAlgError:
            if jitter >= JITTER_MAX * scale * (1 - 1e-12):
                raise ConditioningError(
                    f"matrix not positive definite after jitter {jitter:.1e}"
                ) from None
            jitter *= 10.0


def jitter_scale(K: np.ndarray) -> float:
    d = np.diag(K)
    s = float(np.max(np.abs(d))) if d.size else 1.0
    return s if s > 0 else 1.0


# -- marginal likelihood and its gradient -----------------------------------

LOG_2PI = math.log(2.0 * math.pi)


def _centered(y: np.ndarray, center: bool) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return y - y.mean() if center else y


def log_marginal_likelihood_value(kind: KernelKind, h: Hyperparameters, X, y, center: bool = True) -> float:
    X = _as_points(X)
    yc = _centered(y, center)
    K = gram_matrix(kind, h, X)
    scale = jitter_scale(K)
    K[np.diag_indices_from(K)] += h.noise_variance
    L, _ = stable_cholesky(K, scale)
    w = cho_solve((L, True), yc, check_finite=False)
    n = len(yc)
    return float(-0.5 * yc @ w - np.log(np.diag(L)).sum() - 0.5 * n * LOG_2PI)


def lml_and_gradient(kind: KernelKind, h: Hyperparameters, X, y, center: bool = True):
    """Log marginal likelihood and its gradient over the free log-hyperparameters.

    Returns ``(value, gradient, names)``. Stationary kernels use analytic
    derivatives; the NN kernel uses central differences in log space.
    """
    X = _as_points(X)
    names = free_parameter_names(kind, h)
    if not kind.stationary:
        value = log_marginal_likelihood_value(kind, h, X, y, center)
        theta = to_log_vector(kind, h)
        step = 1e-5
        grad = np.empty(len(theta))
        for i in range(len(theta)):
            tp, tm = theta.copy(), theta.copy()
            tp[i] += step
            tm[i] -= step
            fp = log_marginal_likelihood_value(kind, from_log_vector(kind, h, tp), X, y, center)
            fm = log_marginal_likelihood_value(kind, from_log_vector(kind, h, tm), X, y, center)
            grad[i] = (fp - fm) / (2.0 * step)
        return value, grad, names

    yc = _centered(y, center)
    n = len(yc)
    derivs = kernel_derivatives(kind, h, X)
    K = derivs["signal_variance"].copy()
    scale = jitter_scale(K)
    K[np.diag_indices_from(K)] += h.noise_variance
    L, _ = stable_cholesky(K, scale)
    w = cho_solve((L, True), yc, check_finite=False)
    value = float(-0.5 * yc @ w - np.log(np.diag(L)).sum() - 0.5 * n * LOG_2PI)
    Kinv = cho_solve((L, True), np.eye(n), check_finite=False)
    inner = np.outer(w, w) - Kinv
    grad = np.empty(len(names))
    for i, name in enumerate(names):
        if name == "noise_variance":
            grad[i] = 0.5 * h.noise_variance * np.trace(inner)
        else:
            grad[i] = 0.5 * np.einsum("ij,ij->", inner, derivs[name])
    return value, grad, names


def log_hyperparameter_gradient(kind: KernelKind, h: Hyperparameters, X, y, center: bool = True) -> np.ndarray:
    """Gradient of the log marginal likelihood w.r.t. each free log-hyperparameter."""
    return lml_and_gradient(kind, h, X, y, center)[1]
