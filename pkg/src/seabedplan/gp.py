"""Gaussian-process posterior inference and marginal-likelihood fitting."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize
from scipy.spatial import cKDTree

from .field import ScalarField
from .kernels import (
    LOG_2PI,
    ConditioningError,
    cross_cov_matvec,
    Hyperparameters,
    KernelKind,
    from_log_vector,
    free_parameter_names,
    gram_matrix,
    jitter_scale,
    lml_and_gradient,
    prior_variance,
    stable_cholesky,
    to_log_vector,
)

log = logging.getLogger(__name__)

# Hyperparameters may change by at most this factor per re-estimation.
UPDATE_CAP = 3.0
NOISE_FLOOR = 1e-6
PREDICT_CHUNK = 4096


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TrainingSet:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(self.X, dtype=np.float64)))
        y = np.ascontiguousarray(np.asarray(self.y, dtype=np.float64).ravel())
        if X.shape[1] != 2:
            raise ValueError("training inputs must be 2D points")
        if len(X) != len(y) or len(y) < 1:
            raise ValueError("training set needs |X| = |y| >= 1")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)):
            raise ValueError("training data must be finite")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx) -> "TrainingSet":
        idx = np.asarray(idx)
        return TrainingSet(self.X[idx], self.y[idx])

    def concat(self, other: "TrainingSet") -> "TrainingSet":
        return TrainingSet(np.vstack([self.X, other.X]), np.concatenate([self.y, other.y]))


@dataclass(frozen=True)
class Prediction:
    mean: float
    variance: float


@dataclass(frozen=True, eq=False)
class GPModel:
    kernel: KernelKind
    hyper: Hyperparameters
    training: TrainingSet
    factor: np.ndarray  # lower Cholesky factor of K + noise*I + jitter*I
    weights: np.ndarray  # (K + noise*I + jitter*I)^-1 (y - y_mean)
    y_mean: float
    jitter: float
    centered: bool

    @property
    def n(self) -> int:
        return len(self.training)

    def covariance_matrix(self) -> np.ndarray:
        """The factorised matrix K + noise*I + jitter*I."""
        K = gram_matrix(self.kernel, self.hyper, self.training.X)
        K[np.diag_indices_from(K)] += self.hyper.noise_variance + self.jitter
        return K


def fit(training: TrainingSet, kernel: KernelKind, hyper: Hyperparameters, center: bool = True) -> GPModel:
    """Factorise the training covariance once.

    With ``center`` the training mean is subtracted before regression and
    added back on prediction, so the far field reverts to the data mean.
    """
    y_mean = float(training.y.mean()) if center else 0.0
    yc = training.y - y_mean
    K = gram_matrix(kernel, hyper, training.X)
    scale = jitter_scale(K)
    K[np.diag_indices_from(K)] += hyper.noise_variance
    L, jitter = stable_cholesky(K, scale)
    w = cho_solve((L, True), yc, check_finite=False)
    L.setflags(write=False)
    w.setflags(write=False)
    return GPModel(kernel, hyper, training, L, w, y_mean, jitter, center)


def _predict_full(model: GPModel, Xs: np.ndarray, return_var: bool):
    if not return_var:
        return model.y_mean + cross_cov_matvec(model.kernel, model.hyper, Xs,
                                               model.training.X, model.weights), None
    means = np.empty(len(Xs))
    var = np.empty(len(Xs))
    for s in range(0, len(Xs), PREDICT_CHUNK):
        chunk = Xs[s:s + PREDICT_CHUNK]
        Ks = gram_matrix(model.kernel, model.hyper, chunk, model.training.X)
        means[s:s + len(chunk)] = model.y_mean + Ks @ model.weights
        v = solve_triangular(model.factor, Ks.T, lower=True, check_finite=False)
        kss = prior_variance(model.kernel, model.hyper, chunk)
        var[s:s + len(chunk)] = np.maximum(kss - np.einsum("ij,ij->j", v, v), 0.0)
    return means, var


def nearest_training_indices(X: np.ndarray, Xs: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest training points per query; ties go to the lower index."""
    tree = cKDTree(X)
    kq = min(len(X), k + 8)
    dist, idx = tree.query(Xs, k=kq)
    dist = np.atleast_2d(dist).reshape(len(Xs), kq)
    idx = np.atleast_2d(idx).reshape(len(Xs), kq)
    order = np.lexsort((idx, dist), axis=1)
    return np.take_along_axis(idx, order, axis=1)[:, :k]


def _predict_local(model: GPModel, Xs: np.ndarray, return_var: bool):
    """Local NN-kernel prediction from the k nearest training points per query."""
    h = model.hyper
    X, y = model.training.X, model.training.y - model.y_mean
    k = model.kernel.k
    nbr = nearest_training_indices(X, Xs, k)
    w = 1.0 / h.length_scale**2
    means = np.empty(len(Xs))
    var = np.empty(len(Xs)) if return_var else None
    eye = np.eye(k)
    for s in range(0, len(Xs), PREDICT_CHUNK):
        q = Xs[s:s + PREDICT_CHUNK]
        ids = nbr[s:s + PREDICT_CHUNK]
        Xn = X[ids]  # (m, k, 2)
        qn = 1.0 + w * np.einsum("mkd,mkd->mk", Xn, Xn)
        Kl = w * np.einsum("mid,mjd->mij", Xn, Xn) / np.sqrt(qn[:, :, None] * qn[:, None, :])
        Kl = h.signal_variance * np.arcsin(np.clip(Kl, -1.0, 1.0))
        qs = 1.0 + w * np.einsum("md,md->m", q, q)
        ks = w * np.einsum("mkd,md->mk", Xn, q) / np.sqrt(qn * qs[:, None])
        ks = h.signal_variance * np.arcsin(np.clip(ks, -1.0, 1.0))
        scale = max(float(np.max(np.abs(np.diagonal(Kl, axis1=1, axis2=2)))), 1e-300)
        jitter = 1e-9 * scale
        while True:
            A = Kl + (h.noise_variance + jitter) * eye
            try:
                sol = np.linalg.solve(A, np.stack([y[ids], ks], axis=-1))
                break
            except np.linalg.LinAlgError:
                jitter *= 10.0
                if jitter > 1e-5 * scale:
                    raise ConditioningError("local NN-kernel system is singular") from None
        means[s:s + len(q)] = model.y_mean + np.einsum("mk,mk->m", ks, sol[:, :, 0])
        if return_var:
            kss = h.signal_variance * np.arcsin((qs - 1.0) / qs)
            var[s:s + len(q)] = np.maximum(kss - np.einsum("mk,mk->m", ks, sol[:, :, 1]), 0.0)
    return means, var


def predict_batch(model: GPModel, Xs, return_var: bool = False):
    """Posterior mean (and variance when asked) at each row of ``Xs``.

    Stationary kernels reuse the model's factorisation. The NN kernel solves
    a fresh k-point problem per query unless k covers the whole training set.
    """
    Xs = np.ascontiguousarray(np.atleast_2d(np.asarray(Xs, dtype=np.float64)))
    if model.kernel.name == "nn" and model.kernel.k < model.n:
        means, var = _predict_local(model, Xs, return_var)
    else:
        means, var = _predict_full(model, Xs, return_var)
    return (means, var) if return_var else means


def predict(model: GPModel, x) -> Prediction:
    m, v = predict_batch(model, [x], return_var=True)
    return Prediction(float(m[0]), float(v[0]))


def log_marginal_likelihood(model: GPModel) -> float:
    yc = model.training.y - model.y_mean
    return float(-0.5 * yc @ model.weights - np.log(np.diag(model.factor)).sum()
                 - 0.5 * model.n * LOG_2PI)


def cap_update(old: float, proposal: float, cap: float = UPDATE_CAP) -> float:
    """Clamp a proposed hyperparameter into [old / cap, old * cap]."""
    return float(min(max(proposal, old / cap), old * cap))


@dataclass(frozen=True)
class OptimizationInfo:
    hyper: Hyperparameters
    log_likelihood: float
    initial_log_likelihood: float
    converged: bool
    iterations: int


def optimize_hyperparameters_detailed(
    training: TrainingSet,
    kernel: KernelKind,
    current: Hyperparameters,
    max_iter: int = 100,
    gtol: float = 1e-6,
    cap: float = UPDATE_CAP,
    center: bool = True,
) -> OptimizationInfo:
    X, y = training.X, training.y
    theta0 = to_log_vector(kernel, current)
    names = free_parameter_names(kernel, current)
    lo = theta0 - math.log(cap)
    hi = theta0 + math.log(cap)
    if "noise_variance" in names:
        i = names.index("noise_variance")
        lo[i] = max(lo[i], min(math.log(NOISE_FLOOR), theta0[i]))

    best = {"f": math.inf, "theta": theta0}

    def objective(theta):
        h = from_log_vector(kernel, current, theta)
        try:
            value, grad, _ = lml_and_gradient(kernel, h, X, y, center)
        except ConditioningError:
            return 1e25, np.zeros_like(theta)
        if -value < best["f"]:
            best["f"], best["theta"] = -value, theta.copy()
        return -value, -grad

    f0, _ = objective(theta0)
    res = minimize(objective, theta0, jac=True, method="L-BFGS-B",
                   bounds=list(zip(lo, hi)),
                   options={"maxiter": max_iter, "gtol": gtol, "ftol": 1e-12})
    theta = np.clip(best["theta"], lo, hi)
    if best["f"] > f0:
        theta = theta0
    hyper = from_log_vector(kernel, current, theta)
    converged = bool(res.success)
    if not converged:
        warnings.warn(f"hyperparameter optimisation stopped early: {res.message}", ConvergenceWarning)
    return OptimizationInfo(hyper, -min(best["f"], f0), -f0, converged, int(res.nit))


def optimize_hyperparameters(
    training: TrainingSet,
    kernel: KernelKind,
    current: Hyperparameters,
    max_iter: int = 100,
    gtol: float = 1e-6,
    cap: float = UPDATE_CAP,
    center: bool = True,
) -> Hyperparameters:
    """Maximise the log marginal likelihood in log-hyperparameter space.

    Every hyperparameter is kept within a factor ``cap`` of its current value
    by the optimiser's box bounds. The returned point never has a lower
    likelihood than ``current``.
    """
    return optimize_hyperparameters_detailed(training, kernel, current, max_iter, gtol, cap, center).hyper


def rmse_against_field(model: GPModel, field: ScalarField) -> float:
    pred = predict_batch(model, field.cell_centers())
    return float(np.sqrt(np.mean((pred - field.values.ravel()) ** 2)))
