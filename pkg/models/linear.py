"""Class-weighted penalized linear learners: logistic regression and linear SVM.

Both minimise

    (1/n) * sum_i s_i * loss(y_i, x_i.beta + b)  +  R(beta) / (C * N)

with s_i the class weight of row i and N the fixed ``REFERENCE_ROWS``; duplicating every
row leaves the fit unchanged. R is ``0.5*|beta|^2`` (l2), ``|beta|_1`` (l1) or
``l1_ratio*|beta|_1 + 0.5*(1 - l1_ratio)*|beta|^2`` (elasticnet); the intercept is
not penalized. The solver is accelerated proximal gradient (FISTA) with adaptive
restart, stopped when no parameter moves by more than ``tol`` in one step.
"""

import time
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from models.base import TrainedModel, as_design
from models.config import ModelConfig
from models.weights import REFERENCE_ROWS, ClassWeights, class_weights
from utils.logger import RiskLogger, warn
from utils.validators import validate_labels


def _augment(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((X.shape[0], 1))])


def logistic_loss(params: np.ndarray, X: np.ndarray, y: np.ndarray, sample_weight: np.ndarray) -> float:
    """Mean class-weighted logistic loss; ``params`` is ``(beta..., b)``."""
    m = _augment(X) @ params
    return float(np.mean(sample_weight * (np.logaddexp(0.0, m) - y * m)))


def logistic_gradient(params: np.ndarray, X: np.ndarray, y: np.ndarray, sample_weight: np.ndarray) -> np.ndarray:
    Xa = _augment(X)
    residual = sample_weight * (expit(Xa @ params) - y)
    return Xa.T @ residual / X.shape[0]


def squared_hinge_loss(params: np.ndarray, X: np.ndarray, y: np.ndarray, sample_weight: np.ndarray) -> float:
    """Mean class-weighted squared hinge loss with labels mapped to -1/+1."""
    signed = 2.0 * y - 1.0
    slack = np.maximum(0.0, 1.0 - signed * (_augment(X) @ params))
    return float(np.mean(sample_weight * slack ** 2))


def squared_hinge_gradient(params: np.ndarray, X: np.ndarray, y: np.ndarray, sample_weight: np.ndarray) -> np.ndarray:
    Xa = _augment(X)
    signed = 2.0 * y - 1.0
    slack = np.maximum(0.0, 1.0 - signed * (Xa @ params))
    return Xa.T @ (-2.0 * sample_weight * signed * slack) / X.shape[0]


_LOSSES = {
    "LR": (logistic_loss, logistic_gradient, 0.25),
    "SVM": (squared_hinge_loss, squared_hinge_gradient, 2.0),
}


def penalty_split(config: ModelConfig) -> Tuple[float, float]:
    """(l1 weight, l2 weight) of R for the configured penalty."""
    if config.penalty == "l1":
        return 1.0, 0.0
    if config.penalty == "l2":
        return 0.0, 1.0
    return config.l1_ratio, 1.0 - config.l1_ratio


def penalized_objective(params, X, y, sample_weight, config: ModelConfig) -> float:
    """Full objective (data term plus penalty) for the config's learner."""
    loss, _, _ = _LOSSES[config.learner]
    l1, l2 = penalty_split(config)
    beta = params[:-1]
    scale = config.C * REFERENCE_ROWS
    return loss(params, X, y, sample_weight) + (l1 * np.abs(beta).sum() + 0.5 * l2 * beta @ beta) / scale


def _fista(X, y, sample_weight, config: ModelConfig):
    loss, grad, curvature = _LOSSES[config.learner]
    n, p = X.shape
    l1, l2 = penalty_split(config)
    lam1 = l1 / (config.C * REFERENCE_ROWS)
    lam2 = l2 / (config.C * REFERENCE_ROWS)
    Xa = _augment(X) * np.sqrt(sample_weight / n)[:, None]
    lipschitz = curvature * np.linalg.norm(Xa, 2) ** 2 + lam2
    step = 1.0 / lipschitz

    theta = np.zeros(p + 1)
    z = theta.copy()
    t = 1.0
    converged = False
    iteration = 0
    for iteration in range(1, config.max_iter + 1):
        g = grad(z, X, y, sample_weight)
        g[:-1] += lam2 * z[:-1]
        candidate = z - step * g
        beta = candidate[:-1]
        candidate[:-1] = np.sign(beta) * np.maximum(np.abs(beta) - step * lam1, 0.0)

        delta = np.max(np.abs(candidate - theta))
        if (z - candidate) @ (candidate - theta) > 0:
            t = 1.0
            z = candidate.copy()
        else:
            t_next = (1.0 + np.sqrt(1.0 + 4.0 * t * t)) / 2.0
            z = candidate + ((t - 1.0) / t_next) * (candidate - theta)
            t = t_next
        theta = candidate
        if delta < config.tol:
            converged = True
            break
    return theta, converged, iteration


def _fit_linear(matrix, labels, weights: Optional[ClassWeights], config: ModelConfig) -> TrainedModel:
    start = time.time()
    config.validate()
    X, names, _ = as_design(matrix)
    y = validate_labels(labels).astype(float)
    weights = weights or class_weights(y)
    sample_weight = weights.sample_weights(y)

    theta, converged, n_iter = _fista(X, y, sample_weight, config)
    model = TrainedModel(
        config=config,
        columns=names or [f"x{j}" for j in range(X.shape[1])],
        coef=theta[:-1].copy(),
        intercept=float(theta[-1]),
        metadata={
            "n": int(X.shape[0]),
            "p": int(X.shape[1]),
            "class_weights": weights.to_dict(),
            "seed": config.seed,
            "converged": converged,
            "n_iter": n_iter,
            "objective": float(penalized_objective(theta, X, y, sample_weight, config)),
        },
    )
    if not converged:
        warn(
            f"fit_{config.learner.lower()}",
            "solver did not converge",
            max_iter=config.max_iter,
            penalty=config.penalty,
            C=config.C,
        )
    RiskLogger.log_performance(f"fit_{config.learner.lower()}", (time.time() - start) * 1000, {
        "n_iter": n_iter, "converged": converged,
    })
    return model


def fit_logistic(matrix, labels: Sequence[int], weights: Optional[ClassWeights], config: ModelConfig) -> TrainedModel:
    """Class-weighted penalized logistic regression."""
    return _fit_linear(matrix, labels, weights, config)


def platt_scale(margins: np.ndarray, labels: np.ndarray) -> Tuple[float, float]:
    """Fit ``P(y=1) = expit(a*m + b)`` on margins with Platt's smoothed targets.

    Class counts are rescaled to REFERENCE_ROWS before smoothing and the loss is a mean.
    """
    y = np.asarray(labels, dtype=float)
    scale = REFERENCE_ROWS / max(y.size, 1)
    n_pos, n_neg = y.sum() * scale, (y.size - y.sum()) * scale
    target = np.where(y == 1, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))
    m = np.asarray(margins, dtype=float)

    def objective(ab):
        z = ab[0] * m + ab[1]
        return float(np.mean(np.logaddexp(0.0, z) - target * z))

    def gradient(ab):
        residual = expit(ab[0] * m + ab[1]) - target
        return np.array([residual @ m, residual.sum()]) / m.size

    x0 = np.array([1.0, np.log((n_pos + 1.0) / (n_neg + 1.0))])
    result = minimize(objective, x0, jac=gradient, method="L-BFGS-B", options={"ftol": 1e-15, "gtol": 1e-10})
    return float(result.x[0]), float(result.x[1])


def fit_linear_svm(matrix, labels: Sequence[int], weights: Optional[ClassWeights], config: ModelConfig) -> TrainedModel:
    """Class-weighted penalized linear SVM (squared hinge) with Platt calibration."""
    model = _fit_linear(matrix, labels, weights, config)
    X, _, _ = as_design(matrix)
    model.platt = platt_scale(X @ model.coef + model.intercept, np.asarray(labels))
    return model
