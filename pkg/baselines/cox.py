"""Multivariable Cox proportional-hazards regression (Efron ties, damped Newton)."""

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from cohort.matrix import FeatureMatrix
from utils.errors import ValidationError
from utils.logger import RiskLogger, warn
from utils.parallel import ordered_map

MAX_ITER = 100
TOL = 1e-9
SEPARATION_BETA = 20.0


@dataclass
class CoxFit:
    """Fitted log hazard ratios with Wald statistics."""

    names: List[str]
    beta: np.ndarray
    se: np.ndarray
    log_likelihood: float
    converged: bool
    iterations: int
    n: int
    n_events: int
    ties: str = "efron"
    warnings: List[str] = field(default_factory=list)

    @property
    def z(self) -> np.ndarray:
        return self.beta / self.se

    @property
    def p_values(self) -> np.ndarray:
        return np.clip(2.0 * norm.sf(np.abs(self.z)), 0.0, 1.0)

    @property
    def hazard_ratios(self) -> np.ndarray:
        return np.exp(self.beta)

    def confidence_interval(self, level: float = 0.95) -> np.ndarray:
        """(p, 2) Wald interval for beta."""
        half = norm.ppf(0.5 + level / 2.0) * self.se
        return np.column_stack([self.beta - half, self.beta + half])

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValidationError(f"Unknown Cox covariate '{name}'", field=name)

    def p_value(self, name: str) -> float:
        return float(self.p_values[self.index(name)])

    def to_dict(self) -> dict:
        ci = self.confidence_interval()
        return {
            "ties": self.ties,
            "n": self.n,
            "n_events": self.n_events,
            "log_likelihood": self.log_likelihood,
            "converged": self.converged,
            "iterations": self.iterations,
            "warnings": list(self.warnings),
            "covariates": [
                {
                    "name": name,
                    "beta": float(self.beta[j]),
                    "se": float(self.se[j]),
                    "z": float(self.z[j]),
                    "p": float(self.p_values[j]),
                    "hazard_ratio": float(self.hazard_ratios[j]),
                    "ci_lower": float(ci[j, 0]),
                    "ci_upper": float(ci[j, 1]),
                }
                for j, name in enumerate(self.names)
            ],
        }


def _prepare(X, times, events) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    t = np.asarray(times, dtype=float).ravel()
    e = np.asarray(events).ravel().astype(np.int64)
    order = np.argsort(t, kind="stable")
    return X[order], t[order], e[order]


def efron_terms(beta: np.ndarray, X: np.ndarray, times: np.ndarray, events: np.ndarray):
    """Log partial likelihood, gradient and Hessian with Efron's tie correction.

    ``times`` must be sorted ascending with ``X`` and ``events`` in the same order.
    """
    eta = X @ beta
    w = np.exp(eta - eta.max())
    wx = w[:, None] * X
    wxx = wx[:, :, None] * X[:, None, :]
    # Risk-set sums: everyone still under observation at index i or later
    s0 = np.cumsum(w[::-1])[::-1]
    s1 = np.cumsum(wx[::-1], axis=0)[::-1]
    s2 = np.cumsum(wxx[::-1], axis=0)[::-1]

    p = X.shape[1]
    ll, grad, hess = 0.0, np.zeros(p), np.zeros((p, p))
    event_times = np.unique(times[events == 1])
    for t in event_times:
        start = np.searchsorted(times, t, side="left")
        tied = np.flatnonzero((times == t) & (events == 1))
        d = tied.size
        d0, d1, d2 = w[tied].sum(), wx[tied].sum(axis=0), wxx[tied].sum(axis=0)
        ll += (eta[tied] - eta.max()).sum()
        grad += X[tied].sum(axis=0)
        for l in range(d):
            frac = l / d
            den = s0[start] - frac * d0
            num1 = s1[start] - frac * d1
            num2 = s2[start] - frac * d2
            ll -= np.log(den)
            mean = num1 / den
            grad -= mean
            hess -= num2 / den - np.outer(mean, mean)
    return float(ll), grad, hess


def cox_log_likelihood(beta, X, times, events) -> float:
    """Efron log partial likelihood at ``beta``."""
    Xs, ts, es = _prepare(X, times, events)
    return efron_terms(np.asarray(beta, dtype=float), Xs, ts, es)[0]


def cox_gradient(beta, X, times, events) -> np.ndarray:
    """Gradient of the Efron log partial likelihood at ``beta``."""
    Xs, ts, es = _prepare(X, times, events)
    return efron_terms(np.asarray(beta, dtype=float), Xs, ts, es)[1]


def fit_cox(
    covariates,
    times: Sequence[float],
    events: Sequence[int],
    names: Optional[Sequence[str]] = None,
    max_iter: int = MAX_ITER,
    tol: float = TOL,
) -> CoxFit:
    """Maximize the Efron partial likelihood by step-halving Newton iterations.

    Args:
        covariates: FeatureMatrix or (n, p) array
        times: Positive follow-up times
        events: 1 for an observed death, 0 for censored
        names: Covariate names (taken from the matrix when omitted)

    Raises:
        ValidationError: No events, non-positive times or a constant covariate
    """
    start_time = time.time()
    if isinstance(covariates, FeatureMatrix):
        names = list(names or covariates.column_names)
        covariates = covariates.rows
    X = np.asarray(covariates, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    names = list(names) if names is not None else [f"x{j}" for j in range(X.shape[1])]
    if len(names) != X.shape[1]:
        raise ValidationError("names and covariate columns differ in length", field="names")
    if X.shape[1] == 0:
        raise ValidationError("Cox regression needs at least one covariate", field="covariates")
    t = np.asarray(times, dtype=float).ravel()
    e = np.asarray(events).ravel()
    if t.size != X.shape[0] or e.size != X.shape[0]:
        raise ValidationError("times, events and covariates differ in length", field="times")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(t)):
        raise ValidationError("Cox inputs must be finite", field="covariates")
    if np.any(t <= 0):
        raise ValidationError("survival times must be positive", field="times")
    if not np.isin(e, (0, 1)).all():
        raise ValidationError("events must be 0/1", field="events")
    if e.sum() == 0:
        raise ValidationError("Cox regression needs at least one event", field="events")
    for j, name in enumerate(names):
        if np.ptp(X[:, j]) == 0:
            raise ValidationError(f"Covariate '{name}' is constant", field=name)

    Xs, ts, es = _prepare(X, t, e)
    beta = np.zeros(X.shape[1])
    ll, grad, hess = efron_terms(beta, Xs, ts, es)
    converged, separated, iterations = False, False, 0
    for iterations in range(1, max_iter + 1):
        try:
            step = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.pinv(-hess) @ grad
        # Halve until the likelihood does not drop
        scale = 1.0
        for _ in range(30):
            candidate = beta + scale * step
            new_ll, new_grad, new_hess = efron_terms(candidate, Xs, ts, es)
            if new_ll >= ll - 1e-12:
                break
            scale /= 2.0
        change = new_ll - ll
        beta, ll, grad, hess = candidate, new_ll, new_grad, new_hess
        if np.max(np.abs(beta)) > SEPARATION_BETA and change > 0:
            separated = True
            break
        if abs(change) < tol:
            converged = True
            break

    information = -hess
    try:
        covariance = np.linalg.inv(information)
    except np.linalg.LinAlgError:
        covariance = np.linalg.pinv(information)
    se = np.sqrt(np.clip(np.diag(covariance), 0.0, None))
    se[se == 0] = np.inf

    fit = CoxFit(
        names=names, beta=beta, se=se, log_likelihood=ll, converged=converged and not separated,
        iterations=iterations, n=int(X.shape[0]), n_events=int(e.sum()),
    )
    if separated:
        fit.warnings.append("monotone likelihood: coefficients diverge (separation)")
        warn("fit_cox", "monotone likelihood detected, fit not converged",
             covariates=[names[j] for j in np.flatnonzero(np.abs(beta) > SEPARATION_BETA)])
    elif not converged:
        fit.warnings.append(f"no convergence after {max_iter} iterations")
        warn("fit_cox", "Newton iterations did not converge", iterations=max_iter)
    RiskLogger.log_performance("fit_cox", (time.time() - start_time) * 1000, {
        "n": fit.n, "events": fit.n_events, "covariates": len(names), "iterations": iterations,
    })
    return fit


def fit_cox_groups(
    groups: Dict[str, Tuple[np.ndarray, np.ndarray, np.ndarray, Sequence[str]]],
    threads: int = 1,
) -> Dict[str, Optional[CoxFit]]:
    """Fit one Cox model per subgroup concurrently; a group that cannot be fitted maps to None."""

    def fit_one(item):
        group, (X, times, events, names) = item
        try:
            return fit_cox(X, times, events, names)
        except ValidationError as e:
            warn("fit_cox", "subgroup Cox fit skipped", group=group, reason=str(e))
            return None

    items = list(groups.items())
    return dict(zip([group for group, _ in items], ordered_map(fit_one, items, threads)))
