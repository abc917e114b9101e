"""Propensity-score baselines and the regression-adjusted OLS estimate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .dataset import Dataset
from .errors import ConvergenceError, RankDeficiencyError, SeparationError, ValidationError
from .space import MatchingSpace, prune_columns


@dataclass(frozen=True, eq=False)
class LogitFit:
    intercept: float
    coef: np.ndarray
    se: np.ndarray
    columns: tuple
    propensity: np.ndarray
    converged: bool
    n_iter: int
    loglik_trace: tuple
    quadratic: bool = False

    def summary(self) -> str:
        lines = [f"{'term':>14} {'coef':>12} {'se':>10}"]
        lines.append(f"{'(intercept)':>14} {self.intercept:12.5f} {self.se[0]:10.5f}")
        for name, c, s in zip(self.columns, self.coef, self.se[1:]):
            lines.append(f"{name:>14} {c:12.5f} {s:10.5f}")
        lines.append(f"converged={self.converged} iterations={self.n_iter} "
                     f"loglik={self.loglik_trace[-1]:.6f}")
        return "\n".join(lines)


def _loglik(A, d, beta):
    eta = A @ beta
    return float(np.sum(d * eta - np.logaddexp(0.0, eta)))


def logit_design(ds: Dataset, quadratic: bool = False):
    """Covariates (and their squares) with constant or duplicate columns dropped."""
    if quadratic:
        Z = np.hstack([ds.X, ds.X**2])
        names = list(ds.names) + [f"{c}^2" for c in ds.names]
    else:
        Z, names = ds.X, list(ds.names)
    Z, names, _ = prune_columns(Z, names)
    return Z, names


def newton_logit(A, d, tol: float = 1e-10, max_iter: int = 100):
    """Newton-Raphson with step halving for a logit with design ``A``.

    ``tol`` bounds the max-norm of the mean score. Returns
    ``(beta, converged, n_iter, loglik_trace, inv_hessian)``.
    """
    n, p = A.shape
    beta = np.zeros(p)
    ll = _loglik(A, d, beta)
    trace = [ll]
    converged = False
    H = None
    it = 0
    for it in range(1, max_iter + 1):
        prob = expit(A @ beta)
        grad = A.T @ (d - prob)
        if np.max(np.abs(grad)) / n < tol:
            converged = True
            it -= 1
            break
        w = prob * (1.0 - prob)
        H = (A * w[:, None]).T @ A
        step = _solve_psd(H, grad)
        t = 1.0
        while True:
            cand = beta + t * step
            ll_new = _loglik(A, d, cand)
            if ll_new >= ll or t < 1e-10:
                break
            t *= 0.5
        if ll_new < ll:
            break
        beta, ll = cand, ll_new
        trace.append(ll)
        if ll > -1e-9 * n:
            raise SeparationError(
                "perfect separation: the likelihood approaches 1 along the direction "
                f"{np.round(beta / np.linalg.norm(beta), 4).tolist()}",
                direction=beta / np.linalg.norm(beta),
            )
    prob = expit(A @ beta)
    w = prob * (1.0 - prob)
    H = (A * w[:, None]).T @ A
    if not converged and np.max(np.abs(A.T @ (d - prob))) / n < 1e-7:
        # line search stalled at rounding level next to the optimum
        converged = True
    if not converged:
        eta = A @ beta
        if np.max(np.abs(eta)) > 30:
            raise SeparationError(
                "quasi-separation: coefficients diverge along "
                f"{np.round(beta / np.linalg.norm(beta), 4).tolist()}",
                direction=beta / np.linalg.norm(beta),
            )
        raise ConvergenceError(f"Newton-Raphson did not converge in {max_iter} iterations")
    try:
        inv = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        inv = np.full((p, p), np.nan)
    return beta, converged, it, tuple(trace), inv


def _solve_psd(H, g):
    try:
        return np.linalg.solve(H, g)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-8 * max(np.trace(H) / H.shape[0], 1e-12)
    try:
        return np.linalg.solve(H + jitter * np.eye(H.shape[0]), g)
    except np.linalg.LinAlgError:
        raise ConvergenceError("singular Hessian even after ridge jitter") from None


def fit_logit(ds: Dataset, quadratic: bool = False) -> LogitFit:
    """Maximum-likelihood logit of treatment on covariates (and squares)."""
    if ds.n_treated in (0, ds.n):
        raise ValidationError("logit needs both treatment classes")
    Z, names = logit_design(ds, quadratic)
    A = np.column_stack([np.ones(ds.n), Z])
    d = ds.d.astype(float)
    beta, conv, it, trace, inv = newton_logit(A, d)
    prob = expit(A @ beta)
    se = np.sqrt(np.clip(np.diag(inv), 0, None))
    return LogitFit(float(beta[0]), beta[1:], se, tuple(names), prob, conv, it, trace,
                    quadratic)


def psm_matching_space(ds: Dataset, fit: LogitFit) -> MatchingSpace:
    """One column: the fitted probability of treatment."""
    if not fit.converged:
        raise ConvergenceError("propensity model did not converge")
    if fit.propensity.shape != (ds.n,):
        raise ValidationError("fit does not belong to this dataset")
    return MatchingSpace(fit.propensity[:, None], "psmsq" if fit.quadratic else "psm",
                         ("propensity",))


def ols_att(ds: Dataset) -> tuple[float, float]:
    """Coefficient on treatment in y ~ 1 + d + X with an HC1 standard error."""
    A = np.column_stack([np.ones(ds.n), ds.d.astype(float), ds.X])
    names = ["(intercept)", "treatment", *ds.names]
    n, p = A.shape
    _, s, vt = np.linalg.svd(A, full_matrices=False)
    tol = s[0] * max(n, p) * np.finfo(float).eps
    rank = int(np.sum(s > tol))
    if rank < p:
        null = vt[rank:]
        involved = np.flatnonzero(np.max(np.abs(null), axis=0) > 1e-8)
        raise RankDeficiencyError(
            f"design has rank {rank} < {p}; collinear columns: "
            f"{[names[j] for j in involved]}",
            columns=[names[j] for j in involved],
        )
    beta, *_ = np.linalg.lstsq(A, ds.y, rcond=None)
    u = ds.y - A @ beta
    bread = np.linalg.inv(A.T @ A)
    meat = (A * (u * u)[:, None]).T @ A
    cov = bread @ meat @ bread * n / (n - p)
    return float(beta[1]), float(np.sqrt(cov[1, 1]))
