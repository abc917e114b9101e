"""Matching spaces built by variable selection: L1 supports and penalized forests.

LASSO objectives are scaled per observation, ``(1/2n) RSS + lam * |b|_1`` for
the linear model and ``(1/n) NLL + lam * |b|_1`` for the logit, with an
unpenalized intercept. On standardized covariates this makes
``lam_max = max_j |X_j'(y - ybar)| / n`` for both.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.special import expit

from .dataset import Dataset
from .errors import ConvergenceError, SeparationError, ValidationError
from .space import MatchingSpace

KKT_TOL = 1e-6
_CD_TOL = 1e-10
_MAX_SWEEPS = 100000


@njit(cache=True)
def _cd_quadratic(G, c, beta, lam, pen, tol, max_sweeps):
    """Coordinate descent on 0.5 b'Gb - c'b + lam * sum(pen_j |b_j|).

    Works in place on ``beta``; returns the number of sweeps or -1.
    """
    p = c.shape[0]
    grad = c - G @ beta
    for sweep in range(max_sweeps):
        for j in range(p):
            gjj = G[j, j]
            if gjj <= 0.0:
                continue
            old = beta[j]
            u = grad[j] + gjj * old
            thr = lam * pen[j]
            if u > thr:
                new = (u - thr) / gjj
            elif u < -thr:
                new = (u + thr) / gjj
            else:
                new = 0.0
            if new != old:
                delta = new - old
                for i in range(p):
                    grad[i] -= delta * G[i, j]
                beta[j] = new
        worst = 0.0
        for j in range(p):
            thr = lam * pen[j]
            if beta[j] != 0.0 or thr == 0.0:
                s = 1.0 if beta[j] > 0 else (-1.0 if beta[j] < 0 else 0.0)
                v = abs(grad[j] - thr * s)
            else:
                v = abs(grad[j]) - thr
            if v > worst:
                worst = v
        if worst <= tol:
            return sweep + 1
    return -1


@dataclass(frozen=True, eq=False)
class LassoFit:
    kind: str
    intercept: float
    coef: np.ndarray
    lam: float
    columns: tuple
    lambdas: np.ndarray = field(default_factory=lambda: np.empty(0))
    cv_loss: np.ndarray = field(default_factory=lambda: np.empty(0))
    penalty_scale: float = 1.0

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.coef != 0.0)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "lambda": self.lam,
            "penalty_scale": self.penalty_scale,
            "intercept": self.intercept,
            "coef": {c: float(b) for c, b in zip(self.columns, self.coef)},
            "support": [self.columns[j] for j in self.support],
            "cv": [[float(a), float(b)] for a, b in zip(self.lambdas, self.cv_loss)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def lambda_max(X, t) -> float:
    """Smallest penalty at which every slope is zero (either objective)."""
    X = np.asarray(X, dtype=float)
    t = np.asarray(t, dtype=float)
    Xc = X - X.mean(axis=0)
    return float(np.max(np.abs(Xc.T @ (t - t.mean()))) / X.shape[0])


def lambda_grid(lmax: float, n_lambda: int = 50, ratio: float = 1e-3) -> np.ndarray:
    """Log-spaced penalties from ``lmax`` down to ``lmax * ratio``."""
    if lmax <= 0:
        return np.zeros(1)
    return np.geomspace(lmax, lmax * ratio, n_lambda)


def _linear(X, y, lam, beta=None):
    n = X.shape[0]
    mu = X.mean(axis=0)
    Xc = X - mu
    ybar = y.mean()
    G = Xc.T @ Xc / n
    c = Xc.T @ (y - ybar) / n
    b = np.zeros(X.shape[1]) if beta is None else beta.copy()
    sweeps = _cd_quadratic(G, c, b, float(lam), np.ones(X.shape[1]), _CD_TOL, _MAX_SWEEPS)
    if sweeps < 0:
        raise ConvergenceError(
            f"lasso coordinate descent did not converge in {_MAX_SWEEPS} sweeps at lambda={lam:g}"
        )
    return float(ybar - mu @ b), b


def _logit_objective(A, d, beta, lam, pen):
    eta = A @ beta
    return float(np.mean(np.logaddexp(0.0, eta) - d * eta) + lam * np.sum(pen * np.abs(beta)))


def _logit_kkt(A, d, beta, lam, pen) -> float:
    grad = A.T @ (d - expit(A @ beta)) / A.shape[0]
    s = np.sign(beta)
    thr = lam * pen
    active = (beta != 0) | (thr == 0)
    return float(np.max(np.where(active, np.abs(grad - thr * s), np.abs(grad) - thr)))


def _logit(X, d, lam, beta=None, max_iter: int = 200):
    """Proximal Newton (IRLS outer loop, coordinate descent inner loop)."""
    n, k = X.shape
    A = np.column_stack([np.ones(n), X])
    pen = np.concatenate([[0.0], np.ones(k)])
    if beta is None:
        dbar = float(np.clip(d.mean(), 1e-12, 1 - 1e-12))
        beta = np.zeros(k + 1)
        beta[0] = np.log(dbar / (1 - dbar))
    else:
        beta = beta.copy()
    obj = _logit_objective(A, d, beta, lam, pen)
    for _ in range(max_iter):
        if _logit_kkt(A, d, beta, lam, pen) <= _CD_TOL * 10:
            break
        eta = A @ beta
        p = expit(eta)
        w = np.maximum(p * (1 - p), 1e-10)
        z = eta + (d - p) / w
        G = (A * w[:, None]).T @ A / n
        c = (A * w[:, None]).T @ z / n
        cand = beta.copy()
        if _cd_quadratic(G, c, cand, float(lam), pen, _CD_TOL, _MAX_SWEEPS) < 0:
            raise ConvergenceError(f"inner lasso-logit solve did not converge at lambda={lam:g}")
        step = cand - beta
        t = 1.0
        while True:
            new = beta + t * step
            new_obj = _logit_objective(A, d, new, lam, pen)
            if new_obj <= obj + 1e-15 * max(1.0, abs(obj)) or t < 1e-10:
                break
            t *= 0.5
        if new_obj > obj:
            break
        beta, obj = new, new_obj
        if np.mean(np.logaddexp(0.0, A @ beta) - d * (A @ beta)) < 1e-8:
            raise SeparationError(
                f"lasso-logit at lambda={lam:g}: the classes are separable and the "
                "coefficients diverge",
                direction=beta[1:] / max(np.linalg.norm(beta[1:]), 1e-300),
            )
    if _logit_kkt(A, d, beta, lam, pen) > KKT_TOL:
        if np.max(np.abs(A @ beta)) > 30:
            raise SeparationError(
                f"lasso-logit at lambda={lam:g}: coefficients diverge (quasi-separation)",
                direction=beta[1:] / max(np.linalg.norm(beta[1:]), 1e-300),
            )
        raise ConvergenceError(f"lasso-logit did not converge at lambda={lam:g}")
    eta = A @ beta
    if lam == 0 and np.all(np.where(d == 1, eta > 0, eta < 0)):
        # the fitted index splits the classes perfectly, so no finite MLE exists
        raise SeparationError(
            "unpenalized logit: the classes are completely separated and the "
            "coefficients diverge",
            direction=beta[1:] / max(np.linalg.norm(beta[1:]), 1e-300),
        )
    return float(beta[0]), beta[1:].copy()


def lasso_solve(X, t, lam: float, kind: str = "linear"):
    """Return ``(intercept, coef)`` at a single penalty."""
    X = np.asarray(X, dtype=float)
    t = np.asarray(t, dtype=float)
    if lam < 0:
        raise ValidationError("lambda must be non-negative")
    if kind == "linear":
        return _linear(X, t, lam)
    if kind == "logit":
        return _logit(X, t, lam)
    raise ValidationError(f"unknown lasso kind {kind!r}")


def kkt_residual(X, t, intercept: float, coef, lam: float, kind: str = "linear") -> float:
    """Largest violation of the optimality conditions (0 at an exact solution)."""
    X = np.asarray(X, dtype=float)
    t = np.asarray(t, dtype=float)
    coef = np.asarray(coef, dtype=float)
    eta = intercept + X @ coef
    r = t - (expit(eta) if kind == "logit" else eta)
    grad = X.T @ r / X.shape[0]
    s = np.sign(coef)
    slope = np.where(coef != 0, np.abs(grad - lam * s), np.abs(grad) - lam)
    return float(max(np.max(slope, initial=0.0), abs(r.mean())))


def _cv_loss(kind, t_true, eta):
    if kind == "linear":
        return float(np.mean((t_true - eta) ** 2))
    return float(np.mean(np.logaddexp(0.0, eta) - t_true * eta))


def _fold_ids(n: int, folds: int, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    ids = np.arange(n) % folds
    rng.shuffle(ids)
    return ids


def _path(X, t, lambdas, kind):
    """Warm-started fits along a decreasing grid; a separation failure ends the path."""
    out = []
    beta = None
    for lam in lambdas:
        try:
            if kind == "linear":
                b0, b = _linear(X, t, lam, beta)
                beta = b
            else:
                full = None if beta is None else beta
                b0, b = _logit(X, t, lam, full)
                beta = np.concatenate([[b0], b])
        except (SeparationError, ConvergenceError):
            break
        out.append((b0, b.copy() if kind == "linear" else beta[1:].copy()))
    return out


def _lasso(ds: Dataset, kind: str, lambdas=None, folds: int = 5, seed=0,
           penalty_scale: float = 1.0, lam: float | None = None) -> LassoFit:
    if penalty_scale <= 0:
        raise ValidationError("penalty_scale must be positive")
    X = ds.X
    t = ds.y if kind == "linear" else ds.d.astype(float)
    if lam is not None:
        b0, b = lasso_solve(X, t, lam, kind)
        return LassoFit(kind, b0, b, float(lam), ds.names, penalty_scale=penalty_scale)
    lambdas = (lambda_grid(lambda_max(X, t)) if lambdas is None
               else np.sort(np.asarray(lambdas, dtype=float))[::-1])
    if folds < 2 or folds > ds.n:
        raise ValidationError("folds must lie between 2 and n")
    ids = _fold_ids(ds.n, folds, seed)
    losses = np.zeros((folds, lambdas.size))
    for f in range(folds):
        tr, te = ids != f, ids == f
        path = _path(X[tr], t[tr], lambdas, kind)
        for m, (b0, b) in enumerate(path):
            losses[f, m] = _cv_loss(kind, t[te], b0 + X[te] @ b)
        losses[f, len(path):] = np.inf
    curve = losses.mean(axis=0)
    best = int(np.argmin(curve))
    chosen = float(lambdas[best] * penalty_scale)
    b0, b = lasso_solve(X, t, chosen, kind)
    return LassoFit(kind, b0, b, chosen, ds.names, lambdas, curve, penalty_scale)


def lasso_linear(ds: Dataset, lambdas=None, folds: int = 5, seed=0,
                 penalty_scale: float = 1.0, lam: float | None = None) -> LassoFit:
    """LASSO of the outcome on covariates; the penalty is picked by k-fold CV.

    The CV-selected penalty is multiplied by ``penalty_scale`` before the
    final fit. Passing ``lam`` skips CV.
    """
    return _lasso(ds, "linear", lambdas, folds, seed, penalty_scale, lam)


def lasso_logit(ds: Dataset, lambdas=None, folds: int = 5, seed=0,
                penalty_scale: float = 1.0, lam: float | None = None) -> LassoFit:
    """L1-penalized logit of treatment on covariates; CV on held-out deviance."""
    return _lasso(ds, "logit", lambdas, folds, seed, penalty_scale, lam)


def l1_matching_space(ds: Dataset, fitY: LassoFit, fitD: LassoFit) -> MatchingSpace:
    """Raw (standardized) covariates in the union of the two supports."""
    if fitY.coef.size != ds.k or fitD.coef.size != ds.k:
        raise ValidationError("fits do not match the dataset's covariates")
    cols = np.union1d(fitY.support, fitD.support)
    if cols.size == 0:
        raise ValidationError("both LASSO supports are empty; nothing to match on")
    return MatchingSpace(ds.X[:, cols], "l1", tuple(ds.names[j] for j in cols))


# Regularized random forests

@njit(cache=True)
def _best_split(X, t, buf, s, e, j, min_node):
    """Best threshold on feature j for rows buf[s:e]: (sse_reduction, threshold)."""
    m = e - s
    vals = np.empty(m)
    ys = np.empty(m)
    for q in range(m):
        vals[q] = X[buf[s + q], j]
    order = np.argsort(vals, kind="mergesort")
    total = 0.0
    for q in range(m):
        ys[q] = t[buf[s + order[q]]]
        total += ys[q]
    base = total * total / m
    best = 0.0
    thr = 0.0
    left = 0.0
    for q in range(m - 1):
        left += ys[q]
        nl = q + 1
        if nl < min_node or m - nl < min_node:
            continue
        a = vals[order[q]]
        b = vals[order[q + 1]]
        if a == b:
            continue
        right = total - left
        red = left * left / nl + right * right / (m - nl) - base
        if red > best:
            best = red
            thr = 0.5 * (a + b)
    return best, thr


@njit(cache=True)
def _grow_forest(X, t, lam, n_trees, mtry, max_depth, min_node, bootstrap, gain_mult,
                 in_f, seed):
    np.random.seed(seed)
    n, k = X.shape
    # every leaf holds >= 1 row, so a tree never has more than 2n - 1 nodes
    max_nodes = 2 * n - 1
    if max_depth < 40:
        max_nodes = min(max_nodes, 2 ** (max_depth + 1) - 1)
    feat = -np.ones((n_trees, max_nodes), dtype=np.int64)
    thresh = np.zeros((n_trees, max_nodes))
    left = -np.ones((n_trees, max_nodes), dtype=np.int64)
    right = -np.ones((n_trees, max_nodes), dtype=np.int64)
    value = np.zeros((n_trees, max_nodes))
    rec_feat = np.empty(n_trees * max_nodes, dtype=np.int64)
    rec_gain = np.empty(n_trees * max_nodes)
    n_rec = 0
    root_ok = True
    perm = np.arange(k)
    q_node = np.empty(max_nodes, dtype=np.int64)
    q_start = np.empty(max_nodes, dtype=np.int64)
    q_end = np.empty(max_nodes, dtype=np.int64)
    q_depth = np.empty(max_nodes, dtype=np.int64)
    for tree in range(n_trees):
        if bootstrap:
            buf = np.random.randint(0, n, n)
        else:
            buf = np.arange(n)
        n_root = buf.size
        head = 0
        tail = 1
        n_nodes = 1
        q_node[0] = 0
        q_start[0] = 0
        q_end[0] = n_root
        q_depth[0] = 0
        while head < tail:
            node = q_node[head]
            s = q_start[head]
            e = q_end[head]
            depth = q_depth[head]
            head += 1
            acc = 0.0
            for q in range(s, e):
                acc += t[buf[q]]
            value[tree, node] = acc / (e - s)
            if depth >= max_depth or e - s < 2 * min_node:
                if node == 0:
                    root_ok = False
                continue
            # partial Fisher-Yates draw of mtry candidate features
            for a in range(mtry):
                b = a + np.random.randint(0, k - a)
                tmp = perm[a]
                perm[a] = perm[b]
                perm[b] = tmp
            best_r = -1.0
            best_g = 0.0
            best_j = -1
            best_thr = 0.0
            for a in range(mtry):
                j = perm[a]
                red, thr = _best_split(X, t, buf, s, e, j, min_node)
                g = gain_mult * red / n_root
                gr = g if in_f[j] else lam * g
                if (gr > best_r or (gr == best_r and g > best_g)
                        or (gr == best_r and g == best_g and best_j >= 0 and j < best_j)):
                    best_r = gr
                    best_g = g
                    best_j = j
                    best_thr = thr
            if best_j < 0 or best_g <= 1e-14:
                if node == 0:
                    root_ok = False
                continue
            # partition buf[s:e] around the threshold
            lo = s
            hi = e - 1
            while lo <= hi:
                if X[buf[lo], best_j] <= best_thr:
                    lo += 1
                else:
                    tmp = buf[lo]
                    buf[lo] = buf[hi]
                    buf[hi] = tmp
                    hi -= 1
            feat[tree, node] = best_j
            thresh[tree, node] = best_thr
            in_f[best_j] = True
            rec_feat[n_rec] = best_j
            rec_gain[n_rec] = best_g
            n_rec += 1
            left[tree, node] = n_nodes
            right[tree, node] = n_nodes + 1
            q_node[tail] = n_nodes
            q_start[tail] = s
            q_end[tail] = lo
            q_depth[tail] = depth + 1
            q_node[tail + 1] = n_nodes + 1
            q_start[tail + 1] = lo
            q_end[tail + 1] = e
            q_depth[tail + 1] = depth + 1
            tail += 2
            n_nodes += 2
    return feat, thresh, left, right, value, rec_feat[:n_rec], rec_gain[:n_rec], root_ok


@njit(cache=True)
def _forest_predict(X, feat, thresh, left, right, value):
    n = X.shape[0]
    n_trees = feat.shape[0]
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for tr in range(n_trees):
            node = 0
            while feat[tr, node] >= 0:
                if X[i, feat[tr, node]] <= thresh[tr, node]:
                    node = left[tr, node]
                else:
                    node = right[tr, node]
            acc += value[tr, node]
        out[i] = acc / n_trees
    return out


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    mtry: int | None = None
    max_depth: int = 8
    min_node: int = 10
    bootstrap: bool = True

    def resolve_mtry(self, k: int) -> int:
        m = self.mtry if self.mtry is not None else max(1, int(np.floor(np.sqrt(k))))
        if not 1 <= m <= k:
            raise ValidationError(f"mtry must lie in [1, {k}]")
        return m


@dataclass(frozen=True, eq=False)
class RrfFit:
    """A fitted penalized-gain forest.

    ``selected`` holds the covariates used in at least one split and
    ``importance[j]`` the mean normalized gain of splits on ``j`` (0 if unused).
    """

    target: str
    lam: float
    selected: tuple
    importance: np.ndarray
    columns: tuple
    trees: tuple
    split_features: np.ndarray
    split_gains: np.ndarray
    lambdas: np.ndarray = field(default_factory=lambda: np.empty(0))
    cv_loss: np.ndarray = field(default_factory=lambda: np.empty(0))

    def predict(self, X) -> np.ndarray:
        return _forest_predict(np.ascontiguousarray(X, dtype=float), *self.trees)

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "lambda": self.lam,
            "selected": [self.columns[j] for j in self.selected],
            "importance": {self.columns[j]: float(self.importance[j]) for j in self.selected},
            "n_splits": int(self.split_features.size),
            "cv": [[float(a), float(b)] for a, b in zip(self.lambdas, self.cv_loss)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def grow_forest(X, t, lam: float | None, params: ForestParams = ForestParams(),
                classification: bool = False, seed: int = 0):
    """Grow a forest; ``lam=None`` is the unpenalized forest.

    Candidate gains on features not yet used anywhere in the forest are
    multiplied by ``lam``. The winner maximizes the penalized gain, ties going
    to the larger raw gain and then the lower column index; a node is split
    only if the raw gain is positive. Gains are impurity reductions (variance
    for regression, Gini = 2 * variance for a 0/1 target) weighted by the
    node's share of the tree's sample.
    """
    X = np.ascontiguousarray(X, dtype=float)
    t = np.ascontiguousarray(t, dtype=float)
    n, k = X.shape
    if lam is not None and not 0.0 <= lam <= 1.0:
        raise ValidationError("lambda must lie in [0, 1]")
    mtry = params.resolve_mtry(k)
    if params.n_trees < 1 or params.max_depth < 0 or params.min_node < 1:
        raise ValidationError("need n_trees >= 1, max_depth >= 0 and min_node >= 1")
    in_f = np.zeros(k, dtype=np.bool_)
    out = _grow_forest(X, t, 1.0 if lam is None else float(lam), params.n_trees, mtry,
                       params.max_depth, params.min_node, params.bootstrap,
                       2.0 if classification else 1.0, in_f, int(seed) % (2**32))
    feat, thresh, left, right, value, rf, rg, root_ok = out
    if not root_ok:
        raise ValidationError(
            "degenerate tree: no valid split at the root (constant target or too few rows "
            f"for min_node={params.min_node})"
        )
    return (feat, thresh, left, right, value), rf, rg


def _rrf_fit(X, t, target, lam, params, seed, columns, lambdas=None, cv=None) -> RrfFit:
    trees, rf, rg = grow_forest(X, t, lam, params, target == "treatment", seed)
    k = X.shape[1]
    sums = np.bincount(rf, weights=rg, minlength=k)
    counts = np.bincount(rf, minlength=k)
    importance = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    selected = tuple(int(j) for j in np.flatnonzero(counts))
    return RrfFit(target, 1.0 if lam is None else float(lam), selected, importance,
                  tuple(columns), trees, rf, rg,
                  np.empty(0) if lambdas is None else np.asarray(lambdas, dtype=float),
                  np.empty(0) if cv is None else np.asarray(cv))


DEFAULT_RRF_GRID = (0.5, 1.0)


def rrf_train(ds: Dataset, target: str = "outcome", lam=DEFAULT_RRF_GRID,
              params: ForestParams = ForestParams(), seed: int = 0, folds: int = 3) -> RrfFit:
    """Penalized-gain forest on the outcome (regression) or treatment (classification).

    ``lam`` is one value in [0, 1] or a grid; with a grid it is chosen by
    ``folds``-fold CV on held-out squared error (Brier score for treatment).
    """
    if target not in ("outcome", "treatment"):
        raise ValidationError(f"unknown target {target!r}")
    X = ds.X
    t = ds.y if target == "outcome" else ds.d.astype(float)
    grid = np.atleast_1d(np.asarray(lam, dtype=float))
    if grid.size == 1:
        return _rrf_fit(X, t, target, float(grid[0]), params, seed, ds.names)
    ids = _fold_ids(ds.n, folds, seed)
    losses = np.zeros((folds, grid.size))
    for f in range(folds):
        tr, te = ids != f, ids == f
        for m, val in enumerate(grid):
            trees, _, _ = grow_forest(X[tr], t[tr], float(val), params,
                                      target == "treatment", seed + 1 + f)
            pred = _forest_predict(np.ascontiguousarray(X[te]), *trees)
            losses[f, m] = np.mean((t[te] - pred) ** 2)
    curve = losses.mean(axis=0)
    best = float(grid[int(np.argmin(curve))])
    return _rrf_fit(X, t, target, best, params, seed, ds.names, grid, curve)


def rrf_matching_space(ds: Dataset, fitY: RrfFit, fitD: RrfFit) -> MatchingSpace:
    """Union of both forests' selected covariates, each scaled by its importance.

    A covariate selected by both forests takes the larger importance.
    """
    if fitY.importance.size != ds.k or fitD.importance.size != ds.k:
        raise ValidationError("fits do not match the dataset's covariates")
    cols = np.union1d(np.array(fitY.selected, dtype=int), np.array(fitD.selected, dtype=int))
    if cols.size == 0:
        raise ValidationError("neither forest selected a covariate")
    c = np.maximum(fitY.importance[cols], fitD.importance[cols])
    return MatchingSpace(ds.X[:, cols] * c[None, :], "rrf", tuple(ds.names[j] for j in cols))
