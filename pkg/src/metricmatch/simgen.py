"""Simulation designs with known potential outcomes.

Every generator is a pure function of its :class:`DgpSpec`: separate child
streams of ``SeedSequence(seed)`` feed the coefficient supports, covariates,
treatment draws and noise, so variants that share a construction (the sparse
linear design with and without squared terms) produce identical draws.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate
from scipy.special import expit

from .dataset import Dataset, Truth
from .errors import SpecError, ValidationError
from .neuralnet import Network
from .space import MatchingSpace

KINDS = ("sparse-linear", "sparse-linear-sq", "random-nn", "counterexample", "ihdp")


@dataclass(frozen=True)
class DgpSpec:
    kind: str = "sparse-linear"
    n: int = 8000
    k: int = 50
    beta0: float = 1.0
    seed: int = 0
    coef: float = 0.5
    n_support: int = 8
    n_overlap: int = 6
    n_sq_support: int = 2
    sq_coef: float | None = None
    widths: tuple = (100, 10)
    dropout: float = 0.5
    correlation: float = 0.95
    index_sd: float = 1.4142135623730951
    outcome_sd: float | None = None
    noise_sd: float = 0.1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown DGP kind {self.kind!r}; choose from {KINDS}")
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if self.n < 2:
            raise SpecError("n must be at least 2")

    def replace(self, **kw) -> "DgpSpec":
        data = asdict(self)
        data.update(kw)
        return DgpSpec(**data)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DgpSpec":
        data = json.loads(text)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise SpecError(f"unknown DgpSpec keys {sorted(unknown)}")
        if "widths" in data:
            data["widths"] = tuple(data["widths"])
        return cls(**data)


@dataclass(frozen=True)
class OracleInfo:
    """Covariates that truly enter the outcome / treatment equations."""

    outcome: tuple
    treatment: tuple

    @property
    def union(self) -> list:
        return sorted(set(self.outcome) | set(self.treatment))

    @property
    def intersection(self) -> list:
        return sorted(set(self.outcome) & set(self.treatment))


def _streams(seed: int, count: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def _sparse(spec: DgpSpec, sq_coef: float):
    n, k = spec.n, spec.k
    s, o = spec.n_support, spec.n_overlap
    if not 0 <= o <= s:
        raise SpecError("overlap must lie between 0 and the support size")
    need = 2 * s - o
    if k < max(need, spec.n_sq_support):
        raise SpecError(f"k = {k} is too small to place supports needing {need} covariates")
    r_support, r_x, r_d, r_eps, r_sq = _streams(spec.seed, 5)
    perm = r_support.permutation(k)
    shared = perm[:o]
    y_only = perm[o:s]
    d_only = perm[s:need]
    gamma = np.zeros(k)
    omega = np.zeros(k)
    gamma[np.concatenate([shared, y_only])] = spec.coef
    omega[np.concatenate([shared, d_only])] = spec.coef
    gamma_sq = np.zeros(k)
    omega_sq = np.zeros(k)
    gamma_sq[r_sq.choice(k, spec.n_sq_support, replace=False)] = sq_coef
    omega_sq[r_sq.choice(k, spec.n_sq_support, replace=False)] = sq_coef

    X = r_x.standard_normal((n, k))
    X2 = X * X
    index = X @ omega + X2 @ omega_sq
    d = (r_d.random(n) < expit(index)).astype(np.int64)
    y0 = X @ gamma + X2 @ gamma_sq + r_eps.standard_normal(n)
    y1 = y0 + spec.beta0
    y = np.where(d == 1, y1, y0)
    truth = Truth(y0, y1, np.full(n, spec.beta0))
    names = tuple(f"x{j}" for j in range(k))
    info = OracleInfo(
        tuple(sorted(np.flatnonzero((gamma != 0) | (gamma_sq != 0)).tolist())),
        tuple(sorted(np.flatnonzero((omega != 0) | (omega_sq != 0)).tolist())),
    )
    return Dataset(X, d, y, names, truth), info


def gen_sparse_linear(spec: DgpSpec):
    """Sparse linear outcome and logit treatment equations.

    Eight covariates enter each equation at coefficient ``spec.coef``; six of
    them are shared. Returns ``(Dataset, OracleInfo)``.
    """
    if spec.kind != "sparse-linear":
        raise SpecError(f"expected a sparse-linear spec, got {spec.kind!r}")
    return _sparse(spec, 0.0)


def gen_sparse_linear_sq(spec: DgpSpec):
    """The sparse linear design plus two squared terms in each equation.

    Squared-term supports are drawn independently of the linear ones.
    ``spec.sq_coef`` defaults to ``spec.coef``; with ``sq_coef=0`` the draw is
    identical to :func:`gen_sparse_linear` under the same seed.
    """
    if spec.kind != "sparse-linear-sq":
        raise SpecError(f"expected a sparse-linear-sq spec, got {spec.kind!r}")
    return _sparse(spec, spec.coef if spec.sq_coef is None else spec.sq_coef)


def _correlated_nets(spec: DgpSpec, rng):
    """Two ELU -> ReLU -> linear nets whose weights share a Gaussian core."""
    widths = [spec.k, *spec.widths, 1]
    if len(spec.widths) != 2 or min(spec.widths) < 1:
        raise SpecError("random-nn needs two positive hidden widths")
    if not 0.0 <= spec.dropout <= 1.0 or not -1.0 <= spec.correlation <= 1.0:
        raise SpecError("dropout must lie in [0,1] and correlation in [-1,1]")
    rho = spec.correlation
    nets = ([], [], [], [])  # WY, bY, WD, bD
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        scale = np.sqrt(2.0 / fan_in)
        core = rng.standard_normal((fan_in, fan_out))
        noise_y = rng.standard_normal((fan_in, fan_out))
        noise_d = rng.standard_normal((fan_in, fan_out))
        Wy = scale * (np.sqrt(rho) * core + np.sqrt(1 - rho) * noise_y)
        Wd = scale * (np.sqrt(rho) * core + np.sqrt(1 - rho) * noise_d)
        # one mask for both nets: each weight position is dropped independently
        drop = rng.random(Wy.shape) < spec.dropout
        Wy[drop] = 0.0
        Wd[drop] = 0.0
        by = 0.1 * rng.standard_normal(fan_out)
        bd = 0.1 * rng.standard_normal(fan_out)
        nets[0].append(Wy)
        nets[1].append(by)
        nets[2].append(Wd)
        nets[3].append(bd)
    acts = ["elu", "relu", "identity"]
    return Network(nets[0], nets[1], acts), Network(nets[2], nets[3], acts)


def random_nn_functions(spec: DgpSpec):
    """The outcome and treatment-index functions of the random-nn design.

    The treatment index is centered and scaled to sd ``spec.index_sd`` and the
    outcome function to ``spec.outcome_sd`` (default: the same), using a fixed
    reference draw of 4096 covariate vectors, so the design does not depend on
    the sample size.
    """
    r_nets, r_ref = _streams(spec.seed, 7)[5:7]
    fy, fd = _correlated_nets(spec, r_nets)
    ref = r_ref.standard_normal((4096, spec.k))
    funcs = []
    y_sd = spec.index_sd if spec.outcome_sd is None else spec.outcome_sd
    for net, target in ((fy, y_sd), (fd, spec.index_sd)):
        out = net.predict(ref)
        mu, sd = out.mean(), out.std()
        scale = target / sd if sd > 1e-12 else 1.0
        shift = mu if sd > 1e-12 else 0.0
        funcs.append(lambda X, net=net, s=scale, m=shift: (net.predict(X) - m) * s)
    return funcs[0], funcs[1], fy, fd


def gen_random_nn(spec: DgpSpec) -> Dataset:
    """Outcome and treatment index given by two random, correlated networks.

    The first hidden layer (``spec.widths[0]`` units) uses ELU, the second
    ReLU; weights are dropped independently with probability
    ``spec.dropout``. Positive weight correlation makes units with high
    treatment propensity also have high untreated outcomes, so the naive
    difference in means is biased upward.
    """
    if spec.kind != "random-nn":
        raise SpecError(f"expected a random-nn spec, got {spec.kind!r}")
    if spec.k < 1:
        raise SpecError("k must be positive")
    r_x, r_d, r_eps = _streams(spec.seed, 7)[1:4]
    f_y, f_d, _, _ = random_nn_functions(spec)
    X = r_x.standard_normal((spec.n, spec.k))
    d = (r_d.random(spec.n) < expit(f_d(X))).astype(np.int64)
    y0 = f_y(X) + r_eps.standard_normal(spec.n)
    y1 = y0 + spec.beta0
    y = np.where(d == 1, y1, y0)
    names = tuple(f"x{j}" for j in range(spec.k))
    return Dataset(X, d, y, names, Truth(y0, y1, np.full(spec.n, spec.beta0)))


def counterexample_propensity(x):
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0, x / (4.0 - x), -3.0 * x / (4.0 - x))


def counterexample_mean_y0(x):
    return np.asarray(x, dtype=float) / 2.0


def counterexample_effect(x):
    return (4.0 - np.asarray(x, dtype=float)) / 2.0


def counterexample_att() -> float:
    """Population ATT of the one-covariate design by numerical integration."""
    num = integrate.quad(lambda x: counterexample_effect(x) * counterexample_propensity(x) * 0.5,
                         -1, 1, points=[0.0])[0]
    den = integrate.quad(lambda x: counterexample_propensity(x) * 0.5, -1, 1, points=[0.0])[0]
    return num / den


def gen_counterexample(spec: DgpSpec) -> Dataset:
    """One uniform covariate; pooled outcome means depend only on ``|x|``.

    E[Y(0)|x] = x/2, E[Y(1)|x] = 2, and the propensity is asymmetric in x.
    Outcomes get N(0, noise_sd^2) noise.
    """
    if spec.kind != "counterexample":
        raise SpecError(f"expected a counterexample spec, got {spec.kind!r}")
    r_x, r_d, r_e0, r_e1 = _streams(spec.seed, 4)
    n = spec.n
    x = r_x.uniform(-1.0, 1.0, n)
    d = (r_d.random(n) < counterexample_propensity(x)).astype(np.int64)
    y0 = counterexample_mean_y0(x) + spec.noise_sd * r_e0.standard_normal(n)
    y1 = 2.0 + spec.noise_sd * r_e1.standard_normal(n)
    y = np.where(d == 1, y1, y0)
    return Dataset(x[:, None], d, y, ("x",), Truth(y0, y1, counterexample_effect(x)))


IHDP_BETA_VALUES = (0.0, 0.1, 0.2, 0.3, 0.4)
IHDP_BETA_PROBS = (0.6, 0.1, 0.1, 0.1, 0.1)


def gen_ihdp_surface(X, d, seed: int, names=None, offset: float = 0.5,
                     beta_values=IHDP_BETA_VALUES, beta_probs=IHDP_BETA_PROBS,
                     att: float = 4.0) -> Dataset:
    """Nonlinear control surface, linear treated surface, sample ATT fixed.

    Y(0) = exp((X + offset) b) + e0 and Y(1) = X b - alpha + e1, with ``alpha``
    chosen so the mean of Y(1) - Y(0) over the treated rows is exactly ``att``.
    ``X`` should already be on the scale the surface is meant for (continuous
    columns standardized).
    """
    X = np.asarray(X, dtype=float)
    d = np.asarray(d)
    if not np.all((d == 0) | (d == 1)):
        raise ValidationError("treatment column must be binary")
    d = d.astype(np.int64)
    if d.sum() == 0:
        raise ValidationError("no treated rows")
    rng = np.random.default_rng(seed)
    n, k = X.shape
    beta = rng.choice(np.asarray(beta_values, float), size=k, p=np.asarray(beta_probs, float))
    e0 = rng.standard_normal(n)
    e1 = rng.standard_normal(n)
    y0 = np.exp((X + offset) @ beta) + e0
    y1_raw = X @ beta + e1
    treated = d == 1
    alpha = float(np.mean(y1_raw[treated] - y0[treated]) - att)
    y1 = y1_raw - alpha
    y = np.where(treated, y1, y0)
    return Dataset(X, d, y, names or (), Truth(y0, y1, y1 - y0))


def oracle_matching_space(ds: Dataset, info: OracleInfo, mode: str = "union") -> MatchingSpace:
    """Raw (standardized) columns known to drive the outcome and/or treatment."""
    if mode == "union":
        cols = info.union
    elif mode == "intersection":
        cols = info.intersection
    else:
        raise SpecError(f"unknown oracle mode {mode!r}")
    if not cols:
        raise SpecError(f"oracle {mode} is empty")
    return MatchingSpace(ds.X[:, cols], f"oracle-{mode}", tuple(ds.names[j] for j in cols))


def generate(spec: DgpSpec):
    """Dispatch on ``spec.kind``; returns ``(Dataset, OracleInfo | None)``."""
    if spec.kind == "sparse-linear":
        return gen_sparse_linear(spec)
    if spec.kind == "sparse-linear-sq":
        return gen_sparse_linear_sq(spec)
    if spec.kind == "random-nn":
        return gen_random_nn(spec), None
    if spec.kind == "counterexample":
        return gen_counterexample(spec.replace(k=1)), None
    raise SpecError("IHDP surfaces are generated from covariate files, not a spec")
