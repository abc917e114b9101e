"""Siamese towers trained on pairs of observations and the SNN matching space.

A tower is a plain feed-forward net without an output layer; both members of
a pair go through the same parameters, so each parameter's gradient is the sum
of the contributions from the two passes.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .dataset import Dataset, oversample_treated, subsample
from .errors import ConfigError, DivergenceError, ValidationError
from .neuralnet import ACTIVATIONS, Network, _Optimizer, check_gradients, init_network
from .space import MatchingSpace, pruned_space

SNN_LOSSES = ("contrastive", "outcome-pair")
_EVAL_PAIRS = 20000


@dataclass
class SnnConfig:
    """Tower architecture, pair budget and optimizer for one siamese net.

    The last entry of ``hidden`` is the embedding width. Hidden layers default
    to ReLU and the embedding layer to identity.
    """

    hidden: tuple = (32, 4)
    activations: tuple | None = None
    loss: str = "contrastive"
    margin: float = 1.0
    pairs_per_unit: int = 20
    epochs: int = 50
    batch_size: int = 256
    learning_rate: float = 1e-3
    momentum: float = 0.9
    optimizer: str = "adam"
    subsample: str = "pooled"
    seed: int = 0
    oversample: bool = True
    standardize_target: bool = True
    weight_decay: float = 0.0
    init: str = "glorot"

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ConfigError("towers need at least one layer and positive widths")
        if self.activations is None:
            self.activations = ("relu",) * (len(self.hidden) - 1) + ("identity",)
        self.activations = tuple(self.activations)
        if len(self.activations) != len(self.hidden):
            raise ConfigError("one activation per tower layer required")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {a!r}")
        if self.loss not in SNN_LOSSES:
            raise ConfigError(f"unknown siamese loss {self.loss!r}")
        if not self.margin > 0:
            raise ConfigError("margin must be positive")
        if self.subsample not in ("control", "treated", "pooled"):
            raise ConfigError(f"unknown subsample {self.subsample!r}")
        if self.optimizer not in ("momentum", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.init not in ("glorot", "zeros"):
            raise ConfigError(f"unknown init {self.init!r}")
        if (self.pairs_per_unit < 1 or self.epochs < 1 or self.batch_size < 1
                or self.learning_rate <= 0 or self.weight_decay < 0):
            raise ConfigError("pair budget, epochs, batch size and learning rate must be positive")

    @property
    def embedding_width(self) -> int:
        return self.hidden[-1]

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "SnnConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown SnnConfig keys {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True, eq=False)
class PairBatch:
    """Index pairs into a dataset of ``n`` rows with their pair targets.

    ``similar`` holds 0/1 labels for contrastive pairs; ``y_i``/``y_j`` hold
    outcomes for outcome pairs. Unused targets are None.
    """

    i: np.ndarray
    j: np.ndarray
    n: int
    similar: np.ndarray | None = None
    y_i: np.ndarray | None = None
    y_j: np.ndarray | None = None

    def __post_init__(self):
        i = np.asarray(self.i, dtype=np.int64)
        j = np.asarray(self.j, dtype=np.int64)
        if i.shape != j.shape or i.ndim != 1:
            raise ValidationError("pair index arrays must be 1-D and equally long")
        if np.any(i == j):
            raise ValidationError("a pair must join two distinct rows")
        if i.size and (min(i.min(), j.min()) < 0 or max(i.max(), j.max()) >= self.n):
            raise ValidationError("pair index out of range")
        object.__setattr__(self, "i", i)
        object.__setattr__(self, "j", j)

    def __len__(self) -> int:
        return self.i.size

    def target(self):
        return self.similar if self.similar is not None else (self.y_i, self.y_j)


def _distinct_pairs(rng, pool: np.ndarray, m: int):
    a = rng.integers(0, pool.size, m)
    b = rng.integers(0, pool.size - 1, m)
    b = b + (b >= a)
    return pool[a], pool[b]


def sample_pairs(ds: Dataset, cfg: SnnConfig, n_pairs: int | None = None, rng=None) -> PairBatch:
    """Draw pairs of distinct rows of ``ds`` for the configured loss.

    Contrastive pairs are half same-class (similar = 1) and half cross-class
    (similar = 0); an odd count gives the extra pair to the same-class half.
    Outcome pairs are uniform over all pairs of distinct rows.
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    n_pairs = cfg.pairs_per_unit * ds.n if n_pairs is None else int(n_pairs)
    if ds.n < 2:
        raise ValidationError("need at least two rows to form a pair")
    if cfg.loss == "outcome-pair":
        i, j = _distinct_pairs(rng, np.arange(ds.n), n_pairs)
        return PairBatch(i, j, ds.n, y_i=ds.y[i], y_j=ds.y[j])
    groups = [np.flatnonzero(ds.d == 0), np.flatnonzero(ds.d == 1)]
    if min(g.size for g in groups) == 0:
        raise ValidationError("contrastive pairs need both treatment classes")
    n_same = n_pairs - n_pairs // 2
    n_cross = n_pairs // 2
    usable = [g for g in groups if g.size >= 2]
    if n_same and not usable:
        raise ValidationError("no treatment class has two rows for a same-class pair")
    # a same-class pair lands in a class in proportion to its number of pairs
    weights = np.array([g.size * (g.size - 1) for g in usable], dtype=float)
    which = rng.choice(len(usable), size=n_same, p=weights / weights.sum())
    si = np.empty(n_same, dtype=np.int64)
    sj = np.empty(n_same, dtype=np.int64)
    for c, g in enumerate(usable):
        rows = np.flatnonzero(which == c)
        si[rows], sj[rows] = _distinct_pairs(rng, g, rows.size)
    ci = groups[0][rng.integers(0, groups[0].size, n_cross)]
    cj = groups[1][rng.integers(0, groups[1].size, n_cross)]
    flip = rng.random(n_cross) < 0.5
    ci, cj = np.where(flip, cj, ci), np.where(flip, ci, cj)
    i = np.concatenate([si, ci])
    j = np.concatenate([sj, cj])
    sim = np.concatenate([np.ones(n_same, dtype=np.int64), np.zeros(n_cross, dtype=np.int64)])
    order = rng.permutation(n_pairs)
    return PairBatch(i[order], j[order], ds.n, similar=sim[order])


def _dist(e_i, e_j):
    diff = np.asarray(e_i, dtype=float) - np.asarray(e_j, dtype=float)
    return diff, np.sqrt(np.sum(diff * diff, axis=-1))


def contrastive_loss(e_i, e_j, similar, margin: float = 1.0):
    """D^2 for similar pairs, max(0, margin - D)^2 for dissimilar ones.

    Works on single embeddings (returns a float) or on stacked rows.
    """
    if not margin > 0:
        raise ValidationError("margin must be positive")
    _, D = _dist(e_i, e_j)
    sim = np.asarray(similar)
    out = np.where(sim == 1, D * D, np.maximum(0.0, margin - D) ** 2)
    return float(out) if out.ndim == 0 else out


def outcome_pair_loss(e_i, e_j, y_i, y_j):
    """(||e_i - e_j|| - |y_i - y_j|)^2."""
    _, D = _dist(e_i, e_j)
    out = (D - np.abs(np.asarray(y_i, dtype=float) - np.asarray(y_j, dtype=float))) ** 2
    return float(out) if np.ndim(out) == 0 else out


def _pair_loss_grad(E_i, E_j, target, loss: str, margin: float):
    """Per-pair losses and their gradient with respect to E_i (E_j gets the negative)."""
    diff, D = _dist(E_i, E_j)
    safe = np.where(D > 0, D, 1.0)
    if loss == "contrastive":
        sim = np.asarray(target) == 1
        hinge = np.maximum(0.0, margin - D)
        values = np.where(sim, D * D, hinge * hinge)
        coef = np.where(sim, 2.0, np.where(D > 0, -2.0 * hinge / safe, 0.0))
    else:
        y_i, y_j = target
        r = D - np.abs(y_i - y_j)
        values = r * r
        coef = np.where(D > 0, 2.0 * r / safe, 0.0)
    return values, coef[:, None] * diff


def pair_loss_and_grad(net: Network, X_i, X_j, target, loss: str, margin: float = 1.0):
    """Mean pairwise loss and its gradient for a shared tower."""
    m = X_i.shape[0]
    pres_i, posts_i = net.forward(X_i)
    pres_j, posts_j = net.forward(X_j)
    values, g = _pair_loss_grad(posts_i[-1], posts_j[-1], target, loss, margin)
    g = g / m
    gi = net.backward(pres_i, posts_i, g)
    gj = net.backward(pres_j, posts_j, -g)
    return float(values.mean()), [a + b for a, b in zip(gi, gj)]


def snn_grad_check(net: Network, X_i, X_j, target, loss: str, margin: float = 1.0,
                   epsilon: float = 1e-5) -> float:
    """Finite-difference check of :func:`pair_loss_and_grad` over tower parameters."""
    return check_gradients(lambda: pair_loss_and_grad(net, X_i, X_j, target, loss, margin),
                           net.params, epsilon)


def _batch(pairs: PairBatch, X, rows, scale):
    Xi, Xj = X[pairs.i[rows]], X[pairs.j[rows]]
    if pairs.similar is not None:
        return Xi, Xj, pairs.similar[rows]
    return Xi, Xj, (pairs.y_i[rows] / scale, pairs.y_j[rows] / scale)


def train_snn(ds: Dataset, cfg: SnnConfig) -> Network:
    """Train a shared tower on freshly sampled pairs every epoch.

    The loss on a fixed evaluation set of pairs is recorded after each epoch;
    an epoch that raises it is undone and the learning rate halved, as for the
    predictive nets. Outcome-pair targets are divided by the subsample's
    outcome sd when ``cfg.standardize_target`` is set.
    """
    rng = np.random.default_rng(cfg.seed)
    sub = subsample(ds, cfg.subsample)
    if cfg.loss == "contrastive" and cfg.oversample and cfg.subsample == "pooled":
        sub = oversample_treated(sub, seed=int(rng.integers(2**31)))
    if sub.n < 2:
        raise ValidationError("the training subsample has fewer than two rows")
    scale = 1.0
    if cfg.loss == "outcome-pair" and cfg.standardize_target:
        sd = float(sub.y.std())
        scale = sd if sd > 0 else 1.0
    net = init_network([ds.k, *cfg.hidden], list(cfg.activations), rng,
                       has_output=False, init=cfg.init)
    params = net.params
    opt = _Optimizer(params, cfg)
    eval_pairs = sample_pairs(sub, cfg, min(_EVAL_PAIRS, cfg.pairs_per_unit * sub.n), rng)
    every = np.arange(len(eval_pairs))

    def eval_loss():
        Xi, Xj, tgt = _batch(eval_pairs, sub.X, every, scale)
        v = pair_loss_and_grad(net, Xi, Xj, tgt, cfg.loss, cfg.margin)[0]
        if not np.isfinite(v):
            raise DivergenceError(
                f"siamese loss became non-finite; try a learning rate below {opt.lr:g}")
        return v

    best = eval_loss()
    trace = [best]
    snapshot = [p.copy() for p in params]
    for _ in range(cfg.epochs):
        pairs = sample_pairs(sub, cfg, rng=rng)
        for start in range(0, len(pairs), cfg.batch_size):
            rows = np.arange(start, min(start + cfg.batch_size, len(pairs)))
            Xi, Xj, tgt = _batch(pairs, sub.X, rows, scale)
            value, grads = pair_loss_and_grad(net, Xi, Xj, tgt, cfg.loss, cfg.margin)
            if not np.isfinite(value):
                raise DivergenceError(
                    f"siamese loss became non-finite; try a learning rate below {opt.lr:g}")
            if cfg.weight_decay:
                for layer, W in enumerate(net.weights):
                    grads[2 * layer] = grads[2 * layer] + 2.0 * cfg.weight_decay * W
            opt.step(params, grads)
        current = eval_loss()
        if current > best:
            for p, s in zip(params, snapshot):
                p[...] = s
            opt.lr *= 0.5
            opt.reset(params)
            trace.append(best)
        else:
            best = current
            for p, s in zip(params, snapshot):
                s[...] = p
            trace.append(current)
    net.loss_trace = trace
    return net


def default_outcome_snn_cfg(estimand: str = "ATT", **kw) -> SnnConfig:
    sub = "control" if estimand == "ATT" else "treated"
    return SnnConfig(**{"loss": "outcome-pair", "subsample": sub, **kw})


def default_treatment_snn_cfg(**kw) -> SnnConfig:
    return SnnConfig(**{"loss": "contrastive", "subsample": "pooled", **kw})


def snn_matching_space(ds: Dataset, cfgY: SnnConfig, cfgD: SnnConfig, estimand: str = "ATT",
                       return_nets: bool = False):
    """Concatenate the two towers' embeddings of every row, unweighted, then prune."""
    if cfgY.loss != "outcome-pair" or cfgD.loss != "contrastive":
        raise ConfigError("cfgY must use the outcome-pair loss and cfgD the contrastive loss")
    if estimand not in ("ATT", "ATUT"):
        raise ValidationError(f"unknown estimand {estimand!r}")
    want = "control" if estimand == "ATT" else "treated"
    if cfgY.subsample != want:
        raise ConfigError(f"{estimand} needs the outcome tower trained on the {want} subsample")
    if cfgD.subsample != "pooled":
        raise ConfigError("the contrastive tower trains on the pooled sample")
    for cfg in (cfgY, cfgD):
        if "elu" in cfg.activations:
            raise ConfigError("ELU is reserved for the simulation design, not embeddings")
    towerY = train_snn(ds, cfgY)
    towerD = train_snn(ds, cfgD)
    Md = towerD.embed(ds.X)
    My = towerY.embed(ds.X)
    labels = [f"d{j}" for j in range(Md.shape[1])] + [f"y{j}" for j in range(My.shape[1])]
    space = pruned_space(np.hstack([Md, My]), "snn", labels)
    return (space, towerY, towerD) if return_nets else space
