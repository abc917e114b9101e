"""A small dense feed-forward network engine and the NN matching space.

Only numpy is used. Networks are lists of (W, b) pairs with per-layer
activation tags; ``W`` has shape (fan_in, fan_out) so a forward pass is
``act(h @ W + b)``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import Dataset, oversample_treated, subsample
from .errors import ConfigError, DivergenceError, ValidationError
from .space import MatchingSpace, pruned_space

ACTIVATIONS = ("relu", "elu", "sigmoid", "identity")
LOSSES = ("squared", "logistic")


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "identity":
        return z
    if name == "sigmoid":
        return _sigmoid(z)
    if name == "elu":
        return np.where(z > 0, z, np.expm1(np.minimum(z, 0.0)))
    raise ValidationError(f"unknown activation {name!r}")


def _act_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0).astype(float)
    if name == "identity":
        return np.ones_like(z)
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "elu":
        return np.where(z > 0, 1.0, a + 1.0)
    raise ValidationError(f"unknown activation {name!r}")


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class NetConfig:
    """Architecture and optimizer settings for one network.

    ``hidden`` lists the hidden widths; the last one is the embedding width z.
    A scalar output layer (identity for squared loss, sigmoid for logistic)
    is always appended.
    """

    hidden: tuple = (32, 4)
    activations: tuple | None = None
    loss: str = "squared"
    target: str = "outcome"
    subsample: str = "control"
    learning_rate: float = 1e-3
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 200
    seed: int = 0
    optimizer: str = "momentum"
    init: str = "glorot"
    oversample: bool = True
    standardize_target: bool = True
    weight_decay: float = 0.0
    val_fraction: float = 0.0
    patience: int = 10

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.activations is None:
            self.activations = ("relu",) * len(self.hidden)
        self.activations = tuple(self.activations)
        if len(self.activations) != len(self.hidden):
            raise ConfigError("one activation per hidden layer required")
        if any(h < 1 for h in self.hidden):
            raise ConfigError("hidden widths must be >= 1")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {a!r}")
        if self.loss not in LOSSES:
            raise ConfigError(f"unknown loss {self.loss!r}")
        if self.target not in ("outcome", "treatment"):
            raise ConfigError(f"unknown target {self.target!r}")
        if self.subsample not in ("control", "treated", "pooled"):
            raise ConfigError(f"unknown subsample {self.subsample!r}")
        if self.optimizer not in ("momentum", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.init not in ("glorot", "zeros"):
            raise ConfigError(f"unknown init {self.init!r}")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("learning_rate, batch_size and epochs must be positive")
        if self.weight_decay < 0 or not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("weight_decay must be >= 0 and val_fraction in [0, 1)")

    @property
    def output_activation(self) -> str:
        return "sigmoid" if self.loss == "logistic" else "identity"

    @property
    def embedding_width(self) -> int:
        return self.hidden[-1] if self.hidden else 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "NetConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown NetConfig keys {sorted(unknown)}")
        return cls(**data)


@dataclass(eq=False)
class Network:
    """Layer parameters plus activation tags.

    ``has_output`` is True for predictive nets (the last layer is the scalar
    output) and False for siamese towers, which end at the embedding layer.
    """

    weights: list
    biases: list
    activations: list
    has_output: bool = True
    loss_trace: list = field(default_factory=list)

    @property
    def params(self) -> list:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    @property
    def n_params(self) -> int:
        return int(sum(p.size for p in self.params))

    @property
    def input_width(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_weights(self) -> np.ndarray:
        """Weights from the final hidden layer into the output node."""
        if not self.has_output:
            raise ValidationError("siamese towers have no output layer")
        return self.weights[-1][:, 0]

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[1] != self.input_width:
            raise ValidationError(
                f"input has {X.shape[1]} columns, network expects {self.input_width}"
            )
        return X

    def forward(self, X):
        """Return (pre-activations, post-activations); post[0] is the input."""
        h = self._check(X)
        pres, posts = [], [h]
        for W, b, act in zip(self.weights, self.biases, self.activations):
            z = h @ W + b
            h = _act(act, z)
            pres.append(z)
            posts.append(h)
        return pres, posts

    def backward(self, pres, posts, grad, wrt: str = "post") -> list:
        """Backpropagate ``grad`` (w.r.t. the last layer's output) to all params.

        With ``wrt="pre"`` the gradient is taken to be with respect to the last
        pre-activation already (used for sigmoid + cross-entropy).
        """
        grads = [None] * (2 * len(self.weights))
        g = grad
        for layer in range(len(self.weights) - 1, -1, -1):
            if not (layer == len(self.weights) - 1 and wrt == "pre"):
                g = g * _act_grad(self.activations[layer], pres[layer], posts[layer + 1])
            grads[2 * layer] = posts[layer].T @ g
            grads[2 * layer + 1] = g.sum(axis=0)
            if layer:
                g = g @ self.weights[layer].T
        return grads

    def predict(self, X) -> np.ndarray:
        if not self.has_output:
            raise ValidationError("siamese towers do not predict; use embed()")
        return self.forward(X)[1][-1][:, 0]

    def embed(self, X) -> np.ndarray:
        posts = self.forward(X)[1]
        return posts[-2] if self.has_output else posts[-1]

    def copy(self) -> "Network":
        return Network(
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
            list(self.activations),
            self.has_output,
            list(self.loss_trace),
        )

    def to_dict(self) -> dict:
        return {
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "activations": list(self.activations),
            "has_output": self.has_output,
            "loss_trace": [float(v) for v in self.loss_trace],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Network":
        return cls(
            [np.array(W, dtype=float) for W in data["weights"]],
            [np.array(b, dtype=float) for b in data["biases"]],
            list(data["activations"]),
            bool(data.get("has_output", True)),
            list(data.get("loss_trace", [])),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict())


TrainedNet = Network


def init_network(widths, activations, rng, has_output=True, init="glorot") -> Network:
    """Glorot-uniform weights, zero biases. ``widths`` includes the input width."""
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        if init == "zeros":
            W = np.zeros((fan_in, fan_out))
        else:
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            W = rng.uniform(-lim, lim, size=(fan_in, fan_out))
        weights.append(W)
        biases.append(np.zeros(fan_out))
    return Network(weights, biases, list(activations), has_output)


def loss_and_grad(net: Network, X, t, loss: str):
    """Mean loss over the rows of ``X`` and its gradient w.r.t. all params."""
    pres, posts = net.forward(X)
    n = X.shape[0]
    if loss == "squared":
        r = posts[-1][:, 0] - t
        value = float(np.mean(r * r))
        g = (2.0 / n) * r[:, None]
        return value, net.backward(pres, posts, g, wrt="post")
    if loss == "logistic":
        z = pres[-1][:, 0]
        value = float(np.mean(np.logaddexp(0.0, z) - t * z))
        g = ((posts[-1][:, 0] - t) / n)[:, None]
        return value, net.backward(pres, posts, g, wrt="pre")
    raise ValidationError(f"unknown loss {loss!r}")


def full_loss(net: Network, X, t, loss: str) -> float:
    pres, posts = net.forward(X)
    if loss == "squared":
        r = posts[-1][:, 0] - t
        return float(np.mean(r * r))
    z = pres[-1][:, 0]
    return float(np.mean(np.logaddexp(0.0, z) - t * z))


class _Optimizer:
    def __init__(self, params, cfg):
        self.kind = cfg.optimizer
        self.lr = cfg.learning_rate
        self.mu = cfg.momentum
        self.reset(params)

    def reset(self, params):
        self.v = [np.zeros_like(p) for p in params]
        self.m = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        if self.kind == "momentum":
            for p, g, v in zip(params, grads, self.v):
                v *= self.mu
                v -= self.lr * g
                p += v
            return
        self.t += 1
        b1, b2 = self.mu, 0.999
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + 1e-8)


def fit_network(net: Network, X, t, cfg: NetConfig, rng, X_val=None, t_val=None) -> Network:
    """Mini-batch training of ``net`` in place.

    After each epoch the loss on the full training set is evaluated; if it went
    up, the epoch is undone and the learning rate halved, so the recorded trace
    never increases. With validation data, the parameters from the epoch with
    the lowest validation loss are kept and training stops after
    ``cfg.patience`` epochs without improvement.
    """
    n = X.shape[0]
    params = net.params
    opt = _Optimizer(params, cfg)
    wd = cfg.weight_decay
    best = full_loss(net, X, t, cfg.loss)
    if not np.isfinite(best):
        raise DivergenceError("initial loss is not finite")
    trace = [best]
    snapshot = [p.copy() for p in params]
    use_val = X_val is not None and len(X_val) > 0
    if use_val:
        best_val = full_loss(net, X_val, t_val, cfg.loss)
        keep = [p.copy() for p in params]
        keep_len = 1
        stale = 0
    bs = min(cfg.batch_size, n)
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, bs):
            idx = perm[start:start + bs]
            value, grads = loss_and_grad(net, X[idx], t[idx], cfg.loss)
            if not np.isfinite(value):
                raise DivergenceError(
                    f"training loss became non-finite; try a learning rate below {opt.lr:g}"
                )
            if wd:
                for layer, W in enumerate(net.weights):
                    grads[2 * layer] = grads[2 * layer] + 2.0 * wd * W
            opt.step(params, grads)
        current = full_loss(net, X, t, cfg.loss)
        if not np.isfinite(current):
            raise DivergenceError(
                f"training loss became non-finite; try a learning rate below {opt.lr:g}"
            )
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
        if use_val:
            v = full_loss(net, X_val, t_val, cfg.loss)
            if v < best_val:
                best_val, stale, keep_len = v, 0, len(trace)
                for p, k in zip(params, keep):
                    k[...] = p
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    if use_val:
        for p, k in zip(params, keep):
            p[...] = k
        trace = trace[:keep_len]
    net.loss_trace = trace
    return net


def train(ds: Dataset, cfg: NetConfig) -> Network:
    """Train a predictive network on the configured target and subsample.

    Squared-loss targets are standardized for training when
    ``cfg.standardize_target`` is set; the affine output layer is then
    rescaled so predictions come back in the original units.
    """
    rng = np.random.default_rng(cfg.seed)
    sub = subsample(ds, cfg.subsample)
    if cfg.target == "treatment" and cfg.oversample and cfg.subsample == "pooled":
        sub = oversample_treated(sub, seed=int(rng.integers(2**31)))
    X = sub.X
    t = sub.d.astype(float) if cfg.target == "treatment" else sub.y
    widths = [ds.k, *cfg.hidden, 1]
    acts = [*cfg.activations, cfg.output_activation]
    net = init_network(widths, acts, rng, has_output=True, init=cfg.init)
    X_val = t_val = None
    if cfg.val_fraction > 0:
        perm = rng.permutation(X.shape[0])
        n_val = int(round(cfg.val_fraction * X.shape[0]))
        val, fit_rows = perm[:n_val], np.sort(perm[n_val:])
        X_val, t_val = X[val], t[val]
        X, t = X[fit_rows], t[fit_rows]
    mu, sd = 0.0, 1.0
    if cfg.standardize_target and cfg.loss == "squared":
        mu, sd = float(t.mean()), float(t.std())
        sd = sd if sd > 0 else 1.0
        t = (t - mu) / sd
        if t_val is not None:
            t_val = (t_val - mu) / sd
    net = fit_network(net, X, t, cfg, rng, X_val, t_val)
    if sd != 1.0 or mu != 0.0:
        net.weights[-1] *= sd
        net.biases[-1] = net.biases[-1] * sd + mu
    return net


def predict(net: Network, X) -> np.ndarray:
    return net.predict(X)


def extract_embedding(net: Network, X) -> np.ndarray:
    """Final-hidden-layer activations for every row of ``X``."""
    return net.embed(X)


def check_gradients(fn, params, epsilon: float = 1e-5, floor: float = 1e-4) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``fn()`` must return ``(loss, grads)`` for the current values of
    ``params``, which are perturbed in place. The error is
    ``|num - ana| / max(|num|, |ana|, floor)``: components smaller than
    ``floor`` are compared absolutely, since a central difference of an
    exactly-zero gradient returns only roundoff (~1e-10).
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValidationError("epsilon must lie in [1e-7, 1e-3]")
    if not params or all(p.size == 0 for p in params):
        return 0.0
    _, analytic = fn()
    worst = 0.0
    for p, g in zip(params, analytic):
        flat = p.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = fn()[0]
            flat[i] = orig - epsilon
            down = fn()[0]
            flat[i] = orig
            num = (up - down) / (2 * epsilon)
            err = abs(num - gflat[i]) / max(abs(num), abs(gflat[i]), floor)
            worst = max(worst, err)
    return worst


def grad_check(net: Network, X, t, loss: str = "squared", epsilon: float = 1e-5,
               grad_fn=None) -> float:
    """Finite-difference check of backprop for ``net`` on the batch ``(X, t)``.

    ``grad_fn(net, X, t, loss)`` may replace the analytic gradient (used to
    verify that the check catches a broken one).
    """
    X = np.asarray(X, dtype=float)
    t = np.asarray(t, dtype=float)
    gf = grad_fn or loss_and_grad

    def fn():
        value, _ = loss_and_grad(net, X, t, loss)
        return value, gf(net, X, t, loss)[1]

    return check_gradients(fn, net.params, epsilon)


def _no_elu(cfg):
    if "elu" in cfg.activations:
        raise ConfigError("ELU is reserved for simulation nets, not matching embeddings")


def _check_estimand_cfg(cfgY, cfgD, estimand):
    want = {"ATT": "control", "ATUT": "treated"}.get(estimand)
    if want is None:
        raise ConfigError(f"unknown estimand {estimand!r}")
    if cfgY.subsample != want:
        raise ConfigError(
            f"{estimand} outcome model must train on the {want} subsample, "
            f"got {cfgY.subsample!r}"
        )


# L2 penalty for the outcome net; without it the net overfits the control
# subsample and the prognostic part of the embedding degrades.
OUTCOME_WEIGHT_DECAY = 3e-2


def default_outcome_cfg(estimand: str = "ATT", **kw) -> NetConfig:
    sub = "control" if estimand == "ATT" else "treated"
    return NetConfig(**{"loss": "squared", "target": "outcome", "subsample": sub,
                        "weight_decay": OUTCOME_WEIGHT_DECAY, **kw})


def default_treatment_cfg(**kw) -> NetConfig:
    return NetConfig(**{"loss": "logistic", "target": "treatment", "subsample": "pooled", **kw})


def scaled_features(netY: Network, netD: Network, X):
    """``[M_d * sigma_d, M_y * sigma_y]`` with column labels."""
    Md = netD.embed(X) * netD.output_weights[None, :]
    My = netY.embed(X) * netY.output_weights[None, :]
    labels = [f"d{j}" for j in range(Md.shape[1])] + [f"y{j}" for j in range(My.shape[1])]
    return np.hstack([Md, My]), labels


def nn_matching_space(ds: Dataset, cfgY: NetConfig, cfgD: NetConfig,
                      estimand: str = "ATT", restandardize: bool = False,
                      return_nets: bool = False):
    """Train outcome and treatment nets and build the weight-scaled embedding.

    Every final-hidden unit is multiplied by its weight into the output node,
    so features the prediction leans on count for more in Euclidean distance.
    """
    if cfgY.target != "outcome" or cfgD.target != "treatment":
        raise ConfigError("cfgY must target the outcome and cfgD the treatment")
    if cfgD.subsample != "pooled":
        raise ConfigError("the treatment model trains on the pooled sample")
    _check_estimand_cfg(cfgY, cfgD, estimand)
    _no_elu(cfgY)
    _no_elu(cfgD)
    if not cfgY.hidden or not cfgD.hidden:
        raise ConfigError("embedding nets need at least one hidden layer")
    netY = train(ds, cfgY)
    netD = train(ds, cfgD)
    Z, labels = scaled_features(netY, netD, ds.X)
    if restandardize:
        sd = Z.std(axis=0)
        Z = (Z - Z.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    space = pruned_space(Z, "nn", labels)
    return (space, netY, netD) if return_nets else space
