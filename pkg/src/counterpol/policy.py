"""Feed-forward tanh policies with categorical or Gaussian heads.

Parameters live in one flat vector ``theta``.  Layer ``l`` contributes its
weight matrix ``W_l`` (shape ``(fan_in, fan_out)``, row-major) followed by its
bias ``b_l``; a Gaussian head appends one global log-std entry per action
dimension.  Gradients are accumulated by hand-written reverse mode through
this fixed architecture.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

CATEGORICAL = "categorical"
GAUSSIAN = "gaussian"
VALUE = "value"

LOG_2PI = math.log(2.0 * math.pi)


class ArchMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class PolicyArch:
    obs_dim: int
    n_out: int
    head: str = CATEGORICAL
    hidden_sizes: tuple[int, ...] = (64, 64)
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.obs_dim < 1:
            raise ValueError("obs_dim must be positive")
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise ValueError("hidden_sizes must be a non-empty list of positive ints")
        if self.head not in (CATEGORICAL, GAUSSIAN, VALUE):
            raise ValueError(f"unknown head {self.head!r}")
        if self.head == CATEGORICAL and self.n_out < 2:
            raise ValueError("categorical head needs at least 2 actions")
        if self.n_out < 1:
            raise ValueError("n_out must be positive")
        if self.activation != "tanh":
            raise ValueError("only tanh activation is supported")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.obs_dim, *self.hidden_sizes, self.n_out)

    @property
    def n_params(self) -> int:
        sizes = self.layer_sizes
        n = sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
        if self.head == GAUSSIAN:
            n += self.n_out
        return n

    def to_dict(self) -> dict:
        return {
            "obs_dim": self.obs_dim,
            "n_out": self.n_out,
            "head": self.head,
            "hidden_sizes": list(self.hidden_sizes),
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> PolicyArch:
        return cls(
            obs_dim=int(d["obs_dim"]),
            n_out=int(d["n_out"]),
            head=d["head"],
            hidden_sizes=tuple(d["hidden_sizes"]),
            activation=d.get("activation", "tanh"),
        )


def categorical_arch(obs_dim: int, n_actions: int, hidden_sizes=(64, 64)) -> PolicyArch:
    return PolicyArch(obs_dim, n_actions, CATEGORICAL, tuple(hidden_sizes))


def gaussian_arch(obs_dim: int, action_dim: int, hidden_sizes=(64, 64)) -> PolicyArch:
    return PolicyArch(obs_dim, action_dim, GAUSSIAN, tuple(hidden_sizes))


@dataclass(frozen=True)
class PolicyParams:
    arch: PolicyArch
    theta: np.ndarray = field(repr=False)

    def __post_init__(self):
        theta = np.array(self.theta, dtype=np.float64).reshape(-1)
        if theta.size != self.arch.n_params:
            raise ArchMismatchError(
                f"theta has {theta.size} entries, arch needs {self.arch.n_params}"
            )
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta contains non-finite entries")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    def with_theta(self, theta: np.ndarray) -> PolicyParams:
        return PolicyParams(self.arch, theta)


# ---------------------------------------------------------------------------
# Distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Categorical:
    """Categorical action distribution; arrays may carry a leading batch axis."""

    probs: np.ndarray
    log_probs: np.ndarray = None

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        if self.log_probs is None:
            with np.errstate(divide="ignore"):
                object.__setattr__(self, "log_probs", np.log(probs))
        else:
            object.__setattr__(self, "log_probs", np.asarray(self.log_probs, dtype=np.float64))

    @classmethod
    def from_logits(cls, logits: np.ndarray) -> Categorical:
        z = logits - logits.max(axis=-1, keepdims=True)
        lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
        log_probs = z - lse
        return cls(np.exp(log_probs), log_probs)


@dataclass(frozen=True)
class Gaussian:
    """Diagonal Gaussian; ``mean`` may be batched, ``std`` broadcasts against it."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        std = np.asarray(self.std, dtype=np.float64)
        if np.any(std <= 0):
            raise ValueError("Gaussian std must be positive")
        object.__setattr__(self, "std", std)


PolicyDistribution = Union[Categorical, Gaussian]


# ---------------------------------------------------------------------------
# Network plumbing
# ---------------------------------------------------------------------------


def unpack(arch: PolicyArch, theta: np.ndarray):
    """Views ``[(W, b), ...], log_std`` into ``theta`` (log_std is None unless Gaussian)."""
    sizes = arch.layer_sizes
    layers = []
    i = 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = theta[i : i + fan_in * fan_out].reshape(fan_in, fan_out)
        i += fan_in * fan_out
        b = theta[i : i + fan_out]
        i += fan_out
        layers.append((w, b))
    log_std = theta[i : i + arch.n_out] if arch.head == GAUSSIAN else None
    return layers, log_std


def init_params(arch: PolicyArch, seed: int) -> PolicyParams:
    """Fan-in scaled uniform weights, zero biases, zero log-std."""
    rng = np.random.default_rng(int(seed) % (1 << 64))
    theta = np.zeros(arch.n_params)
    layers, _ = unpack(arch, theta)
    for w, _b in layers:
        bound = 1.0 / math.sqrt(w.shape[0])
        w[...] = rng.uniform(-bound, bound, size=w.shape)
    return PolicyParams(arch, theta)


def _check_obs(arch: PolicyArch, obs) -> np.ndarray:
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape[-1] != arch.obs_dim:
        raise ArchMismatchError(f"observation has dim {obs.shape[-1]}, expected {arch.obs_dim}")
    if not np.all(np.isfinite(obs)):
        raise ValueError("observation contains non-finite values")
    return obs


def _mlp_forward(layers, obs: np.ndarray):
    """Returns network output and the list of hidden activations (for backprop)."""
    hidden = [obs]
    h = obs
    for w, b in layers[:-1]:
        h = np.tanh(h @ w + b)
        hidden.append(h)
    w, b = layers[-1]
    return h @ w + b, hidden


def _mlp_backward(layers, hidden, d_out: np.ndarray, grad: np.ndarray, arch: PolicyArch):
    """Accumulate d(sum)/d(theta) into ``grad`` given upstream ``d_out`` (n, n_out)."""
    glayers, _ = unpack(arch, grad)
    delta = d_out
    for idx in range(len(layers) - 1, -1, -1):
        w, _ = layers[idx]
        gw, gb = glayers[idx]
        h_in = hidden[idx]
        gw += h_in.T @ delta
        gb += delta.sum(axis=0)
        if idx > 0:
            delta = (delta @ w.T) * (1.0 - h_in**2)
    return grad


def network_output(params: PolicyParams, obs: np.ndarray) -> np.ndarray:
    """Raw final-layer output for a ``(n, obs_dim)`` batch."""
    layers, _ = unpack(params.arch, params.theta)
    out, _ = _mlp_forward(layers, _check_obs(params.arch, np.atleast_2d(obs)))
    return out


def _dist_from_output(arch: PolicyArch, out: np.ndarray, log_std) -> PolicyDistribution:
    if arch.head == CATEGORICAL:
        return Categorical.from_logits(out)
    if arch.head == GAUSSIAN:
        return Gaussian(out, np.exp(log_std))
    raise ArchMismatchError("value networks do not define an action distribution")


def forward_batch(params: PolicyParams, obs: np.ndarray) -> PolicyDistribution:
    """Distribution over actions for every row of ``obs`` (shape ``(n, obs_dim)``)."""
    layers, log_std = unpack(params.arch, params.theta)
    out, _ = _mlp_forward(layers, _check_obs(params.arch, np.atleast_2d(obs)))
    return _dist_from_output(params.arch, out, log_std)


def forward(params: PolicyParams, obs) -> PolicyDistribution:
    obs = _check_obs(params.arch, obs)
    if obs.ndim != 1:
        raise ValueError("forward takes a single observation; use forward_batch")
    dist = forward_batch(params, obs[None, :])
    if isinstance(dist, Categorical):
        return Categorical(dist.probs[0], dist.log_probs[0])
    return Gaussian(dist.mean[0], dist.std)


# ---------------------------------------------------------------------------
# Sampling, densities, divergences
# ---------------------------------------------------------------------------


def inverse_cdf(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Categorical index for uniform draws ``u`` (row-wise over a batch)."""
    probs = np.atleast_2d(probs)
    cdf = np.cumsum(probs, axis=-1)
    idx = (cdf <= np.asarray(u).reshape(-1, 1)).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)


def sample(dist: PolicyDistribution, rng: np.random.Generator):
    """Draw one action. Gaussian samples are not clipped here."""
    if isinstance(dist, Categorical):
        return int(inverse_cdf(dist.probs, rng.random())[0])
    return dist.mean + dist.std * rng.standard_normal(dist.mean.shape)


def log_prob(dist: PolicyDistribution, action) -> float | np.ndarray:
    """Log-density of ``action``; batched distributions take one action per row."""
    if isinstance(dist, Categorical):
        lp = dist.log_probs
        a = np.asarray(action)
        if lp.ndim == 1:
            return float(lp[int(a)])
        return lp[np.arange(lp.shape[0]), a.astype(np.int64)]
    a = np.asarray(action, dtype=np.float64)
    z = (a - dist.mean) / dist.std
    dens = -0.5 * z**2 - np.log(dist.std) - 0.5 * LOG_2PI
    total = dens.sum(axis=-1)
    return float(total) if np.ndim(total) == 0 else total


def kl_divergence(dist0: PolicyDistribution, dist1: PolicyDistribution):
    """KL(dist0 || dist1), summed over action dims; batched inputs give one value per row."""
    if type(dist0) is not type(dist1):
        raise ArchMismatchError("KL between different distribution families")
    if isinstance(dist0, Categorical):
        if dist0.probs.shape[-1] != dist1.probs.shape[-1]:
            raise ArchMismatchError("KL between categoricals of different size")
        p0 = dist0.probs
        with np.errstate(invalid="ignore"):
            terms = np.where(p0 > 0, p0 * (dist0.log_probs - dist1.log_probs), 0.0)
        kl = terms.sum(axis=-1)
    else:
        if dist0.mean.shape[-1] != dist1.mean.shape[-1]:
            raise ArchMismatchError("KL between Gaussians of different dimension")
        s0, s1 = dist0.std, dist1.std
        diff = dist0.mean - dist1.mean
        terms = np.log(s1 / s0) + (s0**2 + diff**2) / (2.0 * s1**2) - 0.5
        kl = terms.sum(axis=-1)
    kl = np.maximum(kl, 0.0)
    return float(kl) if np.ndim(kl) == 0 else kl


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------


def _check_same_arch(a: PolicyParams, b: PolicyParams):
    if a.arch != b.arch:
        raise ArchMismatchError("policies have different architectures")


def log_prob_grad_sum(params: PolicyParams, obs: np.ndarray, actions, weights) -> np.ndarray:
    """``sum_i weights[i] * grad_theta log pi(actions[i] | obs[i])``."""
    arch = params.arch
    obs = _check_obs(arch, np.atleast_2d(obs))
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    layers, log_std = unpack(arch, params.theta)
    out, hidden = _mlp_forward(layers, obs)
    grad = np.zeros(arch.n_params)
    if arch.head == CATEGORICAL:
        dist = Categorical.from_logits(out)
        actions = np.asarray(actions).astype(np.int64).reshape(-1)
        d_out = -dist.probs
        d_out[np.arange(len(actions)), actions] += 1.0
        d_out *= weights[:, None]
    elif arch.head == GAUSSIAN:
        std = np.exp(log_std)
        a = np.asarray(actions, dtype=np.float64).reshape(out.shape)
        z = (a - out) / std
        d_out = weights[:, None] * z / std
        _, glog = unpack(arch, grad)
        glog += (weights[:, None] * (z**2 - 1.0)).sum(axis=0)
    else:
        raise ArchMismatchError("value networks have no log-probability")
    return _mlp_backward(layers, hidden, d_out, grad, arch)


def kl_grad_sum(pivot: PolicyParams, params: PolicyParams, obs: np.ndarray) -> np.ndarray:
    """``sum_i grad_theta KL(pi_pivot(.|obs[i]) || pi_theta(.|obs[i]))``; pivot held fixed."""
    _check_same_arch(pivot, params)
    arch = params.arch
    obs = _check_obs(arch, np.atleast_2d(obs))
    d0 = forward_batch(pivot, obs)
    layers, log_std = unpack(arch, params.theta)
    out, hidden = _mlp_forward(layers, obs)
    grad = np.zeros(arch.n_params)
    if arch.head == CATEGORICAL:
        d1 = Categorical.from_logits(out)
        d_out = d1.probs - d0.probs
    elif arch.head == GAUSSIAN:
        var1 = np.exp(2.0 * log_std)
        diff = out - d0.mean
        d_out = diff / var1
        _, glog = unpack(arch, grad)
        glog += (1.0 - (d0.std**2 + diff**2) / var1).sum(axis=0)
    else:
        raise ArchMismatchError("value networks have no action distribution")
    return _mlp_backward(layers, hidden, d_out, grad, arch)


def grad_log_prob(params: PolicyParams, obs, action) -> np.ndarray:
    obs = _check_obs(params.arch, obs).reshape(1, -1)
    action = np.asarray(action)
    if params.arch.head == GAUSSIAN:
        action = action.reshape(1, -1)
    else:
        action = action.reshape(1)
    return log_prob_grad_sum(params, obs, action, [1.0])


def grad_kl(pivot: PolicyParams, params: PolicyParams, obs) -> np.ndarray:
    obs = _check_obs(params.arch, obs).reshape(1, -1)
    return kl_grad_sum(pivot, params, obs)


# ---------------------------------------------------------------------------
# Scalar-output networks (state-value critics)
# ---------------------------------------------------------------------------


def value_arch(obs_dim: int, hidden_sizes=(64, 64)) -> PolicyArch:
    return PolicyArch(obs_dim, 1, VALUE, tuple(hidden_sizes))


def value_forward_batch(vparams: PolicyParams, obs: np.ndarray) -> np.ndarray:
    return network_output(vparams, obs)[:, 0]


def value_forward(vparams: PolicyParams, obs) -> float:
    obs = _check_obs(vparams.arch, obs)
    return float(value_forward_batch(vparams, obs.reshape(1, -1))[0])


def value_grad_sum(vparams: PolicyParams, obs: np.ndarray, weights) -> np.ndarray:
    """``sum_i weights[i] * grad V(obs[i])``."""
    arch = vparams.arch
    obs = _check_obs(arch, np.atleast_2d(obs))
    layers, _ = unpack(arch, vparams.theta)
    _, hidden = _mlp_forward(layers, obs)
    d_out = np.asarray(weights, dtype=np.float64).reshape(-1, 1)
    return _mlp_backward(layers, hidden, d_out, np.zeros(arch.n_params), arch)


def grad_value(vparams: PolicyParams, obs) -> np.ndarray:
    obs = _check_obs(vparams.arch, obs).reshape(1, -1)
    return value_grad_sum(vparams, obs, [1.0])
