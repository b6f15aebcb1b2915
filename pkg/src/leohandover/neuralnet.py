"""Dense-network substrate with a dueling head, in plain float64 numpy.

The action-value head decomposes Q into a state value and mean-centered
advantages, Q(s,a) = V(s) + (A(s,a) - mean_a' A(s,a')), with the mean taken
over the valid action slots only; padding slots are reported as -inf and
never touch the normalization.  Gradients are hand-rolled backprop (the whole
point is that they can be checked against central finite differences), and
the optimizer is the usual adaptive-moment update with bias correction.

Fast inference goes through leohandover._kernels (compiled when available);
the cached forward used for training is always the numpy path here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import TrainingError

CHECKPOINT_MAGIC = "leohandover-ckpt-v1"


class DenseNet:
    """Fully connected stack: ReLU on hidden layers, identity on the output
    unless `output_relu` is set (the dueling trunk sets it)."""

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray],
                 output_relu: bool = False):
        if len(weights) != len(biases) or not weights:
            raise ValueError("need one bias vector per weight matrix")
        for i in range(1, len(weights)):
            if weights[i].shape[1] != weights[i - 1].shape[0]:
                raise ValueError("incompatible consecutive layer dims")
        self.weights = weights
        self.biases = biases
        self.output_relu = output_relu

    @classmethod
    def create(cls, dims: tuple[int, ...], rng: np.random.Generator,
               output_relu: bool = False) -> "DenseNet":
        """He-initialized net with the given layer widths (input first)."""
        ws, bs = [], []
        for n_in, n_out in zip(dims[:-1], dims[1:]):
            ws.append(rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_out, n_in)))
            bs.append(np.zeros(n_out))
        return cls(ws, bs, output_relu=output_relu)

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    @property
    def param_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def forward(self, x: np.ndarray, cache: list | None = None) -> np.ndarray:
        """(B, in) -> (B, out).  With `cache`, stores (input, preact) pairs."""
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w.T + b
            if cache is not None:
                cache.append((h, z))
            h = np.maximum(z, 0.0) if (i < last or self.output_relu) else z
        return h

    def backward(self, d_out: np.ndarray, cache: list) -> tuple[list, np.ndarray]:
        """Gradients of all layers plus the gradient w.r.t. the net input."""
        grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(self.weights)
        last = len(self.weights) - 1
        g = d_out
        for i in range(last, -1, -1):
            x_in, z = cache[i]
            if i < last or self.output_relu:
                g = g * (z > 0.0)
            grads[i] = (g.T @ x_in, g.sum(axis=0))
            g = g @ self.weights[i]
        return grads, g

    def copy(self) -> "DenseNet":
        return DenseNet([w.copy() for w in self.weights],
                        [b.copy() for b in self.biases], self.output_relu)


class DuelingQNet:
    """Shared trunk feeding a scalar value stream and a K-slot advantage
    stream."""

    def __init__(self, trunk: DenseNet, value: DenseNet, advantage: DenseNet):
        t_out = trunk.dims[-1]
        if value.dims[0] != t_out or advantage.dims[0] != t_out:
            raise ValueError("streams must consume the trunk output dim")
        if value.dims[-1] != 1:
            raise ValueError("value stream must output one scalar")
        self.trunk = trunk
        self.value = value
        self.advantage = advantage

    @classmethod
    def create(cls, obs_dim: int, k_max: int, rng: np.random.Generator,
               trunk_dims: tuple[int, ...] = (128, 128),
               stream_dims: tuple[int, ...] = (64,)) -> "DuelingQNet":
        trunk = DenseNet.create((obs_dim,) + tuple(trunk_dims), rng, output_relu=True)
        t_out = trunk.dims[-1]
        value = DenseNet.create((t_out,) + tuple(stream_dims) + (1,), rng)
        advantage = DenseNet.create((t_out,) + tuple(stream_dims) + (k_max,), rng)
        return cls(trunk, value, advantage)

    @property
    def obs_dim(self) -> int:
        return self.trunk.dims[0]

    @property
    def k_max(self) -> int:
        return self.advantage.dims[-1]

    @property
    def param_count(self) -> int:
        return self.trunk.param_count + self.value.param_count + self.advantage.param_count

    def copy(self) -> "DuelingQNet":
        return DuelingQNet(self.trunk.copy(), self.value.copy(), self.advantage.copy())

    def copy_from(self, other: "DuelingQNet") -> None:
        set_flat_params(self, flat_params(other).copy())


def forward_dueling_batch(head: DuelingQNet, obs: np.ndarray,
                          mask: np.ndarray | None = None) -> np.ndarray:
    """(B, obs_dim) -> (B, K) Q values; invalid slots are -inf."""
    if obs.ndim != 2 or obs.shape[1] != head.obs_dim:
        raise ValueError(f"expected (B, {head.obs_dim}) observations, got {obs.shape}")
    return _kernels.dueling_forward_batch(
        head.trunk.weights, head.trunk.biases,
        head.value.weights, head.value.biases,
        head.advantage.weights, head.advantage.biases,
        np.ascontiguousarray(obs, dtype=np.float64), mask,
    )


def forward_dueling(head: DuelingQNet, observation: np.ndarray,
                    mask: np.ndarray | None = None) -> np.ndarray:
    """Single-observation Q vector, shape (K,)."""
    obs = np.asarray(observation, dtype=np.float64)
    if obs.ndim != 1:
        raise ValueError(f"expected a flat observation vector, got shape {obs.shape}")
    m = None if mask is None else np.asarray(mask, dtype=bool)[None, :]
    return forward_dueling_batch(head, obs[None, :], m)[0]


def _forward_streams_cached(head: DuelingQNet, obs: np.ndarray):
    """Numpy forward keeping caches for backprop; returns (v, a, caches)."""
    tc, vc, ac = [], [], []
    h = head.trunk.forward(obs, cache=tc)
    v = head.value.forward(h, cache=vc)
    a = head.advantage.forward(h, cache=ac)
    return v, a, (tc, vc, ac)


def loss_and_gradient(head: DuelingQNet, obs: np.ndarray, actions: np.ndarray,
                      targets: np.ndarray, mask: np.ndarray | None = None):
    """Mean squared error of Q at the taken actions against `targets`.

    Returns (loss, grads) where grads mirrors the parameter structure as
    {"trunk": [(dW, db), ...], "value": [...], "advantage": [...]}.
    Backprop runs through the valid-slot mean subtraction.
    """
    obs = np.asarray(obs, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.float64)
    B, K = obs.shape[0], head.k_max
    if B == 0:
        raise ValueError("empty batch")
    if mask is None:
        mask = np.ones((B, K), dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
    if np.any(actions < 0) or np.any(actions >= K):
        raise ValueError("action index out of range")
    if not mask[np.arange(B), actions].all():
        raise ValueError("action taken on a masked slot")

    v, a, caches = _forward_streams_cached(head, obs)
    n_valid = mask.sum(axis=1, keepdims=True)
    mean_a = np.where(mask, a, 0.0).sum(axis=1, keepdims=True) / n_valid
    q_taken = v[:, 0] + a[np.arange(B), actions] - mean_a[:, 0]

    err = q_taken - targets
    loss = float(np.mean(err**2))
    g = (2.0 * err / B)[:, None]  # dL/dq_taken, shape (B, 1)

    dv = g
    da = np.where(mask, -g / n_valid, 0.0)
    da[np.arange(B), actions] += g[:, 0]

    tc, vc, ac = caches
    value_grads, d_h_value = head.value.backward(dv, vc)
    adv_grads, d_h_adv = head.advantage.backward(da, ac)
    trunk_grads, _ = head.trunk.backward(d_h_value + d_h_adv, tc)
    return loss, {"trunk": trunk_grads, "value": value_grads, "advantage": adv_grads}


# --- flat parameter plumbing (optimizer, checkpoints, finite differences) ---

def _nets(head: DuelingQNet) -> list[DenseNet]:
    return [head.trunk, head.value, head.advantage]


def flat_params(head: DuelingQNet) -> np.ndarray:
    parts = []
    for net in _nets(head):
        for w, b in zip(net.weights, net.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
    return np.concatenate(parts)


def set_flat_params(head: DuelingQNet, vec: np.ndarray) -> None:
    i = 0
    for net in _nets(head):
        for li in range(len(net.weights)):
            w, b = net.weights[li], net.biases[li]
            net.weights[li] = vec[i:i + w.size].reshape(w.shape).copy()
            i += w.size
            net.biases[li] = vec[i:i + b.size].copy()
            i += b.size
    if i != vec.size:
        raise ValueError(f"parameter vector size mismatch: {vec.size} != {i}")


def flat_grads(head: DuelingQNet, grads: dict) -> np.ndarray:
    parts = []
    for name in ("trunk", "value", "advantage"):
        for dw, db in grads[name]:
            parts.append(dw.ravel())
            parts.append(db.ravel())
    return np.concatenate(parts)


@dataclass
class AdamState:
    """Adaptive-moment optimizer state over the flat parameter vector."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None


def optimizer_step(state: AdamState, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """One bias-corrected adaptive-moment update; returns the new params."""
    if grads.shape != params.shape:
        raise ValueError("gradient shape mismatch")
    if not np.all(np.isfinite(grads)):
        bad = int(np.count_nonzero(~np.isfinite(grads)))
        raise TrainingError(f"non-finite gradient ({bad} of {grads.size} entries)")
    if state.m is None:
        state.m = np.zeros_like(params)
        state.v = np.zeros_like(params)
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads**2
    m_hat = state.m / (1.0 - state.beta1**state.step)
    v_hat = state.v / (1.0 - state.beta2**state.step)
    return params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)


# --- checkpointing -----------------------------------------------------------

def save_checkpoint(head: DuelingQNet, path) -> None:
    """Write a header line (JSON layer dims) followed by the raw little-endian
    float64 flat parameter vector; round-trips bit-exactly."""
    header = {
        "magic": CHECKPOINT_MAGIC,
        "trunk": list(head.trunk.dims),
        "value": list(head.value.dims),
        "advantage": list(head.advantage.dims),
        "dtype": "<f8",
    }
    vec = flat_params(head).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("ascii") + b"\n")
        fh.write(vec.tobytes())


def load_checkpoint(path) -> DuelingQNet:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("ascii"))
        if header.get("magic") != CHECKPOINT_MAGIC:
            raise ValueError(f"not a checkpoint file: {path}")
        vec = np.frombuffer(fh.read(), dtype=header["dtype"]).astype(np.float64)
    rng = np.random.default_rng(0)  # shapes only; values overwritten below
    trunk = DenseNet.create(tuple(header["trunk"]), rng, output_relu=True)
    value = DenseNet.create(tuple(header["value"]), rng)
    advantage = DenseNet.create(tuple(header["advantage"]), rng)
    head = DuelingQNet(trunk, value, advantage)
    set_flat_params(head, vec)
    return head


# --- finite-difference verification -----------------------------------------

def _min_preact_margin(head: DuelingQNet, obs: np.ndarray) -> float:
    """Smallest |preactivation| over all ReLU layers for this batch."""
    margin = np.inf
    tc, vc, ac = [], [], []
    h = head.trunk.forward(obs, cache=tc)
    head.value.forward(h, cache=vc)
    head.advantage.forward(h, cache=ac)
    for net, cache in ((head.trunk, tc), (head.value, vc), (head.advantage, ac)):
        last = len(net.weights) - 1
        for i, (_, z) in enumerate(cache):
            if i < last or net.output_relu:
                margin = min(margin, float(np.min(np.abs(z))))
    return margin


def gradient_check(n_instances: int = 20, step: float = 1e-5,
                   seed: int = 0) -> float:
    """Max scale-normalized deviation between analytic and central
    finite-difference gradients over random small networks and batches.

    Instances whose ReLU preactivations sit within 100x the step of a kink are
    resampled: finite differences are meaningless across the kink.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        while True:
            obs_dim = int(rng.integers(4, 9))
            k = int(rng.integers(2, 6))
            head = DuelingQNet.create(obs_dim, k, rng,
                                      trunk_dims=(int(rng.integers(5, 9)),),
                                      stream_dims=(int(rng.integers(4, 8)),))
            batch = int(rng.integers(1, 5))
            obs = rng.normal(size=(batch, obs_dim))
            if _min_preact_margin(head, obs) > 100.0 * step:
                break
        mask = np.ones((batch, k), dtype=bool)
        for row in mask:
            row[rng.random(k) < 0.3] = False
            row[rng.integers(k)] = True
        valid_choices = [np.flatnonzero(m) for m in mask]
        actions = np.array([rng.choice(c) for c in valid_choices])
        targets = rng.normal(size=batch)

        _, grads = loss_and_gradient(head, obs, actions, targets, mask)
        ga = flat_grads(head, grads)

        theta = flat_params(head)
        gn = np.empty_like(theta)
        for i in range(theta.size):
            for sign, slot in ((1.0, 0), (-1.0, 1)):
                vec = theta.copy()
                vec[i] += sign * step
                set_flat_params(head, vec)
                li, _ = _evaluate_loss(head, obs, actions, targets, mask)
                if slot == 0:
                    plus = li
                else:
                    gn[i] = (plus - li) / (2.0 * step)
        set_flat_params(head, theta)
        scale = float(np.max(np.abs(gn))) + 1e-12
        worst = max(worst, float(np.max(np.abs(ga - gn))) / scale)
    return worst


def _evaluate_loss(head, obs, actions, targets, mask):
    v, a, _ = _forward_streams_cached(head, obs)
    n_valid = mask.sum(axis=1, keepdims=True)
    mean_a = np.where(mask, a, 0.0).sum(axis=1, keepdims=True) / n_valid
    q_taken = v[:, 0] + a[np.arange(len(targets)), actions] - mean_a[:, 0]
    err = q_taken - targets
    return float(np.mean(err**2)), q_taken
