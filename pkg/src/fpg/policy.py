"""Goal-conditioned stochastic policies with exact log-probability gradients.

Two architectures share one surface:

* :class:`TabularPolicy` -- a softmax over a logit table indexed by
  ``(goal, state, action)``;
* :class:`GaussianMLPPolicy` -- a two-layer tanh network mapping
  ``(state, goal)`` to the mean of a tanh-squashed diagonal Gaussian.

Parameters live in one flat ``float64`` vector (``policy.params``).  The
gradient routines are hand-written backward passes, so
``grad_log_prob(states, goals, actions, weights)`` returns
``sum_i w_i * d log pi(a_i | s_i, g_i) / d params`` in a single sweep.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .errors import DomainError, NumericError, ShapeError, UnsupportedError

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
_HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


def _logsoftmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


class Policy:
    params: np.ndarray

    @property
    def n_params(self) -> int:
        return self.params.size

    def architecture(self) -> dict:
        raise NotImplementedError

    def copy(self):
        raise NotImplementedError

    def with_params(self, params):
        other = self.copy()
        params = np.asarray(params, dtype=float)
        if params.shape != self.params.shape:
            raise ShapeError(f"expected {self.params.size} parameters, got {params.size}")
        other.params = params.copy()
        return other

    def env_action(self, actions):
        return actions

    def act(self, s, g, rng, deterministic=False):
        """Sample one action; returns ``(action, log pi(action | s; g))``."""
        a, lp = self.act_batch(np.asarray([s]), np.asarray([g]), rng, deterministic)
        return a[0], float(lp[0])

    def logprob_grad(self, s, g, a) -> np.ndarray:
        return self.grad_log_prob(np.asarray([s]), np.asarray([g]), np.asarray([a]), np.ones(1))


class TabularPolicy(Policy):
    """Softmax policy with one logit per ``(goal, state, action)``.

    ``goals`` lists the goal states the table is conditioned on; ``None``
    gives a single goal-agnostic table.
    """

    def __init__(self, n_states: int, n_actions: int, goals=None, params=None):
        self.n_states = int(n_states)
        self.n_actions = int(n_actions)
        self.goals = None if goals is None else tuple(int(g) for g in goals)
        n_goals = 1 if self.goals is None else len(self.goals)
        self._goal_row = None if self.goals is None else {g: i for i, g in enumerate(self.goals)}
        shape = (n_goals, self.n_states, self.n_actions)
        self.params = np.zeros(int(np.prod(shape))) if params is None else np.asarray(params, float).copy()
        if self.params.size != np.prod(shape):
            raise ShapeError(f"expected {np.prod(shape)} parameters, got {self.params.size}")
        self._shape = shape

    @property
    def logits(self) -> np.ndarray:
        return self.params.reshape(self._shape)

    def architecture(self):
        return {"kind": "tabular", "n_states": self.n_states, "n_actions": self.n_actions,
                "goals": None if self.goals is None else list(self.goals)}

    def copy(self):
        return TabularPolicy(self.n_states, self.n_actions, self.goals, self.params)

    def _rows(self, goals):
        goals = np.asarray(goals, dtype=int)
        if self._goal_row is None:
            return np.zeros(goals.shape, dtype=int)
        try:
            return np.array([self._goal_row[int(g)] for g in goals.reshape(-1)]).reshape(goals.shape)
        except KeyError as e:
            raise DomainError(f"policy is not conditioned on goal {e.args[0]}") from None

    def _check_states(self, states):
        states = np.asarray(states, dtype=int)
        if np.any((states < 0) | (states >= self.n_states)):
            raise DomainError("state index out of range")
        return states

    def log_probs_all(self, states, goals) -> np.ndarray:
        states = self._check_states(states)
        return _logsoftmax(self.logits[self._rows(goals), states])

    def state_probs(self, g=None) -> np.ndarray:
        """``(S, A)`` table of ``pi(a | s; g)``."""
        row = 0 if self._goal_row is None else self._rows([g])[0]
        return np.exp(_logsoftmax(self.logits[row]))

    def act_batch(self, states, goals, rng, deterministic=False):
        lp_all = self.log_probs_all(states, goals)
        if not np.all(np.isfinite(lp_all)):
            raise NumericError("non-finite logits")
        if deterministic:
            a = lp_all.argmax(axis=1)
        else:
            cum = np.cumsum(np.exp(lp_all), axis=1)
            u = rng.random(len(lp_all)) * cum[:, -1]
            a = np.minimum((cum < u[:, None]).sum(axis=1), self.n_actions - 1)
        return a, lp_all[np.arange(len(a)), a]

    def log_prob(self, states, goals, actions) -> np.ndarray:
        lp_all = self.log_probs_all(states, goals)
        actions = np.asarray(actions, dtype=int)
        return lp_all[np.arange(len(actions)), actions]

    def grad_log_prob(self, states, goals, actions, weights) -> np.ndarray:
        states = self._check_states(states)
        rows = self._rows(goals)
        actions = np.asarray(actions, dtype=int)
        w = np.asarray(weights, dtype=float)
        probs = np.exp(_logsoftmax(self.logits[rows, states]))
        contrib = -w[:, None] * probs
        contrib[np.arange(len(actions)), actions] += w
        grad = np.zeros(self._shape)
        np.add.at(grad, (rows, states), contrib)
        return grad.reshape(-1)


def _orthogonal(rng, n_in, n_out, gain):
    a = rng.standard_normal((max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if n_in < n_out:
        q = q.T
    return gain * q[:n_in, :n_out]


class GaussianMLPPolicy(Policy):
    """Tanh MLP -> mean of a diagonal Gaussian, squashed through ``tanh``.

    Stored actions are the pre-squash samples ``u``; the environment sees
    ``tanh(u)``.  Log-probabilities include the change-of-variables term,
    which does not depend on the parameters.
    """

    def __init__(self, obs_dim, act_dim, hidden=(64, 64), obs_offset=None, obs_scale=None,
                 rng=None, params=None, init_log_std=0.0):
        self.obs_dim = int(obs_dim)
        self.act_dim = int(act_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.obs_offset = np.zeros(obs_dim) if obs_offset is None else np.asarray(obs_offset, float)
        self.obs_scale = np.ones(obs_dim) if obs_scale is None else np.asarray(obs_scale, float)
        sizes = (self.obs_dim, *self.hidden, self.act_dim)
        self._layers = []
        offset = 0
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            self._layers.append(((offset, (n_in, n_out)), (offset + n_in * n_out, (n_out,))))
            offset += n_in * n_out + n_out
        self._log_std = (offset, (self.act_dim,))
        size = offset + self.act_dim
        if params is not None:
            self.params = np.asarray(params, dtype=float).copy()
            if self.params.size != size:
                raise ShapeError(f"expected {size} parameters, got {self.params.size}")
            return
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params = np.zeros(size)
        for i, ((w_off, w_shape), _) in enumerate(self._layers):
            gain = 0.01 if i == len(self._layers) - 1 else math.sqrt(2)
            self._view(w_off, w_shape)[...] = _orthogonal(rng, *w_shape, gain)
        self._view(*self._log_std)[...] = init_log_std

    def _view(self, offset, shape, arr=None):
        arr = self.params if arr is None else arr
        return arr[offset: offset + int(np.prod(shape))].reshape(shape)

    def architecture(self):
        return {"kind": "mlp", "obs_dim": self.obs_dim, "act_dim": self.act_dim,
                "hidden": list(self.hidden), "activation": "tanh", "squash": "tanh",
                "obs_offset": self.obs_offset.tolist(), "obs_scale": self.obs_scale.tolist()}

    def copy(self):
        return GaussianMLPPolicy(self.obs_dim, self.act_dim, self.hidden, self.obs_offset,
                                 self.obs_scale, params=self.params)

    def env_action(self, actions):
        return np.tanh(actions)

    def _obs(self, states, goals):
        x = np.concatenate([np.atleast_2d(states), np.atleast_2d(goals)], axis=1)
        if x.shape[1] != self.obs_dim:
            raise ShapeError(f"state+goal has {x.shape[1]} dims, policy expects {self.obs_dim}")
        return (x - self.obs_offset) / self.obs_scale

    def _forward(self, x):
        acts = [x]
        h = x
        for i, ((w_off, w_shape), (b_off, b_shape)) in enumerate(self._layers):
            z = h @ self._view(w_off, w_shape) + self._view(b_off, b_shape)
            h = z if i == len(self._layers) - 1 else np.tanh(z)
            acts.append(h)
        return h, acts

    def _log_std_value(self):
        raw = self._view(*self._log_std)
        return np.clip(raw, LOG_STD_MIN, LOG_STD_MAX), (raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)

    def distribution(self, states, goals):
        """Mean and (clamped) log-stddev of the pre-squash Gaussian."""
        mean, _ = self._forward(self._obs(states, goals))
        log_std, _ = self._log_std_value()
        if not np.all(np.isfinite(mean)):
            raise NumericError("non-finite policy mean")
        return mean, np.broadcast_to(log_std, mean.shape)

    @staticmethod
    def _squash_correction(u):
        # log(1 - tanh(u)^2), stable for large |u|
        return 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))

    def _gauss_logp(self, u, mean, log_std):
        z = (u - mean) * np.exp(-log_std)
        return np.sum(-0.5 * z * z - log_std - _HALF_LOG_2PI - self._squash_correction(u), axis=-1)

    def act_batch(self, states, goals, rng, deterministic=False):
        mean, log_std = self.distribution(states, goals)
        if deterministic:
            u = mean.copy()
        else:
            u = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
        return u, self._gauss_logp(u, mean, log_std)

    def log_prob(self, states, goals, actions):
        mean, log_std = self.distribution(states, goals)
        return self._gauss_logp(np.asarray(actions, float), mean, log_std)

    def grad_log_prob(self, states, goals, actions, weights):
        x = self._obs(states, goals)
        mean, acts = self._forward(x)
        log_std, live = self._log_std_value()
        u = np.asarray(actions, dtype=float).reshape(mean.shape)
        w = np.asarray(weights, dtype=float)[:, None]
        inv_var = np.exp(-2 * log_std)
        diff = u - mean

        grad = np.zeros_like(self.params)
        d_ls = self._view(*self._log_std, grad)
        d_ls[...] = np.sum(w * (diff * diff * inv_var - 1.0), axis=0) * live

        delta = w * diff * inv_var  # d/d mean
        for i in range(len(self._layers) - 1, -1, -1):
            (w_off, w_shape), (b_off, b_shape) = self._layers[i]
            h_in = acts[i]
            self._view(w_off, w_shape, grad)[...] = h_in.T @ delta
            self._view(b_off, b_shape, grad)[...] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self._view(w_off, w_shape).T) * (1.0 - h_in * h_in)
        return grad


def make_policy(architecture: dict, params=None):
    kind = architecture.get("kind")
    if kind == "tabular":
        return TabularPolicy(architecture["n_states"], architecture["n_actions"],
                             architecture.get("goals"), params)
    if kind == "mlp":
        return GaussianMLPPolicy(architecture["obs_dim"], architecture["act_dim"],
                                 architecture["hidden"], architecture.get("obs_offset"),
                                 architecture.get("obs_scale"), params=params)
    raise DomainError(f"unknown policy kind {kind!r}")


def policy_state_probs(policy, g=None) -> np.ndarray:
    if not isinstance(policy, TabularPolicy):
        raise UnsupportedError("state-action table only exists for tabular policies")
    return policy.state_probs(g)


def save_checkpoint(policy: Policy, path, **meta) -> Path:
    """Write ``<path>.bin`` (little-endian float64 vector) and ``<path>.json``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    binp, header = path.with_suffix(".bin"), path.with_suffix(".json")
    policy.params.astype("<f8").tofile(binp)
    doc = {"format": "fpg-params/1", "dtype": "<f8", "size": int(policy.params.size),
           "architecture": policy.architecture(), **meta}
    header.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return header


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(policy, header)``."""
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    params = np.fromfile(path.with_suffix(".bin"), dtype=header.get("dtype", "<f8"))
    if params.size != header["size"]:
        raise ShapeError(f"checkpoint holds {params.size} values, header says {header['size']}")
    return make_policy(header["architecture"], params.astype(float)), header


class Adam:
    """Adam on a flat parameter vector (descent)."""

    def __init__(self, size, lr=3e-4, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params, grad):
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        mhat = self.m / (1 - self.b1 ** self.t)
        vhat = self.v / (1 - self.b2 ** self.t)
        return params - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def state(self):
        return (self.m.copy(), self.v.copy(), self.t)

    def restore(self, state):
        self.m, self.v, self.t = state[0].copy(), state[1].copy(), state[2]
