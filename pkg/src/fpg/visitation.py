"""State-visitation densities and goal densities.

The visitation of a length-``T`` episode counts ``s_1 .. s_T``; ``s_0`` is
left out by default (``include_s0`` switches it back in).  Three estimators
are provided: an exact forward pass over a tabular MDP, a smoothed
histogram over rolled-out states and a Gaussian-kernel density estimate.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .divergence import clip_dirac
from .errors import DomainError, ShapeError, UnsupportedError

BANDWIDTH_FLOOR = 1e-3


class VisitationModel:
    kind: str

    def query(self, states) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, states):
        return self.query(states)


@dataclass(frozen=True)
class DiscreteVisitation(VisitationModel):
    """A probability vector over a finite state space."""

    probs: np.ndarray
    kind: str = "histogram"
    occupancy: np.ndarray | None = field(default=None, repr=False)

    def query(self, states):
        return self.probs[np.asarray(states, dtype=int)]

    def entropy(self) -> float:
        p = self.probs[self.probs > 0]
        return float(-np.sum(p * np.log(p)))

    @property
    def support_size(self) -> int:
        return self.probs.size


def exact_visitation(mdp, policy_table, horizon=None, gamma=None, include_s0=False) -> DiscreteVisitation:
    """Forward pass ``d_{t+1} = d_t P_pi`` averaged over ``t = 1..T``.

    With ``gamma`` the step-``t`` occupancy is weighted by ``gamma**t``.
    ``policy_table`` is the ``(S, A)`` matrix of action probabilities.
    """
    P = getattr(mdp, "transitions", None)
    if P is None:
        raise UnsupportedError("exact visitation needs a tabular MDP")
    pi = np.asarray(policy_table, dtype=float)
    if pi.shape != P.shape[:2]:
        raise ShapeError(f"policy table {pi.shape} does not match MDP {P.shape[:2]}")
    T = mdp.horizon if horizon is None else int(horizon)
    P_pi = np.einsum("sa,sat->st", pi, P)
    d = np.asarray(mdp.initial, dtype=float)
    occ = [d]
    for _ in range(T):
        d = d @ P_pi
        occ.append(d)
    occ = np.array(occ)
    ts = np.arange(T + 1, dtype=float)
    w = np.ones(T + 1) if gamma is None else float(gamma) ** ts
    if not include_s0:
        w[0] = 0.0
    p = w @ occ / w.sum()
    return DiscreteVisitation(p, kind="exact-dp", occupancy=occ)


def exact_visitation_batch(mdp, policy_tables, horizon=None, include_s0=False) -> np.ndarray:
    """Vectorised :func:`exact_visitation` for a stack of ``(N, S, A)`` tables."""
    P = mdp.transitions
    T = mdp.horizon if horizon is None else int(horizon)
    P_pi = np.einsum("nsa,sat->nst", np.asarray(policy_tables, float), P)
    d = np.broadcast_to(mdp.initial, (P_pi.shape[0], P.shape[0])).copy()
    acc = d.copy() if include_s0 else np.zeros_like(d)
    for _ in range(T):
        d = np.einsum("ns,nst->nt", d, P_pi)
        acc += d
    return acc / (T + include_s0)


def visited_states(trajectories, include_s0=False) -> np.ndarray:
    start = 0 if include_s0 else 1
    return np.concatenate([np.asarray(t.states[start:]) for t in trajectories])


def fit_histogram(trajectories, n_states: int, smoothing: float = 0.0, include_s0=False) -> DiscreteVisitation:
    """``(count(s) + eps) / (total + eps * |S|)`` over the visited states."""
    if not trajectories:
        raise DomainError("no trajectories to fit")
    if smoothing < 0:
        raise DomainError("smoothing must be non-negative")
    states = visited_states(trajectories, include_s0).astype(int)
    counts = np.bincount(states, minlength=n_states).astype(float)
    probs = (counts + smoothing) / (counts.sum() + smoothing * n_states)
    return DiscreteVisitation(probs, kind="histogram")


def scott_bandwidth(samples) -> np.ndarray:
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    n, d = x.shape
    sigma = x.std(axis=0, ddof=1) if n > 1 else np.zeros(d)
    return n ** (-1.0 / (d + 4)) * sigma


class KdeVisitation(VisitationModel):
    """Mixture of axis-aligned Gaussian kernels centred on the samples."""

    kind = "kde"

    def __init__(self, samples, bandwidth):
        self.samples = np.atleast_2d(np.asarray(samples, dtype=float))
        self.bandwidth = np.asarray(bandwidth, dtype=float)
        self.degenerate = False
        if self.bandwidth.shape != (self.samples.shape[1],):
            raise ShapeError("one bandwidth per dimension required")
        d = self.samples.shape[1]
        self._log_norm = -np.sum(np.log(self.bandwidth)) - 0.5 * d * math.log(2 * math.pi)

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def log_query(self, points, chunk=4096) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise ShapeError(f"query points have {pts.shape[1]} dims, model has {self.dim}")
        xs = self.samples / self.bandwidth
        out = np.empty(len(pts))
        n = len(xs)
        for lo in range(0, len(pts), chunk):
            q = pts[lo: lo + chunk] / self.bandwidth
            d2 = (q * q).sum(1)[:, None] - 2 * q @ xs.T + (xs * xs).sum(1)[None, :]
            np.maximum(d2, 0.0, out=d2)
            m = (-0.5 * d2).max(axis=1, keepdims=True)
            out[lo: lo + chunk] = (m[:, 0] + np.log(np.exp(-0.5 * d2 - m).sum(axis=1))) - math.log(n)
        return out + self._log_norm

    def query(self, points):
        return np.exp(self.log_query(points))


def fit_kde(samples, bandwidth_rule="scott", floor=BANDWIDTH_FLOOR) -> KdeVisitation:
    """KDE over ``samples`` (an ``(n, d)`` array or a list of trajectories).

    When every sample coincides the bandwidth falls back to ``floor`` and
    ``model.degenerate`` is set.
    """
    if isinstance(samples, (list, tuple)) and samples and hasattr(samples[0], "states"):
        samples = visited_states(samples)
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if len(x) == 0:
        raise DomainError("no samples to fit")
    if callable(bandwidth_rule):
        h = np.asarray(bandwidth_rule(x), dtype=float)
    elif isinstance(bandwidth_rule, str):
        if bandwidth_rule != "scott":
            raise DomainError(f"unknown bandwidth rule {bandwidth_rule!r}")
        h = scott_bandwidth(x)
    else:
        h = np.broadcast_to(np.asarray(bandwidth_rule, dtype=float), (x.shape[1],)).copy()
    degenerate = bool(np.all(np.ptp(x, axis=0) == 0))
    if degenerate:
        warnings.warn("all KDE samples coincide; using the bandwidth floor", RuntimeWarning, stacklevel=2)
    model = KdeVisitation(x, np.maximum(h, floor))
    model.degenerate = degenerate
    return model


@dataclass
class GoalDensity:
    """Target density ``p_g`` around a goal.

    kinds: ``clipped-dirac`` (discrete; needs ``support_size`` and
    ``epsilon``), ``gaussian`` and ``laplacian`` (normalised, isotropic
    ``scale``), ``custom-metric`` (``exp(metric(s, g))``, unnormalised).
    ``positions`` maps discrete states to coordinates for the metric kinds.
    """

    kind: str
    center: object
    scale: float = 1.0
    support_size: int | None = None
    epsilon: float | None = None
    metric: Callable | None = None
    positions: np.ndarray | None = None
    normalize_over_support: bool = False
    normalized: bool = field(init=False, default=True)

    def __post_init__(self):
        if self.kind not in ("clipped-dirac", "gaussian", "laplacian", "custom-metric"):
            raise DomainError(f"unknown goal density kind {self.kind!r}")
        if self.kind == "clipped-dirac":
            if self.support_size is None:
                raise DomainError("clipped-dirac needs support_size")
            if self.epsilon is None:
                self.epsilon = 1e-3 / self.support_size
            self._table = clip_dirac(int(self.center), self.support_size, self.epsilon).probs
        if self.kind == "custom-metric":
            if self.metric is None:
                raise DomainError("custom-metric needs a metric function")
            self.normalized = False
        if self.normalize_over_support:
            if self.support_size is None:
                raise DomainError("normalising over the support needs support_size")
            vals = self._raw_log(np.arange(self.support_size))
            self._log_z = float(np.log(np.exp(vals - vals.max()).sum()) + vals.max())
            self.normalized = True

    def _coords(self, states):
        s = np.asarray(states)
        if self.positions is not None and np.issubdtype(s.dtype, np.integer):
            return self.positions[s]
        s = np.asarray(s, dtype=float)
        return s[..., None] if s.ndim <= 1 and np.ndim(self.center) == 0 else s

    def _center(self):
        c = self.center
        if self.positions is not None and np.ndim(c) == 0 and float(c).is_integer():
            return self.positions[int(c)]
        return np.atleast_1d(np.asarray(c, dtype=float))

    def _raw_log(self, states):
        if self.kind == "clipped-dirac":
            return np.log(self._table[np.asarray(states, dtype=int)])
        x = self._coords(states)
        c = self._center()
        diff = x[..., : c.shape[-1]] - c
        d = c.shape[-1]
        if self.kind == "gaussian":
            sq = np.sum(diff * diff, axis=-1)
            return -sq / (2 * self.scale ** 2) - d * (math.log(self.scale) + 0.5 * math.log(2 * math.pi))
        if self.kind == "laplacian":
            return -np.sum(np.abs(diff), axis=-1) / self.scale - d * math.log(2 * self.scale)
        return np.asarray(self.metric(x, c), dtype=float)

    def log_density(self, states) -> np.ndarray:
        out = self._raw_log(states)
        if self.normalize_over_support:
            out = out - self._log_z
        return out

    def density(self, states) -> np.ndarray:
        return np.exp(self.log_density(states))

    __call__ = density

    def table(self) -> np.ndarray:
        """Density over a finite support as a vector."""
        if self.support_size is None:
            raise UnsupportedError("continuous goal density has no table")
        return self.density(np.arange(self.support_size))


def goal_density(spec: GoalDensity, s):
    return spec.density(s)
