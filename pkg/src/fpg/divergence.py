"""f-divergence generators and divergences between finite distributions.

Every generator is stored with its derivative and the slope at infinity,
which is what lets a divergence against a target with zero-mass states
stay finite.  Divergences are written in the form used by the learner::

    D_f(p || q) = sum_{q>0} q f(p / q) + f'(inf) * p[q == 0]

so ``p`` is the agent's distribution and ``q`` the target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, ShapeError, UndefinedDivergenceError

LOG_FLOOR = 1e-30


def _log(u):
    return np.log(np.maximum(u, LOG_FLOOR))


@dataclass(frozen=True)
class GeneratorSpec:
    """A convex generator ``f`` with ``f(1) = 0``.

    ``fprime_at_infinity`` is ``None`` when the slope diverges.
    ``f_at_zero`` is the limit ``f(0+)`` (may be ``inf``), used for states
    the agent never visits but the target covers.
    """

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    fprime: Callable[[np.ndarray], np.ndarray]
    fprime_at_infinity: float | None
    f_at_zero: float

    def __repr__(self):
        return f"GeneratorSpec({self.name!r})"


def _js_f(u):
    return u * _log(u) - (1.0 + u) * _log((1.0 + u) / 2.0)


FKL = GeneratorSpec(
    "fkl",
    f=lambda u: u * _log(u),
    fprime=lambda u: 1.0 + _log(u),
    fprime_at_infinity=None,
    f_at_zero=0.0,
)
RKL = GeneratorSpec(
    "rkl",
    f=lambda u: -_log(u),
    fprime=lambda u: -1.0 / u,
    fprime_at_infinity=0.0,
    f_at_zero=math.inf,
)
JS = GeneratorSpec(
    "js",
    f=_js_f,
    fprime=lambda u: _log(2.0 * u / (1.0 + u)),
    fprime_at_infinity=math.log(2.0),
    f_at_zero=math.log(2.0),
)
# derivative of the listed 0.5 (u-1)^2, not the "u" printed in the catalog
CHI2 = GeneratorSpec(
    "chi2",
    f=lambda u: 0.5 * (u - 1.0) ** 2,
    fprime=lambda u: u - 1.0,
    fprime_at_infinity=None,
    f_at_zero=0.5,
)
# subgradient 0 at the kink
TV = GeneratorSpec(
    "tv",
    f=lambda u: 0.5 * np.abs(u - 1.0),
    fprime=lambda u: 0.5 * np.sign(u - 1.0),
    fprime_at_infinity=0.5,
    f_at_zero=0.5,
)

GENERATORS: dict[str, GeneratorSpec] = {g.name: g for g in (FKL, RKL, JS, CHI2, TV)}

_ALIASES = {
    "fkl": "fkl",
    "kl": "fkl",
    "rkl": "rkl",
    "js": "js",
    "chi2": "chi2",
    "chisq": "chi2",
    "chi^2": "chi2",
    "tv": "tv",
}


def get_generator(name: str | GeneratorSpec) -> GeneratorSpec:
    if isinstance(name, GeneratorSpec):
        return name
    key = _ALIASES.get(str(name).strip().lower())
    if key is None:
        raise KeyError(f"unknown divergence {name!r}; choose from {sorted(GENERATORS)}")
    return GENERATORS[key]


def _positive(u):
    u = np.asarray(u, dtype=float)
    if np.any(~(u > 0)):
        raise DomainError("generator argument must be strictly positive")
    return u


def _unwrap(x):
    return x.item() if np.ndim(x) == 0 else x


def generator_value(spec, u):
    """``f(u)`` for ``u > 0``; accepts scalars or arrays."""
    spec = get_generator(spec)
    return _unwrap(np.asarray(spec.f(_positive(u)), dtype=float))


def generator_derivative(spec, u):
    """``f'(u)`` for ``u > 0``."""
    spec = get_generator(spec)
    return _unwrap(np.asarray(spec.fprime(_positive(u)), dtype=float))


@dataclass(frozen=True)
class FiniteDistribution:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).reshape(-1)
        if p.size == 0:
            raise DomainError("empty distribution")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise DomainError("probabilities must be finite and non-negative")
        if abs(p.sum() - 1.0) > 1e-9:
            raise DomainError(f"probabilities sum to {p.sum():.12g}, not 1")
        object.__setattr__(self, "probs", p)

    @property
    def support_size(self) -> int:
        return self.probs.size

    def __len__(self):
        return self.probs.size


def _as_probs(d) -> np.ndarray:
    if isinstance(d, FiniteDistribution):
        return d.probs
    return FiniteDistribution(d).probs


def f_divergence(spec, p, q) -> float:
    """``D_f(p || q)`` between two distributions on the same finite support.

    Cells with ``q = 0 < p`` cost ``f'(inf) p``; cells with ``p = 0 < q``
    cost ``q f(0+)``; cells empty under both contribute nothing.
    """
    spec = get_generator(spec)
    p, q = _as_probs(p), _as_probs(q)
    if p.shape != q.shape:
        raise ShapeError(f"support sizes differ: {p.size} vs {q.size}")

    both = (p > 0) & (q > 0)
    total = float(np.sum(q[both] * spec.f(p[both] / q[both])))

    only_q = (p == 0) & (q > 0)
    if np.any(only_q):
        total += float(np.sum(q[only_q])) * spec.f_at_zero

    only_p = (p > 0) & (q == 0)
    if np.any(only_p):
        if spec.fprime_at_infinity is None:
            raise UndefinedDivergenceError(
                f"{spec.name}: target has zero mass where p > 0 and f'(inf) is undefined"
            )
        total += spec.fprime_at_infinity * float(np.sum(p[only_p]))
    return total


def clip_dirac(goal_index: int, support_size: int, epsilon: float) -> FiniteDistribution:
    """Dirac mass at ``goal_index`` with every other cell floored at ``epsilon``."""
    if support_size < 1:
        raise DomainError("support_size must be positive")
    if not 0 <= goal_index < support_size:
        raise DomainError(f"goal index {goal_index} outside support of size {support_size}")
    if support_size > 1 and not 0 < epsilon < 1.0 / support_size:
        raise DomainError(f"epsilon must lie in (0, 1/{support_size}); got {epsilon}")
    probs = np.full(support_size, float(epsilon))
    probs[goal_index] = 1.0 - (support_size - 1) * epsilon
    return FiniteDistribution(probs)


def entropy(p) -> float:
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))
