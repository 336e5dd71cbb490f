import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpg import divergence as fdiv
from fpg.errors import DomainError, ShapeError, UndefinedDivergenceError
from fpg.oracles import chi2_bound_holds

NAMES = sorted(fdiv.GENERATORS)
GRID = np.logspace(-3, 3, 241)


@pytest.mark.parametrize("name", NAMES)
def test_f_of_one_is_zero(name):
    assert abs(fdiv.generator_value(name, 1.0)) <= 1e-12


@pytest.mark.parametrize("name", NAMES)
def test_midpoint_convexity(name):
    a, b = np.meshgrid(GRID[::6], GRID[::6])
    f = lambda u: fdiv.generator_value(name, u)
    assert np.all(f((a + b) / 2) <= (f(a) + f(b)) / 2 + 1e-9)


@pytest.mark.parametrize("name", NAMES)
def test_derivative_matches_finite_differences(name):
    u = GRID
    if name == "tv":
        u = u[np.abs(u - 1) > 1e-3]  # kink
    h = 1e-6 * u
    fd = (fdiv.generator_value(name, u + h) - fdiv.generator_value(name, u - h)) / (2 * h)
    np.testing.assert_allclose(fdiv.generator_derivative(name, u), fd, rtol=1e-6, atol=1e-8)


@pytest.mark.parametrize("name", NAMES)
def test_derivative_non_decreasing(name):
    assert np.all(np.diff(fdiv.generator_derivative(name, GRID)) >= -1e-12)


def test_fprime_at_infinity_catalog():
    assert fdiv.RKL.fprime_at_infinity == 0.0
    assert fdiv.JS.fprime_at_infinity == pytest.approx(math.log(2))
    assert fdiv.FKL.fprime_at_infinity is None
    assert fdiv.CHI2.fprime_at_infinity is None
    assert fdiv.TV.fprime_at_infinity == 0.5


def test_fprime_at_infinity_is_limit_of_slope():
    for spec in (fdiv.RKL, fdiv.JS, fdiv.TV):
        assert fdiv.generator_derivative(spec, 1e9) == pytest.approx(spec.fprime_at_infinity, abs=1e-8)


@pytest.mark.parametrize("name,u,expected", [
    ("fkl", 1.0, 0.0),
    ("rkl", 2.0, -math.log(2)),
    ("chi2", 3.0, 2.0),
])
def test_generator_value_examples(name, u, expected):
    assert fdiv.generator_value(name, u) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("name,u,expected", [
    ("fkl", 1.0, 1.0),
    ("js", 1.0, 0.0),
    ("chi2", 0.5, -0.5),
])
def test_generator_derivative_examples(name, u, expected):
    assert fdiv.generator_derivative(name, u) == pytest.approx(expected, abs=1e-12)


def test_chi2_derivative_is_slope_of_listed_generator():
    # f = (u-1)^2 / 2, so f'(0.5) = -0.5; the tabulated "u" would give +0.5
    h = 1e-6
    fd = (fdiv.generator_value("chi2", 0.5 + h) - fdiv.generator_value("chi2", 0.5 - h)) / (2 * h)
    assert fdiv.generator_derivative("chi2", 0.5) == pytest.approx(fd, abs=1e-8)


def test_tv_subgradient():
    assert fdiv.generator_derivative("tv", np.array([0.5, 1.0, 2.0])).tolist() == [-0.5, 0.0, 0.5]


@pytest.mark.parametrize("u", [0.0, -1.0, float("nan")])
@pytest.mark.parametrize("fn", [fdiv.generator_value, fdiv.generator_derivative])
def test_non_positive_argument_rejected(fn, u):
    with pytest.raises(DomainError):
        fn("fkl", u)


def test_unknown_generator():
    with pytest.raises(KeyError):
        fdiv.get_generator("hellinger")


def test_aliases():
    assert fdiv.get_generator("KL") is fdiv.FKL
    assert fdiv.get_generator("chisq") is fdiv.CHI2


@pytest.mark.parametrize("name", NAMES)
def test_identity_example(name):
    assert fdiv.f_divergence(name, [0.5, 0.5], [0.5, 0.5]) == 0.0


def test_fkl_example_against_direct_sum():
    p, q = np.array([0.5, 0.5]), np.array([0.25, 0.75])
    direct = float(np.sum(p * np.log(p / q)))
    assert fdiv.f_divergence("fkl", p, q) == pytest.approx(direct, abs=1e-12)
    assert fdiv.f_divergence("fkl", p, q) == pytest.approx(0.14384, abs=1e-5)


def test_rkl_example_term_by_term():
    # q > 0 everywhere, so f'(inf) never enters; the empty cell under p
    # contributes q f(0+) = +inf for -log u
    p, q = [1.0, 0.0], [0.5, 0.5]
    terms = [0.5 * -math.log(1.0 / 0.5), 0.5 * math.inf]
    assert fdiv.f_divergence("rkl", p, q) == sum(terms) == math.inf


def test_rkl_uses_fprime_at_infinity_where_target_is_empty():
    # p = [.5, .5], q = [1, 0]: 1 * f(0.5) + f'(inf) * 0.5 = log 2 + 0
    assert fdiv.f_divergence("rkl", [0.5, 0.5], [1.0, 0.0]) == pytest.approx(math.log(2))


def test_js_and_tv_where_target_is_empty():
    p, q = [0.5, 0.5], [1.0, 0.0]
    js = 1.0 * fdiv.generator_value("js", 0.5) + math.log(2) * 0.5
    assert fdiv.f_divergence("js", p, q) == pytest.approx(js)
    assert fdiv.f_divergence("tv", p, q) == pytest.approx(0.5)


@pytest.mark.parametrize("name", ["fkl", "chi2"])
def test_undefined_when_target_empty(name):
    with pytest.raises(UndefinedDivergenceError):
        fdiv.f_divergence(name, [0.5, 0.5], [1.0, 0.0])


def test_support_mismatch():
    with pytest.raises(ShapeError):
        fdiv.f_divergence("fkl", [0.5, 0.5], [0.2, 0.3, 0.5])


def test_zero_zero_cells_ignored():
    assert fdiv.f_divergence("fkl", [0.5, 0.5, 0.0], [0.5, 0.5, 0.0]) == 0.0


def test_finite_distribution_validation():
    assert fdiv.FiniteDistribution([0.25, 0.75]).support_size == 2
    for bad in ([0.5, 0.6], [-0.1, 1.1], [], [np.nan, 1.0]):
        with pytest.raises(DomainError):
            fdiv.FiniteDistribution(bad)


@pytest.mark.parametrize("goal,n,eps,expected", [
    (0, 2, 0.1, [0.9, 0.1]),
    (2, 4, 0.05, [0.05, 0.05, 0.85, 0.05]),
])
def test_clip_dirac_examples(goal, n, eps, expected):
    d = fdiv.clip_dirac(goal, n, eps)
    np.testing.assert_allclose(d.probs, expected, atol=1e-15)
    assert d.probs.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("goal,n,eps", [(0, 2, 0.6), (0, 2, 0.0), (0, 4, 0.25), (5, 4, 0.01)])
def test_clip_dirac_rejects(goal, n, eps):
    with pytest.raises(DomainError):
        fdiv.clip_dirac(goal, n, eps)


def test_entropy():
    assert fdiv.entropy([0.5, 0.5]) == pytest.approx(math.log(2))
    assert fdiv.entropy([1.0, 0.0]) == 0.0


def _pairs(rng, n_pairs, max_support=16, positive=False):
    for _ in range(n_pairs):
        n = int(rng.integers(1, max_support + 1))
        p, q = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
        if not positive:
            # knock out some cells to exercise the boundary conventions
            for v in (p, q):
                v[rng.random(n) < 0.2] = 0.0
        if p.sum() == 0 or q.sum() == 0:
            continue
        yield p / p.sum(), q / q.sum()


@pytest.mark.parametrize("name", NAMES)
def test_non_negative_on_random_pairs(name):
    rng = np.random.default_rng(1)
    for p, q in _pairs(rng, 1000):
        try:
            assert fdiv.f_divergence(name, p, q) >= -1e-9
        except UndefinedDivergenceError:
            assert np.any((q == 0) & (p > 0))


@pytest.mark.parametrize("name", NAMES)
def test_identity_on_random_distributions(name):
    rng = np.random.default_rng(2)
    for p, _ in _pairs(rng, 1000):
        assert abs(fdiv.f_divergence(name, p, p)) <= 1e-9


def test_chi2_bound():
    ok, gap = chi2_bound_holds(np.random.default_rng(3))
    assert ok, gap


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(1e-3, 1.0), min_size=2, max_size=12), st.integers(0, 2 ** 31))
def test_chi2_bound_property(weights, seed):
    p = np.asarray(weights) / np.sum(weights)
    q = np.random.default_rng(seed).dirichlet(np.ones(len(p)))
    assert fdiv.f_divergence("chi2", p, q) >= fdiv.f_divergence("fkl", p, q) - 1 - 1e-9


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(NAMES), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_derivative_monotone_property(name, a, b):
    lo, hi = sorted((a, b))
    assert fdiv.generator_derivative(name, lo) <= fdiv.generator_derivative(name, hi) + 1e-12
