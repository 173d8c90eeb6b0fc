import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from markov_noise.chain_models import Chain, make_family, random_reversible_chain
from markov_noise.errors import BadSubsetSize, DimensionMismatch, NonpositiveAlpha, NotBoolean
from markov_noise.noise import (
    DEFAULT_ALPHAS,
    Observable,
    covariance_at_times,
    covariance_curve,
    expected_random_subset_cov,
    flip_at_times,
    flip_curve,
    fourier_profile,
    random_subset_indicator,
    return_probability,
    sensitive_existence_gap,
    sensitivity_band_mass,
    sharpness_bounds,
    stability_tail_mass,
    subset_variance_formula,
)
from markov_noise.spectral import decompose

from oracles import covariance_direct, flip_direct

E1 = np.exp(-1.0)


def setup(name, **params):
    chain = make_family(name, **params)
    return chain, decompose(chain)


def dictator_profile(n):
    chain, dec = setup("hypercube_rerandomize", n=n)
    return fourier_profile(dec, Observable.dictator(chain, 0))


# -- profiles ----------------------------------------------------------------


def test_constant_profile():
    chain, dec = setup("cycle", n=3)
    prof = fourier_profile(dec, np.ones(6))
    assert np.allclose(prof.fhat, np.eye(6)[0], atol=1e-12)


def test_eigenvector_profile():
    chain, dec = setup("glued_cliques", n=2)
    prof = fourier_profile(dec, dec.psi(3))
    assert np.allclose(prof.fhat, np.eye(chain.n_states)[3], atol=1e-10)


def test_dictator_profile():
    prof = dictator_profile(3)
    assert prof.mean == pytest.approx(0.5, abs=1e-12)
    assert prof.variance == pytest.approx(0.25, abs=1e-12)
    masses = prof.band_masses
    assert masses[1] == pytest.approx(0.25, abs=1e-12)
    assert np.allclose(masses[2:], 0, atol=1e-12)
    assert masses.sum() == pytest.approx(prof.second_moment, abs=1e-9)


def test_dimension_mismatch():
    _, dec = setup("complete", n=3)
    with pytest.raises(DimensionMismatch):
        fourier_profile(dec, [1.0, 0.0])


def test_observable_flags():
    assert Observable.from_values([0, 1, 1]).is_boolean
    assert not Observable.from_values([0, 0.5]).is_boolean


# -- curves ------------------------------------------------------------------


def test_covariance_examples():
    chain, dec = setup("complete", n=3)
    prof = fourier_profile(dec, [0.3, -1.0, 2.0])
    ((_, c0),) = covariance_curve(prof, [1e-9])
    assert c0 == pytest.approx(prof.variance, abs=1e-6)
    ((_, c2),) = covariance_curve(prof, [2.0])
    assert c2 == pytest.approx(np.exp(-2) * prof.variance, abs=1e-14)
    ((_, cd),) = covariance_curve(dictator_profile(5), [1.0])
    assert cd == pytest.approx(E1 / 4, abs=1e-14)


def test_nonpositive_alpha():
    prof = dictator_profile(2)
    for bad in ([0.0], [-1.0, 1.0]):
        with pytest.raises(NonpositiveAlpha):
            covariance_curve(prof, bad)
        with pytest.raises(NonpositiveAlpha):
            flip_curve(prof, bad)


@pytest.mark.parametrize("n", [2, 4, 7])
def test_dictator_flip_curve(n):
    for alpha, value in flip_curve(dictator_profile(n)):
        assert value == pytest.approx((1 - np.exp(-alpha)) / 2, abs=1e-12)


def test_flip_zero_function_and_not_boolean():
    _, dec = setup("cycle", n=3)
    prof = fourier_profile(dec, np.zeros(6))
    assert all(v == 0.0 for _, v in flip_curve(prof))
    with pytest.raises(NotBoolean):
        flip_curve(fourier_profile(dec, np.arange(6.0)))


def test_flip_single_vertex_k3():
    chain, dec = setup("complete", n=3)
    prof = fourier_profile(dec, Observable.indicator(chain, ["0"]))
    ((_, v),) = flip_curve(prof, [1.0])
    assert v == pytest.approx(2 * (1 - E1) * (1 / 3 - 1 / 9), abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 12))
def test_curves_match_matrix_exponential(seed, n):
    chain = random_reversible_chain(n, seed)
    dec = decompose(chain)
    rng = np.random.default_rng(seed)
    f = rng.integers(0, 2, n).astype(float)
    prof = fourier_profile(dec, f)
    for t in (0.05, 1.0, 3.0):
        assert covariance_at_times(prof, t)[0] == pytest.approx(
            covariance_direct(chain.generator, chain.pi, f, t), abs=1e-10
        )
        assert flip_at_times(prof, t)[0] == pytest.approx(
            flip_direct(chain.generator, chain.pi, f, t), abs=1e-10
        )


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 20))
def test_curve_invariants(seed, n):
    chain = random_reversible_chain(n, seed)
    dec = decompose(chain)
    f = np.random.default_rng(seed).integers(0, 2, n).astype(float)
    prof = fourier_profile(dec, f)
    cov = np.array([v for _, v in covariance_curve(prof)])
    flip = np.array([v for _, v in flip_curve(prof)])
    assert np.all(np.diff(cov) <= 1e-15) and np.all(np.diff(flip) >= -1e-15)
    assert np.all((cov >= 0) & (cov <= prof.variance))
    assert np.all((flip >= 0) & (flip <= 1))
    assert np.allclose(flip, 2 * (prof.variance - cov), atol=1e-10)
    assert np.all(flip <= 2 * prof.variance + 1e-12)


def test_equal_band_masses_give_equal_curves():
    # Two different functions on K_6 carrying the same variance: every
    # nonzero eigenvalue equals lambda_1, so the band vector matches.
    chain, dec = setup("complete", n=6)
    f = np.array([1, 1, 1, 0, 0, 0.0])
    g = np.array([0, 1, 0, 1, 0, 1.0])
    pf, pg = fourier_profile(dec, f), fourier_profile(dec, g)
    assert np.allclose(pf.band_masses, pg.band_masses, atol=1e-12)
    cf = np.array(covariance_curve(pf))
    cg = np.array(covariance_curve(pg))
    assert np.max(np.abs(cf - cg)) <= 1e-12


# -- band masses -------------------------------------------------------------


def test_tail_mass_examples():
    chain, dec = setup("complete", n=3)
    prof = fourier_profile(dec, [1.0, 0.0, 2.0])
    assert stability_tail_mass(prof, 1) == pytest.approx(prof.variance, abs=1e-14)
    assert stability_tail_mass(prof, 1.5) == 0.0
    d = dictator_profile(3)
    assert stability_tail_mass(d, 2) == pytest.approx(0.0, abs=1e-14)
    assert sensitivity_band_mass(d, 1.5) == pytest.approx(0.25, abs=1e-12)


def test_band_mass_top_and_infinite_k():
    chain, dec = setup("glued_cliques", n=3)
    top = fourier_profile(dec, dec.psi(chain.n_states - 1))
    assert sensitivity_band_mass(top, 1.0001) == pytest.approx(0.0, abs=1e-12)
    f = np.random.default_rng(0).normal(size=chain.n_states)
    prof = fourier_profile(dec, f)
    assert sensitivity_band_mass(prof, 1e6) == pytest.approx(prof.variance, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 20))
def test_band_split_sums_to_variance(seed, n):
    chain = random_reversible_chain(n, seed)
    prof = fourier_profile(decompose(chain), np.random.default_rng(seed).normal(size=n))
    previous = np.inf
    for k in (1.0, 1.5, 2, 4, 8, 100):
        tail = stability_tail_mass(prof, k)
        assert tail <= previous + 1e-15
        previous = tail
        if k > 1:
            assert sensitivity_band_mass(prof, k) + tail == pytest.approx(prof.variance, abs=1e-10)


# -- existence gap and random subsets ----------------------------------------


@pytest.mark.parametrize("n", [2, 5, 9])
def test_existence_gap_complete(n):
    _, dec = setup("complete", n=n)
    assert sensitive_existence_gap(dec) == pytest.approx((1 - 1 / n) * E1, abs=1e-12)


def test_existence_gap_rerandomize_and_two_state():
    _, dec = setup("hypercube_rerandomize", n=8)
    assert sensitive_existence_gap(dec) == pytest.approx(((1 + E1) / 2) ** 8 - 2**-8, abs=1e-12)
    two = Chain.from_generator(("a", "b"), [[-0.5, 0.5], [0.5, -0.5]])
    assert sensitive_existence_gap(decompose(two)) == pytest.approx(E1 / 2, abs=1e-14)


@pytest.mark.parametrize("name, params", [("glued_cliques", {"n": 2}), ("star", {"n": 4})])
def test_existence_gap_equals_sum_of_indicator_covariances(name, params):
    chain, dec = setup(name, **params)
    total = sum(
        covariance_at_times(fourier_profile(dec, np.eye(chain.n_states)[w]), dec.relaxation_time)[0]
        for w in range(chain.n_states)
    )
    assert sensitive_existence_gap(dec) == pytest.approx(total, abs=1e-12)
    assert sensitive_existence_gap(dec) == pytest.approx(
        return_probability(dec, dec.relaxation_time) - np.sum(chain.pi**2), abs=1e-12
    )


def test_random_subset_indicator():
    chain = make_family("cycle", n=3)
    with pytest.raises(BadSubsetSize):
        random_subset_indicator(chain, 6, 1)
    with pytest.raises(BadSubsetSize):
        random_subset_indicator(chain, 0, 1)
    one = random_subset_indicator(chain, 1, 5)
    assert one.is_boolean and one.values.sum() == 1
    a = random_subset_indicator(chain, 3, 42)
    b = random_subset_indicator(chain, 3, 42)
    assert np.array_equal(a.values, b.values) and a.values.sum() == 3


def _subset_average(chain, dec, m):
    n = chain.n_states
    covs = []
    for members in itertools.combinations(range(n), m):
        f = np.zeros(n)
        f[list(members)] = 1.0
        covs.append(covariance_at_times(fourier_profile(dec, f), dec.relaxation_time)[0])
    return float(np.mean(covs))


@pytest.mark.parametrize(
    "name, params",
    [("complete", {"n": 4}), ("complete", {"n": 7}), ("cycle", {"n": 3}), ("cycle", {"n": 4}), ("hypercube_walk", {"n": 3}),
     ("slice_exclusion", {"n": 4, "k": 2}), ("hypercube_rerandomize", {"n": 3})],
)
def test_expected_subset_cov_uniform(name, params):
    chain, dec = setup(name, **params)
    for m in range(1, chain.n_states):
        assert expected_random_subset_cov(dec, m) == pytest.approx(_subset_average(chain, dec, m), abs=1e-10)


def test_expected_subset_cov_k4_formula():
    _, dec = setup("complete", n=4)
    p = return_probability(dec, dec.relaxation_time)
    assert expected_random_subset_cov(dec, 2) == pytest.approx((4 / 3) * 0.25 * (p - 0.25), abs=1e-12)
    with pytest.raises(BadSubsetSize):
        expected_random_subset_cov(dec, 4)


@pytest.mark.parametrize("seed", range(5))
def test_expected_subset_cov_nonuniform(seed):
    # The averaging identity also holds for non-uniform pi.
    chain = random_reversible_chain(7, seed)
    dec = decompose(chain)
    for m in range(1, 7):
        assert expected_random_subset_cov(dec, m) == pytest.approx(_subset_average(chain, dec, m), abs=1e-10)


def test_subset_variance_formula_warns_for_nonuniform_pi():
    assert subset_variance_formula(6, 2) == pytest.approx(8 / 36)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        subset_variance_formula(4, 1, np.full(4, 0.25))
    with pytest.warns(UserWarning):
        subset_variance_formula(3, 1, [0.5, 0.25, 0.25])


# -- sharpness ---------------------------------------------------------------


def test_sharpness_examples():
    chain, dec = setup("cycle", n=4)
    prof = fourier_profile(dec, Observable.indicator(chain, ["0", "1", "2", "3"]))
    rep = sharpness_bounds(prof, dec.relaxation_time, 1.0)
    assert rep.cov_upper == pytest.approx(E1, abs=1e-15) and rep.holds
    zero = sharpness_bounds(fourier_profile(dec, np.zeros(8)), 1.0, 1.0)
    assert zero.flip_lower == 0.0
    d = dictator_profile(4)
    rep = sharpness_bounds(d, 10.0, 1.0)
    assert rep.cov_exact == pytest.approx(np.exp(-10) / 4, abs=1e-16)
    assert rep.cov_exact <= rep.cov_upper and rep.holds
    with pytest.raises(NonpositiveAlpha):
        sharpness_bounds(d, 0.0, 1.0)


def test_profile_spectral_measure():
    chain, dec = setup("glued_cliques", n=2)
    prof = fourier_profile(dec, Observable.indicator(chain, ["S0", "S1"]))
    assert prof.spectral_measure.sum() == pytest.approx(1.0, abs=1e-10)
    assert fourier_profile(dec, np.zeros(chain.n_states)).spectral_measure is None
    assert DEFAULT_ALPHAS.size == 25
