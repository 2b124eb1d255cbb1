import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from robust_sysid import ConfigurationError, DistributionSpec, kurtosis_ratio, sample_vector
from robust_sysid.distributions import stream_seed

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


def _t_fourth_moment_by_quadrature(nu, scale):
    # independent oracle: integrate x^4 against the rescaled Student-t density
    c = math.sqrt((nu - 2) / nu) * scale
    x = np.linspace(-4000.0, 4000.0, 4_000_001)
    logpdf = (math.lgamma((nu + 1) / 2) - math.lgamma(nu / 2) - 0.5 * math.log(nu * math.pi)
              - (nu + 1) / 2 * np.log1p(x**2 / nu))
    return _trapezoid((c * x) ** 4 * np.exp(logpdf), x)


def test_three_point_support_and_probabilities():
    spec = DistributionSpec.three_point(0.125, 1.0)
    # 2 p a^2 = 1 with p = 1/8 gives a = 2
    assert spec.atom == pytest.approx(2.0)
    x = sample_vector(spec, 400_000, 3)
    values, counts = np.unique(x, return_counts=True)
    np.testing.assert_array_equal(values, [-2.0, 0.0, 2.0])
    np.testing.assert_allclose(counts / x.size, [0.125, 0.75, 0.125], atol=0.003)


def test_zero_scale_rejected():
    with pytest.raises(ConfigurationError):
        DistributionSpec.gaussian(0.0)


@pytest.mark.parametrize("kind, param", [
    ("student_t", 2.0), ("student_t", None), ("three_point", 0.0),
    ("three_point", 0.6), ("cauchy", None),
])
def test_invalid_specs_rejected(kind, param):
    with pytest.raises(ConfigurationError):
        DistributionSpec(kind, 1.0, param)


def test_student_t_heavy_tail_moments():
    x = sample_vector(DistributionSpec.student_t(2.5, 1.0), 10**6, 0)
    assert abs(x.mean()) <= 5 * 1.0 / math.sqrt(x.size)
    assert x.var() == pytest.approx(1.0, rel=0.10)


@pytest.mark.parametrize("spec, tol", [
    (DistributionSpec.gaussian(1.7), 0.05),
    (DistributionSpec.three_point(0.125, 0.6), 0.05),
    (DistributionSpec.three_point(0.5, 2.0), 0.05),
    (DistributionSpec.student_t(2.5, 1.3), 0.15),
])
def test_empirical_variance(spec, tol):
    x = sample_vector(spec, 10**6, 7)
    assert x.var() == pytest.approx(spec.scale**2, rel=tol)


def test_vector_coordinates_are_iid():
    spec = DistributionSpec.three_point(0.25, 1.5)
    X = spec.sample(np.random.default_rng(2), (200_000, 4))
    cov = X.T @ X / len(X)
    np.testing.assert_allclose(cov, spec.variance * np.eye(4), atol=0.05 * spec.variance)


@pytest.mark.parametrize("spec, expected", [
    (DistributionSpec.gaussian(2.0), 3.0),
    (DistributionSpec.three_point(0.125), 4.0),
    (DistributionSpec.three_point(0.5), 1.0),
    (DistributionSpec.student_t(2.5), None),
    (DistributionSpec.student_t(4.0), None),
])
def test_kurtosis_ratio(spec, expected):
    got = kurtosis_ratio(spec)
    if expected is None:
        assert got is None
    else:
        assert got == pytest.approx(expected)


@pytest.mark.parametrize("nu, scale", [(10.0, 1.0), (6.5, 0.7)])
def test_student_t_fourth_moment_matches_quadrature(nu, scale):
    spec = DistributionSpec.student_t(nu, scale)
    assert spec.fourth_moment == pytest.approx(_t_fourth_moment_by_quadrature(nu, scale), rel=1e-4)


def test_student_t_variance_matches_quadrature():
    nu = 7.0
    c = math.sqrt((nu - 2) / nu)
    x = np.linspace(-2000.0, 2000.0, 2_000_001)
    logpdf = (math.lgamma((nu + 1) / 2) - math.lgamma(nu / 2) - 0.5 * math.log(nu * math.pi)
              - (nu + 1) / 2 * np.log1p(x**2 / nu))
    assert _trapezoid((c * x) ** 2 * np.exp(logpdf), x) == pytest.approx(1.0, rel=1e-6)


specs = st.one_of(
    st.builds(DistributionSpec.gaussian, st.floats(0.01, 100)),
    st.builds(DistributionSpec.student_t, st.floats(2.01, 200), st.floats(0.01, 100)),
    st.builds(DistributionSpec.three_point, st.floats(1e-4, 0.5), st.floats(0.01, 100)),
)


@given(specs)
def test_kurtosis_at_least_one(spec):
    k = kurtosis_ratio(spec)
    if k is not None:
        assert k >= 1.0 - 1e-12


@given(specs, st.integers(0, 2**32 - 1))
def test_same_state_same_stream(spec, seed):
    a = sample_vector(spec, 16, seed)
    b = sample_vector(spec, 16, seed)
    np.testing.assert_array_equal(a, b)


def test_parse_round_trip():
    for text in ("gaussian", "student_t:2.5", "three_point:0.125"):
        spec = DistributionSpec.parse(text, 0.5)
        assert DistributionSpec.parse(spec.to_text(), 0.5) == spec
    with pytest.raises(ConfigurationError):
        DistributionSpec.parse("student_t")
    with pytest.raises(ConfigurationError):
        DistributionSpec.parse("three_point:abc")


def test_stream_seed_keys_are_distinct():
    a = np.random.default_rng(stream_seed(5, 0, 1)).random(4)
    b = np.random.default_rng(stream_seed(5, 1, 0)).random(4)
    c = np.random.default_rng(stream_seed(5, 0, 1)).random(4)
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(a, c)


def test_bad_dim():
    with pytest.raises(ConfigurationError):
        sample_vector(DistributionSpec.gaussian(), 0, 1)
