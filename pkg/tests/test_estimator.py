import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robust_sysid import (
    ConfigurationError, DistributionSpec, ExcitationDeficiencyError, InsufficientRolloutsError,
    bucket_count, estimate, lemma_diagnostics, ols_bucket, plan_buckets, simulate_dataset,
    single_ols, theorem1_bound, toeplitz_input, true_markov,
)
from robust_sysid.estimator import (
    RegressionBlock, bucket_estimates, min_rollouts_per_bucket, regression_block, toeplitz_stack,
)


def _toeplitz_oracle(u):
    m, T = u.shape
    out = np.zeros((m * T, T))
    for r in range(T):
        for c in range(r, T):
            out[r * m:(r + 1) * m, c] = u[:, c - r]
    return out


@pytest.mark.parametrize("delta, K", [
    (math.exp(-1), 32), (0.5, 23), (0.25, 45), (0.1, 74), (0.05, 96), (0.99, 1),
    (math.exp(-1.02), 33), (math.exp(-2), 64),
])
def test_bucket_count(delta, K):
    assert bucket_count(delta) == K


@given(st.floats(1e-12, 0.999999))
def test_bucket_count_formula(delta):
    x = 32 * math.log(1 / delta)
    K = bucket_count(delta)
    assert K >= 1 and K >= x - 1e-6 and K < x + 1


@pytest.mark.parametrize("delta", [0.0, 1.0, -0.1, 2.0])
def test_bucket_count_rejects(delta):
    with pytest.raises(ConfigurationError):
        bucket_count(delta)


def test_plan_contiguous_and_discard():
    plan = plan_buckets(100, math.exp(-1))
    assert (plan.K, plan.M, plan.discarded) == (32, 3, 4)
    buckets = plan.buckets
    np.testing.assert_array_equal(buckets[0], [0, 1, 2])
    np.testing.assert_array_equal(buckets[-1], [93, 94, 95])
    assert np.all(plan.assignment[96:] == -1)


def test_plan_shuffle_is_a_partition():
    plan = plan_buckets(70, 0.5, shuffle_seed=3)
    used = np.concatenate(plan.buckets)
    assert len(used) == len(set(used)) == plan.K * plan.M


def test_plan_too_few_rollouts():
    with pytest.raises(InsufficientRolloutsError) as exc:
        plan_buckets(10, 0.05)
    assert exc.value.required == 96


@given(st.integers(1, 4), st.integers(1, 6), st.integers(0, 2**31))
def test_toeplitz_matches_oracle(m, T, seed):
    u = np.random.default_rng(seed).standard_normal((m, T))
    np.testing.assert_array_equal(toeplitz_input(u), _toeplitz_oracle(u))


def test_ols_exact_on_noiseless(sys3, gauss):
    data = simulate_dataset(sys3, 20, 4, gauss, None, None, 1, noiseless=True)
    g = ols_bucket(regression_block(data))
    np.testing.assert_allclose(g, true_markov(sys3, 4), atol=1e-10)
    np.testing.assert_allclose(single_ols(data), true_markov(sys3, 4), atol=1e-10)


def test_deficient_bucket_raise_and_pinv():
    # one rollout, m*T = 4 regressors but only T = 2 columns
    U = toeplitz_input(np.ones((2, 2)))
    block = RegressionBlock(np.ones((1, 2)), U)
    with pytest.raises(ExcitationDeficiencyError):
        ols_bucket(block)
    g = ols_bucket(block, on_deficient="pinv")
    np.testing.assert_allclose(g, block.Y @ np.linalg.pinv(U), atol=1e-12)


def test_zero_gram_raises():
    block = RegressionBlock(np.zeros((1, 3)), np.zeros((2, 3)))
    with pytest.raises(ExcitationDeficiencyError):
        ols_bucket(block)


def test_bad_deficient_mode():
    with pytest.raises(ConfigurationError):
        ols_bucket(RegressionBlock(np.ones((1, 1)), np.ones((1, 1))), on_deficient="skip")


def test_bucket_estimates_match_per_bucket_ols(sys3, gauss):
    data = simulate_dataset(sys3, 240, 3, gauss, gauss, gauss, 2)
    plan = plan_buckets(240, 0.5)
    fits = bucket_estimates(data, plan.buckets)
    for j, idx in enumerate(plan.buckets):
        np.testing.assert_allclose(
            fits.estimates[j], ols_bucket(regression_block(data.subset(idx))), atol=1e-10)


def test_boosted_noiseless_exact(sys3, gauss):
    data = simulate_dataset(sys3, 320, 5, gauss, None, None, 0, noiseless=True)
    est = estimate(data, math.exp(-1))
    assert np.linalg.norm(est.g_hat - true_markov(sys3, 5), 2) <= 1e-8
    diag = est.diagnostics()
    assert diag["K"] == 32 and diag["M"] == 10 and diag["deficient_buckets"] == 0


def test_fault_injection_minority_outliers(sys3, gauss):
    # corrupt 8 of the 33 buckets; the median stays near the clean answer
    delta = math.exp(-1.02)
    K = bucket_count(delta)
    assert K == 33
    T = 3
    data = simulate_dataset(sys3, K * 30, T, gauss, gauss, gauss, 4)
    clean = estimate(data, delta)
    outputs = data.outputs.copy()
    for j in range(8):
        outputs[j * 30:(j + 1) * 30] += 1e6
    from robust_sysid import Dataset
    bad = estimate(Dataset(data.inputs, outputs), delta)
    G = true_markov(sys3, T)
    assert len(bad.per_bucket) == K
    assert np.linalg.norm(bad.g_hat - G, 2) < 3 * np.linalg.norm(clean.g_hat - G, 2) + 0.1
    assert np.linalg.norm(single_ols(Dataset(data.inputs, outputs)) - G, 2) > 1e3


def test_delta_near_one_equals_single_ols(sys3, gauss):
    data = simulate_dataset(sys3, 50, 4, gauss, gauss, gauss, 5)
    est = estimate(data, 0.99)
    assert est.plan.K == 1
    np.testing.assert_array_equal(est.g_hat, single_ols(data))


def test_strict_mode(sys3, gauss):
    data = simulate_dataset(sys3, 64, 2, gauss, gauss, gauss, 0)
    with pytest.raises(ConfigurationError):
        estimate(data, 0.5, strict=True)
    with pytest.raises(InsufficientRolloutsError):
        estimate(data, 0.5, strict=True, input_kurtosis=3.0)


def test_permissive_shortfall_warns(sys3, gauss, caplog):
    data = simulate_dataset(sys3, 64, 2, gauss, gauss, gauss, 0)
    with caplog.at_level(logging.WARNING, logger="robust_sysid"):
        estimate(data, 0.5, input_kurtosis=3.0)
    assert any("excitation threshold" in r.message for r in caplog.records)


def test_min_rollouts_per_bucket():
    assert min_rollouts_per_bucket(1, 2, 4.0) == 1536
    assert min_rollouts_per_bucket(2, 5, 3.0, q=0.125) == 28800


def test_bound_formula():
    # hand evaluation: n=m=p=1, T=1, ||F||=0 leaves sigma_v/sigma_u sqrt(ln(1/delta)/N)
    assert theorem1_bound((1, 1, 1), 1, 0.0, 1.0, 1.0, 0.0, math.exp(-4), 1) == pytest.approx(2.0)
    n, m, p, T, sw, sv, su, fn, d, N = 3, 2, 2, 5, 0.5, 0.3, 1.5, 2.2, 0.1, 400
    expect = ((sv * T**1.5 * math.sqrt(p * m) + sw * fn * T**2.5 * math.sqrt(n * m)) / su
              * math.sqrt(p * math.log(1 / d) / N))
    assert theorem1_bound((n, m, p), T, sw, sv, su, fn, d, N) == pytest.approx(expect, rel=1e-14)
    assert theorem1_bound((n, m, p), T, sw, sv, su, fn, d, 4 * N) == pytest.approx(expect / 2)


@settings(max_examples=30)
@given(st.integers(1, 10**6), st.floats(0.01, 0.99))
def test_bound_scaling(N, delta):
    b1 = theorem1_bound((3, 2, 2), 5, 1.0, 1.0, 1.0, 1.0, delta, N)
    assert theorem1_bound((3, 2, 2), 5, 2.0, 2.0, 1.0, 1.0, delta, N) == pytest.approx(2 * b1)
    assert theorem1_bound((3, 2, 2), 5, 1.0, 1.0, 2.0, 1.0, delta, N) == pytest.approx(b1 / 2)


def test_lemma_diagnostics_needs_white_box(sys3, gauss):
    data = simulate_dataset(sys3, 10, 2, gauss, gauss, gauss, 0)
    with pytest.raises(ConfigurationError):
        lemma_diagnostics(data, 1, 1, 1)


def test_lemma_diagnostics_values(sys3, gauss):
    data = simulate_dataset(sys3, 50, 2, gauss, gauss, gauss, 0, record_noise=True)
    d = lemma_diagnostics(data, 1.0, 1.0, 1.0)
    U = toeplitz_stack(data.inputs)
    gram = sum(u @ u.T for u in U)
    assert d.lambda_min == pytest.approx(np.linalg.eigvalsh(gram)[0])
    assert d.lambda_bound == 25.0
    assert d.process_rhs == pytest.approx(3 * 8 * 32 * 50 * 3 * 2)
    VU = sum(v @ u.T for v, u in zip(data.measurement_noise, U))
    assert d.measurement_lhs == pytest.approx(np.sum(VU**2))


def test_cross_term_second_moment():
    # E||V U^T||_F^2 adds up over rollouts and over independent Toeplitz entries
    from robust_sysid import default_system
    sys = default_system(3, 1, 2)
    u = DistributionSpec.three_point(0.125)
    g = DistributionSpec.gaussian()
    M, T, reps = 40, 2, 400
    vals = []
    for r in range(reps):
        data = simulate_dataset(sys, M, T, u, g, g, 9, trial=r, record_noise=True)
        vals.append(lemma_diagnostics(data, 1, 1, 1).measurement_lhs)
    # lag r pairs with T - r time steps, for each of the p*m channel pairs
    expected = M * 2 * 1 * T * (T + 1) / 2
    assert np.mean(vals) == pytest.approx(expected, rel=0.1)
