import math

import numpy as np
import pytest

from robust_sysid import (
    ConfigurationError, DistributionSpec, OrderTooHighError, default_system, estimate, ho_kalman,
    realization_error, simulate_dataset, true_markov,
)
from robust_sysid.realization import default_split, hankel, hausdorff
from robust_sysid.lti import markov_blocks


def test_hankel_layout():
    blocks = np.arange(6.0).reshape(6, 1, 1)
    H = hankel(blocks, 2, 3, offset=1)
    np.testing.assert_array_equal(H, [[1, 2, 3], [2, 3, 4]])


def test_default_split():
    assert default_split(9) == (4, 4)
    assert default_split(6) == (2, 2)


def test_round_trip_default_system(sys3):
    G = true_markov(sys3, 9)
    res = ho_kalman(G, 3, 2)
    np.testing.assert_allclose(res.markov(9), G, atol=1e-6)
    err = realization_error(sys3, res, 9)
    assert err["markov_err"] <= 1e-6 and err["eig_err"] <= 1e-6


def test_scalar_hand_example(scalar_sys):
    # Hankel [[1, .5], [.5, .25]] has rank one; balanced factors are sqrt(1.25) scaled
    G = true_markov(scalar_sys, 5)
    res = ho_kalman(G, 1, 1)
    assert res.A_hat[0, 0] == pytest.approx(0.5, abs=1e-12)
    assert res.B_hat[0, 0] * res.C_hat[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert abs(res.B_hat[0, 0]) == pytest.approx(abs(res.C_hat[0, 0]), abs=1e-12)
    assert res.D_hat[0, 0] == 0.0
    np.testing.assert_allclose(res.hankel_singular_values, [1.25, 0.0], atol=1e-12)


def test_similarity_invariance(sys3):
    S = np.array([[1.0, 2, 0], [0, 1, 0], [3, 0, 1]])
    a = ho_kalman(true_markov(sys3, 9), 3, 2)
    b = ho_kalman(true_markov(sys3.similar(S), 9), 3, 2)
    np.testing.assert_allclose(a.markov(12), b.markov(12), atol=1e-8)


def test_order_errors(sys3, scalar_sys):
    with pytest.raises(OrderTooHighError):
        ho_kalman(true_markov(scalar_sys, 7), 2, 1)
    with pytest.raises(ConfigurationError):
        ho_kalman(true_markov(sys3, 5), 5, 2)
    with pytest.raises(ConfigurationError):
        ho_kalman(true_markov(sys3, 5), 2, 2, T1=3, T2=3)
    with pytest.raises(ConfigurationError):
        ho_kalman(true_markov(sys3, 5), 2, 3)


def test_hausdorff():
    assert hausdorff([0, 1], [0, 1]) == 0.0
    assert hausdorff([0], [0, 3]) == 3.0
    assert hausdorff([1j], [0]) == pytest.approx(1.0)


def test_realization_from_boosted_estimate(gauss):
    # error of the realized Markov matrix stays within a small multiple of the estimate error
    sys = default_system()
    T = 9
    noise = DistributionSpec.gaussian(0.1)
    data = simulate_dataset(sys, 3200, T, gauss, noise, noise, 3)
    est = estimate(data, math.exp(-1))
    G = true_markov(sys, T)
    est_err = np.linalg.norm(est.g_hat - G, 2)
    res = ho_kalman(est.g_hat, 3, 2)
    real_err = realization_error(sys, res, T)["markov_err"]
    assert real_err <= 5 * est_err


def test_blocks_helper_rejects_bad_width():
    with pytest.raises(ConfigurationError):
        markov_blocks(np.zeros((2, 5)), 2)
