import math

import numpy as np
import pytest

from torfrech.errors import (
    DegenerateVarianceError,
    EmptyNeighborhoodError,
    SingularDesignError,
)
from torfrech.frechet import (
    Dataset,
    LOCAL_CONSTANT,
    LOCAL_LINEAR,
    QueryBatch,
    local_constant_estimate,
    local_linear_estimate,
    local_linear_weights,
    local_moments,
    normalize_estimator,
)
from torfrech.kernels import BandwidthVector, KernelFamily
from torfrech.metric import ScalarSpace, SphereSpace, frechet_mean_oracle
from torfrech.torus import TorusPoint

VM = KernelFamily.VON_MISES
SCALAR = ScalarSpace(-100.0, 100.0)


def fsum_moments(theta, kvals):
    """Independent recomputation of the three moments with compensated sums."""
    n, d = theta.shape
    mu0 = math.fsum(kvals) / n
    mu1 = np.array([math.fsum(kvals[i] * theta[i, a] for i in range(n)) / n
                    for a in range(d)])
    mu2 = np.array([[math.fsum(kvals[i] * theta[i, a] * theta[i, b] for i in range(n)) / n
                     for b in range(d)] for a in range(d)])
    return mu0, mu1, mu2


def wls_hat_row(theta, kvals, n):
    """First row of the weighted-least-squares hat map for regressors (1, theta)."""
    design = np.column_stack([np.ones(theta.shape[0]), theta])
    normal = design.T @ (kvals[:, None] * design)
    return np.linalg.solve(normal, design.T * kvals)[0] * n


def scalar_dataset(rng, n, d, scale=1.0):
    angles = rng.uniform(-math.pi, math.pi, size=(n, d))
    values = rng.normal(scale=scale, size=n)
    return Dataset(SCALAR, angles, values)


def test_normalize_estimator():
    assert normalize_estimator("lc") == LOCAL_CONSTANT
    assert normalize_estimator("Local_Linear") == LOCAL_LINEAR
    with pytest.raises(ValueError):
        normalize_estimator("cubic")


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(SCALAR, np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(ValueError):
        Dataset(SCALAR, np.zeros((3, 2)), np.zeros(2))
    data = Dataset.from_payloads(SCALAR, [TorusPoint([0.1, 0.2])], [1.0])
    assert data.n == 1 and data.dim == 2


def test_local_moments_single_centered_point():
    data = Dataset(SCALAR, np.array([[0.3, -0.7]]), np.array([2.0]))
    m = local_moments(data, TorusPoint([0.3, -0.7]), BandwidthVector([0.5, 0.5]), VM)
    assert m.mu0 == pytest.approx(1.0)
    assert np.allclose(m.mu1, 0.0)
    assert np.allclose(m.mu2, 0.0)
    assert math.isinf(m.condition_number)
    assert math.isnan(m.sigma)


def test_local_moments_symmetric_design():
    t = 0.8
    data = Dataset(SCALAR, np.array([[t], [-t]]), np.array([1.0, 2.0]))
    m = local_moments(data, TorusPoint([0.0]), BandwidthVector([0.6]), VM)
    assert np.allclose(m.mu1, 0.0, atol=1e-15)
    assert m.mu0 == pytest.approx(float(np.exp(-(1 - math.cos(t)) / 0.36)))


def test_local_moments_match_compensated_reimplementation():
    angles = np.array([[0.1, -0.4], [1.2, 2.9], [-2.0, 0.3], [2.8, -1.7], [0.6, 0.6]])
    data = Dataset(SCALAR, angles, np.arange(5.0))
    x = TorusPoint([0.4, -0.2])
    h = BandwidthVector([0.3, 0.3])
    m = local_moments(data, x, h, VM)
    mu0, mu1, mu2 = fsum_moments(m.theta, m.kernel_weights)
    assert m.mu0 == pytest.approx(mu0, rel=1e-14)
    assert np.allclose(m.mu1, mu1, rtol=1e-13, atol=1e-17)
    assert np.allclose(m.mu2, mu2, rtol=1e-13, atol=1e-17)
    assert np.allclose(m.mu2, m.mu2.T)
    # sigma consistency with its definition
    expected_sigma = mu0 - mu1 @ np.linalg.solve(mu2, mu1)
    assert m.sigma == pytest.approx(expected_sigma, rel=1e-10)


def test_local_constant_matches_nadaraya_watson():
    rng = np.random.default_rng(20)
    for _ in range(20):
        data = scalar_dataset(rng, 15, 2)
        x = TorusPoint(rng.uniform(-math.pi, math.pi, size=2))
        h = BandwidthVector(rng.uniform(0.3, 1.0, size=2))
        fit = local_constant_estimate(data, x, h, VM)
        m = local_moments(data, x, h, VM)
        oracle = np.dot(m.kernel_weights, data.responses) / m.kernel_weights.sum()
        assert fit.estimate == pytest.approx(oracle, abs=1e-12)
        assert np.all(fit.weights >= 0.0)
        assert fit.weights.mean() == pytest.approx(1.0, abs=1e-10)


def test_local_constant_constant_responses():
    data = Dataset(SCALAR, np.array([[0.0], [1.0], [2.0]]), np.full(3, 7.25))
    fit = local_constant_estimate(data, TorusPoint([0.5]), BandwidthVector([0.4]), VM)
    assert fit.estimate == pytest.approx(7.25, abs=1e-12)


def test_local_constant_empty_neighborhood():
    data = Dataset(SCALAR, np.array([[0.0], [0.1]]), np.array([1.0, 2.0]))
    with pytest.raises(EmptyNeighborhoodError):
        local_constant_estimate(data, TorusPoint([math.pi]), BandwidthVector([0.1]),
                                KernelFamily.UNIFORM)


def test_local_constant_sphere_against_oracle():
    rng = np.random.default_rng(21)
    sphere = SphereSpace(2)
    base = rng.standard_normal(3)
    base /= np.linalg.norm(base)
    payloads = []
    for _ in range(20):
        v = base + 0.3 * rng.standard_normal(3)
        payloads.append(v / np.linalg.norm(v))
    angles = rng.uniform(-math.pi, math.pi, size=(20, 2))
    data = Dataset.from_payloads(sphere, [TorusPoint(a) for a in angles], payloads)
    x = TorusPoint(angles[0])
    h = BandwidthVector([0.8, 0.8])
    fit = local_constant_estimate(data, x, h, VM, rng=np.random.default_rng(5))
    oracle = frechet_mean_oracle(sphere, payloads, fit.weights, math.pi / 180.0)
    obj_fit = sphere.objective(data.responses, fit.weights, fit.estimate)
    obj_oracle = sphere.objective(data.responses, fit.weights, oracle)
    bound = 2.0 * math.pi * np.abs(fit.weights).sum() * 2.0 * (math.pi / 180.0)
    assert obj_oracle - obj_fit >= -1e-6 * max(1.0, obj_oracle)
    assert obj_oracle - obj_fit <= bound


def test_local_linear_weight_identities():
    rng = np.random.default_rng(22)
    for d in (1, 2):
        for _ in range(50):
            n = int(rng.integers(6, 30))
            data = scalar_dataset(rng, n, d)
            x = TorusPoint(rng.uniform(-math.pi, math.pi, size=d))
            h = BandwidthVector(rng.uniform(0.2, 1.2, size=d))
            m = local_moments(data, x, h, VM)
            try:
                w = local_linear_weights(m)
            except (SingularDesignError, DegenerateVarianceError):
                continue
            assert abs(w.mean() - 1.0) <= 1e-10
            assert np.linalg.norm((w[:, None] * m.theta).mean(axis=0)) <= 1e-10


def test_local_linear_symmetric_design_collapses_to_local_constant():
    t = 1.1
    data = Dataset(SCALAR, np.array([[t], [-t]]), np.array([3.0, 5.0]))
    m = local_moments(data, TorusPoint([0.0]), BandwidthVector([0.7]), VM)
    assert np.allclose(m.mu1, 0.0, atol=1e-16)
    w = local_linear_weights(m)
    assert np.allclose(w, m.kernel_weights / m.mu0, atol=1e-12)
    fit_ll = local_linear_estimate(data, TorusPoint([0.0]), BandwidthVector([0.7]), VM)
    fit_lc = local_constant_estimate(data, TorusPoint([0.0]), BandwidthVector([0.7]), VM)
    assert fit_ll.estimate == pytest.approx(fit_lc.estimate, abs=1e-12)


def test_local_linear_single_point_singular():
    data = Dataset(SCALAR, np.array([[0.2, 0.3]]), np.array([1.0]))
    m = local_moments(data, TorusPoint([0.0, 0.0]), BandwidthVector([0.5, 0.5]), VM)
    with pytest.raises(SingularDesignError):
        local_linear_weights(m)
    with pytest.raises(SingularDesignError):
        local_linear_estimate(data, TorusPoint([0.0, 0.0]), BandwidthVector([0.5, 0.5]), VM)


def test_local_linear_weights_match_wls_hat_row():
    rng = np.random.default_rng(23)
    angles = np.array([[-2.5], [-1.4], [-0.3], [0.5], [1.6], [2.7]])
    data = Dataset(SCALAR, angles, rng.normal(size=6))
    x = TorusPoint([0.2])
    h = BandwidthVector([0.4])
    m = local_moments(data, x, h, VM)
    w = local_linear_weights(m)
    expected = wls_hat_row(m.theta, m.kernel_weights, data.n)
    assert np.allclose(w, expected, rtol=1e-9, atol=1e-12)


def test_local_linear_reproduces_affine_data():
    rng = np.random.default_rng(24)
    for _ in range(10):
        n = 25
        angles = rng.uniform(-1.0, 1.0, size=(n, 2))
        x = TorusPoint([0.0, 0.0])
        coef = rng.normal(size=3)
        values = coef[0] + angles @ coef[1:]
        data = Dataset(SCALAR, angles, values)
        fit = local_linear_estimate(data, x, BandwidthVector([0.5, 0.5]), VM)
        assert fit.estimate == pytest.approx(coef[0], abs=1e-8)


def test_local_linear_constant_responses():
    rng = np.random.default_rng(25)
    angles = rng.uniform(-math.pi, math.pi, size=(12, 2))
    data = Dataset(SCALAR, angles, np.full(12, -3.5))
    fit = local_linear_estimate(data, TorusPoint([0.3, 0.4]),
                                BandwidthVector([0.6, 0.6]), VM)
    assert fit.estimate == pytest.approx(-3.5, abs=1e-10)


def test_local_linear_matches_direct_wls():
    rng = np.random.default_rng(26)
    for _ in range(20):
        data = scalar_dataset(rng, 10, 2)
        x = TorusPoint(rng.uniform(-math.pi, math.pi, size=2))
        h = BandwidthVector([0.5, 0.5])
        m = local_moments(data, x, h, VM)
        if m.condition_number > 1e10:
            continue
        fit = local_linear_estimate(data, x, h, VM)
        design = np.column_stack([np.ones(10), m.theta])
        normal = design.T @ (m.kernel_weights[:, None] * design)
        rhs = design.T @ (m.kernel_weights * data.responses)
        alpha = np.linalg.solve(normal, rhs)[0]
        assert fit.estimate == pytest.approx(alpha, abs=1e-8)


def test_degenerate_variance_error():
    m = local_moments(
        Dataset(SCALAR, np.array([[0.4], [-0.4], [0.0]]), np.zeros(3)),
        TorusPoint([0.0]), BandwidthVector([0.5]), VM)
    m.sigma = -1.0
    m.mu0 = float(m.mu1 @ np.linalg.solve(m.mu2, m.mu1)) - 1.0
    with pytest.raises(DegenerateVarianceError):
        local_linear_weights(m)


def test_shift_equivariance_of_estimates():
    rng = np.random.default_rng(27)
    for _ in range(25):
        n = 12
        data = scalar_dataset(rng, n, 2)
        x = TorusPoint(rng.uniform(-math.pi, math.pi, size=2))
        h = BandwidthVector(rng.uniform(0.4, 0.9, size=2))
        delta = rng.uniform(-math.pi, math.pi, size=2)
        shifted = Dataset(SCALAR, data.angles + delta, data.responses)
        xs = TorusPoint(x.angles + delta)
        for fitter in (local_constant_estimate, local_linear_estimate):
            try:
                fit0 = fitter(data, x, h, VM)
                fit1 = fitter(shifted, xs, h, VM)
            except SingularDesignError:
                continue
            assert np.allclose(fit0.weights, fit1.weights, atol=1e-10)
            assert fit0.estimate == pytest.approx(fit1.estimate, abs=1e-9)


def test_determinism_bitwise_weights():
    rng = np.random.default_rng(28)
    data = scalar_dataset(rng, 20, 2)
    x = TorusPoint([0.1, -0.2])
    h = BandwidthVector([0.5, 0.7])
    a = local_linear_estimate(data, x, h, VM)
    b = local_linear_estimate(data, x, h, VM)
    assert np.array_equal(a.weights, b.weights)
    assert a.estimate == b.estimate


def test_batch_matches_single_query_path():
    rng = np.random.default_rng(29)
    data = scalar_dataset(rng, 18, 2)
    queries = rng.uniform(-math.pi, math.pi, size=(7, 2))
    h = BandwidthVector([0.6, 0.8])
    batch = QueryBatch(data, queries)
    for estimator in (LOCAL_CONSTANT, LOCAL_LINEAR):
        values, ok, weights, _, _ = batch.estimates(h, VM, estimator)
        for i, q in enumerate(queries):
            fitter = local_constant_estimate if estimator == LOCAL_CONSTANT \
                else local_linear_estimate
            fit = fitter(data, TorusPoint(q), h, VM)
            assert ok[i]
            assert np.allclose(weights[i], fit.weights, atol=1e-12)
            assert values[i] == pytest.approx(fit.estimate, abs=1e-12)
