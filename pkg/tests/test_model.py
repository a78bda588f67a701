import numpy as np
import pytest

from ad1n import (
    ModelParams,
    Regime,
    classify,
    drift,
    drift_design_row,
    stack_drift_fields,
    stack_tau,
    unstack_tau,
    validate,
)
from ad1n.errors import (
    ComplexSpectrumError,
    DimensionMismatchError,
    NonDiagonalizableError,
)


def _params(n=1, a=2.0, b=1.0, m=None, kappa=None, theta=None, rho=None):
    m = [0.5] * n if m is None else m
    kappa = [0.2] * n if kappa is None else kappa
    theta = np.eye(n) * 2.0 if theta is None else theta
    if rho is None:
        rho = np.tril(np.full((n + 1, n + 1), 0.1))
        np.fill_diagonal(rho, 1.0)
    return ModelParams(n=n, a=a, b=b, m=m, kappa=kappa, theta=theta, rho=rho)


class TestValidate:
    def test_zero_rho_diagonal_is_flagged(self):
        p = _params(rho=[[1.0, 0.0], [0.3, 0.0]])
        report = validate(p)
        assert not report.ok
        assert any("rho diagonal" in v for v in report.violations)

    def test_admissible_point_passes(self):
        p = _params(n=1, a=2, b=1, theta=[[3.0]], rho=[[1, 0], [0.3, 0.95]])
        assert validate(p).ok

    def test_jordan_block_theta_is_flagged(self):
        p = _params(n=2, theta=[[0.0, 1.0], [0.0, 0.0]],
                    rho=np.eye(3))
        report = validate(p)
        assert any("not diagonalizable" in v for v in report.violations)

    def test_negative_a_is_flagged(self):
        report = validate(_params(a=-1.0))
        assert any("a must be" in v for v in report.violations)

    def test_upper_triangular_rho_entry_is_flagged(self):
        report = validate(_params(rho=[[1.0, 0.2], [0.3, 0.9]]))
        assert any("lower triangular" in v for v in report.violations)

    def test_sigma_derived_positive(self):
        p = _params()
        assert np.all(p.sigma > 0)


class TestClassify:
    def test_subcritical(self):
        p = _params(n=2, b=1.0, theta=np.eye(2), rho=np.eye(3))
        assert classify(p).regime == Regime.SUBCRITICAL

    def test_critical_zero_matrix(self):
        p = _params(n=2, b=0.0, theta=np.zeros((2, 2)), rho=np.eye(3))
        assert classify(p).regime == Regime.CRITICAL

    def test_critical_b_zero_theta_pd(self):
        p = _params(n=1, b=0.0, theta=[[1.5]])
        assert classify(p).regime == Regime.CRITICAL

    def test_supercritical(self):
        p = _params(n=2, b=-0.5, theta=np.diag([-1.0, -2.0]), rho=np.eye(3))
        cls = classify(p)
        assert cls.regime == Regime.SUPERCRITICAL
        assert np.all(np.diff(cls.eig_theta) >= 0)  # ascending

    def test_supercritical_negative_b_positive_theta(self):
        p = _params(n=1, b=-0.1, theta=[[2.0]])
        assert classify(p).regime == Regime.SUPERCRITICAL

    def test_mixed_spectrum_unsupported(self):
        p = _params(n=2, b=1.0, theta=np.diag([1.0, -1.0]), rho=np.eye(3))
        assert classify(p).regime == Regime.UNSUPPORTED

    def test_complex_spectrum_raises(self):
        p = _params(n=2, theta=[[0.0, -1.0], [1.0, 0.0]], rho=np.eye(3))
        with pytest.raises(ComplexSpectrumError):
            classify(p)

    def test_jordan_block_raises(self):
        p = _params(n=2, theta=[[1.0, 1.0], [0.0, 1.0]], rho=np.eye(3))
        with pytest.raises(NonDiagonalizableError):
            classify(p)

    def test_similarity_invariance(self):
        rng = np.random.default_rng(7)
        theta = np.diag([0.8, 2.0, 3.5])
        base = _params(n=3, b=0.7, theta=theta, rho=np.eye(4))
        regime = classify(base).regime
        for _ in range(5):
            S = np.eye(3) + rng.uniform(-0.3, 0.3, size=(3, 3))
            conj = S @ theta @ np.linalg.inv(S)
            p = _params(n=3, b=0.7, theta=conj, rho=np.eye(4))
            assert classify(p).regime == regime


class TestTauStacking:
    def test_n1_flat_case(self):
        p = _params(n=1, a=2, b=1, m=[0.5], kappa=[0.2], theta=[[3.0]])
        assert np.array_equal(stack_tau(p), [2, 1, 0.5, 0.2, 3.0])

    def test_hand_enumerated_order_n2(self):
        # hand table for n = 2: (a, b, m1, k1, th11, th12, m2, k2, th21, th22)
        tau = stack_drift_fields(
            10.0, 20.0, [1.0, 2.0], [3.0, 4.0], [[11.0, 12.0], [21.0, 22.0]]
        )
        expected = [10, 20, 1, 3, 11, 12, 2, 4, 21, 22]
        assert np.array_equal(tau, expected)
        assert tau[8] == 21.0  # theta_21 sits at 0-based index 8

    def test_round_trip_random_n3(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            a, b = rng.normal(size=2)
            m, kappa = rng.normal(size=3), rng.normal(size=3)
            theta = rng.normal(size=(3, 3))
            tau = stack_drift_fields(a, b, m, kappa, theta)
            a2, b2, m2, k2, th2 = unstack_tau(tau, 3)
            assert a2 == a and b2 == b
            assert np.array_equal(m2, m)
            assert np.array_equal(k2, kappa)
            assert np.array_equal(th2, theta)

    def test_unstack_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            unstack_tau(np.zeros(6), 2)


class TestDriftDesign:
    def test_n1_expansion(self):
        p = _params(n=1, a=2, b=1, m=[0.5], kappa=[0.2], theta=[[3.0]])
        lam = drift_design_row(0.7, [0.4])
        got = lam @ stack_tau(p)
        want = [2 - 1 * 0.7, 0.5 - 0.2 * 0.7 - 3.0 * 0.4]
        assert np.allclose(got, want, atol=1e-15)

    def test_zero_state(self):
        p = _params(n=2, a=1.5, m=[0.3, -0.2], rho=np.eye(3))
        lam = drift_design_row(0.0, [0.0, 0.0])
        assert np.allclose(lam @ stack_tau(p), [1.5, 0.3, -0.2])

    def test_matches_direct_drift_n2(self):
        rng = np.random.default_rng(11)
        p = _params(
            n=2,
            m=rng.normal(size=2),
            kappa=rng.normal(size=2),
            theta=rng.normal(size=(2, 2)) + 2 * np.eye(2),
            rho=np.eye(3),
        )
        for _ in range(20):
            y = float(rng.uniform(0, 3))
            x = rng.normal(size=2)
            lam = drift_design_row(y, x)
            assert np.max(np.abs(lam @ stack_tau(p) - drift(p, y, x))) < 1e-14


def test_params_arrays_are_immutable():
    p = _params()
    with pytest.raises(ValueError):
        p.theta[0, 0] = 5.0


def test_digest_changes_with_parameters():
    p1 = _params(a=2.0)
    p2 = _params(a=2.0000001)
    assert p1.digest() == _params(a=2.0).digest()
    assert p1.digest() != p2.digest()
