import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monoflow.builtins import ROTATION_GENERATOR, random_hermitian, random_monotone_path, random_positive, \
    sec4_counterexample
from monoflow.family import compute_D, generator_path, model_linear, model_phase
from monoflow.logarithm import (duhamel_average, duhamel_vs_exact_derivative, generator_monotone_check,
                                lift_log)
from monoflow.oracle import fd_derivative


class TestDuhamel:
    def test_zero_derivative(self):
        a = random_hermitian(np.random.default_rng(0), 3)
        assert np.abs(duhamel_average(a, np.zeros((3, 3)))).max() == 0

    def test_commuting(self):
        np.testing.assert_allclose(duhamel_average(np.diag([1.0, 5.0]), np.diag([2.0, -1.0])),
                                   np.diag([2.0, -1.0]), atol=1e-15)

    @pytest.mark.parametrize("b", [0.0, 0.25, 0.5, 0.75])
    def test_rotation_generator(self, b):
        avg = duhamel_average(ROTATION_GENERATOR, np.diag([-b, 1.0]))
        np.testing.assert_allclose(avg, 0.5 * (1 - b) * np.eye(2), atol=1e-12)

    def test_fixed_order(self):
        avg, order = duhamel_average(ROTATION_GENERATOR, np.diag([-0.5, 1.0]), order=64, return_order=True)
        assert order == 64
        np.testing.assert_allclose(avg, 0.25 * np.eye(2), atol=1e-12)

    def test_adaptive_order_grows_with_spread(self):
        rng = np.random.default_rng(1)
        ap = random_hermitian(rng, 3)
        _, small = duhamel_average(np.diag([0.0, 0.1, 0.2]), ap, return_order=True)
        _, large = duhamel_average(np.diag([0.0, 40.0, 80.0]), ap, return_order=True)
        assert small < large

    def test_against_finite_differences(self):
        fam = sec4_counterexample(0.5)
        fd = fd_derivative(fam, 0.0, 1, h=1e-2)
        d_fd = -1j * fd.extrapolated @ fam.U(0.0).conj().T
        avg = duhamel_average(fam.generator(0.0), fam.generator(0.0, 1), order=64)
        np.testing.assert_allclose(avg, d_fd, atol=1e-9)

    def test_model_linear(self):
        fam = generator_path([np.zeros((2, 2)), np.diag([1.0, 2.0])])
        assert duhamel_vs_exact_derivative(fam, 1.3) <= 1e-13

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_random_polynomial_generator(self, seed):
        rng = np.random.default_rng(seed)
        fam = generator_path([random_hermitian(rng, 5, 2.0) for _ in range(4)])
        for x in rng.uniform(-1, 1, 20):
            assert duhamel_vs_exact_derivative(fam, float(x)) <= 1e-10


class TestLiftLog:
    def test_model_phase(self):
        lift = lift_log(model_phase(np.eye(2)), (0, 7), np.zeros((2, 2)))
        for x, g in zip(lift.x, lift.generators):
            np.testing.assert_allclose(g, x * np.eye(2), atol=1e-10)

    def test_model_linear_past_wraps(self):
        lift = lift_log(model_linear(np.diag([1.0, 2.0])), (0, 2 * math.pi), np.zeros((2, 2)))
        np.testing.assert_allclose(lift.generators[-1], np.diag([2 * math.pi, 4 * math.pi]), atol=1e-9)
        np.testing.assert_allclose(lift.at(math.pi), np.diag([math.pi, 2 * math.pi]), atol=0.1)

    def test_recovers_rotation_path(self):
        fam = sec4_counterexample(0.5)
        lift = lift_log(fam, (-0.3, 0.3), fam.generator(0.0), x_base=0.0)
        assert lift.x[0] == -0.3 and lift.x[-1] == 0.3
        for x, g in zip(lift.x, lift.generators):
            np.testing.assert_allclose(g, fam.generator(float(x)), atol=1e-9)

    def test_bad_base(self):
        with pytest.raises(ValueError):
            lift_log(model_phase(np.eye(2)), (0, 1), np.eye(2))


class TestMonotoneCheck:
    def test_linear(self):
        rep = generator_monotone_check(generator_path([np.zeros((2, 2)), np.diag([1.0, 2.0])]), (0, 1))
        assert rep["A_prime_positive"] and rep["D_positive"]
        assert min(rep["lambda_min_A_prime"]) == pytest.approx(1.0)

    def test_converse_fails(self):
        fam = sec4_counterexample(0.5)
        rep = generator_monotone_check(fam, (-0.05, 0.05), grid=11)
        assert not rep["A_prime_positive"] and rep["D_positive"] and rep["implication_holds"]
        assert np.linalg.eigvalsh(fam.generator(0.0, 1))[0] == -0.5
        assert np.linalg.eigvalsh(compute_D(fam, 0.0))[0] == pytest.approx(0.25, abs=1e-12)

    def test_random_positive_derivative(self):
        rng = np.random.default_rng(7)
        h1 = random_positive(rng, 4)
        fam = generator_path([random_hermitian(rng, 4, 3.0), h1])
        rep = generator_monotone_check(fam, (-1, 1))
        assert min(rep["lambda_min_A_prime"]) == pytest.approx(np.linalg.eigvalsh(h1)[0])
        assert rep["D_positive"]
        fam = random_monotone_path(rng, 4, 3)
        assert generator_monotone_check(fam, (-4, 4))["D_positive"]
