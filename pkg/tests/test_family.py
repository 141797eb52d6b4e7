import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monoflow.builtins import ROTATION_GENERATOR, random_hermitian, random_unitary, sec4_counterexample
from monoflow.errors import NotMonotone, SpecError, UnitarityError
from monoflow.family import (build_family, check_unitarity, compute_D, compute_D_prime, estimate_bounds,
                             evaluate_U, expi, generator_path, load_family, matrix_to_json, model_linear,
                             model_phase, sampled)


def pairs(m):
    return matrix_to_json(np.asarray(m, dtype=complex))


class TestBuildFamily:
    def test_model_phase_identity(self):
        fam = build_family({"dim": 2, "kind": "model_phase", "matrices": {"U0": pairs(np.eye(2))}})
        np.testing.assert_allclose(fam.U(0.7), np.exp(0.7j) * np.eye(2), atol=1e-15)

    def test_model_linear_at_pi(self):
        fam = build_family({"dim": 2, "kind": "model_linear", "matrices": {"L": [[1, 0], [0, 2]]}})
        np.testing.assert_allclose(fam.U(math.pi), np.diag([-1, 1]), atol=1e-14)

    def test_generator_path_matches_builtin(self):
        spec = {"dim": 2, "kind": "generator_path",
                "matrices": {"H0": [[[0, 0], [0, math.pi]], [[0, -math.pi], [0, 0]]],
                             "H1": [[-0.5, 0], [0, 1]]}}
        fam = build_family(spec)
        ref = sec4_counterexample(0.5)
        for x in (-0.3, 0.0, 0.4):
            np.testing.assert_allclose(fam.U(x), ref.U(x), atol=1e-14)

    def test_load_from_file(self, tmp_path):
        p = tmp_path / "f.json"
        p.write_text(json.dumps({"dim": 1, "kind": "model_linear", "matrices": {"L": [[2.0]]}}), encoding="utf-8")
        assert load_family(p).U(math.pi)[0, 0] == pytest.approx(1.0)

    @pytest.mark.parametrize("spec", [
        {"dim": 2, "kind": "nope", "matrices": {}},
        {"dim": 2, "kind": "model_linear", "matrices": {}},
        {"dim": 2, "kind": "model_linear", "matrices": {"L": [[1, 0], [0, -1]]}},
        {"dim": 2, "kind": "model_linear", "matrices": {"L": [[1, 1], [0, 1]]}},
        {"dim": 3, "kind": "model_linear", "matrices": {"L": [[1, 0], [0, 1]]}},
        {"dim": 2, "kind": "model_phase", "matrices": {"U0": [[2, 0], [0, 1]]}},
        {"dim": 2, "kind": "generator_path", "matrices": {"X": [[1, 0], [0, 1]]}},
        {"dim": 1, "kind": "model_linear", "matrices": {"L": [["a"]]}},
        [],
    ])
    def test_malformed(self, spec):
        with pytest.raises(SpecError):
            build_family(spec)


class TestEvaluate:
    def test_phase_at_pi(self):
        np.testing.assert_allclose(evaluate_U(model_phase(np.eye(2)), math.pi), -np.eye(2), atol=1e-15)

    def test_linear_at_half_pi(self):
        u = evaluate_U(model_linear(np.diag([1.0, 2.0])), math.pi / 2)
        np.testing.assert_allclose(u, np.diag([1j, -1]), atol=1e-15)

    def test_rotation_at_half_time(self):
        np.testing.assert_allclose(expi(ROTATION_GENERATOR, 0.5), [[0, -1], [1, 0]], atol=1e-15)

    def test_non_unitary_sampled_family_rejected(self):
        fam = sampled(lambda x: np.diag([1.0, 1.0 + 1e-3]) * np.exp(1j * x), 2)
        with pytest.raises(UnitarityError):
            evaluate_U(fam, 0.0)


class TestComputeD:
    def test_model_phase_is_identity(self):
        fam = model_phase(random_unitary(np.random.default_rng(0), 3))
        for x in (-1.0, 0.2, 5.0):
            np.testing.assert_allclose(compute_D(fam, x), np.eye(3), atol=1e-13)

    def test_model_linear_is_L(self):
        fam = model_linear(np.diag([1.0, 2.0]))
        np.testing.assert_allclose(compute_D(fam, 0.83), np.diag([1.0, 2.0]), atol=1e-13)

    @pytest.mark.parametrize("b", [0.0, 0.25, 0.5, 0.75])
    def test_rotation_family_at_zero(self, b):
        np.testing.assert_allclose(compute_D(sec4_counterexample(b), 0.0), 0.5 * (1 - b) * np.eye(2), atol=1e-12)

    def test_hermitian_residue_small(self):
        rng = np.random.default_rng(4)
        fam = generator_path([random_hermitian(rng, 4), random_hermitian(rng, 4), random_hermitian(rng, 4)])
        _, residue = compute_D(fam, 0.37, with_defect=True)
        assert residue < 1e-12

    def test_sampled_matches_exact(self):
        rng = np.random.default_rng(5)
        exact = generator_path([random_hermitian(rng, 3), np.eye(3) + 0.3 * random_hermitian(rng, 3)])
        fd = sampled(exact.U, 3, h=1e-3)
        np.testing.assert_allclose(compute_D(fd, 0.2), compute_D(exact, 0.2), atol=1e-9)

    def test_D_prime_by_differences(self):
        rng = np.random.default_rng(6)
        fam = generator_path([random_hermitian(rng, 3), np.eye(3), 0.2 * random_hermitian(rng, 3)])
        h = 1e-4
        fd = (compute_D(fam, 0.3 + h) - compute_D(fam, 0.3 - h)) / (2 * h)
        np.testing.assert_allclose(compute_D_prime(fam, 0.3), fd, atol=1e-7)


class TestBounds:
    def test_model_linear(self):
        b = estimate_bounds(model_linear(np.diag([1.0, 2.0])), (0, 7), safety_factor=1.0)
        assert (b.d_min, b.d_max, b.d_2) == pytest.approx((1.0, 2.0, 4.0), abs=1e-12)

    def test_model_phase(self):
        b = estimate_bounds(model_phase(random_unitary(np.random.default_rng(1), 3)), (-1, 1), safety_factor=1.0)
        assert (b.d_min, b.d_max, b.d_2) == pytest.approx((1.0, 1.0, 1.0), abs=1e-12)

    def test_safety_factor_widens(self):
        b = estimate_bounds(model_linear(np.diag([1.0, 2.0])), (0, 1), safety_factor=1.1)
        assert b.d_min == pytest.approx(1 / 1.1) and b.d_max == pytest.approx(2.2)

    def test_rotation_family_near_zero(self):
        fam = sec4_counterexample(0.5)
        b = estimate_bounds(fam, (-0.05, 0.05), grid_points=11, safety_factor=1.0)
        # finer grid of finite-difference D as reference
        def fd_D(x, h=1e-5):
            z = -1j * (fam.U(x + h) - fam.U(x - h)) / (2 * h) @ fam.U(x).conj().T
            return 0.5 * (z + z.conj().T)

        ref = min(np.linalg.eigvalsh(fd_D(x))[0] for x in np.linspace(-0.05, 0.05, 101))
        assert abs(b.d_min - ref) < 1e-3
        assert np.linalg.eigvalsh(compute_D(fam, 0.0))[0] == pytest.approx(0.25, abs=1e-12)

    def test_not_monotone(self):
        fam = generator_path([np.zeros((2, 2)), np.diag([1.0, -1.0])])
        with pytest.raises(NotMonotone):
            estimate_bounds(fam, (0, 1))


class TestUnitarity:
    def test_identity(self):
        assert check_unitarity(np.eye(3), 1e-10) == (True, 0.0)

    def test_perturbed(self):
        ok, defect = check_unitarity(np.diag([1, 1 + 1e-6]), 1e-10)
        assert not ok and defect == pytest.approx(2e-6, rel=1e-3)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 8), st.integers(0, 2**32 - 1))
    def test_qr_unitary(self, dim, seed):
        assert check_unitarity(random_unitary(np.random.default_rng(seed), dim), 1e-10)[0]

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_expi_of_hermitian_is_unitary(self, dim, seed):
        h = random_hermitian(np.random.default_rng(seed), dim, 10.0)
        assert check_unitarity(expi(h), 1e-10)[0]
