"""
Unit tests for sparse activations, penalties and the ISTA/FISTA solver.
"""

import numpy as np
import pytest

from atoms.errors import ContractError, DimensionError
from atoms.rng import SplitMix64
from atoms.schemas import ActivationPolicy, SparseCodeProblem
from atoms.sparse import (
    apply_activation,
    atom_importance,
    atom_usage,
    density,
    ista_solve,
    lipschitz_estimate,
    ortho_penalty,
    shifted_relu,
    soft_threshold,
    solver,
    sparse_code_objective,
    top_k_rows,
)
from atoms.tensor import Tensor, backward
from atoms.tensor.gradcheck import check_gradients


def _orthonormal(rng: SplitMix64, size: int) -> np.ndarray:
    q, _ = np.linalg.qr(rng.normal((size, size)))
    return q.astype(np.float32)


def _closed_form(signal: np.ndarray, dictionary: np.ndarray, lam: float) -> np.ndarray:
    projected = signal.astype(np.float64) @ dictionary.astype(np.float64).T
    return np.sign(projected) * np.maximum(np.abs(projected) - lam, 0.0)


class TestSoftThreshold:
    """Tests for the proximal operator of the L1 norm."""

    def test_hand_example(self) -> None:
        """Test [2, -0.5, 0.1] at lambda 0.3."""
        out = soft_threshold(Tensor([2.0, -0.5, 0.1]), 0.3)
        np.testing.assert_allclose(out.data, [1.7, -0.2, 0.0], atol=1e-6)

    def test_zero_lambda_is_identity(self) -> None:
        """Test that lambda 0 passes values through."""
        values = np.array([1.5, -0.25, 0.0, 3.0], dtype=np.float32)
        np.testing.assert_array_equal(soft_threshold(Tensor(values), 0.0).data, values)

    def test_all_below_threshold(self) -> None:
        """Test that every |x| <= lambda maps to zero."""
        out = soft_threshold(Tensor([0.1, -0.2, 0.05]), 0.5)
        np.testing.assert_array_equal(out.data, np.zeros(3))

    def test_negative_lambda_rejected(self) -> None:
        """Test the lambda >= 0 precondition."""
        with pytest.raises(ContractError):
            soft_threshold(Tensor([1.0]), -0.1)

    def test_matches_grid_minimizer(self) -> None:
        """Test against argmin_u ½(u - x)² + lambda|u| on a fine grid."""
        rng = SplitMix64(21)
        xs = rng.uniform(1000, -3.0, 3.0)
        lams = rng.uniform(1000, 0.0, 1.0)
        grid = np.linspace(-4.0, 4.0, 8001)
        for x, lam in zip(xs, lams):
            objective = 0.5 * (grid - x) ** 2 + lam * np.abs(grid)
            best = grid[np.argmin(objective)]
            value = soft_threshold(Tensor([x]), float(lam)).item()
            assert abs(value - best) < 1e-3

    def test_gradient_passes_outside_threshold(self) -> None:
        """Test gradient 1 where |x| > lambda and 0 inside."""
        x = Tensor([2.0, -0.5, 0.1], requires_grad=True)
        backward(soft_threshold(x, 0.3).sum())
        np.testing.assert_array_equal(x.grad, [1.0, 1.0, 0.0])


class TestShiftedRelu:
    """Tests for max(x - lambda, 0)."""

    def test_values(self) -> None:
        """Test the one-sided threshold."""
        out = shifted_relu(Tensor([2.0, -0.5, 0.4]), 0.3)
        np.testing.assert_allclose(out.data, [1.7, 0.0, 0.1], atol=1e-6)


class TestTopK:
    """Tests for per-row top-k selection."""

    def test_keeps_largest(self) -> None:
        """Test k=2 on [3, 1, 2]."""
        out = top_k_rows(Tensor([[3.0, 1.0, 2.0]]), 2)
        np.testing.assert_array_equal(out.data, [[3.0, 0.0, 2.0]])

    def test_k_equal_width_is_identity(self) -> None:
        """Test that k = M keeps everything."""
        values = np.array([[3.0, -1.0, 2.0]], dtype=np.float32)
        np.testing.assert_array_equal(top_k_rows(Tensor(values), 3).data, values)

    def test_ties_break_to_lowest_index(self) -> None:
        """Test [1, 1, 1] with k=1."""
        out = top_k_rows(Tensor([[1.0, 1.0, 1.0]]), 1)
        np.testing.assert_array_equal(out.data, [[1.0, 0.0, 0.0]])

    def test_magnitude_not_sign(self) -> None:
        """Test that a large negative entry wins."""
        out = top_k_rows(Tensor([[0.5, -4.0, 1.0]]), 1)
        np.testing.assert_array_equal(out.data, [[0.0, -4.0, 0.0]])

    def test_k_out_of_range(self) -> None:
        """Test k = 0 and k > M."""
        with pytest.raises(ContractError):
            top_k_rows(Tensor([[1.0, 2.0]]), 0)
        with pytest.raises(ContractError):
            top_k_rows(Tensor([[1.0, 2.0]]), 3)

    def test_gradient_only_through_kept(self) -> None:
        """Test that dropped entries receive zero gradient."""
        x = Tensor([[3.0, 1.0, 2.0]], requires_grad=True)
        backward(top_k_rows(x, 2).sum())
        np.testing.assert_array_equal(x.grad, [[1.0, 0.0, 1.0]])

    def test_density_is_exact(self) -> None:
        """Test density k/M for random rows without ties."""
        values = Tensor(SplitMix64(4).normal((16, 100)))
        out = apply_activation(values, ActivationPolicy.top_k(2))
        assert density(out) == pytest.approx(0.02)


class TestPenalties:
    """Tests for the orthogonality penalty and usage statistics."""

    def test_orthonormal_rows_cost_nothing(self) -> None:
        """Test the penalty of an identity dictionary."""
        assert ortho_penalty(Tensor(np.eye(4))).item() == 0.0

    def test_duplicated_rows(self) -> None:
        """Test two copies of [1, 0]: both off-diagonal inner products are 1."""
        assert ortho_penalty(Tensor([[1.0, 0.0], [1.0, 0.0]])).item() == pytest.approx(2.0)

    def test_atom_norms_are_not_penalized(self) -> None:
        """Test that only inner products between different atoms count."""
        assert ortho_penalty(Tensor([[2.0, 0.0], [0.0, 0.5]])).item() == 0.0

    def test_requires_matrix(self) -> None:
        """Test that a vector is not a dictionary."""
        with pytest.raises(ContractError):
            ortho_penalty(Tensor([1.0, 0.0]))

    def test_gradient(self) -> None:
        """Test the penalty gradient against finite differences."""
        d = Tensor(SplitMix64(8).normal((3, 4), std=0.5), requires_grad=True)
        results = check_gradients(lambda: ortho_penalty(d), {"d": d}, eps=1e-2)
        assert results[0].passed, results[0].error

    def test_density_extremes(self) -> None:
        """Test density of all-zero and all-nonzero coefficients."""
        assert density(np.zeros((3, 4))) == 0.0
        assert density(np.ones((3, 4))) == 1.0
        assert density(np.full((2, 2), 1e-9)) == 0.0

    def test_usage_and_importance(self) -> None:
        """Test per-atom counts and mean magnitudes."""
        codes = np.array([[1.0, 0.0, -2.0], [3.0, 0.0, 0.0]])
        np.testing.assert_array_equal(atom_usage(codes), [2, 0, 1])
        np.testing.assert_allclose(atom_importance(codes), [2.0, 0.0, 1.0])


class TestIstaSolve:
    """Tests for the sparse coding solver."""

    def test_orthonormal_closed_form(self) -> None:
        """Test that ISTA recovers soft_threshold(X·Dᵀ, lambda) for orthonormal D."""
        rng = SplitMix64(31)
        dictionary = _orthonormal(rng, 6)
        signal = rng.normal((5, 6)).astype(np.float32)
        codes, diagnostics = ista_solve(
            SparseCodeProblem(Tensor(signal), Tensor(dictionary), lam=0.3, tol=1e-14)
        )
        np.testing.assert_allclose(
            codes.data, _closed_form(signal, dictionary, 0.3), atol=1e-5
        )
        assert diagnostics.converged

    def test_small_lambda_is_least_squares(self) -> None:
        """Test that lambda → 0⁺ gives S ≈ X·Dᵀ."""
        rng = SplitMix64(32)
        dictionary = _orthonormal(rng, 4)
        signal = rng.normal((3, 4)).astype(np.float32)
        problem = SparseCodeProblem(Tensor(signal), Tensor(dictionary), lam=1e-7, tol=1e-14)
        codes, _ = ista_solve(problem)
        expected = signal.astype(np.float64) @ dictionary.astype(np.float64).T
        np.testing.assert_allclose(codes.data, expected, atol=1e-4)

    def test_objective_never_increases(self) -> None:
        """Test monotone descent on random overcomplete problems."""
        rng = SplitMix64(33)
        for _ in range(50):
            signal = Tensor(rng.normal((4, 5)))
            dictionary = Tensor(rng.normal((8, 5)))
            _, diagnostics = ista_solve(
                SparseCodeProblem(signal, dictionary, lam=0.2, max_iters=200)
            )
            history = np.array(diagnostics.objective_history)
            assert np.all(np.diff(history) <= 0.0)

    def test_matches_coordinate_descent(self) -> None:
        """Test the final objective against an exact coordinate descent oracle."""
        rng = SplitMix64(34)
        signal = Tensor(rng.normal((1, 2))).data.astype(np.float64)
        dictionary = Tensor(rng.normal((3, 2))).data.astype(np.float64)
        lam = 0.1

        codes = np.zeros((1, 3))
        for _ in range(5000):
            for m in range(3):
                residual = signal[0] - codes[0] @ dictionary + codes[0, m] * dictionary[m]
                rho = residual @ dictionary[m]
                norm = dictionary[m] @ dictionary[m]
                codes[0, m] = np.sign(rho) * max(abs(rho) - lam, 0.0) / norm
        oracle = sparse_code_objective(signal, dictionary, codes, lam)

        problem = SparseCodeProblem(
            Tensor(signal), Tensor(dictionary), lam=lam, max_iters=20000, tol=1e-14
        )
        _, diagnostics = ista_solve(problem)
        assert diagnostics.objective == pytest.approx(oracle, abs=1e-6)

    def test_fista_agrees_with_ista(self) -> None:
        """Test that the accelerated variant reaches the same objective."""
        rng = SplitMix64(35)
        problem = SparseCodeProblem(
            Tensor(rng.normal((3, 4))), Tensor(rng.normal((6, 4))), lam=0.3, max_iters=5000
        )
        _, plain = ista_solve(problem)
        _, fast = ista_solve(problem, accelerated=True)
        assert fast.objective == pytest.approx(plain.objective, abs=1e-4)

    def test_iteration_cap_is_not_an_error(self) -> None:
        """Test converged=False when max_iters is hit."""
        rng = SplitMix64(36)
        problem = SparseCodeProblem(
            Tensor(rng.normal((3, 4))), Tensor(rng.normal((6, 4))), lam=0.1, max_iters=1
        )
        codes, diagnostics = ista_solve(problem)
        assert not diagnostics.converged
        assert diagnostics.iterations == 1
        assert codes.shape == (3, 6)

    def test_stalled_line_search_is_not_converged(
        self, monkeypatch: pytest.MonkeyPatch
    ) -> None:
        """Test that running out of backtracking steps ends the solve unconverged."""
        values = iter([1.0])
        monkeypatch.setattr(
            solver, "sparse_code_objective", lambda *args: next(values, 2.0)
        )
        problem = SparseCodeProblem(
            Tensor(np.ones((2, 3))), Tensor(np.eye(3)), lam=0.1, max_iters=50
        )
        codes, diagnostics = ista_solve(problem)
        assert not diagnostics.converged
        assert diagnostics.iterations == 1
        assert diagnostics.objective == 1.0
        assert not codes.data.any()

    def test_identity_lipschitz(self) -> None:
        """Test the safety margin on a dictionary with largest eigenvalue 1."""
        assert lipschitz_estimate(np.eye(3)) == pytest.approx(1.1)

    def test_problem_validation(self) -> None:
        """Test shape and lambda checks on the problem record."""
        with pytest.raises(DimensionError):
            SparseCodeProblem(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))), lam=0.1)
        with pytest.raises(ContractError):
            SparseCodeProblem(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 3))), lam=0.0)
