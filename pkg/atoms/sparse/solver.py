"""
ISTA / FISTA sparse coding for a fixed dictionary.

Solves min_S ½‖X − S·D‖² + λ‖S‖₁ in float64. The solver is an independent
oracle for the adapter's soft-threshold path, so it works on plain numpy
arrays and never touches the gradient tape.
"""

from __future__ import annotations

import numpy as np
import structlog

from atoms.rng import SplitMix64
from atoms.schemas import SolverDiagnostics, SparseCodeProblem
from atoms.tensor import Tensor

logger = structlog.get_logger(__name__)

POWER_STEPS = 20
SAFETY_MARGIN = 1.1
MAX_BACKTRACKS = 60


def soft_threshold_array(values: np.ndarray, threshold: float) -> np.ndarray:
    return np.sign(values) * np.maximum(np.abs(values) - threshold, 0.0)


def lipschitz_estimate(dictionary: np.ndarray, steps: int = POWER_STEPS) -> float:
    """1.1 × the power-iteration estimate of the largest eigenvalue of D·Dᵀ."""
    gram = dictionary @ dictionary.T
    vector = SplitMix64(0x5EED).normal(gram.shape[0])
    vector /= np.linalg.norm(vector)
    eigenvalue = 0.0
    for _ in range(steps):
        image = gram @ vector
        norm = np.linalg.norm(image)
        if norm == 0.0:
            return 0.0
        vector = image / norm
        eigenvalue = float(vector @ gram @ vector)
    return SAFETY_MARGIN * eigenvalue


def sparse_code_objective(signal: np.ndarray, dictionary: np.ndarray,
                          codes: np.ndarray, lam: float) -> float:
    residual = signal - codes @ dictionary
    return float(0.5 * np.sum(residual * residual) + lam * np.sum(np.abs(codes)))


def ista_solve(
    problem: SparseCodeProblem,
    accelerated: bool = False,
) -> tuple[Tensor, SolverDiagnostics]:
    """
    Proximal gradient descent on the lasso objective.

    Plain ISTA is monotone: a step that raises the objective doubles L and
    is retried. FISTA runs without restarts. Hitting max_iters is not an
    error; the best iterate is returned with converged=False.
    """
    signal = problem.signal.data.astype(np.float64)
    dictionary = problem.dictionary.data.astype(np.float64)
    lam = problem.lam

    lipschitz = lipschitz_estimate(dictionary)
    if lipschitz <= 0.0:
        lipschitz = 1.0

    codes = np.zeros((signal.shape[0], dictionary.shape[0]))
    objective = sparse_code_objective(signal, dictionary, codes, lam)
    history = [objective]
    best_codes, best_objective = codes, objective

    momentum_point = codes
    t = 1.0
    converged = False
    stalled = False
    iterations = 0

    for iterations in range(1, problem.max_iters + 1):
        if accelerated:
            gradient = (momentum_point @ dictionary - signal) @ dictionary.T
            updated = soft_threshold_array(
                momentum_point - gradient / lipschitz, lam / lipschitz
            )
            t_next = (1.0 + np.sqrt(1.0 + 4.0 * t * t)) / 2.0
            momentum_point = updated + ((t - 1.0) / t_next) * (updated - codes)
            t = t_next
            new_objective = sparse_code_objective(signal, dictionary, updated, lam)
        else:
            gradient = (codes @ dictionary - signal) @ dictionary.T
            for _ in range(MAX_BACKTRACKS):
                updated = soft_threshold_array(
                    codes - gradient / lipschitz, lam / lipschitz
                )
                new_objective = sparse_code_objective(signal, dictionary, updated, lam)
                if new_objective <= objective:
                    break
                lipschitz *= 2.0
            else:
                stalled = True
                break

        change = abs(objective - new_objective) / max(abs(objective), 1e-300)
        codes, objective = updated, new_objective
        history.append(objective)
        if objective < best_objective:
            best_codes, best_objective = codes, objective
        if change < problem.tol:
            converged = True
            break

    if not converged:
        logger.warning(
            "ista_not_converged",
            iterations=iterations,
            stalled=stalled,
            objective=best_objective,
            accelerated=accelerated,
        )

    diagnostics = SolverDiagnostics(
        iterations=iterations,
        objective=best_objective,
        converged=converged,
        lipschitz=lipschitz,
        objective_history=tuple(history),
    )
    return Tensor(best_codes), diagnostics
