"""
Perturbation expansion of elementwise polynomial layers.

For f(x) = Σ_k c_k x^k (powers elementwise) and atoms s_m·d_m, each atom's
series is

    B_K(d_m) = Σ_k c_k Σ_{j=1..k} C(k, j) · x^(k−j) ⊙ (s_m d_m)^j

and f(x + Σ_m s_m d_m) − f(x) = Σ_m B_K(d_m) holds exactly when the atom
supports are disjoint. Orthogonality is required and checked; the residual
reports whatever cross terms remain.

The two-layer variant tracks each series as a polynomial in a scalar
scale t (coefficient arrays over t^0..t^D), which makes the monomial orders
a previous-layer atom reaches after the next layer explicit.
"""

from __future__ import annotations

from collections.abc import Sequence
from math import comb

import numpy as np
import structlog

from atoms.errors import ContractError, DimensionError, OrthogonalityError
from atoms.rng import SplitMix64, derive_seed
from atoms.schemas import ExpansionCheck, ExpansionResult, PolyLayer, TwoLayerExpansion

logger = structlog.get_logger(__name__)

ORTHOGONALITY_TOLERANCE = 1e-6

Atom = tuple[float, np.ndarray]


def _as_atoms(x: np.ndarray, atoms: Sequence[Atom]) -> list[tuple[float, np.ndarray]]:
    checked = []
    for coefficient, direction in atoms:
        direction = np.asarray(direction, dtype=np.float64)
        if direction.shape != x.shape:
            raise DimensionError(f"atom shape {direction.shape} != input shape {x.shape}")
        checked.append((float(coefficient), direction))
    return checked


def check_orthogonal(atoms: Sequence[Atom], tolerance: float = ORTHOGONALITY_TOLERANCE) -> None:
    for i in range(len(atoms)):
        for j in range(i + 1, len(atoms)):
            inner = float(np.dot(atoms[i][1], atoms[j][1]))
            if abs(inner) > tolerance:
                raise OrthogonalityError(i, j, inner)


def supports_disjoint(vectors: Sequence[np.ndarray]) -> bool:
    if not vectors:
        return True
    occupied = np.stack([np.abs(v) > 0 for v in vectors]).sum(axis=0)
    return bool(np.all(occupied <= 1))


def _poly_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Product of two t-polynomials with elementwise vector coefficients."""
    out = np.zeros((a.shape[0] + b.shape[0] - 1, a.shape[1]))
    for i in range(a.shape[0]):
        out[i:i + b.shape[0]] += a[i] * b
    return out


def compose_delta(poly: PolyLayer, base: np.ndarray, perturbation: np.ndarray) -> np.ndarray:
    """
    t-coefficients of f(base + u(t)) − f(base) for u given as t-coefficients
    (shape (D + 1, dim), u(0) = 0). Result has shape (K·D + 1, dim).
    """
    degree = poly.degree * (perturbation.shape[0] - 1)
    out = np.zeros((degree + 1, base.shape[0]))
    power = np.ones((1, base.shape[0]))
    for j in range(1, poly.degree + 1):
        power = _poly_mul(power, perturbation)
        weight = np.zeros(base.shape[0])
        for k in range(j, poly.degree + 1):
            weight = weight + poly.coefficients[k - 1] * comb(k, j) * base ** (k - j)
        out[: power.shape[0]] += weight * power
    return out


def atom_series(poly: PolyLayer, x: np.ndarray, coefficient: float,
                direction: np.ndarray) -> np.ndarray:
    """B_K(d) via the binomial formula, evaluated at unit scale."""
    step = np.stack([np.zeros_like(x), coefficient * direction])
    return compose_delta(poly, x, step).sum(axis=0)


def _relative(residual: np.ndarray, reference: np.ndarray) -> float:
    scale = float(np.linalg.norm(reference))
    return float(np.linalg.norm(residual)) / (scale if scale > 0 else 1.0)


def expansion_decompose(poly: PolyLayer, x: np.ndarray, atoms: Sequence[Atom]) -> ExpansionResult:
    x = np.asarray(x, dtype=np.float64)
    checked = _as_atoms(x, atoms)
    check_orthogonal(checked)

    width = x.shape[0]
    series = np.zeros((len(checked), width))
    shift = np.zeros(width)
    for m, (coefficient, direction) in enumerate(checked):
        series[m] = atom_series(poly, x, coefficient, direction)
        shift = shift + coefficient * direction

    base = poly(x)
    perturbed = poly(x + shift)
    residual = perturbed - base - series.sum(axis=0)
    return ExpansionResult(
        series=series,
        base=base,
        perturbed=perturbed,
        residual=residual,
        relative_residual=_relative(residual, perturbed),
        supports_disjoint=supports_disjoint([c * d for c, d in checked]),
    )


def expansion_two_layer(
    poly_l: PolyLayer,
    poly_l1: PolyLayer,
    x: np.ndarray,
    atoms_prev: Sequence[Atom],
    atoms_cur: Sequence[Atom],
) -> TwoLayerExpansion:
    """
    Accumulated series for y = f_l1(f_l(x + Σ prev) + Σ cur).

    Previous-layer atoms reach monomial orders up to K_l·K_l1; the degree
    profile row of atom m holds the norm of each order 1..K_l·K_l1.
    """
    x = np.asarray(x, dtype=np.float64)
    prev = _as_atoms(x, atoms_prev)
    cur = _as_atoms(x, atoms_cur)
    check_orthogonal(prev)
    check_orthogonal(cur)

    width = x.shape[0]
    hidden_base = poly_l(x)
    max_degree = poly_l.degree * poly_l1.degree

    previous_series = np.zeros((len(prev), width))
    profiles = np.zeros((len(prev), max_degree))
    prev_shift = np.zeros(width)
    for m, (coefficient, direction) in enumerate(prev):
        first = compose_delta(poly_l, x, np.stack([np.zeros(width), coefficient * direction]))
        second = compose_delta(poly_l1, hidden_base, first)
        previous_series[m] = second.sum(axis=0)
        norms = np.linalg.norm(second[1:], axis=1)
        profiles[m, : len(norms)] = norms[:max_degree]
        prev_shift = prev_shift + coefficient * direction

    current_series = np.zeros((len(cur), width))
    cur_shift = np.zeros(width)
    for m, (coefficient, direction) in enumerate(cur):
        current_series[m] = atom_series(poly_l1, hidden_base, coefficient, direction)
        cur_shift = cur_shift + coefficient * direction

    base = poly_l1(hidden_base)
    perturbed = poly_l1(poly_l(x + prev_shift) + cur_shift)
    residual = perturbed - base - previous_series.sum(axis=0) - current_series.sum(axis=0)
    return TwoLayerExpansion(
        current_series=current_series,
        previous_series=previous_series,
        degree_profiles=profiles,
        max_degree=max_degree,
        base=base,
        perturbed=perturbed,
        residual=residual,
        relative_residual=_relative(residual, perturbed),
    )


def _random_poly(rng: SplitMix64, max_degree: int) -> PolyLayer:
    degree = 1 + int(rng.integers(max_degree))
    return PolyLayer(tuple(float(c) for c in rng.normal(degree, std=0.5)))


def _disjoint_atoms(rng: SplitMix64, width: int, counts: Sequence[int]) -> list[list[Atom]]:
    """Atom groups whose supports partition a random subset of the coordinates."""
    order = rng.choice(width, width)
    groups: list[list[Atom]] = []
    cursor = 0
    pending = sum(counts)
    for count in counts:
        group: list[Atom] = []
        for _ in range(count):
            size = 1 + int(rng.integers(max(1, (width - cursor) // pending)))
            pending -= 1
            support = order[cursor:cursor + size]
            cursor += len(support)
            direction = np.zeros(width)
            direction[support] = rng.normal(len(support))
            group.append((float(rng.normal(std=1.0)), direction))
        groups.append(group)
    return groups


def verify_expansion(
    seed: int,
    cases: int = 500,
    two_layer_cases: int = 100,
    max_degree: int = 4,
    max_atoms: int = 4,
    max_dim: int = 8,
) -> ExpansionCheck:
    """
    Random one- and two-layer cases with disjoint atom supports, plus the
    rejection of a non-orthogonal pair.
    """
    if max_atoms < 1 or max_dim < max_atoms or max_degree < 1:
        raise ContractError("need 1 <= max_atoms <= max_dim and max_degree >= 1")
    rng = SplitMix64(derive_seed(seed, "expansion"))

    worst_single = 0.0
    for _ in range(cases):
        width = max_atoms + int(rng.integers(max_dim - max_atoms + 1))
        count = 1 + int(rng.integers(max_atoms))
        (atoms,) = _disjoint_atoms(rng, width, [count])
        result = expansion_decompose(_random_poly(rng, max_degree), rng.normal(width), atoms)
        worst_single = max(worst_single, result.relative_residual)

    worst_two = 0.0
    for _ in range(two_layer_cases):
        width = max_atoms + int(rng.integers(max_dim - max_atoms + 1))
        prev_count = 1 + int(rng.integers(max(1, width // 2)))
        cur_count = int(rng.integers(max(1, width - prev_count) + 1))
        cur_count = min(cur_count, width - prev_count)
        prev, cur = _disjoint_atoms(rng, width, [prev_count, cur_count])
        two = expansion_two_layer(
            _random_poly(rng, max_degree), _random_poly(rng, max_degree),
            rng.normal(width), prev, cur,
        )
        worst_two = max(worst_two, two.relative_residual)

    try:
        check_orthogonal([(1.0, np.array([1.0, 0.0])), (1.0, np.array([1.0, 1.0]))])
        rejected = False
    except OrthogonalityError:
        rejected = True

    check = ExpansionCheck(
        cases=cases,
        two_layer_cases=two_layer_cases,
        max_relative_residual=worst_single,
        max_two_layer_residual=worst_two,
        rejects_non_orthogonal=rejected,
    )
    logger.info("expansion_verified", **vars(check))
    return check
