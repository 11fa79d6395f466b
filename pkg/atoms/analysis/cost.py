"""
Closed-form parameter, storage and FLOP accounting.

Sparse adapter:
    train params = (C_i + C_o)·M
    storage      = C_i·M + ρ·C_o·M       (only nonzero atom mass is kept)
    flops        = 2·N·M·C_i + 2·ρ·N·M·C_o
Low-rank adapter on W_q, W_k, W_v, W_o:
    params = storage = 4·(C_i + C_o)·r
    flops          = 8·C_i·C_o·r
"""

from __future__ import annotations

from atoms.errors import ContractError
from atoms.schemas import CostBreakdown, CostReport


def cost_report(c_in: int, c_out: int, m: int, r: int, n: int, rho: float) -> CostReport:
    if min(c_in, c_out, m, r, n) < 0:
        raise ContractError("dimensions must be non-negative")
    if not 0.0 <= rho <= 1.0:
        raise ContractError(f"rho must lie in [0, 1], got {rho}")

    sparse = CostBreakdown(
        train_params=float((c_in + c_out) * m),
        storage_params=c_in * m + rho * c_out * m,
        flops=2 * n * m * c_in + 2 * rho * n * m * c_out,
    )
    lowrank_params = float(4 * (c_in + c_out) * r)
    lowrank = CostBreakdown(
        train_params=lowrank_params,
        storage_params=lowrank_params,
        flops=float(8 * c_in * c_out * r),
    )
    return CostReport(
        sparse=sparse,
        lowrank=lowrank,
        inputs={"c_in": c_in, "c_out": c_out, "m": m, "r": r, "n": n, "rho": rho},
    )
