"""
analyze: post-hoc analyses over finished runs.

Subcommands: cost, influence, select-atoms, duel, expansion-verify, sweep.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Literal

import numpy as np
import structlog
from pydantic import Field, field_validator

from adapters.reports import write_cost, write_influence, write_json, write_matrix, write_sweep
from atoms.analysis import (
    TRANSFER_BAND,
    ablation_sweep,
    atom_influence,
    atoms_for_mass,
    cost_report,
    expansion_decompose,
    stability_duel,
    verify_expansion,
)
from atoms.attention import atom_mask, rank_atoms, select_atoms
from atoms.errors import ConfigError
from atoms.rng import derive_seed
from atoms.schemas import FourierTaskSpec, PolyLayer, TrainConfig
from atoms.sparse import NONZERO_THRESHOLD, atom_importance
from atoms.tasks import SignalModel, add_noise, gen_fourier_batch, stream_spec
from atoms.tensor import Tensor, no_grad
from atoms.training.protocols import FINETUNE_CLASSES
from commands.base import (
    CommandConfig,
    CommandContext,
    CommandDefinition,
    CommandHandler,
    CommandResult,
    parse_band,
    require_dir,
)
from commands.gen_data import parse_classes
from commands.run import RestoredRun, load_digits, restore_run

logger = structlog.get_logger(__name__)

HIGH_BAND = (25, 32)


def _split_floats(value: Any) -> Any:
    if isinstance(value, str):
        return tuple(float(part) for part in value.split(",") if part.strip())
    return value


def restore_adapted(run: Path) -> RestoredRun:
    restored = restore_run(run)
    if restored.model.num_adapted_layers == 0:
        raise ConfigError(f"{run} holds a {restored.config.stage} run without adapters")
    return restored


def restore_pretrained_signal(run: Path) -> RestoredRun:
    restored = restore_run(run)
    if restored.config.stage != "pretrain_signal":
        raise ConfigError(f"{run} holds a {restored.config.stage} run, need pretrain_signal")
    return restored


def probe_inputs(restored: RestoredRun, samples: int) -> Any:
    """Evaluation inputs in the form the restored model's forward expects."""
    cfg, model = restored
    if isinstance(model, SignalModel):
        batch = gen_fourier_batch(stream_spec(cfg.spec(), "analysis"), samples)
        return batch.masked, batch.mask
    digits = load_digits(
        cfg.model_copy(update={"data_count": max(2, samples)}), FINETUNE_CLASSES
    ).take(samples)
    return add_noise(digits.images, derive_seed(cfg.seed, "analysis_noise"), cfg.noise_std)


# =============================================================================
# COST
# =============================================================================

class CostConfig(CommandConfig):
    c_in: int = Field(1024, ge=1)
    c_out: int = Field(1024, ge=1)
    m: int = Field(256, ge=0)
    r: int = Field(16, ge=0)
    n: int = Field(1024, ge=1)
    rho: float = Field(0.01, ge=0, le=1)


class CostHandler(CommandHandler):
    def execute(self, config: CostConfig, context: CommandContext) -> CommandResult:
        report = cost_report(config.c_in, config.c_out, config.m, config.r, config.n, config.rho)
        path = write_cost(context.out_dir / "cost.json", report)
        return CommandResult.success(
            [path],
            sparse_storage=report.sparse.storage_params,
            lowrank_params=report.lowrank.train_params,
        )


# =============================================================================
# INFLUENCE / SELECT-ATOMS
# =============================================================================

class InfluenceConfig(CommandConfig):
    run: Path
    layer: int = Field(0, ge=0)
    atoms: tuple[int, ...] | None = None
    samples: int = Field(8, ge=1)
    mass_fraction: float = Field(0.95, gt=0, le=1)

    _parse_atoms = field_validator("atoms", mode="before")(parse_classes)


class InfluenceHandler(CommandHandler):
    def check_paths(self, config: InfluenceConfig) -> None:
        require_dir(config.run, "run directory")

    def execute(self, config: InfluenceConfig, context: CommandContext) -> CommandResult:
        restored = restore_adapted(config.run)
        model = restored.model
        inputs = probe_inputs(restored, config.samples)
        report = atom_influence(model, inputs, config.layer, config.atoms)
        outputs = write_influence(context.out_dir, report)

        with no_grad():
            coefficients = model.adapter_coefficients(inputs)
            attention = model.adapter_attention(inputs)
        layers = []
        for i, adapter in enumerate(model.adapters):
            importance = atom_importance(coefficients[i])
            layers.append({
                "layer": i,
                "dictionary_size": adapter.dictionary_size,
                "active_atoms": int(np.count_nonzero(importance > 1e-3)),
                "atoms_for_mass": atoms_for_mass(
                    coefficients[i],
                    adapter.dictionary.numpy(),
                    config.mass_fraction,
                    attention[i] if adapter.apply_before_attention else None,
                ),
            })
        outputs.append(write_json(context.out_dir / "mass.json", {
            "fraction": config.mass_fraction, "layers": layers,
        }))
        return CommandResult.success(
            outputs, additivity_gap=report.additivity_gap, atoms=len(report.atoms)
        )


class SelectAtomsConfig(CommandConfig):
    run: Path
    layer: int = Field(0, ge=0)
    counts: tuple[int, ...] = (4, 12, 40)
    samples: int = Field(8, ge=1)

    _parse_counts = field_validator("counts", mode="before")(parse_classes)

    @field_validator("counts")
    @classmethod
    def _check_counts(cls, value: tuple[int, ...]) -> tuple[int, ...]:
        if not value or min(value) < 0:
            raise ValueError(f"counts must be non-negative integers, got {value}")
        return value


class SelectAtomsHandler(CommandHandler):
    """
    For each count n, render the model-output delta and the layer ΔO with
    only the n most important atoms of one layer switched on.
    """

    def check_paths(self, config: SelectAtomsConfig) -> None:
        require_dir(config.run, "run directory")

    def execute(self, config: SelectAtomsConfig, context: CommandContext) -> CommandResult:
        restored = restore_adapted(config.run)
        model = restored.model
        if not 0 <= config.layer < model.num_adapted_layers:
            raise ConfigError(
                f"layer {config.layer} outside [0, {model.num_adapted_layers})"
            )
        inputs = probe_inputs(restored, config.samples)
        adapter = model.adapters[config.layer]
        size = adapter.dictionary_size

        outputs: list[Path] = []
        rows = []
        with no_grad():
            coefficients = model.adapter_coefficients(inputs)
            attention = model.adapter_attention(inputs)
            silent = [np.zeros(c.shape[-1], dtype=np.float32) for c in coefficients]
            baseline = model.masked_output(inputs, silent)
            order = rank_atoms(coefficients[config.layer])
            importance = atom_importance(coefficients[config.layer])
            for count in config.counts:
                keep = sorted(int(i) for i in order[: min(count, size)])
                masks = list(silent)
                masks[config.layer] = atom_mask(size, keep)
                rendered = model.masked_output(inputs, masks) - baseline
                delta = select_atoms(
                    adapter,
                    Tensor(coefficients[config.layer]),
                    keep,
                    Tensor(attention[config.layer]),
                ).numpy()
                outputs.append(
                    write_matrix(context.out_dir / f"select_{count}_output.csv", rendered)
                )
                outputs.append(
                    write_matrix(context.out_dir / f"select_{count}_delta.csv", delta)
                )
                rows.append({
                    "count": count,
                    "atoms": keep,
                    "active_atoms": sum(importance[i] > NONZERO_THRESHOLD for i in keep),
                    "max_abs_output": float(np.abs(rendered).max(initial=0.0)),
                    "max_abs_delta": float(np.abs(delta).max(initial=0.0)),
                })
                logger.info("atoms_selected", count=count, layer=config.layer)
        outputs.append(write_json(context.out_dir / "select_atoms.json", {
            "layer": config.layer, "dictionary_size": size, "selections": rows,
        }))
        return CommandResult.success(outputs, counts=list(config.counts))


# =============================================================================
# DUEL / SWEEP
# =============================================================================

def _target_spec(source: RestoredRun, band: tuple[int, int], seed: int) -> FourierTaskSpec:
    """The pre-training task moved to a new band."""
    return FourierTaskSpec(
        length=source.config.length,
        num_bases=source.config.num_bases,
        freq_band=band,
        mask_observed=source.config.mask_observed,
        seed=seed,
    )


class DuelConfig(TrainConfig):
    run: Path
    freq_band: tuple[int, int] = HIGH_BAND
    num_probes: int = Field(5, ge=1)
    perturbation: float = Field(0.1, ge=0)

    _parse_band = field_validator("freq_band", mode="before")(parse_band)


class DuelHandler(CommandHandler):
    def check_paths(self, config: DuelConfig) -> None:
        require_dir(config.run, "run directory")

    def execute(self, config: DuelConfig, context: CommandContext) -> CommandResult:
        source = restore_pretrained_signal(config.run)
        assert isinstance(source.model, SignalModel)
        spec = _target_spec(source, config.freq_band, config.seed)
        report = stability_duel(
            source.model, spec, config,
            num_probes=config.num_probes, perturbation=config.perturbation,
        )
        path = write_json(context.out_dir / "duel.json", {
            "seed": report.seed,
            "train_loss": report.train_loss,
            "probe_losses": report.probe_losses,
            "mean_probe_loss": {m: report.mean_probe_loss(m) for m in report.probe_losses},
            "coefficient_noise": report.coefficient_noise,
            "support_ok": report.support_ok,
        })
        return CommandResult.success([path], support_ok=report.support_ok)


class SweepConfig(TrainConfig):
    run: Path
    axis: Literal["rho", "M"] = "rho"
    values: tuple[float, ...] = (0.02, 0.04)
    freq_band: tuple[int, int] = HIGH_BAND
    transfer_band: tuple[int, int] = TRANSFER_BAND

    _parse_values = field_validator("values", mode="before")(_split_floats)
    _parse_bands = field_validator("freq_band", "transfer_band", mode="before")(parse_band)

    @field_validator("values")
    @classmethod
    def _check_values(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        if not value:
            raise ValueError("a sweep needs at least one value")
        return value


class SweepHandler(CommandHandler):
    def check_paths(self, config: SweepConfig) -> None:
        require_dir(config.run, "run directory")

    def execute(self, config: SweepConfig, context: CommandContext) -> CommandResult:
        source = restore_pretrained_signal(config.run)
        assert isinstance(source.model, SignalModel)
        spec = _target_spec(source, config.freq_band, config.seed)
        rows = ablation_sweep(
            config.axis, config.values, config, source.model, spec, config.transfer_band
        )
        path = write_sweep(context.out_dir / "sweep.csv", rows)
        return CommandResult.success([path], axis=config.axis, points=len(rows))


# =============================================================================
# EXPANSION
# =============================================================================

class ExpansionConfig(CommandConfig):
    cases: int = Field(500, ge=0)
    two_layer_cases: int = Field(100, ge=0)
    max_degree: int = Field(4, ge=1)
    max_atoms: int = Field(4, ge=1)
    max_dim: int = Field(8, ge=1)
    tolerance: float = Field(1e-6, gt=0)


def fixture_residual() -> float:
    """f(x) = x² at x = (1, 1) with unit atoms on each axis; exact by hand."""
    result = expansion_decompose(
        PolyLayer((0.0, 1.0)),
        np.array([1.0, 1.0]),
        [(1.0, np.array([1.0, 0.0])), (1.0, np.array([0.0, 1.0]))],
    )
    return float(np.abs(result.residual).max())


class ExpansionHandler(CommandHandler):
    def execute(self, config: ExpansionConfig, context: CommandContext) -> CommandResult:
        if config.max_dim < config.max_atoms:
            raise ConfigError("max_dim must be at least max_atoms")
        fixture = fixture_residual()
        check = verify_expansion(
            config.seed,
            cases=config.cases,
            two_layer_cases=config.two_layer_cases,
            max_degree=config.max_degree,
            max_atoms=config.max_atoms,
            max_dim=config.max_dim,
        )
        passed = check.passed(config.tolerance) and fixture < config.tolerance
        path = write_json(context.out_dir / "expansion.json", {
            **vars(check), "fixture_residual": fixture, "passed": passed,
        })
        if not passed:
            return CommandResult.partial([path], passed=False)
        return CommandResult.success([path], passed=True, fixture_residual=fixture)


cost_command = CommandDefinition("analyze.cost", "Parameter and FLOP cost report.", CostConfig)
influence_command = CommandDefinition(
    "analyze.influence", "Per-atom influence maps and mass concentration.", InfluenceConfig
)
select_atoms_command = CommandDefinition(
    "analyze.select-atoms", "Renderings with the top-n atoms of one layer.", SelectAtomsConfig
)
duel_command = CommandDefinition(
    "analyze.duel", "Rank-1 sparse versus low-rank stability comparison.", DuelConfig
)
expansion_command = CommandDefinition(
    "analyze.expansion-verify", "Randomized check of the atom perturbation expansion.",
    ExpansionConfig,
)
sweep_command = CommandDefinition(
    "analyze.sweep", "Density or dictionary-size sweep on the signal transfer task.",
    SweepConfig,
)
