"""
run: one training stage per invocation.

Every run directory is self-contained: snapshots/ holds the parameters
(the frozen base under "base/" for fine-tuning stages), manifest.json echoes
the full configuration, so later stages and analyses rebuild the model
from the directory alone.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, NamedTuple

import structlog
from pydantic import Field, field_validator, model_validator

from adapters.datasets import load_exported, load_idx
from adapters.reports import MANIFEST_FILE, write_history, write_summary, write_usage
from adapters.storage import FileTensorStore, save_bundle
from atoms.errors import ConfigError, FormatError
from atoms.schemas import (
    AdapterConfig,
    DigitDataset,
    FourierTaskSpec,
    FreezePolicy,
    RunReport,
    TrainConfig,
)
from atoms.tasks import DigitVae, SignalModel, synth_digits
from atoms.training import (
    LOW_BAND,
    WARMUP_STAGE,
    finetune_signal,
    finetune_vae_dictionary,
    load_snapshot,
    pretrain_signal,
    pretrain_vae,
    save_snapshot,
    warmup_signal_adapters,
)
from atoms.training.protocols import FINETUNE_CLASSES, PRETRAIN_CLASSES
from commands.base import (
    CommandContext,
    CommandDefinition,
    CommandHandler,
    CommandResult,
    parse_band,
)

logger = structlog.get_logger(__name__)

Stage = Literal[
    "pretrain_signal",
    "finetune_signal_warmup",
    "finetune_signal",
    "pretrain_vae",
    "finetune_vae_dictionary",
]
SIGNAL_STAGES = ("pretrain_signal", "finetune_signal_warmup", "finetune_signal")
FINETUNE_STAGES = ("finetune_signal_warmup", "finetune_signal", "finetune_vae_dictionary")
# stage -> stages whose run directory it can start from
SOURCE_STAGES = {
    "finetune_signal_warmup": ("pretrain_signal",),
    "finetune_signal": ("pretrain_signal", "finetune_signal_warmup"),
    "finetune_vae_dictionary": ("pretrain_vae",),
}
ARCHITECTURE = (
    "length", "num_blocks", "num_heads", "block_kind", "context_size",
    "block_dictionary_size", "block_lam",
    "vae_dim", "vae_heads", "vae_latent", "vae_depth",
)
ADAPTER = (
    "dictionary_size", "activation", "lam", "k", "density_target",
    "apply_before_attention", "init_scale",
)
SNAPSHOT_DIR = "snapshots"
BASE_PREFIX = "base"


class RunConfig(TrainConfig):
    stage: Stage = "pretrain_signal"
    # signal task
    length: int = Field(64, ge=2)
    num_bases: int = Field(5, ge=1)
    freq_band: tuple[int, int] = LOW_BAND
    mask_observed: int = Field(16, ge=1)
    num_blocks: int = Field(2, ge=1)
    num_heads: int = Field(1, ge=1)
    block_kind: Literal["dense", "sparse"] = "dense"
    context_size: int = Field(0, ge=0)
    block_dictionary_size: int = Field(64, ge=1)
    block_lam: float = Field(0.1, ge=0)
    policy: FreezePolicy = FreezePolicy.BOTH
    # digit task
    images: Path | None = None
    labels: Path | None = None
    data_dir: Path | None = None
    data_count: int = Field(1000, ge=2)
    vae_dim: int = Field(128, ge=1)
    vae_heads: int = Field(4, ge=1)
    vae_latent: int = Field(32, ge=1)
    vae_depth: int = Field(2, ge=1)
    # fine-tuning input
    snapshot: Path | None = None

    _split_bands = field_validator("freq_band", mode="before")(parse_band)

    @model_validator(mode="after")
    def _check_stage(self) -> RunConfig:
        if self.stage in FINETUNE_STAGES and self.snapshot is None:
            raise ValueError(f"stage {self.stage} needs a snapshot directory")
        if (self.images is None) != (self.labels is None):
            raise ValueError("images and labels must be given together")
        if self.policy is FreezePolicy.FULL_MODEL and self.stage in FINETUNE_STAGES:
            raise ValueError("full_model is not a fine-tuning policy")
        if self.stage in SIGNAL_STAGES:
            self.spec()
        return self

    def spec(self) -> FourierTaskSpec:
        return FourierTaskSpec(
            length=self.length,
            num_bases=self.num_bases,
            freq_band=self.freq_band,
            mask_observed=self.mask_observed,
            seed=self.seed,
        )


class RestoredRun(NamedTuple):
    config: RunConfig
    model: SignalModel | DigitVae


def read_run_config(run_dir: Path) -> RunConfig:
    manifest = Path(run_dir) / MANIFEST_FILE
    if not manifest.exists():
        raise FileNotFoundError(f"run manifest not found: {manifest}")
    try:
        payload = json.loads(manifest.read_text(encoding="utf-8"))
        return RunConfig.model_validate(payload["config"])
    except (KeyError, json.JSONDecodeError) as exc:
        raise FormatError(f"{manifest}: {exc}") from exc


def build_model(cfg: RunConfig) -> SignalModel | DigitVae:
    if cfg.stage in SIGNAL_STAGES:
        return SignalModel(
            cfg.seed,
            length=cfg.length,
            num_blocks=cfg.num_blocks,
            num_heads=cfg.num_heads,
            block_kind=cfg.block_kind,
            context_size=cfg.context_size,
            sparse_config=AdapterConfig(
                dictionary_size=cfg.block_dictionary_size, lam=cfg.block_lam
            ),
        )
    return DigitVae(
        cfg.seed, dim=cfg.vae_dim, heads=cfg.vae_heads,
        latent=cfg.vae_latent, depth=cfg.vae_depth,
    )


def restore_run(run_dir: Path) -> RestoredRun:
    """Rebuild the model of a finished run, adapters included."""
    cfg = read_run_config(run_dir)
    store = FileTensorStore(Path(run_dir) / SNAPSHOT_DIR)
    model = build_model(cfg)
    if cfg.stage in FINETUNE_STAGES:
        base = load_snapshot(store, BASE_PREFIX)
        model.attach_adapters(cfg.adapter, 0)
        tuned = {
            name: value for name, value in load_snapshot(store, cfg.stage).items()
            if name.startswith("adapters.")
        }
        state = {**base, **tuned}
    else:
        state = load_snapshot(store, cfg.stage)
    if not state:
        raise FileNotFoundError(f"no snapshot tensors under {store.root}")
    model.load_state_dict(state)
    return RestoredRun(cfg, model)


def load_digits(cfg: RunConfig, classes: tuple[int, ...]) -> DigitDataset:
    if cfg.images is not None and cfg.labels is not None:
        data = load_idx(cfg.images, cfg.labels)
    elif cfg.data_dir is not None:
        data = load_exported(cfg.data_dir)
    else:
        return synth_digits(cfg.seed, cfg.data_count, classes)
    return data.subset(classes).take(cfg.data_count)


class RunHandler(CommandHandler):
    def check_paths(self, config: RunConfig) -> None:
        for path in (config.images, config.labels):
            if path is not None and not path.is_file():
                raise FileNotFoundError(f"data file not found: {path}")
        if config.data_dir is not None and not config.data_dir.is_dir():
            raise FileNotFoundError(f"data directory not found: {config.data_dir}")
        if config.snapshot is not None:
            snapshots = config.snapshot / SNAPSHOT_DIR
            if not snapshots.is_dir():
                raise FileNotFoundError(f"snapshot not found: {snapshots}")

    def execute(self, config: RunConfig, context: CommandContext) -> CommandResult:
        store = FileTensorStore(context.out_dir / SNAPSHOT_DIR)
        logger.info("run_invoked", stage=config.stage)

        if config.stage == "pretrain_signal":
            report = pretrain_signal(config.spec(), build_model(config), config, store)
            bundles: list[Path] = []
        elif config.stage == "pretrain_vae":
            data = load_digits(config, PRETRAIN_CLASSES)
            report = pretrain_vae(data, build_model(config), config, store)
            bundles = []
        else:
            config, report, bundles = self._finetune(config, context.out_dir, store)

        outputs = [
            write_history(context.out_dir / "history.csv", report),
            write_usage(context.out_dir / "usage.csv", report),
            write_summary(context.out_dir / "summary.json", report),
            *sorted(store.root.rglob("*.atns")),
            *bundles,
        ]
        summary = {
            "stage": report.stage,
            "epochs_completed": report.epochs_completed,
            "final_eval_loss": report.final_eval_loss,
        }
        return CommandResult(
            tuple(outputs),
            {**summary, "diverged": report.diverged},
            failed=report.diverged,
            config=config.model_dump(mode="json"),
        )

    def _finetune(
        self, config: RunConfig, out_dir: Path, store: FileTensorStore
    ) -> tuple[RunConfig, RunReport, list[Path]]:
        """
        Architecture fields come from the source run, not the fine-tune config;
        starting from a warm-up run also inherits its adapter settings.
        """
        assert config.snapshot is not None
        source = restore_run(config.snapshot)
        allowed = SOURCE_STAGES[config.stage]
        if source.config.stage not in allowed:
            raise ConfigError(
                f"{config.snapshot} holds a {source.config.stage} run, "
                f"{config.stage} needs {' or '.join(allowed)}"
            )
        inherited: tuple[str, ...] = ARCHITECTURE
        if source.config.stage == WARMUP_STAGE:
            inherited += ADAPTER
        config = config.model_copy(
            update={name: getattr(source.config, name) for name in inherited}
        )
        model = source.model
        if config.stage == WARMUP_STAGE:
            assert isinstance(model, SignalModel)
            report = warmup_signal_adapters(
                config.spec(), model, config.adapter, config, store
            )
        elif isinstance(model, SignalModel):
            report = finetune_signal(
                config.spec(), model, config.adapter, config.policy, config, store
            )
        else:
            data = load_digits(config, FINETUNE_CLASSES)
            report = finetune_vae_dictionary(
                data, model, config.dictionary_size, config, store
            )
        if report.diverged:
            return config, report, []
        save_snapshot(store, BASE_PREFIX, model.base_state())
        bundles = []
        for i, adapter in enumerate(model.adapters):
            directory = save_bundle(out_dir / "adapters" / f"layer{i}", adapter)
            bundles.extend(sorted(p for p in directory.iterdir() if p.is_file()))
        return config, report, bundles


run_command = CommandDefinition(
    name="run",
    description="Run one training stage and write history, summary and snapshots.",
    config_model=RunConfig,
)
