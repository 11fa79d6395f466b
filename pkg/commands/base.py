"""
Command plumbing shared by gen-data, run and analyze.

A command is a CommandDefinition (name, description, config model) bound to
a CommandHandler; the registry maps names to both.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field

from atoms.errors import ConfigError


class CommandConfig(BaseModel):
    """Flat experiment configuration; keys are field names, unknown keys rejected."""
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    seed: int = Field(0, ge=0, lt=2**64)


@dataclass(frozen=True)
class CommandContext:
    command: str
    out_dir: Path
    seed: int


@dataclass(frozen=True)
class CommandResult:
    outputs: tuple[Path, ...]
    summary: Mapping[str, Any] = field(default_factory=dict)
    failed: bool = False
    config: Mapping[str, Any] | None = None

    @classmethod
    def success(cls, outputs: Sequence[Path], **summary: Any) -> CommandResult:
        return cls(tuple(outputs), summary)

    @classmethod
    def partial(cls, outputs: Sequence[Path], **summary: Any) -> CommandResult:
        """Outputs were written but the computation stopped early."""
        return cls(tuple(outputs), summary, failed=True)


class CommandHandler(ABC):
    @abstractmethod
    def execute(self, config: Any, context: CommandContext) -> CommandResult: ...

    def check_paths(self, config: Any) -> None:
        """Raise before any compute starts if a referenced input is missing."""


@dataclass(frozen=True)
class CommandDefinition:
    name: str
    description: str
    config_model: type[BaseModel]

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("command name cannot be empty")


class CommandRegistry:
    def __init__(self) -> None:
        self._commands: dict[str, tuple[CommandDefinition, CommandHandler]] = {}

    def register(self, definition: CommandDefinition, handler: CommandHandler) -> None:
        if definition.name in self._commands:
            raise ValueError(f"command {definition.name!r} already registered")
        self._commands[definition.name] = (definition, handler)

    def get(self, name: str) -> tuple[CommandDefinition, CommandHandler]:
        if name not in self._commands:
            raise ConfigError(f"unknown command {name!r}")
        return self._commands[name]

    def definitions(self) -> list[CommandDefinition]:
        return [definition for definition, _ in self._commands.values()]


def require_dir(path: Path | None, what: str) -> Path:
    if path is None:
        raise ConfigError(f"{what} is required")
    if not Path(path).is_dir():
        raise FileNotFoundError(f"{what} not found: {path}")
    return Path(path)


def parse_band(value: Any) -> Any:
    """'25..32' → (25, 32)."""
    if isinstance(value, str) and ".." in value:
        return tuple(part.strip() for part in value.split("..", 1))
    return value
