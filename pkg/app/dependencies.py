"""
Dependency Injection wiring.

Connects command definitions to their handlers.
"""

from functools import lru_cache

from commands.analyze import (
    CostHandler,
    DuelHandler,
    ExpansionHandler,
    InfluenceHandler,
    SelectAtomsHandler,
    SweepHandler,
    cost_command,
    duel_command,
    expansion_command,
    influence_command,
    select_atoms_command,
    sweep_command,
)
from commands.base import CommandRegistry
from commands.gen_data import GenDataHandler, gen_data_command
from commands.run import RunHandler, run_command


@lru_cache
def get_command_registry() -> CommandRegistry:
    registry = CommandRegistry()

    registry.register(gen_data_command, GenDataHandler())
    registry.register(run_command, RunHandler())

    # Analyses
    registry.register(cost_command, CostHandler())
    registry.register(influence_command, InfluenceHandler())
    registry.register(select_atoms_command, SelectAtomsHandler())
    registry.register(duel_command, DuelHandler())
    registry.register(expansion_command, ExpansionHandler())
    registry.register(sweep_command, SweepHandler())

    return registry
