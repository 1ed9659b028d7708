"""Buyer/seller price negotiation with verifiable terminal rewards."""

from .catalog import Product, Scenario, SplitSpec, load_catalog, synth_scenarios
from .engine import EngineConfig, EpisodeRecord, run_episode
from .protocol import Buy, Deal, Grammar, Quit, Reject, Sell, TurnMessage, parse_turn, serialize_turn
from .reward import surplus_reward, terminal_reward

__version__ = "0.1.0"

__all__ = [
    "Buy",
    "Deal",
    "EngineConfig",
    "EpisodeRecord",
    "Grammar",
    "Product",
    "Quit",
    "Reject",
    "Scenario",
    "Sell",
    "SplitSpec",
    "TurnMessage",
    "load_catalog",
    "parse_turn",
    "run_episode",
    "serialize_turn",
    "surplus_reward",
    "synth_scenarios",
    "terminal_reward",
]
