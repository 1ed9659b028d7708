"""Turn-producing agents.

Every agent exposes ``role``, ``grammar`` and
``next_turn(visible_history, side_context, rng_seed) -> str``; the history
holds public turn texts only, buyer first.
"""

from typing import Protocol, Sequence

from ..protocol import Grammar, Role
from .prompts import (
    ContextFacts,
    Persona,
    PersonaSpec,
    assemble_buyer_prompt,
    assemble_seller_prompt,
    buyer_system_prompt,
    parse_context,
    seller_system_prompt,
)
from .remote import RemoteAgent, RemoteModelConfig, RemoteStatusError, TransportError, remote_next_turn
from .scripted import ScriptedAgent, ScriptedPolicy, SequenceAgent, StateView, scripted_next_turn


class Agent(Protocol):
    role: Role
    grammar: Grammar

    def next_turn(self, visible_history: Sequence[str], side_context: str, rng_seed: int) -> str: ...


__all__ = [
    "Agent",
    "ContextFacts",
    "Persona",
    "PersonaSpec",
    "RemoteAgent",
    "RemoteModelConfig",
    "RemoteStatusError",
    "ScriptedAgent",
    "ScriptedPolicy",
    "SequenceAgent",
    "StateView",
    "TransportError",
    "assemble_buyer_prompt",
    "assemble_seller_prompt",
    "buyer_system_prompt",
    "parse_context",
    "remote_next_turn",
    "scripted_next_turn",
    "seller_system_prompt",
]
