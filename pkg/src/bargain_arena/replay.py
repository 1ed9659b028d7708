"""Re-run logged transcripts through the engine and rescore them from raw text."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .agents.scripted import SequenceAgent
from .engine import EngineConfig, EpisodeRecord, run_episode, scenario_from_json
from .protocol import FormatViolation, Grammar, parse_turn


class ReplayError(ValueError):
    pass


@dataclass(frozen=True)
class ReplayedEpisode:
    line: int
    label: str
    record: EpisodeRecord
    logged: dict


def _raw_turns(entry: dict) -> list[dict]:
    turns = list(entry.get("turns") or [])
    if entry.get("violation"):
        turns.append(dict(entry["violation"], violation=True))
    return turns


def replay_entry(entry: dict, line: int = 0) -> EpisodeRecord:
    sc = scenario_from_json(entry["scenario"])
    grammars = entry.get("grammars") or {}
    bg = Grammar(grammars.get("buyer", "labeled"))
    sg = Grammar(grammars.get("seller", "labeled"))
    replies: dict[str, list[str]] = {"buyer": [], "seller": []}
    for i, turn in enumerate(_raw_turns(entry)):
        role = turn["role"]
        raw = turn.get("raw")
        if raw is None:
            raise ReplayError(f"line {line}: turn {i} has no raw text")
        if not turn.get("violation"):
            try:
                parse_turn(raw, role, bg if role == "buyer" else sg, sc.codename)
            except FormatViolation as exc:
                raise ReplayError(f"line {line}: turn {i} ({role}) unparseable: {exc}") from exc
        replies[role].append(raw)
    if not replies["buyer"]:
        raise ReplayError(f"line {line}: transcript has no buyer turns")
    buyer = SequenceAgent("buyer", replies["buyer"], bg)
    seller = SequenceAgent("seller", replies["seller"], sg)
    # logged seller turns were already accepted; one attempt reproduces them
    config = EngineConfig(seller_max_attempts=1, buyer_max_attempts=1)
    try:
        record = run_episode(buyer, seller, sc, config, seed=int(entry.get("seed", 0)))
    except IndexError as exc:
        raise ReplayError(f"line {line}: transcript ends before a terminal state ({exc})") from exc
    if buyer.calls != len(replies["buyer"]) or seller.calls != len(replies["seller"]):
        raise ReplayError(f"line {line}: transcript continues after the episode terminated")
    return record


def replay_file(path: str | Path) -> list[ReplayedEpisode]:
    path = Path(path)
    out = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ReplayError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
        out.append(ReplayedEpisode(lineno, entry.get("label", f"line{lineno}"), replay_entry(entry, lineno), entry))
    if not out:
        raise ReplayError(f"{path}: no transcripts to replay")
    return out
