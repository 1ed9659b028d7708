"""Command line surface: ``bargain-arena {simulate,evaluate,train-toy,replay,report}``.

Flag names for the generation and batching knobs are kept identical to the
hyperparameter names they configure (``--batch_size``, ``--max_tokens`` ...).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Sequence

from . import __version__
from .agents import Persona, PersonaSpec, RemoteAgent, RemoteModelConfig, ScriptedAgent, ScriptedPolicy
from .catalog import CatalogError, ScenarioError, SplitSpec, load_catalog, scenarios_from_products, split, synth_scenarios, write_split_manifest
from .engine import EngineConfig, EpisodeAborted, EpisodeRecord, derive_seed, run_episode, write_transcripts
from .errors import UsageError
from .grpo_lab import TrainConfig, default_training_seller, train_policy
from .metrics import MetricsSummary, aggregate, export_curves, outcome_row, write_report
from .replay import ReplayError, replay_file

log = logging.getLogger("bargain_arena")

SNAPSHOT = "config.snapshot"


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs, straight from the parsed flags."""

    mode: str
    options: dict

    def __post_init__(self):
        required = {
            "simulate": ("seed", "out", "max_turns"),
            "evaluate": ("seed", "out", "max_turns", "group_size", "max_tokens"),
            "train-toy": ("seed", "out", "batch_size", "group_size", "iterations", "learning_rate"),
            "replay": ("transcripts",),
            "report": ("runs",),
        }
        if self.mode not in required:
            raise UsageError(f"unknown mode {self.mode!r}")
        missing = [k for k in required[self.mode] if self.options.get(k) is None]
        if missing:
            raise UsageError(f"{self.mode}: missing {', '.join(missing)}")

    def __getattr__(self, name):
        try:
            return self.__dict__["options"][name]
        except KeyError:
            raise AttributeError(name) from None


def _write_snapshot(cfg: RunConfig, out: Path) -> None:
    body = {"mode": cfg.mode, "version": __version__, **{k: v for k, v in cfg.options.items() if k != "func"}}
    (out / SNAPSHOT).write_text(json.dumps(body, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scenarios(cfg: RunConfig, out: Path):
    if cfg.catalog:
        products = load_catalog(cfg.catalog)
        test_count = cfg.test_count if cfg.test_count is not None else len(products)
        train, test = split(products, SplitSpec(cfg.seed, cfg.train_count, test_count))
        write_split_manifest(train, test, out / "split.manifest")
        pool = scenarios_from_products(test, cfg.seed, cfg.ci_fraction, max_turns=cfg.max_turns)
    else:
        pool = synth_scenarios(cfg.seed, cfg.scenarios, ci_fraction=cfg.ci_fraction, max_turns=cfg.max_turns)
    if not pool:
        raise UsageError("no scenarios to run")
    return pool


def _write_summary(named: Sequence[tuple[str, MetricsSummary]], out: Path) -> str:
    return write_report(named, out / "summary.csv", out / "summary.md")


def _rows_csv(records: Sequence[EpisodeRecord], path: Path) -> None:
    cols = ["codename", "class", "seed", "outcome", "price_final", "reward", "bargained_ratio",
            "first_offer_ratio", "overshoot", "turns_used"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for rec in records:
            r = outcome_row(rec)
            w.writerow([rec.scenario.codename, r.scenario_class.value, rec.seed, rec.outcome.kind,
                        "" if r.price_final is None else f"{r.price_final:.2f}", repr(r.reward),
                        "" if r.bargained_ratio is None else repr(r.bargained_ratio),
                        "" if r.first_offer_ratio is None else repr(r.first_offer_ratio),
                        int(r.overshoot), r.turns_used])


# ---------------------------------------------------------------------------
# subcommands


def _policy(prefix: str, cfg: RunConfig) -> ScriptedPolicy:
    o = cfg.options
    return ScriptedPolicy(
        prefix,
        opening_ratio=o[f"{prefix}_opening"],
        concession_step=o[f"{prefix}_step"],
        stubbornness=o[f"{prefix}_stubbornness"],
        respect_limit=not o[f"{prefix}_ignore_limit"],
        offset=Decimal(str(o[f"{prefix}_offset"])),
    )


def cmd_simulate(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    try:
        buyer, seller = ScriptedAgent(_policy("buyer", cfg)), ScriptedAgent(_policy("seller", cfg))
    except ValueError as exc:
        raise UsageError(f"invalid scripted policy: {exc}") from exc
    engine = EngineConfig(seller_max_attempts=cfg.seller_max_attempts)
    records = []
    for i, sc in enumerate(_scenarios(cfg, out)):
        for g in range(cfg.group_size):
            records.append(run_episode(buyer, seller, sc, engine, derive_seed(cfg.seed, "episode", i, g)))
    write_transcripts(records, out / "transcripts.jsonl")
    _rows_csv(records, out / "episodes.csv")
    _write_snapshot(cfg, out)
    print(_write_summary([("scripted", aggregate([outcome_row(r) for r in records]))], out), end="")
    return 0


def _remote_config(cfg: RunConfig, model: str | None, temperature: float) -> RemoteModelConfig:
    try:
        return RemoteModelConfig.from_env(model, cfg.endpoint, temperature=temperature,
                                          max_tokens=cfg.max_tokens, max_retries=cfg.max_retries)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_evaluate(cfg: RunConfig) -> int:
    buyer_cfg = _remote_config(cfg, cfg.model, cfg.buyer_temperature)
    persona = PersonaSpec.of(cfg.persona)
    if cfg.seller == "remote":
        seller_cfg = _remote_config(cfg, cfg.seller_model or buyer_cfg.model_name, cfg.seller_temperature)
        seller = RemoteAgent(seller_cfg, "seller", persona)
    else:
        if persona.kind is not Persona.DEFAULT:
            log.warning("persona %s has no effect on a scripted seller", persona.kind.value)
        seller = ScriptedAgent(default_training_seller())
    out = _out_dir(cfg)
    scenarios = _scenarios(cfg, out)
    _write_snapshot(cfg, out)
    buyer = RemoteAgent(buyer_cfg, "buyer")
    engine = EngineConfig(seller_max_attempts=cfg.seller_max_attempts)
    jobs = [(sc, derive_seed(cfg.seed, "episode", i, g)) for i, sc in enumerate(scenarios) for g in range(cfg.group_size)]

    def one(job):
        sc, seed = job
        try:
            return run_episode(buyer, seller, sc, engine, seed)
        except EpisodeAborted as exc:
            log.error("episode %s (seed %d) excluded: %s", sc.codename, seed, exc.cause)
            return exc

    with ThreadPoolExecutor(max_workers=cfg.concurrency) as pool:
        results = list(pool.map(one, jobs))
    records = [r for r in results if isinstance(r, EpisodeRecord)]
    aborted = len(results) - len(records)
    write_transcripts(records, out / "transcripts.jsonl")
    _rows_csv(records, out / "episodes.csv")
    if not records:
        log.error("all %d episodes aborted", aborted)
        return 2
    summary = aggregate([outcome_row(r) for r in records], aborted=aborted)
    print(_write_summary([(buyer_cfg.model_name, summary)], out), end="")
    if aborted:
        print(f"{aborted} of {len(results)} episodes aborted and excluded")
    return 0


def cmd_train_toy(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    tc = TrainConfig(batch_size=cfg.batch_size, group_size=cfg.group_size, iterations=cfg.iterations,
                     learning_rate=cfg.learning_rate, seed=cfg.seed, max_turns=cfg.max_turns,
                     advantage_norm=cfg.advantage_norm)
    scenarios = synth_scenarios(cfg.seed, cfg.scenarios, ci_fraction=cfg.ci_fraction, max_turns=cfg.max_turns)
    _write_snapshot(cfg, out)
    result = train_policy(tc, scenarios, default_training_seller())
    export_curves(result.summaries, out / "curves.csv", split=cfg.ci_fraction > 0)
    (out / "seed.record").write_text(
        f"seed\t{cfg.seed}\nscenario_pool\tsynth_scenarios(seed={cfg.seed}, count={cfg.scenarios})\n"
        "scenario_pick\trandom.Random(seed).randrange per group\n"
        "rollout_seed\tderive_seed(seed, 'iter', iteration, group)\n", encoding="utf-8")
    (out / "policy.txt").write_text("".join(f"{k}\t{v!r}\n" for k, v in result.policy.as_table()), encoding="utf-8")
    last = result.summaries[-1] if result.summaries else None
    print(f"{len(result.summaries)} iterations, {result.episodes} episodes")
    if last is not None:
        print(f"final reward {last.reward.mean:.4f}, overshoot {last.overshoot_rate.mean:.4f}")
    return 0


def cmd_replay(cfg: RunConfig) -> int:
    try:
        replayed = replay_file(cfg.transcripts)
    except (ReplayError, OSError) as exc:
        raise UsageError(str(exc)) from exc
    records = [r.record for r in replayed]
    mismatches = 0
    for r in replayed:
        logged = r.logged.get("reward")
        if logged is not None and abs(float(logged) - r.record.reward) > 1e-12:
            mismatches += 1
            log.warning("line %d: logged reward %r, recomputed %r", r.line, logged, r.record.reward)
    if cfg.out:
        out = _out_dir(cfg)
        _rows_csv(records, out / "episodes.csv")
        _write_summary([("replay", aggregate([outcome_row(r) for r in records]))], out)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["label", "outcome", "price_final", "reward", "bargained_ratio", "first_offer_ratio", "turns_used"])
    for r in replayed:
        row = outcome_row(r.record)
        w.writerow([r.label, r.record.outcome.kind, "" if row.price_final is None else f"{row.price_final:.2f}",
                    f"{row.reward:.6f}", "" if row.bargained_ratio is None else f"{row.bargained_ratio:.6f}",
                    "" if row.first_offer_ratio is None else f"{row.first_offer_ratio:.6f}", row.turns_used])
    return 1 if mismatches else 0


def cmd_report(cfg: RunConfig) -> int:
    named = []
    for spec in cfg.runs:
        name, _, path = spec.rpartition("=")
        path = Path(path)
        if path.is_dir():
            path = path / "transcripts.jsonl"
        try:
            records = [r.record for r in replay_file(path)]
        except (ReplayError, OSError) as exc:
            raise UsageError(str(exc)) from exc
        named.append((name or path.parent.name, aggregate([outcome_row(r) for r in records])))
    out = Path(cfg.out) if cfg.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    print(write_report(named, out / "summary.csv" if out else None, out / "summary.md" if out else None), end="")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
    "train-toy": cmd_train_toy,
    "replay": cmd_replay,
    "report": cmd_report,
}


# ---------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser, group_size: int) -> None:
    p.add_argument("--snapshot", help="config.snapshot of an earlier run; explicit flags still win")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--max_turns", type=int, default=6)
    p.add_argument("--group_size", type=int, default=group_size, help="episodes per scenario")


def _scenario_source(p: argparse.ArgumentParser, scenarios: int) -> None:
    p.add_argument("--catalog", help="product catalog (JSON array or JSONL)")
    p.add_argument("--train_count", type=int, default=0)
    p.add_argument("--test_count", type=int, default=None, help="default: whole catalog")
    p.add_argument("--scenarios", type=int, default=scenarios, help="synthetic scenarios when no catalog is given")
    p.add_argument("--ci_fraction", type=float, default=0.0, help="share of conflict-of-interest scenarios")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bargain-arena", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="mode", required=True)
    ap.set_defaults(_subparsers=sub.choices)

    sim = sub.add_parser("simulate", help="scripted buyer vs scripted seller")
    _common(sim, 1)
    _scenario_source(sim, 100)
    for role, opening, step in (("buyer", 0.5, 0.1), ("seller", 1.0, 0.1)):
        sim.add_argument(f"--{role}_opening", type=float, default=opening)
        sim.add_argument(f"--{role}_step", type=float, default=step)
        sim.add_argument(f"--{role}_stubbornness", type=int, default=0)
        sim.add_argument(f"--{role}_offset", type=str, default="0.00", help="added to every proposed price")
        sim.add_argument(f"--{role}_ignore_limit", action="store_true", help="allow crossing the private limit")
    sim.add_argument("--seller_max_attempts", type=int, default=3)

    ev = sub.add_parser("evaluate", help="remote model as buyer against a regulated seller")
    _common(ev, 4)
    _scenario_source(ev, 128)
    ev.add_argument("--endpoint", help="chat-completions base URL (default: $ARENA_ENDPOINT)")
    ev.add_argument("--model", help="buyer model name (default: $ARENA_MODEL)")
    ev.add_argument("--seller", choices=("remote", "scripted"), default="remote")
    ev.add_argument("--seller_model", help="seller model name (default: same as --model)")
    ev.add_argument("--persona", choices=[p.value for p in Persona], default="default")
    ev.add_argument("--max_tokens", type=int, default=4000)
    ev.add_argument("--buyer_temperature", type=float, default=1.0)
    ev.add_argument("--seller_temperature", type=float, default=0.7)
    ev.add_argument("--max_retries", type=int, default=3)
    ev.add_argument("--seller_max_attempts", type=int, default=3)
    ev.add_argument("--concurrency", type=int, default=8)

    tr = sub.add_parser("train-toy", help="group-relative policy gradient on the toy buyer")
    _common(tr, 8)
    tr.add_argument("--batch_size", type=int, default=64)
    tr.add_argument("--iterations", type=int, default=60)
    tr.add_argument("--learning_rate", type=float, default=3e-5)
    tr.add_argument("--max_tokens", type=int, default=300, help="recorded for parity; the toy policy emits no tokens")
    tr.add_argument("--advantage_norm", choices=("group", "batch"), default="group")
    tr.add_argument("--scenarios", type=int, default=256)
    tr.add_argument("--ci_fraction", type=float, default=0.0)

    rp = sub.add_parser("replay", help="rescore a transcripts file from its raw text")
    rp.add_argument("transcripts")
    rp.add_argument("--out", help="optional directory for episodes.csv and summary files")

    rep = sub.add_parser("report", help="comparison table over several runs")
    rep.add_argument("runs", nargs="+", help="NAME=PATH, where PATH is a run directory or transcripts file")
    rep.add_argument("--out")
    return ap


def _apply_snapshot(parser: argparse.ArgumentParser, args: argparse.Namespace, argv) -> argparse.Namespace:
    snap = json.loads(Path(args.snapshot).read_text(encoding="utf-8"))
    if snap.get("mode") != args.mode:
        raise UsageError(f"snapshot is for {snap.get('mode')!r}, not {args.mode!r}")
    sub = args._subparsers[args.mode]
    known = {a.dest for a in sub._actions}
    sub.set_defaults(**{k: v for k, v in snap.items() if k in known and k not in ("out", "snapshot")})
    return parser.parse_args(argv)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "snapshot", None):
        try:
            args = _apply_snapshot(parser, args, argv)
        except (UsageError, OSError, json.JSONDecodeError) as exc:
            print(f"bargain-arena {args.mode}: error: {exc}", file=sys.stderr)
            return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    options = vars(args)
    mode = options.pop("mode")
    options.pop("verbose")
    options.pop("_subparsers")
    try:
        cfg = RunConfig(mode, options)
        for key in ("group_size", "concurrency", "max_turns"):
            if options.get(key) is not None and options[key] < 1:
                raise UsageError(f"--{key} must be positive")
        return COMMANDS[mode](cfg)
    except (UsageError, CatalogError, ScenarioError) as exc:
        print(f"bargain-arena {mode}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
