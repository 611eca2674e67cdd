"""Command-line umbrella: serve, repl, replay, simulate, eval."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .interface import DEFAULT_CONFIG, InterfaceConfig
from .kb import load_database, resolve_hash_key


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _interface_config(raw: dict) -> InterfaceConfig:
    return InterfaceConfig(
        display_k=raw.get("display_k", DEFAULT_CONFIG.display_k),
        chat_turns=raw.get("chat_turns", DEFAULT_CONFIG.chat_turns),
        include_chat=raw.get("include_chat", DEFAULT_CONFIG.include_chat),
        title=raw.get("title", DEFAULT_CONFIG.title),
    )


def _open_kb(db: str, config: dict):
    domains = config.get("domains")
    return load_database(db, domains=domains, hash_key=resolve_hash_key(config.get("hash_key")), strict=False)


@click.group()
def main() -> None:
    """Textual-interface dialogue toolkit for the MultiWOZ domain."""


@main.command()
@click.option("--db", required=True, type=click.Path(exists=True, file_okay=False), help="database directory")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="JSON config file")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8080, show_default=True, type=int)
@click.option("--ratings", type=click.Path(dir_okay=False), help="append-only ratings JSONL path")
@click.option("--console-dir", type=click.Path(file_okay=False), help="static console bundle to serve at /console")
def serve(db: str, config_path: str | None, host: str, port: int, ratings: str | None, console_dir: str | None):
    """Run the HTTP session service."""
    import uvicorn

    from .gateway import GatewayConfig, create_app

    raw = _load_config(config_path)
    kb = _open_kb(db, raw)
    gateway_config = GatewayConfig(
        interface=_interface_config(raw),
        idle_timeout_s=raw.get("idle_timeout_s", 7200.0),
        ratings_path=Path(ratings or raw.get("ratings_path", "ratings.jsonl")),
        console_dir=Path(console_dir) if console_dir else None,
    )
    uvicorn.run(create_app(kb, gateway_config), host=host, port=port, log_level="warning")


@main.command()
@click.option("--db", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
def repl(db: str, config_path: str | None):
    """Operate the interface interactively from the terminal."""
    from .gateway import run_repl

    raw = _load_config(config_path)
    kb = _open_kb(db, raw)
    sys.exit(run_repl(kb, _interface_config(raw)))


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True), help="dialogue file (native JSON) or MultiWOZ 2.2 directory")
@click.option("--db", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="training records JSONL")
@click.option("--report", "report_path", type=click.Path(dir_okay=False), help="consistency report JSON")
@click.option("--format", "fmt", type=click.Choice(["auto", "native", "multiwoz22"]), default="auto", show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
def replay(data: str, db: str, out: str, report_path: str | None, fmt: str, config_path: str | None):
    """Re-process annotated dialogues into training records."""
    from .multiwoz22 import load_multiwoz22
    from .replay import consistency_report, export_corpus, format_report, load_dialogues, replay_corpus, write_jsonl

    raw = _load_config(config_path)
    kb = _open_kb(db, raw)
    path = Path(data)
    if fmt == "auto":
        fmt = "multiwoz22" if path.is_dir() else "native"
    dialogues = load_multiwoz22(path) if fmt == "multiwoz22" else load_dialogues(path)
    trajectories = replay_corpus(dialogues, kb, _interface_config(raw))
    records = export_corpus(trajectories)
    count = write_jsonl(records, out)
    report = consistency_report(trajectories)
    if report_path:
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
    click.echo(format_report(report))
    click.echo(f"exported {count} records from {report['overall']['consistent']} consistent dialogues to {out}")


@main.command()
@click.option("--goals", "goals_path", type=click.Path(exists=True, dir_okay=False), help="goal file (baseline policy)")
@click.option("--policy", type=click.Choice(["baseline", "playback"]), default="baseline", show_default=True)
@click.option("--records", "records_path", type=click.Path(exists=True, dir_okay=False), help="training records JSONL (playback policy)")
@click.option("--episodes", default=0, type=int, help="episode count; 0 = one per goal")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--max-turns", default=20, show_default=True, type=int)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), help="report JSON")
@click.option("--db", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
def simulate(goals_path, policy, records_path, episodes, seed, max_turns, out_path, db, config_path):
    """Run scripted episodes (baseline) or score playback fidelity."""
    raw = _load_config(config_path)
    kb = _open_kb(db, raw)
    if policy == "playback":
        if not records_path:
            raise click.UsageError("--records is required for the playback policy")
        from .actions import ActToken, START
        from .agent import PlaybackPolicy
        from .evaluation import act_and_search_accuracy

        records = [json.loads(line) for line in open(records_path, encoding="utf-8") if line.strip()]
        playback = PlaybackPolicy(records)
        predictions = [playback.decide(START, "") for _ in records]
        gold = [(ActToken(r["act"]), r["target"]) for r in records]
        next_act, search_acc = act_and_search_accuracy(predictions, gold)
        report = {"policy": "playback", "records": len(records), "next_act_acc": next_act, "search_acc": search_acc}
    else:
        if not goals_path:
            raise click.UsageError("--goals is required for the baseline policy")
        from .agent import BaselinePolicy, UserSimulator, load_goals, run_episode

        goals = load_goals(goals_path)
        results = []
        runs = episodes or len(goals)
        for index in range(runs):
            goal = goals[index % len(goals)]
            outcome = run_episode(
                UserSimulator(goal, seed=seed + index),
                BaselinePolicy(goal),
                kb,
                max_turns=max_turns,
                config=_interface_config(raw),
            )
            results.append(
                {
                    "goal": index % len(goals),
                    "success": outcome.success,
                    "turns": outcome.turns,
                    "contradictions": outcome.contradictions,
                    "failure_reasons": outcome.failure_reasons,
                }
            )
        rate = 100.0 * sum(r["success"] for r in results) / len(results) if results else 0.0
        report = {"policy": "baseline", "episodes": len(results), "success_rate": rate, "results": results}
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
    summary = {k: v for k, v in report.items() if k != "results"}
    click.echo(json.dumps(summary, indent=2))


@main.group(name="eval")
def eval_group() -> None:
    """Evaluation metrics."""


@eval_group.command()
@click.option("--hyp", required=True, type=click.Path(exists=True, dir_okay=False), help="hypotheses, one per line")
@click.option("--ref", required=True, type=click.Path(exists=True, dir_okay=False), help="references, one per line")
def bleu(hyp: str, ref: str):
    """Sentence-level BLEU, averaged over lines."""
    from .evaluation import corpus_bleu

    hyps = Path(hyp).read_text(encoding="utf-8").splitlines()
    refs = Path(ref).read_text(encoding="utf-8").splitlines()
    if len(hyps) != len(refs):
        raise click.UsageError(f"{len(hyps)} hypotheses vs {len(refs)} references")
    pairs = list(zip(hyps, refs))
    click.echo(json.dumps({"sentences": len(pairs), "bleu": corpus_bleu(pairs)}, indent=2))


@eval_group.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--db", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--fixed-response", is_flag=True, help="also run the fixed-response audit")
@click.option("--out", "out_path", type=click.Path(dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
def informsuccess(corpus_path, db, fixed_response, out_path, config_path):
    """Inform/Success scores over an evaluation corpus."""
    from .evaluation import fixed_response_audit, inform_success, load_eval_corpus

    raw = _load_config(config_path)
    kb = _open_kb(db, raw)
    corpus = load_eval_corpus(corpus_path)
    if fixed_response:
        audit = fixed_response_audit(corpus, kb)
        report = {
            "original": audit["original"],
            "fixed_response": audit["fixed_response"],
            "exploit": audit["exploit"],
        }
    else:
        scored = inform_success(corpus, kb)
        report = {"inform": scored.inform, "success": scored.success, "details": scored.details}
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
    click.echo(json.dumps({k: v for k, v in report.items() if k != "details"}, indent=2))


@main.command()
def openapi():
    """Print the HTTP API description as OpenAPI JSON."""
    from .gateway import create_app
    from .kb import KnowledgeBase

    app = create_app(KnowledgeBase({}, hash_key=resolve_hash_key(None)))
    click.echo(json.dumps(app.openapi(), indent=2))


if __name__ == "__main__":
    main()
