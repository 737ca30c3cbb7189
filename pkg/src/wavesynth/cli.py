"""Command-line entry point: ``wavesynth <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipelines
from .agent import Td3Agent
from .baseline import StaticFirPolicy
from .classifier import ClassifierBundle, TrainingError
from .config import ConfigError, ExperimentConfig, load_config

log = logging.getLogger("wavesynth")

EXIT_CONFIG = 2
EXIT_DEPENDENCY = 3
EXIT_TRAINING = 4


class DependencyError(RuntimeError):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, help="YAML experiment config")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    p.add_argument("--out-dir", type=Path, required=True, help="run directory to create or reuse")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key, e.g. --set agent.episodes=50")
    p.add_argument("--workers", type=int, default=None, help="evaluation worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wavesynth", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-classifier", help="train the receiver classifier and write its accuracy report")
    _common(p)

    p = sub.add_parser("train-agent", help="train the FIR-synthesis agent online against a frozen classifier")
    _common(p)
    p.add_argument("--classifier", type=Path, required=True, help="directory written by train-classifier")

    p = sub.add_parser("evaluate", help="evaluate a frozen policy over the scenario's SNR grid")
    _common(p)
    p.add_argument("--classifier", type=Path, required=True)
    p.add_argument("--policy", choices=("drl", "none", "static"), required=True)
    p.add_argument("--agent", type=Path, default=None, help="directory written by train-agent (policy drl)")
    p.add_argument("--static", type=Path, default=None,
                   help="static_fir.json to reuse (policy static); optimized on the fly if omitted")

    p = sub.add_parser("sweep-jammer", help="accuracy of all policies across jammer powers")
    _common(p)
    p.add_argument("--classifier", type=Path, required=True)
    p.add_argument("--agent", type=Path, required=True)
    p.add_argument("--static", type=Path, default=None)
    return parser


def _resolve_config(args) -> ExperimentConfig:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.workers is not None:
        overrides.append(f"evaluate.workers={args.workers}")
    return load_config(args.config, overrides)


def _load_classifier(path: Path) -> ClassifierBundle:
    if not (path / "classifier.json").is_file():
        raise DependencyError(f"no classifier checkpoint in {path}")
    return ClassifierBundle.load(path)


def _load_agent(path: Path | None) -> Td3Agent:
    if path is None or not (path / "agent.json").is_file():
        raise DependencyError(f"no agent checkpoint in {path}")
    return Td3Agent.load(path)


def _static_policy(args, cfg: ExperimentConfig, classifier, run: pipelines.RunDir) -> StaticFirPolicy:
    if args.static is not None:
        if not args.static.is_file():
            raise DependencyError(f"static FIR file {args.static} not found")
        data = json.loads(args.static.read_text())
        return StaticFirPolicy({int(k): v for k, v in data["actions"].items()}, int(data["num_classes"]))
    static = pipelines.fit_static(cfg, classifier)
    run.write_json("static_fir.json", {"actions": static.to_dict(), "num_classes": static.num_classes})
    return static


def cmd_train_classifier(args) -> int:
    cfg = _resolve_config(args)
    run = pipelines.RunDir(args.out_dir, cfg)
    bundle = pipelines.fit_classifier(cfg)
    bundle.save(run.path)
    report = pipelines.classifier_report(cfg, bundle)
    run.write_csv("classifier_report.csv", report)
    log.info("classifier validation accuracy %s", bundle.train_scenario["validation_accuracy"])
    return 0


def cmd_train_agent(args) -> int:
    cfg = _resolve_config(args)
    classifier = _load_classifier(args.classifier)
    run = pipelines.RunDir(args.out_dir, cfg)
    records = []
    episodes = []

    def on_episode(lg):
        records.extend(lg.records())
        episodes.append({"episode": lg.episode, "true_class": lg.true_class,
                         "accuracy": round(lg.accuracy, 6), "total_reward": lg.total_reward})
        log.info("episode %d class %d accuracy %.3f", lg.episode, lg.true_class, lg.accuracy)

    result = pipelines.train_agent(cfg, classifier, on_episode)
    result.agent.save(run.path)
    run.write_jsonl("train_log.jsonl", records)
    run.write_csv("train_episodes.csv", episodes)
    return 0


def cmd_evaluate(args) -> int:
    cfg = _resolve_config(args)
    classifier = _load_classifier(args.classifier)
    agent = _load_agent(args.agent) if args.policy == "drl" else None
    run = pipelines.RunDir(args.out_dir, cfg)
    static = _static_policy(args, cfg, classifier, run) if args.policy == "static" else None
    policy = pipelines.make_policy(args.policy, agent=agent, static=static, action_dim=2 * cfg.scenario.num_taps)
    rows = pipelines.evaluate_grid(cfg, classifier, policy, args.policy)
    run.write_csv(f"evaluate_{args.policy}.csv", rows)
    return 0


def cmd_sweep_jammer(args) -> int:
    cfg = _resolve_config(args)
    classifier = _load_classifier(args.classifier)
    agent = _load_agent(args.agent)
    run = pipelines.RunDir(args.out_dir, cfg)
    static = _static_policy(args, cfg, classifier, run)
    policies = {
        "drl": agent,
        "none": pipelines.make_policy("none", action_dim=2 * cfg.scenario.num_taps),
        "static": static,
    }
    run.write_csv("sweep_jammer.csv", pipelines.sweep_jammer(cfg, classifier, policies))
    return 0


COMMANDS = {
    "train-classifier": cmd_train_classifier,
    "train-agent": cmd_train_agent,
    "evaluate": cmd_evaluate,
    "sweep-jammer": cmd_sweep_jammer,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DependencyError as exc:
        print(f"missing dependency: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
