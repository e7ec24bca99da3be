"""Command-line frontend: generate, simulate, inspect-tree, interactive."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .backend import active_backend
from .config import ConfigError, config_echo, load_config
from .data import (
    DataError,
    filter_density,
    generate_synthetic,
    load_ratings,
    semi_binarize,
    write_ratings,
)
from .simulate import make_tree_config, prepare_partition, run_comparison
from .tree import BranchLabel, SingleItem, build_tree


def _add_common(parser):
    parser.add_argument("--config", required=True, help="path to the YAML run config")
    parser.add_argument("--out", default=None, help="output directory (default: config output_dir or '.')")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="coldstart",
        description="Decision-tree rating elicitation simulator for cold-start recommendation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic ratings dataset")
    _add_common(p)

    p = sub.add_parser("simulate", help="run the configured elicitation strategies")
    _add_common(p)

    p = sub.add_parser("inspect-tree", help="print the elicitation tree built from the initial known ratings")
    _add_common(p)
    p.add_argument("--strategy", default=None, help="strategy label to inspect (default: first tree strategy)")
    p.add_argument("--depth", type=int, default=3, help="depth limit of the dump")
    p.add_argument("--json", action="store_true", help="emit JSON instead of indented text")

    p = sub.add_parser("interactive", help="answer tree queries interactively on the terminal")
    _add_common(p)
    p.add_argument("--strategy", default=None, help="strategy label to run (default: first tree strategy)")
    return parser


def _out_dir(args, cfg):
    out = args.out or cfg.output_dir or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(path, command, cfg, extra=None):
    manifest = {
        "command": command,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "seed": cfg.seed,
        "versions": {
            "coldstart": __version__,
            "numpy": np.__version__,
            "kernel_backend": active_backend(),
        },
        "config": config_echo(cfg),
    }
    if extra:
        manifest.update(extra)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_dataset(cfg):
    if cfg.synthetic is not None:
        dataset = generate_synthetic(cfg.synthetic)
    elif cfg.dataset_path is not None:
        dataset = load_ratings(cfg.dataset_path)
    else:
        raise ConfigError("config names neither a dataset path nor a synthetic block")
    return filter_density(dataset, cfg.min_user_ratings, cfg.min_item_ratings)


def _pick_strategy(cfg, label):
    sims = cfg.sim_configs()
    if not sims:
        raise ConfigError("config defines no strategies")
    if label is None:
        for sim in sims:
            if sim.strategy.name.startswith(("tree", "pairwise")):
                return sim
        return sims[0]
    for sim in sims:
        if sim.strategy.label == label:
            return sim
    valid = ", ".join(s.strategy.label for s in sims)
    raise ConfigError(f"no strategy labelled {label!r} in config (have: {valid})")


def _initial_partition(cfg, sim):
    dataset = _load_dataset(cfg)
    if sim.semi_binary:
        dataset = semi_binarize(dataset)
    return prepare_partition(dataset, sim.split, sim.seed)


def cmd_generate(args):
    cfg = load_config(args.config, seed_override=args.seed)
    if cfg.synthetic is None:
        raise ConfigError("generate requires a dataset.synthetic block in the config")
    out = _out_dir(args, cfg)
    dataset = generate_synthetic(cfg.synthetic)
    data_path = out / "ratings.tsv"
    write_ratings(dataset, data_path)
    _write_manifest(
        out / "manifest.json",
        "generate",
        cfg,
        extra={
            "outputs": {"ratings": data_path.name},
            "dataset": {
                "users": len(dataset.users),
                "items": len(dataset.items),
                "ratings": dataset.n_ratings,
            },
        },
    )
    print(f"wrote {dataset.n_ratings} ratings to {data_path}")
    return 0


def cmd_simulate(args):
    cfg = load_config(args.config, seed_override=args.seed)
    sims = cfg.sim_configs()
    if not sims:
        raise ConfigError("config defines no strategies to simulate")
    out = _out_dir(args, cfg)
    dataset = _load_dataset(cfg)
    result = run_comparison(dataset, sims)
    results_path = out / "results.csv"
    with open(results_path, "w") as fh:
        for line in result.csv_lines():
            fh.write(line + "\n")
    _write_manifest(
        out / "manifest.json",
        "simulate",
        cfg,
        extra={
            "outputs": {"results": results_path.name},
            "curves": [
                {"label": label, "scale": result.scales[label]} for label in result.curves
            ],
        },
    )
    print(f"wrote {results_path}")
    return 0


def cmd_inspect_tree(args):
    if args.depth < 1:
        raise ConfigError("--depth must be >= 1")
    cfg = load_config(args.config, seed_override=args.seed)
    sim = _pick_strategy(cfg, args.strategy)
    if sim.strategy.name in ("popularity", "variance", "entropy", "helf", "random"):
        raise ConfigError(f"strategy {sim.strategy.label!r} is not tree-based")
    partition = _initial_partition(cfg, sim)
    tree_cfg = make_tree_config(sim)
    tree_cfg = dataclasses.replace(tree_cfg, max_depth=min(tree_cfg.max_depth, args.depth))
    tree = build_tree(partition.known, partition.known.users, tree_cfg)
    if args.json:
        print(json.dumps(tree.to_dict(), indent=2))
    else:
        print(tree.format_text())
    return 0


_SINGLE_ANSWERS = {
    "like": BranchLabel.LOVER,
    "l": BranchLabel.LOVER,
    "dislike": BranchLabel.HATER,
    "d": BranchLabel.HATER,
    "skip": BranchLabel.UNKNOWN,
    "s": BranchLabel.UNKNOWN,
}
_PAIR_ANSWERS = {
    "first": BranchLabel.PREFER_FIRST,
    "f": BranchLabel.PREFER_FIRST,
    "second": BranchLabel.PREFER_SECOND,
    "2": BranchLabel.PREFER_SECOND,
    "same": BranchLabel.INDIFFERENT,
    "s": BranchLabel.INDIFFERENT,
}


def cmd_interactive(args):
    cfg = load_config(args.config, seed_override=args.seed)
    sim = _pick_strategy(cfg, args.strategy)
    if sim.strategy.name in ("popularity", "variance", "entropy", "helf", "random"):
        raise ConfigError(f"strategy {sim.strategy.label!r} is not tree-based")
    partition = _initial_partition(cfg, sim)
    tree = build_tree(partition.known, partition.known.users, make_tree_config(sim), lazy=True)

    answers = {}
    path = []
    step = 0
    while True:
        query = tree.next_query(answers)
        if query is None:
            print("reached a leaf; no further queries")
            break
        step += 1
        if isinstance(query, SingleItem):
            kind = tree.matrix.item_type(query.item).value
            prompt = f"[{step}] rate {kind} {query.item} (like/dislike/skip, q to quit): "
            table = _SINGLE_ANSWERS
        else:
            kind = tree.matrix.item_type(query.first).value
            prompt = (
                f"[{step}] compare {kind} {query.first} vs {kind} {query.second} "
                "(first/second/same, q to quit): "
            )
            table = _PAIR_ANSWERS
        try:
            raw = input(prompt)
        except EOFError:
            print()
            break
        raw = raw.strip().lower()
        if raw in ("q", "quit"):
            break
        label = table.get(raw)
        if label is None:
            print(f"  unrecognized answer {raw!r}")
            step -= 1
            continue
        answers[query] = label
        path.append((query, label))
    print(f"path taken ({len(path)} answer(s)):")
    for k, (query, label) in enumerate(path, start=1):
        print(f"  {k}. {query} -> {label.value}")
    return 0


def main(argv=None):
    args = _build_parser().parse_args(argv)
    commands = {
        "generate": cmd_generate,
        "simulate": cmd_simulate,
        "inspect-tree": cmd_inspect_tree,
        "interactive": cmd_interactive,
    }
    try:
        return commands[args.command](args)
    except (ConfigError, DataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
