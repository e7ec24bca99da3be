"""Declarative run configuration: one YAML file per run.

Unknown keys anywhere in the file are rejected rather than ignored, so a
typo cannot silently fall back to a default. ``config_echo`` renders the
fully resolved configuration back into the same schema; feeding that echo to
:func:`parse_config` reproduces the run exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from .data import DataError, ItemType, SyntheticConfig
from .mf import MFHyperparams
from .simulate import SimConfig, SplitParams, StrategyParams


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


@dataclass
class StrategySpec:
    params: StrategyParams
    semi_binary: bool = None


@dataclass
class RunConfig:
    seed: int = 0
    output_dir: str = None
    dataset_path: str = None
    synthetic: SyntheticConfig = None
    min_user_ratings: int = 0
    min_item_ratings: dict = field(default_factory=dict)
    mf: MFHyperparams = field(default_factory=MFHyperparams)
    split: SplitParams = field(default_factory=SplitParams)
    n_iterations: int = 20
    strategies: list = field(default_factory=list)

    def sim_configs(self):
        """One resolved :class:`SimConfig` per configured strategy."""
        return [
            SimConfig(
                strategy=spec.params,
                mf=self.mf,
                split=self.split,
                n_iterations=self.n_iterations,
                semi_binary=spec.semi_binary,
                seed=self.seed,
            )
            for spec in self.strategies
        ]


def _mapping(raw, allowed, where):
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"'{where}' must be a mapping")
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in '{where}': {', '.join(map(str, unknown))}")
    return raw


def _int(raw, where):
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise ConfigError(f"'{where}' must be an integer, got {raw!r}")
    return raw


def _number(raw, where):
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ConfigError(f"'{where}' must be a number, got {raw!r}")
    return float(raw)


def _bool(raw, where):
    if not isinstance(raw, bool):
        raise ConfigError(f"'{where}' must be a boolean, got {raw!r}")
    return raw


def _item_type(raw, where):
    try:
        return ItemType.parse(raw)
    except DataError as exc:
        raise ConfigError(f"'{where}': {exc}") from None


def _get(raw, key, default, conv, where):
    if key not in raw or raw[key] is None:
        return default
    return conv(raw[key], f"{where}.{key}")


def parse_config(data, seed_override=None):
    """Validate a config mapping into a :class:`RunConfig`."""
    top = _mapping(
        data,
        ("seed", "output_dir", "dataset", "filter", "mf", "split", "simulation"),
        "config",
    )
    seed = _get(top, "seed", 0, _int, "config")
    if seed_override is not None:
        seed = seed_override
    output_dir = top.get("output_dir")
    if output_dir is not None and not isinstance(output_dir, str):
        raise ConfigError("'config.output_dir' must be a string")

    dataset = _mapping(top.get("dataset"), ("path", "synthetic"), "dataset")
    dataset_path = dataset.get("path")
    if dataset_path is not None and not isinstance(dataset_path, str):
        raise ConfigError("'dataset.path' must be a string")
    synthetic = None
    if dataset.get("synthetic") is not None:
        raw = _mapping(
            dataset["synthetic"],
            ("n_users", "n_artists", "n_genres", "n_factors", "density", "noise_sd", "seed"),
            "dataset.synthetic",
        )
        try:
            synthetic = SyntheticConfig(
                n_users=_get(raw, "n_users", 250, _int, "dataset.synthetic"),
                n_artists=_get(raw, "n_artists", 160, _int, "dataset.synthetic"),
                n_genres=_get(raw, "n_genres", 18, _int, "dataset.synthetic"),
                n_factors=_get(raw, "n_factors", 8, _int, "dataset.synthetic"),
                density=_get(raw, "density", 0.3, _number, "dataset.synthetic"),
                noise_sd=_get(raw, "noise_sd", 3.0, _number, "dataset.synthetic"),
                seed=_get(raw, "seed", seed, _int, "dataset.synthetic"),
            )
        except ValueError as exc:
            raise ConfigError(f"dataset.synthetic: {exc}") from None
    if dataset_path is not None and synthetic is not None:
        raise ConfigError("'dataset' must give either a path or a synthetic block, not both")

    filt = _mapping(top.get("filter"), ("min_user_ratings", "min_item_ratings"), "filter")
    min_user = _get(filt, "min_user_ratings", 0, _int, "filter")
    min_items = {}
    if filt.get("min_item_ratings") is not None:
        if not isinstance(filt["min_item_ratings"], dict):
            raise ConfigError("'filter.min_item_ratings' must map item types to counts")
        for key, val in filt["min_item_ratings"].items():
            min_items[_item_type(key, "filter.min_item_ratings")] = _int(
                val, f"filter.min_item_ratings.{key}"
            )

    mf_raw = _mapping(
        top.get("mf"),
        ("n_factors", "learning_rate", "l2_reg", "epochs", "init_sd", "seed"),
        "mf",
    )
    try:
        mf = MFHyperparams(
            n_factors=_get(mf_raw, "n_factors", 20, _int, "mf"),
            learning_rate=_get(mf_raw, "learning_rate", 0.005, _number, "mf"),
            l2_reg=_get(mf_raw, "l2_reg", 0.02, _number, "mf"),
            epochs=_get(mf_raw, "epochs", 50, _int, "mf"),
            init_sd=_get(mf_raw, "init_sd", 0.1, _number, "mf"),
            seed=_get(mf_raw, "seed", seed, _int, "mf"),
        )
    except ValueError as exc:
        raise ConfigError(f"mf: {exc}") from None

    split_raw = _mapping(
        top.get("split"),
        ("cold_fraction", "k_per_user", "t_per_user", "target_type"),
        "split",
    )
    split = SplitParams(
        cold_fraction=_get(split_raw, "cold_fraction", 0.9, _number, "split"),
        k_per_user=_get(split_raw, "k_per_user", 1, _int, "split"),
        t_per_user=_get(split_raw, "t_per_user", 30, _int, "split"),
        target_type=_get(split_raw, "target_type", ItemType.ARTIST, _item_type, "split"),
    )
    if not (0.0 <= split.cold_fraction <= 1.0):
        raise ConfigError("'split.cold_fraction' must be in [0, 1]")
    if split.k_per_user < 0 or split.t_per_user < 0:
        raise ConfigError("'split.k_per_user' and 'split.t_per_user' must be >= 0")

    sim_raw = _mapping(top.get("simulation"), ("n_iterations", "strategies"), "simulation")
    n_iterations = _get(sim_raw, "n_iterations", 20, _int, "simulation")
    if n_iterations < 1:
        raise ConfigError("'simulation.n_iterations' must be >= 1")
    strategies = []
    raw_list = sim_raw.get("strategies") or []
    if not isinstance(raw_list, list):
        raise ConfigError("'simulation.strategies' must be a list")
    for pos, entry in enumerate(raw_list):
        where = f"simulation.strategies[{pos}]"
        raw = _mapping(
            entry,
            (
                "name",
                "label",
                "semi_binary",
                "candidate_types",
                "max_depth",
                "min_node_users",
                "love_threshold",
                "pool_size",
                "bins",
            ),
            where,
        )
        if "name" not in raw:
            raise ConfigError(f"{where}: missing 'name'")
        candidate_types = None
        if raw.get("candidate_types") is not None:
            if not isinstance(raw["candidate_types"], list):
                raise ConfigError(f"{where}.candidate_types must be a list")
            candidate_types = tuple(
                _item_type(t, f"{where}.candidate_types") for t in raw["candidate_types"]
            )
        label = raw.get("label")
        if label is not None and not isinstance(label, str):
            raise ConfigError(f"{where}.label must be a string")
        try:
            params = StrategyParams(
                name=str(raw["name"]),
                label=label,
                candidate_types=candidate_types,
                max_depth=_get(raw, "max_depth", 25, _int, where),
                min_node_users=_get(raw, "min_node_users", 2, _int, where),
                love_threshold=_get(raw, "love_threshold", None, _number, where),
                pool_size=_get(raw, "pool_size", 20, _int, where),
                bins=_get(raw, "bins", 5, _int, where),
            )
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None
        semi = None
        if raw.get("semi_binary") is not None:
            semi = _bool(raw["semi_binary"], f"{where}.semi_binary")
        strategies.append(StrategySpec(params=params, semi_binary=semi))

    cfg = RunConfig(
        seed=seed,
        output_dir=output_dir,
        dataset_path=dataset_path,
        synthetic=synthetic,
        min_user_ratings=min_user,
        min_item_ratings=min_items,
        mf=mf,
        split=split,
        n_iterations=n_iterations,
        strategies=strategies,
    )
    try:
        cfg.sim_configs()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path, seed_override=None):
    """Read and validate a YAML config file."""
    with open(path) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return parse_config(data, seed_override=seed_override)


def config_echo(cfg):
    """The resolved configuration as a plain mapping in the config schema."""
    out = {
        "seed": cfg.seed,
        "output_dir": cfg.output_dir,
        "dataset": {},
        "filter": {
            "min_user_ratings": cfg.min_user_ratings,
            "min_item_ratings": {t.value: c for t, c in sorted(
                cfg.min_item_ratings.items(), key=lambda kv: kv[0].value
            )},
        },
        "mf": {
            "n_factors": cfg.mf.n_factors,
            "learning_rate": cfg.mf.learning_rate,
            "l2_reg": cfg.mf.l2_reg,
            "epochs": cfg.mf.epochs,
            "init_sd": cfg.mf.init_sd,
            "seed": cfg.mf.seed,
        },
        "split": {
            "cold_fraction": cfg.split.cold_fraction,
            "k_per_user": cfg.split.k_per_user,
            "t_per_user": cfg.split.t_per_user,
            "target_type": cfg.split.target_type.value,
        },
        "simulation": {
            "n_iterations": cfg.n_iterations,
            "strategies": [],
        },
    }
    if cfg.dataset_path is not None:
        out["dataset"]["path"] = cfg.dataset_path
    if cfg.synthetic is not None:
        syn = cfg.synthetic
        out["dataset"]["synthetic"] = {
            "n_users": syn.n_users,
            "n_artists": syn.n_artists,
            "n_genres": syn.n_genres,
            "n_factors": syn.n_factors,
            "density": syn.density,
            "noise_sd": syn.noise_sd,
            "seed": syn.seed,
        }
    for spec, sim in zip(cfg.strategies, cfg.sim_configs()):
        p = spec.params
        out["simulation"]["strategies"].append(
            {
                "name": p.name,
                "label": p.label,
                "semi_binary": sim.semi_binary,
                "candidate_types": sorted(t.value for t in sim.candidate_types),
                "max_depth": p.max_depth,
                "min_node_users": p.min_node_users,
                "love_threshold": sim.love_threshold,
                "pool_size": p.pool_size,
                "bins": p.bins,
            }
        )
    return out
