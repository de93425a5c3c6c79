"""Experiment configuration files.

A config is an INI file with the sections below. Keys not listed are
rejected so that typos fail loudly. Defaults are shown after ``=``::

    [game]
    kind = connectivity        ; connectivity | lq
    n = 50                     ; players (connectivity)
    matrix_file =              ; lq: CSV rows "M_i1,...,M_iD,b_i", path relative to the config
    dims =                     ; lq: comma-separated block sizes, default all 1

    [graph]
    kind = random              ; path | complete | random
    edge_prob = 0.2
    seed = 0
    weights = max_degree       ; max_degree | metropolis

    [compressor]
    kind = identity            ; identity | quantize | topk | normsign
    bits =                     ; quantize
    k =                        ; topk
    q = inf                    ; 2 | inf

    [algo]
    eta =                      ; required
    gamma = 1
    alpha = 1
    K = 1000
    seed = 0
    stop_tol =                 ; empty: run all K iterations
    per_edge_bits = false
    enforce_alpha_bound = true ; false allows alpha > 1/r, as in the reference experiment

    [certify]
    alpha =                    ; empty: 1/r
    tau3 =                     ; empty: midpoint of the feasible interval
    norm = fro                 ; fro | spectral

    [output]
    trace = trace.csv
    report = certificate.txt
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .compressors import CompressorSpec
from .engine import AlgoConfig
from .games import Game, connectivity_game, lq_game
from .graph import (
    WEIGHT_RULES,
    MixingMatrix,
    Topology,
    complete_graph,
    path_graph,
    random_connected_graph,
)

SCHEMA = {
    "game": {"kind": "connectivity", "n": "50", "matrix_file": "", "dims": ""},
    "graph": {"kind": "random", "edge_prob": "0.2", "seed": "0", "weights": "max_degree"},
    "compressor": {"kind": "identity", "bits": "", "k": "", "q": "inf"},
    "algo": {"eta": "", "gamma": "1", "alpha": "1", "K": "1000", "seed": "0", "stop_tol": "", "per_edge_bits": "false",
             "enforce_alpha_bound": "true"},
    "certify": {"alpha": "", "tau3": "", "norm": "fro"},
    "output": {"trace": "trace.csv", "report": "certificate.txt"},
}


class ConfigError(ValueError):
    """Invalid or incomplete configuration; the message names the key path."""


@dataclass
class ExperimentConfig:
    game: Game
    topology: Topology
    mix: MixingMatrix
    compressor: CompressorSpec
    algo: AlgoConfig
    certify_alpha: float | None
    certify_tau3: float | None
    certify_norm: str
    trace_name: str
    report_name: str
    raw: dict


def _get(raw, section, key, conv, required=False):
    value = raw[section][key].strip()
    path = f"{section}.{key}"
    if value == "":
        if required:
            raise ConfigError(f"{path}: required key is missing")
        return None
    try:
        return conv(value)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{path}: cannot parse {value!r} ({err})") from None


def _bool(v: str) -> bool:
    v = v.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true or false")


def _finite(v: str) -> float:
    x = float(v)
    if not math.isfinite(x):
        raise ValueError("must be finite")
    return x


def read_raw(path) -> tuple[dict, Path]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {str(path)!r} does not exist")
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(path.read_text(), source=str(path))
    except configparser.Error as err:
        raise ConfigError(f"malformed config: {err}") from None
    raw = {s: dict(keys) for s, keys in SCHEMA.items()}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{section}: unknown section; expected one of {sorted(SCHEMA)}")
        for key, value in parser[section].items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"{section}.{key}: unknown key")
            raw[section][key] = value
    return raw, path.parent


def _load_lq(raw, base: Path):
    name = _get(raw, "game", "matrix_file", str, required=True)
    file = (base / name) if not Path(name).is_absolute() else Path(name)
    if not file.is_file():
        raise ConfigError(f"game.matrix_file: {str(file)!r} does not exist")
    try:
        data = np.loadtxt(file, delimiter=",", ndmin=2)
    except ValueError as err:
        raise ConfigError(f"game.matrix_file: unreadable matrix ({err})") from None
    if data.shape[1] != data.shape[0] + 1:
        raise ConfigError(f"game.matrix_file: expected D rows of D+1 columns, got {data.shape}")
    dims = _get(raw, "game", "dims", lambda v: [int(t) for t in v.split(",")])
    return lq_game(data[:, :-1], data[:, -1], dims)


def build(raw: dict, base: Path) -> ExperimentConfig:
    """Turn raw strings into runnable objects; every failure becomes a :class:`ConfigError`."""
    kind = raw["game"]["kind"].strip()
    try:
        if kind == "connectivity":
            game = connectivity_game(_get(raw, "game", "n", int, required=True))
        elif kind == "lq":
            game = _load_lq(raw, base)
        else:
            raise ConfigError(f"game.kind: unknown game {kind!r}; expected connectivity or lq")
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(f"game: {err}") from None

    n = game.n
    gkind = raw["graph"]["kind"].strip()
    try:
        if gkind == "path":
            topo = path_graph(n)
        elif gkind == "complete":
            topo = complete_graph(n)
        elif gkind == "random":
            topo = random_connected_graph(
                n,
                _get(raw, "graph", "edge_prob", _finite, required=True),
                _get(raw, "graph", "seed", int, required=True),
            )
        else:
            raise ConfigError(f"graph.kind: unknown graph {gkind!r}; expected path, complete or random")
        rule = raw["graph"]["weights"].strip()
        if rule not in WEIGHT_RULES:
            raise ConfigError(f"graph.weights: unknown rule {rule!r}; expected one of {sorted(WEIGHT_RULES)}")
        mix = WEIGHT_RULES[rule](topo)
        mix.validate()
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(f"graph: {err}") from None

    try:
        compressor = CompressorSpec(
            raw["compressor"]["kind"].strip(),
            game.D,
            bits=_get(raw, "compressor", "bits", int),
            k=_get(raw, "compressor", "k", int),
            q=raw["compressor"]["q"].strip(),
        )
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(f"compressor: {err}") from None

    algo = AlgoConfig(
        eta=_get(raw, "algo", "eta", _finite, required=True),
        gamma=_get(raw, "algo", "gamma", _finite, required=True),
        alpha=_get(raw, "algo", "alpha", _finite, required=True),
        K=_get(raw, "algo", "K", int, required=True),
        seed=_get(raw, "algo", "seed", int, required=True),
        stop_tol=_get(raw, "algo", "stop_tol", _finite),
        per_edge_bits=_get(raw, "algo", "per_edge_bits", _bool, required=True),
        enforce_alpha_bound=_get(raw, "algo", "enforce_alpha_bound", _bool, required=True),
    )
    try:
        algo.validate()
    except ValueError as err:
        raise ConfigError(f"algo: {err}") from None

    norm = raw["certify"]["norm"].strip()
    if norm not in ("fro", "spectral"):
        raise ConfigError(f"certify.norm: expected fro or spectral, got {norm!r}")
    return ExperimentConfig(
        game=game,
        topology=topo,
        mix=mix,
        compressor=compressor,
        algo=algo,
        certify_alpha=_get(raw, "certify", "alpha", _finite),
        certify_tau3=_get(raw, "certify", "tau3", _finite),
        certify_norm=norm,
        trace_name=raw["output"]["trace"].strip() or "trace.csv",
        report_name=raw["output"]["report"].strip() or "certificate.txt",
        raw=raw,
    )


def load(path) -> ExperimentConfig:
    raw, base = read_raw(path)
    return build(raw, base)
