"""Experiment configuration: a YAML tree validated against a strict schema.

Every error carries the dotted path of the offending key and, when it can be
located, its line in the file.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..driver import NtrParams
from ..errors import ConfigError
from ..storm import StormParams

OPTIMIZERS = {"asntr": NtrParams, "storm_like": StormParams}
# set once at the top level of a config, never per optimizer
RESERVED_PARAMS = ("budget", "seed")

PROBLEM_KEYS = {
    "quadratic": {"n_samples", "dim", "indefinite", "cond", "spread"},
    "blobs-classification": {"n_samples", "dim", "n_test", "n_classes", "separation", "sigma",
                             "architecture", "normalization"},
    "rotation-regression": {"n_samples", "dim", "n_test", "noise", "architecture",
                            "normalization", "threshold"},
    "idx": {"train_images", "train_labels", "test_images", "test_labels", "n_classes",
            "architecture", "normalization"},
    "csv": {"train_csv", "test_csv", "task", "n_classes", "architecture", "normalization",
            "threshold"},
}
COMMON_PROBLEM_KEYS = {"kind", "data_seed"}
REQUIRED_PROBLEM_KEYS = {
    "quadratic": {"n_samples", "dim"},
    "blobs-classification": {"n_samples", "dim", "n_test"},
    "rotation-regression": {"n_samples", "dim", "n_test"},
    "idx": {"train_images", "train_labels", "test_images", "test_labels"},
    "csv": {"train_csv", "test_csv", "task"},
}
PATH_KEYS = {"train_images", "train_labels", "test_images", "test_labels", "train_csv", "test_csv"}
TOP_KEYS = {"name", "problem", "optimizers", "seeds", "budget", "eval_every", "output_dir"}


@dataclass
class OptimizerSpec:
    name: str
    params: dict = field(default_factory=dict)

    def build(self, seed, budget):
        return OPTIMIZERS[self.name](**self.params, seed=seed, budget=budget)


@dataclass
class ExperimentConfig:
    name: str
    problem: dict
    optimizers: list
    seeds: list
    budget: int
    eval_every: int = 50
    output_dir: str | None = None
    source: str | None = None


# -- line bookkeeping ----------------------------------------------------------

def _index_lines(node, path="", out=None):
    """Map dotted key paths to 1-based line numbers; reject duplicate keys."""
    if out is None:
        out = {}
    out.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        seen = set()
        for knode, vnode in node.value:
            key = knode.value
            sub = f"{path}.{key}" if path else str(key)
            if key in seen:
                raise ConfigError("duplicate key", sub, knode.start_mark.line + 1)
            seen.add(key)
            out[sub] = knode.start_mark.line + 1
            _index_lines(vnode, sub, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            _index_lines(item, f"{path}[{i}]", out)
    return out


class _Checker:
    def __init__(self, lines):
        self.lines = lines

    def error(self, message, path):
        # a missing key has no line of its own; report its nearest parent's
        probe = path
        while probe and probe not in self.lines:
            up = probe.rsplit(".", 1)[0] if "." in probe else probe.split("[", 1)[0]
            probe = "" if up == probe else up
        raise ConfigError(message, path or None, self.lines.get(probe))

    def mapping(self, value, path):
        if not isinstance(value, dict):
            self.error("expected a mapping", path)
        return value

    def keys(self, value, allowed, required, path):
        for key in value:
            if key not in allowed:
                self.error(f"unknown key (allowed: {', '.join(sorted(allowed))})",
                           f"{path}.{key}" if path else str(key))
        for key in sorted(required):
            if key not in value:
                self.error("missing required key", f"{path}.{key}" if path else key)

    def integer(self, value, path, minimum=None):
        v = value
        if isinstance(v, str):
            try:
                v = float(v)
            except ValueError:
                self.error(f"expected an integer, got {value!r}", path)
        if isinstance(v, bool) or not isinstance(v, (int, float)) or v != int(v):
            self.error(f"expected an integer, got {value!r}", path)
        v = int(v)
        if minimum is not None and v < minimum:
            self.error(f"must be at least {minimum}", path)
        return v

    def number(self, value, path):
        v = value
        if isinstance(v, str):
            # YAML 1.1 reads 1e8 as a string
            try:
                v = float(v)
            except ValueError:
                self.error(f"expected a number, got {value!r}", path)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.error(f"expected a number, got {value!r}", path)
        return float(v)

    def boolean(self, value, path):
        if not isinstance(value, bool):
            self.error(f"expected true or false, got {value!r}", path)
        return value

    def string(self, value, path, choices=None):
        if not isinstance(value, str):
            self.error(f"expected a string, got {value!r}", path)
        if choices is not None and value not in choices:
            self.error(f"must be one of {', '.join(choices)}", path)
        return value


# -- schema --------------------------------------------------------------------

def _check_problem(c, raw, base_dir):
    from ..finite_sum.data import NORMALIZATIONS

    raw = c.mapping(raw, "problem")
    if "kind" not in raw:
        c.error("missing required key", "problem.kind")
    kind = c.string(raw["kind"], "problem.kind", tuple(PROBLEM_KEYS))
    c.keys(raw, PROBLEM_KEYS[kind] | COMMON_PROBLEM_KEYS, REQUIRED_PROBLEM_KEYS[kind], "problem")
    out = {"kind": kind, "data_seed": 0}
    for key, value in raw.items():
        path = f"problem.{key}"
        if key == "kind":
            continue
        if key in ("n_samples", "dim", "n_test", "n_classes", "data_seed"):
            out[key] = c.integer(value, path, minimum=0 if key == "data_seed" else 1)
        elif key in ("cond", "spread", "separation", "sigma", "noise", "threshold"):
            out[key] = c.number(value, path)
            if out[key] < 0 or (key in ("cond", "threshold", "sigma") and out[key] <= 0):
                c.error("must be positive", path)
        elif key == "indefinite":
            out[key] = c.boolean(value, path)
        elif key == "normalization":
            out[key] = c.string(value, path, NORMALIZATIONS)
        elif key == "task":
            out[key] = c.string(value, path, ("classification", "regression"))
        elif key == "architecture":
            if not isinstance(value, list) or len(value) < 2:
                c.error("expected a list of at least two layer sizes", path)
            out[key] = [c.integer(v, f"{path}[{i}]", minimum=1) for i, v in enumerate(value)]
        elif key in PATH_KEYS:
            p = Path(c.string(value, path))
            out[key] = str(p if p.is_absolute() else Path(base_dir) / p)
    if kind in ("blobs-classification", "rotation-regression"):
        if out["n_test"] >= out["n_samples"]:
            c.error("n_test must be smaller than n_samples", "problem.n_test")
        if out["n_samples"] - out["n_test"] < 2:
            c.error("need at least two training samples", "problem.n_samples")
    if kind == "quadratic" and out["n_samples"] < 2:
        c.error("need at least two samples", "problem.n_samples")
    return out


def _param_types(cls):
    types = {}
    for f in dataclasses.fields(cls):
        if f.name in RESERVED_PARAMS:
            continue
        types[f.name] = "int" if isinstance(f.default, int) or f.name == "N0" else "float"
    return types


def _check_optimizer(c, raw, i, budget):
    path = f"optimizers[{i}]"
    raw = c.mapping(raw, path)
    c.keys(raw, {"name", "params"}, {"name"}, path)
    name = c.string(raw["name"], f"{path}.name", tuple(OPTIMIZERS))
    cls = OPTIMIZERS[name]
    types = _param_types(cls)
    params = {}
    raw_params = raw.get("params") or {}
    c.mapping(raw_params, f"{path}.params")
    for key, value in raw_params.items():
        ppath = f"{path}.params.{key}"
        if key in RESERVED_PARAMS:
            c.error(f"'{key}' is set at the top level of the config", ppath)
        if key not in types:
            c.error(f"unknown parameter for {name}", ppath)
        if key == "N0" and value is None:
            params[key] = None
        elif types[key] == "int":
            params[key] = c.integer(value, ppath)
        else:
            params[key] = c.number(value, ppath)
    try:
        cls(**params, budget=budget)
    except (TypeError, ValueError) as exc:
        c.error(str(exc), f"{path}.params")
    return OptimizerSpec(name, params)


def parse_config(text, source=None, base_dir=None) -> ExperimentConfig:
    """Validate YAML ``text`` and return the experiment it describes."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", None,
                          None if mark is None else mark.line + 1) from None
    if node is None:
        raise ConfigError("empty configuration")
    c = _Checker(_index_lines(node))
    c.mapping(raw, "")
    c.keys(raw, TOP_KEYS, {"problem", "optimizers", "seeds", "budget"}, "")
    base_dir = base_dir if base_dir is not None else (Path(source).parent if source else Path("."))

    budget = c.integer(raw["budget"], "budget", minimum=1)
    seeds = raw["seeds"]
    if not isinstance(seeds, list) or not seeds:
        c.error("expected a non-empty list of integer seeds", "seeds")
    seeds = [c.integer(s, f"seeds[{i}]", minimum=0) for i, s in enumerate(seeds)]
    if len(set(seeds)) != len(seeds):
        c.error("seeds must be distinct", "seeds")
    opts = raw["optimizers"]
    if not isinstance(opts, list) or not opts:
        c.error("expected a non-empty list of optimizers", "optimizers")
    optimizers = [_check_optimizer(c, o, i, budget) for i, o in enumerate(opts)]
    names = [o.name for o in optimizers]
    if len(set(names)) != len(names):
        c.error("each optimizer may appear only once", "optimizers")
    problem = _check_problem(c, raw["problem"], base_dir)
    eval_every = c.integer(raw.get("eval_every", 50), "eval_every", minimum=1)
    name = c.string(raw.get("name", Path(source).stem if source else "experiment"), "name")
    out_dir = raw.get("output_dir")
    if out_dir is not None:
        out_dir = c.string(out_dir, "output_dir")
    return ExperimentConfig(name=name, problem=problem, optimizers=optimizers, seeds=seeds,
                            budget=budget, eval_every=eval_every, output_dir=out_dir,
                            source=None if source is None else str(source))


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, source=path, base_dir=path.parent)
