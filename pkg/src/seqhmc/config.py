"""Line-oriented ``key = value`` run configuration.

Keys are dotted: run-level settings sit at the top (``rounds = 10``), the
sampler, trainer and model under ``hmc.``, ``train.`` and ``model.``, and the
task, oracle and benchmark grid under ``task.``, ``oracle.`` and ``bench.``.
Lists are comma separated.  ``#`` starts a comment.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .acquisition import RunConfig
from .seq import AMINO_ACIDS

# RunConfig fields that the CLI sets per seed rather than from the file
_HIDDEN_RUN_FIELDS = {"master_seed"}


@dataclass
class TaskSettings:
    alphabet: str = AMINO_ACIDS
    wild_type: str = ""
    template: str = ""
    mutable_positions: tuple = ()


@dataclass
class OracleSettings:
    source: str = "nk:2,20,1,0"
    unknown_policy: str = "error"
    structure_mode: str = "weighted_hamming"
    structure_seed: int = 0


@dataclass
class BenchSettings:
    k_grid: tuple = (16, 32, 64, 128)


@dataclass
class CliConfig:
    run: RunConfig = field(default_factory=RunConfig)
    task: TaskSettings = field(default_factory=TaskSettings)
    oracle: OracleSettings = field(default_factory=OracleSettings)
    bench: BenchSettings = field(default_factory=BenchSettings)
    out: str = "results"
    seeds: tuple = (0,)
    jobs: int = 1
    save_models: bool = False

    def validate(self) -> None:
        if not self.seeds:
            raise ValueError("seed list must not be empty")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        if not self.oracle.source:
            raise ValueError("exactly one oracle must be selected")
        # re-run dataclass validation after field-by-field assignment
        for obj in (self.run, self.run.hmc, self.run.train):
            obj.__post_init__()


def _slots(cfg: CliConfig):
    """Yield (dotted key, owner object, attribute name) for every setting."""

    def walk(obj, prefix):
        for f in dataclasses.fields(obj):
            if prefix == "" and obj is cfg.run and f.name in _HIDDEN_RUN_FIELDS:
                continue
            value = getattr(obj, f.name)
            if dataclasses.is_dataclass(value):
                yield from walk(value, f"{prefix}{f.name}.")
            else:
                yield f"{prefix}{f.name}", obj, f.name

    yield from walk(cfg.run, "")
    for section in ("task", "oracle", "bench"):
        yield from walk(getattr(cfg, section), f"{section}.")
    for name in ("out", "seeds", "jobs", "save_models"):
        yield name, cfg, name


def keys() -> list:
    return [k for k, _, _ in _slots(CliConfig())]


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(key: str, text: str, current):
    text = text.strip()
    try:
        if isinstance(current, bool):
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        if isinstance(current, int):
            return int(text)
        if isinstance(current, float):
            return float(text)
        if isinstance(current, tuple):
            return tuple(int(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise ValueError(f"bad value {text!r} for {key}") from None
    return text


def apply(cfg: CliConfig, values: dict) -> CliConfig:
    """Set dotted keys on ``cfg`` in place; unknown keys are rejected."""
    slots = {k: (obj, name) for k, obj, name in _slots(cfg)}
    for key, text in values.items():
        if key not in slots:
            raise KeyError(f"unknown config key: {key}")
        obj, name = slots[key]
        setattr(obj, name, _coerce(key, str(text), getattr(obj, name)))
    return cfg


def to_flat(cfg: CliConfig) -> dict:
    return {k: _format(getattr(obj, name)) for k, obj, name in _slots(cfg)}


def dumps(cfg: CliConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in to_flat(cfg).items())


def parse_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ValueError(f"{source}:{lineno}: expected 'key = value'")
        if key in values:
            raise ValueError(f"{source}:{lineno}: duplicate key {key}")
        values[key] = value.strip()
    return values


def loads(text: str, source: str = "<config>") -> CliConfig:
    cfg = apply(CliConfig(), parse_text(text, source))
    cfg.validate()
    return cfg


def load(path) -> CliConfig:
    path = Path(path)
    return loads(path.read_text(encoding="utf-8"), str(path))
