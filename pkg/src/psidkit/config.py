"""Experiment configuration files: one ``key = value`` per line, ``#`` starts a comment."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .simulation import GenConfig

EXPERIMENTS = ("convergence", "decoding", "shift_baseline", "backward_compare")

# Generator settings each experiment starts from; config keys override them
# (except where an experiment forces a value, see ExperimentConfig.gen_config).
EXPERIMENT_GEN_DEFAULTS = {
    "convergence": {"n1_policy": "random"},
    "decoding": {"n1_policy": "full"},
    "shift_baseline": {"n1_policy": "full", "correlated_S": True},
    "backward_compare": {"n1_policy": "full"},
}

_GEN_FIELDS = {f.name: f for f in dataclasses.fields(GenConfig) if f.name != "seed"}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    n_models: int = 20
    sample_sizes: tuple = (1_000, 10_000, 100_000, 1_000_000)
    seed: int = 0
    out: str = "results"
    test_N: int = 100_000
    align_N: int = 100_000
    horizon_i: int = 10
    gen: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if self.n_models < 1:
            raise ConfigError("n_models must be at least 1")
        sizes = tuple(int(n) for n in self.sample_sizes)
        if not sizes or any(n < 1 for n in sizes):
            raise ConfigError("sample_sizes must be positive")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ConfigError("sample_sizes must be strictly increasing")
        object.__setattr__(self, "sample_sizes", sizes)
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if min(self.test_N, self.align_N) < 2 or self.horizon_i < 1:
            raise ConfigError("test_N and align_N must be at least 2 and horizon_i at least 1")
        unknown = set(self.gen) - set(_GEN_FIELDS)
        if unknown:
            raise ConfigError(f"unknown generator keys: {sorted(unknown)}")
        self.gen_config()  # validate early

    def gen_config(self) -> GenConfig:
        kw = dict(EXPERIMENT_GEN_DEFAULTS[self.experiment])
        kw.update(self.gen)
        if self.experiment == "shift_baseline":
            kw["correlated_S"] = True
        return GenConfig(seed=self.seed, **kw)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def _parse_bool(s):
    low = s.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_number(s):
    f = float(s)
    if f != int(f):
        raise ValueError(f"not an integer: {s!r}")
    return int(f)


def _parse_list(s, conv):
    return tuple(conv(p.strip()) for p in s.replace(",", " ").split())


def _parse_gen(name, raw):
    default = getattr(GenConfig(), name)
    if isinstance(default, bool):
        return _parse_bool(raw)
    if isinstance(default, tuple):
        conv = _parse_number if isinstance(default[0], int) else float
        vals = _parse_list(raw, conv)
        if len(vals) != 2:
            raise ValueError("expected two values 'lo, hi'")
        return vals
    if isinstance(default, float):
        return float(raw)
    return raw


_TOP = {
    "experiment": lambda s: s.replace("-", "_"),
    "n_models": _parse_number,
    "sample_sizes": lambda s: _parse_list(s, _parse_number),
    "seed": _parse_number,
    "out": str,
    "test_N": _parse_number,
    "align_N": _parse_number,
    "horizon_i": _parse_number,
}


def parse_config(text: str, default_experiment=None, **overrides) -> ExperimentConfig:
    """Parse config text; ``overrides`` (e.g. from the command line) win over file values."""
    top, gen = {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key not in _TOP and key not in _GEN_FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            if key in _TOP:
                top[key] = _TOP[key](raw)
            else:
                gen[key] = _parse_gen(key, raw)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    top.update({k: v for k, v in overrides.items() if v is not None})
    if "experiment" not in top and default_experiment is not None:
        top["experiment"] = default_experiment
    if "experiment" not in top:
        raise ConfigError("config does not name an experiment")
    return ExperimentConfig(gen=gen, **top)


def load_config(path, default_experiment=None, **overrides) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), default_experiment=default_experiment, **overrides)
