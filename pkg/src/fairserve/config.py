"""Run configuration as flat ``key = value`` text with dotted section keys.

Example::

    # fairserve-config v1
    seed = 3
    env.init_dist_max = 4.0
    shaping.tau = risk_first
    shaping.feedback_bias.race.Black = -1.5
    population.race.White = 2.0
    train.algorithm = reinforce
    train.guidance = true

Unknown keys are rejected so that typos fail loudly. Every section maps onto
one module's config dataclass; ``RunConfig.to_text`` writes a fully resolved
file that parses back to an equal config.
"""

from __future__ import annotations

import configparser
import dataclasses
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .detector_data import DataConfig
from .environment import EnvConfig
from .errors import ConfigError
from .learner import TrainConfig
from .population import ATTRIBUTES, _normalized_weights, group_by_label
from .shaping import TAU_PRESETS, PenaltyConfig

CONFIG_FORMAT = "fairserve-config"
CONFIG_VERSION = 1
_HEADER = re.compile(r"#\s*fairserve-config\s+v(\d+)\s*$")


@dataclass(frozen=True)
class DetectorFitConfig:
    lr: float = 2.0
    iters: int = 50000
    threshold: float = 0.5
    holdout: float = 0.2

    def __post_init__(self):
        if self.lr <= 0 or self.iters < 1:
            raise ValueError("detector lr must be positive and iters >= 1")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("detector threshold must lie in (0, 1)")
        if not 0.0 < self.holdout < 1.0:
            raise ValueError("holdout must lie in (0, 1)")


@dataclass(frozen=True)
class EvalConfig:
    n_episodes: int = 1000

    def __post_init__(self):
        if self.n_episodes < 30:
            raise ValueError("evaluation needs at least 30 episodes")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    population: dict = field(default_factory=dict)
    env: EnvConfig = field(default_factory=EnvConfig)
    shaping: PenaltyConfig = field(default_factory=PenaltyConfig)
    data: DataConfig = field(default_factory=DataConfig)
    detector: DetectorFitConfig = field(default_factory=DetectorFitConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    evaluate: EvalConfig = field(default_factory=EvalConfig)

    @property
    def train_config(self) -> TrainConfig:
        """The training config with the run seed applied."""
        return replace(self.train, seed=self.seed)

    def to_text(self) -> str:
        lines = [f"# {CONFIG_FORMAT} v{CONFIG_VERSION}", f"seed = {self.seed}"]
        for attr, weights in sorted(self.population.items()):
            for value, w in sorted(weights.items()):
                lines.append(f"population.{attr}.{value} = {_fmt(w)}")
        for section in _SECTIONS:
            obj = getattr(self, section)
            for f in dataclasses.fields(obj):
                if (section, f.name) in _HIDDEN:
                    continue
                value = getattr(obj, f.name)
                if f.name == "feedback_bias":
                    for label, delta in sorted(value.items()):
                        attr, val = label.split("=")
                        lines.append(f"shaping.feedback_bias.{attr}.{val} = {_fmt(delta)}")
                    continue
                lines.append(f"{section}.{f.name} = {_fmt(value)}")
        return "\n".join(lines) + "\n"


_SECTIONS = ("env", "shaping", "data", "detector", "train", "evaluate")
# the run-level seed is the single source of randomness
_HIDDEN = {("train", "seed")}


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(raw: str, like, key: str):
    try:
        if isinstance(like, bool):
            low = raw.strip().lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if isinstance(like, int):
            return int(raw)
        if isinstance(like, float):
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {type(like).__name__}") from None


def _parse_tau(raw: str) -> tuple[float, ...]:
    raw = raw.strip()
    if raw in TAU_PRESETS:
        return TAU_PRESETS[raw]
    try:
        values = tuple(float(x) for x in raw.split(","))
    except ValueError:
        raise ConfigError(f"shaping.tau: expected 4 comma-separated floats or one of "
                          f"{sorted(TAU_PRESETS)}, got {raw!r}") from None
    if len(values) != 4:
        raise ConfigError(f"shaping.tau: expected 4 values, got {len(values)}")
    return values


def read_pairs(text: str) -> dict[str, str]:
    """Flat key/value pairs from config text; comments start with # or ;."""
    for line in text.splitlines():
        m = _HEADER.match(line.strip())
        if m and int(m.group(1)) != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version v{m.group(1)}")
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                       comment_prefixes=("#", ";"), strict=True)
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}") from None
    return dict(parser["run"])


def from_pairs(pairs: dict[str, str], base: RunConfig | None = None) -> RunConfig:
    base = base or RunConfig()
    seed = base.seed
    population = {k: dict(v) for k, v in base.population.items()}
    updates: dict[str, dict] = {s: {} for s in _SECTIONS}
    feedback = dict(base.shaping.feedback_bias)
    attrs = dict(ATTRIBUTES)

    for key, raw in pairs.items():
        parts = key.split(".")
        if key == "seed":
            seed = _coerce(raw, 0, key)
        elif parts[0] == "population" and len(parts) == 3:
            attr, value = parts[1], parts[2]
            if attr not in attrs or value not in attrs[attr].__members__:
                raise ConfigError(f"unknown population key {key!r}")
            population.setdefault(attr, {})[value] = _coerce(raw, 0.0, key)
        elif parts[:2] == ["shaping", "feedback_bias"] and len(parts) == 4:
            label = f"{parts[2]}={parts[3]}"
            try:
                group_by_label(label)
            except ValueError:
                raise ConfigError(f"unknown group in key {key!r}") from None
            feedback[label] = _coerce(raw, 0.0, key)
        elif len(parts) == 2 and parts[0] in _SECTIONS:
            section, name = parts
            obj = getattr(base, section)
            names = {f.name for f in dataclasses.fields(obj)} - {"feedback_bias"}
            if name not in names or (section, name) in _HIDDEN:
                raise ConfigError(f"unknown config key {key!r}")
            if (section, name) == ("shaping", "tau"):
                updates[section][name] = _parse_tau(raw)
            else:
                updates[section][name] = _coerce(raw, getattr(obj, name), key)
        else:
            raise ConfigError(f"unknown config key {key!r}")

    updates["shaping"]["feedback_bias"] = feedback
    try:
        sections = {s: replace(getattr(base, s), **updates[s]) for s in _SECTIONS}
        cfg = RunConfig(seed=seed, population=population, **sections)
        _normalized_weights(population)  # negative or all-zero weights
    except ValueError as e:
        raise ConfigError(str(e)) from None
    if seed < 0:
        raise ConfigError("seed must be non-negative")
    return cfg


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    return from_pairs(read_pairs(text), base)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse_config(text)


def with_overrides(cfg: RunConfig, seed=None, guidance=None, algorithm=None,
                   epochs=None) -> RunConfig:
    """Apply command-line flags on top of a loaded config."""
    train_updates = {}
    if guidance is not None:
        train_updates["guidance"] = guidance
    if algorithm is not None:
        train_updates["algorithm"] = algorithm
    if epochs is not None:
        train_updates["total_epochs"] = epochs
    try:
        train = replace(cfg.train, **train_updates)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    return replace(cfg, seed=cfg.seed if seed is None else seed, train=train)
