"""Run configuration: a flat ``section.key = value`` text format.

Sections map onto dataclasses (``model`` -> ModelConfig, ``train`` ->
TrainConfig, ``synthetic`` -> SyntheticSpec, ``data`` -> DataPaths,
``run`` -> RunOptions). Blank lines and ``#`` comments are ignored. Values are
converted with the type of the target field; unknown keys are rejected.
"""

from dataclasses import dataclass, field, fields
from pathlib import Path

from .data import SyntheticSpec
from .errors import ConfigError, ParseError
from .model import ModelConfig
from .training import TrainConfig


@dataclass
class DataPaths:
    dir: str = ""
    train_path: str = ""
    val_path: str = ""
    eval_path: str = ""
    features_path: str = ""
    embeddings_path: str = ""
    checkpoint: str = ""
    idf_path: str = ""

    def resolve(self, key):
        """Explicit path, else the conventional file name inside ``dir`` (or ``""``)."""
        value = getattr(self, key)
        if value or not self.dir:
            return value
        default = {"train_path": "train.jsonl", "val_path": "val.jsonl", "features_path": "features.idx",
                   "embeddings_path": "embeddings.txt"}.get(key)
        if key == "eval_path":
            return self.resolve("val_path")
        return str(Path(self.dir) / default) if default else ""


@dataclass
class RunOptions:
    out: str = "runs/latest"
    seed: int = -1           # -1: keep the per-section seeds
    methods: str = "model,tfidf,embedrank"
    seeds: str = "0,1,2"     # ablation seeds
    tie: str = "optimistic"
    dataset: str = "synthetic"


SECTIONS = {
    "model": ModelConfig,
    "train": TrainConfig,
    "synthetic": SyntheticSpec,
    "data": DataPaths,
    "run": RunOptions,
}


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    data: DataPaths = field(default_factory=DataPaths)
    run: RunOptions = field(default_factory=RunOptions)

    def set(self, dotted_key, raw):
        section, key = split_key(dotted_key)
        target = getattr(self, section)
        setattr(target, key, convert(section, key, raw))

    def apply_seed(self):
        """A global ``run.seed`` >= 0 overrides the training and generator seeds."""
        if self.run.seed >= 0:
            self.train.seed = self.run.seed
            self.synthetic.seed = self.run.seed
        return self

    def to_text(self):
        lines = []
        for section in SECTIONS:
            obj = getattr(self, section)
            for f in fields(obj):
                lines.append(f"{section}.{f.name} = {getattr(obj, f.name)}")
        return "\n".join(lines) + "\n"


def all_keys():
    return [f"{s}.{f.name}" for s, cls in SECTIONS.items() for f in fields(cls)]


def split_key(dotted_key):
    section, sep, key = dotted_key.partition(".")
    if not sep or section not in SECTIONS:
        raise ConfigError(f"unknown config key {dotted_key!r}")
    if key not in {f.name for f in fields(SECTIONS[section])}:
        raise ConfigError(f"unknown config key {dotted_key!r}")
    return section, key


def convert(section, key, raw):
    kind = {f.name: f.type for f in fields(SECTIONS[section])}[key]
    if isinstance(kind, type):
        kind = kind.__name__
    raw = raw.strip() if isinstance(raw, str) else raw
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{section}.{key}: expected {kind}, got {raw!r}") from None
    return str(raw)


def parse_config_text(text, path=None):
    """Parse ``section.key = value`` lines into ``{dotted_key: raw_value}``."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ParseError("expected 'section.key = value'", line=lineno, path=path)
        key = key.strip()
        try:
            split_key(key)
        except ConfigError as exc:
            raise ParseError(str(exc), line=lineno, path=path) from None
        values[key] = value.strip()
    return values


def load_config(path=None, overrides=None):
    """Defaults, then the file (if any), then ``overrides`` (flag wins)."""
    cfg = RunConfig()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        for key, value in parse_config_text(p.read_text(encoding="utf-8"), path=p).items():
            cfg.set(key, value)
    for key, value in (overrides or {}).items():
        cfg.set(key, value)
    return cfg.apply_seed()
