"""Run configuration: one JSON file gathering paths, model dims, and
training settings, so CLI commands and the service share defaults.

Precedence: explicit CLI flags > config file > built-in defaults.  The only
environment variable honored is LYRICGEN_CONFIG, which supplies the config
file path when --config is not given.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .training import TrainConfig

CONFIG_ENV_VAR = "LYRICGEN_CONFIG"


def config_hash(obj) -> str:
    """Short stable digest of a JSON-serializable object; artifacts embed it
    so any output can be traced to the exact settings that produced it."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


@dataclass
class ModelDims:
    embed_dim: int = 64
    hidden_dim: int = 96
    theme_dim: int = 16

    def to_json(self) -> dict:
        return {"embed_dim": self.embed_dim, "hidden_dim": self.hidden_dim,
                "theme_dim": self.theme_dim}

    @classmethod
    def from_json(cls, obj: dict) -> "ModelDims":
        return cls(**obj)


@dataclass
class LdaSettings:
    n_themes: int = 5
    iterations: int = 1000

    def to_json(self) -> dict:
        return {"n_themes": self.n_themes, "iterations": self.iterations}

    @classmethod
    def from_json(cls, obj: dict) -> "LdaSettings":
        return cls(**obj)


@dataclass
class RunConfig:
    corpus: Optional[str] = None
    vectors: Optional[str] = None
    prep_dir: Optional[str] = None
    theme_dir: Optional[str] = None
    checkpoint_dir: Optional[str] = None
    report_dir: Optional[str] = None
    mode: str = "none"
    seed: int = 0
    port: int = 8000
    model: ModelDims = field(default_factory=ModelDims)
    lda: LdaSettings = field(default_factory=LdaSettings)
    train: TrainConfig = field(default_factory=TrainConfig)

    def to_json(self) -> dict:
        return {
            "corpus": self.corpus, "vectors": self.vectors,
            "prep_dir": self.prep_dir, "theme_dir": self.theme_dir,
            "checkpoint_dir": self.checkpoint_dir, "report_dir": self.report_dir,
            "mode": self.mode, "seed": self.seed, "port": self.port,
            "model": self.model.to_json(), "lda": self.lda.to_json(),
            "train": self.train.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RunConfig":
        obj = dict(obj)
        model = ModelDims.from_json(obj.pop("model", {}))
        lda = LdaSettings.from_json(obj.pop("lda", {}))
        train = TrainConfig.from_json(obj.pop("train", {}))
        return cls(model=model, lda=lda, train=train, **obj)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def resolve_config(explicit_path: Optional[str]) -> RunConfig:
    """Config from --config, else from $LYRICGEN_CONFIG, else defaults."""
    path = explicit_path or os.environ.get(CONFIG_ENV_VAR)
    if path:
        if not Path(path).exists():
            raise FileNotFoundError(f"config file not found: {path}")
        return RunConfig.load(path)
    return RunConfig()
