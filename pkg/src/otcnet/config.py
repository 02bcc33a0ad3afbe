"""Run configuration: a JSON document, overridable from the command line."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .correlate import FIELDS


class ConfigError(ValueError):
    pass


@dataclass
class GrowthWindow:
    institution: str
    start: str
    end: str


@dataclass
class RunConfig:
    panel: str | None = None
    aliases: str | None = None
    market_totals: str | None = None
    quarters: list[str] | None = None  # [start, end]
    out: str = "out"
    tolerant: bool = False
    allow_unsafe_merge: bool = False
    alpha: float = 0.0
    beta: float = 1.0
    schedule: str = "distinct"
    fields: list[str] = field(default_factory=lambda: list(FIELDS))
    period: list[str] | None = None  # [start, end]
    scaled: bool = True
    split: str | None = None  # boundary quarter, e.g. "2008-Q4"
    frames_mode: str = "rank"
    ks_trials: int = 10000
    p_threshold: float = 0.10
    seed: int = 0
    growth: list[GrowthWindow] = field(default_factory=list)

    @classmethod
    def from_dict(cls, doc: dict, base: Path | None = None) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        doc = dict(doc)
        doc["growth"] = [GrowthWindow(**g) for g in doc.get("growth", [])]
        cfg = cls(**doc)
        if base is not None:
            for name in ("panel", "aliases", "market_totals"):
                value = getattr(cfg, name)
                if value and not Path(value).is_absolute():
                    setattr(cfg, name, str(base / value))
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
        return cls.from_dict(doc, path.parent)

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self, need_panel: bool = True) -> None:
        if need_panel and not self.panel:
            raise ConfigError("no panel CSV given (--panel or config 'panel')")
        for name in ("panel", "aliases", "market_totals"):
            value = getattr(self, name)
            if value and not Path(value).is_file():
                raise ConfigError(f"{name} file not found: {value}")
        if not self.alpha + self.beta > 0:
            raise ConfigError("alpha + beta must be positive")
        if not 0 < self.p_threshold < 1:
            raise ConfigError("p_threshold must lie in (0, 1)")
        if self.ks_trials < 1:
            raise ConfigError("ks_trials must be >= 1")
        bad = [f for f in self.fields if f not in FIELDS]
        if bad:
            raise ConfigError(f"unknown correlation field(s): {', '.join(bad)}")
        for pair in (self.quarters, self.period):
            if pair is not None and len(pair) != 2:
                raise ConfigError("quarter ranges must be [start, end]")
