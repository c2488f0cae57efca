"""Run configuration: sectioned ``key = value`` text with ``#`` comments.

Every key has a default, so an empty file is a valid configuration.  Errors
carry the offending line number.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

DEFAULTS: dict[str, dict[str, object]] = {
    "run": {"dim": 7, "seed": 0, "out": "out"},
    "potential": {"spec": "builtin:appendix_d", "symmetry": "four_dim_radial", "guess": "auto"},
    "audit": {"face": "plus", "m": 8, "variant": "auto"},
    "ring": {"m": 8, "n": 8, "lam": 20.0, "mu": "auto"},
    "cutoff": {"delta": "auto"},
    "quadrature": {"method": "radial_gauss", "order": 64, "samples": 1000000},
    "scaling": {"n_values": "64,128,256,512,1024,2048,4096"},
    "residual": {"mu_ladder": 4},
    "pohozaev": {"preset": "gaussian-ball-3d", "order": 40},
    "reduced": {"n_values": "64,128,256", "vartheta": "auto"},
}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _coerce(default, text: str, line: int | None):
    try:
        if isinstance(default, bool):
            if text.lower() not in ("true", "false"):
                raise ValueError(text)
            return text.lower() == "true"
        if isinstance(default, int):
            return int(text, 0)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"expected {type(default).__name__}, got {text!r}", line) from None
    return text


@dataclass
class RunConfig:
    sections: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))
    source: str | None = None

    def get(self, section: str, key: str):
        return self.sections[section][key]

    def set(self, section: str, key: str, text: str, line: int | None = None) -> None:
        if section not in DEFAULTS:
            raise ConfigError(f"unknown section [{section}]", line)
        if key not in DEFAULTS[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]", line)
        self.sections[section][key] = _coerce(DEFAULTS[section][key], text.strip(), line)

    def to_text(self) -> str:
        out = []
        for sec, items in self.sections.items():
            out.append(f"[{sec}]")
            out.extend(f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}"
                       for k, v in items.items())
            out.append("")
        return "\n".join(out)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.sections)


def parse_config(text: str, source: str | None = None) -> RunConfig:
    cfg = RunConfig(source=source)
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError("unterminated section header", lineno)
            section = line[1:-1].strip()
            if section not in DEFAULTS:
                raise ConfigError(f"unknown section [{section}]", lineno)
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", lineno)
        if section is None:
            raise ConfigError("key outside of any section", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        cfg.set(section, key, value, lineno)
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), str(path))


def int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None
