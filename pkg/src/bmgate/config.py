"""Run configuration: JSON file plus command-line overrides."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import fixtures
from .engine import ChannelModel, strategy_from_dict
from .errors import ConfigError
from .monitor import MonitorConfig
from .security import default_grid
from .temporal import TemporalResponse, read_response

COMMANDS = ("simulate", "analyze", "optimize", "monitor", "figures")
FIXTURE_PREFIX = "fixture:"


@dataclass
class RunConfig:
    command: str = "simulate"
    curve_file: str | None = None
    bitmapped_window: tuple[float, float] | None = None
    strategy: dict = field(default_factory=lambda: {"tag": "honest"})
    n_gates: int = 100_000
    seed: int = 0
    dark_count_prob: float = 0.0
    transmittance: float = 1.0
    workers: int = 1
    E: float | None = None
    E_prime: float | None = None
    E_prime_grid: list[float] | dict | None = None
    delta: float = 0.0
    monitor: dict = field(default_factory=dict)
    simulate_key: bool = True
    out: str = "."
    base_dir: str = field(default=".", repr=False)

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if not self.curve_file:
            raise ConfigError("curve_file is required")
        is_fixture = self.curve_file.startswith(FIXTURE_PREFIX)
        if not is_fixture and self.bitmapped_window is None:
            raise ConfigError("bitmapped_window is required with a curve file")
        if self.bitmapped_window is not None and len(self.bitmapped_window) != 2:
            raise ConfigError("bitmapped_window must be a [start, end] pair")
        if not isinstance(self.n_gates, int) or self.n_gates < 1:
            raise ConfigError(f"n_gates must be a positive integer, got {self.n_gates!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ConfigError(f"workers must be a positive integer, got {self.workers!r}")
        if self.E is not None and not 0.0 <= self.E <= 0.5:
            raise ConfigError(f"E must lie in [0, 1/2], got {self.E}")
        if self.E_prime is not None and not 0.0 < self.E_prime <= 0.5:
            raise ConfigError(f"E_prime must lie in (0, 1/2], got {self.E_prime}")
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigError(f"delta must lie in [0, 1], got {self.delta}")
        for e in self.grid():
            if not (isinstance(e, (int, float)) and 0.0 < e <= 0.5):
                raise ConfigError(f"grid thresholds must lie in (0, 1/2], got {e!r}")
        self.channel()
        self.strategy_obj()
        self.monitor_config()
        if self.command == "analyze" and self.E_prime is None:
            raise ConfigError("analyze needs E_prime")

    def channel(self) -> ChannelModel:
        return ChannelModel(self.dark_count_prob, self.transmittance)

    def strategy_obj(self):
        if not isinstance(self.strategy, dict):
            raise ConfigError("strategy must be an object with a 'tag' field")
        return strategy_from_dict(self.strategy)

    def monitor_config(self) -> MonitorConfig:
        try:
            return MonitorConfig(**self.monitor)
        except TypeError as exc:
            raise ConfigError(f"bad monitor settings: {exc}") from exc

    def grid(self) -> list[float]:
        g = self.E_prime_grid
        if g is None:
            return default_grid()
        if isinstance(g, dict):
            try:
                return default_grid(float(g.get("step", 0.01)))
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        if not isinstance(g, list):
            raise ConfigError("E_prime_grid must be a list of thresholds or {\"step\": x}")
        return list(g)

    def curve_path(self) -> Path:
        path = Path(self.curve_file)
        return path if path.is_absolute() else Path(self.base_dir) / path

    def response(self) -> TemporalResponse:
        if self.curve_file.startswith(FIXTURE_PREFIX):
            name = self.curve_file[len(FIXTURE_PREFIX):]
            try:
                resp = fixtures.by_name(name)
            except KeyError as exc:
                raise ConfigError(str(exc.args[0])) from exc
            if self.bitmapped_window is not None:
                resp = TemporalResponse(
                    resp.t_grid, resp.eta_a, resp.eta_b, resp.theta, tuple(self.bitmapped_window)
                )
            return resp
        return read_response(self.curve_path(), tuple(self.bitmapped_window))

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        if d["bitmapped_window"] is not None:
            d["bitmapped_window"] = list(d["bitmapped_window"])
        return d


def load_config(path: str | Path | None, command: str, overrides: dict) -> RunConfig:
    """Read a JSON config (if given) and apply non-None ``overrides``; flags win."""
    data: dict = {}
    base = "."
    if path is not None:
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        base = str(path.parent)
    known = {f.name for f in fields(RunConfig)} - {"command", "base_dir"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    data.update({k: v for k, v in overrides.items() if v is not None})
    for key in ("E", "E_prime", "delta", "dark_count_prob", "transmittance"):
        value = data.get(key)
        if value is not None and (not isinstance(value, (int, float)) or not math.isfinite(value)):
            raise ConfigError(f"{key} must be a finite number, got {value!r}")
    cfg = RunConfig(command=command, base_dir=base, **data)
    cfg.validate()
    return cfg
