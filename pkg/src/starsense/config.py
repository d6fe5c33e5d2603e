"""Scenario configuration: dataclass, file format and validation.

Configuration files are flat key-value text with sections (INI grammar):

    [scenario]
    protocol = both            ; central-station | direct | both
    measurement = both         ; sigma-x | displacement | both
    a2 = 0.8                   ; source intensity |a|^2; |b|^2 = 1 - a2
    alpha = 0.7071067811865476 ; displacement amplitude
    loss_db = 20               ; or loss_km (0.2 dB per km)
    theta = 0.3926990816987241 ; scalar, or four comma-separated phases
    weights = 0.25,-0.25,0.25,-0.25  ; 4 entries single mode, 3 per-pattern
    trials = 1
    per_pattern = false
    pattern_trials = 30
    repetitions = 200
    propagation = eq29         ; or printed
    seed = 12345

Command-line flags override file values. Validation errors identify the
offending section and key.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, replace
from .distribution import DB_PER_KM
from .errors import ConfigError

PROTOCOLS = ("central-station", "direct", "both")
MEASUREMENTS = ("sigma-x", "displacement", "both")
PROPAGATION_VARIANTS = ("eq29", "printed")

DEFAULT_THETA = math.pi / 8.0
DEFAULT_WEIGHTS_SINGLE = (0.25, -0.25, 0.25, -0.25)
DEFAULT_WEIGHTS_PATTERN = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """Full description of one experiment scenario."""

    protocol: str = "both"
    measurement: str = "both"
    a2: float = 0.8
    alpha: complex = complex(1.0 / math.sqrt(2.0))
    loss_db: float = 20.0
    theta: tuple[float, ...] | None = None  # four station phases
    theta_scalar: float = DEFAULT_THETA
    weights: tuple[float, ...] | None = None
    trials: int = 1
    per_pattern: bool = False
    pattern_trials: int = 30
    repetitions: int = 200
    propagation: str = "eq29"
    seed: int = 12345

    def validate(self) -> "ScenarioConfig":
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"scenario.protocol: {self.protocol!r} not in {PROTOCOLS}")
        if self.measurement not in MEASUREMENTS:
            raise ConfigError(
                f"scenario.measurement: {self.measurement!r} not in {MEASUREMENTS}"
            )
        if not 0.0 <= self.a2 <= 1.0:
            raise ConfigError(f"scenario.a2: {self.a2} outside [0, 1]")
        if self.loss_db < 0.0:
            raise ConfigError(f"scenario.loss_db: {self.loss_db} is negative")
        if self.trials < 1:
            raise ConfigError(f"scenario.trials: {self.trials} must be >= 1")
        if self.pattern_trials < 1:
            raise ConfigError(
                f"scenario.pattern_trials: {self.pattern_trials} must be >= 1"
            )
        if self.repetitions < 2:
            raise ConfigError(
                f"scenario.repetitions: {self.repetitions} must be >= 2"
            )
        if self.propagation not in PROPAGATION_VARIANTS:
            raise ConfigError(
                f"scenario.propagation: {self.propagation!r} not in {PROPAGATION_VARIANTS}"
            )
        if self.theta is not None:
            if len(self.theta) != 4:
                raise ConfigError("scenario.theta: need one or four values")
            if self.per_pattern and abs(self.theta[3]) > 1e-12:
                raise ConfigError(
                    "scenario.theta: station 4 is the reference in per-pattern "
                    "mode and must carry phase 0"
                )
        if self.weights is not None:
            if len(self.weights) not in (3, 4):
                raise ConfigError("scenario.weights: need three or four values")
            if not any(self.weights):
                raise ConfigError("scenario.weights: all weights are zero")
            if self.per_pattern and len(self.weights) != 3:
                raise ConfigError("scenario.weights: per-pattern mode takes three weights")
            if not self.per_pattern and len(self.weights) != 4:
                raise ConfigError("scenario.weights: single-parameter mode takes four weights")
        return self

    @property
    def b2(self) -> float:
        return 1.0 - self.a2

    @property
    def eta(self) -> float:
        return 10.0 ** (-self.loss_db / 10.0)

    def station_phases(self) -> tuple[float, ...]:
        """Four station phases implied by the scenario.

        A scalar theta means t*(1,-1,1,-1) in single-parameter mode (the
        sensed combination is then t) and (t,t,t,0) in per-pattern mode.
        """
        if self.theta is not None:
            return self.theta
        t = self.theta_scalar
        if self.per_pattern:
            return (t, t, t, 0.0)
        return (t, -t, t, -t)

    def effective_weights(self) -> tuple[float, ...]:
        if self.weights is not None:
            return self.weights
        return DEFAULT_WEIGHTS_PATTERN if self.per_pattern else DEFAULT_WEIGHTS_SINGLE

    def protocols(self) -> tuple[str, ...]:
        return ("central-station", "direct") if self.protocol == "both" else (self.protocol,)

    def measurements(self) -> tuple[str, ...]:
        return (
            ("sigma-x", "displacement") if self.measurement == "both" else (self.measurement,)
        )


_SCENARIO_KEYS = {
    "protocol",
    "measurement",
    "a2",
    "alpha",
    "loss_db",
    "loss_km",
    "theta",
    "weights",
    "trials",
    "per_pattern",
    "pattern_trials",
    "repetitions",
    "propagation",
    "seed",
}


def _parse_float(section: str, key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{section}.{key}: {raw!r} is not a number") from None


def _parse_int(section: str, key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{section}.{key}: {raw!r} is not an integer") from None


def _parse_bool(section: str, key: str, raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"{section}.{key}: {raw!r} is not a boolean")


def _parse_floats(section: str, key: str, raw: str) -> tuple[float, ...]:
    return tuple(_parse_float(section, key, part) for part in raw.split(","))


def load_config(path: str) -> ScenarioConfig:
    """Read a scenario file; unknown keys are reported, not ignored."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    except configparser.Error as err:
        raise ConfigError(f"cannot parse config {path}: {err}") from None

    cfg = ScenarioConfig()
    for section in parser.sections():
        if section != "scenario":
            raise ConfigError(f"{section}: unknown section (expected [scenario])")
        for key, raw in parser.items(section):
            if key not in _SCENARIO_KEYS:
                raise ConfigError(f"{section}.{key}: unknown key")
            cfg = _apply_key(cfg, section, key, raw)
    return cfg.validate()


def _apply_key(cfg: ScenarioConfig, section: str, key: str, raw: str) -> ScenarioConfig:
    if key == "protocol":
        return replace(cfg, protocol=raw.strip())
    if key == "measurement":
        return replace(cfg, measurement=raw.strip())
    if key == "a2":
        return replace(cfg, a2=_parse_float(section, key, raw))
    if key == "alpha":
        return replace(cfg, alpha=complex(_parse_float(section, key, raw)))
    if key == "loss_db":
        return replace(cfg, loss_db=_parse_float(section, key, raw))
    if key == "loss_km":
        return replace(cfg, loss_db=_parse_float(section, key, raw) * DB_PER_KM)
    if key == "theta":
        values = _parse_floats(section, key, raw)
        if len(values) == 1:
            return replace(cfg, theta=None, theta_scalar=values[0])
        if len(values) == 4:
            return replace(cfg, theta=values)
        raise ConfigError(f"{section}.{key}: need one or four values")
    if key == "weights":
        return replace(cfg, weights=_parse_floats(section, key, raw))
    if key == "trials":
        return replace(cfg, trials=_parse_int(section, key, raw))
    if key == "per_pattern":
        return replace(cfg, per_pattern=_parse_bool(section, key, raw))
    if key == "pattern_trials":
        return replace(cfg, pattern_trials=_parse_int(section, key, raw))
    if key == "repetitions":
        return replace(cfg, repetitions=_parse_int(section, key, raw))
    if key == "propagation":
        return replace(cfg, propagation=raw.strip())
    if key == "seed":
        return replace(cfg, seed=_parse_int(section, key, raw))
    raise ConfigError(f"{section}.{key}: unknown key")


@dataclass(frozen=True)
class GridSpec:
    """Inclusive numeric grid ``start:stop:step``."""

    start: float
    stop: float
    step: float

    def values(self) -> list[float]:
        if self.step <= 0:
            raise ConfigError(f"grid step {self.step} must be positive")
        if self.stop < self.start:
            raise ConfigError("grid stop precedes start")
        n = int(round((self.stop - self.start) / self.step))
        points = [self.start + i * self.step for i in range(n + 1)]
        if points[-1] > self.stop + 1e-12:
            points.pop()
        return points


def parse_grid(spec: str) -> GridSpec:
    parts = spec.split(":")
    if len(parts) != 3:
        raise ConfigError(f"grid {spec!r} must be start:stop:step")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"grid {spec!r} has non-numeric parts") from None
    return GridSpec(start, stop, step)
