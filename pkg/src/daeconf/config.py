"""Experiment configuration: a flat ``key = value`` text format.

Example::

    # fooling at desk scale
    task = fool
    variant = dae
    hidden = 400
    fool_eta = 0.001
    alpha = none

Values are written as plain literals. Tuples are comma-separated, booleans
are ``true``/``false`` and a missing value is ``none``. Hyperparameters left
at ``none`` take the per-task defaults of :data:`TASK_DEFAULTS` when the
config is resolved, so one file format serves every protocol.
"""

from __future__ import annotations

import hashlib
import os
import typing
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ParameterError

OUTPUT_ENV = "DAECONF_OUTPUT_DIR"
TASKS = ("rings", "fool", "openset", "oneclass", "gradcheck", "confmap", "train", "eval")
VARIANTS = ("plain", "cool", "dae")


class ConfigError(ParameterError):
    """A config file or flag that does not validate; names the offending field."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class ExperimentConfig:
    task: str = "fool"
    variant: str = "dae"
    seed: int = 0
    workers: int = 1
    # architecture
    architecture: str = "dense"
    hidden: tuple[int, ...] | None = None
    decoder_mode: str = "symmetric"
    omega: int = 10
    # confidence score
    alpha: float | None = None
    beta: float | None = None
    sigma: float | None = None
    use_gate: bool = True
    jacobian_method: str = "exact"
    # optimisation
    eta: float = 1e-3
    epochs: int | None = None
    steps: int | None = None
    batch: int = 64
    lambda_rec: float = 1.0
    lambda_l2: float | None = None
    max_train: int | None = 2000
    equal_updates: bool = True
    # evaluation
    threshold: float | None = None
    repetitions: int = 5
    known_counts: tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7, 8, 9, 10)
    classes: tuple[int, ...] = (0, 1, 2, 3, 4, 5, 6, 7, 8, 9)
    # fooling generator
    fool_trials: int = 20
    fool_updates: int = 10_000
    fool_eta: float = 1e-5
    fool_target: str = "unscaled_y"
    # gradient check
    gradcheck_instances: int = 10
    # paths
    data_dir: str | None = None
    checkpoint: str | None = None
    output_dir: str | None = None

    def __post_init__(self):
        validate(self)

    def resolved(self) -> ExperimentConfig:
        """Copy with every ``none`` hyperparameter replaced by its task default."""
        defaults = dict(TASK_DEFAULTS.get(self.task, {}))
        if self.task == "oneclass" and self.variant == "dae":
            defaults.update(ONE_CLASS_DAE)
        updates = {k: v for k, v in defaults.items() if getattr(self, k) is None}
        for k, v in FALLBACKS.items():
            if getattr(self, k) is None and k not in updates:
                updates[k] = v
        return replace(self, **updates)

    def digest(self) -> str:
        """SHA-256 of the emitted text, ignoring where outputs are written."""
        text = emit(replace(self, output_dir=None, workers=1))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def output_path(self) -> Path:
        if self.output_dir:
            return Path(self.output_dir)
        root = os.environ.get(OUTPUT_ENV, "runs")
        return Path(root) / f"{self.task}-{self.variant}-{self.digest()[:10]}"


# Hyperparameters that depend on the protocol. Rings: 2 -> 200 -> 200
# autoencoder, 10 000 steps. Digits: alpha 20 for a 90% threshold and 3 for
# 99%, beta 10.
TASK_DEFAULTS: dict[str, dict] = {
    "rings": dict(hidden=(200, 200), alpha=40.0, beta=5.0, sigma=0.2, steps=10_000,
                  lambda_l2=0.0, threshold=0.9),
    "confmap": dict(hidden=(200, 200), alpha=40.0, beta=5.0, sigma=0.2, steps=10_000,
                    lambda_l2=0.0, threshold=0.9),
    "fool": dict(alpha=20.0, beta=10.0, threshold=0.9),
    "train": dict(alpha=20.0, beta=10.0, threshold=0.9),
    "eval": dict(threshold=0.9),
    "openset": dict(alpha=3.0, beta=10.0, threshold=0.99),
    "oneclass": dict(alpha=3.0, beta=10.0, threshold=0.99),
}
ONE_CLASS_DAE = dict(sigma=0.3)
FALLBACKS = dict(hidden=(400,), alpha=20.0, beta=10.0, sigma=0.2, epochs=20, lambda_l2=0.0,
                 threshold=0.9)

_CHOICES = {
    "task": TASKS,
    "variant": VARIANTS,
    "architecture": ("dense", "cnn"),
    "decoder_mode": ("symmetric", "asymmetric"),
    "jacobian_method": ("exact", "finite_diff"),
    "fool_target": ("unscaled_y", "scaled_y"),
}
_POSITIVE = ("workers", "omega", "alpha", "beta", "eta", "epochs", "steps", "batch",
             "max_train", "repetitions", "fool_trials", "fool_updates", "fool_eta",
             "gradcheck_instances")
_NON_NEGATIVE = ("sigma", "lambda_rec", "lambda_l2")


def validate(cfg: ExperimentConfig) -> None:
    for name, allowed in _CHOICES.items():
        if getattr(cfg, name) not in allowed:
            raise ConfigError(name, f"must be one of {', '.join(allowed)}; "
                                    f"got {getattr(cfg, name)!r}")
    for name in _POSITIVE:
        v = getattr(cfg, name)
        if v is not None and v <= 0:
            raise ConfigError(name, f"must be > 0; got {v!r}")
    for name in _NON_NEGATIVE:
        v = getattr(cfg, name)
        if v is not None and v < 0:
            raise ConfigError(name, f"must be >= 0; got {v!r}")
    if cfg.threshold is not None and not 0.0 <= cfg.threshold < 1.0:
        raise ConfigError("threshold", f"must lie in [0, 1); got {cfg.threshold!r}")
    if cfg.hidden is not None and (not cfg.hidden or min(cfg.hidden) < 1):
        raise ConfigError("hidden", "needs at least one positive layer width")
    if not cfg.known_counts or not all(1 <= k <= 10 for k in cfg.known_counts):
        raise ConfigError("known_counts", "entries must lie in [1, 10]")
    if not cfg.classes or not all(0 <= k <= 9 for k in cfg.classes):
        raise ConfigError("classes", "entries must be digit classes in [0, 9]")


# ---------------------------------------------------------------- text form

_HINTS = typing.get_type_hints(ExperimentConfig)


def _kind(name: str) -> tuple[type, bool]:
    """(base type, optional) for a field; tuples are reported as ``tuple``."""
    hint = _HINTS[name]
    args = typing.get_args(hint)
    optional = type(None) in args
    if optional:
        hint = next(a for a in args if a is not type(None))
    base = typing.get_origin(hint) or hint
    return base, optional


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_value(name: str, text: str):
    if name not in _HINTS:
        raise ConfigError(name, "unknown key")
    base, optional = _kind(name)
    text = text.strip()
    if text.lower() == "none":
        if optional:
            return None
        raise ConfigError(name, "may not be none")
    try:
        if base is bool:
            low = text.lower()
            if low not in ("true", "false"):
                raise ValueError(text)
            return low == "true"
        if base is tuple:
            return tuple(int(p) for p in text.split(",") if p.strip())
        if base is int:
            return int(text.replace("_", ""))
        if base is float:
            return float(text)
    except ValueError:
        raise ConfigError(name, f"cannot read {text!r} as {base.__name__}") from None
    return text


def emit(cfg: ExperimentConfig) -> str:
    return "".join(f"{f.name} = {_format(getattr(cfg, f.name))}\n" for f in fields(cfg))


def parse(text: str) -> ExperimentConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw.strip()!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key in values:
            raise ConfigError(key, f"given twice (line {lineno})")
        values[key] = parse_value(key, value)
    return ExperimentConfig(**values)


def load(path) -> ExperimentConfig:
    return parse(Path(path).read_text(encoding="utf-8"))


def with_overrides(cfg: ExperimentConfig, overrides: dict[str, str]) -> ExperimentConfig:
    """Apply textual overrides (e.g. from command-line flags)."""
    return replace(cfg, **{k: parse_value(k, v) for k, v in overrides.items()})


FIELD_NAMES = tuple(f.name for f in fields(ExperimentConfig))
