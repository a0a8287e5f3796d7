"""Flat ``key = value`` run configuration files.

One setting per line, ``#`` starts a comment. Keys are the fields of
:class:`TrainConfig` plus the experiment and output keys of :class:`RunConfig`.
Tuples are comma separated; ``target_batch = auto`` means "same as batch_size".
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    experiment: str = "spiral"
    target_csv: str = ""  # overrides the experiment sampler when set
    n_train: int = 1000
    n_test: int = 1000
    data_seed: int = 0
    noise: float = 0.0
    eval_eps: float = 0.0  # 0: use eps_floor
    eval_n: int = 1000
    eval_tol: float = 1e-3
    eval_max_iter: int = 5000
    checkpoint: str = "model.sgan"
    metrics: str = "metrics.csv"

    def replace(self, **kw) -> "RunConfig":
        train_kw = {k: v for k, v in kw.items() if k in _TRAIN_KEYS}
        run_kw = {k: v for k, v in kw.items() if k not in _TRAIN_KEYS}
        unknown = set(run_kw) - set(_RUN_KEYS)
        if unknown:
            raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}")
        return replace(self, train=self.train.replace(**train_kw), **run_kw)

    @property
    def effective_eval_eps(self) -> float:
        return self.eval_eps if self.eval_eps > 0 else self.train.eps_floor

    def experiment_spec(self):
        from .synthdata import ExperimentSpec

        return ExperimentSpec(self.experiment, n_train=self.n_train, n_test=self.n_test, seed=self.data_seed,
                              noise=self.noise)


_TRAIN_KEYS = {f.name: f for f in fields(TrainConfig)}
_RUN_KEYS = {f.name: f for f in fields(RunConfig) if f.name != "train"}
_TUPLE_INT = {"hidden"}
_TUPLE_STR = {"activations"}


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def convert(key: str, text: str):
    """Typed value for ``key`` parsed from ``text``."""
    text = text.strip()
    if key in _TUPLE_INT:
        return tuple(int(t) for t in text.split(",") if t.strip())
    if key in _TUPLE_STR:
        return tuple(t.strip() for t in text.split(",") if t.strip())
    if key == "target_batch":
        return None if text.lower() == "auto" else int(text)
    default = getattr(TrainConfig(), key) if key in _TRAIN_KEYS else getattr(RunConfig(), key)
    if isinstance(default, bool):
        return _parse_bool(text)
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


def _format(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse(text: str, source: str = "<string>") -> RunConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _TRAIN_KEYS and key not in _RUN_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = convert(key, val)
        except ValueError as e:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {e}") from None
    try:
        return RunConfig().replace(**values)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"{source}: {e}") from None


def serialize(cfg: RunConfig) -> str:
    lines = [f"{k} = {_format(v)}" for k, v in asdict(cfg.train).items()]
    lines += [f"{k} = {_format(getattr(cfg, k))}" for k in _RUN_KEYS]
    return "\n".join(lines) + "\n"


def load(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read {p}: {e.strerror}") from None
    return parse(text, str(p))


def preset_path(name: str) -> Path:
    p = Path(__file__).with_name("presets") / f"{name}.cfg"
    if not p.exists():
        raise ConfigError(f"no preset named {name!r}")
    return p


def resolve(name_or_path: str) -> RunConfig:
    """Load a config file, or a shipped preset by bare name (``spiral``)."""
    p = Path(name_or_path)
    if p.exists():
        return load(p)
    return load(preset_path(name_or_path))


def all_keys() -> list[str]:
    return list(_TRAIN_KEYS) + list(_RUN_KEYS)

