"""Run configuration: nested dataclasses loaded from TOML with line-precise errors."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .classifiers.augment import AugmentConfig
from .classifiers.ddm import DdmHyper
from .classifiers.debias import STRATEGY_KINDS, TrainStrategy
from .classifiers.judge import JudgeHyper
from .editing import DEFAULT_ALPHAS
from .errors import ConfigError
from .neutralizer.losses import LossWeights
from .neutralizer.networks import GeneratorSpec
from .neutralizer.training import NeutralizerHyper

PRESETS = ("vit-paper", "cnn-paper", "desk")


@dataclass
class Paths:
    manifest: str = ""
    image_root: str = ""
    output_dir: str = "runs/default"


@dataclass
class SynthConfig:
    n_images: int = 1000
    image_size: int = 64
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)


@dataclass
class NeutralizerConfig:
    spec: dict = field(default_factory=dict)
    loss: LossWeights = field(default_factory=LossWeights.vit_paper)
    train: NeutralizerHyper = field(default_factory=NeutralizerHyper)


@dataclass
class DdmConfig:
    hyper: DdmHyper = field(default_factory=DdmHyper)
    strategies: tuple[str, ...] = STRATEGY_KINDS
    neutralized_alpha: float = 0.5
    beta_param: float = 1.0


@dataclass
class StatsConfig:
    n_boot: int = 1000
    nemenyi_alpha: float = 0.05
    fdr_q: float = 0.05
    ssim_patch: int = 100
    ssim_images: int = 1000


@dataclass
class ExplainConfig:
    n_images: int = 4
    target: str = "sex"
    layer: str = ""


@dataclass
class RunConfig:
    seed: int = 0
    attribute: str = "sex"
    encoder_kind: str = "vit"
    image_size: int = 256
    alphas: tuple[float, ...] = DEFAULT_ALPHAS
    paths: Paths = field(default_factory=Paths)
    synth: SynthConfig = field(default_factory=SynthConfig)
    neutralizer: NeutralizerConfig = field(default_factory=NeutralizerConfig)
    judge: JudgeHyper = field(default_factory=JudgeHyper)
    ddm: DdmConfig = field(default_factory=DdmConfig)
    stats: StatsConfig = field(default_factory=StatsConfig)
    explain: ExplainConfig = field(default_factory=ExplainConfig)
    source: str = field(default="", compare=False)

    def generator_spec(self) -> GeneratorSpec:
        kw = dict(self.neutralizer.spec)
        if self.encoder_kind == "vit":
            return GeneratorSpec.vit(self.image_size, **kw)
        return GeneratorSpec.unet(self.image_size, **kw)

    def neutralizer_hyper(self) -> NeutralizerHyper:
        return dataclasses.replace(self.neutralizer.train, seed=self.seed, attribute=self.attribute)

    def judge_hyper(self) -> JudgeHyper:
        return dataclasses.replace(self.judge, seed=self.seed)

    def ddm_hyper(self) -> DdmHyper:
        return dataclasses.replace(self.ddm.hyper, seed=self.seed)

    def strategies(self) -> list[TrainStrategy]:
        out = []
        for kind in self.ddm.strategies:
            if kind == "neutralized":
                out.append(TrainStrategy.neutralized(self.ddm.neutralized_alpha, self.encoder_kind))
            elif kind in ("mixup", "manifold_mixup"):
                out.append(TrainStrategy(kind, beta_param=self.ddm.beta_param, group_attr=self.attribute))
            elif kind == "balanced":
                out.append(TrainStrategy.balanced(self.attribute))
            else:
                out.append(TrainStrategy(kind))
        return out

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("source")
        return json.loads(json.dumps(d, default=list))

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------------------
# loading


def _key_line(text: str, table: tuple[str, ...], key: str | None) -> int | None:
    """1-based line of ``key`` inside ``[table]`` (or of the table header)."""
    current: tuple[str, ...] = ()
    header_line = None
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.split("#", 1)[0].strip()
        m = re.match(r"^\[\s*([^\]]+?)\s*\]$", s)
        if m:
            current = tuple(p.strip().strip('"') for p in m.group(1).split("."))
            if current == table:
                header_line = i
            continue
        if key is not None and current == table and re.match(rf"^\"?{re.escape(key)}\"?\s*=", s):
            return i
    return header_line


class _Builder:
    def __init__(self, text: str, source: str):
        self.text, self.source = text, source

    def fail(self, table, key, message) -> None:
        line = _key_line(self.text, table, key)
        where = f"{self.source}:{line}" if line else self.source
        dotted = ".".join(table + ((key,) if key else ()))
        raise ConfigError(f"{where}: {dotted}: {message}")

    def fill(self, obj, data: dict, table: tuple[str, ...], nested: dict | None = None):
        nested = nested or {}
        fields = {f.name: f for f in dataclasses.fields(obj)}
        updates = {}
        for key, value in data.items():
            if key in nested:
                continue
            if key not in fields or key == "source":
                self.fail(table, key, f"unknown key (expected one of {sorted(k for k in fields if k != 'source')})")
            updates[key] = self.coerce(getattr(obj, key), value, table, key)
        for key, fn in nested.items():
            if key in data:
                if not isinstance(data[key], dict):
                    self.fail(table, key, "expected a table")
                updates[key] = fn(data[key], table + (key,))
        try:
            return dataclasses.replace(obj, **updates)
        except (TypeError, ValueError) as exc:
            self.fail(table, next(iter(updates), None), str(exc))

    def coerce(self, current, value, table, key):
        if isinstance(current, bool):
            if not isinstance(value, bool):
                self.fail(table, key, f"expected true/false, got {value!r}")
            return value
        if isinstance(current, int) and not isinstance(current, bool):
            if isinstance(value, bool) or not isinstance(value, int):
                self.fail(table, key, f"expected an integer, got {value!r}")
            return value
        if isinstance(current, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                self.fail(table, key, f"expected a number, got {value!r}")
            return float(value)
        if isinstance(current, tuple):
            if not isinstance(value, list):
                self.fail(table, key, f"expected a list, got {value!r}")
            return tuple(value)
        if isinstance(current, str) or current is None:
            if current is None and value == "":
                return None
            if not isinstance(value, str):
                self.fail(table, key, f"expected a string, got {value!r}")
            return value
        return value


def _build(data: dict, text: str, source: str, base: RunConfig | None = None) -> RunConfig:
    b = _Builder(text, source)
    base = base or RunConfig()

    def augment(parent):
        return lambda d, t: b.fill(parent.augment, d, t)

    def neutralizer(d, t):
        cur = base.neutralizer
        spec = dict(cur.spec)
        if "spec" in d:
            if not isinstance(d["spec"], dict):
                b.fail(t, "spec", "expected a table")
            spec.update({k: tuple(v) if isinstance(v, list) else v for k, v in d["spec"].items()})
        extra = set(d) - {"spec", "loss", "train"}
        if extra:
            b.fail(t, sorted(extra)[0], "unknown key (expected spec, loss, train)")
        loss = b.fill(cur.loss, d.get("loss", {}), t + ("loss",))
        train = b.fill(cur.train, d.get("train", {}), t + ("train",))
        return NeutralizerConfig(spec=spec, loss=loss, train=train)

    def ddm(d, t):
        cur = base.ddm
        hyper_keys = {f.name for f in dataclasses.fields(DdmHyper)}
        hyper_part = {k: v for k, v in d.items() if k in hyper_keys}
        rest = {k: v for k, v in d.items() if k not in hyper_keys}
        allowed = (hyper_keys | {f.name for f in dataclasses.fields(DdmConfig)}) - {"hyper"}
        for key in rest:
            if key not in allowed:
                b.fail(t, key, f"unknown key (expected one of {sorted(allowed)})")
        hyper = b.fill(cur.hyper, hyper_part, t, nested={"augment": augment(cur.hyper)})
        if "augment" in d:
            hyper = dataclasses.replace(hyper, augment=b.fill(cur.hyper.augment, d["augment"], t + ("augment",)))
        out = b.fill(dataclasses.replace(cur, hyper=hyper), rest, t)
        for s in out.strategies:
            if s not in STRATEGY_KINDS:
                b.fail(t, "strategies", f"unknown strategy {s!r}")
        return out

    cfg = b.fill(
        base,
        data,
        (),
        nested={
            "paths": lambda d, t: b.fill(base.paths, d, t),
            "synth": lambda d, t: b.fill(base.synth, d, t),
            "neutralizer": neutralizer,
            "judge": lambda d, t: b.fill(base.judge, d, t, nested={"augment": augment(base.judge)}),
            "ddm": ddm,
            "stats": lambda d, t: b.fill(base.stats, d, t),
            "explain": lambda d, t: b.fill(base.explain, d, t),
        },
    )
    validate(cfg, b)
    cfg.source = source
    return cfg


def validate(cfg: RunConfig, b: _Builder | None = None) -> None:
    b = b or _Builder("", cfg.source or "<config>")
    if cfg.attribute not in ("sex", "age"):
        b.fail((), "attribute", "must be 'sex' or 'age'")
    if cfg.encoder_kind not in ("vit", "unet"):
        b.fail((), "encoder_kind", "must be 'vit' or 'unet'")
    if not cfg.alphas or any(not 0.0 <= a <= 1.0 for a in cfg.alphas):
        b.fail((), "alphas", "every alpha must lie in [0, 1]")
    if any(y <= x for x, y in zip(cfg.alphas, cfg.alphas[1:])):
        b.fail((), "alphas", "alphas must be strictly increasing")
    if not 0.0 <= cfg.ddm.neutralized_alpha <= 1.0:
        b.fail(("ddm",), "neutralized_alpha", "must lie in [0, 1]")
    try:
        cfg.generator_spec()
    except (TypeError, ValueError) as exc:
        b.fail(("neutralizer", "spec"), None, str(exc))
    for table, key, value in (
        (("neutralizer", "train"), "epochs", cfg.neutralizer.train.epochs),
        (("judge",), "epochs", cfg.judge.epochs),
        (("ddm",), "epochs", cfg.ddm.hyper.epochs),
    ):
        if value < 0:
            b.fail(table, key, "must be nonnegative")
    for table, key, value in (
        (("neutralizer", "train"), "batch_size", cfg.neutralizer.train.batch_size),
        (("judge",), "batch_size", cfg.judge.batch_size),
        (("ddm",), "batch_size", cfg.ddm.hyper.batch_size),
        (("stats",), "n_boot", cfg.stats.n_boot),
    ):
        if value < 1:
            b.fail(table, key, "must be at least 1")


def preset_path(name: str) -> Path:
    return Path(str(resources.files("neutralyze") / "presets" / f"{name}.toml"))


def parse_config(text: str, source: str = "<string>", base: RunConfig | None = None) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    extends = data.pop("extends", None)
    if extends is not None:
        if extends not in PRESETS:
            raise ConfigError(f"{source}:{_key_line(text, (), 'extends')}: unknown preset {extends!r}")
        base = load_config(preset_path(extends))
    return _build(data, text, source, base)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    return parse_config(text, str(path))


def load_preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")
    return load_config(preset_path(name))


def apply_overrides(cfg: RunConfig, overrides: list[str]) -> RunConfig:
    """``key.path=value`` overrides, values parsed as TOML literals."""
    if not overrides:
        return cfg
    lines = []
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, value = item.split("=", 1)
        try:
            tomllib.loads(f"x = {value}")
        except tomllib.TOMLDecodeError:
            value = json.dumps(value)
        lines.append(f"{key.strip()} = {value}")
    return parse_config("\n".join(lines), "<overrides>", base=cfg)


def as_jsonable(obj: Any):
    if dataclasses.is_dataclass(obj):
        return {k: as_jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, (list, tuple)):
        return [as_jsonable(v) for v in obj]
    return obj


__all__ = [
    "AugmentConfig",
    "DdmConfig",
    "ExplainConfig",
    "NeutralizerConfig",
    "PRESETS",
    "Paths",
    "RunConfig",
    "StatsConfig",
    "SynthConfig",
    "apply_overrides",
    "load_config",
    "load_preset",
    "parse_config",
    "validate",
]
