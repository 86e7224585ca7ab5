"""Experiment configuration: a flat ``key = value`` file with namespaced keys.

Example::

    manifest = data/fashion.tsv
    out = results
    seed = 0
    split.fractions = 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9
    split.repeats = 30
    classifier.C = 1.0
    pipelines = style, color, texture
    pipeline.style.descriptor = sift
    pipeline.style.encoder = ifv
    pipeline.style.centers = 256
    pipeline.color.descriptor = cn
    pipeline.color.encoder = rcc
    pipeline.texture.descriptor = prico
    pipeline.texture.encoder = hist
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .classifier import TrainConfig
from .evaluation import (DEFAULT_FRACTIONS, DEFAULT_REPEATS, DEFAULT_SAMPLE_CAP, EncoderPipeline,
                         SplitSpec, read_manifest)
from .features import LOCAL_KINDS, DescriptorConfig

GLOBAL_KEYS = {"manifest", "out", "seed", "jobs", "pipelines", "split.protocol", "split.fractions",
               "split.repeats", "split.train_per_category", "split.test_per_category",
               "classifier.C", "classifier.tol", "classifier.max_epochs", "extract.target_height",
               "extract.crop", "extract.cn_table", "encoder.sample_cap", "rank.fraction"}
PIPELINE_KEYS = {"descriptor", "encoder", "centers", "stimulus", "step", "scales", "coverage",
                 "lbp.P", "lbp.R", "lbp.mapping", "prico.offsets", "rcc.cell", "rcc.radius"}


class ConfigError(ValueError):
    """Invalid configuration; raised before any data is processed."""


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        values[key.strip()] = value.strip()
    return values


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    values = parse_config_text(path.read_text(), str(path))
    # relative paths in the file are relative to the file
    for key in ("manifest", "out", "extract.cn_table"):
        if key in values and not Path(values[key]).is_absolute():
            values[key] = str(path.parent / values[key])
    return values


@dataclass
class PipelineConfig:
    name: str
    descriptor: DescriptorConfig
    encoder: str
    centers: int
    stimulus: str
    rcc_cell: int = 32
    rcc_radius: float = 16.0

    def build(self, classifier: TrainConfig, sample_cap: int) -> EncoderPipeline:
        return EncoderPipeline(self.name, self.encoder, self.centers, classifier, sample_cap,
                               self.rcc_cell, self.rcc_radius, self.stimulus)


@dataclass
class ExperimentConfig:
    manifest: Path
    out: Path
    seed: int
    jobs: int
    split: SplitSpec
    fractions: tuple
    classifier: TrainConfig
    pipelines: list
    sample_cap: int = DEFAULT_SAMPLE_CAP
    cn_table: Path | None = None
    rank_fraction: float = 0.5
    raw: dict = field(default_factory=dict, repr=False)


def _get(values, key, conv, default):
    if key not in values:
        return default
    try:
        return conv(values[key])
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {values[key]!r} ({exc})") from None


def _bool(text: str) -> bool:
    t = text.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _floats(text: str) -> tuple:
    return tuple(float(t) for t in text.replace(",", " ").split())


def _ints(text: str) -> tuple:
    return tuple(int(t) for t in text.replace(",", " ").split())


def _names(text: str) -> list:
    return [t for t in text.replace(",", " ").split() if t]


def build_config(values: dict, check_manifest: bool = True) -> ExperimentConfig:
    """Validate raw key/values into an :class:`ExperimentConfig`."""
    names = _names(values.get("pipelines", ""))
    allowed = set(GLOBAL_KEYS)
    for n in names:
        allowed |= {f"pipeline.{n}.{k}" for k in PIPELINE_KEYS}
    unknown = sorted(set(values) - allowed)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    if "manifest" not in values:
        raise ConfigError("'manifest' is required")
    if not names:
        raise ConfigError("'pipelines' must name at least one pipeline")
    if len(set(names)) != len(names):
        raise ConfigError("pipeline names must be unique")

    seed = _get(values, "seed", int, 0)
    jobs = _get(values, "jobs", int, 1)
    if jobs < 1:
        raise ConfigError("jobs must be >= 1")
    try:
        classifier = TrainConfig(C=_get(values, "classifier.C", float, 1.0),
                                 tol=_get(values, "classifier.tol", float, 1e-4),
                                 max_epochs=_get(values, "classifier.max_epochs", int, 1000),
                                 seed=seed)
    except ValueError as exc:
        raise ConfigError(f"classifier: {exc}") from None

    protocol = values.get("split.protocol", "fraction")
    repeats = _get(values, "split.repeats", int, DEFAULT_REPEATS)
    fractions = _get(values, "split.fractions", _floats, DEFAULT_FRACTIONS)
    try:
        if protocol == "fraction":
            if not fractions:
                raise ValueError("split.fractions is empty")
            for f in fractions:
                SplitSpec.fraction(f, seed, repeats)
            split = SplitSpec.fraction(fractions[0], seed, repeats)
        elif protocol == "fixed":
            split = SplitSpec.fixed(_get(values, "split.train_per_category", int, 0),
                                    _get(values, "split.test_per_category", int, 0), seed, repeats)
            fractions = (split.nominal_fraction,)
        else:
            raise ValueError(f"split.protocol must be 'fraction' or 'fixed', got {protocol!r}")
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    target_height = _get(values, "extract.target_height", int, 0)
    crop = _get(values, "extract.crop", _bool, False)
    sample_cap = _get(values, "encoder.sample_cap", int, DEFAULT_SAMPLE_CAP)
    if sample_cap < 1:
        raise ConfigError("encoder.sample_cap must be >= 1")

    pipelines = []
    for n in names:
        p = f"pipeline.{n}."
        kind = values.get(p + "descriptor")
        if kind is None:
            raise ConfigError(f"{p}descriptor is required")
        default_encoder = "bow" if kind in LOCAL_KINDS else "hist"
        encoder = values.get(p + "encoder", default_encoder)
        if kind in LOCAL_KINDS and encoder not in ("bow", "ifv", "rcc"):
            raise ConfigError(f"{p}encoder: local descriptor {kind!r} needs bow, ifv or rcc")
        if kind not in LOCAL_KINDS and encoder != "hist":
            raise ConfigError(f"{p}encoder: histogram descriptor {kind!r} needs encoder 'hist'")
        centers = _get(values, p + "centers", int, 64)
        if encoder != "hist" and centers < 1:
            raise ConfigError(f"{p}centers must be >= 1")
        try:
            desc = DescriptorConfig(
                kind=kind,
                step=_get(values, p + "step", int, 0),
                scale_count=_get(values, p + "scales", int, 0),
                coverage=_get(values, p + "coverage", float, 0.5),
                lbp_P=_get(values, p + "lbp.P", int, 8),
                lbp_R=_get(values, p + "lbp.R", int, 1),
                lbp_mapping=values.get(p + "lbp.mapping", "u2"),
                prico_offsets=_get(values, p + "prico.offsets", _ints, (2, 4)),
                target_height=target_height, crop=crop)
        except ValueError as exc:
            raise ConfigError(f"pipeline {n}: {exc}") from None
        cell = _get(values, p + "rcc.cell", int, 32)
        radius = _get(values, p + "rcc.radius", float, 16.0)
        if cell < 1 or radius < 0:
            raise ConfigError(f"{p}rcc.cell must be >= 1 and rcc.radius >= 0")
        pipelines.append(PipelineConfig(n, desc, encoder, centers,
                                        values.get(p + "stimulus", ""), cell, radius))

    manifest = Path(values["manifest"])
    cn_table = Path(values["extract.cn_table"]) if values.get("extract.cn_table") else None
    if cn_table is not None and not cn_table.is_file():
        raise ConfigError(f"CN table not found: {cn_table}")
    cfg = ExperimentConfig(manifest=manifest, out=Path(values.get("out", "results")), seed=seed,
                           jobs=jobs, split=split, fractions=tuple(fractions), classifier=classifier,
                           pipelines=pipelines, sample_cap=sample_cap, cn_table=cn_table,
                           rank_fraction=_get(values, "rank.fraction", float, 0.5), raw=dict(values))
    if check_manifest:
        check_manifest_protocol(cfg)
    return cfg


def check_manifest_protocol(cfg: ExperimentConfig) -> None:
    """The manifest must parse and every category must fit the split protocol."""
    if not cfg.manifest.is_file():
        raise ConfigError(f"manifest not found: {cfg.manifest}")
    try:
        manifest = read_manifest(cfg.manifest)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if len(manifest.categories) < 2:
        raise ConfigError("the manifest needs at least two categories")
    sizes = {label: len(group) for label, group in manifest.by_category().items()}
    need = 2 if cfg.split.protocol == "fraction" else (
        cfg.split.train_per_category + cfg.split.test_per_category)
    small = sorted(label for label, n in sizes.items() if n < need)
    if small:
        raise ConfigError(f"categories too small for the split protocol (need {need}): {', '.join(small)}")
