"""Manifests, split protocols, accuracy bookkeeping and stimulus ranking."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from .classifier import TrainConfig, train_ova
from .descriptors import DescriptorSet
from .encoding import (ContractError, bow_encode, gmm_train, histogram_encode, ifv_encode,
                       kmeans_train, rcc_encode)

DEFAULT_FRACTIONS = tuple(round(0.1 * k, 1) for k in range(1, 10))
DEFAULT_REPEATS = 30
DEFAULT_SAMPLE_CAP = 200_000
FRACTION_TOL = 1e-9


class ProtocolError(ValueError):
    """A dataset cannot satisfy the requested split protocol."""


# --- manifests -------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    image: str
    mask: str
    label: str
    metadata: dict = field(default_factory=dict, compare=False, hash=False)
    index: int = 0


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple
    name: str = ""

    def __post_init__(self):
        entries = tuple(
            ManifestEntry(e.image, e.mask, e.label, dict(e.metadata), i)
            for i, e in enumerate(self.entries))
        for e in entries:
            if not e.image or not e.mask or not e.label:
                raise ValueError(f"manifest entry {e.index} has an empty field")
        object.__setattr__(self, "entries", entries)

    def __len__(self):
        return len(self.entries)

    @property
    def categories(self) -> list:
        return sorted({e.label for e in self.entries})

    def by_category(self) -> dict:
        groups = {}
        for e in self.entries:
            groups.setdefault(e.label, []).append(e)
        return {k: groups[k] for k in sorted(groups)}


def read_manifest(path) -> DatasetManifest:
    """Tab-separated: image, mask, label, then optional key=value fields.

    Relative paths are resolved against the manifest's directory.
    """
    path = Path(path)
    base = path.parent
    entries = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) < 3:
            raise ValueError(f"{path}:{lineno}: expected at least 3 tab-separated fields")
        meta = {}
        for item in parts[3:]:
            key, sep, value = item.partition("=")
            if not sep:
                raise ValueError(f"{path}:{lineno}: metadata field {item!r} is not key=value")
            meta[key] = value
        image, mask = (str(p if Path(p).is_absolute() else base / p) for p in parts[:2])
        entries.append(ManifestEntry(image, mask, parts[2], meta))
    return DatasetManifest(tuple(entries), name=path.stem)


def write_manifest(manifest: DatasetManifest, path, relative_to=None) -> None:
    rel = Path(relative_to) if relative_to else None
    with open(path, "w") as fh:
        for e in manifest.entries:
            paths = [e.image, e.mask]
            if rel is not None:
                paths = [str(Path(p).relative_to(rel)) for p in paths]
            extra = [f"{k}={v}" for k, v in e.metadata.items()]
            fh.write("\t".join(paths + [e.label] + extra) + "\n")


# --- splits ----------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    protocol: str = "fraction"  # "fraction" or "fixed_counts"
    train_fraction: float = 0.5
    train_per_category: int = 0
    test_per_category: int = 0
    seed: int = 0
    repeats: int = 1

    def __post_init__(self):
        if self.protocol == "fraction":
            if not 0 < self.train_fraction < 1:
                raise ValueError("train_fraction must lie in (0, 1)")
        elif self.protocol == "fixed_counts":
            if self.train_per_category < 1 or self.test_per_category < 1:
                raise ValueError("fixed-count splits need >= 1 train and test image per category")
        else:
            raise ValueError(f"unknown split protocol {self.protocol!r}")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")

    @classmethod
    def fixed(cls, train: int, test: int, seed: int = 0, repeats: int = 1) -> "SplitSpec":
        return cls("fixed_counts", train_per_category=train, test_per_category=test,
                   seed=seed, repeats=repeats)

    @classmethod
    def fraction(cls, train_fraction: float, seed: int = 0, repeats: int = 1) -> "SplitSpec":
        return cls("fraction", train_fraction=train_fraction, seed=seed, repeats=repeats)

    @property
    def nominal_fraction(self) -> float:
        if self.protocol == "fraction":
            return self.train_fraction
        return self.train_per_category / (self.train_per_category + self.test_per_category)


# Train/test protocols of the four experiments.
EXPERIMENTS = {
    "exp1": {"split": SplitSpec.fixed(2, 2), "num_centers": (128, 256, 512, 1024)},
    "exp2": {"split": SplitSpec.fixed(2, 1), "num_centers": (64, 128, 256)},
    "exp3": {"split": SplitSpec.fixed(20, 20), "num_centers": ()},
    "exp4": {"fractions": DEFAULT_FRACTIONS, "repeats": DEFAULT_REPEATS},
}


def fraction_train_count(fraction: float, size: int) -> int:
    """round(fraction * size), half up, clamped to [1, size - 1]."""
    n = math.floor(fraction * size + 0.5 + FRACTION_TOL)
    return min(max(n, 1), size - 1)


def make_split(manifest: DatasetManifest, spec: SplitSpec, run_index: int = 0):
    """Category-stratified (train, test) entry lists for one run."""
    rng = np.random.default_rng([spec.seed, run_index])
    train, test = [], []
    for label, group in manifest.by_category().items():
        n = len(group)
        if spec.protocol == "fixed_counts":
            need = spec.train_per_category + spec.test_per_category
            if n < need:
                raise ProtocolError(f"category {label!r} has {n} entries, protocol needs {need}")
            n_train, n_test = spec.train_per_category, spec.test_per_category
        else:
            if n < 2:
                raise ProtocolError(f"category {label!r} has {n} entries, fractional split needs 2")
            n_train = fraction_train_count(spec.train_fraction, n)
            n_test = n - n_train
        order = rng.permutation(n)
        train.extend(group[i] for i in order[:n_train])
        test.extend(group[i] for i in order[n_train:n_train + n_test])
    return train, test


# --- metrics ---------------------------------------------------------------

def accuracy(predictions: Sequence, truth: Sequence) -> float:
    if len(predictions) != len(truth):
        raise ContractError("predictions and truth differ in length")
    if len(truth) == 0:
        raise ContractError("accuracy of an empty test set is undefined")
    tp = sum(p == t for p, t in zip(predictions, truth))
    return tp / len(truth)


@dataclass(frozen=True)
class ConfusionMatrix:
    classes: tuple
    counts: np.ndarray  # rows: truth, columns: prediction

    @property
    def row_normalized(self) -> np.ndarray:
        rows = self.counts.sum(axis=1, keepdims=True)
        return np.divide(self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def correct(self) -> int:
        return int(np.trace(self.counts))

    @property
    def accuracy(self) -> float:
        return self.correct / self.total


def confusion(predictions: Sequence, truth: Sequence, classes: Sequence) -> ConfusionMatrix:
    if len(predictions) != len(truth):
        raise ContractError("predictions and truth differ in length")
    classes = tuple(classes)
    pos = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for p, t in zip(predictions, truth):
        if p not in pos or t not in pos:
            raise ContractError(f"label {p if p not in pos else t!r} not among the classes")
        counts[pos[t], pos[p]] += 1
    return ConfusionMatrix(classes, counts)


# --- pipelines -------------------------------------------------------------

FeatureSource = Callable[[ManifestEntry], DescriptorSet]


class Pipeline(Protocol):
    name: str

    def fit(self, entries: list, labels: list, features: FeatureSource, seed: int) -> "Fitted": ...


class Fitted(Protocol):
    def predict(self, entries: list, features: FeatureSource) -> list: ...


@dataclass
class EncoderPipeline:
    """Encoder + one-vs-all SVM over per-image descriptor sets.

    ``encoder`` is one of bow, ifv, rcc (trained on a capped, seeded
    subsample of training descriptors) or hist (one histogram per image).
    """

    name: str
    encoder: str = "bow"
    num_centers: int = 64
    classifier: TrainConfig = TrainConfig()
    sample_cap: int = DEFAULT_SAMPLE_CAP
    rcc_cell: int = 32
    rcc_radius: float = 16
    stimulus: str = ""

    def __post_init__(self):
        if self.encoder not in ("bow", "ifv", "rcc", "hist"):
            raise ValueError(f"unknown encoder {self.encoder!r}")
        if self.encoder != "hist" and self.num_centers < 1:
            raise ValueError("num_centers must be >= 1")
        if self.sample_cap < 1:
            raise ValueError("sample_cap must be >= 1")

    def _quantizer(self, sets: list, seed: int):
        if self.encoder == "hist":
            return None
        X = np.concatenate([s.vectors for s in sets]).astype(np.float64)
        rng = np.random.default_rng(seed)
        if len(X) > self.sample_cap:
            X = X[np.sort(rng.choice(len(X), self.sample_cap, replace=False))]
        if len(X) < self.num_centers:
            raise ProtocolError(f"{self.name}: {len(X)} training descriptors for "
                                f"{self.num_centers} centers")
        if self.encoder == "ifv":
            return gmm_train(X, self.num_centers, seed=seed)
        return kmeans_train(X, self.num_centers, seed=seed)

    def encode(self, sets: list, model) -> np.ndarray:
        if self.encoder == "hist":
            out = []
            for s in sets:
                if len(s) != 1:
                    raise ContractError("histogram encoder expects one vector per image")
                out.append(histogram_encode(s.vectors[0].astype(np.float64)).values)
            return np.stack(out)
        if self.encoder == "bow":
            return np.stack([bow_encode(s, model).values for s in sets])
        if self.encoder == "ifv":
            return np.stack([ifv_encode(s, model).values for s in sets])
        return np.stack([rcc_encode(s, model, self.rcc_cell, self.rcc_radius).values for s in sets])

    def fit(self, entries, labels, features, seed):
        sets = [features(e) for e in entries]
        model = self._quantizer(sets, seed)
        svm = train_ova(self.encode(sets, model), labels, self.classifier)
        return _FittedEncoder(self, model, svm)


@dataclass
class _FittedEncoder:
    pipeline: EncoderPipeline
    quantizer: object
    svm: object

    def predict(self, entries, features):
        sets = [features(e) for e in entries]
        return self.svm.predict_batch(self.pipeline.encode(sets, self.quantizer))


# --- reports ---------------------------------------------------------------

@dataclass(frozen=True)
class RunRecord:
    fraction: float
    run: int
    seed: int
    tp: int
    tt: int
    confusion: ConfusionMatrix = field(compare=False, repr=False, default=None)

    @property
    def accuracy(self) -> float:
        return self.tp / self.tt


@dataclass
class EvaluationReport:
    descriptor: str
    runs: list
    stimulus: str = ""
    summary_rows: list = None  # set when loaded from a summary CSV

    def fractions(self) -> list:
        if self.summary_rows is not None:
            return [r[0] for r in self.summary_rows]
        return sorted({r.fraction for r in self.runs})

    def accuracies(self, fraction: float) -> list:
        return [r.accuracy for r in self.runs if abs(r.fraction - fraction) <= FRACTION_TOL]

    def summary(self) -> list:
        """(fraction, mean, std) rows; std is the sample standard deviation."""
        if self.summary_rows is not None:
            return list(self.summary_rows)
        rows = []
        for f in self.fractions():
            acc = np.array(self.accuracies(f))
            std = float(acc.std(ddof=1)) if len(acc) > 1 else 0.0
            rows.append((f, float(acc.mean()), std))
        return rows

    def mean_at(self, fraction: float) -> float:
        for f, mean, _ in self.summary():
            if abs(f - fraction) <= FRACTION_TOL:
                return mean
        raise ContractError(f"report {self.descriptor!r} has no results at fraction {fraction}")

    def reference_run(self, fraction: float = 0.5) -> RunRecord:
        """Run 0 at ``fraction`` (or at the nearest fraction present)."""
        fs = self.fractions()
        target = min(fs, key=lambda f: (abs(f - fraction), f))
        return min((r for r in self.runs if r.fraction == target), key=lambda r: r.run)


def _cell_seed(seed: int, fraction_index: int, run: int) -> int:
    return int(np.random.SeedSequence([seed, fraction_index, run]).generate_state(1)[0])


class _Tracked:
    """Feature source wrapper that records which entries were read."""

    def __init__(self, source):
        self.source = source
        self.seen = set()

    def __call__(self, entry):
        self.seen.add(entry.index)
        return self.source(entry)


def run_cell(manifest, pipeline, features, spec: SplitSpec, run: int, seed: int,
             fraction_index: int = 0) -> RunRecord:
    train, test = make_split(manifest, spec, run)
    cell_seed = _cell_seed(seed, fraction_index, run)
    tracked = _Tracked(features)
    fitted = pipeline.fit(train, [e.label for e in train], tracked, cell_seed)
    train_ids = {e.index for e in train}
    # no test entry may reach a trainer
    assert tracked.seen <= train_ids, "training consumed features outside the training split"
    predictions = fitted.predict(test, features)
    truth = [e.label for e in test]
    cm = confusion(predictions, truth, manifest.categories)
    tp = sum(p == t for p, t in zip(predictions, truth))
    return RunRecord(spec.nominal_fraction, run, cell_seed, tp, len(truth), cm)


def fraction_sweep(manifest: DatasetManifest, pipeline, features: FeatureSource,
                   fractions=DEFAULT_FRACTIONS, repeats: int = DEFAULT_REPEATS,
                   seed: int = 0, jobs: int = 1) -> EvaluationReport:
    """Stratified random splits at each training fraction, ``repeats`` times."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    specs = [SplitSpec.fraction(f, seed=seed) for f in fractions]

    def cell(args):
        fi, run = args
        try:
            return run_cell(manifest, pipeline, features, specs[fi], run, seed, fi)
        except Exception as exc:
            msg = f"{getattr(pipeline, 'name', pipeline)}: fraction {fractions[fi]}, run {run}: {exc}"
            try:
                wrapped = type(exc)(msg)
            except Exception:  # noqa: BLE001 - exception types with custom constructors
                wrapped = RuntimeError(msg)
            raise wrapped from exc

    cells = [(fi, run) for fi in range(len(fractions)) for run in range(repeats)]
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            runs = list(pool.map(cell, cells))
    else:
        runs = [cell(c) for c in cells]
    return EvaluationReport(getattr(pipeline, "name", "pipeline"), runs,
                            stimulus=getattr(pipeline, "stimulus", "") or "")


def evaluate_protocol(manifest: DatasetManifest, pipeline, features: FeatureSource,
                      spec: SplitSpec) -> EvaluationReport:
    """Repeated runs of one split protocol (e.g. the fixed-count experiments)."""
    runs = [run_cell(manifest, pipeline, features, spec, run, spec.seed)
            for run in range(spec.repeats)]
    return EvaluationReport(getattr(pipeline, "name", "pipeline"), runs,
                            stimulus=getattr(pipeline, "stimulus", "") or "")


# --- ranking ---------------------------------------------------------------

@dataclass(frozen=True)
class RankEntry:
    stimulus: str
    mean_accuracy: float
    tied: bool = False
    descriptor: str = ""


def rank_stimuli(reports: Sequence[EvaluationReport], reference_fraction: float = 0.5) -> list:
    """Stimuli by descending mean accuracy at ``reference_fraction``.

    A stimulus backed by several reports is represented by its best one.
    Equal means are ordered alphabetically and flagged as tied.
    """
    best = {}
    for rep in reports:
        mean = rep.mean_at(reference_fraction)
        stim = rep.stimulus or rep.descriptor
        if stim not in best or mean > best[stim][0]:
            best[stim] = (mean, rep.descriptor)
    ordered = sorted(best.items(), key=lambda kv: (-kv[1][0], kv[0]))
    means = [m for _, (m, _) in ordered]
    return [RankEntry(stim, mean, means.count(mean) > 1, desc) for stim, (mean, desc) in ordered]


# --- CSV emission ----------------------------------------------------------

RUN_COLUMNS = ("descriptor", "fraction", "run", "seed", "TP", "TT", "accuracy")
SUMMARY_COLUMNS = ("descriptor", "fraction", "mean", "std")


def _fmt(x: float) -> str:
    return repr(float(x))


def write_runs_csv(reports: Sequence[EvaluationReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RUN_COLUMNS)
        for rep in reports:
            for r in rep.runs:
                w.writerow([rep.descriptor, _fmt(r.fraction), r.run, r.seed, r.tp, r.tt, _fmt(r.accuracy)])


def write_summary_csv(reports: Sequence[EvaluationReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for rep in reports:
            for f, mean, std in rep.summary():
                w.writerow([rep.descriptor, _fmt(f), _fmt(mean), _fmt(std)])


def write_confusion_csv(cm: ConfusionMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([""] + list(cm.classes))
        for label, row in zip(cm.classes, cm.counts):
            w.writerow([label] + [int(v) for v in row])


def read_summary_csv(path) -> list:
    """Reports (one per descriptor) carrying only summary rows."""
    grouped = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(SUMMARY_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            grouped.setdefault(row["descriptor"], []).append(
                (float(row["fraction"]), float(row["mean"]), float(row["std"])))
    reports = []
    for name, rows in grouped.items():
        stim = name.split(":", 1)[0] if ":" in name else name
        reports.append(EvaluationReport(name, [], stimulus=stim, summary_rows=rows))
    return reports


def read_runs_csv(path) -> list:
    with open(path, newline="") as fh:
        return [dict(row) for row in csv.DictReader(fh)]
