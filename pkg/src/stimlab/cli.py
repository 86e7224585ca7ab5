"""Command line: ``stimlab extract | run | rank | synth``.

Exit codes: 0 success, 1 validation error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .color import read_cn_table
from .config import ConfigError, build_config, load_config_file, parse_config_text
from .encoding import ContractError
from .evaluation import (ProtocolError, evaluate_protocol, fraction_sweep, make_split, rank_stimuli,
                         read_manifest, read_summary_csv, write_confusion_csv, write_runs_csv,
                         write_summary_csv)
from .features import extract
from .imaging import ImageFormatError, load_image, load_mask
from .plot import accuracy_svg
from .storage import (CacheFormatError, cache_key, read_features, save_model, write_bytes_if_changed,
                      write_features)

log = logging.getLogger("stimlab")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
DATA_ERRORS = (FileNotFoundError, ImageFormatError, ProtocolError, CacheFormatError, ContractError)


class FeatureStore:
    """Content-addressed feature caches under ``root``."""

    def __init__(self, root, cn_table_path=None):
        self.root = Path(root)
        self.cn_table = read_cn_table(cn_table_path) if cn_table_path else None
        self.table_id = Path(cn_table_path).read_bytes().hex()[:64] if cn_table_path else "fallback"
        self._memo = {}
        self._lock = threading.Lock()

    def path_for(self, entry, dconf) -> Path:
        spec = dconf.canonical() + f";cn_table={self.table_id}"
        return self.root / dconf.descriptor_id / f"{cache_key(entry.image, entry.mask, spec)}.stimf"

    def ensure(self, entry, dconf) -> bool:
        """Make sure the cache exists; True when a file was written."""
        path = self.path_for(entry, dconf)
        if path.is_file():
            return False
        ds = extract(load_image(entry.image), load_mask(entry.mask), dconf, self.cn_table)
        return write_features(ds, path)

    def get(self, entry, dconf):
        key = (entry.index, dconf)
        with self._lock:
            if key in self._memo:
                return self._memo[key]
        path = self.path_for(entry, dconf)
        if path.is_file():
            ds = read_features(path)
        else:
            ds = extract(load_image(entry.image), load_mask(entry.mask), dconf, self.cn_table)
            write_features(ds, path)
        with self._lock:
            self._memo[key] = ds
        return ds


def _unique_descriptors(cfg):
    seen = []
    for p in cfg.pipelines:
        if p.descriptor not in seen:
            seen.append(p.descriptor)
    return seen


def cmd_extract(cfg) -> dict:
    manifest = read_manifest(cfg.manifest)
    store = FeatureStore(cfg.out / "cache", cfg.cn_table)
    written, skipped, failures = 0, 0, []

    def one(job):
        entry, dconf = job
        try:
            return store.ensure(entry, dconf), None
        except (OSError, ValueError) as exc:
            return None, (entry, dconf, exc)

    jobs = [(e, d) for d in _unique_descriptors(cfg) for e in manifest.entries]
    if cfg.jobs > 1:
        with ThreadPoolExecutor(cfg.jobs) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(j) for j in jobs]
    for did_write, failure in results:
        if failure is not None:
            failures.append(failure)
        elif did_write:
            written += 1
        else:
            skipped += 1
    print(f"extract: {written} written, {skipped} up to date, {len(failures)} failed")
    for entry, dconf, exc in failures:
        print(f"  FAILED {entry.image} [{dconf.descriptor_id}]: {exc}")
    return {"written": written, "skipped": skipped, "failures": failures}


def cmd_run(cfg) -> list:
    manifest = read_manifest(cfg.manifest)
    store = FeatureStore(cfg.out / "cache", cfg.cn_table)
    cfg.out.mkdir(parents=True, exist_ok=True)
    reports = []
    for pconf in cfg.pipelines:
        pipeline = pconf.build(cfg.classifier, cfg.sample_cap)
        dconf = pconf.descriptor

        def features(entry, _d=dconf):
            return store.get(entry, _d)

        log.info("running %s", pconf.name)
        if cfg.split.protocol == "fraction":
            report = fraction_sweep(manifest, pipeline, features, cfg.fractions, cfg.split.repeats,
                                    cfg.seed, cfg.jobs)
        else:
            report = evaluate_protocol(manifest, pipeline, features, cfg.split)
        # the stimulus survives the CSV round trip as a "stimulus:" prefix
        if pconf.stimulus and pconf.stimulus != pconf.name:
            report.descriptor = f"{pconf.stimulus}:{pconf.name}"
        reports.append(report)

        ref = report.reference_run(cfg.rank_fraction)
        write_confusion_csv(ref.confusion, cfg.out / f"confusion_{pconf.name}.csv")
        _save_reference_models(cfg, manifest, pipeline, features, ref)

    write_runs_csv(reports, cfg.out / "runs.csv")
    write_summary_csv(reports, cfg.out / "summary.csv")
    write_bytes_if_changed(cfg.out / "accuracy.svg", accuracy_svg(reports).encode())
    for rep in reports:
        for f, mean, std in rep.summary():
            print(f"{rep.descriptor}\tfraction={f:g}\tmean={mean:.4f}\tstd={std:.4f}")
    return reports


def _save_reference_models(cfg, manifest, pipeline, features, ref):
    """Refit the reference run and store its quantiser and classifier."""
    from .evaluation import SplitSpec

    if cfg.split.protocol == "fraction":
        spec = SplitSpec.fraction(ref.fraction, seed=cfg.seed)
    else:
        spec = cfg.split
    train, _ = make_split(manifest, spec, ref.run)
    fitted = pipeline.fit(train, [e.label for e in train], features, ref.seed)
    models = cfg.out / "models"
    if fitted.quantizer is not None:
        save_model(fitted.quantizer, models / f"{pipeline.name}_quantizer.stimm")
    save_model(fitted.svm, models / f"{pipeline.name}_svm.stimm")


def cmd_rank(report_paths, reference_fraction: float = 0.5, out: Path | None = None) -> list:
    reports = []
    for path in report_paths:
        if not Path(path).is_file():
            raise FileNotFoundError(f"report not found: {path}")
        reports.extend(read_summary_csv(path))
    if not reports:
        raise ContractError("no reports to rank")
    ranking = rank_stimuli(reports, reference_fraction)
    rows = [(i + 1, r.stimulus, r.descriptor, repr(r.mean_accuracy), int(r.tied))
            for i, r in enumerate(ranking)]
    print(f"rank\tstimulus\tdescriptor\tmean_accuracy@{reference_fraction:g}\ttied")
    for row in rows:
        print("\t".join(str(v) for v in row))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "ranking.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("rank", "stimulus", "descriptor", "mean_accuracy", "tied"))
            w.writerows(rows)
    return ranking


def _parser() -> argparse.ArgumentParser:
    def add_globals(p, suppress):
        d = argparse.SUPPRESS if suppress else None
        p.add_argument("--config", metavar="PATH", default=d, help="key = value configuration file")
        p.add_argument("--seed", type=int, default=d)
        p.add_argument("--jobs", type=int, default=d)
        p.add_argument("--out", metavar="DIR", default=d)
        p.add_argument("--set", metavar="KEY=VALUE", action="append", default=d,
                       help="override a configuration key (repeatable)")

    parser = argparse.ArgumentParser(prog="stimlab", description=__doc__.splitlines()[0])
    add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("extract", "extract and cache descriptors"),
                       ("run", "run the split protocol and write reports")):
        add_globals(sub.add_parser(name, help=text), suppress=True)
    rank = sub.add_parser("rank", help="rank stimuli from summary CSVs")
    add_globals(rank, suppress=True)
    rank.add_argument("reports", nargs="*", help="summary CSV files (default: OUT/summary.csv)")
    rank.add_argument("--fraction", type=float, default=None, help="reference training fraction")
    synth = sub.add_parser("synth", help="write a synthetic stimulus-isolation dataset")
    add_globals(synth, suppress=True)
    synth.add_argument("directory")
    synth.add_argument("--variant", choices=("shape", "palette", "texture"), required=True)
    synth.add_argument("--per-season", type=int, default=40)
    synth.add_argument("--size", type=int, default=96)
    return parser


def _values(args) -> dict:
    values = load_config_file(args.config) if args.config else {}
    for item in args.set or []:
        values.update(parse_config_text(item, "--set"))
    if args.seed is not None:
        values["seed"] = str(args.seed)
    if args.jobs is not None:
        values["jobs"] = str(args.jobs)
    if args.out is not None:
        values["out"] = args.out
    return values


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    args = _parser().parse_args(argv)
    try:
        if args.command == "synth":
            from .synthetic import write_dataset

            if args.per_season < 2 or args.size < 16:
                raise ConfigError("--per-season must be >= 2 and --size >= 16")
            path = write_dataset(args.directory, args.variant, seed=args.seed or 0,
                                 per_season=args.per_season, size=args.size)
            print(path)
            return EXIT_OK
        values = _values(args)
        if args.command == "rank":
            fraction = args.fraction
            if fraction is None:
                fraction = float(values.get("rank.fraction", 0.5))
            out = Path(values["out"]) if "out" in values else None
            paths = args.reports or ([out / "summary.csv"] if out else [])
            if not paths:
                raise ConfigError("rank needs report paths or --out")
            cmd_rank(paths, fraction, out)
            return EXIT_OK
        cfg = build_config(values)
        if args.command == "extract":
            return EXIT_DATA if cmd_extract(cfg)["failures"] else EXIT_OK
        cmd_run(cfg)
        return EXIT_OK
    except ConfigError as exc:
        print(f"stimlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DATA_ERRORS as exc:
        print(f"stimlab: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - mapped to the internal-error exit code
        log.exception("internal error")
        print(f"stimlab: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
