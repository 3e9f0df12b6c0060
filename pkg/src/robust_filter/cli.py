"""Command-line entry point: ``robust-filter {detect,inject,eval,baseline}``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure,
4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import cooks_distance, ratio_detector
from .dataset import DatasetError, load_csv
from .detector import detect, export, write_summary
from .em import EMError, EMSettings, write_params_json, write_scores_csv
from .inject import InjectionSpec, inject, pick_contextual_target, write_injected
from .metrics import auc_pr, confusion, pr_curve, precision_at_k, rank
from .templates import (
    TemplateError,
    compile_template,
    load_templates,
    parse_feature,
    parse_templates,
)
from .dataset import _write_table

log = logging.getLogger("robust_filter")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class CLIError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(path: Path, command: str, config, inputs, seed: int, outputs, extra=None) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "config": str(config) if config else None,
        "input_sha256": {str(p): _sha256(p) for p in inputs},
        "seed": seed,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "outputs": [str(o) for o in outputs],
    }
    if extra:
        manifest.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _load(path, datetime_columns=()):
    try:
        return load_csv(path, datetime_columns=datetime_columns)
    except DatasetError as exc:
        code = EXIT_IO if isinstance(exc.__cause__, OSError) else EXIT_CONFIG
        raise CLIError(str(exc), code) from exc


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise CLIError(f"cannot read {path}: {exc}", EXIT_IO) from exc
    except json.JSONDecodeError as exc:
        raise CLIError(f"{path}: invalid JSON: {exc}", EXIT_CONFIG) from exc


def _mkdirs(*dirs: Path) -> None:
    try:
        for d in dirs:
            d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CLIError(f"cannot create output directory: {exc}", EXIT_IO) from exc


def cmd_detect(args) -> int:
    data = _load(args.data, args.datetime_columns)
    try:
        templates = load_templates(args.templates)
    except OSError as exc:
        raise CLIError(f"cannot read {args.templates}: {exc}", EXIT_IO) from exc
    except TemplateError as exc:
        raise CLIError(str(exc), EXIT_CONFIG) from exc
    settings = EMSettings(
        init_p=args.init_p, init_sigma2=args.init_sigma2, init_b=args.init_b,
        max_iterations=args.max_iter, tolerance=args.tol,
    )
    try:
        report = detect(data, templates, settings)
    except TemplateError as exc:
        raise CLIError(str(exc), EXIT_CONFIG) from exc
    except (EMError, np.linalg.LinAlgError) as exc:
        raise CLIError(f"fit failed: {exc}", EXIT_NUMERIC) from exc

    out = Path(args.out)
    dirs = {k: out / k for k in ("params", "scores", "report")}
    _mkdirs(*dirs.values())
    outputs = []
    for name in report.names:
        f = report.per_filter[name]
        p, s = dirs["params"] / f"{name}.json", dirs["scores"] / f"{name}.csv"
        write_params_json(f, p)
        write_scores_csv(f.row_ids, f.t, f.flags, s)
        outputs += [p, s]
    rep, summ = dirs["report"] / "report.csv", dirs["report"] / "summary.json"
    export(report, rep)
    write_summary(report, summ)
    outputs += [rep, summ]
    _write_manifest(
        out / "manifest.json", "detect", args.templates, [args.data], args.seed, outputs,
        {"settings": {k: v for k, v in vars(settings).items()}},
    )
    log.info("flagged %d of %d records", int(report.combined_flags.sum()), report.n)
    return EXIT_OK


def cmd_inject(args) -> int:
    data = _load(args.data)
    target = args.target
    try:
        if target is None:
            if args.mode != "contextual" or args.behavior is None:
                raise CLIError("--target is required (or --mode contextual with --behavior)", EXIT_CONFIG)
            target = pick_contextual_target(data, args.behavior)
            log.info("perturbing contextual attribute %r", target)
        if target not in data.schema:
            raise CLIError(f"unknown target attribute {target!r}", EXIT_CONFIG)
        spec = InjectionSpec(
            q=args.q, alpha=args.alpha, target=target, mode=args.mode,
            standardize_range=None if args.no_standardize else tuple(args.range), seed=args.seed,
        )
        result = inject(data, spec)
    except CLIError:
        raise
    except (ValueError, KeyError) as exc:
        raise CLIError(str(exc), EXIT_CONFIG) from exc
    out = Path(args.out)
    _mkdirs(out)
    paths = write_injected(result, out)
    _write_manifest(out / "manifest.json", "inject", None, [args.data], args.seed, paths.values())
    return EXIT_OK


def _read_scores(path: Path) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise CLIError(f"cannot read {path}: {exc}", EXIT_IO) from exc
    with fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        score_col = next((c for c in ("score", "combined_score") if c in fields), None)
        flag_col = next((c for c in ("flag", "combined_flag") if c in fields), None)
        if "id" not in fields or score_col is None:
            raise CLIError(f"{path}: needs columns 'id' and 'score'", EXIT_CONFIG)
        ids, scores, flags = [], [], []
        for row in reader:
            ids.append(int(row["id"]))
            scores.append(float(row[score_col]))
            if flag_col:
                flags.append(int(float(row[flag_col])))
    return np.array(ids, dtype=np.int64), np.array(scores), (np.array(flags) if flag_col else None)


def _read_truth(path: Path) -> dict[int, int]:
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise CLIError(f"cannot read {path}: {exc}", EXIT_IO) from exc
    with fh:
        reader = csv.DictReader(fh)
        if not {"id", "truth"} <= set(reader.fieldnames or []):
            raise CLIError(f"{path}: needs columns 'id' and 'truth'", EXIT_CONFIG)
        return {int(r["id"]): int(float(r["truth"])) for r in reader}


def _nan_to_none(v: float):
    return None if isinstance(v, float) and math.isnan(v) else v


def evaluate_scores(ids, scores, flags, truth_map: dict[int, int], kappas) -> tuple[dict, tuple]:
    """Metrics block for one detector plus its PR curve arrays."""
    if set(ids.tolist()) != set(truth_map) or len(ids) != len(truth_map):
        raise CLIError("score ids do not match truth ids", EXIT_CONFIG)
    truth = np.array([truth_map[i] for i in ids.tolist()], dtype=np.int8)
    ranked = rank(scores, truth, ids)
    try:
        auc = auc_pr(ranked)
        curve = pr_curve(ranked)
    except ValueError as exc:
        raise CLIError(str(exc), EXIT_NUMERIC) from exc
    block = {"n": int(truth.shape[0]), "positives": int(truth.sum()), "auc_pr": auc}
    if flags is not None:
        cm = confusion(flags, truth)
        block.update({k: _nan_to_none(v) for k, v in cm.rates().items()})
        block["confusion"] = {"tp": cm.tp, "fp": cm.fp, "fn": cm.fn, "tn": cm.tn}
    block["precision_at"] = {str(k): precision_at_k(ranked, k) for k in kappas if k <= ranked.n}
    return block, curve


def cmd_eval(args) -> int:
    truth_map = _read_truth(Path(args.truth))
    out = Path(args.out)
    _mkdirs(out.parent)
    results, outputs = {}, [out]
    for sp in map(Path, args.scores):
        ids, scores, flags = _read_scores(sp)
        try:
            block, (kappa, prec, rec) = evaluate_scores(ids, scores, flags, truth_map, args.kappa)
        except CLIError as exc:
            raise CLIError(f"{sp}: {exc}", exc.code) from exc
        name = sp.stem if sp.stem not in results else f"{sp.parent.name}_{sp.stem}"
        results[name] = block
        curve_path = out.parent / f"{out.stem}_pr_{name}.csv"
        _write_table(curve_path, ("kappa", "precision", "recall"),
                     zip(kappa.tolist(), prec.tolist(), rec.tolist()))
        outputs.append(curve_path)
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(results, fh, indent=2)
        fh.write("\n")
    _write_manifest(out.with_suffix(".manifest.json"), "eval", None,
                    [args.truth, *args.scores], args.seed, outputs)
    return EXIT_OK


def cmd_baseline(args) -> int:
    data = _load(args.data, args.datetime_columns)
    config = _read_json(args.config)
    out = Path(args.out)
    scores_dir = out / "scores"
    try:
        if args.method == "cooks":
            # same file format as detect, but Cook's distance needs exactly one fit
            templates = parse_templates(config)
            if len(templates) != 1:
                raise TemplateError(f"cooks baseline takes one template, got {len(templates)}")
            design, _ = compile_template(templates[0], data)
        else:
            if not isinstance(config, dict) or set(config) != {"numerator", "denominator"}:
                raise TemplateError("ratio config needs exactly 'numerator' and 'denominator'")
            num_f, den_f = parse_feature(config["numerator"]), parse_feature(config["denominator"])
            num, ok_n = num_f.apply(data)
            den, ok_d = den_f.apply(data)
    except (TemplateError, KeyError) as exc:
        raise CLIError(str(exc), EXIT_CONFIG) from exc

    try:
        if args.method == "cooks":
            res = cooks_distance(design)
            ids, scores, flags = design.row_ids, res.d, res.flags
        else:
            keep = np.flatnonzero(ok_n & ok_d)
            res = ratio_detector(num[keep, 0], den[keep, 0])
            # no threshold is defined for the ratio test; it only ranks
            ids, scores, flags = keep, res.scores, np.zeros(keep.shape[0], dtype=np.int8)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise CLIError(f"{args.method} failed: {exc}", EXIT_NUMERIC) from exc

    _mkdirs(scores_dir)
    path = scores_dir / f"{args.method}.csv"
    write_scores_csv(ids, scores, flags, path)
    _write_manifest(out / "manifest.json", f"baseline:{args.method}", args.config,
                    [args.data], args.seed, [path])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="robust-filter", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0, help="RNG seed, recorded in the manifest")

    d = sub.add_parser("detect", help="fit one filter per template and flag outliers")
    d.add_argument("--data", required=True, help="input CSV with a header row")
    d.add_argument("--templates", required=True, help="JSON file of correlation templates")
    d.add_argument("--out", required=True, help="output directory")
    d.add_argument("--max-iter", type=int, default=EMSettings.max_iterations)
    d.add_argument("--tol", type=float, default=EMSettings.tolerance)
    d.add_argument("--init-p", type=float, default=EMSettings.init_p)
    d.add_argument("--init-sigma2", type=float, default=EMSettings.init_sigma2)
    d.add_argument("--init-b", type=float, default=EMSettings.init_b)
    d.add_argument("--datetime-columns", nargs="*", default=[],
                   help="ISO timestamp columns to read as epoch seconds")
    common(d)
    d.set_defaults(func=cmd_detect)

    i = sub.add_parser("inject", help="append labeled synthetic outliers")
    i.add_argument("--data", required=True, help="input CSV")
    i.add_argument("--q", type=float, default=0.05, help="fraction of records to copy and perturb")
    i.add_argument("--alpha", type=float, default=50.0, help="shifts are drawn from U(0, alpha)")
    i.add_argument("--mode", choices=("behavioral", "contextual"), default="behavioral")
    i.add_argument("--target", help="attribute to shift")
    i.add_argument("--behavior", help="with --mode contextual and no --target: pick the "
                                      "attribute most correlated with this one")
    i.add_argument("--range", type=float, nargs=2, default=(18.0, 30.0), metavar=("LO", "HI"),
                   help="target is rescaled to [LO, HI] before shifting")
    i.add_argument("--no-standardize", action="store_true",
                   help="shift the raw target instead of rescaling it")
    i.add_argument("--out", required=True, help="output directory")
    common(i)
    i.set_defaults(func=cmd_inject)

    e = sub.add_parser("eval", help="score detectors against truth labels")
    e.add_argument("--scores", nargs="+", required=True, help="scores CSVs or detect report CSVs")
    e.add_argument("--truth", required=True, help="truth CSV from inject")
    e.add_argument("--out", required=True, help="metrics JSON path")
    e.add_argument("--kappa", type=int, nargs="*", default=[10, 50, 100, 500, 1000],
                   help="ranks at which to report precision")
    common(e)
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("baseline", help="run the Cook's distance or ratio baseline")
    b.add_argument("--data", required=True, help="input CSV")
    b.add_argument("--method", choices=("cooks", "ratio"), required=True)
    b.add_argument("--config", required=True,
                   help="template JSON (cooks) or numerator/denominator JSON (ratio)")
    b.add_argument("--out", required=True, help="output directory")
    b.add_argument("--datetime-columns", nargs="*", default=[])
    common(b)
    b.set_defaults(func=cmd_baseline)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
