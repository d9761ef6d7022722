"""Command-line pipeline: synth -> preprocess -> explore -> train -> analyze -> evaluate / outlier.

Exit codes: 0 success, 2 usage error, 3 data or validation error,
4 numerical failure. On failure every file written by the command is removed.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__, synth
from .errors import NumericalError, SpecNmfError
from .evaluate import (
    DEFAULT_PRESENCE_THRESHOLD,
    confusion,
    metrics_report,
    misclassification_stats,
    resolve_truth,
)
from .io import EnergyCalibration, SpectraSet, format_float, parse_csv_set, parse_spe, read_set, set_to_text
from .model import UNDETERMINED, analyze, fit, load_model, model_to_text
from .outlier import (
    adequate_band,
    boundary_quality,
    leave_one_out,
    logistic_fit_1d,
    permutation_importance,
    stump_fit,
    threshold_sweep,
)
from .preprocess import StandardBinning, balance_classes, mean_spectrum, rebin, similarity_matrix

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
SIMILARITY_WARNING = 0.95


class UsageError(Exception):
    pass


class Outputs:
    """Atomic writes into one directory; ``discard`` removes everything written."""

    def __init__(self, directory):
        self.dir = Path(directory)
        self.written = []

    def write(self, name, text):
        if Path(name).name != name:
            raise UsageError(f"output name {name!r} must be a plain file name")
        self.dir.mkdir(parents=True, exist_ok=True)
        target = self.dir / name
        fd, tmp = tempfile.mkstemp(dir=self.dir, prefix=f".{name}.")
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
        self.written.append(target)
        return target

    def discard(self):
        for path in self.written:
            path.unlink(missing_ok=True)
        self.written = []


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"


def _csv_row(cells) -> str:
    return ",".join(str(c) for c in cells) + "\n"


def _parse_cal(text):
    try:
        parts = [float(p) for p in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"calibration must be a0,a1,a2 numbers, got {text!r}") from None
    if len(parts) not in (2, 3):
        raise argparse.ArgumentTypeError("calibration takes 2 or 3 comma-separated coefficients")
    return EnergyCalibration(*parts)


def _positive_int(minimum):
    def parse(text):
        try:
            value = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
        if value < minimum:
            raise argparse.ArgumentTypeError(f"must be at least {minimum}")
        return value

    return parse


def _fraction(text):
    value = float(text)
    if not 0 <= value <= 1:
        raise argparse.ArgumentTypeError("must lie in [0, 1]")
    return value


def _existing(path):
    if not Path(path).is_file():
        raise UsageError(f"no such input file: {path}")
    return Path(path)


def _load_input(path, source_cal):
    path = _existing(path)
    suffix = path.suffix.lower()
    if suffix == ".spe":
        s = parse_spe(path.read_text(), detector_id=path.stem)
        return SpectraSet([s], s.channel_count, s.calibration)
    if suffix == ".csv":
        return parse_csv_set(path, source_cal or EnergyCalibration())
    return read_set(path)


# --- subcommands -------------------------------------------------------------


def cmd_synth(args, out):
    names = ("train", "test_single", "test_multi", "test_outlier")
    for name, subset in zip(names, synth.make_benchmark_corpus(args.seed)):
        out.write(f"{name}.jsonl", set_to_text(subset))
        print(f"{name}: {len(subset)} spectra")


def cmd_preprocess(args, out):
    target = StandardBinning(args.channels, args.cal)
    spectra, dropped = [], 0.0
    for path in args.input:
        for s in _load_input(path, args.source_cal):
            r, d = rebin(s, target, return_dropped=True)
            spectra.append(r)
            dropped += d
    result = SpectraSet(spectra, target.channel_count, target.calibration)
    if args.max_per_class:
        result = balance_classes(result, args.max_per_class, args.seed)
    out.write(args.name, set_to_text(result))
    counts = {}
    for s in result:
        counts[s.label_string] = counts.get(s.label_string, 0) + 1
    for label in sorted(counts):
        print(f"{label}\t{counts[label]}")
    print(f"counts dropped outside the target range: {dropped:.6g}")


def cmd_explore(args, out):
    data = read_set(_existing(args.input))
    labels = [s for s in data.label_sets() if len(s) == 1]
    labels = [next(iter(s)) for s in labels]
    if not labels:
        raise SpecNmfError("no single-label spectra to explore")
    means = {label: mean_spectrum(data, label) for label in labels}
    text = _csv_row(["channel", "energy_keV", *labels])
    energies = data.calibration.centers(data.channel_count)
    for c in range(data.channel_count):
        text += _csv_row([c, format_float(energies[c]), *(format_float(means[l][c]) for l in labels)])
    out.write("mean_spectra.csv", text)

    groups = []
    for label in labels:
        for det in sorted({s.detector_id for s in data if s.labels == {label}}):
            groups.append((f"{label}@{det}", mean_spectrum(data, label, det)))
    sim = similarity_matrix(groups)
    text = _csv_row(["group", *(g for g, _ in groups)])
    for (g, _), row in zip(groups, sim):
        text += _csv_row([g, *(format_float(v) for v in row)])
    out.write("similarity.csv", text)

    rng = np.random.default_rng(args.seed)
    text = _csv_row(["index", "label", "detector", *(f"c{i}" for i in range(data.channel_count))])
    for label in labels:
        members = [i for i, s in enumerate(data) if s.labels == {label}]
        for i in sorted(rng.choice(members, size=min(args.examples, len(members)), replace=False)):
            s = data[int(i)]
            text += _csv_row([int(i), label, s.detector_id, *(format_float(v) for v in s.counts)])
    out.write("examples.csv", text)
    print(f"{len(labels)} classes, {len(groups)} class/detector groups")


def cmd_train(args, out):
    model = fit(read_set(_existing(args.input)))
    out.write(args.name, model_to_text(model))
    sim = model.loadings_similarity()
    width = max(len(l) for l in model.labels)
    print("loadings cosine similarity")
    print(" " * width + "  " + " ".join(f"{l[:7]:>7}" for l in model.labels))
    for label, row in zip(model.labels, sim):
        print(f"{label:<{width}}  " + " ".join(f"{v:7.3f}" for v in row))
    for i in range(model.k):
        for j in range(i + 1, model.k):
            if sim[i, j] > SIMILARITY_WARNING:
                print(
                    f"warning: {model.labels[i]} and {model.labels[j]} loadings have cosine "
                    f"{sim[i, j]:.3f} > {SIMILARITY_WARNING}; they may be confused",
                    file=sys.stderr,
                )


def _result_record(index, spectrum, model, r, threshold):
    shares = None if r.shares is None else {l: float(v) for l, v in zip(model.labels, r.shares)}
    return {
        "index": index,
        "true_labels": sorted(spectrum.labels),
        "predicted_label": r.predicted_label,
        "shares": shares,
        "present": [] if shares is None else [l for l in model.labels if shares[l] >= threshold],
        "scores": {l: float(v) for l, v in zip(model.labels, r.scores.raw)},
        "residual_norm": r.scores.residual_norm,
        "converged": r.scores.converged,
        "cosine_to_original": r.cosine_to_original,
        "cosine_defined": r.cosine_defined,
        "explained_variance": r.explained_variance,
    }


def cmd_analyze(args, out):
    model = load_model(_existing(args.model))
    data = read_set(_existing(args.input))
    lines, denoised, failed = [], [], 0
    for i, s in enumerate(data):
        r = analyze(model, s)
        failed += not r.scores.converged
        lines.append(json.dumps(_result_record(i, s, model, r, args.presence_threshold), sort_keys=True))
        denoised.append(s.replace(counts=r.denoised))
    out.write(args.name, "\n".join(lines) + ("\n" if lines else ""))
    if args.denoised:
        out.write("denoised.jsonl", set_to_text(data.with_spectra(denoised)))
    if failed:
        raise NumericalError(f"NNLS did not converge for {failed} spectra")
    counts = {}
    for line in lines:
        label = json.loads(line)["predicted_label"]
        counts[label] = counts.get(label, 0) + 1
    for label in sorted(counts):
        print(f"{label}\t{counts[label]}")


class _Result:
    def __init__(self, record, labels):
        self.predicted_label = record["predicted_label"]
        self.shares = None if record["shares"] is None else np.array([record["shares"][l] for l in labels])


def cmd_evaluate(args, out):
    data = read_set(_existing(args.input))
    records = [json.loads(line) for line in _existing(args.predictions).read_text().splitlines() if line.strip()]
    if len(records) != len(data):
        raise SpecNmfError(f"{len(data)} truth spectra but {len(records)} predictions")
    labels = list(records[0]["scores"]) if records else []
    preds = [r["predicted_label"] for r in records]
    truths = [
        resolve_truth(s.labels, p, s.weights, args.presence_threshold) for s, p in zip(data, preds)
    ]
    cm = confusion(truths, preds)
    out.write("confusion.csv", cm.to_csv())
    out.write("confusion_rates.csv", cm.to_csv(normalized=True))
    report = metrics_report(cm)
    out.write("metrics.json", _dump(report))
    stats = misclassification_stats([_Result(r, labels) for r in records], truths, labels)
    out.write("misclassification.json", _dump(stats))
    print(f"accuracy {report['accuracy']:.4f} on {cm.total} spectra")
    if UNDETERMINED in cm.labels:
        print(f"undetermined predictions: {int(cm.counts[:, cm.index(UNDETERMINED)].sum())}")


def cmd_outlier(args, out):
    full = read_set(_existing(args.input))
    test = read_set(_existing(args.test)) if args.test else None
    model, study = leave_one_out(full, args.hold_out, test)
    out.write("features.csv", study.to_csv())
    stump = stump_fit(study)
    importance = permutation_importance(study, stump, repeats=args.repeats, seed=args.seed)
    best = int(np.argmax(importance)) if np.any(importance > 0) else stump.best_index
    feature = study.feature_names[best]
    x = study.values[:, best]
    y = study.is_outlier
    stump_b = stump.boundaries[best]
    direction = args.direction or stump_b.direction
    logistic = logistic_fit_1d(x, y)
    curve = threshold_sweep(x, y, args.grid, direction)
    out.write("sweep.csv", curve.to_csv())
    band = adequate_band(curve)
    if band is not None:
        manual = (band[0] + band[1]) / 2
    else:
        manual = float(curve.thresholds[int(np.nanargmax(curve.accuracy))])
    boundaries = [
        stump_b.to_dict(),
        {
            "feature": feature,
            "threshold": logistic.boundary,
            "direction": logistic.direction,
            "method": "logistic",
            "quality": boundary_quality(x, y, logistic.boundary, logistic.direction),
            "slope": logistic.slope,
            "intercept": logistic.intercept,
            "separable": logistic.separable,
            "note": "separable: boundary from stump recommended" if logistic.separable else None,
        },
        {
            "feature": feature,
            "threshold": manual,
            "direction": direction,
            "method": "manual",
            "quality": boundary_quality(x, y, manual, direction),
            "band": None if band is None else {"low": band[0], "high": band[1]},
        },
    ]
    report = {
        "held_out": args.hold_out,
        "model_labels": list(model.labels),
        "most_informative_feature": feature,
        "permutation_importance": dict(zip(study.feature_names, importance.tolist())),
        "boundaries": boundaries,
    }
    out.write("boundaries.json", _dump(report))
    print(f"most informative feature: {feature}")
    for b in boundaries:
        q = b["quality"]
        print(f"{b['method']:>8}: {b['threshold']:.4f} ({b['direction']}) accuracy {q['accuracy']:.3f}")


# --- argument parsing ----------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="specnmf", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.set_defaults(func=func)
        sp.add_argument("--output-dir", required=True, type=Path, help="directory receiving all outputs")
        return sp

    sp = add("synth", cmd_synth, "write the synthetic benchmark corpus as JSON-lines sets")
    sp.add_argument("--seed", type=int, default=42)

    sp = add("preprocess", cmd_preprocess, "rebin SPE/CSV/JSON-lines inputs to a standard binning")
    sp.add_argument("--input", nargs="+", required=True, help=".spe, .csv or .jsonl files")
    sp.add_argument("--channels", type=_positive_int(2), required=True, help="target channel count")
    sp.add_argument("--cal", type=_parse_cal, default=EnergyCalibration(), help="target a0,a1,a2 in keV")
    sp.add_argument("--source-cal", type=_parse_cal, default=None, help="calibration of CSV inputs")
    sp.add_argument("--max-per-class", type=_positive_int(1), default=None)
    sp.add_argument("--seed", type=int, default=42)
    sp.add_argument("--name", default="spectra.jsonl", help="output file name")

    sp = add("explore", cmd_explore, "mean spectra, similarity matrix and example spectra as CSV")
    sp.add_argument("--input", required=True)
    sp.add_argument("--examples", type=_positive_int(1), default=3, help="example spectra per class")
    sp.add_argument("--seed", type=int, default=42)

    sp = add("train", cmd_train, "fit the loadings from single-label spectra")
    sp.add_argument("--input", required=True)
    sp.add_argument("--name", default="model.json")

    sp = add("analyze", cmd_analyze, "score, classify and denoise spectra")
    sp.add_argument("--input", required=True)
    sp.add_argument("--model", required=True)
    sp.add_argument("--presence-threshold", type=_fraction, default=DEFAULT_PRESENCE_THRESHOLD)
    sp.add_argument("--denoised", action="store_true", help="also write denoised.jsonl")
    sp.add_argument("--name", default="results.jsonl")

    sp = add("evaluate", cmd_evaluate, "confusion matrix and metrics for analyze results")
    sp.add_argument("--input", required=True, help="spectra set holding the truth labels")
    sp.add_argument("--predictions", required=True, help="results.jsonl written by analyze")
    sp.add_argument("--presence-threshold", type=_fraction, default=DEFAULT_PRESENCE_THRESHOLD)

    sp = add("outlier", cmd_outlier, "leave-one-class-out study and decision boundaries")
    sp.add_argument("--input", required=True, help="labeled training set")
    sp.add_argument("--hold-out", required=True, help="class removed from training")
    sp.add_argument("--test", default=None, help="spectra to score (default: the input set)")
    sp.add_argument("--grid", type=_positive_int(2), default=101)
    sp.add_argument("--repeats", type=_positive_int(1), default=10, help="permutation repeats")
    sp.add_argument("--direction", choices=("below", "above"), default=None)
    sp.add_argument("--seed", type=int, default=42)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out = Outputs(args.output_dir)
    try:
        args.func(args, out)
    except UsageError as exc:
        out.discard()
        print(f"specnmf {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        out.discard()
        print(f"specnmf {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SpecNmfError, OSError, json.JSONDecodeError) as exc:
        out.discard()
        print(f"specnmf {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BaseException:
        out.discard()
        raise
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
