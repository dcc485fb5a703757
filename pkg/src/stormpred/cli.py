"""Command-line pipeline: ingest, train, predict, evaluate, export-plot.

Every subcommand is deterministic given its flags (seeds are explicit, no
wall-clock entropy), writes outputs atomically, and never mutates its inputs.
Exit codes: 0 success, 1 validation or input error (one-line diagnostic on
stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .errors import StormPredError, ValidationError
from .ioutil import atomic_write_text, dump_json, load_json
from .storm_data import (apply_minmax, build_dataset, load_dataset,
                         parse_track_csv, save_dataset)
from .training import TrainConfig, load_model, save_model, train
from .uncertainty import (COVERAGE_COORDS, CredibleBand, MIN_NORMALITY_N,
                          band_to_degrees, coverage, credible_band,
                          dagostino_k2, mc_predict, z_for_level)

PREDICTIONS_FORMAT_VERSION = 1
PLOT_LEVELS = (67, 90, 95, 98, 99)


def _parse_levels(raw: str) -> list[float]:
    try:
        levels = [float(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad level list {raw!r}")
    if not levels:
        raise argparse.ArgumentTypeError("empty level list")
    return levels


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stormpred",
        description="Storm-track prediction with credible intervals.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse a track CSV into a dataset")
    p.add_argument("--input", required=True, help="track CSV path")
    p.add_argument("--out", required=True, help="dataset JSON path")
    p.add_argument("--min-start", type=int, default=4)
    p.add_argument("--pred-length", type=int, default=1)
    p.add_argument("--max-len", type=int, default=None,
                   help="fixed track-length budget (default: longest track)")
    p.add_argument("--seed", type=int, required=True)

    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--dropout", type=float, required=True,
                   help="input-connection dropout per layer")
    p.add_argument("--recurrent-dropout", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--history", default=None,
                   help="history CSV path (default: history.csv next to --out)")

    p = sub.add_parser("predict", help="MC-dropout predictions on a split")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="test",
                   choices=("train", "validation", "test"))
    p.add_argument("--passes", type=int, default=100)
    p.add_argument("--levels", type=_parse_levels,
                   default=list(float(l) for l in PLOT_LEVELS),
                   help="comma list of credible levels")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="predictions JSON path")

    p = sub.add_parser("evaluate", help="coverage report from predictions")
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", required=True, help="coverage CSV path")

    p = sub.add_parser("export-plot",
                       help="per-coordinate band series for one storm")
    p.add_argument("--predictions", required=True)
    p.add_argument("--storm", required=True, help="storm id to export")
    p.add_argument("--out-dir", default=".")
    return parser


def _cmd_ingest(args) -> None:
    with open(args.input, "r", encoding="utf-8") as fh:
        storms = parse_track_csv(fh)
    dataset = build_dataset(storms, seed=args.seed, min_start=args.min_start,
                            pred_len=args.pred_length, max_len=args.max_len)
    save_dataset(dataset, args.out)


def _cmd_train(args) -> None:
    dataset = load_dataset(args.dataset)
    config = TrainConfig(p_input=args.dropout,
                         p_recurrent=args.recurrent_dropout,
                         seed=args.seed, epochs=args.epochs,
                         batch_size=args.batch, learning_rate=args.lr)
    params, history = train(dataset.samples["train"],
                            dataset.samples["validation"], config)
    save_model(params, dataset.scaler, config, args.out)
    history_path = args.history
    if history_path is None:
        history_path = os.path.join(os.path.dirname(args.out) or ".",
                                    "history.csv")
    history.write_csv(history_path)


def _band_json(band: CredibleBand) -> dict:
    return {"lat": [float(band.lower[0]), float(band.upper[0])],
            "lon": [float(band.lower[1]), float(band.upper[1])]}


def _normality_json(values: np.ndarray):
    if values.size < MIN_NORMALITY_N or float(np.std(values)) == 0.0:
        return None
    k2, p = dagostino_k2(values)
    return {"K2": k2, "p": p}


def _cmd_predict(args) -> None:
    params, scaler, config = load_model(args.model)
    dataset = load_dataset(args.dataset)
    samples = dataset.samples[args.split]
    if not samples:
        raise ValidationError(f"split {args.split!r} has no samples")
    levels = sorted(set(float(l) for l in args.levels))
    for level in levels:
        z_for_level(level)  # range-check before any work
    latlon = scaler.latlon()

    rng = np.random.default_rng(args.seed)
    records = []
    for sample in samples:
        ensemble = mc_predict(params, sample, args.passes,
                              config.p_input, config.p_recurrent, rng)
        bands = [credible_band(ensemble, level) for level in levels]
        span = latlon.max_vals - latlon.min_vals
        truth_deg = apply_minmax(latlon, sample.label, invert=True)
        mu_deg = apply_minmax(latlon, ensemble.mu, invert=True)
        records.append({
            "storm_id": sample.storm_id,
            "cutoff": sample.cutoff,
            "passes": ensemble.n_passes,
            "normalized": {
                "mu": ensemble.mu.tolist(),
                "sigma": ensemble.sigma.tolist(),
                "truth": np.asarray(sample.label).tolist(),
                "bands": {f"{b.level:g}": _band_json(b) for b in bands},
            },
            "degrees": {
                "mu": mu_deg.tolist(),
                "sigma": (ensemble.sigma * span).tolist(),
                "truth": truth_deg.tolist(),
                "bands": {f"{b.level:g}": _band_json(band_to_degrees(b, scaler))
                          for b in bands},
            },
            "normality": {
                "lat": _normality_json(ensemble.predictions[:, 0]),
                "lon": _normality_json(ensemble.predictions[:, 1]),
            },
        })
    artifact = {
        "format_version": PREDICTIONS_FORMAT_VERSION,
        "split": args.split,
        "passes": args.passes,
        "levels": levels,
        "seed": args.seed,
        "records": records,
    }
    atomic_write_text(args.out, dump_json(artifact))


def _load_predictions(path: str) -> dict:
    artifact = load_json(path)
    if not isinstance(artifact, dict) or \
            artifact.get("format_version") != PREDICTIONS_FORMAT_VERSION:
        raise ValidationError(
            f"{path}: not a version-{PREDICTIONS_FORMAT_VERSION} "
            f"predictions artifact")
    return artifact


def _cmd_evaluate(args) -> None:
    artifact = _load_predictions(args.predictions)
    bands, truths = [], []
    for record in artifact["records"]:
        norm = record["normalized"]
        entry = []
        for key, box in norm["bands"].items():
            level = float(key)
            entry.append(CredibleBand(
                level=level, z=z_for_level(level),
                lower=np.array([box["lat"][0], box["lon"][0]]),
                upper=np.array([box["lat"][1], box["lon"][1]])))
        bands.append(entry)
        truths.append(norm["truth"])
    report = coverage(bands, truths)
    atomic_write_text(args.out, report.to_csv_text())


def _cmd_export_plot(args) -> None:
    artifact = _load_predictions(args.predictions)
    records = [r for r in artifact["records"] if r["storm_id"] == args.storm]
    if not records:
        available = sorted({r["storm_id"] for r in artifact["records"]})
        raise ValidationError(
            f"storm {args.storm!r} not in predictions; available: "
            f"{', '.join(available)}")
    records.sort(key=lambda r: r["cutoff"])
    missing = [l for l in PLOT_LEVELS
               if f"{l:g}" not in records[0]["degrees"]["bands"]]
    if missing:
        raise ValidationError(
            f"predictions lack levels {missing}; re-run predict with "
            f"--levels {','.join(str(l) for l in PLOT_LEVELS)}")
    os.makedirs(args.out_dir, exist_ok=True)
    header = "timestep,truth,mean," + ",".join(
        f"lo{l},hi{l}" for l in PLOT_LEVELS)
    for j, coord in enumerate(COVERAGE_COORDS):
        lines = [header]
        for record in records:
            deg = record["degrees"]
            cells = [str(record["cutoff"]), repr(float(deg["truth"][j])),
                     repr(float(deg["mu"][j]))]
            for level in PLOT_LEVELS:
                box = deg["bands"][f"{level:g}"][coord]
                cells.append(repr(float(box[0])))
                cells.append(repr(float(box[1])))
            lines.append(",".join(cells))
        out_path = os.path.join(args.out_dir, f"{args.storm}_{coord}.csv")
        atomic_write_text(out_path, "\n".join(lines) + "\n")


_HANDLERS = {
    "ingest": _cmd_ingest,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "evaluate": _cmd_evaluate,
    "export-plot": _cmd_export_plot,
}


def dispatch(argv: list[str]) -> int:
    """Run one subcommand; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else 2
        return code
    try:
        _HANDLERS[args.command](args)
    except StormPredError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
