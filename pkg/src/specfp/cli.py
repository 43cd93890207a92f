"""Command-line entry point.

Exit codes: 0 on success, 1 on validation errors, 2 on I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import glob
import os
import sys
from typing import Sequence

import numpy as np

from .audio_io import load_wav
from .dsp import (
    CODEC_STFT,
    LOWPASS_STFT,
    DEFAULT_LOWPASS,
    FilterSpec,
    FirFilter,
    StftConfig,
    design_fir,
    frequency_response,
)
from .errors import AudioFormatError, ConfigError, FingerprintFileError
from .eval import (
    FeatureConfig,
    ResidualStore,
    build_fingerprint,
    closed_world_experiment,
    default_jobs,
    detection_experiment,
    noise_robustness_experiment,
    single_model_experiment,
)
from .fingerprint import EXTERNAL_PREFIX, Fingerprint, load_fingerprint, residual, residual_from_pair, save_fingerprint
from .fixtures import default_specs, generate_noise_clips, generate_surrogate_corpus
from .manifest import REAL_LABEL, read_manifest
from .scoring import (
    REAL,
    SYNTHETIC,
    DetectionThreshold,
    ScoreKind,
    attribute_multi,
    correlation_score,
    detect,
    mahalanobis_score,
    min_distances,
    sweep_threshold,
)

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _filter_arg(text: str) -> FilterSpec | str:
    if text.startswith(EXTERNAL_PREFIX):
        return text
    try:
        return FilterSpec.parse(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _stft_arg(text: str) -> StftConfig:
    try:
        return StftConfig.parse(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _snr_list(text: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


FILTER_HELP = (
    "filter: lowpass:PASS:STOP, highpass:PASS:STOP, bandpass:LO:HI:WIDTH, "
    "bandstop:LO:HI:WIDTH (Hz) or external:TAG with --companion-dir"
)


def _add_feature_args(p: argparse.ArgumentParser, multi: bool = False) -> None:
    action = "append" if multi else "store"
    more = " (repeatable; configurations are shown side by side)" if multi else ""
    p.add_argument(
        "--filter",
        type=_filter_arg,
        action=action,
        help=f"{FILTER_HELP}; default {DEFAULT_LOWPASS}{more}",
    )
    p.add_argument(
        "--stft",
        type=_stft_arg,
        action=action,
        help=f"WINDOW:HOP[:hann|hamming]; default {LOWPASS_STFT.window_len}:{LOWPASS_STFT.hop} for "
        f"in-package filters, {CODEC_STFT.window_len}:{CODEC_STFT.hop} for external:TAG{more}",
    )
    p.add_argument(
        "--score",
        choices=[k.value for k in ScoreKind],
        action=action,
        help=f"scoring function; default mahalanobis for in-package filters, correlation for external:TAG{more}",
    )
    p.add_argument("--atten", type=float, default=60.0, help="FIR stopband attenuation in dB")
    p.add_argument("--shrinkage", type=float, default=None, help="covariance shrinkage; default 1e-3*trace/F")
    p.add_argument("--companion-dir", help="folder of externally filtered clips mirroring the manifest layout")


def _one(v, i):
    if v is None:
        return None
    return v[i] if isinstance(v, list) else v


def _features(args, index: int = 0) -> FeatureConfig:
    filt = _one(args.filter, index)
    if filt is None:
        filt = DEFAULT_LOWPASS
    if isinstance(filt, FilterSpec) and args.atten != filt.stopband_atten_db:
        filt = FilterSpec(filt.kind, filt.edge_lo, filt.edge_hi, filt.transition_width, args.atten)
    external = isinstance(filt, str)
    stft = _one(args.stft, index) or (CODEC_STFT if external else LOWPASS_STFT)
    score = _one(args.score, index) or (ScoreKind.CORRELATION if external else ScoreKind.MAHALANOBIS)
    return FeatureConfig(filt, stft, score, args.companion_dir, args.shrinkage)


def _feature_list(args) -> list[FeatureConfig]:
    lengths = {len(v) for v in (args.filter, args.stft, args.score) if isinstance(v, list)}
    n = max(lengths, default=1)
    for v in (args.filter, args.stft, args.score):
        if isinstance(v, list) and len(v) not in (1, n):
            raise ConfigError("--filter/--stft/--score must be given once or the same number of times")
    out = []
    for i in range(n):
        pick = argparse.Namespace(**vars(args))
        for name in ("filter", "stft", "score"):
            v = getattr(args, name)
            if isinstance(v, list):
                setattr(pick, name, v[0] if len(v) == 1 else v[i])
        out.append(_features(pick))
    return out


def _fingerprint_paths(items: Sequence[str]) -> list[str]:
    paths = []
    for item in items:
        if os.path.isdir(item):
            found = sorted(glob.glob(os.path.join(item, "*.fp")) + glob.glob(os.path.join(item, "*.json")))
            if not found:
                raise FileNotFoundError(f"no fingerprint files (*.fp, *.json) in {item}")
            paths.extend(found)
        else:
            paths.append(item)
    return paths


def _load_fps(items: Sequence[str]) -> list[Fingerprint]:
    return [load_fingerprint(p) for p in _fingerprint_paths(items)]


def _clip_residual(fp: Fingerprint, path: str, companion: str | None):
    sig = load_wav(path)
    if fp.filter_id.startswith(EXTERNAL_PREFIX):
        if companion is None:
            raise ConfigError(f"fingerprint {fp.label!r} uses {fp.filter_id}; pass --companion with the filtered clip")
        return residual_from_pair(sig, load_wav(companion), fp.stft_config, fp.filter_id)
    if sig.sample_rate != fp.sample_rate:
        raise ConfigError(f"{path}: sample rate {sig.sample_rate} Hz, fingerprint expects {fp.sample_rate} Hz")
    if fp.coefficients is not None:
        fir = FirFilter(fp.coefficients, fp.sample_rate, fp.filter_spec)
    elif fp.filter_spec is not None:
        fir = design_fir(fp.filter_spec, fp.sample_rate)
    else:
        raise FingerprintFileError(f"fingerprint {fp.label!r} carries neither a filter spec nor coefficients")
    return residual(sig, fir, fp.stft_config)


def _check_same_setup(fps: Sequence[Fingerprint]) -> None:
    for fp in fps[1:]:
        if not fp.same_setup(fps[0]):
            raise ConfigError(f"fingerprints {fps[0].label!r} and {fp.label!r} use different configurations")


def read_tau(path: str) -> float:
    """Read a threshold file: a bare number or ``tau=<value>`` lines."""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            try:
                if not sep:
                    return float(key)
                if key.strip() == "tau":
                    return float(value)
            except ValueError as exc:
                raise ConfigError(f"{path}: bad threshold value {line!r}") from exc
    raise ConfigError(f"{path}: no tau value found")


def write_tau(path: str, threshold: DetectionThreshold) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"tau={float(threshold.tau)!r}\ncalibration_f1={float(threshold.calibration_f1)!r}\n")


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# --- commands ------------------------------------------------------------------


def cmd_fingerprint(args) -> int:
    manifest = read_manifest(args.manifest)
    features = _features(args)
    entries = manifest.of_label(args.label)
    if not entries:
        raise ConfigError(f"label {args.label!r} not found in {args.manifest}")
    if any(e.split is not None for e in entries):
        entries = [e for e in entries if e.split == "train"]
    store = ResidualStore(manifest, args.jobs)
    fp = build_fingerprint(args.label, entries, features, store)
    save_fingerprint(fp, args.out)
    print(f"wrote {args.out}: label={fp.label} n_train={fp.n_train} F={fp.dim} shrinkage={fp.shrinkage:.6g}", file=sys.stderr)
    return EXIT_OK


def cmd_score(args) -> int:
    fp = load_fingerprint(args.fingerprint)
    r = _clip_residual(fp, args.input, args.companion)
    kind = ScoreKind(args.metric)
    value = mahalanobis_score(r, fp) if kind is ScoreKind.MAHALANOBIS else correlation_score(r, fp)
    print(f"{kind.value}\t{float(value)!r}")
    return EXIT_OK


def cmd_attribute(args) -> int:
    fps = _load_fps(args.fingerprints)
    _check_same_setup(fps)
    r = _clip_residual(fps[0], args.input, args.companion)
    res = attribute_multi(r, fps, args.metric)
    print(f"predicted\t{res.predicted_label}\t{float(res.score)!r}")
    for label in sorted(res.per_candidate):
        print(f"{label}\t{float(res.per_candidate[label])!r}")
    return EXIT_OK


def cmd_detect(args) -> int:
    fps = _load_fps(args.fingerprints)
    _check_same_setup(fps)
    tau = args.tau if args.tau is not None else read_tau(args.tau_file)
    r = _clip_residual(fps[0], args.input, args.companion)
    res = detect(r, fps, DetectionThreshold(tau))
    print(res.decision)
    print(f"min_distance={float(res.min_distance)!r} nearest={res.nearest_label} tau={float(tau)!r}", file=sys.stderr)
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.distances:
        with open(args.distances, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        try:
            d = [float(r["distance"]) for r in rows]
            labels = [r["label"].strip() for r in rows]
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{args.distances}: expected columns distance,label ({exc})") from exc
    else:
        if not (args.manifest and args.fingerprints):
            raise ConfigError("sweep-threshold needs --distances, or --manifest with --fingerprints")
        fps = _load_fps(args.fingerprints)
        _check_same_setup(fps)
        manifest = read_manifest(args.manifest)
        entries = [e for e in manifest if args.split is None or e.split == args.split]
        if not entries:
            raise ConfigError(f"no manifest entries in split {args.split!r}")
        x = np.stack([_clip_residual(fps[0], manifest.resolve(e), None).values for e in entries])
        d = min_distances(x, fps)[0].tolist()
        labels = [REAL if e.label == REAL_LABEL else SYNTHETIC for e in entries]
    threshold = sweep_threshold(d, labels)
    if args.out:
        write_tau(args.out, threshold)
    print(f"tau={float(threshold.tau)!r}\ncalibration_f1={float(threshold.calibration_f1)!r}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    manifest = read_manifest(args.manifest)
    store = ResidualStore(manifest, args.jobs)
    if args.protocol == "single":
        configs = _feature_list(args)
        targets = manifest.synthetic_labels if args.all_targets or not args.target else args.target
        report = single_model_experiment(targets, manifest, configs, args.seed, args.trials, store=store)
    else:
        configs = _feature_list(args)
        if len(configs) != 1:
            raise ConfigError(f"evaluate {args.protocol} takes a single feature configuration")
        features = configs[0]
        if args.protocol == "closed":
            report = closed_world_experiment(manifest, features, args.seed, args.trials, store=store)
        elif args.protocol == "detection":
            report = detection_experiment(manifest, features, args.seed, args.trials, store=store, tau_override=args.tau)
        else:
            if not args.noise_manifest:
                raise ConfigError("evaluate noise needs --noise-manifest")
            noise = read_manifest(args.noise_manifest)
            targets = args.target or None
            report = noise_robustness_experiment(
                manifest, noise, args.snr, features, args.seed, args.trials, targets=targets, store=store
            )
            if args.curve:
                _emit(report.curve_csv(), args.curve)
    _emit(report.to_text(), args.report)
    if args.json:
        _emit(report.to_json(), args.json)
    return EXIT_OK


def cmd_filter_response(args) -> int:
    fir = design_fir(args.filter, args.sample_rate)
    freqs, gains = frequency_response(fir, args.points)
    lines = [f"# {args.filter} fs={args.sample_rate} taps={fir.order}", "frequency_hz,gain_db"]
    lines += [f"{float(f)!r},{float(g)!r}" for f, g in zip(freqs, gains)]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_gen_fixtures(args) -> int:
    specs = default_specs(args.clip_seconds, args.sample_rate)
    if args.systems:
        specs = specs[: args.systems]
    m = generate_surrogate_corpus(specs, args.n_per_system, args.n_real, args.seed, args.out_dir)
    print(f"wrote {len(m)} clips and manifest.csv to {args.out_dir}", file=sys.stderr)
    if args.noise_clips:
        noise_dir = os.path.join(args.out_dir, "noise")
        generate_noise_clips(args.noise_clips, args.noise_seconds, args.sample_rate, args.seed, noise_dir)
        print(f"wrote {args.noise_clips} noise clips and noise_manifest.csv to {noise_dir}", file=sys.stderr)
    return EXIT_OK


# --- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="specfp", description="Spectral residual fingerprints for synthetic speech attribution.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fingerprint", help="build a fingerprint from a manifest label", formatter_class=fmt)
    p.add_argument("--manifest", required=True)
    p.add_argument("--label", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=_positive_int, default=default_jobs(), help="worker processes (env SPECFP_JOBS)")
    _add_feature_args(p)
    p.set_defaults(func=cmd_fingerprint)

    p = sub.add_parser("score", help="score one clip against one fingerprint", formatter_class=fmt)
    p.add_argument("--fingerprint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--companion", help="externally filtered companion clip (external:TAG fingerprints)")
    p.add_argument("--metric", choices=[k.value for k in ScoreKind], default="mahalanobis", help="scoring function")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("attribute", help="attribute one clip to the closest fingerprint", formatter_class=fmt)
    p.add_argument("--fingerprints", nargs="+", required=True, help="fingerprint files or folders")
    p.add_argument("--input", required=True)
    p.add_argument("--companion")
    p.add_argument("--metric", choices=[k.value for k in ScoreKind], default="mahalanobis", help="scoring function")
    p.set_defaults(func=cmd_attribute)

    p = sub.add_parser("detect", help="real-vs-synthetic decision by thresholded minimum distance", formatter_class=fmt)
    p.add_argument("--fingerprints", nargs="+", required=True, help="fingerprint files or folders")
    p.add_argument("--input", required=True)
    p.add_argument("--companion")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--tau-file", help="file written by sweep-threshold (or holding a bare number)")
    g.add_argument("--tau", type=float)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("sweep-threshold", help="choose tau maximizing F1 on labelled data", formatter_class=fmt)
    p.add_argument("--distances", help="CSV with columns distance,label (label synthetic|real)")
    p.add_argument("--manifest", help="manifest of labelled clips (label 'real' is real, all others synthetic)")
    p.add_argument("--fingerprints", nargs="+", help="fingerprint files or folders (with --manifest)")
    p.add_argument("--split", default=None, help="only use manifest entries of this split, e.g. val")
    p.add_argument("--out", help="write tau here")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("evaluate", help="run an evaluation protocol", formatter_class=fmt)
    p.add_argument("protocol", choices=["single", "closed", "detection", "noise"])
    p.add_argument("--manifest", required=True)
    p.add_argument("--target", action="append", help="target label (repeatable; single/noise)")
    p.add_argument("--all-targets", action="store_true", help="use every synthetic label as a target (single)")
    p.add_argument("--seed", type=int, default=0, help="base seed for splits and subsampling")
    p.add_argument("--trials", type=_positive_int, default=5, help="trials with seeds seed..seed+trials-1")
    p.add_argument("--jobs", type=_positive_int, default=default_jobs(), help="worker processes (env SPECFP_JOBS)")
    p.add_argument("--report", help="write the text report here instead of stdout")
    p.add_argument("--json", help="also write the report as JSON")
    p.add_argument("--tau", type=float, default=None, help="detection: fixed threshold instead of calibration")
    p.add_argument("--noise-manifest", help="noise: manifest of noise clips")
    p.add_argument("--snr", type=_snr_list, default=[0.0, 10.0, 20.0, 30.0, 40.0], help="noise: comma-separated SNRs in dB")
    p.add_argument("--curve", help="noise: write snr_db,auroc CSV here")
    _add_feature_args(p, multi=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("filter-response", help="print a designed filter's gain curve", formatter_class=fmt)
    p.add_argument("--filter", type=_filter_arg, default=DEFAULT_LOWPASS, help=FILTER_HELP)
    p.add_argument("--sample-rate", type=_positive_int, default=22050, help="Hz")
    p.add_argument("--points", type=_positive_int, default=512, help="frequency grid size")
    p.add_argument("--out")
    p.set_defaults(func=cmd_filter_response)

    p = sub.add_parser("gen-fixtures", help="generate the surrogate corpus", formatter_class=fmt)
    p.add_argument("--out-dir", required=True, help="output folder for clips and manifest.csv")
    p.add_argument("--n-per-system", type=_positive_int, default=200, help="clips per surrogate system")
    p.add_argument("--n-real", type=int, default=200, help="real clips")
    p.add_argument("--systems", type=_positive_int, default=None, help="use only the first N surrogate systems")
    p.add_argument("--seed", type=int, default=7, help="corpus seed")
    p.add_argument("--clip-seconds", type=float, default=0.5, help="clip duration")
    p.add_argument("--sample-rate", type=_positive_int, default=22050, help="Hz")
    p.add_argument("--noise-clips", type=int, default=20, help="also write this many noise clips under noise/")
    p.add_argument("--noise-seconds", type=float, default=2.0, help="noise clip duration")
    p.set_defaults(func=cmd_gen_fixtures)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "filter-response" and isinstance(args.filter, str):
            raise ConfigError("filter-response needs an in-package filter, not an external tag")
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"specfp {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (FileNotFoundError, AudioFormatError, FingerprintFileError, OSError) as exc:
        print(f"specfp {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
