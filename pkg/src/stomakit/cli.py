"""Command-line entry point: ``stomakit <subcommand> [options]``.

Options may also come from a plain-text ``key = value`` config file given by
``--config`` or the ``STOMAKIT_CONFIG`` environment variable. Config keys are
the long option names with dashes replaced by underscores; command-line flags
win over the file.

Exit codes: 0 success, 1 usage error, 2 unreadable or invalid input,
3 undefined result (e.g. no ground truth for any class).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .annot import parse_detections, parse_rolabelimg, write_detections, write_report_csv
from .errors import ComputationError, InputError, NoStomata, StomakitError

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_COMPUTE = 0, 1, 2, 3

CONFIG_ENV = "STOMAKIT_CONFIG"

# config key -> (default, converter); also the set of accepted keys
CONFIG_KEYS = {
    "scale": (224.0, float),
    "iou_thr": (0.5, float),
    "tail_fraction": (0.4, float),
    "bins": (256, int),
    "thresholds": (None, str),
    "normalize": (False, "bool"),
    "seed": (0, int),
    "out": (None, str),
    "angle_unit": ("rad", str),
    "restore_cmd": (None, str),
    "gamma_length": ("aperture", str),
    "guard_width": ("derived", str),
    "f_diff": (2.49e-5, float),
    "v_molar": (0.0224, float),
    "area_rule": ("rectangle", str),
    "rounding": ("half_up", str),
    "alpha": (0.05, float),
    "reversed": ("channel", str),
    "normalize_weights": (False, "bool"),
    "filter_threshold": (0.5, float),
    "levels": (3, int),
    "shape": ("8,16,16", str),
    "kind": ("gauss", str),
    "sigma": (2.0, float),
    "block": (4, int),
    "length": (9, int),
    "angle": (0.0, float),
    "format": ("pgm", str),
    "n": (10, int),
    "width": (512, int),
    "height": (512, int),
    "stomata": (8, int),
    "min_separation": (0.0, float),
    "jitter": (0.0, float),
    "angle_jitter": (0.0, float),
    "fp_rate": (0.0, float),
    "fn_rate": (0.0, float),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _to_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off", ""):
        return False
    raise InputError(f"not a boolean: {text!r}")


def load_config(path) -> dict:
    """Parse a ``key = value`` file (``#`` comments, blank lines ignored)."""
    cfg = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise InputError(f"{path}:{lineno}: unknown config key {key!r}")
        cfg[key] = value
    return cfg


def _resolve(args: argparse.Namespace, keys: Sequence[str]) -> None:
    """Fill unset options from the config file, then from defaults."""
    cfg_path = args.config or os.environ.get(CONFIG_ENV)
    cfg = load_config(cfg_path) if cfg_path else {}
    for key in keys:
        if getattr(args, key, None) is not None:
            continue
        default, conv = CONFIG_KEYS[key]
        if key in cfg:
            raw = cfg[key]
            try:
                value = _to_bool(raw) if conv == "bool" else conv(raw)
            except ValueError:
                raise InputError(f"config key {key!r}: cannot parse {raw!r}") from None
        else:
            value = default
        setattr(args, key, value)


def _add(p: argparse.ArgumentParser, key: str, help: str, **kw):
    default, conv = CONFIG_KEYS[key]
    flag = "--" + key.replace("_", "-")
    if conv == "bool":
        p.add_argument(flag, dest=key, action="store_const", const=True, default=None,
                       help=f"{help} (config: {key}; default: off)")
    else:
        p.add_argument(flag, dest=key, type=conv, default=None,
                       help=f"{help} (config: {key}; default: {default})", **kw)


# ------------------------------------------------------------ helpers


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


def _write_out(path: Optional[str], text: str) -> None:
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")


def _load_gt(path: str, angle_unit: str):
    p = Path(path)
    if p.is_dir():
        files = sorted(p.glob("*.xml"))
        if not files:
            raise InputError(f"no .xml annotations in {p}")
        return [parse_rolabelimg(f.read_text(encoding="utf-8"), image_id=f.stem, angle_unit=angle_unit) for f in files]
    if p.suffix.lower() == ".json":
        return parse_detections(p.read_text(encoding="utf-8"), angle_unit)
    return [parse_rolabelimg(p.read_text(encoding="utf-8"), image_id=p.stem, angle_unit=angle_unit)]


def _image_paths(path: str) -> list[Path]:
    p = Path(path)
    if p.is_dir():
        exts = {".png", ".pgm", ".tif", ".tiff", ".jpg", ".jpeg", ".bmp"}
        files = sorted(f for f in p.iterdir() if f.suffix.lower() in exts)
        if not files:
            raise InputError(f"no images in {p}")
        return files
    if not p.exists():
        raise InputError(f"no such file: {p}")
    return [p]


def _parse_thresholds(spec: Optional[str]):
    from .quality import QualityThresholds

    if spec is None:
        return None
    p = Path(spec)
    if p.is_file():
        vals = {}
        for raw in p.read_text(encoding="utf-8").splitlines():
            line = raw.split("#", 1)[0].strip()
            if line:
                k, _, v = line.partition("=")
                vals[k.strip().replace("-", "_")] = float(v)
        try:
            return QualityThresholds(vals["fmean"], vals["fstd"])
        except KeyError:
            raise InputError(f"{spec}: thresholds file needs 'fmean' and 'fstd'") from None
    try:
        fm, fs = (float(t) for t in spec.split(","))
    except ValueError:
        raise InputError(f"--thresholds expects FMEAN,FSTD or a file, got {spec!r}") from None
    return QualityThresholds(fm, fs)


def _conductance_params(args):
    from .phenotype import ConductanceParams

    gw = args.guard_width
    if gw.startswith("const="):
        try:
            gw = float(gw.split("=", 1)[1])
        except ValueError:
            raise InputError(f"bad guard width {args.guard_width!r}") from None
    return ConductanceParams(f_diff=args.f_diff, v_molar=args.v_molar, gamma_length=args.gamma_length, guard_width=gw)


# ------------------------------------------------------------ subcommands


def cmd_evaluate(args) -> int:
    from .evaldet import evaluate

    gt = _load_gt(args.gt, args.angle_unit)
    det = parse_detections(Path(args.det).read_text(encoding="utf-8"), args.angle_unit)
    report = evaluate(gt, det, args.iou_thr)

    print(f"IoU threshold {args.iou_thr}")
    print(f"{'class':<10}{'Precision':>10}{'Recall':>10}{'F1':>10}{'AP':>10}")
    for c in report.classes:
        ap = "skipped" if c.ap is None else f"{c.ap:.3f}"
        print(f"{c.label:<10}{c.precision:>10.3f}{c.recall:>10.3f}{c.f1:>10.3f}{ap:>10}")
    print("mAP", "undefined" if report.map is None else f"{report.map:.3f}")

    if args.out:
        if args.out.lower().endswith(".csv"):
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["class", "precision", "recall", "f1", "score_threshold", "ap", "n_gt", "n_det"])
            for c in report.classes:
                w.writerow([c.label, _fmt(c.precision), _fmt(c.recall), _fmt(c.f1),
                            _fmt(c.score_threshold), _fmt(c.ap), c.n_gt, c.n_det])
            w.writerow(["mAP", "", "", "", "", _fmt(report.map), "", ""])
            _write_out(args.out, buf.getvalue())
        else:
            _write_out(args.out, json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n")
    if report.map is None:
        print("error: no class has ground truth; mAP undefined", file=sys.stderr)
        return EXIT_COMPUTE
    return EXIT_OK


def cmd_phenotype(args) -> int:
    from .phenotype import Calibration, summarize_all

    if bool(args.det) == bool(args.gt):
        raise UsageError("give exactly one of --det or --gt")
    if args.det:
        images = parse_detections(Path(args.det).read_text(encoding="utf-8"), args.angle_unit)
    else:
        images = _load_gt(args.gt, args.angle_unit)
    cal = Calibration(args.scale)
    params = _conductance_params(args)
    records = summarize_all(images, cal, params, args.area_rule)
    skipped = len(images) - len(records)
    if skipped:
        print(f"warning: {skipped} image(s) without stomata skipped", file=sys.stderr)
    if not records:
        raise NoStomata("no image contains a stoma")
    text = write_report_csv(records, args.rounding)
    if args.out:
        _write_out(args.out, text)
    for r in records:
        print(f"{r.image_id}: {r.n_stomata} stomata, {r.n_apertures} apertures, "
              f"stoma {r.stoma_len_um:.2f}x{r.stoma_wid_um:.2f} um, density {r.density_per_mm2:.2f}/mm2, "
              f"gsmax {r.gsmax_mol_m2_s:.3f}, OSN/TSN {r.osn_tsn_ratio:.2f}")
    if not args.out:
        sys.stdout.write(text)
    return EXIT_OK


def _read_table(path: str) -> tuple[list[str], list[dict]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise InputError(f"{path}: empty CSV")
        return list(reader.fieldnames), list(reader)


def cmd_agree(args) -> int:
    from .agreement import agree

    mcols, mrows = _read_table(args.manual)
    pcols, prows = _read_table(args.predicted)
    if "image_id" in mcols and "image_id" in pcols:
        pred = {r["image_id"]: r for r in prows}
        missing = [r["image_id"] for r in mrows if r["image_id"] not in pred]
        if missing:
            raise InputError(f"predicted table lacks image ids {missing[:5]}")
        prows = [pred[r["image_id"]] for r in mrows]
    elif len(mrows) != len(prows):
        raise InputError(f"row counts differ: {len(mrows)} manual vs {len(prows)} predicted")
    traits = [c for c in mcols if c in pcols and c != "image_id"]
    if not traits:
        raise InputError("no common trait columns")

    results = []
    for t in traits:
        try:
            g = [float(r[t]) for r in mrows]
            d = [float(r[t]) for r in prows]
        except ValueError:
            continue  # non-numeric column
        results.append(agree(t, g, d, args.alpha))

    fields = ["trait", "n", "ccc", "avg_accuracy", "mse", "rmse", "test", "p_value", "significant"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in results:
        w.writerow([_fmt(getattr(r, f)) for f in fields])
        verdict = "significant difference" if r.significant else "no significant difference"
        print(f"{r.trait}: CCC {r.ccc:.4f}, acc {r.avg_accuracy:.4f}, RMSE {r.rmse:.4f}, "
              f"{r.test} p={r.p_value:.4g} ({verdict})")
    _write_out(args.out, buf.getvalue())
    return EXIT_OK


def cmd_quality(args) -> int:
    from .quality import (QualityReport, frequency_tail_stats, histogram_entropy, load_gray,
                          normalize_reports, restore_and_rescore, QualityThresholds)

    thresholds = _parse_thresholds(args.thresholds)
    if args.restore_cmd and thresholds is None:
        raise UsageError("--restore-cmd needs --thresholds to decide which images are blurry")
    paths = _image_paths(args.img)
    reports = []
    for p in paths:
        img = load_gray(p)
        fm, fs = frequency_tail_stats(img, args.tail_fraction)
        te = histogram_entropy(img, args.bins)
        if thresholds is None:
            verdict = "n/a"
        else:
            verdict = "blurry" if (fm < thresholds.f_mean or fs < thresholds.f_std) else "clear"
        reports.append(QualityReport(fm, fs, te, verdict))
    shown = normalize_reports(reports) if args.normalize else reports

    fields = ["image", "f_mean", "f_std", "t_entropy", "verdict"]
    if args.restore_cmd:
        fields += ["restored_image", "restored_f_mean", "restored_f_std", "restored_t_entropy", "restored_verdict"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for p, r in zip(paths, shown):
        row = [p.name, _fmt(r.f_mean), _fmt(r.f_std), _fmt(r.t_entropy), r.verdict]
        if args.restore_cmd:
            if r.verdict == "blurry":
                out, rr = restore_and_rescore(p, args.restore_cmd, thresholds, args.tail_fraction, args.bins)
                row += [str(out), _fmt(rr.f_mean), _fmt(rr.f_std), _fmt(rr.t_entropy), rr.verdict]
            else:
                row += ["", "", "", "", ""]
        w.writerow(row)
        print(f"{p.name}: fMean {r.f_mean:.6g} fSTD {r.f_std:.6g} tEntropy {r.t_entropy:.4f} {r.verdict}")
    _write_out(args.out, buf.getvalue())
    return EXIT_OK


def cmd_degrade(args) -> int:
    from .quality import degrade, load_gray, save_gray

    if not args.out:
        raise UsageError("degrade needs --out DIR")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    kind = args.kind.replace("-", "_")
    for p in _image_paths(args.img):
        img = degrade(load_gray(p), kind, block=args.block, sigma=args.sigma, length=args.length,
                      angle=args.angle, seed=args.seed)
        dst = out_dir / f"{p.stem}_{kind}.{args.format}"
        save_gray(dst, img)
        print(f"{p.name} -> {dst}")
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synth import SceneParams, generate_scenes, perturb, write_scene_set

    if not args.out:
        raise UsageError("synth needs --out DIR")
    params = SceneParams(image_w=args.width, image_h=args.height, n_stomata=args.stomata,
                         min_separation_px=args.min_separation, seed=args.seed, pixels_per_100um=args.scale)
    scenes = generate_scenes(args.n, params)
    dets = [perturb(sc.truth, args.jitter, args.angle_jitter, args.fp_rate, args.fn_rate, seed=args.seed * 1_000_003 + k)
            for k, sc in enumerate(scenes)]
    write_scene_set(args.out, scenes, dets, params, args.format)
    print(f"wrote {len(scenes)} scenes ({sum(len(s.stomata_um) for s in scenes)} stomata) to {args.out}")
    return EXIT_OK


def cmd_fuse_demo(args) -> int:
    from .netops import fuse_demo

    try:
        shape = tuple(int(t) for t in args.shape.split(","))
    except ValueError:
        raise InputError(f"--shape expects C,H,W, got {args.shape!r}") from None
    if len(shape) != 3 or min(shape) < 1:
        raise InputError(f"--shape expects three positive integers, got {args.shape!r}")
    res = fuse_demo(args.seed, shape, args.levels, args.filter_threshold, args.reversed, args.normalize_weights)
    for name, st in res["stages"].items():
        print(f"{name:<12} mean {st['mean']:+.4f} std {st['std']:.4f} min {st['min']:+.4f} max {st['max']:+.4f}")
    print(f"informative fraction (w1 == 1): {res['informative_fraction']:.4f}")
    for name, err in res["gradient_check"].items():
        print(f"gradcheck {name:<24} max rel err {err:.2e} {'ok' if err <= 1e-5 else 'FAIL'}")
    _write_out(args.out, json.dumps(res, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


# ------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stomakit", description="Rotated-box stomatal phenotyping toolkit.",
                     epilog=f"Config file: key = value lines; keys are option names with underscores. "
                            f"Default file from ${CONFIG_ENV}.")
    parser.add_argument("--version", action="version", version=f"stomakit {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def subparser(name, help, keys):
        p = sub.add_parser(name, help=help, description=help)
        p.add_argument("--config", default=None, help=f"key = value config file (default: ${CONFIG_ENV})")
        p.set_defaults(config_keys=keys)
        return p

    p = subparser("evaluate", "Score detections against RolabelImg ground truth.",
                  ["iou_thr", "angle_unit", "out", "seed"])
    p.add_argument("--gt", required=True, help="directory of RolabelImg XML files (or one XML/JSON file)")
    p.add_argument("--det", required=True, help="detection JSON")
    _add(p, "iou_thr", "IoU threshold for a match")
    _add(p, "angle_unit", "angle unit of the inputs: rad or deg", choices=["rad", "deg"])
    _add(p, "out", "metrics output (.json or .csv)")
    _add(p, "seed", "unused; accepted for config sharing")
    p.set_defaults(func=cmd_evaluate)

    p = subparser("phenotype", "Write the per-image phenotype report (8-column CSV).",
                  ["scale", "angle_unit", "out", "gamma_length", "guard_width", "f_diff", "v_molar",
                   "area_rule", "rounding"])
    p.add_argument("--det", help="detection JSON")
    p.add_argument("--gt", help="directory of RolabelImg XML files")
    _add(p, "scale", "pixels per 100 um")
    _add(p, "angle_unit", "angle unit of the inputs", choices=["rad", "deg"])
    _add(p, "out", "report CSV path (stdout if absent)")
    _add(p, "gamma_length", "axis feeding the pore-area length",
         choices=["aperture", "stoma", "aperture-short", "stoma-short"])
    _add(p, "guard_width", "guard-cell width rule: derived, aperture-length or const=<um>")
    _add(p, "f_diff", "diffusivity of water vapour in air, m2/s")
    _add(p, "v_molar", "molar volume of air, m3/mol")
    _add(p, "area_rule", "area convention", choices=["rectangle", "ellipse"])
    _add(p, "rounding", "2-decimal rounding rule", choices=["half_up", "half_even"])
    p.set_defaults(func=cmd_phenotype)

    p = subparser("agree", "Agreement between manual and predicted trait tables.", ["alpha", "out"])
    p.add_argument("--manual", required=True, help="CSV of manual measurements (one column per trait)")
    p.add_argument("--predicted", required=True, help="CSV of predicted values, same columns")
    _add(p, "alpha", "significance level for normality and difference tests")
    _add(p, "out", "output CSV")
    p.set_defaults(func=cmd_agree)

    p = subparser("quality", "Frequency-tail sharpness and entropy per image, with blurry/clear routing.",
                  ["tail_fraction", "bins", "thresholds", "normalize", "restore_cmd", "out"])
    p.add_argument("--img", required=True, help="image file or directory")
    _add(p, "tail_fraction", "fraction of highest-frequency radial bins")
    _add(p, "bins", "histogram bins for tEntropy")
    _add(p, "thresholds", "FMEAN,FSTD or a file with fmean= and fstd= lines")
    _add(p, "normalize", "min-max normalise metrics across the batch")
    _add(p, "restore_cmd", "external command run on blurry images; {input} and {output} placeholders")
    _add(p, "out", "output CSV")
    p.set_defaults(func=cmd_quality)

    p = subparser("degrade", "Write degraded copies of images.",
                  ["kind", "sigma", "block", "length", "angle", "seed", "format", "out"])
    p.add_argument("--img", required=True, help="image file or directory")
    _add(p, "kind", "degradation", choices=["gauss", "gauss_blur", "noise", "pixelation", "motion", "motion_blur"])
    _add(p, "sigma", "Gaussian blur sigma or noise sigma")
    _add(p, "block", "pixelation block size")
    _add(p, "length", "motion-blur kernel length (pixels)")
    _add(p, "angle", "motion-blur angle (radians)")
    _add(p, "seed", "noise seed")
    _add(p, "format", "output image format", choices=["pgm", "png"])
    _add(p, "out", "output directory")
    p.set_defaults(func=cmd_degrade)

    p = subparser("synth", "Generate synthetic scenes with truth XML and detection JSON.",
                  ["n", "seed", "out", "width", "height", "stomata", "min_separation", "scale",
                   "jitter", "angle_jitter", "fp_rate", "fn_rate", "format"])
    _add(p, "n", "number of scenes")
    _add(p, "seed", "random seed")
    _add(p, "out", "output directory")
    _add(p, "width", "image width (px)")
    _add(p, "height", "image height (px)")
    _add(p, "stomata", "stomata per scene")
    _add(p, "min_separation", "minimum centre distance (px)")
    _add(p, "scale", "pixels per 100 um")
    _add(p, "jitter", "detection centre jitter (px)")
    _add(p, "angle_jitter", "detection angle jitter (rad)")
    _add(p, "fp_rate", "false positives per truth box")
    _add(p, "fn_rate", "probability of dropping a truth box")
    _add(p, "format", "image format", choices=["pgm", "png"])
    p.set_defaults(func=cmd_synth)

    p = subparser("fuse-demo", "Run the fusion and filter operators on seeded tensors with gradient checks.",
                  ["seed", "shape", "levels", "filter_threshold", "reversed", "normalize_weights", "out"])
    _add(p, "seed", "random seed")
    _add(p, "shape", "C,H,W of the target map")
    _add(p, "levels", "pyramid levels fused")
    _add(p, "filter_threshold", "gate threshold")
    _add(p, "reversed", "reading of the reconstruction step", choices=["channel", "complement"])
    _add(p, "normalize_weights", "divide fusion weights by their per-pixel sum")
    _add(p, "out", "JSON output")
    p.set_defaults(func=cmd_fuse_demo)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        _resolve(args, args.config_keys)
        return args.func(args)
    except UsageError as exc:
        print(f"stomakit {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ComputationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except (StomakitError, OSError, UnicodeDecodeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main() -> None:
    sys.exit(run())
