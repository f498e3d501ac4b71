"""Command-line entry point: ``veinforge <command> [flags]``.

Exit codes: 0 success or accept, 1 biometric reject, 2 usage error,
3 runtime error. Results go to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import os
import sys
import traceback
import warnings
from pathlib import Path

from . import evaluation, manifest, modelstore, synthgen
from .errors import VeinForgeError
from .matching import Outcome, identify, verify
from .preprocess import MatchedFilterParams, PipelineConfig, preprocess_pipeline
from .raster import load_pgm, save_pgm
from .veinspace import EVALUATED_TAUS, extract_coordinates, probe_grid, project, residual, train

EXIT_OK, EXIT_REJECT, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3
SEED_ENV = "VEINFORGE_SEED"


class UsageError(Exception):
    pass


def warn(message: str) -> None:
    print(f"veinforge: warning: {message}", file=sys.stderr)


# --- typed flag parsers (range checks live here) ------------------------------


def _bounded(kind, lo=None, hi=None, lo_open=False):
    def parse(text):
        try:
            value = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected {kind.__name__}, got {text!r}")
        if lo is not None and (value < lo or (lo_open and value == lo)):
            raise argparse.ArgumentTypeError(f"{value} must be {'>' if lo_open else '>='} {lo}")
        if hi is not None and value > hi:
            raise argparse.ArgumentTypeError(f"{value} must be <= {hi}")
        return value

    parse.__name__ = kind.__name__
    return parse


pos_int = _bounded(int, 1)
nonneg_int = _bounded(int, 0)
pos_float = _bounded(float, 0.0, lo_open=True)
nonneg_float = _bounded(float, 0.0)
level = _bounded(int, 0, 255)
tau_value = _bounded(float, 0.0, 1.0, lo_open=True)
seed_value = _bounded(int, 0, 2**64 - 1)


def odd_window(text):
    value = _bounded(int, 3)(text)
    if value % 2 == 0:
        raise argparse.ArgumentTypeError(f"{value} must be odd")
    return value


def size_list(text):
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not sizes or min(sizes) < 2:
        raise argparse.ArgumentTypeError("sizes must be integers >= 2")
    return sizes


def threshold_value(text):
    if text == "eer":
        return None
    return _bounded(float, 0.0)(text)


# --- parser -------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _pipeline_flags(p):
    g = p.add_argument_group("pipeline")
    g.add_argument("--background-radius", type=pos_int, default=15)
    g.add_argument("--smoothing-sigma", type=pos_float, default=1.0)
    g.add_argument("--wiener-window", type=odd_window, default=5)
    g.add_argument("--mf-sigma", type=pos_float, default=2.0)
    g.add_argument("--mf-length", type=pos_int, default=9)
    g.add_argument("--mf-orientations", type=pos_int, default=12)
    g.add_argument("--no-matched-filter", action="store_true")
    g.add_argument("--threshold-mode", choices=["otsu", "fixed"], default="otsu")
    g.add_argument("--threshold-level", type=level, default=128)
    g.add_argument("--min-area", type=nonneg_int, default=50)
    g.add_argument("--prune-length", type=nonneg_int, default=8)
    g.add_argument("--hand-margin", type=nonneg_int, default=10)


def _pipeline_config(a) -> PipelineConfig:
    return PipelineConfig(
        background_se_radius=a.background_radius,
        smoothing_sigma=a.smoothing_sigma,
        wiener_window=a.wiener_window,
        matched_filter=MatchedFilterParams(
            a.mf_sigma, a.mf_length, a.mf_orientations, enabled=not a.no_matched_filter
        ),
        threshold_mode=a.threshold_mode,
        threshold_level=a.threshold_level,
        min_component_area=a.min_area,
        prune_length=a.prune_length,
        hand_margin=a.hand_margin,
    )


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="key=value defaults; flags win")
    common.add_argument("-v", "--verbose", action="store_true", help="tracebacks on errors")

    parser = _Parser(prog="veinforge", description="Dorsal hand vein recognition toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--subjects", type=pos_int, default=20)
    p.add_argument("--samples", type=pos_int, default=5)
    p.add_argument("--seed", type=seed_value, default=None)
    p.add_argument("--width", type=_bounded(int, 32), default=320)
    p.add_argument("--height", type=_bounded(int, 32), default=240)
    p.add_argument("--branch-depth", type=pos_int, default=4)
    p.add_argument("--branch-angle-jitter", type=nonneg_float, default=10.0)
    p.add_argument("--translation", type=_bounded(float, 0.0, 3.0), default=3.0)
    p.add_argument("--rotation", type=_bounded(float, 0.0, 2.0), default=2.0)
    p.add_argument("--noise", type=_bounded(float, 0.0, 8.0), default=6.0)
    p.add_argument("--vein-width", type=pos_float, default=4.0)

    p = sub.add_parser("preprocess", parents=[common], help="extract a vein skeleton")
    p.add_argument("--in", dest="input", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    _pipeline_flags(p)

    p = sub.add_parser("train", parents=[common], help="train a vein-space model")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--tau", type=tau_value, default=0.95)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--max-points", type=_bounded(int, 8), default=128)
    p.add_argument("--skeletons", action="store_true", help="manifest images are skeletons already")
    _pipeline_flags(p)

    for name, helptext in [
        ("enroll", "add a template to a model"),
        ("verify", "check a probe against a claimed identity"),
        ("identify", "find the nearest enrolled identity"),
    ]:
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--model", required=True, type=Path)
        p.add_argument("--in", dest="input", required=True, type=Path)
        if name != "identify":
            p.add_argument("--label", required=True)
        p.add_argument("--raw", action="store_true", help="input is a capture, not a skeleton")
        _pipeline_flags(p)

    p = sub.add_parser("eval", parents=[common], help="FAR/FRR per database size")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--method", choices=["qif", "pixel", "both"], default="qif")
    p.add_argument("--tau", type=tau_value, default=0.95)
    p.add_argument("--threshold", type=threshold_value, default=None,
                   help="distance threshold or 'eer' (default)")
    p.add_argument("--sizes", type=size_list, default=list(evaluation.DEFAULT_SIZES))
    p.add_argument("--report", required=True, type=Path)
    p.add_argument("--skeletons", action="store_true")
    p.add_argument("--no-figures", action="store_true")
    _pipeline_flags(p)

    p = sub.add_parser("bench", parents=[common], help="matching-time comparison")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--sizes", type=size_list, default=list(evaluation.DEFAULT_SIZES))
    p.add_argument("--repetitions", type=_bounded(int, 3), default=3)
    p.add_argument("--tau", type=tau_value, default=0.95)
    p.add_argument("--report", required=True, type=Path)
    p.add_argument("--skeletons", action="store_true")
    p.add_argument("--no-figures", action="store_true")
    _pipeline_flags(p)
    return parser


def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment; quotes are stripped."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"--config: cannot read {path}: {exc}")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"--config {path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value.strip("\"'")
    return out


def parse_args(argv):
    argv = list(argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    config = pre.parse_known_args(argv)[0].config
    command = next((t for t in argv if t in COMMANDS), None)
    if config and command:
        sub = parser._subparsers._group_actions[0].choices[command]
        known = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, value in read_config(config).items():
            action = known.get(key)
            if action is None or key in ("help", "config", "verbose"):
                raise UsageError(f"--config: unknown key {key!r} for {command}")
            if action.nargs == 0:
                defaults[key] = value.lower() in ("1", "true", "yes", "on")
            else:
                defaults[key] = value  # converted and range-checked by the flag's type
            action.required = False
        sub.set_defaults(**defaults)
    return parser.parse_args(argv)


# --- commands -----------------------------------------------------------------


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return seed_value(env)
        except argparse.ArgumentTypeError as exc:
            raise UsageError(f"{SEED_ENV}: {exc}")
    return 42


def cmd_synth(a) -> int:
    spec = synthgen.SynthSpec(
        width=a.width,
        height=a.height,
        n_subjects=a.subjects,
        samples_per_subject=a.samples,
        branch_depth=a.branch_depth,
        branch_angle_jitter=a.branch_angle_jitter,
        within_subject_jitter=synthgen.Jitter(a.translation, a.rotation, a.noise),
        vein_width=a.vein_width,
        seed=_seed(a),
    )
    path = synthgen.write_dataset(synthgen.gen_dataset(spec), a.out)
    print(f"wrote {spec.n_subjects * spec.samples_per_subject} images (seed {spec.seed}) -> {path}")
    return EXIT_OK


def cmd_preprocess(a) -> int:
    skel = preprocess_pipeline(load_pgm(a.input), _pipeline_config(a))
    save_pgm(skel.to_gray(), a.out)
    print(f"skeleton with {skel.count()} pixels -> {a.out}")
    return EXIT_OK


def _dataset(a):
    return manifest.load_dataset(a.manifest, raw=not a.skeletons, cfg=_pipeline_config(a))


def cmd_train(a) -> int:
    if a.tau not in EVALUATED_TAUS:
        warn(f"tau={a.tau:g}: the method is evaluated at 0.9 and 0.95")
    data = _dataset(a)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = train([(s.label, s.coords) for s in data], tau=a.tau, max_points=a.max_points)
    modelstore.save_model(model, a.out)
    print(
        f"trained M={model.dims.M} N={model.dims.N} K={model.K} on {len(data)} images, "
        f"theta_vein={model.theta_vein:.6g} theta_id={model.theta_id:.6g} -> {a.out}"
    )
    return EXIT_OK


def _probe(a, model):
    skel = manifest.load_skeleton(a.input, raw=a.raw, cfg=_pipeline_config(a))
    return probe_grid(model, extract_coordinates(skel))


def cmd_enroll(a) -> int:
    model = modelstore.load_model(a.model)
    grid = _probe(a, model)
    score = residual(grid, model.mean, basis=model.basis)
    if score > model.theta_vein:
        print(f"REJECT not-a-vein score={score:.6g} threshold={model.theta_vein:.6g}")
        return EXIT_REJECT
    model = model.enroll(a.label, project(grid, model.mean, model.eigenveins))
    modelstore.save_model(model, a.model)
    print(f"ENROLLED label={a.label} templates={len(model.templates)}")
    return EXIT_OK


def _report(decision) -> int:
    if decision.outcome is Outcome.ACCEPTED:
        print(f"ACCEPT label={decision.best_label} distance={decision.distance:.6g}")
        return EXIT_OK
    if decision.outcome is Outcome.REJECTED_NOT_A_VEIN:
        print(f"REJECT not-a-vein score={decision.vein_score:.6g}")
    else:
        print(f"REJECT label={decision.best_label} distance={decision.distance:.6g}")
    return EXIT_REJECT


def cmd_verify(a) -> int:
    model = modelstore.load_model(a.model)
    return _report(verify(model, _probe(a, model), a.label))


def cmd_identify(a) -> int:
    model = modelstore.load_model(a.model)
    return _report(identify(model, _probe(a, model)))


def _sibling(report: Path, suffix: str, ext: str) -> Path:
    return report.with_name(f"{report.stem}{suffix}{ext}")


def cmd_eval(a) -> int:
    from . import plotting

    data = _dataset(a)
    methods = ["pixel", "qif"] if a.method == "both" else [a.method]
    reports = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for m in methods:
            reports.append(evaluation.run_experiment(data, m, a.tau, a.sizes, a.threshold))
    a.report.parent.mkdir(parents=True, exist_ok=True)
    for m, rep in zip(methods, reports):
        path = a.report if len(methods) == 1 else _sibling(a.report, f"_{m}", a.report.suffix)
        evaluation.emit_csv(rep, path)
        print(f"{rep.method}: EER={rep.eer:.4f} threshold={rep.threshold:.6g} -> {path}")
        for row in rep.rows:
            print(f"  n={row.n_images:4d}  FAR={row.far:.4f}  FRR={row.frr:.4f}")
    evaluation.emit_summary(reports, _sibling(a.report, "_summary", ".csv"))
    if not a.no_figures:
        plotting.plot_error_curves(reports, _sibling(a.report, "_sweep", ".png"))
        plotting.plot_rates_by_size(reports, _sibling(a.report, "_rates", ".png"))
    return EXIT_OK


def cmd_bench(a) -> int:
    from . import plotting

    data = _dataset(a)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        table = evaluation.bench_timing(data, a.sizes, a.repetitions, a.tau)
    a.report.parent.mkdir(parents=True, exist_ok=True)
    evaluation.emit_csv(table, a.report)
    for r in table.rows:
        print(
            f"n={r.n_images:4d}  pixel={r.pixel_seconds:.3f}s  qif={r.qif_seconds:.3f}s  "
            f"speedup={r.speedup:.2f}  op-ratio={r.op_ratio:.1f}"
        )
    if not a.no_figures:
        plotting.plot_timing(table, _sibling(a.report, "", ".png"))
    print(f"-> {a.report}")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "enroll": cmd_enroll,
    "verify": cmd_verify,
    "identify": cmd_identify,
    "eval": cmd_eval,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    args = None
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    except (VeinForgeError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        if args is not None and args.verbose:
            traceback.print_exc()
        return EXIT_RUNTIME
