"""Command-line interface.

Subcommands: synth, evaluate, sweep-landmarks, sweep-cases, sensitivity.
A JSON config file may supply any long-option value (keys use underscores);
explicit flags win over the config file. Exit codes: 0 success, 2 usage
error, 3 data or geometry error, 4 numerical conditioning error.
"""

import argparse
import json
import sys

from .errors import ConditioningError, LungDeformError
from .pipeline import RunConfig, run_evaluate, run_sensitivity, run_sweep_cases, run_sweep_landmarks
from .synthgen import GeneratorParams, generate_cohort

BoolFlag = argparse.BooleanOptionalAction


def _csv_list(cast):
    def parse(text):
        return tuple(cast(tok) for tok in text.split(",") if tok)

    return parse


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lungdeform",
        description="Estimate deflated lung surfaces from a few landmarks "
        "(kernel ridge regression with affine/TPS baselines).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with default option values")
        p.add_argument("--seed", type=int)
        p.add_argument("--lobes", type=_csv_list(str), metavar="upper,lower")

    synth = sub.add_parser("synth", help="generate a synthetic cohort")
    common(synth)
    synth.add_argument("--out", required=True, help="output cohort directory")
    synth.add_argument("--cases", type=int, help="number of cases (default 9)")
    synth.add_argument("--vertices", type=int, help="vertices per lobe (default 400)")
    synth.add_argument("--volume-ratio", type=float, dest="volume_ratio")
    synth.add_argument("--bend", type=float, dest="bend_strength")
    synth.add_argument("--shape-perturbation", type=float, dest="shape_perturbation")

    def eval_common(p):
        common(p)
        p.add_argument("--manifest", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--ordering", choices=["experiment1", "experiment2"])
        p.add_argument("--landmarks", type=int, dest="landmark_count")
        p.add_argument("--methods", type=_csv_list(str), metavar="kernel,affine,tps")
        p.add_argument("--augment", action=BoolFlag, default=None,
                       help="midpoint-interpolate training pairs")
        p.add_argument("--volume-ratio", type=float, dest="volume_ratio",
                       help="assumed deflated/inflated ratio at prediction time")
        p.add_argument("--dsc-spacing", type=float, dest="dsc_spacing")
        p.add_argument("--ka", type=float, dest="k_a")
        p.add_argument("--kb", type=float, dest="k_b",
                       help="bandwidth; default is the median heuristic")
        p.add_argument("--lam", type=float)
        p.add_argument("--grid-search", action=BoolFlag, default=None,
                       dest="grid_search")
        p.add_argument("--ka-grid", type=_csv_list(float), dest="ka_grid")
        p.add_argument("--kb-grid", type=_csv_list(float), dest="kb_grid")
        p.add_argument("--lam-grid", type=_csv_list(float), dest="lam_grid")
        p.add_argument("--cv-folds", type=int, dest="cv_folds")

    evaluate = sub.add_parser("evaluate", help="leave-one-out metric table")
    eval_common(evaluate)
    evaluate.add_argument("--error-maps", action=BoolFlag, default=None,
                          dest="error_maps")

    sweep_lm = sub.add_parser("sweep-landmarks",
                              help="accuracy versus landmark count")
    eval_common(sweep_lm)
    sweep_lm.add_argument("--counts", type=_csv_list(int), dest="sweep_counts")
    sweep_lm.add_argument("--orderings", type=_csv_list(str), dest="sweep_orderings")
    sweep_lm.add_argument("--with-dsc", action=BoolFlag, default=None,
                          dest="with_dsc_in_sweeps")

    sweep_cases = sub.add_parser("sweep-cases",
                                 help="accuracy versus training-case count")
    eval_common(sweep_cases)
    sweep_cases.add_argument("--counts", type=_csv_list(int), dest="case_counts")
    sweep_cases.add_argument("--models", type=_csv_list(int), dest="case_models")
    sweep_cases.add_argument("--max-combos", type=int, dest="max_combos")
    sweep_cases.add_argument("--with-dsc", action=BoolFlag, default=None,
                             dest="with_dsc_in_sweeps")

    sens = sub.add_parser("sensitivity",
                          help="measurement-error amplification statistics")
    eval_common(sens)
    sens.add_argument("--ply", action=BoolFlag, default=None, dest="sensitivity_ply")

    return parser


def _merge_options(args):
    """Config-file values under CLI values under nothing: only keys the user
    actually provided are returned."""
    merged = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            merged.update(json.load(fh))
    for key, value in vars(args).items():
        if key in ("command", "config"):
            continue
        if value is not None:
            merged[key] = value
    return merged


def _cmd_synth(options):
    cases = int(options.pop("cases", 9))
    if cases < 1:
        raise ValueError("--cases must be at least 1")
    out = options.pop("out")
    lobes = tuple(options.pop("lobes", ("upper", "lower")))
    params = GeneratorParams(
        seed=int(options.pop("seed", 0)),
        vertex_count=int(options.pop("vertices", 400)),
        target_volume_ratio=float(options.pop("volume_ratio", 0.60)),
        bend_strength=float(options.pop("bend_strength", 0.25)),
        shape_perturbation=float(options.pop("shape_perturbation", 0.08)),
    )
    if options:
        raise ValueError(f"unknown synth options: {sorted(options)}")
    manifest = generate_cohort(params, cases, out, lobes=lobes)
    print(manifest)
    return 0


def _run_config(options):
    kwargs = {
        "manifest_path": options.pop("manifest"),
        "out_dir": options.pop("out"),
    }
    if "lobes" in options:
        kwargs["lobes"] = tuple(options.pop("lobes"))
    for key in list(options):
        if key in RunConfig.__dataclass_fields__:
            kwargs[key] = options.pop(key)
    if options:
        raise ValueError(f"unknown options: {sorted(options)}")
    return RunConfig(**kwargs)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        options = _merge_options(args)
        if args.command == "synth":
            return _cmd_synth(options)
        cfg = _run_config(options)
        runner = {
            "evaluate": run_evaluate,
            "sweep-landmarks": run_sweep_landmarks,
            "sweep-cases": run_sweep_cases,
            "sensitivity": run_sensitivity,
        }[args.command]
        print(runner(cfg))
        return 0
    except ConditioningError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (LungDeformError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
