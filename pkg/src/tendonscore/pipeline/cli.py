"""Command-line interface.

Exit status: 0 on success, 1 on validation errors (bad input, bad flags),
2 on numerical failures (degenerate variance, singular regression).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .. import kernels
from ..decomposition import FeatureMatrix, explained_variance_ratio, pca_fit, save_pcam
from ..errors import NumericalError, PipelineError, TendonScoreError
from ..metric import (DEFAULT_TRIM, healing_curve, healing_delta, read_scores_csv, score_studies,
                      write_curves_csv, write_scores_csv)
from ..protocols import PROTOCOLS, REGRESSION_TARGETS, SURVEY_PARAMS, protocol_order
from ..regression import load_model
from ..stats import (DEFAULT_ALPHA, STRATEGIES, CorrelationReport, correlate_with_ground_truth,
                     interprotocol_matrix, read_surveys_csv, select_protocol_pair)
from .folds import HeadConfig, crossval_classify
from .manifest import load_manifest, load_protocol_features, reference_masks
from .run import (RunConfig, aligned_series, extract_features, load_models_dir, regress_targets,
                  run_pipeline)
from .synth import SHAPES, generate_synthetic_cohort

log = logging.getLogger("tendonscore")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _protocol_list(text):
    names = [t for t in text.replace(",", " ").split() if t]
    bad = [n for n in names if n not in PROTOCOLS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown protocol(s) {bad}; choose from {', '.join(PROTOCOLS)}")
    return tuple(protocol_order(names))


def _global_flags(parser, suppress):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    g = parser.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=d(0), help="RNG seed (default 0)")
    g.add_argument("--trim", type=float, default=d(DEFAULT_TRIM),
                   help="trimmed-mean fraction per tail (default 0.025)")
    g.add_argument("--alpha", type=float, default=d(DEFAULT_ALPHA),
                   help="two-tailed significance level (default 0.01)")
    g.add_argument("--protocols", type=_protocol_list, default=d(None),
                   help="comma-separated protocol subset")
    g.add_argument("--out-dir", type=Path, default=d(Path(".")), help="output directory")
    g.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser():
    parser = _Parser(prog="tendonscore", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, help_):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        return p

    p = cmd("synth", "generate a synthetic cohort")
    p.add_argument("--patients", type=int, default=10)
    p.add_argument("--healthy", type=int, default=4)
    p.add_argument("--slices", type=int, default=40, help="slices per study")
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--shape", choices=SHAPES, default="exponential-decay")
    p.add_argument("--feature-dim", type=int, default=4096)
    p.add_argument("--outlier-fraction", type=float, default=0.025)

    p = cmd("extract", "run the CNN over slice images listed in a manifest")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--weights", type=Path, required=True, help="CNNW weight file")
    p.add_argument("--backend", choices=kernels.available_backends(), default=None)

    p = cmd("pca-fit", "fit PCA models per protocol")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--pooled", action="store_true", help="one model over all protocols")

    p = cmd("score", "compute H for every study")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--models", type=Path, required=True, help="directory of .pcam files")
    p.add_argument("--absolute-trim", action="store_true",
                   help="read --trim as a slice count per tail")

    p = cmd("curves", "patient-averaged healing curves and deltas")
    p.add_argument("--scores", type=Path, required=True)
    p.add_argument("--manifest", type=Path, help="restrict to injured patients of this cohort")

    p = cmd("correlate", "correlate H with survey scores")
    p.add_argument("--scores", type=Path, required=True)
    p.add_argument("--surveys", type=Path, required=True)
    p.add_argument("--manifest", type=Path)
    p.add_argument("--interprotocol", action="store_true", help="also write the protocol x protocol matrix")

    p = cmd("select", "choose a protocol pair from an inter-protocol matrix")
    p.add_argument("--matrix", type=Path, required=True, help="interprotocol.json")
    p.add_argument("--ground-truth", type=Path, help="ground_truth.json for significance counts")
    p.add_argument("--strategy", choices=STRATEGIES, default="redundancy-prune")
    p.add_argument("--threshold", type=float, default=0.95)

    p = cmd("regress", "fit survey parameters from a protocol pair")
    p.add_argument("--scores", type=Path, required=True)
    p.add_argument("--surveys", type=Path, required=True)
    p.add_argument("--pair", nargs=2, required=True, metavar="PROTOCOL")
    p.add_argument("--manifest", type=Path)
    p.add_argument("--targets", nargs="+", choices=SURVEY_PARAMS, default=list(REGRESSION_TARGETS))
    p.add_argument("--clamp", action="store_true", help="clamp predictions to [1, 5]")

    p = cmd("crossval", "k-fold healthy/injured classification of fc6 features")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--slices-per-study", type=int, default=4,
                   help="subsample this many slices per study (0 = all)")

    p = cmd("run", "full pipeline")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--weights", type=Path)
    p.add_argument("--strategy", choices=STRATEGIES, default="redundancy-prune")
    p.add_argument("--threshold", type=float, default=0.95)
    p.add_argument("--pair", nargs=2, metavar="PROTOCOL")
    p.add_argument("--pooled", action="store_true")
    p.add_argument("--absolute-trim", action="store_true")
    p.add_argument("--keep-non-decreasing", action="store_true",
                   help="do not drop protocols whose H fails to fall")
    p.add_argument("--top", type=int, default=4, help="protocols entering the inter-protocol study")
    p.add_argument("--clamp", action="store_true")

    p = cmd("report", "print the tables of a finished run")
    p.add_argument("--run-dir", type=Path, required=True)
    return parser


def _injured(args):
    if getattr(args, "manifest", None) is None:
        return None
    return set(load_manifest(args.manifest).patient_ids("injured"))


def _filter_injured(scores, injured):
    if injured is None:
        # without a manifest, single-timestep patients are taken as healthy
        steps = {}
        for s in scores:
            steps.setdefault(s.patient, set()).add(s.timestep)
        injured = {p for p, ts in steps.items() if len(ts) > 1}
    return [s for s in scores if s.patient in injured], injured


def _protocols_of(scores, args):
    present = protocol_order({s.protocol for s in scores})
    return [p for p in present if not args.protocols or p in args.protocols]


def cmd_synth(args):
    m = generate_synthetic_cohort(args.out_dir, args.seed, args.patients,
                                  args.protocols or PROTOCOLS, args.noise, args.shape,
                                  args.healthy, args.slices, args.feature_dim, args.outlier_fraction)
    print(f"wrote {len(m.patients)} patients x {len(m.protocols)} protocols to {args.out_dir}/manifest.json")


def cmd_extract(args):
    manifest = load_manifest(args.manifest)
    out = extract_features(manifest, args.weights, args.out_dir, args.backend).absolute()
    out.save(Path(args.out_dir) / "manifest.json")
    print(f"features written under {args.out_dir}/features")


def cmd_pca_fit(args):
    manifest = load_manifest(args.manifest)
    protocols = protocol_order(args.protocols or manifest.protocols)
    d = Path(args.out_dir) / "pca"
    d.mkdir(parents=True, exist_ok=True)
    feats = {p: load_protocol_features(manifest, p) for p in protocols}
    if args.pooled:
        allf = FeatureMatrix.concatenate(list(feats.values()))
        fits = {"pooled": (allf, reference_masks(allf, manifest))}
    else:
        fits = {p: (f, reference_masks(f, manifest)) for p, f in feats.items()}
    for name, (f, (inj, hea)) in fits.items():
        model = pca_fit(f, args.k, inj, hea, seed=args.seed)
        save_pcam(d / f"{name}.pcam", model)
        ratios = ", ".join(f"{explained_variance_ratio(model, m):.3f}" for m in range(1, model.k + 1))
        print(f"{name:13s} n={len(f):6d} cumulative explained variance: {ratios}")


def cmd_score(args):
    manifest = load_manifest(args.manifest)
    protocols = protocol_order(args.protocols or manifest.protocols)
    models = load_models_dir(args.models, protocols)
    scores = []
    for p in protocols:
        scores.extend(score_studies(load_protocol_features(manifest, p), models[p],
                                    args.trim, args.absolute_trim))
    Path(args.out_dir).mkdir(parents=True, exist_ok=True)
    write_scores_csv(Path(args.out_dir) / "scores.csv", scores)
    print(f"scored {len(scores)} studies -> {args.out_dir}/scores.csv")


def cmd_curves(args):
    scores, _ = _filter_injured(read_scores_csv(args.scores), _injured(args))
    curves = [healing_curve(scores, p) for p in _protocols_of(scores, args)]
    Path(args.out_dir).mkdir(parents=True, exist_ok=True)
    write_curves_csv(Path(args.out_dir) / "curves.csv", curves)
    for c in curves:
        d = healing_delta(c)
        print(f"{c.protocol:13s} delta H = {d:+.4f}{'' if d < 0 else '  (no decrease)'}")


def cmd_correlate(args):
    scores, injured = _filter_injured(read_scores_csv(args.scores), _injured(args))
    surveys = read_surveys_csv(args.surveys)
    protocols = _protocols_of(scores, args)
    h, g, ts = aligned_series(scores, surveys, protocols, injured, SURVEY_PARAMS)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gt = correlate_with_ground_truth(h, g, args.alpha)
    gt.to_json(out / "ground_truth.json")
    gt.to_csv(out / "ground_truth.csv")
    print(gt.render())
    if args.interprotocol:
        inter = interprotocol_matrix(h, args.alpha)
        inter.to_json(out / "interprotocol.json")
        inter.to_csv(out / "interprotocol.csv")
        print()
        print(inter.render())


def cmd_select(args):
    matrix = CorrelationReport.from_json(args.matrix)
    counts = CorrelationReport.from_json(args.ground_truth).significant_counts() if args.ground_truth else None
    pair = select_protocol_pair(matrix, args.strategy, counts, args.threshold)
    r = matrix.value(*pair)
    Path(args.out_dir).mkdir(parents=True, exist_ok=True)
    with open(Path(args.out_dir) / "selection.json", "w") as fh:
        json.dump({"pair": list(pair), "r": r, "strategy": args.strategy}, fh, indent=2)
        fh.write("\n")
    print(f"{pair[0]} {pair[1]} (r = {r:.4f}, strategy {args.strategy})")


def cmd_regress(args):
    for p in args.pair:
        _protocol_list(p)
    scores, injured = _filter_injured(read_scores_csv(args.scores), _injured(args))
    surveys = read_surveys_csv(args.surveys)
    pair = tuple(args.pair)
    h, g, ts = aligned_series(scores, surveys, pair, injured, tuple(args.targets))
    res = regress_targets(h, g, pair, ts, args.out_dir, args.clamp)
    for param, r in res.items():
        print(f"{param:5s} in-sample mse {r['in_sample']['mse']:.4f} max|err| {r['in_sample']['max_abs_error']:.4f}"
              f" | leave-one-timestep-out mse {r['leave_one_timestep_out']['mse']:.4f}"
              f" max|err| {r['leave_one_timestep_out']['max_abs_error']:.4f}")


def cmd_crossval(args):
    manifest = load_manifest(args.manifest)
    groups = manifest.groups()
    rng = np.random.default_rng(args.seed)
    xs, ys, ps = [], [], []
    for protocol in protocol_order(args.protocols or manifest.protocols):
        f = load_protocol_features(manifest, protocol)
        for patient, _, t in f.studies():
            idx = np.flatnonzero(f.mask(patient, protocol, t))
            if args.slices_per_study and idx.size > args.slices_per_study:
                idx = np.sort(rng.choice(idx, args.slices_per_study, replace=False))
            xs.append(f.data[idx])
            ys.extend([1 if groups[patient] == "injured" else 0] * idx.size)
            ps.extend([patient] * idx.size)
    cfg = HeadConfig(args.epochs, args.lr, args.hidden, args.seed)
    res = crossval_classify(np.concatenate(xs), np.array(ys), np.array(ps), args.k, args.seed, cfg,
                            {p: int(g == "injured") for p, g in groups.items()})
    Path(args.out_dir).mkdir(parents=True, exist_ok=True)
    with open(Path(args.out_dir) / "crossval.json", "w") as fh:
        json.dump(res.to_dict(), fh, indent=2)
        fh.write("\n")
    print("Average   Min     Max     SD")
    print(f"{res.average:<9.2f} {res.min:<7.2f} {res.max:<7.2f} {res.sd:.2f}")


def cmd_run(args):
    cfg = RunConfig(seed=args.seed, trim=args.trim, absolute_trim=args.absolute_trim, alpha=args.alpha,
                    protocols=args.protocols, pooled_pca=args.pooled,
                    exclude_non_decreasing=not args.keep_non_decreasing, top_protocols=args.top,
                    strategy=args.strategy, redundancy_threshold=args.threshold,
                    pair=tuple(args.pair) if args.pair else None, clamp=args.clamp,
                    weights=str(args.weights) if args.weights else None)
    summary = run_pipeline(args.manifest, args.out_dir, cfg)
    print(f"run complete: pair {summary['selected_pair']}, summary at {args.out_dir}/summary.json")


def cmd_report(args):
    d = args.run_dir
    summary = json.loads((d / "summary.json").read_text())
    print(f"cohort: {summary['cohort']['injured']} injured, {summary['cohort']['healthy']} healthy")
    print("\nhealing delta (last - first timestep):")
    for p, v in summary["healing_delta"].items():
        flag = "" if p in summary["decreasing_protocols"] else "  excluded"
        print(f"  {p:13s} {v:+.4f}{flag}")
    print("\nH vs survey scores:")
    print(CorrelationReport.from_json(d / "ground_truth.json").render())
    print("\ninter-protocol:")
    print(CorrelationReport.from_json(d / "interprotocol.json").render())
    print(f"\nselected pair: {' + '.join(summary['selected_pair'])} ({summary['selection_strategy']})")
    print("\nregression:")
    for param, r in summary["regression"].items():
        m = load_model(d / "regression" / f"{param}.json")
        coefs = " ".join(f"{c:+.4f}*{p}" for c, p in zip(m.coefficients, m.predictor_protocols))
        print(f"  {param:5s} = {m.intercept:+.4f} {coefs}")
        print(f"        in-sample mse {r['in_sample']['mse']:.4f}, max|err| {r['in_sample']['max_abs_error']:.4f};"
              f" leave-one-timestep-out mse {r['leave_one_timestep_out']['mse']:.4f},"
              f" max|err| {r['leave_one_timestep_out']['max_abs_error']:.4f}")


COMMANDS = {
    "synth": cmd_synth, "extract": cmd_extract, "pca-fit": cmd_pca_fit, "score": cmd_score,
    "curves": cmd_curves, "correlate": cmd_correlate, "select": cmd_select, "regress": cmd_regress,
    "crossval": cmd_crossval, "run": cmd_run, "report": cmd_report,
}


def _exit_code(exc):
    cause = exc.cause if isinstance(exc, PipelineError) else exc
    return EXIT_NUMERICAL if isinstance(cause, (NumericalError, np.linalg.LinAlgError)) else EXIT_VALIDATION


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (TendonScoreError, np.linalg.LinAlgError) as exc:
        print(f"tendonscore {args.command}: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except (OSError, ValueError) as exc:
        print(f"tendonscore {args.command}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
