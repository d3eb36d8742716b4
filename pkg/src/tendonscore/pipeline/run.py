"""End-to-end pipeline: features -> PCA -> H -> curves -> correlations -> regression.

Every stage writes its product into the run directory in the same on-disk
formats the standalone subcommands read, so a stage can be rerun alone.
A failing stage leaves a ``FAILED`` marker naming it.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..cnn import FeatureExtractor, load_weights
from ..decomposition import (FeatureMatrix, explained_variance_ratio, load_pcam, pca_fit,
                             save_fmat, save_pcam)
from ..errors import DomainError, PipelineError, ValidationError
from ..imaging import dataset_mean, load_slice, prepare
from ..metric import (DEFAULT_TRIM, healing_curve, healing_delta, read_scores_csv, score_studies,
                      write_curves_csv, write_scores_csv)
from ..protocols import N_TIMESTEPS, REGRESSION_TARGETS, WEEKS, protocol_order
from ..regression import evaluate, leave_one_out, ols_fit, save_model, write_report_csv
from ..stats import (DEFAULT_ALPHA, correlate_with_ground_truth, interprotocol_matrix,
                     read_surveys_csv, select_protocol_pair, survey_means)
from .manifest import (CohortManifest, Patient, Study, load_manifest, load_protocol_features,
                       reference_masks)

log = logging.getLogger(__name__)

SUMMARY_SCHEMA = "tendonscore.summary/1"


@dataclass
class RunConfig:
    seed: int = 0
    trim: float = DEFAULT_TRIM
    absolute_trim: bool = False
    alpha: float = DEFAULT_ALPHA
    protocols: tuple | None = None
    pooled_pca: bool = False
    exclude_non_decreasing: bool = True
    top_protocols: int = 4
    strategy: str = "redundancy-prune"
    redundancy_threshold: float = 0.95
    targets: tuple = REGRESSION_TARGETS
    pair: tuple | None = None
    clamp: bool = False
    weights: str | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["protocols"] = list(self.protocols) if self.protocols else None
        d["targets"] = list(self.targets)
        d["pair"] = list(self.pair) if self.pair else None
        d["weights"] = Path(self.weights).name if self.weights else None
        return d


def extract_features(manifest, weights_path, out_dir, backend=None):
    """Run the feature extractor over every slice-backed study.

    Writes ``features/<protocol>.fmat`` under ``out_dir`` and returns a
    manifest whose studies point at those files.
    """
    pending = [(p, s) for p in manifest.patients for s in p.studies if s.features is None]
    if not pending:
        return manifest
    if weights_path is None:
        raise ValidationError("studies reference slice images but no network weights were given")
    extractor = FeatureExtractor(load_weights(weights_path), backend=backend)
    slices = {}
    for p, s in pending:
        slices[(p.id, s.protocol, s.timestep)] = [
            load_slice(manifest.resolve(rel), depth_index=i) for i, rel in enumerate(s.slices)
        ]
    mean = dataset_mean([im for ims in slices.values() for im in ims])
    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    per_protocol = {}
    for (pid, protocol, t), ims in slices.items():
        feats = extractor.batch([prepare(im, mean) for im in ims])
        per_protocol.setdefault(protocol, []).append(
            FeatureMatrix.from_rows(feats, [pid] * len(ims), [protocol] * len(ims), [t] * len(ims),
                                    [im.depth_index for im in ims]))
    for protocol, parts in per_protocol.items():
        save_fmat(out / "features" / f"{protocol}.fmat", FeatureMatrix.concatenate(parts))
    patients = []
    for p in manifest.patients:
        studies = tuple(
            s if s.features is not None
            else Study(s.protocol, s.timestep, str((out / "features" / f"{s.protocol}.fmat").resolve()))
            for s in p.studies)
        patients.append(Patient(p.id, p.group, studies))
    return CohortManifest(patients, manifest.surveys, manifest.root)


def fit_models(manifest, protocols, out_dir, pooled=False, seed=0):
    """Fit one PCA model per protocol (or one pooled model). Returns {protocol: model}."""
    pca_dir = Path(out_dir) / "pca"
    pca_dir.mkdir(parents=True, exist_ok=True)
    cache = {}
    feats = {p: load_protocol_features(manifest, p, cache=cache) for p in protocols}
    models = {}
    if pooled:
        allf = FeatureMatrix.concatenate([feats[p] for p in protocols])
        inj, hea = reference_masks(allf, manifest)
        model = pca_fit(allf, 1, inj, hea, seed=seed)
        save_pcam(pca_dir / "pooled.pcam", model)
        models = {p: model for p in protocols}
    else:
        for p in protocols:
            inj, hea = reference_masks(feats[p], manifest)
            models[p] = pca_fit(feats[p], 1, inj, hea, seed=seed)
            save_pcam(pca_dir / f"{p}.pcam", models[p])
    return models, feats


def mean_series(scores, protocol, patients):
    """Patient-averaged H per timestep for ``protocol`` (NaN where absent)."""
    acc = {t: [] for t in range(N_TIMESTEPS)}
    for s in scores:
        if s.protocol == protocol and s.patient in patients:
            acc[s.timestep].append(s.h_value)
    return np.array([math.fsum(v) / len(v) if v else np.nan for v in acc.values()])


def aligned_series(scores, surveys, protocols, patients, params):
    """Patient-averaged H and survey series restricted to commonly observed timesteps."""
    h = {p: mean_series(scores, p, patients) for p in protocols}
    g = {q: survey_means(surveys, q, patients) for q in params}
    ok = np.ones(N_TIMESTEPS, dtype=bool)
    for v in list(h.values()) + list(g.values()):
        ok &= ~np.isnan(v)
    ts = tuple(int(t) for t in np.flatnonzero(ok))
    return ({p: v[ok] for p, v in h.items()}, {q: v[ok] for q, v in g.items()}, ts)


def regress_targets(h, g, pair, timesteps, out_dir, clamp=False):
    """Fit and evaluate one two-predictor model per survey parameter."""
    out = Path(out_dir)
    (out / "regression").mkdir(parents=True, exist_ok=True)
    x = np.column_stack([h[p] for p in pair])
    results = {}
    for param, y in g.items():
        model = ols_fit(x, y, param, pair)
        ins = evaluate(model, x, y, clamp, labels=timesteps)
        loo = leave_one_out(x, y, param, pair, clamp, labels=timesteps)
        save_model(out / "regression" / f"{param}.json", model)
        write_report_csv(out / "regression" / f"{param}_in_sample.csv", ins)
        write_report_csv(out / "regression" / f"{param}_leave_one_timestep_out.csv", loo)
        with open(out / "regression" / f"{param}_plot.csv", "w") as fh:
            fh.write("timestep,week,actual,predicted_in_sample,predicted_leave_one_out\n")
            for t, a, pi, pl in zip(timesteps, ins.actual, ins.predicted, loo.predicted):
                fh.write(f"{t},{WEEKS[t]},{a!r},{float(pi)!r},{float(pl)!r}\n")
        results[param] = {"model": model.to_dict(), "in_sample": ins.to_dict(),
                          "leave_one_timestep_out": loo.to_dict()}
    return results


class _Stages:
    def __init__(self, out_dir):
        self.out = Path(out_dir)
        self.done = []

    def run(self, name, fn, *args, **kwargs):
        log.info("stage %s", name)
        try:
            result = fn(*args, **kwargs)
        except Exception as exc:
            (self.out / "FAILED").write_text(f"{name}: {type(exc).__name__}: {exc}\n")
            raise PipelineError(name, exc) from exc
        self.done.append(name)
        return result


def run_pipeline(manifest, out_dir, config=None):
    """Execute every stage and write ``summary.json``; returns the summary dict."""
    config = config or RunConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for stale in ("FAILED", "summary.json"):
        (out / stale).unlink(missing_ok=True)
    st = _Stages(out)

    if not isinstance(manifest, CohortManifest):
        manifest = st.run("manifest", load_manifest, manifest)
    manifest = st.run("extract", extract_features, manifest, config.weights, out)
    protocols = protocol_order(config.protocols or manifest.protocols)
    missing = set(protocols) - set(manifest.protocols)
    if missing:
        st.run("manifest", _raise, ValidationError(f"protocols not in manifest: {sorted(missing)}"))

    models, feats = st.run("pca-fit", fit_models, manifest, protocols, out, config.pooled_pca, config.seed)
    injured = set(manifest.patient_ids("injured"))

    def score():
        scores = []
        for p in protocols:
            scores.extend(score_studies(feats[p], models[p], config.trim, config.absolute_trim))
        write_scores_csv(out / "scores.csv", scores)
        return read_scores_csv(out / "scores.csv")

    scores = st.run("score", score)

    def curves():
        cs = [healing_curve([s for s in scores if s.patient in injured], p) for p in protocols]
        write_curves_csv(out / "curves.csv", cs)
        return cs, {c.protocol: healing_delta(c) for c in cs}

    curve_list, deltas = st.run("curves", curves)
    trend = [p for p in protocols if deltas[p] < 0] if config.exclude_non_decreasing else list(protocols)
    excluded = [p for p in protocols if p not in trend]

    def correlate():
        if manifest.surveys is None:
            raise ValidationError("manifest lists no survey file")
        surveys = read_surveys_csv(manifest.resolve(manifest.surveys))
        h, g, ts = aligned_series(scores, surveys, trend, injured, ("SCT", "TT", "STE", "TE", "TU", "TisE"))
        gt = correlate_with_ground_truth(h, g, config.alpha)
        gt.to_json(out / "ground_truth.json")
        gt.to_csv(out / "ground_truth.csv")
        counts = gt.significant_counts()
        ranked = sorted(trend, key=lambda p: (-counts[p], protocol_order(trend).index(p)))
        best = protocol_order(ranked[:max(2, config.top_protocols)])
        inter = interprotocol_matrix({p: h[p] for p in best}, config.alpha)
        inter.to_json(out / "interprotocol.json")
        inter.to_csv(out / "interprotocol.csv")
        return surveys, gt, inter, ts

    if len(trend) < 2:
        st.run("correlate", _raise, DomainError(f"need two decreasing protocols, have {trend}"))
    surveys, gt, inter, ts = st.run("correlate", correlate)

    def select():
        if config.pair:
            return tuple(config.pair)
        return select_protocol_pair(inter, config.strategy, gt.significant_counts(),
                                    config.redundancy_threshold)

    pair = st.run("select", select)

    def regress():
        h, g, rts = aligned_series(scores, surveys, pair, injured, config.targets)
        return regress_targets(h, g, pair, rts, out, config.clamp)

    regression = st.run("regress", regress)

    summary = {
        "schema": SUMMARY_SCHEMA,
        "status": "ok",
        "config": config.to_dict(),
        "cohort": {"patients": len(manifest.patients), "injured": len(injured),
                   "healthy": len(manifest.patient_ids("healthy")), "protocols": list(protocols)},
        "stages": st.done,
        "pca": {p: {"pc1_explained_variance_ratio": explained_variance_ratio(models[p], 1),
                    "sign_anchor": models[p].sign_anchor} for p in protocols},
        "healing_delta": {p: deltas[p] for p in protocols},
        "decreasing_protocols": trend,
        "excluded_protocols": excluded,
        "ground_truth": {"n": gt.n, "alpha": gt.alpha, "critical_r": gt.threshold,
                         "timesteps": list(ts), "significant_counts": gt.significant_counts()},
        "interprotocol": {"protocols": list(inter.cols)},
        "selected_pair": list(pair),
        "selection_strategy": "fixed" if config.pair else config.strategy,
        "regression": regression,
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=False)
        fh.write("\n")
    return summary


def _raise(exc):
    raise exc


def load_models_dir(models_dir, protocols):
    d = Path(models_dir)
    if (d / "pooled.pcam").is_file():
        m = load_pcam(d / "pooled.pcam")
        return {p: m for p in protocols}
    return {p: load_pcam(d / f"{p}.pcam") for p in protocols}
