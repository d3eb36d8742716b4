import filecmp
import json

import numpy as np
import pytest

from conftest import SMALL
from tendonscore.cnn import alexnet_fc6, random_weights, save_weights
from tendonscore.decomposition import FeatureMatrix, load_fmat, pca_fit, save_fmat
from tendonscore.errors import DomainError, PipelineError, ValidationError
from tendonscore.imaging import ImageSlice, save_slice
from tendonscore.metric import healing_curve, healing_delta, patient_series, score_studies
from tendonscore.pipeline import (
    CohortManifest, Patient, RunConfig, Study, generate_synthetic_cohort, load_manifest,
    run_pipeline,
)
from tendonscore.pipeline.cli import main
from tendonscore.pipeline.manifest import load_protocol_features, reference_masks
from tendonscore.pipeline.run import extract_features
from tendonscore.protocols import PROTOCOLS
from tendonscore.stats import read_surveys_csv


# synthetic cohorts ----------------------------------------------------------

def test_synth_is_deterministic(tmp_path):
    for d in ("a", "b"):
        generate_synthetic_cohort(tmp_path / d, seed=1, protocols=("PD", "T1"), **SMALL)
    cmp = filecmp.dircmp(tmp_path / "a" / "features", tmp_path / "b" / "features")
    assert not cmp.diff_files and len(cmp.same_files) == 2
    for name in ("surveys.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_synth_outputs_pass_invariants(small_cohort):
    m = load_manifest(small_cohort / "manifest.json")
    assert m.protocols == list(PROTOCOLS)
    assert len(m.patient_ids("injured")) == 5 and len(m.patient_ids("healthy")) == 2
    fm = load_fmat(small_cohort / "features" / "PD.fmat")
    fm.check_unique()
    assert fm.cols == SMALL["feature_dim"] and len(fm) == (5 * 10 + 2) * SMALL["slices"]
    surveys = read_surveys_csv(small_cohort / "surveys.csv")
    assert len(surveys) == 5 * 10


@pytest.mark.parametrize("kwargs", [dict(patients=1), dict(noise=-0.1), dict(healing_shape="step"),
                                    dict(protocols=("PD", "T3"))])
def test_synth_rejects_bad_arguments(tmp_path, kwargs):
    with pytest.raises(DomainError):
        generate_synthetic_cohort(tmp_path, seed=0, **{**SMALL, **kwargs})


@pytest.mark.parametrize("shape", ["exponential-decay", "linear"])
def test_noise_free_curves_decrease(tmp_path, shape):
    m = generate_synthetic_cohort(tmp_path, seed=4, noise=0.0, healing_shape=shape,
                                  protocols=("PD", "T2MAP", "IDEALW"), **SMALL)
    injured = set(m.patient_ids("injured"))
    for protocol in m.protocols:
        f = load_protocol_features(m, protocol)
        inj, hea = reference_masks(f, m)
        scores = score_studies(f, pca_fit(f, 1, inj, hea), patients=injured)
        curve = healing_curve(scores, protocol)
        steps = np.diff(curve.values)
        if protocol == "T2MAP":
            assert healing_delta(curve) > 0 and (steps > 0).any()
        else:
            assert (steps < 0).all()
            assert all(s[-1] < s[0] for s in patient_series(scores, protocol).values())


# manifests ------------------------------------------------------------------

def write_manifest(path, doc):
    path.write_text(json.dumps(doc))
    return path


def minimal_doc(**patient):
    base = {"id": 1, "group": "injured",
            "studies": [{"protocol": "PD", "timestep": 0, "features": "f.fmat"}]}
    return {"version": 1, "patients": [{**base, **patient}]}


def test_manifest_validation(tmp_path):
    (tmp_path / "f.fmat").write_bytes(b"")
    assert load_manifest(write_manifest(tmp_path / "ok.json", minimal_doc())).protocols == ["PD"]
    bad = [
        minimal_doc(group="sick"),
        minimal_doc(group="healthy", studies=[{"protocol": "PD", "timestep": t, "features": "f.fmat"}
                                               for t in (0, 1)]),
        minimal_doc(studies=[{"protocol": "PD", "timestep": 0, "features": "f.fmat"}] * 2),
        minimal_doc(studies=[{"protocol": "XX", "timestep": 0, "features": "f.fmat"}]),
        minimal_doc(studies=[{"protocol": "PD", "timestep": 10, "features": "f.fmat"}]),
        minimal_doc(studies=[{"protocol": "PD", "timestep": 0, "features": "missing.fmat"}]),
        minimal_doc(studies=[{"protocol": "PD", "timestep": 0}]),
        {"version": 2, "patients": []},
        {"version": 1, "patients": [{"id": 1}]},
    ]
    for i, doc in enumerate(bad):
        with pytest.raises(ValidationError):
            load_manifest(write_manifest(tmp_path / f"bad{i}.json", doc))
    with pytest.raises(ValidationError):
        load_manifest(tmp_path / "absent.json")


# extraction from slice images -----------------------------------------------

@pytest.fixture(scope="module")
def image_cohort(tmp_path_factory):
    root = tmp_path_factory.mktemp("images")
    rng = np.random.default_rng(0)
    patients = []
    for pid, group, steps in ((1, "injured", (0, 9)), (2, "healthy", (0,))):
        studies = []
        for t in steps:
            names = []
            for s in range(2):
                name = f"img/{pid}_PD_{t}_{s}.pgm"
                (root / "img").mkdir(exist_ok=True)
                save_slice(root / name, ImageSlice.from_array(rng.integers(0, 256, (40, 32)).astype(np.uint8)))
                names.append(name)
            studies.append(Study("PD", t, slices=tuple(names)))
        patients.append(Patient(pid, group, tuple(studies)))
    CohortManifest(patients, None, root).save(root / "manifest.json")
    save_weights(root / "net.cnnw", random_weights(alexnet_fc6(), seed=1))
    return root


def test_extract_writes_fc6_features(image_cohort, tmp_path):
    m = extract_features(load_manifest(image_cohort / "manifest.json"), image_cohort / "net.cnnw", tmp_path)
    fm = load_fmat(tmp_path / "features" / "PD.fmat")
    assert fm.data.shape == (6, 4096) and (fm.data >= 0).all()
    assert fm.studies() == [(1, "PD", 0), (1, "PD", 9), (2, "PD", 0)]
    assert all(s.features for p in m.patients for s in p.studies)


def test_extract_cli(image_cohort, tmp_path):
    assert main(["extract", "--manifest", str(image_cohort / "manifest.json"),
                 "--weights", str(image_cohort / "net.cnnw"), "--out-dir", str(tmp_path)]) == 0
    m = load_manifest(tmp_path / "manifest.json")
    assert len(load_protocol_features(m, "PD")) == 6


def test_extract_without_weights(image_cohort, tmp_path):
    with pytest.raises(ValidationError):
        extract_features(load_manifest(image_cohort / "manifest.json"), None, tmp_path)


# end-to-end runs ------------------------------------------------------------

def test_run_pipeline_summary(small_cohort, tmp_path):
    summary = run_pipeline(small_cohort / "manifest.json", tmp_path, RunConfig(seed=2))
    assert summary["schema"] == "tendonscore.summary/1"
    assert summary["stages"] == ["manifest", "extract", "pca-fit", "score", "curves", "correlate",
                                 "select", "regress"]
    assert "T2MAP" in summary["excluded_protocols"]
    assert summary["ground_truth"]["n"] == 10
    assert len(summary["interprotocol"]["protocols"]) == 4
    assert set(summary["regression"]) == {"STE", "TE", "TisE"}
    for name in ("scores.csv", "curves.csv", "ground_truth.json", "interprotocol.csv",
                 "regression/STE.json", "regression/TE_plot.csv",
                 "regression/TisE_leave_one_timestep_out.csv"):
        assert (tmp_path / name).is_file(), name
    assert not (tmp_path / "FAILED").exists()


def test_fixed_pair_feeds_two_predictors(small_cohort, tmp_path):
    cfg = RunConfig(protocols=("PD", "T2STARGRE"), pair=("PD", "T2STARGRE"))
    summary = run_pipeline(small_cohort / "manifest.json", tmp_path, cfg)
    assert summary["selected_pair"] == ["PD", "T2STARGRE"]
    for r in summary["regression"].values():
        assert r["model"]["predictor_protocols"] == ["PD", "T2STARGRE"]
        assert len(r["model"]["coefficients"]) == 2


def test_noise_free_run_reports_negative_deltas(tmp_path):
    generate_synthetic_cohort(tmp_path / "c", seed=5, noise=0.0, protocols=("PD", "T1", "T2"), **SMALL)
    summary = run_pipeline(tmp_path / "c" / "manifest.json", tmp_path / "r")
    assert all(v < 0 for v in summary["healing_delta"].values())


def test_failed_stage_leaves_marker(small_cohort, tmp_path):
    m = load_manifest(small_cohort / "manifest.json")
    no_surveys = CohortManifest(m.patients, None, m.root)
    with pytest.raises(PipelineError) as info:
        run_pipeline(no_surveys, tmp_path)
    assert info.value.stage == "correlate"
    assert (tmp_path / "FAILED").read_text().startswith("correlate:")
    assert (tmp_path / "scores.csv").is_file() and not (tmp_path / "summary.json").exists()


def test_unknown_protocol_in_config(small_cohort, tmp_path):
    m = load_manifest(small_cohort / "manifest.json")
    subset = CohortManifest([Patient(p.id, p.group, tuple(s for s in p.studies if s.protocol == "PD"))
                             for p in m.patients], m.surveys, m.root)
    with pytest.raises(PipelineError) as info:
        run_pipeline(subset, tmp_path, RunConfig(protocols=("PD", "T1")))
    assert info.value.stage == "manifest"


# command line ---------------------------------------------------------------

def test_cli_stage_by_stage(small_cohort, tmp_path, capsys):
    man = str(small_cohort / "manifest.json")
    out = str(tmp_path)
    assert main(["--seed", "1", "pca-fit", "--manifest", man, "--out-dir", out]) == 0
    assert main(["score", "--manifest", man, "--models", f"{out}/pca", "--out-dir", out]) == 0
    assert main(["curves", "--scores", f"{out}/scores.csv", "--manifest", man, "--out-dir", out]) == 0
    assert "no decrease" in capsys.readouterr().out
    assert main(["correlate", "--scores", f"{out}/scores.csv", "--surveys", str(small_cohort / "surveys.csv"),
                 "--manifest", man, "--interprotocol", "--protocols", "PD,T1,T2", "--out-dir", out]) == 0
    assert main(["select", "--matrix", f"{out}/interprotocol.json", "--ground-truth",
                 f"{out}/ground_truth.json", "--strategy", "global-min", "--out-dir", out]) == 0
    pair = json.loads((tmp_path / "selection.json").read_text())["pair"]
    assert main(["regress", "--scores", f"{out}/scores.csv", "--surveys", str(small_cohort / "surveys.csv"),
                 "--pair", *pair, "--manifest", man, "--out-dir", out]) == 0
    assert (tmp_path / "regression" / "TisE.json").is_file()


def test_cli_run_report_and_crossval(small_cohort, tmp_path, capsys):
    man = str(small_cohort / "manifest.json")
    assert main(["run", "--manifest", man, "--out-dir", str(tmp_path / "r"), "--alpha", "0.05"]) == 0
    assert json.loads((tmp_path / "r" / "summary.json").read_text())["config"]["alpha"] == 0.05
    assert main(["report", "--run-dir", str(tmp_path / "r")]) == 0
    assert "selected pair" in capsys.readouterr().out
    # k=3 trains on a single fold, so every fold needs a healthy patient
    generate_synthetic_cohort(tmp_path / "c", seed=0, patients=4, healthy=3, slices=4, feature_dim=16,
                              protocols=("PD",))
    assert main(["crossval", "--manifest", str(tmp_path / "c" / "manifest.json"), "--k", "3",
                 "--epochs", "30", "--out-dir", str(tmp_path / "cv")]) == 0
    res = json.loads((tmp_path / "cv" / "crossval.json").read_text())
    assert len(res["accuracies"]) == 3


def test_cli_synth(tmp_path):
    assert main(["synth", "--out-dir", str(tmp_path), "--patients", "3", "--healthy", "1",
                 "--slices", "4", "--feature-dim", "8", "--protocols", "PD,T1", "--seed", "2"]) == 0
    assert load_manifest(tmp_path / "manifest.json").protocols == ["PD", "T1"]


def test_cli_exit_codes(small_cohort, tmp_path):
    assert main(["run", "--manifest", str(tmp_path / "missing.json"), "--out-dir", str(tmp_path / "m")]) == 1
    with pytest.raises(SystemExit) as info:
        main(["run", "--bogus"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        main(["synth", "--protocols", "PD,XYZ"])
    assert info.value.code == 1
    assert main(["synth", "--out-dir", str(tmp_path / "s"), "--patients", "1"]) == 1

    # identical rows make PCA degenerate: a numerical failure
    fm = FeatureMatrix.from_rows(np.ones((4, 3), np.float32), [1, 1, 2, 2], ["PD"] * 4, [0, 1, 0, 1],
                                 [0] * 4)
    save_fmat(tmp_path / "flat.fmat", fm)
    doc = {"version": 1, "patients": [
        {"id": p, "group": "injured", "studies": [{"protocol": "PD", "timestep": t, "features": "flat.fmat"}
                                                  for t in (0, 1)]} for p in (1, 2)]}
    (tmp_path / "flat.json").write_text(json.dumps(doc))
    assert main(["pca-fit", "--manifest", str(tmp_path / "flat.json"), "--out-dir", str(tmp_path)]) == 2
    assert main(["run", "--manifest", str(tmp_path / "flat.json"), "--out-dir", str(tmp_path / "r")]) == 2
    assert (tmp_path / "r" / "FAILED").read_text().startswith("pca-fit:")
