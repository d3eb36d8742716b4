"""Seeded synthetic cohorts standing in for real MRI feature data.

Each injured patient follows a latent severity trajectory ``s(week)`` that
falls from 1 before surgery towards a patient-specific end level by week 52.
A slice's feature vector is

    baseline[protocol] + AMPLITUDE * z * direction[protocol]
                       + PATIENT_SPREAD * a[patient] * anatomy[protocol] + noise terms

where ``z`` is the study's latent value (``s`` plus study and slice noise,
both scaled by ``noise``). A fraction of slices per study is replaced with
far-from-rupture outliers whose latent is the healthy level. The T2MAP
protocol gets a non-monotone latent that ends above its start. Healthy
volunteers have one scan per protocol at latent 0.

Survey scores are quantised affine functions of a blend of the true
trajectory and an unrelated per-visit factor, plus per-parameter rater noise.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from ..decomposition import FeatureMatrix, save_fmat
from ..errors import DomainError
from ..protocols import PROTOCOLS, SURVEY_PARAMS, WEEKS
from ..stats import SurveyScores, write_surveys_csv
from .manifest import CohortManifest, Patient, Study

SHAPES = ("exponential-decay", "linear")
NON_MONOTONE = ("T2MAP",)

AMPLITUDE = 10.0
PATIENT_SPREAD = 1.0
FEATURE_NOISE = 0.5      # per-dimension sd at noise=1
SLICE_JITTER = 0.5       # per-slice latent sd at noise=1
RATER_NOISE = {"SCT": 0.4, "TT": 0.4, "STE": 0.25, "TE": 0.2, "TU": 0.4, "TisE": 0.25}
# share of each survey score driven by the healing trajectory; the rest follows
# an unrelated per-visit factor (e.g. findings only visible on sagittal planes)
TRAJECTORY_WEIGHT = {"SCT": 0.6, "TT": 0.5, "STE": 1.0, "TE": 1.0, "TU": 0.15, "TisE": 1.0}


def severity(weeks, shape, end_level, tau):
    """Latent severity in (end_level, 1], strictly decreasing in ``weeks``."""
    w = np.asarray(weeks, dtype=np.float64)
    if shape == "exponential-decay":
        return end_level + (1.0 - end_level) * np.exp(-w / tau)
    if shape == "linear":
        return 1.0 - (1.0 - end_level) * w / 52.0
    raise DomainError(f"unknown healing shape {shape!r}; choose from {SHAPES}")


def non_monotone_severity(weeks):
    """Dips after surgery, then climbs above the pre-surgery level."""
    w = np.asarray(weeks, dtype=np.float64)
    return 0.45 + 0.25 * np.sin(2.0 * math.pi * w / 24.0) + 0.2 * w / 52.0


def _unit(rng, d):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def generate_synthetic_cohort(out_dir, seed, patients=10, protocols=PROTOCOLS, noise=0.1,
                              healing_shape="exponential-decay", healthy=4, slices=40,
                              feature_dim=4096, outlier_fraction=0.025):
    """Write a synthetic cohort to ``out_dir`` and return its manifest.

    Creates ``manifest.json``, ``surveys.csv`` and one
    ``features/<protocol>.fmat`` per protocol. Patients 1..``patients`` are
    injured (10 timesteps); the next ``healthy`` ids are healthy volunteers.
    """
    if patients < 2:
        raise DomainError(f"need at least 2 injured patients, got {patients}")
    if healthy < 0 or slices < 1 or feature_dim < 2:
        raise DomainError("healthy >= 0, slices >= 1 and feature_dim >= 2 are required")
    if noise < 0:
        raise DomainError(f"noise must be >= 0, got {noise}")
    if healing_shape not in SHAPES:
        raise DomainError(f"unknown healing shape {healing_shape!r}; choose from {SHAPES}")
    if not 0 <= outlier_fraction < 0.5:
        raise DomainError("outlier_fraction must lie in [0, 0.5)")
    for p in protocols:
        if p not in PROTOCOLS:
            raise DomainError(f"unknown protocol {p!r}")

    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    injured_ids = list(range(1, patients + 1))
    healthy_ids = list(range(patients + 1, patients + healthy + 1))
    end_level = rng.uniform(0.05, 0.15, patients)
    tau = rng.uniform(8.0, 16.0, patients)
    anatomy_score = rng.standard_normal(patients + healthy)
    truth = np.array([severity(WEEKS, healing_shape, end_level[i], tau[i]) for i in range(patients)])
    n_out = int(math.floor(slices * outlier_fraction))

    for protocol in protocols:
        prng = np.random.default_rng([seed, PROTOCOLS.index(protocol)])
        baseline = prng.uniform(1.5, 2.5, feature_dim)
        direction = _unit(prng, feature_dim)
        anatomy = _unit(prng, feature_dim)
        rows, labels = [], []

        def emit(pid, t, latent):
            z = latent + noise * SLICE_JITTER * prng.standard_normal(slices)
            if n_out:
                z[prng.choice(slices, n_out, replace=False)] = 0.0
            a = anatomy_score[pid - 1]
            x = (baseline + PATIENT_SPREAD * a * anatomy)[None, :] + AMPLITUDE * z[:, None] * direction[None, :]
            if noise > 0:
                x = x + (noise * FEATURE_NOISE) * prng.standard_normal(x.shape)
            rows.append(np.maximum(x, 0.0).astype(np.float32))
            labels.extend((pid, PROTOCOLS.index(protocol), t, s) for s in range(slices))

        for i, pid in enumerate(injured_ids):
            traj = non_monotone_severity(WEEKS) if protocol in NON_MONOTONE else truth[i]
            study_noise = noise * prng.standard_normal(len(WEEKS))
            for t in range(len(WEEKS)):
                emit(pid, t, traj[t] + study_noise[t])
        for pid in healthy_ids:
            emit(pid, 0, noise * prng.standard_normal())

        lab = np.array(labels)
        fm = FeatureMatrix.from_rows(np.concatenate(rows), lab[:, 0], lab[:, 1], lab[:, 2], lab[:, 3])
        save_fmat(out / "features" / f"{protocol}.fmat", fm)

    srng = np.random.default_rng([seed, 1000])
    surveys = []
    unrelated = srng.uniform(0.0, 1.0, (patients, len(WEEKS), len(SURVEY_PARAMS)))
    for i, pid in enumerate(injured_ids):
        for t in range(len(WEEKS)):
            vals = []
            for j, param in enumerate(SURVEY_PARAMS):
                w = TRAJECTORY_WEIGHT[param]
                latent = w * truth[i, t] + (1.0 - w) * unrelated[i, t, j]
                raw = 1.0 + 4.0 * latent + RATER_NOISE[param] * srng.standard_normal()
                vals.append(int(min(5, max(1, round(raw)))))
            surveys.append(SurveyScores(pid, t, *vals))
    write_surveys_csv(out / "surveys.csv", surveys)

    manifest_patients = []
    for pid in injured_ids:
        studies = tuple(Study(p, t, f"features/{p}.fmat") for p in protocols for t in range(len(WEEKS)))
        manifest_patients.append(Patient(pid, "injured", studies))
    for pid in healthy_ids:
        manifest_patients.append(Patient(pid, "healthy", tuple(Study(p, 0, f"features/{p}.fmat") for p in protocols)))
    manifest = CohortManifest(manifest_patients, "surveys.csv", out.resolve())
    manifest.save(out / "manifest.json")
    return manifest
