"""Cohort manifests: which patients, which studies, where their data lives.

A manifest is a JSON document::

    {
      "version": 1,
      "surveys": "surveys.csv",
      "patients": [
        {"id": 1, "group": "injured",
         "studies": [{"protocol": "PD", "timestep": 0, "features": "features/PD.fmat"},
                     {"protocol": "T1", "timestep": 0, "slices": ["img/1_T1_0_00.pgm", ...]}]}
      ]
    }

Paths are relative to the manifest's directory.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..decomposition import FeatureMatrix, load_fmat
from ..errors import EmptyInputError, ValidationError
from ..protocols import N_TIMESTEPS, PROTOCOLS, protocol_order

MANIFEST_VERSION = 1
GROUPS = ("healthy", "injured")


@dataclass(frozen=True)
class Study:
    protocol: str
    timestep: int
    features: str | None = None
    slices: tuple = ()


@dataclass(frozen=True)
class Patient:
    id: int
    group: str
    studies: tuple

    @property
    def injured(self):
        return self.group == "injured"


@dataclass
class CohortManifest:
    patients: list
    surveys: str | None = None
    root: Path = field(default_factory=Path)

    def resolve(self, rel):
        return (self.root / rel).resolve()

    @property
    def protocols(self):
        return protocol_order({s.protocol for p in self.patients for s in p.studies})

    def patient_ids(self, group=None):
        return [p.id for p in self.patients if group is None or p.group == group]

    def groups(self):
        return {p.id: p.group for p in self.patients}

    def absolute(self):
        """Copy with every referenced path made absolute."""
        def fix(rel):
            return str(self.resolve(rel))
        patients = [
            Patient(p.id, p.group, tuple(
                Study(s.protocol, s.timestep, fix(s.features) if s.features else None,
                      tuple(fix(x) for x in s.slices)) for s in p.studies))
            for p in self.patients]
        return CohortManifest(patients, fix(self.surveys) if self.surveys else None, self.root)

    def to_dict(self):
        out = {"version": MANIFEST_VERSION}
        if self.surveys is not None:
            out["surveys"] = self.surveys
        out["patients"] = []
        for p in self.patients:
            studies = []
            for s in p.studies:
                d = {"protocol": s.protocol, "timestep": s.timestep}
                if s.features is not None:
                    d["features"] = s.features
                if s.slices:
                    d["slices"] = list(s.slices)
                studies.append(d)
            out["patients"].append({"id": p.id, "group": p.group, "studies": studies})
        return out

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    def validate(self, check_files=True):
        seen = set()
        for p in self.patients:
            if p.id in seen:
                raise ValidationError(f"patient {p.id} listed twice")
            seen.add(p.id)
            if p.group not in GROUPS:
                raise ValidationError(f"patient {p.id}: group must be healthy or injured, got {p.group!r}")
            if not p.studies:
                raise ValidationError(f"patient {p.id} has no studies")
            timesteps = {s.timestep for s in p.studies}
            if p.group == "healthy" and len(timesteps) != 1:
                raise ValidationError(f"healthy patient {p.id} must have exactly one timestep, has {sorted(timesteps)}")
            keys = set()
            for s in p.studies:
                if s.protocol not in PROTOCOLS:
                    raise ValidationError(f"patient {p.id}: unknown protocol {s.protocol!r}")
                if not 0 <= s.timestep < N_TIMESTEPS:
                    raise ValidationError(f"patient {p.id}: timestep {s.timestep} outside 0-{N_TIMESTEPS - 1}")
                if (s.protocol, s.timestep) in keys:
                    raise ValidationError(f"patient {p.id}: duplicate study {s.protocol}/{s.timestep}")
                keys.add((s.protocol, s.timestep))
                if s.features is None and not s.slices:
                    raise ValidationError(f"patient {p.id}: study {s.protocol}/{s.timestep} references no data")
                if check_files:
                    for rel in ([s.features] if s.features else []) + list(s.slices):
                        if not self.resolve(rel).is_file():
                            raise ValidationError(f"patient {p.id}: missing file {rel}")
        if check_files and self.surveys is not None and not self.resolve(self.surveys).is_file():
            raise ValidationError(f"missing survey file {self.surveys}")


def load_manifest(path, check_files=True):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read manifest {path}: {exc}") from None
    if doc.get("version") != MANIFEST_VERSION:
        raise ValidationError(f"{path}: unsupported manifest version {doc.get('version')!r}")
    try:
        patients = [
            Patient(int(p["id"]), p["group"],
                    tuple(Study(s["protocol"], int(s["timestep"]), s.get("features"),
                                tuple(s.get("slices", ()))) for s in p["studies"]))
            for p in doc["patients"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: malformed manifest entry ({exc})") from None
    m = CohortManifest(patients, doc.get("surveys"), path.parent.resolve())
    m.validate(check_files)
    return m


def load_protocol_features(manifest, protocol, patients=None, cache=None):
    """Rows for every listed study of ``protocol`` that references features."""
    cache = {} if cache is None else cache
    parts = []
    for p in manifest.patients:
        if patients is not None and p.id not in patients:
            continue
        for s in p.studies:
            if s.protocol != protocol or s.features is None:
                continue
            key = str(manifest.resolve(s.features))
            if key not in cache:
                cache[key] = load_fmat(key)
            fm = cache[key]
            rows = fm.select(fm.mask(p.id, protocol, s.timestep))
            if len(rows) == 0:
                raise ValidationError(
                    f"{s.features} has no rows for patient {p.id}, {protocol}, timestep {s.timestep}"
                )
            parts.append(rows)
    if not parts:
        raise EmptyInputError(f"no feature rows for protocol {protocol}")
    out = FeatureMatrix.concatenate(parts)
    out.check_unique()
    return out


def reference_masks(features, manifest):
    """(injured pre-surgery mask, healthy mask) for orienting PC1."""
    groups = manifest.groups()
    patients = features.labels["patient"]
    injured = np.array([groups.get(int(p)) == "injured" for p in patients])
    healthy = np.array([groups.get(int(p)) == "healthy" for p in patients])
    return injured & (features.labels["timestep"] == 0), healthy
