"""Feature schema: ordered feature definitions that drive ingestion,
serialization, raw-matrix layout, and synthetic data generation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ConfigError

KINDS = ("static-numeric", "static-categorical", "timeseries-numeric")


@dataclass(frozen=True)
class FeatureDef:
    name: str
    unit: str = ""
    kind: str = "static-numeric"
    plausible_range: Optional[tuple[float, float]] = None

    def __post_init__(self):
        if not self.name:
            raise ConfigError("feature name must be nonempty")
        if self.kind not in KINDS:
            raise ConfigError(f"unknown feature kind {self.kind!r}")
        if self.plausible_range is not None:
            lo, hi = self.plausible_range
            if not lo < hi:
                raise ConfigError(
                    f"plausible_range for {self.name!r} must satisfy low < high"
                )

    @property
    def display_name(self) -> str:
        return self.name.replace("_", " ")

    @property
    def is_numeric(self) -> bool:
        return self.kind in ("static-numeric", "timeseries-numeric")


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[FeatureDef, ...]
    schema_id: str = "schema"

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ConfigError("feature names must be unique")

    def __iter__(self):
        return iter(self.features)

    def __len__(self):
        return len(self.features)

    def get(self, name: str) -> FeatureDef:
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(name)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    def to_dict(self) -> dict:
        return {
            "schema_id": self.schema_id,
            "features": [
                {
                    "name": f.name,
                    "unit": f.unit,
                    "kind": f.kind,
                    "plausible_range": list(f.plausible_range)
                    if f.plausible_range
                    else None,
                }
                for f in self.features
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        feats = tuple(
            FeatureDef(
                name=f["name"],
                unit=f.get("unit", ""),
                kind=f.get("kind", "static-numeric"),
                plausible_range=tuple(f["plausible_range"])
                if f.get("plausible_range")
                else None,
            )
            for f in d["features"]
        )
        return cls(features=feats, schema_id=d.get("schema_id", "schema"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "FeatureSchema":
        return cls.from_dict(json.loads(Path(path).read_text()))


def clinical_deterioration_schema() -> FeatureSchema:
    """Default 24-feature vitals/labs schema used by the synthetic generator.

    Ranges are broad physiologic plausibility bounds (in each feature's
    unit), not normal reference ranges.
    """
    f = FeatureDef
    return FeatureSchema(
        schema_id="clinical-deterioration-v1",
        features=(
            f("age", "years", "static-numeric", (18, 105)),
            f("systolic_blood_pressure", "mmHg", "static-numeric", (50, 250)),
            f("diastolic_blood_pressure", "mmHg", "static-numeric", (20, 150)),
            f("oxygen_saturation", "%", "static-numeric", (50, 100)),
            f("body_temperature", "celsius", "static-numeric", (30, 43)),
            f("avpu_scale", "", "static-categorical", None),
            f("albumin", "g/dL", "static-numeric", (1.0, 6.0)),
            f("alkaline_phosphatase", "U/L", "static-numeric", (10, 1200)),
            f("anion_gap", "mmol/L", "static-numeric", (2, 40)),
            f("total_bilirubin", "mg/dL", "static-numeric", (0.1, 30)),
            f("blood_urea_nitrogen", "mg/dL", "static-numeric", (2, 150)),
            f("bun_creatinine_ratio", "", "static-numeric", (2, 60)),
            f("calcium", "mg/dL", "static-numeric", (5, 15)),
            f("chloride", "mmol/L", "static-numeric", (70, 140)),
            f("carbon_dioxide", "mmol/L", "static-numeric", (5, 50)),
            f("creatinine", "mg/dL", "static-numeric", (0.2, 20)),
            f("serum_glucose", "mg/dL", "static-numeric", (20, 1000)),
            f("hemoglobin", "g/dL", "static-numeric", (3, 22)),
            f("platelet_count", "10^3/uL", "static-numeric", (5, 1500)),
            f("potassium", "mmol/L", "static-numeric", (1.5, 9)),
            f("sgot", "U/L", "static-numeric", (5, 3000)),
            f("sodium", "mmol/L", "static-numeric", (110, 175)),
            f("total_protein", "g/dL", "static-numeric", (2, 12)),
            f("white_blood_cell_count", "10^3/uL", "static-numeric", (0.1, 100)),
        ),
    )
