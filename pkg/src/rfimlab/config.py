"""Experiment configuration: validated, canonical, hashable."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SCHEMA_VERSION = 1
STATISTICS = (
    "rsb", "nsa", "ultrametric", "gg", "magnetization", "pure_state",
    "free_energy", "replica_symmetry", "correlation_uniformity",
)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class FieldRule(_Strict):
    """h(n) = c (constant), c n^-a (inverse_power) or c n^a (power)."""

    rule: Literal["constant", "inverse_power", "power"] = "constant"
    c: float = 1.0
    a: float = 0.0

    def at(self, n: int) -> float:
        if self.rule == "constant":
            return self.c
        if n == 0:
            raise ValueError("power-law field rules need n >= 1")
        return self.c * float(n) ** (-self.a if self.rule == "inverse_power" else self.a)


class ModelBlock(_Strict):
    d: int = Field(2, ge=2)
    n: list[int] = Field(default_factory=lambda: [8])
    beta: float = Field(0.6, gt=0)
    h: FieldRule = Field(default_factory=FieldRule)
    interaction: Literal["ferro", "antiferro"] = "ferro"

    @field_validator("n", mode="before")
    @classmethod
    def _listify(cls, v):
        return [v] if isinstance(v, int) else v

    @field_validator("h", mode="before")
    @classmethod
    def _scalar_h(cls, v):
        if isinstance(v, (int, float)):
            return {"rule": "constant", "c": float(v)}
        return v

    @field_validator("n")
    @classmethod
    def _check_n(cls, v):
        if not v or any(x < 0 for x in v):
            raise ValueError("n must be a non-empty list of integers >= 0")
        return sorted(set(v))


class DisorderBlock(_Strict):
    distribution: Literal["gaussian", "rademacher"] = "gaussian"
    realizations: int = Field(200, ge=0)
    master_seed: int = Field(0, ge=0)


class SamplerBlock(_Strict):
    mode: Literal["reweight", "direct"] = "reweight"
    update_kind: Literal["metropolis", "cluster", "mixed"] = "cluster"
    burn_in_sweeps: int = Field(2000, ge=0)
    thinning: int = Field(10, ge=1)
    samples: int = Field(5000, ge=0)
    symmetrize: bool = True
    groups: int = Field(20, ge=2)
    global_flip: bool = True


class EstimatorBlock(_Strict):
    statistics: list[str] = Field(default_factory=lambda: ["rsb", "nsa", "magnetization"])
    q_source: Literal["onsager", "fk-estimate", "explicit"] = "onsager"
    q_value: Optional[float] = Field(None, gt=0, le=1)
    q_samples: int = Field(5000, ge=1)
    eps: float = Field(0.1, gt=0, lt=1)
    corr_eps: float = Field(0.25, gt=0, lt=1)
    delta: float = Field(0.05, gt=0)
    n_triples: int = Field(1000, ge=0)
    n_tuples: int = Field(10_000, ge=0)
    l_max: int = Field(4, ge=0, le=6)
    n_site_subset: int = Field(512, ge=0)
    ks_pairs: int = Field(0, ge=0)
    n_pairs: int = Field(10_000, ge=1)
    n_quads: int = Field(10_000, ge=1)
    batch_size: int = Field(200, ge=1)
    min_disorders: int = Field(200, ge=1)
    thresholds: Optional[str] = None

    @field_validator("statistics")
    @classmethod
    def _known(cls, v):
        bad = sorted(set(v) - set(STATISTICS))
        if bad:
            raise ValueError(f"unknown statistics {bad}; choose from {list(STATISTICS)}")
        return v

    @model_validator(mode="after")
    def _q_value(self):
        if self.q_source == "explicit" and self.q_value is None:
            raise ValueError("q_source 'explicit' needs q_value")
        return self


class OutputBlock(_Strict):
    directory: str = "results"
    formats: list[Literal["csv", "json"]] = Field(default_factory=lambda: ["csv", "json"])
    spool: bool = True


class ExperimentConfig(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    name: str = "experiment"
    model: ModelBlock = Field(default_factory=ModelBlock)
    disorder: DisorderBlock = Field(default_factory=DisorderBlock)
    sampler: SamplerBlock = Field(default_factory=SamplerBlock)
    estimator: EstimatorBlock = Field(default_factory=EstimatorBlock)
    output: OutputBlock = Field(default_factory=OutputBlock)

    def canonical(self) -> dict:
        return json.loads(json.dumps(self.model_dump(mode="json"), sort_keys=True))

    def config_hash(self) -> str:
        """Hash of everything that affects results (the output block excluded)."""
        body = self.canonical()
        body.pop("output", None)
        text = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def with_updates(self, **blocks) -> "ExperimentConfig":
        data = self.model_dump()
        for block, values in blocks.items():
            if isinstance(values, dict):
                data[block] = {**data[block], **values}
            else:
                data[block] = values
        return ExperimentConfig.model_validate(data)


def parse_config(text: Union[str, bytes]) -> ExperimentConfig:
    """Parse YAML (or JSON, which is YAML) text; unknown keys are rejected."""
    data = yaml.safe_load(text) or {}
    return ExperimentConfig.model_validate(data)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def dump_config(cfg: ExperimentConfig) -> str:
    """Canonical YAML: sorted keys, block style."""
    return yaml.safe_dump(cfg.canonical(), sort_keys=True, default_flow_style=False)
