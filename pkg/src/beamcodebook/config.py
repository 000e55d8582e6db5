"""Experiment configuration (JSON or YAML) with validation."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .array_channel import ScenarioConfig, ScenarioKind
from .quantizer import QuantizerConfig
from .selfsup import SelfSupConfig
from .supervised import SupervisedConfig


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ScenarioSection(_Section):
    kind: ScenarioKind = ScenarioKind.LOS_SECTOR
    num_users: int = Field(2000, ge=1)
    # radians; default is a 60 degree sector around broadside
    angle_ranges: list[tuple[float, float]] = [(float(np.pi / 3), float(2 * np.pi / 3))]
    paths_per_user: int = Field(1, ge=1)
    path_gains: Optional[list[float]] = None
    seed: int = 0
    train_fraction: float = Field(0.7, gt=0.0, le=1.0)
    channel_file: Optional[str] = None

    def to_scenario(self) -> ScenarioConfig:
        return ScenarioConfig(
            kind=self.kind,
            num_users=self.num_users,
            angle_ranges=[list(r) for r in self.angle_ranges],
            paths_per_user=self.paths_per_user,
            path_gains=self.path_gains,
            seed=self.seed,
        )

    @model_validator(mode="after")
    def _check(self):
        if self.channel_file is None:
            self.to_scenario()  # raises ValueError with the offending rule
        return self


class GeometrySection(_Section):
    num_antennas: int = Field(32, ge=1)
    sigma_d: float = Field(0.0, ge=0.0)
    sigma_p: float = Field(0.0, ge=0.0)
    seed: int = 0


class QuantizerSection(_Section):
    bits: int = Field(ge=1)
    kmeans_iterations: int = Field(10, ge=0)
    circular: bool = True
    schedule: Literal["update", "epoch"] = "update"
    keep_latent: bool = True

    def to_config(self) -> QuantizerConfig:
        return QuantizerConfig(
            resolution_bits=self.bits,
            kmeans_iterations=self.kmeans_iterations,
            circular=self.circular,
            schedule=self.schedule,
            keep_latent=self.keep_latent,
        )


class TrainerSection(_Section):
    mode: Literal["supervised", "selfsup"] = "supervised"
    num_beams: int = Field(16, ge=1)
    batch_size: int = Field(500, ge=1)
    learning_rate: float = Field(0.1, ge=0.0)
    epochs: int = Field(5, ge=0)
    optimizer: Literal["sgd", "adam"] = "adam"
    init: Literal["uniform", "dft", "zeros"] = "uniform"
    seed: int = 0
    pilot_snr_db: Optional[float] = None
    snapshots: bool = False


class EvalSection(_Section):
    rho_db: list[float] = [0.0, 5.0]
    baselines: bool = True
    dft_beams: Optional[int] = Field(None, ge=1)
    pattern_beams: list[int] = [0]
    grid_points: int = Field(1024, ge=2)
    pattern_geometry: Literal["actual", "nominal"] = "actual"


class ExperimentConfig(_Section):
    scenario: ScenarioSection = ScenarioSection()
    geometry: GeometrySection = GeometrySection()
    trainer: TrainerSection = TrainerSection()
    quantizer: Optional[QuantizerSection] = None
    eval: EvalSection = EvalSection()
    output_dir: str = "runs/experiment"

    @model_validator(mode="after")
    def _consistent(self):
        bad = [b for b in self.eval.pattern_beams if not 0 <= b < self.trainer.num_beams]
        if bad:
            raise ValueError(f"eval.pattern_beams {bad} outside 0..{self.trainer.num_beams - 1}")
        return self

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Copy with every seed (scenario, geometry, trainer) replaced."""
        data = self.model_dump()
        for section in ("scenario", "geometry", "trainer"):
            data[section]["seed"] = seed
        return ExperimentConfig.model_validate(data)

    def trainer_config(self):
        t = self.trainer
        q = self.quantizer.to_config() if self.quantizer is not None else None
        common = dict(
            num_beams=t.num_beams,
            batch_size=t.batch_size,
            learning_rate=t.learning_rate,
            epochs=t.epochs,
            optimizer=t.optimizer,
            init=t.init,
            seed=t.seed,
            quantizer=q,
            snapshots=t.snapshots,
        )
        if t.mode == "supervised":
            return SupervisedConfig(**common)
        return SelfSupConfig(pilot_snr_db=t.pilot_snr_db, **common)

    def dumps(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=1, sort_keys=True) + "\n"


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() in (".yaml", ".yml"):
        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    return ExperimentConfig.model_validate(data or {})
