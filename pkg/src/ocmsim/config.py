"""Declarative experiment configuration.

A run is one YAML (or JSON) document with four blocks: the lattice, the
state to build on it, the experiment to perform, and output options.
Unknown keys are rejected everywhere so a typo fails loudly instead of
silently running a default.
"""

from __future__ import annotations

from typing import Annotated, Literal, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import FormatError
from .lattice import DEFAULT_AMP_CAP


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridConfig(StrictModel):
    m: int
    dx: float
    sin_theta: float


class NoonConfig(StrictModel):
    kind: Literal["noon"]
    n: int
    sigma_env: float | None = None


class GaussianBeamConfig(StrictModel):
    kind: Literal["gaussian-beam"]
    n0: int
    delta_k: float
    rho: float


class BiphotonConfig(StrictModel):
    kind: Literal["correlated-biphoton"]
    sigma_sum: float
    sigma_diff: float


class ClassicalProductConfig(StrictModel):
    kind: Literal["classical-product"]
    n: int
    sigma_x: float
    center: float = 0.0


class FileStateConfig(StrictModel):
    kind: Literal["file"]
    path: str


SingleStateConfig = Annotated[
    Union[NoonConfig, GaussianBeamConfig, BiphotonConfig,
          ClassicalProductConfig, FileStateConfig],
    Field(discriminator="kind"),
]


class ComponentConfig(StrictModel):
    amplitude: float
    state: SingleStateConfig


class SuperpositionConfig(StrictModel):
    kind: Literal["superposition"]
    vacuum_amplitude: float = 0.0
    components: list[ComponentConfig]


StateConfig = Annotated[
    Union[NoonConfig, GaussianBeamConfig, BiphotonConfig,
          ClassicalProductConfig, FileStateConfig, SuperpositionConfig],
    Field(discriminator="kind"),
]


class DetectorConfig(StrictModel):
    pixel_factor: int = 1
    eta: float = 1.0
    number_resolving: bool = True
    keep_saturated: bool = True


class ExactMarginalConfig(StrictModel):
    kind: Literal["exact-marginal"]
    report_fringe: bool = False


class ExactConditionalConfig(StrictModel):
    kind: Literal["exact-conditional"]
    report_fringe: bool = False


class MphotonConfig(StrictModel):
    kind: Literal["mphoton"]
    order: int


class SpectralCheckConfig(StrictModel):
    kind: Literal["spectral-check"]
    rel_tol: float = 1e-10


class SampleConfig(StrictModel):
    kind: Literal["sample"]
    trials: int
    seed: int = 0
    detector: DetectorConfig = DetectorConfig()
    events: bool = False


class ShiftConfig(StrictModel):
    kind: Literal["shift"]
    displacement: float
    trials: int
    seed: int = 0
    detector: DetectorConfig = DetectorConfig()


class LossSettingConfig(StrictModel):
    eta_det: float = 1.0
    alpha_z: float = 0.0


class LossSweepConfig(StrictModel):
    kind: Literal["loss-sweep"]
    settings: list[LossSettingConfig]
    trials: int
    seed: int = 0
    pixel_factor: int = 1


ExperimentConfig = Annotated[
    Union[ExactMarginalConfig, ExactConditionalConfig, MphotonConfig,
          SpectralCheckConfig, SampleConfig, ShiftConfig, LossSweepConfig],
    Field(discriminator="kind"),
]


class OutputConfig(StrictModel):
    directory: str = "."
    formats: list[Literal["csv", "json"]] = ["csv", "json"]


class RunConfig(StrictModel):
    grid: GridConfig
    state: StateConfig
    experiment: ExperimentConfig
    output: OutputConfig = OutputConfig()
    threads: int = 1
    amp_cap: int = DEFAULT_AMP_CAP


def parse_run_config(text: str) -> RunConfig:
    """Parse and validate a YAML/JSON config document."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise FormatError(f"config is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise FormatError("config must be a mapping of blocks")
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise FormatError(f"config failed validation: {exc}") from exc
