"""Experiment configuration (YAML). Unknown keys are rejected."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, model_validator


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RandomGraph(Strict):
    n_nodes: int
    density: float = 0.3
    seed: int = 0


class GraphSection(Strict):
    file: Optional[str] = None
    random: Optional[RandomGraph] = None
    n_nodes: Optional[int] = None
    edges: Optional[list[tuple[int, int]]] = None

    @model_validator(mode="after")
    def _one_source(self):
        sources = [self.file is not None, self.random is not None, self.edges is not None]
        if sum(sources) != 1:
            raise ValueError("graph needs exactly one of: file, random, edges")
        if self.edges is not None and self.n_nodes is None:
            raise ValueError("graph.edges requires graph.n_nodes")
        return self


class GossipSection(Strict):
    params_file: Optional[str] = None
    clock_probs: Union[Literal["uniform"], list[float]] = "uniform"
    reception_prob: float = 1.0
    mixing_weight: Optional[float] = None


class DesignSection(Strict):
    directive: Literal["equal-weights", "target-weights", "target-phi", "uniform-phi", "rate-optimal"]
    algorithm: Literal["A", "B"] = "B"
    weights: Optional[list[float]] = None
    phi: Optional[list[float]] = None
    mixing_weight: float = 0.5
    scale_max: float = 0.99

    @model_validator(mode="after")
    def _inputs(self):
        if self.directive == "target-weights" and self.weights is None:
            raise ValueError("directive target-weights needs design.weights")
        if self.directive == "target-phi" and self.phi is None:
            raise ValueError("directive target-phi needs design.phi")
        if self.directive in ("equal-weights", "target-weights") and self.algorithm != "B":
            raise ValueError(f"directive {self.directive} is solved with algorithm B only")
        return self


class RandomRange(Strict):
    low: float
    high: float
    seed: int = 0


Values = Union[float, list[float], RandomRange]


class ModelSection(Strict):
    kind: Literal["gaussian_mean", "quadratic"]
    dim: int = 1
    means: Optional[Values] = None
    std_devs: Optional[Values] = None
    centers: Optional[list[list[float]]] = None
    curvatures: Optional[list] = None
    noise_cov: Optional[list] = None

    @model_validator(mode="after")
    def _fields(self):
        if self.kind == "gaussian_mean":
            if self.means is None or self.std_devs is None:
                raise ValueError("gaussian_mean model needs means and std_devs")
            if self.dim != 1:
                raise ValueError("gaussian_mean model is scalar (dim 1)")
        elif self.centers is None or self.curvatures is None or self.noise_cov is None:
            raise ValueError("quadratic model needs centers, curvatures and noise_cov")
        return self


class StepSection(Strict):
    kind: Literal["constant", "per_agent", "tapering", "async_tapering"]
    eps: Optional[float] = None
    a: Optional[float] = None
    gains: Optional[list[float]] = None

    @model_validator(mode="after")
    def _fields(self):
        if self.kind in ("constant", "per_agent") and not (self.eps and self.eps > 0):
            raise ValueError(f"step_size kind {self.kind} needs eps > 0")
        if self.kind == "per_agent" and self.gains is None:
            raise ValueError("per_agent step size needs gains")
        if self.kind in ("tapering", "async_tapering") and not (self.a and self.a > 0):
            raise ValueError(f"step_size kind {self.kind} needs a > 0")
        return self


class SimulateSection(Strict):
    n_iters: int
    record_every: Optional[int] = None
    record_states: bool = True
    x0: Optional[Union[float, list[float]]] = None
    reference: Optional[list[float]] = None
    bound: float = 1e9


class RateSection(Strict):
    g_reps: int = 10000
    tail_length: Optional[int] = None
    simulate: bool = True
    burn_in: float = 0.2


class AnalyzeSection(Strict):
    max_lag: int = 60
    reps: int = 1000


class ExperimentConfig(Strict):
    name: str = "experiment"
    graph: GraphSection
    gossip: GossipSection = GossipSection()
    design: Optional[DesignSection] = None
    model: Optional[ModelSection] = None
    variant: Literal["AUC", "ACU"] = "AUC"
    step_size: Optional[StepSection] = None
    simulate: Optional[SimulateSection] = None
    rate: RateSection = RateSection()
    analyze: AnalyzeSection = AnalyzeSection()
    reps: int = 1
    seed: int = 0
    out: str = "out"
    workers: int = 1

    base_dir: Optional[str] = None  # set by the loader; resolves relative paths

    def path(self, p: str) -> Path:
        q = Path(p)
        if not q.is_absolute() and self.base_dir:
            q = Path(self.base_dir) / q
        return q

    def digest(self) -> str:
        data = self.model_dump(mode="json", exclude={"base_dir"})
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def load_config(path: str | Path, **overrides) -> ExperimentConfig:
    path = Path(path)
    data = yaml.safe_load(path.read_text()) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: top level must be a mapping")
    for key, value in overrides.items():
        if value is not None:
            data[key] = value
    data["base_dir"] = str(path.resolve().parent)
    return ExperimentConfig.model_validate(data)
