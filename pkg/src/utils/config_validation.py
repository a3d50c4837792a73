import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import yaml
from pydantic import BaseModel, Field, field_validator, model_validator

from codegen.learner import CodeLearnerConfig
from hashfn.cross_validation import CvConfig
from hashfn.trainer import TrainConfig
from protocol.methods import METHOD_SELECTORS
from protocol.orchestrator import Protocol

logger = logging.getLogger(__name__)

STANDARD_BITS = (16, 32, 64, 128)
PROTOCOL_SELECTORS = ("P1", "P2", "P3")


def _split_list(v):
    if isinstance(v, str):
        return [item.strip() for item in v.split(",") if item.strip()]
    if isinstance(v, (int, float)):
        return [v]
    return v


class SyntheticConfig(BaseModel):
    class_count: int = Field(default=8, ge=1)
    per_class: int = Field(default=100, ge=1)
    dx: int = Field(default=16, ge=2)
    dy: int = Field(default=16, ge=2)
    spread: float = Field(default=0.5, gt=0.0)


class DatasetConfig(BaseModel):
    manifest: Optional[str] = None
    test_manifest: Optional[str] = None
    synthetic: SyntheticConfig = Field(default_factory=SyntheticConfig)
    train_fraction: float = Field(default=0.7, gt=0.0, lt=1.0)
    standardize: bool = False

    @field_validator("manifest", "test_manifest")
    @classmethod
    def validate_path(cls, v):
        if v and not os.path.exists(v):
            raise ValueError(f"Dataset manifest does not exist: {v}")
        return v

    @model_validator(mode="after")
    def validate_pairing(self):
        if self.test_manifest and not self.manifest:
            raise ValueError("test_manifest given without a training manifest")
        return self


class CodegenSection(BaseModel):
    max_iters: int = Field(default=500, ge=1)
    rel_tol: float = Field(default=1e-6, gt=0.0)
    eta_init: float = Field(default=1e-2, gt=0.0)


class MlpSection(TrainConfig):
    # incremental phases use class weights and the imbalanced sampler unless turned off
    use_class_weights: bool = True
    use_imbalanced_sampler: bool = True


class RunConfig(BaseModel):
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    q: int = Field(default=128, ge=1)
    lambda_h: float = Field(default=1.0, ge=0.0)
    samples_per_class: int = Field(default=10, ge=1)
    phase_sizes: List[int] = Field(default_factory=lambda: [3, 2, 3])
    shuffle_seeds: List[int] = Field(default_factory=lambda: [0, 1, 2])
    methods: List[str] = Field(default_factory=lambda: ["lr1"])
    protocols: List[str] = Field(default_factory=lambda: list(PROTOCOL_SELECTORS))
    retrieval_k: int = Field(default=50, ge=1)
    codegen: CodegenSection = Field(default_factory=CodegenSection)
    linear: CvConfig = Field(default_factory=CvConfig)
    mlp: MlpSection = Field(default_factory=MlpSection)
    out: str = Field(default="results")
    seed: int = Field(default=0, ge=0)
    workers: int = Field(default=1, ge=1)
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = Field(default="INFO")

    @field_validator("phase_sizes", "shuffle_seeds", "methods", "protocols", mode="before")
    @classmethod
    def split_lists(cls, v):
        return _split_list(v)

    @field_validator("methods")
    @classmethod
    def validate_methods(cls, v):
        if not v:
            raise ValueError("at least one method is required")
        for name in v:
            if name not in METHOD_SELECTORS:
                raise ValueError(f"unknown method {name!r}; valid selectors: {', '.join(METHOD_SELECTORS)}")
        return v

    @field_validator("protocols")
    @classmethod
    def validate_protocols(cls, v):
        short = {Protocol.UPPER_BOUND: "P1", Protocol.LOWER_BOUND: "P2", Protocol.INCREMENTAL: "P3"}
        return [short[Protocol.parse(p)] for p in v]

    @field_validator("phase_sizes")
    @classmethod
    def validate_phases(cls, v):
        if not v or any(s < 1 for s in v):
            raise ValueError(f"phase sizes must be a non-empty list of positive integers, got {v}")
        return v

    @field_validator("q")
    @classmethod
    def validate_bits(cls, v):
        if v not in STANDARD_BITS:
            logger.warning(f"q={v} is not one of the usual code lengths {STANDARD_BITS}; continuing")
        return v

    def code_learner(self) -> CodeLearnerConfig:
        return CodeLearnerConfig(q=self.q, lambda_h=self.lambda_h, seed=self.seed,
                                 **self.codegen.model_dump())

    def train_config(self) -> TrainConfig:
        return TrainConfig(**self.mlp.model_dump())


def _parse_scalar(text: str) -> Any:
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def _nest(flat: Dict[str, Any]) -> Dict[str, Any]:
    nested: Dict[str, Any] = {}
    for key, value in flat.items():
        parts = key.split(".")
        node = nested
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return nested


def merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = value
    return out


def parse_overrides(pairs: List[str]) -> Dict[str, Any]:
    """`key=value` strings (dotted keys for nested sections) to a nested dict."""
    flat = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"expected key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        flat[key.strip()] = _parse_scalar(value.strip())
    return _nest(flat)


def load_config_file(path) -> Dict[str, Any]:
    """YAML for .yaml/.yml files, key=value lines otherwise."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file does not exist: {path}")
    if path.suffix in (".yaml", ".yml"):
        with open(path, "r") as f:
            return yaml.safe_load(f) or {}
    lines = [line.strip() for line in path.read_text().splitlines()]
    return parse_overrides([line for line in lines if line and not line.startswith("#")])


def validate_config(config_dict: dict) -> RunConfig:
    """
    Validates the configuration dictionary using Pydantic models.
    Returns a validated RunConfig object.
    raises ValidationError if config is invalid.
    """
    try:
        config = RunConfig(**config_dict)
        logger.info("Configuration validation successful.")
        return config
    except Exception as e:
        logger.error(f"Configuration validation failed: {e}")
        raise
