"""
Configuration management: pydantic models, YAML files and .env overrides
"""

import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import yaml
from dotenv import dotenv_values
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from .cohort import CategoricalField, NumericField, Schema
from .errors import ConfigError
from ..utils import Logger


METHODS = ("ga", "ga-quotient", "bo", "bo-quotient", "greedy", "exhaustive")
SCENARIOS = ("synthetic-discrete", "synthetic-mixed", "file-discrete", "file-mixed")

Method = Literal["ga", "ga-quotient", "bo", "bo-quotient", "greedy", "exhaustive"]
Scenario = Literal["synthetic-discrete", "synthetic-mixed", "file-discrete", "file-mixed"]

ENV_FILES = (".env.local", ".env")
ENV_OVERRIDES = {
    "SUBGROUP_SEED": "seed",
    "SUBGROUP_WORKERS": "workers",
    "SUBGROUP_ORACLE_CAP": "oracle_cap",
}


class CategoricalFieldDecl(BaseModel):
    name: str
    levels: List[str] = Field(..., min_length=2)

    @field_validator("levels")
    @classmethod
    def validate_levels(cls, v):
        if len(set(v)) != len(v):
            raise ValueError(f"Duplicate levels: {v}")
        return v


class NumericFieldDecl(BaseModel):
    name: str
    min: Optional[float] = None
    max: Optional[float] = None

    @model_validator(mode="after")
    def validate_range(self):
        if self.min is not None and self.max is not None and self.min > self.max:
            raise ValueError(f"Field {self.name}: min {self.min} > max {self.max}")
        return self


class SchemaDeclaration(BaseModel):
    """Declared record schema (categorical levels, numeric ranges, biomarker column)"""
    categorical: List[CategoricalFieldDecl] = Field(default_factory=list)
    numeric: List[NumericFieldDecl] = Field(default_factory=list)
    biomarker: str = Field(default="biomarker", min_length=1)

    @model_validator(mode="after")
    def validate_names(self):
        names = [f.name for f in self.categorical] + [f.name for f in self.numeric] + [self.biomarker]
        reserved = {"record_id", "is_hv"}
        if len(set(names)) != len(names):
            raise ValueError(f"Field names must be unique: {names}")
        if reserved & set(names):
            raise ValueError(f"Field names {sorted(reserved)} are reserved")
        return self

    def to_schema(self) -> Schema:
        return Schema(
            categorical_fields=tuple(CategoricalField(f.name, tuple(f.levels)) for f in self.categorical),
            numeric_fields=tuple(NumericField(f.name, f.min, f.max) for f in self.numeric),
            biomarker_field=self.biomarker,
        )

    @classmethod
    def from_schema(cls, schema: Schema) -> "SchemaDeclaration":
        return cls(
            categorical=[CategoricalFieldDecl(name=f.name, levels=list(f.levels)) for f in schema.categorical_fields],
            numeric=[NumericFieldDecl(name=f.name, min=f.minimum, max=f.maximum) for f in schema.numeric_fields],
            biomarker=schema.biomarker_field,
        )


def default_schema(mixed: bool = False) -> SchemaDeclaration:
    """Dry-eye style schema: 10 category atoms, plus two numeric scores when mixed"""
    declaration = SchemaDeclaration(
        categorical=[
            CategoricalFieldDecl(name="DED", levels=["healthy", "mild", "moderate", "severe"]),
            CategoricalFieldDecl(name="Gender", levels=["male", "female"]),
            CategoricalFieldDecl(name="MGD", levels=["absent", "present"]),
            CategoricalFieldDecl(name="Smoker", levels=["no", "yes"]),
        ],
        biomarker="biomarker",
    )
    if mixed:
        declaration.numeric = [
            NumericFieldDecl(name="OSDI", min=0.0, max=100.0),
            NumericFieldDecl(name="TBUT", min=0.0, max=30.0),
        ]
    return declaration


class ObjectiveConfig(BaseModel):
    min_subgroup_size: int = Field(default=10, ge=1)
    infeasible_fitness: float = Field(default=-1.0e9, lt=0)


class EquivalenceConfig(BaseModel):
    epsilon: float = Field(default=0.1, gt=0)
    min_pts: int = Field(default=3, ge=2)
    tau: int = Field(default=10, ge=1)


class GAConfig(BaseModel):
    population_size: int = Field(default=50, ge=2)
    generations: int = Field(default=60, ge=1)
    crossover_prob: float = Field(default=0.8, ge=0, le=1)
    mutation_prob: float = Field(default=0.1, ge=0, le=1)
    quotient_aware: bool = False
    equivalence: EquivalenceConfig = Field(default_factory=EquivalenceConfig)
    tournament_size: int = Field(default=3, ge=1)
    threshold_sigma: float = Field(default=0.1, gt=0, description="Mutation sigma as a fraction of the field range")
    include_numeric: bool = True
    seed: int = 0


class BOConfig(BaseModel):
    budget: int = Field(default=60, ge=1)
    initial_design: int = Field(default=10, ge=1)
    quotient_aware: bool = False
    equivalence: EquivalenceConfig = Field(default_factory=EquivalenceConfig)
    full_pool_max_bits: int = Field(default=14, ge=1)
    pool_size: int = Field(default=2048, ge=1)
    theta0_grid: List[float] = Field(default_factory=lambda: [0.1, 0.3, 1.0, 3.0, 10.0])
    theta1_grid: List[float] = Field(default_factory=lambda: [0.03, 0.1, 0.3, 1.0, 3.0])
    nugget_ratio: float = Field(default=1e-6, ge=0)
    max_jitter_steps: int = Field(default=6, ge=0)
    seed: int = 0

    @field_validator("theta0_grid", "theta1_grid")
    @classmethod
    def validate_grid(cls, v):
        if not v or any(x <= 0 for x in v):
            raise ValueError("Kernel grids must be non-empty and strictly positive")
        return sorted(v)

    @model_validator(mode="after")
    def validate_budget(self):
        if self.budget < self.initial_design:
            raise ValueError(f"budget {self.budget} is below the initial design size {self.initial_design}")
        return self


class DatasetConfig(BaseModel):
    n_records: int = Field(default=500, ge=2)
    hv_fraction: float = Field(default=0.2, gt=0, lt=1)
    biomarker_range: Tuple[float, float] = (0.5, 20.0)
    quantiles: List[float] = Field(default_factory=lambda: [round(0.1 * i, 1) for i in range(1, 10)])
    schema_file: Optional[Path] = None
    path: Optional[Path] = None

    @field_validator("biomarker_range")
    @classmethod
    def validate_biomarker_range(cls, v):
        low, high = v
        if not 0 < low <= high:
            raise ValueError("biomarker range must satisfy 0 < low <= high")
        return v

    @field_validator("quantiles")
    @classmethod
    def validate_quantiles(cls, v):
        if any(not 0 < q < 1 for q in v):
            raise ValueError("quantiles must lie strictly inside (0, 1)")
        return sorted(set(v))


class PlantConfig(BaseModel):
    atoms: List[str] = Field(default_factory=list, description="'Field=level' labels; random when empty")
    size: int = Field(default=2, ge=1)
    effect: float = Field(default=2.0, gt=0)
    max_retries: int = Field(default=20, ge=1)


class ParamRanges(BaseModel):
    population_size: Tuple[int, int] = (50, 100)
    generations: Tuple[int, int] = (20, 150)
    bo_budget: Tuple[int, int] = (40, 100)

    @field_validator("population_size", "generations", "bo_budget")
    @classmethod
    def validate_range(cls, v):
        if v[0] > v[1] or v[0] < 1:
            raise ValueError(f"Invalid range {v}")
        return v


class BenchmarkConfig(BaseModel):
    """Full benchmark matrix: methods x min_sizes x param_draws x repeats (x instances)"""
    scenario: Scenario = "synthetic-discrete"
    repeats: int = Field(default=20, ge=1)
    min_sizes: List[int] = Field(default_factory=lambda: [10, 20, 30])
    param_draws: int = Field(default=5, ge=1)
    methods: List[Method] = Field(default_factory=lambda: ["ga", "ga-quotient", "bo", "bo-quotient", "greedy"])
    seed: int = 0
    instances: int = Field(default=1, ge=1)
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    plant: Optional[PlantConfig] = None
    equivalence: EquivalenceConfig = Field(default_factory=EquivalenceConfig)
    crossover_prob: float = Field(default=0.8, ge=0, le=1)
    mutation_prob: float = Field(default=0.1, ge=0, le=1)
    ranges: ParamRanges = Field(default_factory=ParamRanges)
    bo_initial_design: int = Field(default=10, ge=1)
    infeasible_fitness: float = Field(default=-1.0e9, lt=0)
    workers: int = Field(default=1, ge=1)
    oracle_cap: int = Field(default=20, ge=1)
    timing: Literal["wall", "off"] = "wall"

    @field_validator("methods")
    @classmethod
    def validate_methods(cls, v):
        if not v:
            raise ValueError("At least one method is required")
        return list(dict.fromkeys(v))

    @field_validator("min_sizes")
    @classmethod
    def validate_min_sizes(cls, v):
        if not v or any(m < 1 for m in v):
            raise ValueError("min_sizes must be a non-empty list of positive integers")
        return v

    @model_validator(mode="after")
    def validate_file_scenario(self):
        if self.scenario.startswith("file-") and self.dataset.path is None:
            raise ValueError(f"Scenario {self.scenario} needs dataset.path")
        return self

    @property
    def is_discrete(self) -> bool:
        return self.scenario.endswith("-discrete")

    @property
    def is_synthetic(self) -> bool:
        return self.scenario.startswith("synthetic-")


class ConfigLoader:
    """YAML configuration loader with .env overrides"""

    def __init__(self, env_files: Tuple[str, ...] = ENV_FILES):
        self.env_files = env_files

    def read_yaml(self, config_file: Optional[str]) -> Dict[str, Any]:
        if not config_file:
            return {}
        path = Path(config_file)
        if not path.exists():
            raise ConfigError(f"Config file not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"Error loading config file {path}", detail=str(e))
        if not isinstance(data, dict):
            raise ConfigError(f"Config file {path} must contain a mapping")
        return data

    def env_values(self) -> Dict[str, str]:
        """Process environment first, then .env.local, then .env"""
        values: Dict[str, str] = {}
        for env_file in reversed(self.env_files):
            if Path(env_file).exists():
                values.update({k: v for k, v in dotenv_values(env_file).items() if v is not None})
        values.update({k: v for k, v in os.environ.items() if k.startswith("SUBGROUP_")})
        return values

    def load_benchmark(self, config_file: Optional[str] = None,
                       overrides: Optional[Dict[str, Any]] = None) -> BenchmarkConfig:
        data = self.read_yaml(config_file)

        env = self.env_values()
        for env_key, field in ENV_OVERRIDES.items():
            if env.get(env_key):
                data[field] = env[env_key]

        _merge(data, overrides or {})

        try:
            return BenchmarkConfig(**data)
        except ValidationError as e:
            raise ConfigError("Configuration validation failed", detail=_format_validation(e))

    def load_schema(self, schema_file: Optional[str] = None, mixed: bool = False) -> SchemaDeclaration:
        if not schema_file:
            return default_schema(mixed)
        data = self.read_yaml(schema_file)
        try:
            return SchemaDeclaration(**data)
        except ValidationError as e:
            raise ConfigError(f"Invalid schema in {schema_file}", detail=_format_validation(e))

    def out_dir(self, cli_value: Optional[str]) -> Path:
        if cli_value:
            return Path(cli_value)
        return Path(self.env_values().get("SUBGROUP_OUT_DIR") or "results")

    def print_config_summary(self, config: BenchmarkConfig) -> None:
        cells = len(config.methods) * len(config.min_sizes) * config.param_draws * config.repeats * config.instances

        Logger.info("=== CONFIGURATION SUMMARY ===", "📋")
        Logger.info(f"  • Scenario: {config.scenario}")
        Logger.info(f"  • Methods: {', '.join(config.methods)}")
        Logger.info(f"  • Min subgroup sizes: {config.min_sizes}")
        Logger.info(f"  • Parameter draws: {config.param_draws}")
        Logger.info(f"  • Repeats: {config.repeats} x instances: {config.instances}")
        Logger.info(f"  • Base seed: {config.seed}")
        Logger.info(f"  • Workers: {config.workers}")
        if config.is_synthetic:
            Logger.info(f"  • Records: {config.dataset.n_records} (HV fraction {config.dataset.hv_fraction})")
        else:
            Logger.info(f"  • Dataset: {config.dataset.path}")
        if config.plant:
            atoms = ", ".join(config.plant.atoms) if config.plant.atoms else f"{config.plant.size} random atoms"
            Logger.info(f"  • Plant: {atoms} x{config.plant.effect}")
        eq = config.equivalence
        Logger.info(f"  • Equivalence: eps={eq.epsilon}, minPts={eq.min_pts}, tau={eq.tau}")
        Logger.info(f"  • Total runs: {cells}")


def _merge(data: Dict[str, Any], overrides: Dict[str, Any]) -> None:
    """Apply non-None overrides; nested mappings merge key by key"""
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(data.get(key), dict):
            _merge(data[key], value)
        elif isinstance(value, dict):
            nested: Dict[str, Any] = {}
            _merge(nested, value)
            if nested:
                data[key] = nested
        else:
            data[key] = value


def _format_validation(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        location = ".".join(str(p) for p in item.get("loc", ()))
        parts.append(f"{location}: {item.get('msg')}" if location else str(item.get("msg")))
    return "; ".join(parts)


_config_loader = ConfigLoader()


def load_config(config_file: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> BenchmarkConfig:
    """Load benchmark configuration (file, then env, then explicit overrides)"""
    return _config_loader.load_benchmark(config_file, overrides)


def load_schema(schema_file: Optional[str] = None, mixed: bool = False) -> SchemaDeclaration:
    return _config_loader.load_schema(schema_file, mixed)


def print_config_summary(config: BenchmarkConfig) -> None:
    _config_loader.print_config_summary(config)
