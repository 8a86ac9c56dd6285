"""
Scenario datasets: building benchmark instances, writing and reloading dataset directories

A dataset directory holds ``cohort.csv``, ``universe.tsv``, ``schema.yaml`` and
``ground_truth.json`` (hashes, seed, planted rule if any).
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import yaml

from .cohort import Cohort, Schema, cohort_hash, draw_plant, generate_planted_optimum, generate_synthetic, load_csv, write_csv
from .config import BenchmarkConfig, SchemaDeclaration, load_schema
from .errors import ConfigError, DataError, DatasetHashMismatchError, UniverseMismatchError
from .objective import RuleSemantics
from .rules import BitRule, RuleUniverse, build_universe, read_universe, universe_hash, write_universe
from ..utils import Logger, check_writable, derive_seed, ensure_directory


COHORT_FILE = "cohort.csv"
UNIVERSE_FILE = "universe.tsv"
SCHEMA_FILE = "schema.yaml"
GROUND_TRUTH_FILE = "ground_truth.json"


@dataclass
class ScenarioInstance:
    """One dataset of a benchmark scenario with its atom universe"""
    index: int
    cohort: Cohort
    universe: RuleUniverse
    semantics: RuleSemantics
    seed: Optional[int] = None
    planted: Optional[BitRule] = None
    effect: Optional[float] = None

    @property
    def dataset_hash(self) -> str:
        return cohort_hash(self.cohort)

    @property
    def universe_hash(self) -> str:
        return universe_hash(self.universe)

    def ground_truth(self) -> dict:
        return {
            "instance": self.index,
            "seed": self.seed,
            "dataset_hash": self.dataset_hash,
            "universe_hash": self.universe_hash,
            "n_atoms": self.universe.n,
            "n_records": self.cohort.size,
            "n_hv": int(self.cohort.hv_mask.sum()),
            "semantics": self.semantics.value,
            "planted_bits": self.planted.to_string() if self.planted else None,
            "planted_atoms": list(self.planted.conjuncts) if self.planted else None,
            "planted_text": " AND ".join(self.universe.atoms[i].describe() for i in self.planted.conjuncts)
            if self.planted else None,
            "effect": self.effect,
        }


def scenario_schema(config: BenchmarkConfig) -> Schema:
    schema_file = str(config.dataset.schema_file) if config.dataset.schema_file else None
    schema = load_schema(schema_file, mixed=not config.is_discrete).to_schema()
    return schema.discrete() if config.is_discrete else schema


def build_instance(config: BenchmarkConfig, index: int) -> ScenarioInstance:
    """Dataset ``index`` of the configured scenario (deterministic in the base seed)"""
    schema = scenario_schema(config)
    semantics = RuleSemantics.LEVEL_SETS
    quantiles = tuple(config.dataset.quantiles)

    if not config.is_synthetic:
        cohort = load_csv(config.dataset.path, schema)
        if config.is_discrete:
            cohort = Cohort(cohort.schema.discrete(), cohort.record_ids, cohort.categorical, {},
                            cohort.biomarker, cohort.hv_mask)
        universe = build_universe(cohort.schema, cohort, quantiles)
        return ScenarioInstance(index, cohort, universe, semantics)

    seed = derive_seed(config.seed, "dataset", config.scenario, index)
    dataset = config.dataset
    universe = build_universe(schema, None, quantiles)

    if config.plant is None:
        cohort = generate_synthetic(schema, dataset.n_records, dataset.hv_fraction, seed, dataset.biomarker_range)
        if not config.is_discrete:
            universe = build_universe(schema, cohort, quantiles)
        return ScenarioInstance(index, cohort, universe, semantics, seed)

    plant = config.plant
    if plant.atoms:
        try:
            atoms = universe.ids_from_labels(plant.atoms)
        except UniverseMismatchError as e:
            raise ConfigError(f"Invalid plant atoms {plant.atoms}", detail=str(e))
    else:
        atoms = draw_plant(schema, universe, plant.size, derive_seed(seed, "plant"))
    cohort, rule = generate_planted_optimum(
        schema, dataset.n_records, seed, atoms, plant.effect,
        hv_fraction=dataset.hv_fraction,
        min_subgroup_size=max(config.min_sizes),
        universe=universe,
        max_retries=plant.max_retries,
        biomarker_range=dataset.biomarker_range,
    )
    return ScenarioInstance(index, cohort, universe, semantics, seed, rule, plant.effect)


def build_instances(config: BenchmarkConfig) -> List[ScenarioInstance]:
    count = config.instances if config.is_synthetic else 1
    return [build_instance(config, i) for i in range(count)]


def write_dataset(instance: ScenarioInstance, directory: Union[str, Path], force: bool = False) -> Path:
    """Write the four dataset files; refuses to overwrite any of them unless forced"""
    directory = Path(directory)
    targets = [directory / name for name in (COHORT_FILE, UNIVERSE_FILE, SCHEMA_FILE, GROUND_TRUTH_FILE)]
    for target in targets:
        check_writable(target, force)
    ensure_directory(str(directory))

    write_csv(instance.cohort, targets[0])
    write_universe(instance.universe, targets[1])
    with open(targets[2], "w", encoding="utf-8") as f:
        yaml.safe_dump(SchemaDeclaration.from_schema(instance.cohort.schema).model_dump(), f, sort_keys=False)
    with open(targets[3], "w", encoding="utf-8") as f:
        json.dump(instance.ground_truth(), f, indent=2, sort_keys=True)
        f.write("\n")

    Logger.debug(f"Dataset written to {directory} (hash {instance.dataset_hash[:12]})")
    return directory


def load_dataset(directory: Union[str, Path], schema_file: Optional[str] = None) -> ScenarioInstance:
    """Reload a dataset directory and check it against its recorded hashes"""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"Dataset directory not found: {directory}")

    truth_path = directory / GROUND_TRUTH_FILE
    truth = {}
    if truth_path.exists():
        with open(truth_path, "r", encoding="utf-8") as f:
            truth = json.load(f)

    schema_path = schema_file or (str(directory / SCHEMA_FILE) if (directory / SCHEMA_FILE).exists() else None)
    if schema_path is None:
        raise ConfigError(f"No schema for {directory}", detail=f"expected {SCHEMA_FILE} or --schema")
    schema = load_schema(schema_path).to_schema()

    cohort = load_csv(directory / COHORT_FILE, schema)
    universe_path = directory / UNIVERSE_FILE
    universe = read_universe(universe_path) if universe_path.exists() else build_universe(cohort.schema, cohort)

    instance = ScenarioInstance(
        index=int(truth.get("instance", 0)),
        cohort=cohort,
        universe=universe,
        semantics=RuleSemantics(truth.get("semantics", RuleSemantics.LEVEL_SETS.value)),
        seed=truth.get("seed"),
        planted=BitRule.from_string(truth["planted_bits"]) if truth.get("planted_bits") else None,
        effect=truth.get("effect"),
    )

    for key, actual in (("dataset_hash", instance.dataset_hash), ("universe_hash", instance.universe_hash)):
        expected = truth.get(key)
        if expected and expected != actual:
            raise DatasetHashMismatchError(f"{key} of {directory} does not match {GROUND_TRUTH_FILE}",
                                           detail=f"expected {expected[:12]}, found {actual[:12]}")
    return instance
