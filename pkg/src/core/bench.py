"""
Benchmark orchestrator: the method x min_size x parameter draw x repeat matrix
"""

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from .config import BenchmarkConfig, BOConfig, GAConfig, ObjectiveConfig
from .datasets import ScenarioInstance, build_instances, write_dataset
from .errors import ConfigError, SubgroupError
from .objective import FitnessCache, RuleEvaluator
from .stats import summary_tables, write_summaries
from ..optimizers.base import Optimizer
from ..optimizers.baselines import ExhaustiveResult, ExhaustiveSearch, GreedySearch, OracleCache
from ..optimizers.bo import BayesianOptimizer
from ..optimizers.ga import GeneticAlgorithm
from ..utils import JsonlWriter, Logger, check_writable, derive_seed, ensure_directory


RUN_COLUMNS = [
    "method", "scenario", "min_size", "param_idx", "repeat", "seed",
    "best_fitness", "subgroup_size", "ratio_to_opt", "hit_opt", "wall_s", "rule_bits", "rule_text",
    "instance", "dataset_hash", "subgroup_hash", "status",
]
HIT_TOLERANCE = 1e-9
CLI_ORACLE_CAP = 16


@dataclass(frozen=True)
class ParamDraw:
    index: int
    population_size: int
    generations: int
    bo_budget: int


@dataclass(frozen=True)
class Cell:
    instance: int
    method: str
    min_size: int
    param_idx: int
    repeat: int
    seed: int

    @property
    def cell_id(self) -> str:
        return f"{self.method}_i{self.instance}_m{self.min_size}_p{self.param_idx}_r{self.repeat}"


def cell_seed(base_seed: int, method: str, min_size: int, param_idx: int, repeat: int, instance: int = 0) -> int:
    return derive_seed(base_seed, "run", method, min_size, param_idx, repeat, instance)


def draw_params(config: BenchmarkConfig) -> List[ParamDraw]:
    """Uniform integer draws from the configured ranges, one stream per draw index"""
    draws = []
    ranges = config.ranges
    for k in range(config.param_draws):
        rng = np.random.default_rng(derive_seed(config.seed, "params", k))
        draws.append(ParamDraw(
            index=k,
            population_size=int(rng.integers(ranges.population_size[0], ranges.population_size[1] + 1)),
            generations=int(rng.integers(ranges.generations[0], ranges.generations[1] + 1)),
            bo_budget=int(rng.integers(ranges.bo_budget[0], ranges.bo_budget[1] + 1)),
        ))
    return draws


def plan_cells(config: BenchmarkConfig, instances: int) -> List[Cell]:
    """Cells in output order: instance, min_size, param draw, method, repeat"""
    cells = []
    for i in range(instances):
        for min_size in config.min_sizes:
            for k in range(config.param_draws):
                for method in config.methods:
                    for r in range(config.repeats):
                        cells.append(Cell(i, method, min_size, k, r, cell_seed(config.seed, method, min_size, k, r, i)))
    return cells


def build_optimizer(method: str, instance: ScenarioInstance, objective: ObjectiveConfig, params: ParamDraw,
                    seed: int, config: BenchmarkConfig, evaluator: RuleEvaluator,
                    oracle_cap: int) -> Optimizer:
    if method in ("ga", "ga-quotient"):
        ga_config = GAConfig(
            population_size=params.population_size,
            generations=params.generations,
            crossover_prob=config.crossover_prob,
            mutation_prob=config.mutation_prob,
            quotient_aware=method == "ga-quotient",
            equivalence=config.equivalence,
            include_numeric=not config.is_discrete,
            seed=seed,
        )
        return GeneticAlgorithm(instance.cohort, ga_config, objective, instance.universe, evaluator)
    if method in ("bo", "bo-quotient"):
        bo_config = BOConfig(
            budget=params.bo_budget,
            initial_design=min(config.bo_initial_design, params.bo_budget),
            quotient_aware=method == "bo-quotient",
            equivalence=config.equivalence,
            seed=seed,
        )
        return BayesianOptimizer(instance.cohort, instance.universe, bo_config, objective,
                                 instance.semantics, evaluator)
    if method == "greedy":
        return GreedySearch(instance.cohort, instance.universe, objective, instance.semantics, evaluator)
    if method == "exhaustive":
        return ExhaustiveSearch(instance.cohort, instance.universe, objective, instance.semantics, oracle_cap)
    raise ConfigError(f"Unknown method: {method}")


def ratio_and_hit(best: Optional[float], optimum: Optional[float]) -> Tuple[Optional[float], Optional[int]]:
    """Ratio max(best, 0) / optimum and the hit flag; both None without a feasible optimum"""
    if optimum is None or best is None or optimum <= 0:
        return None, None
    ratio = max(best, 0.0) / optimum
    hit = int(abs(best - optimum) <= HIT_TOLERANCE * abs(optimum))
    return ratio, hit


@dataclass
class BenchmarkResult:
    success: bool = False
    runs: int = 0
    failures: int = 0
    duration: float = 0.0
    runs_path: Optional[Path] = None
    summary_path: Optional[Path] = None
    rows: List[Dict] = field(default_factory=list)
    oracles: Dict[Tuple[int, int], ExhaustiveResult] = field(default_factory=dict)
    error: Optional[str] = None


class BenchmarkRunner:
    """Runs the full matrix, writes per-run CSV, JSONL traces and summaries"""

    def __init__(self, config: BenchmarkConfig, out_dir: Path, force: bool = False,
                 oracle_cap: Optional[int] = None):
        self.config = config
        self.out_dir = Path(out_dir)
        self.force = force
        self.oracle_cap = oracle_cap if oracle_cap is not None else config.oracle_cap
        self.logger = Logger()
        self.params = draw_params(config)
        self.instances: List[ScenarioInstance] = []
        self.oracles: Dict[Tuple[int, int], ExhaustiveResult] = {}
        self._caches: Dict[Tuple[int, int], FitnessCache] = {}

    @property
    def runs_path(self) -> Path:
        return self.out_dir / "runs.csv"

    @property
    def trace_dir(self) -> Path:
        return self.out_dir / "traces"

    def execute(self) -> BenchmarkResult:
        start_time = time.perf_counter()
        result = BenchmarkResult()

        self.logger.progress("Starting benchmark...", "🚀")
        # 1. Preparar directorio de salida
        self._prepare_outputs()

        # 2. Construir datasets y validar métodos
        self._build_instances()
        self._validate_methods()

        # 3. Óptimos exhaustivos (solo espacio discreto)
        if self.config.is_discrete:
            self._compute_oracles()
        result.oracles = dict(self.oracles)

        # 4. Ejecutar todas las celdas
        cells = plan_cells(self.config, len(self.instances))
        self.logger.progress(f"Running {len(cells)} runs on {self.config.workers} worker(s)...", "🏃")
        rows = self._run_cells(cells)

        # 5. Guardar CSV por ejecución
        frame = pd.DataFrame(rows, columns=RUN_COLUMNS, dtype=object)
        frame.to_csv(self.runs_path, index=False, na_rep="", lineterminator="\n")
        result.runs_path = self.runs_path

        # 6. Resúmenes agregados
        summary, cell_summary, excluded = summary_tables(frame)
        result.summary_path = write_summaries(summary, cell_summary, self.out_dir, trace_dir=self.trace_dir)

        result.rows = rows
        result.runs = len(rows)
        result.failures = excluded
        result.success = excluded == 0
        result.duration = time.perf_counter() - start_time
        return result

    def _prepare_outputs(self) -> None:
        ensure_directory(str(self.out_dir))
        for name in ("runs.csv", "summary.csv", "summary_cells.csv"):
            check_writable(self.out_dir / name, self.force)
        ensure_directory(str(self.trace_dir))

    def _build_instances(self) -> None:
        self.logger.progress("Building datasets...", "🧪")
        self.instances = build_instances(self.config)
        for instance in self.instances:
            write_dataset(instance, self.out_dir / "datasets" / f"instance_{instance.index}", force=True)
            planted = f", planted {instance.planted.to_string()}" if instance.planted else ""
            self.logger.info(
                f"Instance {instance.index}: {instance.cohort.size} records, {instance.universe.n} atoms{planted}"
            )
        self.logger.success(f"{len(self.instances)} dataset(s) ready")

    def _validate_methods(self) -> None:
        if "exhaustive" not in self.config.methods:
            return
        widest = max(instance.universe.n for instance in self.instances)
        if widest > self.oracle_cap:
            raise ConfigError(f"Method 'exhaustive' needs {widest} atoms but the oracle cap is {self.oracle_cap}",
                              detail="drop the method or raise the cap with --allow-large")

    def _compute_oracles(self) -> None:
        self.logger.progress("Computing exhaustive optima...", "🔍")
        cache = OracleCache(self.out_dir / "oracle")
        for instance in self.instances:
            if instance.universe.n > self.oracle_cap:
                self.logger.warning(
                    f"Instance {instance.index}: {instance.universe.n} atoms exceed the oracle cap "
                    f"{self.oracle_cap}; ratios will be empty"
                )
                continue
            for min_size in self.config.min_sizes:
                objective = self._objective(min_size)
                oracle = cache.get_or_compute(instance.cohort, instance.universe, objective,
                                              instance.semantics, self.oracle_cap, self.config.workers)
                self.oracles[(instance.index, min_size)] = oracle
                self.logger.info(
                    f"Instance {instance.index}, min size {min_size}: optimum {oracle.best_fitness:.6g} "
                    f"({oracle.best_rule_text or 'infeasible'})"
                )
        self.logger.success("Oracle optima ready")

    def _objective(self, min_size: int) -> ObjectiveConfig:
        return ObjectiveConfig(min_subgroup_size=min_size, infeasible_fitness=self.config.infeasible_fitness)

    def _cache(self, instance: int, min_size: int) -> FitnessCache:
        return self._caches.setdefault((instance, min_size), FitnessCache())

    def _run_cells(self, cells: List[Cell]) -> List[Dict]:
        for key in {(c.instance, c.min_size) for c in cells}:
            self._cache(*key)
        if self.config.workers > 1:
            with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
                rows = list(pool.map(self._run_cell, cells))
        else:
            rows = []
            for done, cell in enumerate(cells, 1):
                rows.append(self._run_cell(cell))
                if done % 50 == 0:
                    self.logger.info(f"{done}/{len(cells)} runs finished")
        return rows

    def _run_cell(self, cell: Cell) -> Dict:
        instance = self.instances[cell.instance]
        row: Dict = {
            "method": cell.method,
            "scenario": self.config.scenario,
            "min_size": cell.min_size,
            "param_idx": cell.param_idx,
            "repeat": cell.repeat,
            "seed": cell.seed,
            "instance": cell.instance,
            "dataset_hash": instance.dataset_hash,
        }
        trace_path = self.trace_dir / f"{cell.cell_id}.jsonl"
        if trace_path.exists():
            os.remove(trace_path)
        writer = JsonlWriter(trace_path)

        try:
            objective = self._objective(cell.min_size)
            evaluator = RuleEvaluator(instance.cohort, objective, instance.universe, instance.semantics,
                                      self._cache(cell.instance, cell.min_size))
            optimizer = build_optimizer(cell.method, instance, objective, self.params[cell.param_idx],
                                        cell.seed, self.config, evaluator, self.oracle_cap)
            record = optimizer.run()
        except Exception as e:
            # Registrar el fallo y seguir con la siguiente celda
            code = e.code if isinstance(e, SubgroupError) else type(e).__name__
            self.logger.error(f"Run {cell.cell_id} failed: {e}")
            writer.write("failure", cell=cell.cell_id, method=cell.method, seed=cell.seed, error=str(e), code=code)
            row.update({c: None for c in RUN_COLUMNS if c not in row})
            row["status"] = f"failed:{code}"
            return row

        if self.config.timing == "off":
            record.wall_time = 0.0
        oracle = self.oracles.get((cell.instance, cell.min_size))
        optimum = oracle.best_fitness if oracle is not None and oracle.feasible else None
        ratio, hit = ratio_and_hit(record.best_fitness if record.feasible else 0.0, optimum)
        record.write_log(writer, cell=cell.cell_id, scenario=self.config.scenario,
                         min_size=cell.min_size, param_idx=cell.param_idx, repeat=cell.repeat,
                         instance=cell.instance, dataset_hash=instance.dataset_hash)

        row.update({
            "best_fitness": record.best_fitness,
            "subgroup_size": record.subgroup_size,
            "ratio_to_opt": ratio,
            "hit_opt": hit,
            "wall_s": record.wall_time,
            "rule_bits": record.best_rule_bits,
            "rule_text": record.best_rule_text,
            "subgroup_hash": record.subgroup_hash,
            "status": "ok",
        })
        self.logger.debug(f"{cell.cell_id}: {record.best_fitness:.6g} ({record.best_rule_text})")
        return row

    def print_summary(self, result: BenchmarkResult) -> None:
        if result.success:
            self.logger.success("🎉 Benchmark completed successfully!")
        else:
            self.logger.warning(f"Benchmark finished with {result.failures} failed run(s)")
        self.logger.info("BENCHMARK SUMMARY", "📊")
        self.logger.info(f"   • Runs: {result.runs}")
        self.logger.info(f"   • Failed: {result.failures}")
        self.logger.info(f"   • Duration: {result.duration:.1f} seconds")
        if result.runs_path:
            self.logger.info(f"   • Per-run CSV: {result.runs_path}")
        if result.summary_path:
            self.logger.info(f"   • Summary CSV: {result.summary_path}")
