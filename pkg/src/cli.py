"""
Command Line Interface for subgroup-quotient
"""

import sys
from contextlib import contextmanager
from pathlib import Path
from typing import List, Optional

import click
import pandas as pd
from pydantic import ValidationError

from .core.bench import CLI_ORACLE_CAP, RUN_COLUMNS, BenchmarkRunner, ParamDraw, build_optimizer
from .core.config import METHODS, SCENARIOS, ConfigLoader, ObjectiveConfig, load_config, print_config_summary
from .core.datasets import build_instance, load_dataset, write_dataset
from .core.errors import ConfigError, SubgroupError
from .core.objective import RuleEvaluator
from .core.stats import compute_stats
from .screening.cost import brute_force_order, expected_cost, optimal_order, read_filters, write_order
from .utils import JsonlWriter, Logger, check_writable, ensure_directory


EXIT_PARTIAL = 4
UNCAPPED = 62


@contextmanager
def _handle_errors(action: str):
    """Map package errors to exit codes (2 config, 3 data); anything else exits 1"""
    try:
        yield
    except SubgroupError as e:
        Logger.error(f"{action} failed: {e}")
        sys.exit(e.exit_code)
    except ValidationError as e:
        Logger.error(f"{action} failed: invalid parameters ({e.error_count()} error(s)): {e.errors()[0].get('msg')}")
        sys.exit(ConfigError.exit_code)
    except KeyboardInterrupt:
        Logger.warning(f"{action} cancelled by user", "⚠️")
        sys.exit(1)


def _csv_list(value: Optional[str], cast=str) -> Optional[List]:
    if value is None:
        return None
    try:
        return [cast(v.strip()) for v in value.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"Invalid comma-separated list: {value!r}")


@click.group()
@click.option("--seed", type=int, default=None, help="Base seed (overrides config and SUBGROUP_SEED)")
@click.option("--config", "config_file", type=click.Path(dir_okay=False), default=None,
              help="YAML file mirroring BenchmarkConfig")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Output directory (default SUBGROUP_OUT_DIR or ./results)")
@click.option("--force", is_flag=True, help="Overwrite existing output files")
@click.option("--workers", type=int, default=None, help="Concurrent benchmark cells")
@click.option("--verbose", "-v", is_flag=True, help="Debug output")
@click.option("--quiet", "-q", is_flag=True, help="Errors and warnings only")
@click.pass_context
def cli(ctx, seed, config_file, out_dir, force, workers, verbose, quiet):
    """Conjunctive rule discovery with quotient-aware search - benchmark tool"""
    Logger.configure(verbose=verbose, quiet=quiet)
    ctx.ensure_object(dict)
    ctx.obj.update(seed=seed, config_file=config_file, out_dir=out_dir, force=force, workers=workers)


def _out_dir(ctx) -> Path:
    return ConfigLoader().out_dir(ctx.obj["out_dir"])


@cli.command()
@click.option("--scenario", type=click.Choice([s for s in SCENARIOS if s.startswith("synthetic-")]), default=None)
@click.option("--n-records", type=int, default=None)
@click.option("--hv-fraction", type=float, default=None)
@click.option("--schema", "schema_file", type=click.Path(dir_okay=False), default=None, help="Schema YAML")
@click.option("--plant", "plant_atoms", multiple=True, help="Planted atom 'Field=level' (repeatable)")
@click.option("--plant-size", type=int, default=None, help="Random plant with this many atoms")
@click.option("--effect", type=float, default=None, help="Biomarker multiplier inside the plant")
@click.option("--min-size", type=int, default=None, help="Records the plant must select")
@click.option("--instance", type=int, default=0, show_default=True)
@click.pass_context
def generate(ctx, scenario, n_records, hv_fraction, schema_file, plant_atoms, plant_size, effect, min_size, instance):
    """Generate a synthetic cohort, its universe and a ground-truth sidecar"""
    with _handle_errors("Generate"):
        plant = None
        if plant_atoms or plant_size or effect:
            plant = {"atoms": list(plant_atoms) or None, "size": plant_size, "effect": effect}
        config = load_config(ctx.obj["config_file"], {
            "scenario": scenario,
            "seed": ctx.obj["seed"],
            "min_sizes": [min_size] if min_size else None,
            "dataset": {"n_records": n_records, "hv_fraction": hv_fraction, "schema_file": schema_file},
            "plant": plant,
        })
        if not config.is_synthetic:
            raise ConfigError(f"generate needs a synthetic scenario (got {config.scenario})")

        out_dir = _out_dir(ctx)
        Logger.progress(f"Generating {config.scenario} dataset (seed {config.seed})...", "🧪")
        data = build_instance(config, instance)
        write_dataset(data, out_dir, force=ctx.obj["force"])

        Logger.success(f"Dataset written to {out_dir}")
        Logger.info(f"   • Records: {data.cohort.size} ({int(data.cohort.hv_mask.sum())} HV)")
        Logger.info(f"   • Atoms: {data.universe.n}")
        Logger.info(f"   • Dataset hash: {data.dataset_hash}")
        if data.planted is not None:
            Logger.info(f"   • Planted rule: {data.planted.to_string()}")


@cli.command()
@click.option("--method", type=click.Choice(METHODS), required=True)
@click.option("--dataset", "dataset_dir", type=click.Path(file_okay=False), required=True,
              help="Directory written by 'generate'")
@click.option("--schema", "schema_file", type=click.Path(dir_okay=False), default=None)
@click.option("--min-size", type=int, default=10, show_default=True)
@click.option("--population", type=int, default=50, show_default=True)
@click.option("--generations", type=int, default=60, show_default=True)
@click.option("--budget", type=int, default=60, show_default=True, help="BO evaluations")
@click.option("--initial-design", type=int, default=10, show_default=True)
@click.option("--epsilon", type=float, default=None)
@click.option("--min-pts", type=int, default=None)
@click.option("--tau", type=int, default=None)
@click.option("--allow-large", is_flag=True, help=f"Allow exhaustive search beyond {CLI_ORACLE_CAP} atoms")
@click.pass_context
def run(ctx, method, dataset_dir, schema_file, min_size, population, generations, budget, initial_design,
        epsilon, min_pts, tau, allow_large):
    """Run one optimizer on a dataset directory"""
    with _handle_errors("Run"):
        config = load_config(ctx.obj["config_file"], {
            "seed": ctx.obj["seed"],
            "bo_initial_design": initial_design,
            "equivalence": {"epsilon": epsilon, "min_pts": min_pts, "tau": tau},
        })
        if budget < initial_design:
            raise ConfigError(f"--budget {budget} is below --initial-design {initial_design}")
        data = load_dataset(dataset_dir, schema_file)
        config = config.model_copy(update={"scenario": "file-mixed" if data.cohort.schema.numeric_fields
                                           else "file-discrete"})
        cap = UNCAPPED if allow_large else min(CLI_ORACLE_CAP, config.oracle_cap)

        objective = ObjectiveConfig(min_subgroup_size=min_size, infeasible_fitness=config.infeasible_fitness)
        evaluator = RuleEvaluator(data.cohort, objective, data.universe, data.semantics)
        params = ParamDraw(0, population, generations, budget)
        optimizer = build_optimizer(method, data, objective, params, config.seed, config, evaluator, cap)

        Logger.progress(f"Running {method} on {dataset_dir} (seed {config.seed})...", "🏃")
        record = optimizer.run()

        out_dir = _out_dir(ctx)
        ensure_directory(str(out_dir))
        log_path = out_dir / f"run_{method}_{config.seed}.jsonl"
        row_path = out_dir / f"run_{method}_{config.seed}.csv"
        for path in (log_path, row_path):
            check_writable(path, ctx.obj["force"])
        if log_path.exists():
            log_path.unlink()
        record.write_log(JsonlWriter(log_path), dataset=str(dataset_dir), dataset_hash=data.dataset_hash,
                         min_size=min_size)

        row = {
            "method": method, "scenario": config.scenario, "min_size": min_size, "param_idx": 0, "repeat": 0,
            "seed": config.seed, "best_fitness": record.best_fitness, "subgroup_size": record.subgroup_size,
            "ratio_to_opt": None, "hit_opt": None, "wall_s": record.wall_time,
            "rule_bits": record.best_rule_bits, "rule_text": record.best_rule_text,
            "instance": data.index, "dataset_hash": data.dataset_hash,
            "subgroup_hash": record.subgroup_hash, "status": "ok",
        }
        pd.DataFrame([row], columns=RUN_COLUMNS, dtype=object).to_csv(
            row_path, index=False, na_rep="", lineterminator="\n")

        Logger.success(f"{method}: fitness {record.best_fitness:.6g}, {record.subgroup_size} records")
        Logger.info(f"   • Rule: {record.best_rule_text}")
        Logger.info(f"   • Bits: {record.best_rule_bits}")
        Logger.info(f"   • Time: {record.wall_time:.2f} seconds")
        Logger.info(f"   • Log: {log_path}")


@cli.command()
@click.option("--scenario", type=click.Choice(SCENARIOS), default=None)
@click.option("--methods", default=None, help="Comma-separated subset of: " + ", ".join(METHODS))
@click.option("--repeats", type=int, default=None)
@click.option("--param-draws", type=int, default=None)
@click.option("--min-sizes", default=None, help="Comma-separated minimum subgroup sizes")
@click.option("--instances", type=int, default=None, help="Synthetic datasets per scenario")
@click.option("--dataset", "dataset_path", type=click.Path(dir_okay=False), default=None,
              help="Cohort CSV for file scenarios")
@click.option("--timing", type=click.Choice(["wall", "off"]), default=None,
              help="'off' writes wall_s as 0 so reruns are byte-identical")
@click.option("--allow-large", is_flag=True, help=f"Allow the oracle beyond {CLI_ORACLE_CAP} atoms")
@click.option("--dry-run", is_flag=True, help="Show configuration without executing")
@click.pass_context
def bench(ctx, scenario, methods, repeats, param_draws, min_sizes, instances, dataset_path, timing,
          allow_large, dry_run):
    """Run the benchmark matrix and write per-run and summary CSVs"""
    with _handle_errors("Benchmark"):
        # Cargar configuración (YAML + flags)
        config = load_config(ctx.obj["config_file"], {
            "scenario": scenario,
            "methods": _csv_list(methods),
            "repeats": repeats,
            "param_draws": param_draws,
            "min_sizes": _csv_list(min_sizes, int),
            "instances": instances,
            "seed": ctx.obj["seed"],
            "workers": ctx.obj["workers"],
            "timing": timing,
            "dataset": {"path": dataset_path},
        })

        if dry_run:
            Logger.info("DRY RUN MODE - No runs will be executed", "🔍")
            print_config_summary(config)
            return

        # Ejecutar benchmark
        cap = config.oracle_cap if allow_large else min(CLI_ORACLE_CAP, config.oracle_cap)
        runner = BenchmarkRunner(config, _out_dir(ctx), force=ctx.obj["force"], oracle_cap=cap)
        result = runner.execute()
        # Mostrar resumen
        runner.print_summary(result)
        if not result.success:
            sys.exit(EXIT_PARTIAL)


@cli.command()
@click.argument("run_files", nargs=-1, required=True, type=click.Path(dir_okay=False))
@click.option("--traces", "trace_dir", type=click.Path(file_okay=False), default=None,
              help="JSONL trace directory for convergence.csv")
@click.pass_context
def stats(ctx, run_files, trace_dir):
    """Aggregate per-run CSV files into summary CSVs"""
    with _handle_errors("Stats"):
        out_dir = _out_dir(ctx)
        Logger.progress(f"Aggregating {len(run_files)} run file(s)...", "📊")
        summary, excluded = compute_stats(run_files, out_dir, force=ctx.obj["force"], trace_dir=trace_dir)
        click.echo(summary.to_csv(index=False, na_rep="", lineterminator="\n"), nl=False)
        Logger.success(f"Summaries written to {out_dir}")
        if excluded:
            Logger.warning(f"{excluded} failed run(s) excluded")
            sys.exit(EXIT_PARTIAL)


@cli.command("order-filters")
@click.argument("filters_csv", type=click.Path(dir_okay=False))
@click.option("--check", is_flag=True, help="Confirm against brute force over all permutations")
@click.pass_context
def order_filters(ctx, filters_csv, check):
    """Order screening filters by cost/selectivity and report the expected cost"""
    with _handle_errors("Filter ordering"):
        filters = read_filters(filters_csv)
        order = optimal_order(filters)
        cost = expected_cost(order)

        if ctx.obj["out_dir"]:
            out_dir = _out_dir(ctx)
            ensure_directory(str(out_dir))
            path = out_dir / "filter_order.csv"
            check_writable(path, ctx.obj["force"])
            write_order(order, path)
            Logger.success(f"Order written to {path}")
        else:
            click.echo(write_order(order), nl=False)

        Logger.info(f"Expected per-molecule cost: {cost:.6g}", "💰")
        if check:
            _, best = brute_force_order(filters)
            if abs(best - cost) > 1e-12 * max(1.0, abs(best)):
                raise ConfigError(f"Ordering cost {cost} differs from the brute-force minimum {best}")
            Logger.success(f"Brute force agrees: minimum {best:.6g} over all permutations")


def main():
    """Main entry point"""
    cli(obj={})


if __name__ == "__main__":
    main()
