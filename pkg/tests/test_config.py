"""
Tests for configuration loading: YAML files, .env files and explicit overrides
"""

from pathlib import Path

import pytest

from src.core.config import (
    BenchmarkConfig,
    ConfigLoader,
    GAConfig,
    SchemaDeclaration,
    default_schema,
)
from src.core.errors import ConfigError


@pytest.fixture
def clean_env(monkeypatch):
    for key in ("SUBGROUP_SEED", "SUBGROUP_WORKERS", "SUBGROUP_ORACLE_CAP", "SUBGROUP_OUT_DIR"):
        monkeypatch.delenv(key, raising=False)
    return monkeypatch


def loader_in(directory: Path) -> ConfigLoader:
    return ConfigLoader(env_files=(str(directory / ".env.local"), str(directory / ".env")))


class TestBenchmarkConfig:
    def test_defaults(self):
        config = BenchmarkConfig()
        assert config.scenario == "synthetic-discrete"
        assert config.repeats == 20
        assert config.min_sizes == [10, 20, 30]
        assert config.methods == ["ga", "ga-quotient", "bo", "bo-quotient", "greedy"]
        assert config.is_discrete and config.is_synthetic

    def test_duplicate_methods_collapse(self):
        assert BenchmarkConfig(methods=["bo", "ga", "bo"]).methods == ["bo", "ga"]

    def test_ga_defaults(self):
        config = GAConfig()
        assert (config.population_size, config.crossover_prob, config.mutation_prob) == (50, 0.8, 0.1)
        assert config.equivalence.epsilon == 0.1 and config.equivalence.tau == 10


class TestConfigLoader:
    def test_no_file_gives_defaults(self, clean_env, tmp_path):
        assert loader_in(tmp_path).load_benchmark() == BenchmarkConfig()

    def test_yaml_file(self, clean_env, tmp_path):
        path = tmp_path / "bench.yaml"
        path.write_text("repeats: 3\nequivalence:\n  epsilon: 0.25\n", encoding="utf-8")
        config = loader_in(tmp_path).load_benchmark(str(path))
        assert config.repeats == 3
        assert config.equivalence.epsilon == 0.25
        assert config.equivalence.min_pts == 3

    def test_overrides_merge_nested_mappings(self, clean_env, tmp_path):
        path = tmp_path / "bench.yaml"
        path.write_text("dataset:\n  n_records: 300\n  hv_fraction: 0.3\n", encoding="utf-8")
        config = loader_in(tmp_path).load_benchmark(str(path), {"dataset": {"n_records": 120, "path": None},
                                                               "repeats": None})
        assert config.dataset.n_records == 120
        assert config.dataset.hv_fraction == 0.3
        assert config.repeats == 20

    def test_environment_precedence(self, clean_env, tmp_path):
        (tmp_path / ".env").write_text("SUBGROUP_SEED=1\nSUBGROUP_WORKERS=2\n", encoding="utf-8")
        (tmp_path / ".env.local").write_text("SUBGROUP_SEED=5\n", encoding="utf-8")
        loader = loader_in(tmp_path)
        config = loader.load_benchmark()
        assert (config.seed, config.workers) == (5, 2)

        clean_env.setenv("SUBGROUP_SEED", "9")
        assert loader.load_benchmark().seed == 9
        assert loader.load_benchmark(overrides={"seed": 11}).seed == 11

    def test_out_dir(self, clean_env, tmp_path):
        loader = loader_in(tmp_path)
        assert loader.out_dir(None) == Path("results")
        clean_env.setenv("SUBGROUP_OUT_DIR", str(tmp_path / "env-out"))
        assert loader.out_dir(None) == tmp_path / "env-out"
        assert loader.out_dir("cli-out") == Path("cli-out")

    def test_missing_file(self, clean_env, tmp_path):
        with pytest.raises(ConfigError):
            loader_in(tmp_path).load_benchmark(str(tmp_path / "absent.yaml"))

    @pytest.mark.parametrize("text", ["repeats: [1\n", "- a\n- b\n"])
    def test_unreadable_yaml(self, clean_env, tmp_path, text):
        path = tmp_path / "bench.yaml"
        path.write_text(text, encoding="utf-8")
        with pytest.raises(ConfigError):
            loader_in(tmp_path).load_benchmark(str(path))

    @pytest.mark.parametrize("overrides", [
        {"repeats": 0},
        {"methods": ["annealing"]},
        {"min_sizes": []},
        {"scenario": "file-mixed"},
        {"dataset": {"hv_fraction": 1.0}},
        {"ranges": {"generations": [10, 5]}},
    ])
    def test_validation_errors(self, clean_env, tmp_path, overrides):
        with pytest.raises(ConfigError):
            loader_in(tmp_path).load_benchmark(overrides=overrides)

    def test_invalid_environment_value(self, clean_env, tmp_path):
        clean_env.setenv("SUBGROUP_WORKERS", "many")
        with pytest.raises(ConfigError):
            loader_in(tmp_path).load_benchmark()


class TestSchemaDeclaration:
    def test_default_schema(self):
        schema = default_schema().to_schema()
        assert [f.name for f in schema.categorical_fields] == ["DED", "Gender", "MGD", "Smoker"]
        assert schema.numeric_fields == ()
        assert [f.name for f in default_schema(mixed=True).to_schema().numeric_fields] == ["OSDI", "TBUT"]

    def test_round_trip(self):
        declaration = default_schema(mixed=True)
        assert SchemaDeclaration.from_schema(declaration.to_schema()) == declaration

    def test_schema_file(self, clean_env, tmp_path):
        path = tmp_path / "schema.yaml"
        path.write_text("categorical:\n  - name: Arm\n    levels: [a, b, c]\nnumeric:\n  - name: Age\n"
                        "    min: 18\n    max: 90\nbiomarker: IL6\n", encoding="utf-8")
        schema = loader_in(tmp_path).load_schema(str(path)).to_schema()
        assert schema.biomarker_field == "IL6"
        assert schema.categorical_fields[0].levels == ("a", "b", "c")
        assert schema.numeric_fields[0].maximum == 90.0

    @pytest.mark.parametrize("text", [
        "categorical:\n  - name: A\n    levels: [x, x]\n",
        "categorical:\n  - name: A\n    levels: [x]\n",
        "categorical:\n  - name: is_hv\n    levels: [x, y]\n",
        "numeric:\n  - name: N\n    min: 5\n    max: 1\n",
        "categorical:\n  - name: A\n    levels: [x, y]\nnumeric:\n  - name: A\n",
    ])
    def test_invalid_schema(self, clean_env, tmp_path, text):
        path = tmp_path / "schema.yaml"
        path.write_text(text, encoding="utf-8")
        with pytest.raises(ConfigError):
            loader_in(tmp_path).load_schema(str(path))


def test_example_config_file_is_valid(clean_env, tmp_path):
    example = Path(__file__).resolve().parent.parent / "config" / "benchmark.example.yaml"
    assert loader_in(tmp_path).load_benchmark(str(example)) == BenchmarkConfig()
