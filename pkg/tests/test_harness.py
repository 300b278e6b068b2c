import hashlib
import json

import pytest

import sampleval.harness as harness
from sampleval.dataset import save_bundle
from sampleval.harness import (
    DEFAULT_MODELS,
    RESULTS_HEADER,
    HarnessError,
    RunConfig,
    ScenarioId,
    desk_config,
    enumerate_grid,
    load_dataset,
    paper_config,
    run_grid,
)
from sampleval.samplers import SamplerError


def _micro_config(out_dir, **overrides):
    base = dict(
        dataset={"kind": "synthetic", "config": {}, "seed": 0},
        policies=("uniform", "positivity"),
        sparsities=(0.0, 0.7),
        fixed_strategies=("full", "exposed"),
        parametric_strategies=("random",),
        sample_sizes=(2, 5),
        models=(
            {"name": "popularity", "family": "popularity", "params": {}},
            {"name": "random", "family": "random", "params": {}},
            {"name": "sar", "family": "sar_cosine", "params": {}},
        ),
        metrics=(("ndcg", 5),),
        master_seed=6,
        out_dir=str(out_dir),
        bootstrap_resamples=100,
    )
    base.update(overrides)
    return RunConfig(**base)


class TestGridShape:
    def test_default_grid_size(self):
        assert len(enumerate_grid(RunConfig())) == 1512

    def test_small_grid_size(self, tmp_path):
        cfg = _micro_config(tmp_path)
        assert len(enumerate_grid(cfg)) == 2 * 2 * (2 + 1 * 2)

    def test_grid_order_blocks_by_logger(self):
        cfg = RunConfig(policies=("uniform", "popularity"), sparsities=(0.0, 0.5))
        seen = [(s.policy, s.sparsity) for s in enumerate_grid(cfg)]
        block_order = [b for i, b in enumerate(seen) if i == 0 or b != seen[i - 1]]
        assert block_order == [
            ("uniform", 0.0),
            ("uniform", 0.5),
            ("popularity", 0.0),
            ("popularity", 0.5),
        ]


class TestScenarioId:
    def test_key_format(self):
        assert ScenarioId("uniform", 0.5, "random", 20).key == "uniform|s=0.5|random@20"
        assert ScenarioId("popularity", 0.0, "full").key == "popularity|s=0.0|full"

    def test_hash_is_key_digest(self):
        scen = ScenarioId("uniform", 0.85, "wtd", 100)
        want = hashlib.sha256(scen.key.encode("utf-8")).hexdigest()[:16]
        assert scen.scenario_hash == want

    def test_distinct_scenarios_distinct_hashes(self):
        hashes = {s.scenario_hash for s in enumerate_grid(RunConfig())}
        assert len(hashes) == 1512


class TestRunConfig:
    @pytest.mark.parametrize(
        "overrides",
        [
            {"policies": ()},
            {"policies": ("organic",)},
            {"sparsities": (1.5,)},
            {"fixed_strategies": (), "parametric_strategies": ()},
            {"fixed_strategies": ("leave_one_out",)},
            {"parametric_strategies": ("stratified",)},
            {"sample_sizes": (0,)},
            {"models": ({"name": "a", "family": "popularity"}, {"name": "a", "family": "random"})},
            {"models": ({"name": "a", "family": "ncf"},)},
            {"metrics": (("auc", 10),)},
            {"metrics": (("ndcg", 0),)},
            {"questions": ("Q9",)},
            {"workers": 0},
        ],
    )
    def test_validate_rejects(self, overrides):
        with pytest.raises(HarnessError):
            RunConfig(**overrides).validate()

    def test_dict_round_trip(self):
        cfg = desk_config(out_dir="x", master_seed=3, workers=2)
        again = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert again.to_dict() == cfg.to_dict()
        assert again.sparsities == cfg.sparsities
        assert again.models == cfg.models

    def test_presets(self):
        desk = desk_config(workers=4)
        assert desk.workers == 4
        assert len(enumerate_grid(desk)) <= 200
        assert len(desk.models) == 6
        paper = paper_config()
        assert len(enumerate_grid(paper)) == 1512
        assert paper.models == DEFAULT_MODELS


class TestLoadDataset:
    def test_synthetic_deterministic(self):
        cfg = RunConfig(dataset={"kind": "synthetic", "config": {}, "seed": 7})
        a, b = load_dataset(cfg), load_dataset(cfg)
        assert a.provenance == b.provenance

    def test_ingest_kind(self, tiny_bundle, tmp_path):
        path = str(tmp_path / "bundle")
        save_bundle(tiny_bundle, path)
        cfg = RunConfig(dataset={"kind": "ingest", "path": path})
        loaded = load_dataset(cfg)
        assert loaded.n_test_users == tiny_bundle.n_test_users
        assert loaded.provenance == tiny_bundle.provenance

    def test_unknown_kind(self):
        with pytest.raises(HarnessError):
            load_dataset(RunConfig(dataset={"kind": "movielens"}))


@pytest.fixture(scope="module")
def micro_run(tmp_path_factory, tiny_bundle):
    out = tmp_path_factory.mktemp("micro")
    cfg = _micro_config(out)
    result = run_grid(cfg, bundle=tiny_bundle)
    with open(result.results_path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    with open(result.manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    return cfg, result, lines, manifest


class TestRunGrid:
    def test_result_counts(self, micro_run):
        _, result, lines, _ = micro_run
        assert result.n_scenarios == 16
        assert result.n_failed == 0
        assert result.failures == []
        # one row per scenario x metric x question
        assert len(lines) == 1 + 16 * 1 * 4

    def test_csv_schema(self, micro_run):
        _, _, lines, _ = micro_run
        assert lines[0] == RESULTS_HEADER
        assert RESULTS_HEADER.split(",") == [
            "scenario_id", "policy", "sparsity", "strategy", "n", "question",
            "metric", "k", "mean", "ci_low", "ci_high", "n_users", "n_excluded",
        ]
        for line in lines[1:]:
            f = dict(zip(RESULTS_HEADER.split(","), line.split(",")))
            assert f["policy"] in ("uniform", "positivity")
            assert f["sparsity"] in ("0.0", "0.7")
            assert (f["n"] == "") == (f["strategy"] in ("full", "exposed"))
            assert f["question"] in ("Q1", "Q2", "Q3", "Q4")
            assert f["metric"] == "ndcg" and f["k"] == "5"
            float(f["mean"])  # repr round-trips
            assert 0 < int(f["n_users"]) + int(f["n_excluded"]) <= 24

    def test_rows_follow_grid_order(self, micro_run):
        cfg, _, lines, _ = micro_run
        want = [s.scenario_hash for s in enumerate_grid(cfg) for _ in range(4)]
        assert [line.split(",", 1)[0] for line in lines[1:]] == want

    def test_full_at_zero_sparsity_is_exact(self, micro_run):
        _, _, lines, _ = micro_run
        checked = 0
        for line in lines[1:]:
            f = line.split(",")
            if f[2] == "0.0" and f[3] == "full" and f[5] in ("Q2", "Q3", "Q4"):
                assert (f[8], f[9], f[10]) == ("1.0", "1.0", "1.0"), line
                checked += 1
        assert checked == 2 * 3

    def test_manifest_contents(self, micro_run, tiny_bundle):
        cfg, _, _, manifest = micro_run
        assert manifest["package_version"] == harness.__version__
        assert manifest["grid_size"] == 16
        assert manifest["failures"] == []
        assert RunConfig.from_dict(manifest["config"]).to_dict() == cfg.to_dict()
        assert set(manifest["models"]) == {"popularity", "random", "sar"}
        assert manifest["models"]["sar"]["family"] == "sar_cosine"
        blocks = manifest["logger_blocks"]
        assert [(b["policy"], b["sparsity"]) for b in blocks] == [
            ("uniform", 0.0), ("uniform", 0.7), ("positivity", 0.0), ("positivity", 0.7),
        ]
        for b in blocks:
            assert b["repair_count"] >= 0
            assert 0.0 <= b["realized_sparsity"] <= 1.0
        assert manifest["dataset"]["n_test_users"] == tiny_bundle.n_test_users
        assert manifest["dataset"]["provenance"] == tiny_bundle.provenance
        assert "tau_variant" in manifest["design_choices"]

    def test_worker_count_does_not_change_bytes(self, micro_run, tiny_bundle, tmp_path):
        cfg, result, _, _ = micro_run
        cfg2 = _micro_config(tmp_path, workers=2)
        result2 = run_grid(cfg2, bundle=tiny_bundle)
        with open(result.results_path, "rb") as fh:
            a = fh.read()
        with open(result2.results_path, "rb") as fh:
            b = fh.read()
        assert a == b

    def test_scenario_failure_is_isolated(self, tiny_bundle, tmp_path, monkeypatch):
        real = harness.build_evaluation_set

        def flaky(bundle, source, spec, logged, seed):
            if spec.strategy == "random" and spec.n == 5:
                raise SamplerError("injected")
            return real(bundle, source, spec, logged, seed)

        monkeypatch.setattr(harness, "build_evaluation_set", flaky)
        result = run_grid(_micro_config(tmp_path), bundle=tiny_bundle)
        assert result.n_failed == 4  # random@5 in each of the four blocks
        assert all(f["key"].endswith("random@5") for f in result.failures)
        assert all("injected" in f["error"] for f in result.failures)
        with open(result.results_path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        assert len(lines) == 1 + (16 - 4) * 4
        assert not any(",random,5," in line for line in lines)
        with open(result.manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
        assert manifest["n_failed_scenarios"] == 4
        assert manifest["failures"] == sorted(result.failures, key=lambda f: f["key"])

    def test_retrain_per_block_keeps_exactness(self, tiny_bundle, tmp_path):
        cfg = _micro_config(
            tmp_path,
            policies=("uniform",),
            sparsities=(0.0,),
            fixed_strategies=("full",),
            parametric_strategies=(),
            sample_sizes=(),
            retrain_per_block=True,
        )
        result = run_grid(cfg, bundle=tiny_bundle)
        assert result.n_failed == 0
        with open(result.results_path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()[1:]
        means = {line.split(",")[5]: line.split(",")[8] for line in lines}
        assert means["Q2"] == "1.0" and means["Q3"] == "1.0" and means["Q4"] == "1.0"
