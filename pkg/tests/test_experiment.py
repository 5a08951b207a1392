import numpy as np
import pytest

from trajdg.experiment import (
    METHOD_OPTIONS,
    METHODS,
    EvalReport,
    ExperimentResult,
    SweepResult,
    evaluate_scenes,
    generalization_gate,
    run_generalization_experiment,
    run_inference,
    run_source_count_sweep,
    sweep_gate,
)
from trajdg.model import MultiDomainPredictor
from trajdg.scenes import MASKED, PRED_LEN, TrajectoryScene
from trajdg.synth import DomainProfile

from conftest import random_scene, tiny_hp


def mini_profiles(n=3, scene_count=20):
    biases = [0.8, -0.8, 0.2, -0.3]
    return [
        DomainProfile(
            f"dom{i}",
            desired_speed_mean=0.8 + 0.3 * i,
            agents_per_scene_mean=3.0,
            passing_side_bias=biases[i % 4],
            scene_count=scene_count,
        )
        for i in range(n)
    ]


def relabel(scene, domain_id):
    return TrajectoryScene(
        scene_id=scene.scene_id,
        domain_id=domain_id,
        focal_observed=scene.focal_observed,
        focal_future=scene.focal_future,
        neighbors=scene.neighbors,
        timestamp_origin=scene.timestamp_origin,
    )


class TestRunInference:
    def test_k_trajectories_of_twelve_steps(self, rng):
        model = MultiDomainPredictor(tiny_hp())
        preds = run_inference(model, random_scene(rng), k_samples=4)
        assert preds.shape == (4, PRED_LEN, 2)

    def test_k1_is_deterministic(self, rng):
        model = MultiDomainPredictor(tiny_hp())
        scene = random_scene(rng)
        a = run_inference(model, scene)
        b = run_inference(model, scene)
        assert np.array_equal(a, b)

    def test_expert_branch_never_consulted(self, rng):
        model = MultiDomainPredictor(tiny_hp())
        model.expert_route_count = 0
        run_inference(model, random_scene(rng, domain_id="dom1"), k_samples=3)
        assert model.expert_route_count == 0

    def test_domain_label_is_ignored(self, rng):
        model = MultiDomainPredictor(tiny_hp())
        scene = random_scene(rng, domain_id="dom0")
        a = run_inference(model, scene)
        b = run_inference(model, relabel(scene, "dom1"))
        c = run_inference(model, relabel(scene, MASKED))
        assert np.array_equal(a, b)
        assert np.array_equal(a, c)

    def test_invalid_sample_count_rejected(self, rng):
        model = MultiDomainPredictor(tiny_hp())
        with pytest.raises(ValueError):
            run_inference(model, random_scene(rng), k_samples=0)


class TestEvaluateScenes:
    def test_best_of_k_never_hurts(self, rng):
        model = MultiDomainPredictor(tiny_hp())
        scenes = [random_scene(rng, scene_id=f"s{i}") for i in range(6)]
        a1, f1 = evaluate_scenes(model, scenes, k_samples=1)
        a8, f8 = evaluate_scenes(model, scenes, k_samples=8)
        assert a8 <= a1 + 1e-12
        assert f8 <= f1 + 1e-12

    def test_empty_input_rejected(self):
        model = MultiDomainPredictor(tiny_hp())
        with pytest.raises(ValueError):
            evaluate_scenes(model, [])

    def test_scenes_without_futures_rejected(self, rng):
        model = MultiDomainPredictor(tiny_hp())
        scenes = [random_scene(rng, with_future=False)]
        with pytest.raises(ValueError, match="futures"):
            evaluate_scenes(model, scenes)

    def test_inference_works_without_futures(self, rng):
        model = MultiDomainPredictor(tiny_hp())
        preds = run_inference(model, random_scene(rng, with_future=False))
        assert preds.shape == (1, PRED_LEN, 2)


class TestEvalReport:
    def test_negative_errors_rejected(self):
        with pytest.raises(ValueError):
            EvalReport("vanilla", "d", -0.1, 0.2, 10, 1, 0)

    def test_round_trips_through_dict(self):
        rep = EvalReport("adaptraj", "d", 0.5, 1.0, 10, 1, 3)
        assert rep.to_dict()["method"] == "adaptraj"
        assert set(rep.to_dict()) == {
            "method", "domain_id", "ade", "fde", "n_scenes", "k", "seed",
        }


class TestMethodConfigs:
    def test_vanilla_removes_both_paths_and_aux_losses(self):
        opts = METHOD_OPTIONS["vanilla"]
        assert opts.zero_invariant and opts.zero_specific and not opts.aux_losses

    def test_ablated_models_stay_ablated_at_evaluation(self, rng):
        """A model trained with a zeroed feature path must be scored with
        that path zeroed too, not with untrained random features."""
        from trajdg.pipeline import build_corpus
        from trajdg.training import run_training

        scenes = lambda k: [
            random_scene(rng, scene_id=f"d{k}s{i}", domain_id=f"d{k}", t0=float(i))
            for i in range(14)
        ]
        corpora = [build_corpus(f"d{k}", scenes(k)) for k in range(2)]
        hp = tiny_hp(batch_size=4, e_start=1, e_end=1, e_total=1)
        trained = run_training(corpora, hp, METHOD_OPTIONS["w/o-specific"])
        model = trained.model
        assert model.zero_specific and not model.zero_invariant

        batch_scenes = list(corpora[0].test_scenes)
        from trajdg.backbone import make_batch

        batch = make_batch(batch_scenes)
        default = model.forward(batch).pred_rel.data
        explicit = model.forward(batch, zero_specific=True).pred_rel.data
        with_specific = model.forward(batch, zero_specific=False).pred_rel.data
        assert np.array_equal(default, explicit)
        assert not np.allclose(default, with_specific)

    def test_ablations_zero_exactly_one_path(self):
        assert METHOD_OPTIONS["w/o-specific"].zero_specific
        assert not METHOD_OPTIONS["w/o-specific"].zero_invariant
        assert METHOD_OPTIONS["w/o-invariant"].zero_invariant
        assert not METHOD_OPTIONS["w/o-invariant"].zero_specific
        assert METHOD_OPTIONS["w/o-specific"].aux_losses
        assert set(METHOD_OPTIONS) == set(METHODS)


@pytest.fixture(scope="module")
def tiny_result():
    hp = tiny_hp(batch_size=8, e_start=1, e_end=2, e_total=2)
    return run_generalization_experiment(
        mini_profiles(3), target_index=2,
        methods=("vanilla", "adaptraj"), seeds=(0,), hp=hp,
    )


class TestGeneralizationExperiment:
    def test_single_method_single_seed_single_row(self):
        hp = tiny_hp(batch_size=8, e_start=1, e_end=1, e_total=1)
        result = run_generalization_experiment(
            mini_profiles(3), target_index=0, methods=("vanilla",), seeds=(5,), hp=hp,
        )
        assert len(result.reports) == 1
        assert result.reports[0].method == "vanilla"
        assert result.reports[0].seed == 5

    def test_report_table_mirrors_ade_fde_layout(self, tiny_result):
        text = tiny_result.to_text()
        assert "ADE" in text and "FDE" in text
        assert "vanilla" in text and "adaptraj" in text

    def test_jsonl_report_is_deterministic(self):
        hp = tiny_hp(batch_size=8, e_start=1, e_end=1, e_total=1)
        kw = dict(target_index=1, methods=("vanilla",), seeds=(2,), hp=hp)
        a = run_generalization_experiment(mini_profiles(3), **kw)
        b = run_generalization_experiment(mini_profiles(3), **kw)
        assert a.to_jsonl() == b.to_jsonl()

    def test_unknown_method_rejected(self):
        with pytest.raises(ValueError, match="unknown methods"):
            run_generalization_experiment(
                mini_profiles(3), 0, methods=("kalman",), seeds=(0,)
            )

    def test_needs_two_domains_and_valid_target(self):
        with pytest.raises(ValueError):
            run_generalization_experiment(mini_profiles(1), 0)
        with pytest.raises(ValueError):
            run_generalization_experiment(mini_profiles(3), 7)


class TestGates:
    def _result(self, by_method):
        methods = tuple(by_method)
        seeds = tuple(range(len(next(iter(by_method.values())))))
        res = ExperimentResult("t", methods, seeds)
        for method, ades in by_method.items():
            for seed, a in enumerate(ades):
                res.reports.append(EvalReport(method, "t", a, a * 2, 10, 1, seed))
        return res

    def test_clear_win_passes(self):
        res = self._result({"vanilla": [1.0, 1.1, 0.9], "adaptraj": [0.8, 0.9, 0.85]})
        assert generalization_gate(res) == []

    def test_mean_loss_fails(self):
        res = self._result({"vanilla": [1.0, 1.0, 1.0], "adaptraj": [1.2, 1.2, 1.2]})
        assert any("!<" in msg for msg in generalization_gate(res))

    def test_insufficient_per_seed_wins_fail(self):
        res = self._result({"vanilla": [1.0, 1.0, 1.0], "adaptraj": [0.2, 1.1, 1.1]})
        assert any("per-seed wins" in msg for msg in generalization_gate(res))

    def test_ablation_tie_within_one_std_allowed(self):
        res = self._result({
            "vanilla": [1.0, 1.0, 1.0],
            "adaptraj": [0.90, 0.92, 0.91],
            "w/o-specific": [0.87, 0.93, 0.90],   # slightly better mean, tie within std
            "w/o-invariant": [0.95, 0.96, 0.94],
        })
        assert generalization_gate(res) == []

    def test_ablation_clearly_better_fails(self):
        res = self._result({
            "vanilla": [1.0, 1.0, 1.0],
            "adaptraj": [0.95, 0.95, 0.95],
            "w/o-specific": [0.5, 0.5, 0.5],
        })
        assert any("w/o-specific" in msg for msg in generalization_gate(res))

    def test_sweep_gate_checks_the_trend(self):
        res = SweepResult("t", (0,))
        res.rows = [
            {"n_sources": 1, "method": "adaptraj", "seed": 0, "ade": 1.0, "fde": 2.0},
            {"n_sources": 3, "method": "adaptraj", "seed": 0, "ade": 0.8, "fde": 1.8},
        ]
        assert sweep_gate(res) == []
        res.rows[1]["ade"] = 1.5
        assert sweep_gate(res) != []


class TestSourceCountSweep:
    def test_rows_cover_the_grid(self):
        hp = tiny_hp(batch_size=8, e_start=1, e_end=1, e_total=1)
        result = run_source_count_sweep(
            mini_profiles(4, scene_count=15), target_index=3,
            max_sources=2, seeds=(0,), hp=hp,
        )
        grid = {(r["n_sources"], r["method"]) for r in result.rows}
        assert grid == {(1, "vanilla"), (1, "adaptraj"), (2, "vanilla"), (2, "adaptraj")}
        assert "n_sources" in result.to_text()

    def test_single_source_runs_one_expert(self):
        hp = tiny_hp(batch_size=8, e_start=1, e_end=1, e_total=1)
        result = run_source_count_sweep(
            mini_profiles(3, scene_count=15), target_index=2,
            max_sources=1, seeds=(0,), hp=hp, methods=("adaptraj",),
        )
        assert {r["n_sources"] for r in result.rows} == {1}
