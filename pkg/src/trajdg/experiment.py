"""Inference path, directional experiments, and report emission.

The generalization experiment mirrors the leave-one-domain-out protocol:
each method trains on the three source corpora's train splits and is
scored on the held-out domain's test split, repeated over seeds. The
source-count sweep grows the source set one domain at a time and tracks
the naive-fusion vs adaptive trends.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .backbone import make_batch
from .model import MultiDomainPredictor
from .pipeline import DomainCorpus
from .scenes import MASKED, HyperParams, TrajectoryScene
from .synth import DomainProfile, generate_synthetic_domain
from .training import TrainOptions, run_training

METHODS = ("vanilla", "adaptraj", "w/o-specific", "w/o-invariant")

METHOD_OPTIONS = {
    "vanilla": TrainOptions(zero_invariant=True, zero_specific=True, aux_losses=False),
    "adaptraj": TrainOptions(),
    "w/o-specific": TrainOptions(zero_specific=True),
    "w/o-invariant": TrainOptions(zero_invariant=True),
}

EVAL_BATCH = 256


@dataclass(frozen=True)
class EvalReport:
    """Scores of one method on one domain."""

    method: str
    domain_id: str
    ade: float
    fde: float
    n_scenes: int
    k: int
    seed: int

    def __post_init__(self):
        if self.ade < 0 or self.fde < 0:
            raise ValueError("displacement errors cannot be negative")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "domain_id": self.domain_id,
            "ade": self.ade,
            "fde": self.fde,
            "n_scenes": self.n_scenes,
            "k": self.k,
            "seed": self.seed,
        }


def run_inference(model: MultiDomainPredictor, scene: TrajectoryScene,
                  k_samples: int = 1, seed: int = 0) -> np.ndarray:
    """Predict K futures for one scene from an unseen domain.

    The scene's domain label is never consulted: the specific path always
    goes through every expert and the aggregators. Returns world-coordinate
    trajectories with shape (k_samples, PRED_LEN, 2); K=1 decodes with z=0
    and is fully deterministic.
    """
    if k_samples < 1:
        raise ValueError("k_samples must be >= 1")
    batch = make_batch([scene])
    if k_samples == 1:
        draws = np.zeros((1, 1, model.hp.noise_dim))
    else:
        rng = np.random.default_rng(np.random.SeedSequence([model.hp.seed, seed, 2]))
        draws = rng.standard_normal((k_samples, 1, model.hp.noise_dim))
    preds = []
    for z in draws:
        out = model.forward(batch, routing=MASKED, z=z)
        preds.append(out.pred_world(batch)[0])
    return np.stack(preds, axis=0)


def evaluate_scenes(model: MultiDomainPredictor, scenes: list[TrajectoryScene],
                    k_samples: int = 1, seed: int = 0) -> tuple[float, float]:
    """Best-of-K ADE/FDE over a scene list (domain labels ignored).

    With K>1 the minimum ADE and minimum FDE are taken independently per
    scene before averaging.
    """
    if not scenes:
        raise ValueError("no scenes to evaluate")
    if any(s.focal_future is None for s in scenes):
        raise ValueError("evaluation needs ground-truth futures on every scene")
    if k_samples > 1:
        rng = np.random.default_rng(np.random.SeedSequence([model.hp.seed, seed, 3]))
    ade_best = np.full(len(scenes), np.inf)
    fde_best = np.full(len(scenes), np.inf)
    for start in range(0, len(scenes), EVAL_BATCH):
        chunk = list(scenes[start : start + EVAL_BATCH])
        batch = make_batch(chunk)
        truth = batch.future_rel
        for _ in range(k_samples):
            if k_samples == 1:
                z = np.zeros((batch.size, model.hp.noise_dim))
            else:
                z = rng.standard_normal((batch.size, model.hp.noise_dim))
            pred = model.forward(batch, routing=MASKED, z=z).pred_rel.data
            dist = np.linalg.norm(pred - truth, axis=2)
            sl = slice(start, start + batch.size)
            ade_best[sl] = np.minimum(ade_best[sl], dist.mean(axis=1))
            fde_best[sl] = np.minimum(fde_best[sl], dist[:, -1])
    return float(ade_best.mean()), float(fde_best.mean())


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def default_profiles(scene_count: int = 600) -> list[DomainProfile]:
    """Desk-scale 4-domain setup: three conflicting sources, one target.

    The sources disagree in passing-side convention, crowding, and speed;
    the target's desired speed and y-anisotropy lie outside every source's
    range, so it is genuinely out of distribution.
    """
    return [
        DomainProfile(
            "plaza", desired_speed_mean=0.8, desired_speed_std=0.15,
            axis_scale_y=0.7, interaction_strength=0.8, interaction_range=2.5,
            passing_side_bias=0.9, agents_per_scene_mean=5.0,
            scene_count=scene_count,
        ),
        DomainProfile(
            "campus", desired_speed_mean=1.2, desired_speed_std=0.2,
            axis_scale_y=1.0, interaction_strength=2.0, interaction_range=1.8,
            passing_side_bias=-0.9, agents_per_scene_mean=8.0,
            scene_count=scene_count,
        ),
        DomainProfile(
            "mall", desired_speed_mean=1.0, desired_speed_std=0.25,
            axis_scale_y=1.4, interaction_strength=3.0, interaction_range=1.2,
            passing_side_bias=0.3, agents_per_scene_mean=12.0,
            scene_count=scene_count,
        ),
        DomainProfile(
            "arena", desired_speed_mean=1.7, desired_speed_std=0.25,
            axis_scale_y=2.0, interaction_strength=1.5, interaction_range=2.0,
            passing_side_bias=-0.5, agents_per_scene_mean=9.0,
            scene_count=scene_count,
        ),
    ]


def _data_seed(seed: int, domain_index: int) -> int:
    return 100000 * seed + domain_index


def generate_experiment_corpora(profiles: list[DomainProfile],
                                seed: int) -> list[DomainCorpus]:
    return [
        generate_synthetic_domain(p, _data_seed(seed, i))
        for i, p in enumerate(profiles)
    ]


@dataclass
class ExperimentResult:
    """All cells of one leave-one-out comparison."""

    target_domain: str
    methods: tuple[str, ...]
    seeds: tuple[int, ...]
    reports: list[EvalReport] = field(default_factory=list)

    def scores(self, method: str, metric: str = "ade") -> np.ndarray:
        vals = [getattr(r, metric) for r in self.reports if r.method == method]
        return np.asarray(vals, dtype=float)

    def summary(self) -> dict[str, dict[str, float]]:
        out = {}
        for method in self.methods:
            a = self.scores(method, "ade")
            f = self.scores(method, "fde")
            out[method] = {
                "ade_mean": float(a.mean()),
                "ade_std": float(a.std()),
                "fde_mean": float(f.mean()),
                "fde_std": float(f.std()),
            }
        return out

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(r.to_dict(), sort_keys=True) for r in self.reports) + "\n"

    def to_text(self) -> str:
        lines = [
            f"target domain: {self.target_domain}   seeds: {list(self.seeds)}",
            f"{'method':<16}{'ADE':>18}{'FDE':>18}",
        ]
        for method, s in self.summary().items():
            lines.append(
                f"{method:<16}{s['ade_mean']:>10.4f} ± {s['ade_std']:.4f}"
                f"{s['fde_mean']:>10.4f} ± {s['fde_std']:.4f}"
            )
        return "\n".join(lines)


def run_generalization_experiment(
    profiles: list[DomainProfile],
    target_index: int,
    methods: tuple[str, ...] = ("vanilla", "adaptraj"),
    seeds: tuple[int, ...] = (0, 1, 2),
    hp: HyperParams | None = None,
    k_samples: int = 1,
) -> ExperimentResult:
    """Train each method on the sources and score the held-out domain."""
    if len(profiles) < 2:
        raise ValueError("need at least two domains")
    if not 0 <= target_index < len(profiles):
        raise ValueError("target_index out of range")
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods: {sorted(unknown)} (choose from {METHODS})")
    hp = hp or HyperParams()

    result = ExperimentResult(
        target_domain=profiles[target_index].domain_id,
        methods=tuple(methods),
        seeds=tuple(seeds),
    )
    for seed in seeds:
        corpora = generate_experiment_corpora(profiles, seed)
        sources = [c for i, c in enumerate(corpora) if i != target_index]
        target = corpora[target_index]
        for method in methods:
            trained = run_training(sources, hp.with_(seed=seed), METHOD_OPTIONS[method])
            a, f = evaluate_scenes(
                trained.model, list(target.test_scenes), k_samples=k_samples, seed=seed
            )
            result.reports.append(
                EvalReport(
                    method=method,
                    domain_id=target.domain_id,
                    ade=a,
                    fde=f,
                    n_scenes=len(target.test_scenes),
                    k=k_samples,
                    seed=seed,
                )
            )
    return result


def generalization_gate(result: ExperimentResult) -> list[str]:
    """Directional acceptance checks; returns failure messages.

    Requires adaptraj to beat vanilla in mean ADE with strict per-seed
    improvement in at least two thirds of the seeds, and to be no worse
    than either ablation beyond one ablation-std.
    """
    failures = []
    ours = result.scores("adaptraj")
    if "vanilla" in result.methods and ours.size:
        base = result.scores("vanilla")
        if not ours.mean() < base.mean():
            failures.append(
                f"mean target ADE adaptraj {ours.mean():.4f} !< vanilla {base.mean():.4f}"
            )
        wins = int((ours < base).sum())
        need = int(np.ceil(2 * len(result.seeds) / 3))
        if wins < need:
            failures.append(f"strict per-seed wins {wins} < required {need}")
    for ablation in ("w/o-specific", "w/o-invariant"):
        if ablation not in result.methods or not ours.size:
            continue
        ab = result.scores(ablation)
        if ours.mean() > ab.mean() + ab.std():
            failures.append(
                f"mean ADE adaptraj {ours.mean():.4f} > {ablation} "
                f"{ab.mean():.4f} + std {ab.std():.4f}"
            )
    return failures


@dataclass
class SweepResult:
    """Target scores as the number of source domains grows."""

    target_domain: str
    seeds: tuple[int, ...]
    rows: list[dict] = field(default_factory=list)   # n_sources, method, seed, ade, fde

    def mean_ade(self, method: str, n_sources: int) -> float:
        vals = [
            r["ade"]
            for r in self.rows
            if r["method"] == method and r["n_sources"] == n_sources
        ]
        return float(np.mean(vals))

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(r, sort_keys=True) for r in self.rows) + "\n"

    def to_text(self) -> str:
        ns = sorted({r["n_sources"] for r in self.rows})
        methods = sorted({r["method"] for r in self.rows})
        lines = [f"target domain: {self.target_domain}  (mean ADE over seeds {list(self.seeds)})"]
        header = "n_sources" + "".join(f"{m:>16}" for m in methods)
        lines.append(header)
        for n in ns:
            lines.append(
                f"{n:>9}" + "".join(f"{self.mean_ade(m, n):>16.4f}" for m in methods)
            )
        return "\n".join(lines)


def run_source_count_sweep(
    profiles: list[DomainProfile],
    target_index: int,
    max_sources: int | None = None,
    seeds: tuple[int, ...] = (0, 1, 2),
    hp: HyperParams | None = None,
    methods: tuple[str, ...] = ("vanilla", "adaptraj"),
) -> SweepResult:
    """Train on growing prefixes of the source list; score the target."""
    source_indices = [i for i in range(len(profiles)) if i != target_index]
    if len(source_indices) < 1:
        raise ValueError("need at least one source domain")
    max_sources = max_sources or len(source_indices)
    max_sources = min(max_sources, len(source_indices))
    hp = hp or HyperParams()

    result = SweepResult(
        target_domain=profiles[target_index].domain_id, seeds=tuple(seeds)
    )
    for seed in seeds:
        corpora = generate_experiment_corpora(profiles, seed)
        target = corpora[target_index]
        for n in range(1, max_sources + 1):
            sources = [corpora[i] for i in source_indices[:n]]
            for method in methods:
                trained = run_training(
                    sources, hp.with_(seed=seed), METHOD_OPTIONS[method]
                )
                a, f = evaluate_scenes(trained.model, list(target.test_scenes))
                result.rows.append(
                    {
                        "n_sources": n,
                        "method": method,
                        "seed": seed,
                        "ade": a,
                        "fde": f,
                    }
                )
    return result


def sweep_gate(result: SweepResult, max_n: int | None = None) -> list[str]:
    """Check the adaptive trend: more sources must not hurt the target."""
    ns = sorted({r["n_sources"] for r in result.rows})
    if not ns:
        return ["sweep produced no rows"]
    top = max_n or ns[-1]
    lo, hi = result.mean_ade("adaptraj", 1), result.mean_ade("adaptraj", top)
    if hi > lo:
        return [f"adaptraj ADE with {top} sources {hi:.4f} > with 1 source {lo:.4f}"]
    return []
