"""Three-stage training: joint pretraining, aggregator teacher-student
training with frozen experts and split learning rates, low-rate fine-tune.

Stage boundaries come from (e_start, e_end, e_total): epochs below e_start
jointly train backbone, invariant extractor, and experts at the base rate
with domain weight delta; epochs in [e_start, e_end) freeze the expert
group, train the aggregators at lr*f_high and everything else at lr*f_low
with the reduced weight delta'; remaining epochs train everything at
lr*f_low. Label masking (probability sigma, one draw per batch) is active
only in stages 2-3 and routes the batch through the aggregators.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .backbone import base_loss, make_batch
from .disentangle import (
    difference_loss,
    disentanglement_loss,
    domain_adversarial_loss,
    reconstruction_loss,
)
from .metrics import ade as ade_metric
from .metrics import fde as fde_metric
from .model import PARAM_GROUPS, MultiDomainPredictor, group_of
from .nn import Adam, GroupSpec
from .pipeline import DomainCorpus
from .scenes import MASKED, HyperParams

@dataclass(frozen=True)
class StageSchedule:
    """Per-epoch training regime: rates, freezes, and the domain weight."""

    stage: int
    epoch: int
    multipliers: dict[str, float]
    frozen: dict[str, bool]
    domain_weight: float
    masking_active: bool


def schedule_for_epoch(epoch: int, hp: HyperParams) -> StageSchedule:
    groups = PARAM_GROUPS
    if epoch < hp.e_start:
        return StageSchedule(
            stage=1, epoch=epoch,
            multipliers={g: 1.0 for g in groups},
            frozen={g: False for g in groups},
            domain_weight=hp.delta,
            masking_active=False,
        )
    if epoch < hp.e_end:
        mult = {g: hp.f_low for g in groups}
        mult["aggregators"] = hp.f_high
        frozen = {g: False for g in groups}
        frozen["experts"] = True
        return StageSchedule(
            stage=2, epoch=epoch, multipliers=mult, frozen=frozen,
            domain_weight=hp.delta_prime, masking_active=True,
        )
    return StageSchedule(
        stage=3, epoch=epoch,
        multipliers={g: hp.f_low for g in groups},
        frozen={g: False for g in groups},
        domain_weight=hp.delta_prime,
        masking_active=True,
    )


def make_optimizer_groups(model: MultiDomainPredictor,
                          schedule: StageSchedule) -> list[GroupSpec]:
    """Partition the parameter store into the six stage-tagged groups."""
    members: dict[str, list[str]] = {g: [] for g in schedule.multipliers}
    for name in model.store.names():
        members[group_of(name)].append(name)
    return [
        GroupSpec(
            name=g,
            param_names=members[g],
            multiplier=schedule.multipliers[g],
            frozen=schedule.frozen[g],
        )
        for g in schedule.multipliers
        if members[g]
    ]


@dataclass
class TrainOptions:
    """What the loop trains: full method by default, ablations by flag."""

    zero_invariant: bool = False
    zero_specific: bool = False
    aux_losses: bool = True      # False = plain backbone objective (vanilla)


@dataclass
class BatchLosses:
    base: float
    recon: float
    diff: float
    similar: float
    ours: float
    total: float
    n_scenes: int


@dataclass
class TrainResult:
    model: MultiDomainPredictor
    records: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_val_ade: float = float("inf")

    def write_log(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


class TrainingDiverged(RuntimeError):
    pass


def total_loss(model: MultiDomainPredictor, batch, label, schedule: StageSchedule,
               masked: bool, z: np.ndarray, options: TrainOptions,
               hp: HyperParams):
    """Build the loss graph for one batch; returns (loss Var, BatchLosses)."""
    routing = MASKED if masked else label
    out = model.forward(
        batch, routing=routing, z=z,
        zero_invariant=options.zero_invariant,
        zero_specific=options.zero_specific,
    )
    l_base = base_loss(out.pred_rel, batch.future_rel)
    b = batch.size
    if not options.aux_losses:
        stats = BatchLosses(float(l_base.data) / b, 0.0, 0.0, 0.0, 0.0,
                            float(l_base.data) / b, b)
        return l_base, stats

    recon = reconstruction_loss(
        batch.focal_disp, model.reconstruct(out.indiv_inv, out.indiv_spec),
        hp.simse_variant,
    )
    diff = difference_loss(out.indiv_inv, out.indiv_spec, out.neigh_inv, out.neigh_spec)
    if masked:
        similar = ad.constant(0.0)
    else:
        similar = domain_adversarial_loss(
            model.classifier, out.indiv_inv, out.neigh_inv,
            out.indiv_spec, out.neigh_spec, label, hp.n_domains,
        )
    ours = disentanglement_loss(hp, recon, diff, similar)
    loss = l_base + schedule.domain_weight * ours
    stats = BatchLosses(
        base=float(l_base.data) / b,
        recon=float(recon.data) / b,
        diff=float(diff.data) / b,
        similar=float(similar.data) / b,
        ours=float(ours.data) / b,
        total=float(loss.data) / b,
        n_scenes=b,
    )
    return loss, stats


def _domain_batches(corpus: DomainCorpus, batch_size: int,
                    rng: np.random.Generator) -> list[list]:
    idx = rng.permutation(len(corpus.train_scenes))
    scenes = [corpus.train_scenes[i] for i in idx]
    return [scenes[i : i + batch_size] for i in range(0, len(scenes), batch_size)]


def _round_robin(per_domain: list[list[list]]) -> list[tuple[int, list]]:
    """Interleave domain batch queues: d0 b0, d1 b0, ..., d0 b1, ..."""
    out = []
    depth = max((len(q) for q in per_domain), default=0)
    for i in range(depth):
        for k, queue in enumerate(per_domain):
            if i < len(queue):
                out.append((k, queue[i]))
    return out


def _validation_metrics(model: MultiDomainPredictor, corpora: list[DomainCorpus],
                        schedule: StageSchedule, options: TrainOptions,
                        batch_size: int) -> tuple[float, float]:
    """Mean val ADE/FDE across source domains at z=0.

    Stage 1 validates through the labeled expert path; stages 2-3 validate
    through the aggregators, matching how the model will be used.
    """
    ades, fdes = [], []
    for k, corpus in enumerate(corpora):
        scenes = corpus.val_scenes
        preds, truths = [], []
        for i in range(0, len(scenes), batch_size):
            chunk = list(scenes[i : i + batch_size])
            batch = make_batch(chunk)
            routing = k if schedule.stage == 1 else MASKED
            out = model.forward(
                batch, routing=routing,
                zero_invariant=options.zero_invariant,
                zero_specific=options.zero_specific,
            )
            preds.append(out.pred_rel.data)
            truths.append(batch.future_rel)
        pred = np.concatenate(preds, axis=0)
        truth = np.concatenate(truths, axis=0)
        ades.append(ade_metric(pred, truth))
        fdes.append(fde_metric(pred, truth))
    return float(np.mean(ades)), float(np.mean(fdes))


def run_training(corpora: list[DomainCorpus], hp: HyperParams,
                 options: TrainOptions | None = None,
                 epoch_callback=None) -> TrainResult:
    """Run the full three-stage procedure over K source corpora.

    Deterministic given hp.seed: initialization, batch order, masking
    draws, and noise draws all derive from it. Returns the model with the
    best-validation-ADE parameters restored, plus per-epoch records.
    `epoch_callback(epoch, schedule, model)`, when given, fires after each
    epoch's updates (instrumentation hook; must not mutate the model).
    """
    if not corpora:
        raise ValueError("need at least one source corpus")
    for corpus in corpora:
        if not corpus.train_scenes or not corpus.val_scenes:
            raise ValueError(f"corpus {corpus.domain_id!r} has an empty split")
    options = options or TrainOptions()
    hp = hp.with_(n_domains=len(corpora))

    model = MultiDomainPredictor(
        hp,
        zero_invariant=options.zero_invariant,
        zero_specific=options.zero_specific,
    )
    optimizer = Adam(model.store, lr=hp.lr)
    rng = np.random.default_rng(np.random.SeedSequence([hp.seed, 1]))

    result = TrainResult(model=model)
    best_params: dict[str, np.ndarray] | None = None

    for epoch in range(hp.e_total):
        schedule = schedule_for_epoch(epoch, hp)
        groups = make_optimizer_groups(model, schedule)
        queues = [_domain_batches(c, hp.batch_size, rng) for c in corpora]
        sums = {"base": 0.0, "recon": 0.0, "diff": 0.0, "similar": 0.0,
                "ours": 0.0, "total": 0.0}
        n_batches = 0
        for label, scenes in _round_robin(queues):
            masked = bool(
                options.aux_losses
                and schedule.masking_active
                and rng.random() < hp.sigma
            )
            batch = make_batch(scenes)
            z = rng.standard_normal((batch.size, hp.noise_dim))
            model.store.zero_grads()
            loss, stats = total_loss(
                model, batch, label, schedule, masked, z, options, hp
            )
            if not np.isfinite(loss.data):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, domain {label}: "
                    f"base={stats.base}, ours={stats.ours}"
                )
            ad.backward(loss)
            optimizer.step(groups)
            for key, value in (("base", stats.base), ("recon", stats.recon),
                               ("diff", stats.diff), ("similar", stats.similar),
                               ("ours", stats.ours), ("total", stats.total)):
                sums[key] += value
            n_batches += 1

        if epoch_callback is not None:
            epoch_callback(epoch, schedule, model)
        val_ade, val_fde = _validation_metrics(
            model, corpora, schedule, options, hp.batch_size
        )
        record = {
            "epoch": epoch,
            "stage": schedule.stage,
            "train_base": sums["base"] / n_batches,
            "train_recon": sums["recon"] / n_batches,
            "train_diff": sums["diff"] / n_batches,
            "train_similar": sums["similar"] / n_batches,
            "train_ours": sums["ours"] / n_batches,
            "train_total": sums["total"] / n_batches,
            "val_ade": val_ade,
            "val_fde": val_fde,
        }
        if not all(np.isfinite(v) for v in record.values() if isinstance(v, float)):
            raise TrainingDiverged(f"non-finite epoch record: {record}")
        result.records.append(record)
        if val_ade < result.best_val_ade:
            result.best_val_ade = val_ade
            result.best_epoch = epoch
            best_params = model.store.snapshot()

    if best_params is not None:
        model.store.load(best_params)
    return result
