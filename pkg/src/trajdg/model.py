"""Full predictor: backbone plus cross-domain feature machinery.

All parameters live in one namespaced store (`backbone/*`, `invariant/*`,
`expert_k/*`, `expert_fuse/*`, `aggregator/*`, `recon/*`, `classifier/*`)
so the trainer can freeze and re-rate groups by prefix. The expert-routing
counter lets tests assert that inference never takes a label-indexed
branch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .backbone import BackboneNet, SceneBatch, make_batch
from .disentangle import FeatureExtractors
from .nn import MLP, ParamStore
from .scenes import MASKED, OBS_LEN, FeatureBundle, HyperParams, TrajectoryScene

CHECKPOINT_VERSION = 1

PARAM_GROUPS = ("backbone", "invariant", "experts", "aggregators", "recon", "classifier")


def group_of(param_name: str) -> str:
    """Map a namespaced parameter to its optimizer group."""
    head = param_name.split("/", 1)[0]
    if head == "backbone":
        return "backbone"
    if head == "invariant":
        return "invariant"
    if head.startswith("expert"):
        return "experts"
    if head == "aggregator":
        return "aggregators"
    if head == "recon":
        return "recon"
    if head == "classifier":
        return "classifier"
    raise ValueError(f"unknown parameter namespace: {param_name!r}")


@dataclass
class ForwardResult:
    """Graph handles from one forward pass (all Vars unless noted)."""

    pred_rel: Var             # (B, PRED_LEN, 2) relative to origin
    h_focal: Var              # (B, d_f)
    interaction: Var          # (B, d_f)
    indiv_inv: Var
    neigh_inv: Var
    fused_inv: Var
    indiv_spec: Var
    neigh_spec: Var
    fused_spec: Var

    def pred_world(self, batch: SceneBatch) -> np.ndarray:
        return self.pred_rel.data + batch.origin[:, None, :]


class MultiDomainPredictor:
    """Backbone predictor conditioned on disentangled cross-domain features.

    `zero_invariant` / `zero_specific` make the corresponding feature path
    permanently inert: the vanilla baseline zeroes both, the ablation
    variants one each. They are model properties (persisted in
    checkpoints), so an ablated model is also evaluated as ablated.
    """

    def __init__(self, hp: HyperParams, vanilla_only: bool = False,
                 zero_invariant: bool = False, zero_specific: bool = False):
        self.hp = hp
        self.vanilla_only = vanilla_only
        self.zero_invariant = zero_invariant
        self.zero_specific = zero_specific
        self.store = ParamStore()
        rng = np.random.default_rng(np.random.SeedSequence([hp.seed, 0]))
        self.backbone = BackboneNet(
            self.store, hp.d_f, hp.noise_dim, rng,
            gamma_inputs=2 if vanilla_only else 4,
        )
        if not vanilla_only:
            self.extractors = FeatureExtractors(self.store, hp.d_f, hp.n_domains, rng)
            self.recon_decoder = MLP(
                self.store, "recon/dec", [2 * hp.d_f, hp.d_f, 2 * OBS_LEN], rng
            )
            self.classifier = MLP(
                self.store, "classifier/cls", [4 * hp.d_f, hp.d_f, hp.n_domains], rng
            )
        self.expert_route_count = 0

    # --- feature routing ----------------------------------------------------

    def _zeros(self, b: int) -> Var:
        return ad.constant(np.zeros((b, self.hp.d_f)))

    def features(self, h_focal: Var, interaction: Var, routing,
                 zero_invariant: bool | None = None,
                 zero_specific: bool | None = None):
        """Compute the six feature vectors under the requested routing.

        `routing` is an expert index for labeled batches or MASKED for the
        aggregated (teacher-student / inference) path. Zero flags replace a
        whole feature path with constants, removing it from the graph; they
        default to the model's own configuration.
        """
        zero_invariant = self.zero_invariant if zero_invariant is None else zero_invariant
        zero_specific = self.zero_specific if zero_specific is None else zero_specific
        b = h_focal.data.shape[0]
        if zero_invariant:
            indiv_inv = neigh_inv = fused_inv = self._zeros(b)
        else:
            indiv_inv, neigh_inv, fused_inv = self.extractors.extract_invariant(
                h_focal, interaction
            )
        if zero_specific:
            indiv_spec = neigh_spec = fused_spec = self._zeros(b)
        elif routing is MASKED:
            indiv_spec, neigh_spec, fused_spec = self.extractors.aggregate_specific(
                h_focal, interaction
            )
        else:
            self.expert_route_count += 1
            indiv_spec, neigh_spec, fused_spec = self.extractors.extract_specific(
                h_focal, interaction, routing
            )
        return indiv_inv, neigh_inv, fused_inv, indiv_spec, neigh_spec, fused_spec

    def forward(self, batch: SceneBatch, routing=MASKED, z: np.ndarray | None = None,
                zero_invariant: bool | None = None,
                zero_specific: bool | None = None) -> ForwardResult:
        b = batch.size
        if z is None:
            z = np.zeros((b, self.hp.noise_dim))
        h_focal, interaction = self.backbone.encode(batch)
        if self.vanilla_only:
            zeros = self._zeros(b)
            pred = self.backbone.generate_future(h_focal, interaction, None, None, z)
            return ForwardResult(pred, h_focal, interaction,
                                 zeros, zeros, zeros, zeros, zeros, zeros)
        indiv_inv, neigh_inv, fused_inv, indiv_spec, neigh_spec, fused_spec = self.features(
            h_focal, interaction, routing, zero_invariant, zero_specific
        )
        pred = self.backbone.generate_future(
            h_focal, interaction, fused_inv, fused_spec, z
        )
        return ForwardResult(pred, h_focal, interaction,
                             indiv_inv, neigh_inv, fused_inv,
                             indiv_spec, neigh_spec, fused_spec)

    def reconstruct(self, indiv_inv: Var, indiv_spec: Var) -> Var:
        """Rebuild the flattened focal displacement sequence (B, 2*OBS_LEN)."""
        return self.recon_decoder(ad.concat([indiv_inv, indiv_spec], axis=1))

    def feature_bundle(self, scene: TrajectoryScene, routing=MASKED) -> FeatureBundle:
        """Run one scene and package its representations for inspection."""
        out = self.forward(make_batch([scene]), routing=routing)
        return FeatureBundle(
            indiv_hidden=out.h_focal.data[0],
            interaction=out.interaction.data[0],
            indiv_invariant=out.indiv_inv.data[0],
            neigh_invariant=out.neigh_inv.data[0],
            indiv_specific=out.indiv_spec.data[0],
            neigh_specific=out.neigh_spec.data[0],
            fused_invariant=out.fused_inv.data[0],
            fused_specific=out.fused_spec.data[0],
        )

    # --- persistence ----------------------------------------------------------

    def save(self, path) -> None:
        meta = {
            "version": CHECKPOINT_VERSION,
            "vanilla_only": self.vanilla_only,
            "zero_invariant": self.zero_invariant,
            "zero_specific": self.zero_specific,
            "hyperparams": self.hp.to_dict(),
        }
        arrays = {k.replace("/", "."): v.data for k, v in self.store.items()}
        np.savez(path, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
                 **arrays)

    @classmethod
    def load(cls, path) -> "MultiDomainPredictor":
        with np.load(path) as archive:
            meta = json.loads(bytes(archive["__meta__"]).decode())
            if meta.get("version") != CHECKPOINT_VERSION:
                raise ValueError(
                    f"unsupported checkpoint version {meta.get('version')!r}"
                )
            hp = HyperParams.from_dict(meta["hyperparams"])
            model = cls(
                hp,
                vanilla_only=meta["vanilla_only"],
                zero_invariant=meta.get("zero_invariant", False),
                zero_specific=meta.get("zero_specific", False),
            )
            arrays = {
                k.replace(".", "/"): archive[k]
                for k in archive.files
                if k != "__meta__"
            }
        model.store.load(arrays)
        return model
