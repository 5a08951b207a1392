"""Cross-domain feature machinery: extractors, experts, aggregators, losses.

One shared-weight extractor produces domain-invariant features for every
source domain; one expert pair per domain produces domain-specific
features; aggregators synthesize specific features for scenes whose domain
label is masked (and for every unseen-domain scene at inference) from the
element-wise sum of all expert outputs.

Four losses shape the split:

* reconstruction: a decoder must rebuild the observed displacement
  sequence from the concatenated invariant+specific focal features, scored
  with the scale-invariant squared error so same-direction residuals are
  credited;
* domain adversarial: a classifier predicts the domain from all four
  features; the specific path and the classifier minimize it, while the
  invariant path sees reversed gradients and is pushed toward
  domain-indistinguishability;
* difference: a soft orthogonality penalty between batch-centered
  invariant and specific feature matrices;
* the weighted combination of the three.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .nn import MLP, ParamStore
from .scenes import MASKED, OBS_LEN, HyperParams


class FeatureExtractors:
    """Invariant extractor, per-domain experts, aggregators, and fusions."""

    def __init__(self, store: ParamStore, d_f: int, n_domains: int,
                 rng: np.random.Generator):
        self.d_f = d_f
        self.n_domains = n_domains
        self.v_ind = MLP(store, "invariant/ind", [d_f, d_f, d_f], rng)
        self.v_nei = MLP(store, "invariant/nei", [d_f, d_f, d_f], rng)
        self.v_fuse = MLP(store, "invariant/fuse", [2 * d_f, d_f, d_f], rng)
        self.m_ind = [
            MLP(store, f"expert_{k}/ind", [d_f, d_f, d_f], rng)
            for k in range(n_domains)
        ]
        self.m_nei = [
            MLP(store, f"expert_{k}/nei", [d_f, d_f, d_f], rng)
            for k in range(n_domains)
        ]
        self.m_fuse = MLP(store, "expert_fuse/fuse", [2 * d_f, d_f, d_f], rng)
        self.a_ind = MLP(store, "aggregator/ind", [d_f, d_f, d_f], rng)
        self.a_nei = MLP(store, "aggregator/nei", [d_f, d_f, d_f], rng)

    def extract_invariant(self, h_focal: Var, interaction: Var) -> tuple[Var, Var, Var]:
        """Shared-weight invariant features (individual, neighbor, fused)."""
        indiv = self.v_ind(h_focal)
        neigh = self.v_nei(interaction)
        fused = self.v_fuse(ad.concat([indiv, neigh], axis=1))
        return indiv, neigh, fused

    def extract_specific(self, h_focal: Var, interaction: Var, label: int) -> tuple[Var, Var, Var]:
        """Domain-specific features through expert `label` only."""
        if not isinstance(label, (int, np.integer)) or not 0 <= label < self.n_domains:
            raise ValueError(
                f"expert label must be an int in [0, {self.n_domains}), got {label!r}"
            )
        indiv = self.m_ind[label](h_focal)
        neigh = self.m_nei[label](interaction)
        fused = self.m_fuse(ad.concat([indiv, neigh], axis=1))
        return indiv, neigh, fused

    def aggregate_specific(self, h_focal: Var, interaction: Var) -> tuple[Var, Var, Var]:
        """Specific features for a masked/unseen domain.

        Every expert is queried, outputs are summed element-wise, and the
        learned aggregators map the sums before the usual fusion.
        """
        sum_ind = self.m_ind[0](h_focal)
        sum_nei = self.m_nei[0](interaction)
        for k in range(1, self.n_domains):
            sum_ind = ad.add(sum_ind, self.m_ind[k](h_focal))
            sum_nei = ad.add(sum_nei, self.m_nei[k](interaction))
        indiv = self.a_ind(sum_ind)
        neigh = self.a_nei(sum_nei)
        fused = self.m_fuse(ad.concat([indiv, neigh], axis=1))
        return indiv, neigh, fused


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def simse_loss(target, reconstruction, variant: str = "directional") -> Var:
    """Scale-invariant squared error between two length-m sequences.

    The directional form mean(d^2) - mean(d)^2 credits residuals that share
    a sign and fully penalizes opposing ones; the literal variant keeps the
    plain (1/m - 1/m^2)||d||^2 reduction.
    """
    target = ad.as_var(target)
    reconstruction = ad.as_var(reconstruction)
    if target.data.shape != reconstruction.data.shape or target.data.ndim != 1:
        raise ValueError("simse_loss expects two equal-length 1-D sequences")
    m = target.data.shape[0]
    if m == 0:
        raise ValueError("simse_loss is undefined for empty sequences")
    d = target - reconstruction
    if variant == "literal":
        return (1.0 / m - 1.0 / m**2) * ad.summate(ad.square(d))
    if variant != "directional":
        raise ValueError(f"unknown simse variant {variant!r}")
    return ad.mean(ad.square(d)) - ad.square(ad.mean(d))


def _simse_rows(diff: Var, variant: str) -> Var:
    """Row-wise SIMSE over axis 1, shape (B, m) -> (B,)."""
    m = diff.data.shape[1]
    sq = ad.mean(ad.square(diff), axis=1)
    if variant == "literal":
        return (1.0 - 1.0 / m) * sq
    return sq - ad.square(ad.mean(diff, axis=1))


def reconstruction_loss(observed_disp: np.ndarray, reconstruction: Var,
                        variant: str = "directional") -> Var:
    """Sum over the batch of per-stream-averaged SIMSE.

    `observed_disp` is the (B, OBS_LEN, 2) focal displacement target;
    `reconstruction` is the decoder output (B, 2*OBS_LEN), interpreted as
    interleaved (x, y) steps.
    """
    b = reconstruction.data.shape[0]
    target = ad.constant(
        np.asarray(observed_disp, dtype=np.float64).reshape(b, OBS_LEN * 2)
    )
    diff = ad.reshape(target - reconstruction, (b, OBS_LEN, 2))
    per_x = _simse_rows(diff[:, :, 0], variant)
    per_y = _simse_rows(diff[:, :, 1], variant)
    return 0.5 * ad.summate(per_x + per_y)


def domain_adversarial_loss(classifier: MLP, indiv_inv: Var, neigh_inv: Var,
                            indiv_spec: Var, neigh_spec: Var, label,
                            n_domains: int) -> Var:
    """Summed negative log-likelihood of the true domain label.

    The classifier and the specific-feature path minimize this loss; the
    invariant-feature path receives sign-reversed gradients so that
    invariant features drift toward domain-indistinguishability.
    """
    if label is MASKED:
        raise ValueError("adversarial loss is undefined for masked batches")
    if not 0 <= int(label) < n_domains:
        raise ValueError(f"domain label {label!r} out of range [0, {n_domains})")
    logits = classifier(
        ad.concat(
            [ad.grad_reverse(indiv_inv), ad.grad_reverse(neigh_inv), indiv_spec, neigh_spec],
            axis=1,
        )
    )
    lse = ad.logsumexp(logits, axis=1)
    return ad.summate(lse - logits[:, int(label)])


def _center_columns(x: Var) -> Var:
    return x - ad.mean(x, axis=0, keepdims=True)


def difference_loss(indiv_inv: Var, indiv_spec: Var, neigh_inv: Var,
                    neigh_spec: Var) -> Var:
    """Soft subspace orthogonality between invariant and specific features.

    Features are stacked over the batch and mean-centered per column before
    the cross-product, so constant offsets cannot fake orthogonality; a
    single-scene batch centers to zero and contributes nothing.
    """
    if indiv_inv.data.shape[0] == 0:
        raise ValueError("difference loss is undefined for an empty batch")
    loss = ad.summate(
        ad.square(ad.matmul(ad.transpose(_center_columns(indiv_inv)), _center_columns(indiv_spec)))
    )
    loss = loss + ad.summate(
        ad.square(ad.matmul(ad.transpose(_center_columns(neigh_inv)), _center_columns(neigh_spec)))
    )
    return loss


def disentanglement_loss(hp: HyperParams, recon: Var, diff: Var, similar: Var) -> Var:
    """Weighted sum of the three auxiliary losses."""
    return hp.alpha * recon + hp.beta * diff + hp.gamma * similar
