"""Reference multi-agent predictor: embed, encode, pool, generate.

The network consumes per-step displacements in a frame re-centered at the
focal agent's last observed position, which makes the whole predictor
translation-equivariant by construction. The future generator is a
recurrent decoder seeded from a learned fusion of the encoder state, the
pooled interaction vector, and the two cross-domain feature vectors; with
those features zeroed it degrades exactly to the plain backbone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .nn import GRUCell, Linear, MLP, ParamStore
from .scenes import OBS_LEN, PRED_LEN, TrajectoryScene


@dataclass
class SceneBatch:
    """Padded numpy views of a list of scenes, ready for the network."""

    focal_disp: np.ndarray          # (B, OBS_LEN, 2)
    origin: np.ndarray              # (B, 2) world position of last observed frame
    future_rel: np.ndarray | None   # (B, PRED_LEN, 2) future minus origin
    neigh_disp: np.ndarray          # (B, N, OBS_LEN, 2)
    neigh_valid: np.ndarray         # (B, N, OBS_LEN) float 0/1
    neigh_present: np.ndarray       # (B, N) bool
    neigh_relpos: np.ndarray        # (B, N, 2) last valid position minus origin
    scene_ids: tuple[str, ...]

    @property
    def size(self) -> int:
        return self.focal_disp.shape[0]

    @property
    def max_neighbors(self) -> int:
        return self.neigh_disp.shape[1]


def make_batch(scenes: list[TrajectoryScene]) -> SceneBatch:
    """Re-center, differentiate, and pad a scene list into dense arrays."""
    if not scenes:
        raise ValueError("empty batch")
    b = len(scenes)
    n_max = max((len(s.neighbors) for s in scenes), default=0)

    focal_disp = np.zeros((b, OBS_LEN, 2))
    origin = np.zeros((b, 2))
    have_future = all(s.focal_future is not None for s in scenes)
    future_rel = np.zeros((b, PRED_LEN, 2)) if have_future else None
    neigh_disp = np.zeros((b, n_max, OBS_LEN, 2))
    neigh_valid = np.zeros((b, n_max, OBS_LEN))
    neigh_present = np.zeros((b, n_max), dtype=bool)
    neigh_relpos = np.zeros((b, n_max, 2))

    for i, scene in enumerate(scenes):
        obs = np.asarray(scene.focal_observed)
        origin[i] = obs[-1]
        focal_disp[i, 1:] = np.diff(obs, axis=0)
        if have_future:
            future_rel[i] = np.asarray(scene.focal_future) - origin[i]
        for j, nb in enumerate(scene.neighbors):
            mask = nb.mask
            if not mask.any():
                continue
            neigh_present[i, j] = True
            neigh_valid[i, j] = mask.astype(float)
            pts = np.asarray(nb.points)
            both = mask[1:] & mask[:-1]
            neigh_disp[i, j, 1:][both] = (pts[1:] - pts[:-1])[both]
            last_valid = np.flatnonzero(mask)[-1]
            neigh_relpos[i, j] = pts[last_valid] - origin[i]

    return SceneBatch(
        focal_disp=focal_disp,
        origin=origin,
        future_rel=future_rel,
        neigh_disp=neigh_disp,
        neigh_valid=neigh_valid,
        neigh_present=neigh_present,
        neigh_relpos=neigh_relpos,
        scene_ids=tuple(s.scene_id for s in scenes),
    )


class BackboneNet:
    """Embedding, individual encoder, interaction pooling, and generator."""

    def __init__(self, store: ParamStore, d_f: int, noise_dim: int,
                 rng: np.random.Generator, gamma_inputs: int = 4):
        if gamma_inputs not in (2, 4):
            raise ValueError("gamma_inputs must be 2 (plain) or 4 (feature-conditioned)")
        self.d_f = d_f
        self.noise_dim = noise_dim
        self.gamma_inputs = gamma_inputs
        self.embed = MLP(store, "backbone/embed", [2, d_f, d_f], rng)
        self.enc = GRUCell(store, "backbone/enc", d_f, d_f, rng)
        self.pool = MLP(store, "backbone/pool", [d_f + 2, d_f, d_f], rng)
        self.pool_default = store.add("backbone/pool_default", np.zeros(d_f))
        self.dec_init = MLP(store, "backbone/dec_init", [gamma_inputs * d_f, d_f, d_f], rng)
        self.dec = GRUCell(store, "backbone/dec", 2 * d_f, d_f + noise_dim, rng)
        self.head = Linear(store, "backbone/head", d_f + noise_dim, 2, rng)

    # --- encoding ---------------------------------------------------------

    def embed_locations(self, batch: SceneBatch) -> tuple[Var, Var | None]:
        """Per-step displacement embeddings for focal and neighbor tracks.

        Returns (B, OBS_LEN, d_f) for the focal agent and
        (B*N, OBS_LEN, d_f) for neighbors (None when the batch has no
        neighbor slots); masked neighbor frames embed to zero.
        """
        b = batch.size
        ef = self.embed(ad.constant(batch.focal_disp.reshape(b * OBS_LEN, 2)))
        ef = ad.reshape(ef, (b, OBS_LEN, self.d_f))
        n = batch.max_neighbors
        if n == 0:
            return ef, None
        en = self.embed(ad.constant(batch.neigh_disp.reshape(b * n * OBS_LEN, 2)))
        en = ad.reshape(en, (b * n, OBS_LEN, self.d_f))
        en = ad.mul(en, ad.constant(batch.neigh_valid.reshape(b * n, OBS_LEN, 1)))
        return ef, en

    def encode_individual(self, emb: Var, valid: np.ndarray | None = None) -> Var:
        """Run the recurrent encoder over OBS_LEN steps; masked steps hold."""
        rows = emb.data.shape[0]
        h = ad.constant(np.zeros((rows, self.d_f)))
        for t in range(OBS_LEN):
            x_t = emb[:, t, :]
            h_new = self.enc(x_t, h)
            if valid is None:
                h = h_new
            else:
                m = ad.constant(valid[:, t : t + 1])
                h = ad.add(ad.mul(m, h_new), ad.mul(1.0 - m, h))
        return h

    def encode_interactions(self, neigh_hidden: Var | None, batch: SceneBatch) -> Var:
        """Max-pool neighbor states (with relative positions) into one vector.

        Scenes without any valid neighbor get a learned default vector that
        is independent of the focal track.
        """
        b = batch.size
        if neigh_hidden is None or not batch.neigh_present.any():
            return ad.add(self.pool_default, ad.constant(np.zeros((b, self.d_f))))
        n = batch.max_neighbors
        feats = self.pool(
            ad.concat(
                [neigh_hidden, ad.constant(batch.neigh_relpos.reshape(b * n, 2))],
                axis=1,
            )
        )
        feats = ad.reshape(feats, (b, n, self.d_f))
        lowest = ad.constant(np.full((b, n, self.d_f), -1e30))
        pooled = ad.amax(
            ad.where(batch.neigh_present[:, :, None], feats, lowest), axis=1
        )
        has_any = batch.neigh_present.any(axis=1, keepdims=True)
        return ad.where(has_any, pooled, self.pool_default)

    def encode(self, batch: SceneBatch) -> tuple[Var, Var]:
        """Full observation encoding: focal state and interaction vector."""
        ef, en = self.embed_locations(batch)
        h_focal = self.encode_individual(ef)
        if en is None:
            h_neigh = None
        else:
            b, n = batch.size, batch.max_neighbors
            h_neigh = self.encode_individual(
                en, batch.neigh_valid.reshape(b * n, OBS_LEN)
            )
        interaction = self.encode_interactions(h_neigh, batch)
        return h_focal, interaction

    # --- generation -------------------------------------------------------

    def generate_future(self, h_focal: Var, interaction: Var,
                        invariant: Var | None, specific: Var | None,
                        z: np.ndarray) -> Var:
        """Decode PRED_LEN displacement steps and accumulate positions.

        Returns positions relative to the focal agent's last observed
        location, shape (B, PRED_LEN, 2). `invariant`/`specific` must be
        None exactly when the net was built with gamma_inputs=2.
        """
        parts = [interaction, h_focal]
        if self.gamma_inputs == 4:
            if invariant is None or specific is None:
                raise ValueError("feature-conditioned generator needs both feature vectors")
            parts += [invariant, specific]
        elif invariant is not None or specific is not None:
            raise ValueError("plain generator takes no feature vectors")
        context = self.dec_init(ad.concat(parts, axis=1))

        b = context.data.shape[0]
        z = np.asarray(z, dtype=np.float64).reshape(b, self.noise_dim)
        state = ad.concat([context, ad.constant(z)], axis=1)
        step_input = ad.concat([interaction, h_focal], axis=1)
        steps = []
        for _ in range(PRED_LEN):
            state = self.dec(step_input, state)
            steps.append(self.head(state))
        disp = ad.stack(steps, axis=1)
        return ad.cumsum(disp, axis=1)


def base_loss(pred_rel: Var, future_rel: np.ndarray) -> Var:
    """Summed squared L2 error over all scenes, steps, and axes."""
    target = np.asarray(future_rel, dtype=np.float64)
    if pred_rel.data.shape != target.shape:
        raise ValueError(
            f"prediction shape {pred_rel.data.shape} != target shape {target.shape}"
        )
    return ad.summate(ad.square(pred_rel - ad.constant(target)))
