import numpy as np
import pytest

from trajdg.scenes import OBS_LEN, PRED_LEN, HyperParams, NeighborTrack, TrajectoryScene


def straight_scene(scene_id="s0", domain_id="d0", start=(0.0, 0.0),
                   velocity=(1.0, 0.0), n_neighbors=0, t0=0.0):
    """Constant-velocity scene; neighbors run parallel offset in y."""
    start = np.asarray(start, dtype=float)
    velocity = np.asarray(velocity, dtype=float)
    t = np.arange(OBS_LEN + PRED_LEN)[:, None] * 0.4
    track = start + t * velocity
    neighbors = tuple(
        NeighborTrack(
            mask=np.ones(OBS_LEN, dtype=bool),
            points=track[:OBS_LEN] + np.array([0.0, 2.0 * (j + 1)]),
        )
        for j in range(n_neighbors)
    )
    return TrajectoryScene(
        scene_id=scene_id,
        domain_id=domain_id,
        focal_observed=track[:OBS_LEN],
        focal_future=track[OBS_LEN:],
        neighbors=neighbors,
        timestamp_origin=t0,
    )


def random_scene(rng, scene_id="r0", domain_id="d0", n_neighbors=None, t0=0.0,
                 with_future=True):
    """Random-walk scene with randomly masked neighbors (each keeps >=1 frame)."""
    if n_neighbors is None:
        n_neighbors = int(rng.integers(0, 4))
    walk = lambda n: rng.normal(0, 1, (1, 2)) * 5 + np.cumsum(
        rng.normal(0, 0.3, (n, 2)), axis=0
    )
    focal = walk(OBS_LEN + PRED_LEN)
    neighbors = []
    for _ in range(n_neighbors):
        mask = rng.random(OBS_LEN) < 0.7
        if not mask.any():
            mask[int(rng.integers(0, OBS_LEN))] = True
        pts = walk(OBS_LEN)
        pts[~mask] = 0.0
        neighbors.append(NeighborTrack(mask=mask, points=pts))
    return TrajectoryScene(
        scene_id=scene_id,
        domain_id=domain_id,
        focal_observed=focal[:OBS_LEN],
        focal_future=focal[OBS_LEN:] if with_future else None,
        neighbors=tuple(neighbors),
        timestamp_origin=t0,
    )


def tiny_hp(**kw):
    """Small, fast hyperparameters for unit tests."""
    defaults = dict(
        d_f=8, noise_dim=4, batch_size=8, n_domains=2,
        e_start=1, e_end=2, e_total=3, seed=0,
    )
    defaults.update(kw)
    return HyperParams(**defaults)


def fd_grad_check(build_loss, var, rng, n_coords=3, h=1e-6, rtol=1e-4):
    """Compare the analytic gradient of `var` with central differences.

    `build_loss` must construct a fresh scalar graph from current values.
    """
    var.grad = None
    loss = build_loss()
    from trajdg import autodiff as ad

    ad.backward(loss)
    assert var.grad is not None, "variable did not receive a gradient"
    analytic = var.grad.copy()
    flat = var.data.reshape(-1)
    idx = rng.choice(flat.size, size=min(n_coords, flat.size), replace=False)
    for i in idx:
        orig = flat[i]
        flat[i] = orig + h
        up = float(build_loss().data)
        flat[i] = orig - h
        down = float(build_loss().data)
        flat[i] = orig
        numeric = (up - down) / (2.0 * h)
        a = analytic.reshape(-1)[i]
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
        assert rel < rtol, f"coord {i}: analytic {a} vs numeric {numeric} (rel {rel:.2e})"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
