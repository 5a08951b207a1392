"""Core scene types, invariant checks, and canonical serialization.

A scene is one focal agent observed for 8 frames at 0.4 s spacing, its
12-frame future (absent at pure inference), and the neighbor tracks that
co-occur with it in the observed window. All coordinates are planar
world-space meters. Types are immutable value objects once constructed;
`validate_scene` reports invariant violations instead of raising.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields, replace
from typing import Iterable

import numpy as np

OBS_LEN = 8            # observed frames per scene
PRED_LEN = 12          # predicted frames per scene
FRAME_DT = 0.4         # seconds between consecutive frames
MAX_NEIGHBORS = 16     # nearest neighbors kept per scene

SCENE_FILE_VERSION = 1


class _MaskedDomain:
    """Sentinel for a hidden domain label.

    Compares equal only to itself, so it can never collide with a real
    domain identifier.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "MASKED"

    def __copy__(self):
        return self

    def __deepcopy__(self, memo):
        return self


MASKED = _MaskedDomain()


def _frozen_array(values, shape=None) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if shape is not None and arr.size == 0:
        arr = arr.reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class NeighborTrack:
    """One neighbor's observed window: per-frame validity mask plus points.

    Coordinates at masked frames are carried through serialization verbatim
    but carry no meaning; the mask is the source of truth (zero is a legal
    location, so missing frames are never encoded as zeros).
    """

    mask: np.ndarray    # (OBS_LEN,) bool, True where the frame was observed
    points: np.ndarray  # (OBS_LEN, 2) meters

    def __post_init__(self):
        m = np.array(self.mask, dtype=bool)
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)
        object.__setattr__(self, "points", _frozen_array(self.points))

    def __eq__(self, other) -> bool:
        if not isinstance(other, NeighborTrack):
            return NotImplemented
        return np.array_equal(self.mask, other.mask) and np.array_equal(
            self.points, other.points
        )


@dataclass(frozen=True, eq=False)
class TrajectoryScene:
    """One prediction instance: focal agent, neighbors, and domain label."""

    scene_id: str
    domain_id: object                     # str or MASKED
    focal_observed: np.ndarray            # (OBS_LEN, 2)
    focal_future: np.ndarray | None       # (PRED_LEN, 2); None at inference
    neighbors: tuple[NeighborTrack, ...]
    timestamp_origin: float = 0.0

    def __post_init__(self):
        object.__setattr__(
            self, "focal_observed", _frozen_array(self.focal_observed)
        )
        if self.focal_future is not None:
            object.__setattr__(
                self, "focal_future", _frozen_array(self.focal_future)
            )
        object.__setattr__(self, "neighbors", tuple(self.neighbors))
        object.__setattr__(self, "timestamp_origin", float(self.timestamp_origin))

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrajectoryScene):
            return NotImplemented
        if (self.scene_id, self.timestamp_origin) != (
            other.scene_id,
            other.timestamp_origin,
        ):
            return False
        if self.domain_id is not other.domain_id and self.domain_id != other.domain_id:
            return False
        if not np.array_equal(self.focal_observed, other.focal_observed):
            return False
        if (self.focal_future is None) != (other.focal_future is None):
            return False
        if self.focal_future is not None and not np.array_equal(
            self.focal_future, other.focal_future
        ):
            return False
        return self.neighbors == other.neighbors

    @property
    def n_agents(self) -> int:
        return 1 + len(self.neighbors)


def validate_scene(scene: TrajectoryScene) -> list[str]:
    """Check every scene invariant; return violation messages, never raise.

    An empty list means the scene is well-formed. Frame spacing is
    structural (scenes are grid-indexed, not timestamped per frame) and is
    therefore not re-checked here.
    """
    issues: list[str] = []

    obs = np.asarray(scene.focal_observed)
    if obs.ndim != 2 or obs.shape[1] != 2:
        issues.append(f"focal_observed is not a sequence of 2-D points (shape {obs.shape})")
    elif obs.shape[0] != OBS_LEN:
        issues.append(f"focal_observed length {obs.shape[0]} ≠ {OBS_LEN}")
    if obs.size and not np.isfinite(obs).all():
        issues.append("focal_observed contains non-finite coordinates")

    if scene.focal_future is not None:
        fut = np.asarray(scene.focal_future)
        if fut.ndim != 2 or fut.shape[1] != 2:
            issues.append(f"focal_future is not a sequence of 2-D points (shape {fut.shape})")
        elif fut.shape[0] != PRED_LEN:
            issues.append(f"focal_future length {fut.shape[0]} ≠ {PRED_LEN}")
        if fut.size and not np.isfinite(fut).all():
            issues.append("focal_future contains non-finite coordinates")

    if not np.isfinite(scene.timestamp_origin):
        issues.append("timestamp_origin is not finite")

    for i, nb in enumerate(scene.neighbors):
        if nb.mask.shape != (OBS_LEN,):
            issues.append(f"neighbor {i} mask length {nb.mask.shape[0] if nb.mask.ndim == 1 else nb.mask.shape} ≠ {OBS_LEN}")
            continue
        if nb.points.shape != (OBS_LEN, 2):
            issues.append(f"neighbor {i} track shape {nb.points.shape} ≠ ({OBS_LEN}, 2)")
            continue
        if not nb.mask.any():
            issues.append(f"neighbor {i} never co-occurs")
        if nb.mask.any() and not np.isfinite(nb.points[nb.mask]).all():
            issues.append(f"neighbor {i} has non-finite coordinates at observed frames")

    return issues


# ---------------------------------------------------------------------------
# Canonical newline-delimited scene records
# ---------------------------------------------------------------------------

def encode_scene(scene: TrajectoryScene) -> str:
    """Encode one scene as its canonical single-line JSON record."""
    record = {
        "scene_id": scene.scene_id,
        "domain_id": None if scene.domain_id is MASKED else scene.domain_id,
        "t0": float(scene.timestamp_origin),
        "focal": [[float(x), float(y)] for x, y in np.asarray(scene.focal_observed)],
        "future": None
        if scene.focal_future is None
        else [[float(x), float(y)] for x, y in np.asarray(scene.focal_future)],
        "neighbors": [
            {
                "mask": [bool(b) for b in nb.mask],
                "pts": [[float(x), float(y)] for x, y in nb.points],
            }
            for nb in scene.neighbors
        ],
    }
    return json.dumps(record, separators=(",", ":"))


def decode_scene(line: str) -> TrajectoryScene:
    """Inverse of `encode_scene`; exact field-for-field round trip."""
    rec = json.loads(line)
    neighbors = tuple(
        NeighborTrack(mask=np.array(nb["mask"], dtype=bool), points=np.array(nb["pts"], dtype=float))
        for nb in rec["neighbors"]
    )
    return TrajectoryScene(
        scene_id=rec["scene_id"],
        domain_id=MASKED if rec["domain_id"] is None else rec["domain_id"],
        focal_observed=np.array(rec["focal"], dtype=float),
        focal_future=None if rec["future"] is None else np.array(rec["future"], dtype=float),
        neighbors=neighbors,
        timestamp_origin=rec["t0"],
    )


def write_scene_file(path, scenes: Iterable[TrajectoryScene]) -> int:
    """Write scenes as UTF-8 newline-delimited records; returns count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for scene in scenes:
            fh.write(encode_scene(scene))
            fh.write("\n")
            n += 1
    return n


def read_scene_file(path) -> list[TrajectoryScene]:
    with open(path, encoding="utf-8") as fh:
        return [decode_scene(line) for line in fh if line.strip()]


# ---------------------------------------------------------------------------
# Feature and hyperparameter records
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FeatureBundle:
    """The disentangled representations produced for one scene.

    All eight vectors share the configured feature dimension and must be
    finite; both are asserted at construction.
    """

    indiv_hidden: np.ndarray      # focal encoder state
    interaction: np.ndarray       # pooled neighbor interaction
    indiv_invariant: np.ndarray
    neigh_invariant: np.ndarray
    indiv_specific: np.ndarray
    neigh_specific: np.ndarray
    fused_invariant: np.ndarray
    fused_specific: np.ndarray

    def __post_init__(self):
        dim = None
        for f in fields(self):
            arr = _frozen_array(getattr(self, f.name))
            if arr.ndim != 1:
                raise ValueError(f"{f.name} must be a vector, got shape {arr.shape}")
            if dim is None:
                dim = arr.shape[0]
            elif arr.shape[0] != dim:
                raise ValueError(
                    f"{f.name} has dimension {arr.shape[0]}, expected {dim}"
                )
            if not np.isfinite(arr).all():
                raise ValueError(f"{f.name} contains non-finite entries")
            object.__setattr__(self, f.name, arr)

    @property
    def dim(self) -> int:
        return self.indiv_hidden.shape[0]


@dataclass(frozen=True)
class HyperParams:
    """Every knob of the model, losses, and training schedule.

    Defaults are the desk-scale configuration: loss weights alpha/beta/gamma
    follow the published setting, the stage boundaries are the 300-epoch
    schedule scaled by 1/10, and delta' defaults to delta/10.
    """

    alpha: float = 0.01
    beta: float = 0.075
    gamma: float = 0.25
    delta: float = 0.5
    delta_prime: float = 0.05
    sigma: float = 0.5
    e_start: int = 10
    e_end: int = 20
    e_total: int = 30
    f_low: float = 0.1
    f_high: float = 1.0
    lr: float = 1e-3
    batch_size: int = 32
    d_f: int = 32
    n_domains: int = 3
    noise_dim: int = 8
    seed: int = 0
    simse_variant: str = "directional"   # or "literal"

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "delta", "delta_prime"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 <= self.sigma <= 1.0:
            raise ValueError("sigma must lie in [0, 1]")
        if not 0 < self.f_low <= self.f_high:
            raise ValueError("need 0 < f_low <= f_high")
        if not 0 < self.e_start <= self.e_end <= self.e_total:
            raise ValueError("need 0 < e_start <= e_end <= e_total")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if min(self.batch_size, self.d_f, self.n_domains) < 1:
            raise ValueError("batch_size, d_f and n_domains must be >= 1")
        if self.noise_dim < 0:
            raise ValueError("noise_dim must be >= 0")
        if self.simse_variant not in ("directional", "literal"):
            raise ValueError("simse_variant must be 'directional' or 'literal'")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "HyperParams":
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown hyperparameter keys: {sorted(unknown)}")
        return cls(**d)

    def with_(self, **kw) -> "HyperParams":
        return replace(self, **kw)
