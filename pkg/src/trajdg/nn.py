"""Parameter store, layers, and the optimizer.

Parameters live in a flat name->Var mapping with slash-separated namespaces
(`backbone/...`, `invariant/...`, `expert_0/...`, ...) so the trainer can
address groups by prefix for freezing and per-group learning rates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var


class ParamStore:
    """Flat registry of trainable parameters with namespaced keys."""

    def __init__(self):
        self._params: dict[str, Var] = {}

    def add(self, name: str, value: np.ndarray) -> Var:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        v = Var(np.array(value, dtype=np.float64), requires_grad=True)
        self._params[name] = v
        return v

    def __getitem__(self, name: str) -> Var:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self):
        return [(k, self._params[k]) for k in self.names()]

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self._params.values())

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.grad = None

    def snapshot(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {
            k: v.data.copy()
            for k, v in self.items()
            if k.startswith(prefix)
        }

    def load(self, arrays: dict[str, np.ndarray]) -> None:
        """Replace parameter values; shapes must match exactly."""
        missing = set(self._params) - set(arrays)
        unknown = set(arrays) - set(self._params)
        if missing or unknown:
            raise ValueError(
                f"parameter name mismatch (missing {sorted(missing)[:3]}, "
                f"unknown {sorted(unknown)[:3]})"
            )
        for k, arr in arrays.items():
            p = self._params[k]
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValueError(
                    f"shape mismatch for {k}: stored {arr.shape}, model {p.data.shape}"
                )
        for k, arr in arrays.items():
            self._params[k].data = np.array(arr, dtype=np.float64)


def glorot(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    limit = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, size=shape)


class Linear:
    def __init__(self, store: ParamStore, name: str, d_in: int, d_out: int,
                 rng: np.random.Generator):
        self.w = store.add(f"{name}/w", glorot(rng, (d_in, d_out)))
        self.b = store.add(f"{name}/b", np.zeros(d_out))

    def __call__(self, x: Var) -> Var:
        return ad.matmul(x, self.w) + self.b


class MLP:
    """Stack of linear layers with ReLU between them, linear output."""

    def __init__(self, store: ParamStore, name: str, dims: list[int],
                 rng: np.random.Generator):
        if len(dims) < 2:
            raise ValueError("MLP needs at least input and output dims")
        self.layers = [
            Linear(store, f"{name}/l{i}", dims[i], dims[i + 1], rng)
            for i in range(len(dims) - 1)
        ]

    def __call__(self, x: Var) -> Var:
        for layer in self.layers[:-1]:
            x = ad.relu(layer(x))
        return self.layers[-1](x)


class GRUCell:
    """Gated recurrent cell; one call advances the state by one step."""

    def __init__(self, store: ParamStore, name: str, d_in: int, d_hidden: int,
                 rng: np.random.Generator):
        self.wz = store.add(f"{name}/wz", glorot(rng, (d_in, d_hidden)))
        self.uz = store.add(f"{name}/uz", glorot(rng, (d_hidden, d_hidden)))
        self.bz = store.add(f"{name}/bz", np.zeros(d_hidden))
        self.wr = store.add(f"{name}/wr", glorot(rng, (d_in, d_hidden)))
        self.ur = store.add(f"{name}/ur", glorot(rng, (d_hidden, d_hidden)))
        self.br = store.add(f"{name}/br", np.zeros(d_hidden))
        self.wn = store.add(f"{name}/wn", glorot(rng, (d_in, d_hidden)))
        self.un = store.add(f"{name}/un", glorot(rng, (d_hidden, d_hidden)))
        self.bn = store.add(f"{name}/bn", np.zeros(d_hidden))

    def __call__(self, x: Var, h: Var) -> Var:
        z = ad.sigmoid(ad.matmul(x, self.wz) + ad.matmul(h, self.uz) + self.bz)
        r = ad.sigmoid(ad.matmul(x, self.wr) + ad.matmul(h, self.ur) + self.br)
        n = ad.tanh(ad.matmul(x, self.wn) + ad.mul(r, ad.matmul(h, self.un)) + self.bn)
        return ad.add(ad.mul(1.0 - z, n), ad.mul(z, h))


@dataclass
class GroupSpec:
    """One optimizer group: parameter names plus stage-dependent settings."""

    name: str
    param_names: list[str]
    multiplier: float = 1.0
    frozen: bool = False


class Adam:
    """Adaptive-moment optimizer with per-group rates and lazy state.

    Parameters whose gradient is absent from a step (their subgraph was not
    exercised) are skipped entirely: moments and step counts do not advance,
    so stale momentum can never move an idle expert.
    """

    def __init__(self, store: ParamStore, lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 clip_norm: float = 10.0):
        self.store = store
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.clip_norm = clip_norm
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._t: dict[str, int] = {}

    def step(self, groups: list[GroupSpec]) -> float:
        """Apply one update; returns the pre-clip global gradient norm."""
        live: list[tuple[str, Var, float]] = []
        for group in groups:
            if group.frozen:
                continue
            for name in group.param_names:
                p = self.store[name]
                if p.grad is not None:
                    live.append((name, p, group.multiplier))
        live.sort(key=lambda t: t[0])

        sq = 0.0
        for _, p, _ in live:
            sq += float(np.sum(p.grad * p.grad))
        norm = float(np.sqrt(sq))
        scale = 1.0 if norm <= self.clip_norm else self.clip_norm / norm

        for name, p, mult in live:
            g = p.grad * scale
            t = self._t.get(name, 0) + 1
            m = self._m.get(name)
            v = self._v.get(name)
            m = self.beta1 * m + (1 - self.beta1) * g if m is not None else (1 - self.beta1) * g
            v = self.beta2 * v + (1 - self.beta2) * g * g if v is not None else (1 - self.beta2) * g * g
            self._m[name], self._v[name], self._t[name] = m, v, t
            m_hat = m / (1 - self.beta1 ** t)
            v_hat = v / (1 - self.beta2 ** t)
            p.data = p.data - self.lr * mult * m_hat / (np.sqrt(v_hat) + self.eps)
        return norm
