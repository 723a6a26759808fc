"""Training-side numeric machinery: parameters, GRU, Adam, LR schedule,
finite-difference gradient checking, and the checkpoint format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

CHECKPOINT_VERSION = 1


class Parameter(Tensor):
    """Named leaf tensor; gradients accumulate between zero_grad calls."""

    def __init__(self, name: str, data: np.ndarray):
        super().__init__(np.asarray(data, dtype=np.float64), requires_grad=True, name=name)


class ParameterStore:
    """Ordered, uniquely named parameter registry."""

    def __init__(self) -> None:
        self._params: dict[str, Parameter] = {}

    def create(self, name: str, data: np.ndarray) -> Parameter:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        p = Parameter(name, data)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.zero_grad()

    def total_size(self) -> int:
        return sum(p.size for p in self._params.values())


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(1, fan_in))
    return rng.uniform(-bound, bound, size=shape)


# ---------------------------------------------------------------------------
# GRU
# ---------------------------------------------------------------------------


def create_gru_params(
    store: ParameterStore, prefix: str, d_in: int, d_h: int, rng: np.random.Generator
) -> dict[str, Parameter]:
    params = {}
    for gate in ("z", "r", "h"):
        params[f"W_{gate}"] = store.create(f"{prefix}.W_{gate}", uniform_init(rng, (d_in, d_h), d_in))
        params[f"U_{gate}"] = store.create(f"{prefix}.U_{gate}", uniform_init(rng, (d_h, d_h), d_h))
        params[f"b_{gate}"] = store.create(f"{prefix}.b_{gate}", np.zeros((1, d_h)))
    return params


def gru_step(x: Tensor, h: Tensor, p: dict[str, Parameter]) -> Tensor:
    """One GRU cell update for a batch: x (B, d_in), h (B, d_h)."""
    z = ad.sigmoid(ad.add(ad.add(ad.matmul(x, p["W_z"]), ad.matmul(h, p["U_z"])), p["b_z"]))
    r = ad.sigmoid(ad.add(ad.add(ad.matmul(x, p["W_r"]), ad.matmul(h, p["U_r"])), p["b_r"]))
    h_cand = ad.tanh(
        ad.add(ad.add(ad.matmul(x, p["W_h"]), ad.matmul(ad.mul(r, h), p["U_h"])), p["b_h"])
    )
    one_minus_z = ad.sub(1.0, z)
    return ad.add(ad.mul(one_minus_z, h), ad.mul(z, h_cand))


def gru_sequence(
    xs: list[Tensor],
    params: dict[str, Parameter],
    mask: np.ndarray | None = None,
    backward_params: dict[str, Parameter] | None = None,
) -> Tensor:
    """Run a GRU over a step-major sequence and return the final state.

    ``xs`` is a list of T tensors shaped (B, d_in); ``mask`` (B, T) marks
    live steps for right-padded batches. With ``backward_params`` the
    sequence is also run reversed and both final states (each d_h) are
    concatenated, bidirectional-style.
    """
    if not xs:
        raise ValueError("gru_sequence needs at least one timestep")
    batch = xs[0].shape[0]

    def _run(ps: dict[str, Parameter], order: range) -> Tensor:
        d_h = ps["U_z"].shape[0]
        h = Tensor(np.zeros((batch, d_h)))
        for t in order:
            h_new = gru_step(xs[t], h, ps)
            if mask is not None:
                m = mask[:, t : t + 1].astype(np.float64)
                h = ad.add(ad.mul(Tensor(m), h_new), ad.mul(Tensor(1.0 - m), h))
            else:
                h = h_new
        return h

    fwd = _run(params, range(len(xs)))
    if backward_params is None:
        return fwd
    bwd = _run(backward_params, range(len(xs) - 1, -1, -1))
    return ad.concat([fwd, bwd], axis=-1)


# ---------------------------------------------------------------------------
# Adam and the learning-rate schedule
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    moments: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)


def adam_step(params: ParameterStore, state: AdamState, lr: float) -> None:
    """Standard bias-corrected Adam update over all parameters in place."""
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for p in params:
        if p.name not in state.moments:
            state.moments[p.name] = (np.zeros_like(p.data), np.zeros_like(p.data))
        m, v = state.moments[p.name]
        if p.grad is None:
            m *= state.beta1
            v *= state.beta2
        else:
            grad = p.grad
            m *= state.beta1
            m += (1.0 - state.beta1) * grad
            v *= state.beta2
            v += (1.0 - state.beta2) * np.square(grad)
        update = np.sqrt(v / bc2)
        update += state.eps
        np.divide(m, update, out=update)
        update *= lr / bc1
        p.data -= update


def clip_gradient_norm(params: ParameterStore, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``.

    Returns the pre-clip norm. Keeps one spiking batch from poisoning the
    Adam moment estimates for the rest of a run.
    """
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    norm = float(np.sqrt(total))
    if norm > max_norm > 0:
        factor = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= factor
    return norm


def lr_schedule(
    epoch: int,
    base: float = 0.0005,
    peak: float = 0.002,
    warmup_epochs: int = 4,
    decay_start: int = 15,
    decay: float = 0.5,
) -> float:
    """Warm-up to ``peak`` by ``warmup_epochs``, hold, then decay geometrically.

    Epochs are 1-based: 0.0005, 0.001, 0.0015, 0.002 over the default
    warm-up, constant 0.002 through epoch 14, then x0.5 per epoch.
    """
    if epoch < 1:
        raise ValueError("epoch is 1-based")
    if epoch <= warmup_epochs:
        if warmup_epochs == 1:
            return peak
        return base + (peak - base) * (epoch - 1) / (warmup_epochs - 1)
    if epoch < decay_start:
        return peak
    return peak * decay ** (epoch - decay_start + 1)


# ---------------------------------------------------------------------------
# Finite-difference gradient checking
# ---------------------------------------------------------------------------


def finite_difference_check(
    loss_fn: Callable[[], Tensor],
    params: list[Parameter] | ParameterStore,
    eps: float = 1e-5,
    max_coords: int = 64,
    seed: int = 0,
    atol: float = 1e-9,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Large tensors are spot-checked on ``max_coords`` sampled coordinates
    (at least 64 by default). Relative error is
    |analytic - numeric| / max(1e-8, |analytic| + |numeric|); differences
    below ``atol`` count as zero, absorbing float64 evaluation noise on
    coordinates whose true gradient vanishes (a broken backward pass
    produces differences orders of magnitude above the tolerance).
    """
    report = finite_difference_report(loss_fn, params, eps, max_coords, seed, atol)
    return max(report.values()) if report else 0.0


def finite_difference_report(
    loss_fn: Callable[[], Tensor],
    params: list[Parameter] | ParameterStore,
    eps: float = 1e-5,
    max_coords: int = 64,
    seed: int = 0,
    atol: float = 1e-9,
) -> dict[str, float]:
    param_list = list(params)
    rng = np.random.default_rng(seed)
    for p in param_list:
        p.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = {p.name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for p in param_list}
    report: dict[str, float] = {}
    for p in param_list:
        flat = p.data.reshape(-1)
        n = flat.size
        coords = np.arange(n) if n <= max_coords else rng.choice(n, size=max_coords, replace=False)
        worst = 0.0
        for c in coords:
            original = flat[c]
            flat[c] = original + eps
            up = loss_fn().item()
            flat[c] = original - eps
            down = loss_fn().item()
            flat[c] = original
            numeric = (up - down) / (2.0 * eps)
            a = analytic[p.name].reshape(-1)[c]
            diff = abs(a - numeric)
            if diff < atol:
                continue
            worst = max(worst, diff / max(1e-8, abs(a) + abs(numeric)))
        report[p.name] = worst
    return report


# ---------------------------------------------------------------------------
# Checkpoints: JSON manifest + float32-LE blob
# ---------------------------------------------------------------------------


def save_checkpoint(
    path: str | Path, params: ParameterStore, hyperparameters: dict
) -> tuple[Path, Path]:
    """Write ``<path>.json`` (manifest) and ``<path>.bin`` (flat blob)."""
    path = Path(path)
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "dtype": "<f4",
        "names": params.names(),
        "shapes": {p.name: list(p.shape) for p in params},
        "hyperparameters": hyperparameters,
    }
    manifest_path = path.with_suffix(".json")
    blob_path = path.with_suffix(".bin")
    manifest_path.write_text(json.dumps(manifest, indent=1), encoding="utf-8")
    blob = np.concatenate([params[name].data.reshape(-1) for name in params.names()])
    blob_path.write_bytes(blob.astype("<f4").tobytes())
    return manifest_path, blob_path


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint; returns (name -> float64 array, hyperparameters)."""
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    if manifest["format_version"] != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {manifest['format_version']}")
    raw = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype=manifest["dtype"])
    total = sum(int(np.prod(manifest["shapes"][n])) if manifest["shapes"][n] else 1
                for n in manifest["names"])
    if total != raw.size:
        raise ValueError(f"checkpoint blob size mismatch: manifest {total}, blob {raw.size}")
    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for name in manifest["names"]:
        shape = tuple(manifest["shapes"][name])
        size = int(np.prod(shape)) if shape else 1
        arrays[name] = raw[offset : offset + size].astype(np.float64).reshape(shape)
        offset += size
    return arrays, manifest["hyperparameters"]
