"""Feedforward inverse actuator model trained by backpropagation and SCG."""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .actuator import ActuatorDataset
from .scg import LAMBDA_MAX, scg_init, scg_step

log = logging.getLogger(__name__)

MODEL_FORMAT = "goalreach.network"
MODEL_VERSION = 1
ACTIVATIONS = ("tanh",)


@dataclass(frozen=True)
class MinMaxMap:
    """Affine map of [lo, hi] onto [-1, 1] (identity when lo = -1, hi = 1)."""

    lo: float = -1.0
    hi: float = 1.0

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("min-max map needs hi > lo")

    @classmethod
    def fit(cls, x) -> "MinMaxMap":
        x = np.asarray(x, dtype=float)
        lo, hi = float(x.min()), float(x.max())
        if hi <= lo:
            # constant data: keep the map invertible, the caller flags the degeneracy
            lo, hi = lo - 1.0, hi + 1.0
        return cls(lo, hi)

    def apply(self, x):
        return 2.0 * (np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo) - 1.0

    def invert(self, y):
        return (np.asarray(y, dtype=float) + 1.0) * 0.5 * (self.hi - self.lo) + self.lo


@dataclass
class NetworkModel:
    sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "tanh"
    in_map: MinMaxMap = field(default_factory=MinMaxMap)
    out_map: MinMaxMap = field(default_factory=MinMaxMap)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ValueError("need at least input and output layer sizes >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unsupported activation {self.activation!r}")
        if len(self.weights) != len(self.sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("one weight matrix and bias vector per layer transition")
        for j, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.sizes[j + 1], self.sizes[j]) or b.shape != (self.sizes[j + 1],):
                raise ValueError(f"layer {j} has shapes {W.shape}, {b.shape}; "
                                 f"expected {(self.sizes[j + 1], self.sizes[j])}")

    @classmethod
    def init(cls, sizes, rng: np.random.Generator, in_map=None, out_map=None) -> "NetworkModel":
        """Glorot-uniform weights, zero biases."""
        sizes = tuple(sizes)
        Ws, bs = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            r = math.sqrt(6.0 / (fan_in + fan_out))
            Ws.append(rng.uniform(-r, r, size=(fan_out, fan_in)))
            bs.append(np.zeros(fan_out))
        return cls(sizes, Ws, bs, "tanh", in_map or MinMaxMap(), out_map or MinMaxMap())

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def get_params(self) -> np.ndarray:
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in zip(self.weights, self.biases)])

    def with_params(self, beta: np.ndarray) -> "NetworkModel":
        Ws, bs = unpack(beta, self.sizes)
        return NetworkModel(self.sizes, Ws, bs, self.activation, self.in_map, self.out_map, dict(self.meta))

    def forward_normalized(self, x: np.ndarray) -> np.ndarray:
        a = np.asarray(x, dtype=float).reshape(1, -1)
        last = len(self.weights) - 1
        for j, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = W @ a + b[:, None]
            a = z if j == last else np.tanh(z)
        return a

    def forward(self, v) -> np.ndarray:
        """Physical input (wheel speed) to physical output (drive command)."""
        v = np.asarray(v, dtype=float)
        y = self.forward_normalized(self.in_map.apply(v).ravel())
        return self.out_map.invert(y[0]).reshape(v.shape)

    def to_dict(self) -> dict:
        doc = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "sizes": list(self.sizes),
            "activation": self.activation,
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "in_map": asdict(self.in_map),
            "out_map": asdict(self.out_map),
            "meta": self.meta,
        }
        doc["params_sha256"] = params_hash(self)
        return doc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "NetworkModel":
        doc = json.loads(Path(path).read_text())
        if doc.get("format") != MODEL_FORMAT:
            raise ValueError(f"{path}: not a network model file")
        if doc.get("version") != MODEL_VERSION:
            raise ValueError(f"{path}: unsupported model version {doc.get('version')}")
        model = cls(tuple(doc["sizes"]), [np.array(W, dtype=float) for W in doc["weights"]],
                    [np.array(b, dtype=float) for b in doc["biases"]], doc["activation"],
                    MinMaxMap(**doc["in_map"]), MinMaxMap(**doc["out_map"]), doc.get("meta", {}))
        if params_hash(model) != doc.get("params_sha256"):
            raise ValueError(f"{path}: parameter checksum mismatch")
        return model


def params_hash(model: NetworkModel) -> str:
    return hashlib.sha256(model.get_params().tobytes()).hexdigest()


def unpack(beta: np.ndarray, sizes) -> tuple[list[np.ndarray], list[np.ndarray]]:
    Ws, bs = [], []
    k = 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        Ws.append(beta[k:k + fan_in * fan_out].reshape(fan_out, fan_in))
        k += fan_in * fan_out
        bs.append(beta[k:k + fan_out])
        k += fan_out
    if k != beta.size:
        raise ValueError(f"parameter vector has {beta.size} entries, layout needs {k}")
    return Ws, bs


def loss_and_gradient(model: NetworkModel, x, y) -> tuple[float, np.ndarray]:
    """Mean squared error over the batch and its gradient by backpropagation.

    ``x`` and ``y`` are in normalized units. The output delta of each sample is
    -2(u - u_hat); deltas are pushed back through tanh'(z) = 1 - tanh(z)^2 and
    the per-layer gradients are averaged over the batch.
    """
    x = np.asarray(x, dtype=float).reshape(1, -1)
    y = np.asarray(y, dtype=float).reshape(1, -1)
    n = x.shape[1]
    if n == 0:
        raise ValueError("empty batch")
    acts = [x]
    last = len(model.weights) - 1
    for j, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = W @ acts[-1] + b[:, None]
        acts.append(z if j == last else np.tanh(z))
    resid = y - acts[-1]
    J = float(np.mean(resid ** 2))
    delta = -2.0 * resid
    grads = []
    for j in range(last, -1, -1):
        gW = delta @ acts[j].T / n
        gb = delta.sum(axis=1) / n
        grads.append((gW, gb))
        if j > 0:
            delta = (model.weights[j].T @ delta) * (1.0 - acts[j] ** 2)
    flat = [np.concatenate([gW.ravel(), gb]) for gW, gb in reversed(grads)]
    return J, np.concatenate(flat)


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.34
    val: float = 0.33
    test: float = 0.33
    rng_seed: int = 0

    def __post_init__(self):
        if min(self.train, self.val, self.test) <= 0:
            raise ValueError("split ratios must be positive")
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise ValueError("split ratios must sum to 1")

    def partition(self, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if n < 3:
            raise ValueError("need at least 3 samples to split three ways")
        perm = np.random.default_rng(self.rng_seed).permutation(n)
        n_tr = max(1, int(round(self.train * n)))
        n_va = max(1, int(round(self.val * n)))
        n_tr = min(n_tr, n - 2)
        n_va = min(n_va, n - n_tr - 1)
        return perm[:n_tr], perm[n_tr:n_tr + n_va], perm[n_tr + n_va:]


@dataclass(frozen=True)
class FitConfig:
    """Training hyperparameters; defaults follow the shipped DNN configuration."""

    hidden: tuple[int, ...] = (320, 210, 105)
    max_epochs: int = 500
    goal: float = 1e-6
    min_grad: float = 1e-10
    max_fail: int = 6
    rng_seed: int = 0


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stop_cause: str = "max-epochs"
    test_mse: float = math.nan
    test_mse_physical: float = math.nan
    target_variance: float = math.nan
    degenerate: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def fit(dataset: ActuatorDataset, split: SplitSpec = SplitSpec(),
        cfg: FitConfig = FitConfig()) -> tuple[NetworkModel, TrainReport]:
    """Full-batch SCG training with validation early stopping.

    One epoch is one SCG iteration over the training split. The returned model
    is the validation-best snapshot; the test split is scored once at the end.
    """
    report = TrainReport()
    idx_tr, idx_va, idx_te = split.partition(len(dataset))
    in_map = MinMaxMap.fit(dataset.v[idx_tr])
    out_map = MinMaxMap.fit(dataset.u[idx_tr])
    report.degenerate = bool(np.ptp(dataset.u) == 0.0 or np.ptp(dataset.v) == 0.0)
    report.target_variance = float(np.var(dataset.u[idx_te]))
    xs = {k: in_map.apply(dataset.v[i]) for k, i in (("tr", idx_tr), ("va", idx_va), ("te", idx_te))}
    ys = {k: out_map.apply(dataset.u[i]) for k, i in (("tr", idx_tr), ("va", idx_va), ("te", idx_te))}

    rng = np.random.default_rng(cfg.rng_seed)
    model = NetworkModel.init((1, *cfg.hidden, 1), rng, in_map, out_map)
    sizes = model.sizes

    def fun(beta):
        return loss_and_gradient(model.with_params(beta), xs["tr"], ys["tr"])

    def val_loss(beta):
        m = model.with_params(beta)
        return float(np.mean((ys["va"] - m.forward_normalized(xs["va"])[0]) ** 2))

    state = scg_init(fun, model.get_params())
    best_beta = state.beta.copy()
    best_val = val_loss(state.beta)
    report.train_loss.append(state.loss)
    report.val_loss.append(best_val)
    fails = 0
    for epoch in range(1, cfg.max_epochs + 1):
        if state.loss <= cfg.goal:
            report.stop_cause = "goal"
            break
        if float(np.linalg.norm(state.grad)) <= cfg.min_grad:
            report.stop_cause = "min-gradient"
            break
        state = scg_step(state, fun)
        if not state.success and state.lam >= LAMBDA_MAX:
            report.stop_cause = "min-gradient"
            break
        v = val_loss(state.beta)
        report.train_loss.append(state.loss)
        report.val_loss.append(v)
        if v < best_val:
            best_val, best_beta, report.best_epoch, fails = v, state.beta.copy(), epoch, 0
        elif v > report.val_loss[-2]:
            fails += 1
            if fails >= cfg.max_fail:
                report.stop_cause = "early-stop"
                break
        if epoch % 50 == 0:
            log.info("epoch %d train %.3e val %.3e", epoch, state.loss, v)
    else:
        report.stop_cause = "max-epochs"

    best = NetworkModel(sizes, *unpack(best_beta.copy(), sizes), "tanh", in_map, out_map)
    pred = best.forward_normalized(xs["te"])[0]
    report.test_mse = float(np.mean((ys["te"] - pred) ** 2))
    report.test_mse_physical = float(np.mean((dataset.u[idx_te] - out_map.invert(pred)) ** 2))
    best.meta = {"hidden": list(cfg.hidden), "best_epoch": report.best_epoch,
                 "stop_cause": report.stop_cause, "split": asdict(split),
                 "dataset": dataset.meta.get("excitation", "unknown")}
    return best, report
