"""Local learners with explicit numpy gradients.

Three learner kinds share one interface (forward / train_epoch /
export_params / import_params):

* LstmRegressor -- two LSTM layers plus a dense readout from the final
  step's top hidden state; trained on MSE, gradients via full-window BPTT.
* LinearAR -- dot product of the flattened input window with a weight
  vector plus bias; the convex sanity baseline.
* MlpClassifier -- affine -> tanh -> affine -> logits, trained with
  softmax cross-entropy; used by the query-switching procedure.

All initialization is Xavier-uniform from a generator seeded by the spec,
so identical specs produce bit-identical parameters. Gate order inside an
LSTM weight block is (input, forget, candidate, output); the forget-gate
bias starts at 1.0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .params import LayerParams, ParameterSet, SchemaError


class LearnerKind(str, Enum):
    LSTM_REGRESSOR = "lstm_regressor"
    LINEAR_AR = "linear_ar"
    MLP_CLASSIFIER = "mlp_classifier"


@dataclass(frozen=True)
class LearnerSpec:
    kind: LearnerKind
    input_window: int
    input_dim: int
    hidden_sizes: tuple[int, ...] = ()
    output_dim: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", LearnerKind(self.kind))
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.input_window <= 0 or self.input_dim <= 0:
            raise ValueError("input_window and input_dim must be positive")
        if any(h <= 0 for h in self.hidden_sizes):
            raise ValueError("hidden sizes must be positive")
        if self.kind is LearnerKind.LSTM_REGRESSOR:
            if len(self.hidden_sizes) != 2:
                raise ValueError("lstm_regressor needs exactly two hidden sizes")
            if self.output_dim != 1:
                raise ValueError("lstm_regressor output_dim must be 1")
        elif self.kind is LearnerKind.MLP_CLASSIFIER:
            if len(self.hidden_sizes) != 1:
                raise ValueError("mlp_classifier needs exactly one hidden size")
            if self.output_dim < 2:
                raise ValueError("mlp_classifier needs at least 2 classes")
        elif self.kind is LearnerKind.LINEAR_AR:
            if self.hidden_sizes:
                raise ValueError("linear_ar takes no hidden sizes")
            if self.output_dim != 1:
                raise ValueError("linear_ar output_dim must be 1")


@dataclass(frozen=True)
class SupervisedBatch:
    inputs: np.ndarray   # (N, W, D)
    targets: np.ndarray  # (N,) floats (regression) or int class indices

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=np.float64)
        targets = np.asarray(self.targets)
        if inputs.ndim != 3:
            raise ValueError(f"inputs must be (N, W, D), got shape {inputs.shape}")
        if len(inputs) != len(targets) or len(inputs) == 0:
            raise ValueError("inputs and targets must have equal non-zero length")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)

    def __len__(self) -> int:
        return len(self.inputs)


@dataclass(frozen=True)
class TrainReport:
    epochs_run: int
    final_loss: float
    mae: Optional[float] = None

    def __post_init__(self):
        if not np.isfinite(self.final_loss) or self.final_loss < 0:
            raise ValueError(f"final_loss must be finite and >= 0, got {self.final_loss}")


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int,
            shape: tuple[int, ...]) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Learner:
    """Shared parameter bookkeeping; subclasses implement forward/loss/grads."""

    def __init__(self, spec: LearnerSpec):
        self.spec = spec
        self._arrays: dict[str, np.ndarray] = {}
        self._order: list[str] = []
        self._init_arrays(np.random.default_rng(spec.seed))

    def _init_arrays(self, rng: np.random.Generator) -> None:
        raise NotImplementedError

    def _add(self, name: str, values: np.ndarray) -> None:
        self._arrays[name] = np.asarray(values, dtype=np.float64)
        self._order.append(name)

    # -- federated exchange boundary ------------------------------------

    def export_params(self) -> ParameterSet:
        return ParameterSet(layers=tuple(
            LayerParams(name=n, shape=self._arrays[n].shape,
                        values=self._arrays[n].ravel().copy())
            for n in self._order
        ))

    def import_params(self, params: ParameterSet) -> None:
        own = self.export_params()
        if params.schema != own.schema:
            for (na, sa), (nb, sb) in zip(own.schema, params.schema):
                if na != nb or sa != sb:
                    raise SchemaError(
                        f"schema mismatch at layer {na!r}: expected "
                        f"({na!r}, {sa}), got ({nb!r}, {sb})"
                    )
            raise SchemaError(
                f"layer count mismatch: {len(own.schema)} vs {len(params.schema)}"
            )
        for lp in params.layers:
            self._arrays[lp.name] = lp.reshaped().copy()

    # -- training ---------------------------------------------------------

    def forward(self, batch: SupervisedBatch) -> np.ndarray:
        self._check_dims(batch)
        return self._forward(batch.inputs)

    def loss_and_grads(self, batch: SupervisedBatch) -> tuple[float, dict[str, np.ndarray]]:
        self._check_dims(batch)
        return self._loss_and_grads(batch.inputs, batch.targets)

    def train_epoch(self, batch: SupervisedBatch, learning_rate: float,
                    batch_size: int = 32,
                    clip_norm: Optional[float] = None) -> TrainReport:
        """One full pass of mini-batch gradient descent, in order (no shuffle).

        When `clip_norm` is set, each mini-batch gradient is rescaled so its
        global L2 norm does not exceed it (the usual guard against the
        recurrent-network exploding-gradient problem).
        """
        if learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {learning_rate}")
        if clip_norm is not None and clip_norm <= 0:
            raise ValueError(f"clip_norm must be positive, got {clip_norm}")
        self._check_dims(batch)
        n = len(batch)
        total_loss = 0.0
        for start in range(0, n, batch_size):
            xb = batch.inputs[start:start + batch_size]
            yb = batch.targets[start:start + batch_size]
            loss, grads = self._loss_and_grads(xb, yb)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite training loss: {loss}")
            if clip_norm is not None:
                norm = math.sqrt(sum(float(np.sum(g * g))
                                     for g in grads.values()))
                if norm > clip_norm:
                    scale = clip_norm / norm
                    grads = {name: g * scale for name, g in grads.items()}
            for name, g in grads.items():
                self._arrays[name] -= learning_rate * g
            total_loss += loss * len(xb)
        mean_loss = total_loss / n
        report_mae = None
        if self.spec.kind is not LearnerKind.MLP_CLASSIFIER:
            preds = self._forward(batch.inputs)
            report_mae = mae(preds, batch.targets)
        return TrainReport(epochs_run=1, final_loss=mean_loss, mae=report_mae)

    # -- subclass hooks -----------------------------------------------------

    def _check_dims(self, batch: SupervisedBatch) -> None:
        _, w, d = batch.inputs.shape
        if w != self.spec.input_window or d != self.spec.input_dim:
            raise ValueError(
                f"batch window/features ({w}, {d}) do not match spec "
                f"({self.spec.input_window}, {self.spec.input_dim})"
            )

    def _forward(self, inputs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _loss_and_grads(self, inputs, targets) -> tuple[float, dict[str, np.ndarray]]:
        raise NotImplementedError


class LinearAR(Learner):
    """Linear autoregressive baseline over the flattened window."""

    def _init_arrays(self, rng):
        d_in = self.spec.input_window * self.spec.input_dim
        self._add("ar.w", _xavier(rng, d_in, 1, (d_in,)))
        self._add("ar.b", np.zeros(1))

    def _forward(self, inputs):
        flat = inputs.reshape(len(inputs), -1)
        return flat @ self._arrays["ar.w"] + self._arrays["ar.b"][0]

    def _loss_and_grads(self, inputs, targets):
        flat = inputs.reshape(len(inputs), -1)
        preds = flat @ self._arrays["ar.w"] + self._arrays["ar.b"][0]
        resid = preds - np.asarray(targets, dtype=np.float64)
        loss = float(np.mean(resid ** 2))
        dp = 2.0 * resid / len(resid)
        return loss, {"ar.w": flat.T @ dp, "ar.b": np.array([dp.sum()])}


class MlpClassifier(Learner):
    """Two-layer fully-connected softmax classifier over the flattened window."""

    def _init_arrays(self, rng):
        d_in = self.spec.input_window * self.spec.input_dim
        h = self.spec.hidden_sizes[0]
        c = self.spec.output_dim
        self._add("fc1.w", _xavier(rng, d_in, h, (d_in, h)))
        self._add("fc1.b", np.zeros(h))
        self._add("fc2.w", _xavier(rng, h, c, (h, c)))
        self._add("fc2.b", np.zeros(c))

    def _forward(self, inputs):
        flat = inputs.reshape(len(inputs), -1)
        hidden = np.tanh(flat @ self._arrays["fc1.w"] + self._arrays["fc1.b"])
        return hidden @ self._arrays["fc2.w"] + self._arrays["fc2.b"]

    def _loss_and_grads(self, inputs, targets):
        flat = inputs.reshape(len(inputs), -1)
        labels = np.asarray(targets, dtype=np.int64)
        hidden = np.tanh(flat @ self._arrays["fc1.w"] + self._arrays["fc1.b"])
        logits = hidden @ self._arrays["fc2.w"] + self._arrays["fc2.b"]
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_z = np.log(np.exp(shifted).sum(axis=1))
        n = len(flat)
        loss = float(np.mean(log_z - shifted[np.arange(n), labels]))
        probs = np.exp(shifted - log_z[:, None])
        dlogits = probs
        dlogits[np.arange(n), labels] -= 1.0
        dlogits /= n
        dhidden = (dlogits @ self._arrays["fc2.w"].T) * (1.0 - hidden ** 2)
        return loss, {
            "fc2.w": hidden.T @ dlogits,
            "fc2.b": dlogits.sum(axis=0),
            "fc1.w": flat.T @ dhidden,
            "fc1.b": dhidden.sum(axis=0),
        }


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class LstmRegressor(Learner):
    """Two stacked LSTM layers with a scalar dense readout from the last step."""

    def _init_arrays(self, rng):
        in_dim = self.spec.input_dim
        for idx, h in enumerate(self.spec.hidden_sizes, start=1):
            self._add(f"lstm{idx}.wx", _xavier(rng, in_dim, 4 * h, (in_dim, 4 * h)))
            self._add(f"lstm{idx}.wh", _xavier(rng, h, 4 * h, (h, 4 * h)))
            bias = np.zeros(4 * h)
            bias[h:2 * h] = 1.0  # forget gate opens by default
            self._add(f"lstm{idx}.b", bias)
            in_dim = h
        self._add("fc.w", _xavier(rng, in_dim, 1, (in_dim, 1)))
        self._add("fc.b", np.zeros(1))

    def _run_layer(self, idx: int, xs: np.ndarray, cache: Optional[list] = None) -> np.ndarray:
        """xs: (N, W, F) -> hidden outputs (N, W, H). Zero initial state."""
        wx, wh, b = (self._arrays[f"lstm{idx}.{k}"] for k in ("wx", "wh", "b"))
        n, steps, _ = xs.shape
        hsize = wh.shape[0]
        h = np.zeros((n, hsize))
        c = np.zeros((n, hsize))
        outs = np.empty((n, steps, hsize))
        for t in range(steps):
            z = xs[:, t, :] @ wx + h @ wh + b
            i = _sigmoid(z[:, :hsize])
            f = _sigmoid(z[:, hsize:2 * hsize])
            g = np.tanh(z[:, 2 * hsize:3 * hsize])
            o = _sigmoid(z[:, 3 * hsize:])
            c_prev = c
            c = f * c_prev + i * g
            tanh_c = np.tanh(c)
            h_prev = h
            h = o * tanh_c
            outs[:, t, :] = h
            if cache is not None:
                cache.append((xs[:, t, :], h_prev, c_prev, i, f, g, o, tanh_c))
        return outs

    def _backprop_layer(self, idx: int, cache: list, dh_seq: np.ndarray,
                        grads: dict[str, np.ndarray]) -> np.ndarray:
        wx, wh = self._arrays[f"lstm{idx}.wx"], self._arrays[f"lstm{idx}.wh"]
        n, steps, hsize = dh_seq.shape
        gwx = np.zeros_like(wx)
        gwh = np.zeros_like(wh)
        gb = np.zeros(4 * hsize)
        dx_seq = np.empty((n, steps, wx.shape[0]))
        dh_next = np.zeros((n, hsize))
        dc_next = np.zeros((n, hsize))
        for t in reversed(range(steps)):
            x_t, h_prev, c_prev, i, f, g, o, tanh_c = cache[t]
            dh = dh_seq[:, t, :] + dh_next
            dc = dc_next + dh * o * (1.0 - tanh_c ** 2)
            dz = np.concatenate([
                dc * g * i * (1.0 - i),
                dc * c_prev * f * (1.0 - f),
                dc * i * (1.0 - g ** 2),
                dh * tanh_c * o * (1.0 - o),
            ], axis=1)
            gwx += x_t.T @ dz
            gwh += h_prev.T @ dz
            gb += dz.sum(axis=0)
            dx_seq[:, t, :] = dz @ wx.T
            dh_next = dz @ wh.T
            dc_next = dc * f
        grads[f"lstm{idx}.wx"] = gwx
        grads[f"lstm{idx}.wh"] = gwh
        grads[f"lstm{idx}.b"] = gb
        return dx_seq

    def _forward(self, inputs):
        h1 = self._run_layer(1, inputs)
        h2 = self._run_layer(2, h1)
        return h2[:, -1, :] @ self._arrays["fc.w"][:, 0] + self._arrays["fc.b"][0]

    def _loss_and_grads(self, inputs, targets):
        cache1: list = []
        cache2: list = []
        h1 = self._run_layer(1, inputs, cache1)
        h2 = self._run_layer(2, h1, cache2)
        top = h2[:, -1, :]
        preds = top @ self._arrays["fc.w"][:, 0] + self._arrays["fc.b"][0]
        resid = preds - np.asarray(targets, dtype=np.float64)
        loss = float(np.mean(resid ** 2))
        dp = 2.0 * resid / len(resid)

        grads: dict[str, np.ndarray] = {
            "fc.w": (top.T @ dp)[:, None],
            "fc.b": np.array([dp.sum()]),
        }
        dh2 = np.zeros_like(h2)
        dh2[:, -1, :] = dp[:, None] * self._arrays["fc.w"][:, 0]
        dh1 = self._backprop_layer(2, cache2, dh2, grads)
        self._backprop_layer(1, cache1, dh1, grads)
        return loss, grads


_LEARNER_CLASSES = {
    LearnerKind.LSTM_REGRESSOR: LstmRegressor,
    LearnerKind.LINEAR_AR: LinearAR,
    LearnerKind.MLP_CLASSIFIER: MlpClassifier,
}


def init_learner(spec: LearnerSpec) -> Learner:
    """Build a learner with Xavier-uniform parameters from the spec's seed."""
    return _LEARNER_CLASSES[spec.kind](spec)


def mae(predictions: Sequence[float], targets: Sequence[float]) -> float:
    """Mean absolute error."""
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape or p.size == 0:
        raise ValueError(f"length mismatch or empty: {p.shape} vs {t.shape}")
    return float(np.mean(np.abs(p - t)))


def gradient_check(learner: Learner, batch: SupervisedBatch,
                   step: float = 1e-5) -> float:
    """Max relative error between analytic and central finite-difference gradients."""
    _, analytic = learner.loss_and_grads(batch)
    worst = 0.0
    for name in learner._order:
        arr = learner._arrays[name]
        flat = arr.ravel()
        g_a = analytic[name].ravel()
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            loss_plus, _ = learner.loss_and_grads(batch)
            flat[j] = orig - step
            loss_minus, _ = learner.loss_and_grads(batch)
            flat[j] = orig
            g_n = (loss_plus - loss_minus) / (2.0 * step)
            rel = abs(g_a[j] - g_n) / max(1e-8, abs(g_a[j]) + abs(g_n))
            worst = max(worst, rel)
    return worst
