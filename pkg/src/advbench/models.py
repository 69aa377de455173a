"""Classifier interface and the built-in reference model zoo.

A model maps image batches (n, c, h, w) to logits (n, k).  White-box models
additionally expose gradients of a scalar loss with respect to the input:

    ("cross-entropy", labels)   sum over the batch of CE against labels
    ("margin", target)          sum of max_{i != target} Z_i - Z_target
    ("logit-diff", a, b)        sum of Z_a - Z_b  (linearization helper)

Zoo: logistic regression (flatten-dense), MLP (dense 64, relu, dense), and
a tiny CNN (conv 3x3x8, relu, flatten, dense).  Parameters initialize
uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)] from counter-based streams,
so a (architecture, seed) pair pins every weight bit-exactly.

Model files: one line of UTF-8 JSON (shapes, names, version, bounds,
architecture tag), a newline, then raw little-endian float64 parameter data
in the header's declared order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff
from .autodiff import GraphBuilder
from .datasets import Dataset
from .errors import (
    AdvbenchError,
    BoundsError,
    CapabilityError,
    FormatError,
    NonFiniteError,
    ShapeError,
    TrainingError,
    VersionError,
)
from .rng import Stream

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    learning_rate: float
    seed: int
    label_smoothing_alpha: float = 0.0

    def __post_init__(self):
        if self.epochs < 1:
            raise TrainingError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise TrainingError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise TrainingError("learning_rate must be positive")
        if not 0.0 <= self.label_smoothing_alpha < 1.0:
            raise TrainingError("label_smoothing_alpha must lie in [0, 1)")


class Model:
    """Prediction interface shared by local, defended and remote models."""

    name: str
    input_shape: tuple
    bounds: tuple
    num_classes: int
    capability = "black-box"

    def predict(self, batch: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def input_gradient(self, x: np.ndarray, loss) -> np.ndarray:
        raise CapabilityError(f"model {self.name!r} is {self.capability}: no gradients")

    def _check_batch(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != len(self.input_shape) + 1 or batch.shape[1:] != self.input_shape:
            raise ShapeError(
                f"batch shape {batch.shape} does not match input shape {self.input_shape}"
            )
        if not np.all(np.isfinite(batch)):
            raise NonFiniteError("batch contains NaN/Inf")
        lo, hi = self.bounds
        if batch.size and (batch.min() < lo or batch.max() > hi):
            raise BoundsError(f"batch values outside bounds [{lo}, {hi}]")
        return batch


def onehot(labels: np.ndarray, k: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1 or (labels.size and (labels.min() < 0 or labels.max() >= k)):
        raise AdvbenchError(f"labels must be 1-d integers in [0, {k})")
    out = np.zeros((labels.size, k))
    out[np.arange(labels.size), labels] = 1.0
    return out


class GraphModel(Model):
    """White-box classifier backed by an autodiff graph."""

    capability = "white-box"

    def __init__(self, graph, parameters, input_shape, num_classes,
                 bounds=(0.0, 1.0), architecture="custom", arch_config=None, name=None):
        if not bounds[0] < bounds[1]:
            raise AdvbenchError(f"bounds must satisfy lower < upper, got {bounds}")
        self.graph = graph
        self.parameters = {k: np.asarray(v, dtype=np.float64) for k, v in parameters.items()}
        self.input_shape = tuple(input_shape)
        self.num_classes = int(num_classes)
        self.bounds = (float(bounds[0]), float(bounds[1]))
        self.architecture = architecture
        self.arch_config = dict(arch_config or {})
        self.name = name or architecture
        self._loss_graphs = _build_loss_graphs(graph)

    def with_parameters(self, parameters) -> "GraphModel":
        return GraphModel(self.graph, parameters, self.input_shape, self.num_classes,
                          self.bounds, self.architecture, self.arch_config, self.name)

    def predict(self, batch):
        batch = self._check_batch(batch)
        return autodiff.evaluate(self.graph, {"x": batch, **self.parameters})

    def input_gradient(self, x, loss):
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == len(self.input_shape)
        batch = self._check_batch(x[None] if squeeze else x)
        grad = self._input_gradient_batch(batch, loss)
        return grad[0] if squeeze else grad

    def _input_gradient_batch(self, batch, loss):
        kind, args = loss[0], loss[1:]
        if kind == "cross-entropy":
            labels = np.atleast_1d(np.asarray(args[0], dtype=np.int64))
            if labels.size == 1 and batch.shape[0] > 1:
                labels = np.repeat(labels, batch.shape[0])
            bindings = {"x": batch, "_targets": onehot(labels, self.num_classes),
                        **self.parameters}
            return autodiff.gradient(self._loss_graphs["ce"], bindings, "x")
        if kind in ("margin", "logit-diff"):
            selector = self._selector(batch, kind, args)
            bindings = {"x": batch, "_selector": selector, **self.parameters}
            return autodiff.gradient(self._loss_graphs["pick"], bindings, "x")
        raise AdvbenchError(f"unknown loss kind {kind!r}")

    def _selector(self, batch, kind, args):
        n, k = batch.shape[0], self.num_classes
        selector = np.zeros((n, k))
        if kind == "logit-diff":
            a, b = int(args[0]), int(args[1])
            selector[:, a] += 1.0
            selector[:, b] -= 1.0
        else:
            target = int(args[0])
            logits = autodiff.evaluate(self.graph, {"x": batch, **self.parameters})
            masked = logits.copy()
            masked[:, target] = -np.inf
            best_other = np.argmax(masked, axis=1)
            selector[np.arange(n), best_other] = 1.0
            selector[:, target] -= 1.0
        return selector

    def param_vector(self) -> np.ndarray:
        return np.concatenate([self.parameters[k].ravel() for k in sorted(self.parameters)])


def _build_loss_graphs(graph):
    ce = GraphBuilder.extend(graph)
    t = ce.input("_targets")
    ce_loss = ce.sum(ce.softmax_cross_entropy(graph.output, t))
    pick = GraphBuilder.extend(graph)
    s = pick.input("_selector")
    pick_loss = pick.sum(pick.multiply(graph.output, s))
    return {"ce": ce.build(ce_loss), "pick": pick.build(pick_loss)}


def _init_param(stream: Stream, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return stream.uniform(int(np.prod(shape)), -bound, bound).reshape(shape)


def _flat_size(input_shape):
    return int(np.prod(input_shape))


def logistic_regression(input_shape, num_classes, seed=0, name=None) -> GraphModel:
    f = _flat_size(input_shape)
    b = GraphBuilder()
    x = b.input("x")
    flat = b.reshape(x, (-1, f))
    logits = b.add(b.matmul(flat, b.param("w")), b.param("b"))
    params = {
        "w": _init_param(Stream(seed, "init-w"), (f, num_classes), f),
        "b": _init_param(Stream(seed, "init-b"), (num_classes,), f),
    }
    return GraphModel(b.build(logits), params, input_shape, num_classes,
                      architecture="logreg",
                      arch_config={"input_shape": list(input_shape), "num_classes": num_classes},
                      name=name)


def mlp(input_shape, num_classes, hidden=64, seed=0, name=None) -> GraphModel:
    f = _flat_size(input_shape)
    b = GraphBuilder()
    x = b.input("x")
    flat = b.reshape(x, (-1, f))
    h = b.relu(b.add(b.matmul(flat, b.param("w1")), b.param("b1")))
    logits = b.add(b.matmul(h, b.param("w2")), b.param("b2"))
    params = {
        "w1": _init_param(Stream(seed, "init-w1"), (f, hidden), f),
        "b1": _init_param(Stream(seed, "init-b1"), (hidden,), f),
        "w2": _init_param(Stream(seed, "init-w2"), (hidden, num_classes), hidden),
        "b2": _init_param(Stream(seed, "init-b2"), (num_classes,), hidden),
    }
    return GraphModel(b.build(logits), params, input_shape, num_classes,
                      architecture="mlp",
                      arch_config={"input_shape": list(input_shape),
                                   "num_classes": num_classes, "hidden": hidden},
                      name=name)


def tiny_cnn(input_shape, num_classes, channels=8, kernel=3, seed=0, name=None) -> GraphModel:
    c, h, w = input_shape
    oh, ow = h - kernel + 1, w - kernel + 1
    if oh < 1 or ow < 1:
        raise ShapeError(f"{kernel}x{kernel} conv does not fit input {input_shape}")
    f = channels * oh * ow
    b = GraphBuilder()
    x = b.input("x")
    conv = b.add(b.conv2d(x, b.param("cw")), b.param("cb"))
    flat = b.reshape(b.relu(conv), (-1, f))
    logits = b.add(b.matmul(flat, b.param("w")), b.param("b"))
    fan_conv = c * kernel * kernel
    params = {
        "cw": _init_param(Stream(seed, "init-cw"), (channels, c, kernel, kernel), fan_conv),
        "cb": _init_param(Stream(seed, "init-cb"), (channels, 1, 1), fan_conv),
        "w": _init_param(Stream(seed, "init-w"), (f, num_classes), f),
        "b": _init_param(Stream(seed, "init-b"), (num_classes,), f),
    }
    return GraphModel(b.build(logits), params, input_shape, num_classes,
                      architecture="cnn",
                      arch_config={"input_shape": list(input_shape), "num_classes": num_classes,
                                   "channels": channels, "kernel": kernel},
                      name=name)


_ZOO = {
    "logreg": lambda cfg, seed, name: logistic_regression(
        tuple(cfg["input_shape"]), cfg["num_classes"], seed, name),
    "mlp": lambda cfg, seed, name: mlp(
        tuple(cfg["input_shape"]), cfg["num_classes"], cfg.get("hidden", 64), seed, name),
    "cnn": lambda cfg, seed, name: tiny_cnn(
        tuple(cfg["input_shape"]), cfg["num_classes"], cfg.get("channels", 8),
        cfg.get("kernel", 3), seed, name),
}


def build_model(architecture, arch_config, seed=0, name=None) -> GraphModel:
    if architecture not in _ZOO:
        raise AdvbenchError(f"unknown architecture {architecture!r} (have {sorted(_ZOO)})")
    return _ZOO[architecture](arch_config, seed, name)


def _check_dataset(model: GraphModel, data: Dataset):
    if data.images.shape[1:] != model.input_shape:
        raise ShapeError(
            f"dataset images {data.images.shape[1:]} do not match model input "
            f"{model.input_shape}")
    if data.labels.size and data.labels.max() >= model.num_classes:
        raise AdvbenchError("dataset labels exceed model class count")


def train(model: GraphModel, data: Dataset, cfg: TrainConfig) -> GraphModel:
    """Adam training on softmax cross-entropy; returns a new model.

    Deterministic in cfg.seed.  cfg.label_smoothing_alpha > 0 trains against
    smoothed targets; alpha=0 is bit-identical to plain one-hot training.
    The returned model carries per-epoch mean losses in .training_log.
    """
    return _run_training(model, data, cfg, adversarial_hook=None)


def _run_training(model, data, cfg, adversarial_hook=None):
    _check_dataset(model, data)
    n, k = len(data), model.num_classes
    alpha = cfg.label_smoothing_alpha

    builder = GraphBuilder.extend(model.graph)
    t = builder.input("_targets")
    loss_graph = builder.build(builder.mean(builder.softmax_cross_entropy(model.graph.output, t)))
    param_names = list(model.parameters)

    params = {name: v.copy() for name, v in model.parameters.items()}
    adam = autodiff.init_adam(params, learning_rate=cfg.learning_rate)
    log = []
    for epoch in range(cfg.epochs):
        order = Stream(cfg.seed, f"train-shuffle-{epoch}").permutation(n)
        total = 0.0
        for bidx, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            images, labels = data.images[idx], data.labels[idx]
            if adversarial_hook is not None:
                images = adversarial_hook(model.with_parameters(params), images, labels,
                                          epoch, bidx)
            targets = onehot(labels, k) * (1.0 - alpha) + alpha / k
            bindings = {"x": images, "_targets": targets, **params}
            try:
                loss = float(autodiff.evaluate(loss_graph, bindings))
                grads = autodiff.gradients(loss_graph, bindings, param_names)
            except NonFiniteError as e:
                raise TrainingError(f"non-finite loss at epoch {epoch} batch {bidx}: {e}") from e
            params, adam = autodiff.adam_step(adam, grads, params)
            total += loss * len(idx)
        log.append(total / n)
    trained = model.with_parameters(params)
    trained.training_log = log
    return trained


def accuracy(model: Model, data: Dataset) -> float:
    logits = model.predict(data.images)
    return float(np.mean(np.argmax(logits, axis=1) == data.labels))


def save_model(model, path) -> None:
    """JSON header line + raw little-endian float64 parameters."""
    from .defenses import DefendedModel  # cycle kept local

    if isinstance(model, DefendedModel):
        header = model._file_header()
        inner = model.inner
    elif isinstance(model, GraphModel):
        header = _graph_model_header(model)
        inner = model
    else:
        raise AdvbenchError(f"cannot serialize model of type {type(model).__name__}")
    blob = b"".join(
        np.ascontiguousarray(inner.parameters[p]).astype("<f8").tobytes()
        for p in sorted(inner.parameters)
    )
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        f.write(b"\n")
        f.write(blob)


def _graph_model_header(model: GraphModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": "advbench-model",
        "architecture": model.architecture,
        "arch_config": model.arch_config,
        "input_shape": list(model.input_shape),
        "num_classes": model.num_classes,
        "bounds": [model.bounds[0], model.bounds[1]],
        "name": model.name,
        "parameters": [
            {"name": p, "shape": list(model.parameters[p].shape)}
            for p in sorted(model.parameters)
        ],
    }


def load_model(path):
    with open(path, "rb") as f:
        raw = f.read()
    nl = raw.find(b"\n")
    if nl < 0:
        raise FormatError(f"{path}: no header line")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: corrupt header: {e}") from e
    if not isinstance(header, dict) or header.get("kind") != "advbench-model":
        raise FormatError(f"{path}: not an advbench model file")
    if header.get("format_version") != MODEL_FORMAT_VERSION:
        raise VersionError(
            f"{path}: format version {header.get('format_version')!r} "
            f"(this build reads {MODEL_FORMAT_VERSION})")
    return _model_from_header(header, raw[nl + 1:], path)


def _model_from_header(header, blob, path):
    if header["architecture"] == "defended":
        from .defenses import defended_from_header

        return defended_from_header(header, blob, path)
    inner_header = header
    model = build_model(inner_header["architecture"], inner_header["arch_config"],
                        seed=0, name=inner_header.get("name"))
    params, offset = {}, 0
    for spec in inner_header["parameters"]:
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        end = offset + 8 * count
        if end > len(blob):
            raise FormatError(f"{path}: truncated parameter data for {spec['name']!r}")
        params[spec["name"]] = (
            np.frombuffer(blob[offset:end], dtype="<f8").reshape(spec["shape"]).copy()
        )
        offset = end
    if offset != len(blob):
        raise FormatError(f"{path}: {len(blob) - offset} trailing bytes after parameters")
    if set(params) != set(model.parameters):
        raise FormatError(f"{path}: parameter names do not match architecture")
    out = model.with_parameters(params)
    out.bounds = (float(header["bounds"][0]), float(header["bounds"][1]))
    return out
