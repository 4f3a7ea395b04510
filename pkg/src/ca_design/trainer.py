"""Coupled mini-batch training of the mask parameterization and the decoder.

Each batch runs expand -> snapshot gate -> mask noise -> sensing -> measurement
noise -> decoder -> task loss, then backpropagates through the whole chain and
adds the weighted regularizer gradients before the optimizer step. Runs are
deterministic for a fixed seed in single-threaded mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import decoder as dec
from .aperture import (
    CaParameterization,
    CodedApertureSet,
    NoiseSpec,
    expand,
    expand_backward,
    inject_ca_noise,
)
from .metrics import binarization_residual
from .regularizers import RegularizerSpec
from .sensing import add_measurement_noise


class TrainingError(RuntimeError):
    """Raised when training cannot proceed (divergence, bad shapes)."""


@dataclass
class TrainConfig:
    epochs: int = 1
    batch_size: int = 32
    optimizer: str = "adam"  # or "sgd"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    momentum: float = 0.0
    ca_lr_mult: float = 1.0
    seed: int = 0
    noise: NoiseSpec | None = None
    gate_threshold: float | None = None
    gate_literal: bool = False  # zero shots ABOVE the threshold (printed form)
    regularizers: list = field(default_factory=list)
    task: str = "classification"  # or "reconstruction"

    def __post_init__(self):
        if self.epochs < 1:
            raise TrainingError("epochs must be >= 1")
        if self.batch_size < 1:
            raise TrainingError("batch size must be >= 1")
        if self.learning_rate <= 0:
            raise TrainingError("learning rate must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise TrainingError(f"unknown optimizer {self.optimizer!r}")
        if self.task not in ("classification", "reconstruction"):
            raise TrainingError(f"unknown task {self.task!r}")
        if self.gate_threshold is not None and not 0.0 <= self.gate_threshold <= 1.0:
            raise TrainingError("gate threshold must lie in [0, 1]")

    @property
    def loss_kind(self) -> str:
        return "cross_entropy" if self.task == "classification" else "mse"


@dataclass
class TrainHistory:
    """Per-epoch records of the coupled run."""

    task_loss: list = field(default_factory=list)
    reg_values: list = field(default_factory=list)  # dict kind -> value
    rho: list = field(default_factory=list)  # dict kind -> weight
    transmittance: list = field(default_factory=list)  # per-shot arrays
    binarization_residual: list = field(default_factory=list)
    active_shots: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.task_loss)

    def csv_rows(self):
        """Header plus one row per epoch, floats at full precision."""
        kinds = sorted(self.reg_values[0].keys()) if self.reg_values else []
        shots = len(self.transmittance[0]) if self.transmittance else 0
        header = (
            ["epoch", "task_loss"]
            + [f"reg_{k}" for k in kinds]
            + [f"rho_{k}" for k in kinds]
            + [f"transmittance_{s}" for s in range(shots)]
            + ["binarization_residual", "active_shots"]
        )
        rows = [header]
        for e in range(len(self.task_loss)):
            row = [str(e), _fmt(self.task_loss[e])]
            row += [_fmt(self.reg_values[e][k]) for k in kinds]
            row += [_fmt(self.rho[e][k]) for k in kinds]
            row += [_fmt(t) for t in self.transmittance[e]]
            row += [_fmt(self.binarization_residual[e]), str(self.active_shots[e])]
            rows.append(row)
        return rows


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def snapshot_gate(
    values: np.ndarray, threshold: float | None, literal: bool = False
):
    """Zero out whole shots by mean transmittance; trainables are untouched.

    Default semantics zero the shots whose mean falls strictly below the
    threshold (the minimum accepted transmittance). ``literal`` flips the
    comparison to the printed piecewise form, which keeps only shots below
    the threshold.
    """
    if threshold is None:
        return values, np.ones(values.shape[0], dtype=bool)
    means = values.mean(axis=(1, 2, 3))
    if literal:
        active = means < threshold
    else:
        active = means >= threshold
    gated = values.copy()
    gated[~active] = 0.0
    return gated, active


class _SGD:
    def __init__(self, params, lr_scales, lr, momentum):
        self.params = params
        self.lr_scales = lr_scales
        self.lr = lr
        self.momentum = momentum
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, grads):
        for p, g, v, scale in zip(self.params, grads, self.velocity, self.lr_scales):
            v *= self.momentum
            v += g
            p -= self.lr * scale * v


class _Adam:
    def __init__(self, params, lr_scales, lr, beta1, beta2, eps):
        self.params = params
        self.lr_scales = lr_scales
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, g, m, v, scale in zip(
            self.params, grads, self.m, self.v, self.lr_scales
        ):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g**2
            p -= self.lr * scale * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def _make_optimizer(config: TrainConfig, params, lr_scales):
    if config.optimizer == "sgd":
        return _SGD(params, lr_scales, config.learning_rate, config.momentum)
    return _Adam(
        params,
        lr_scales,
        config.learning_rate,
        config.beta1,
        config.beta2,
        config.adam_eps,
    )


def _batch_objective_grads(
    param, net, sensing, scenes, targets, config, epoch, rng=None
):
    """Forward/backward over one batch; returns (task loss, ca grad, net grads).

    With ``rng`` None the run is noise-free (used by the gradient checker).
    Regularizers are evaluated on the clean expanded mask so gated shots keep
    receiving shrinkage gradients.
    """
    ca = expand(param)
    gated, active = snapshot_gate(
        ca.values, config.gate_threshold, config.gate_literal
    )
    forward_values = gated
    if rng is not None and config.noise is not None and not config.noise.is_zero:
        forward_values = inject_ca_noise(
            CodedApertureSet(gated), config.noise, rng
        ).values
    measurements = sensing.forward_batch(forward_values, scenes)
    if (
        rng is not None
        and config.noise is not None
        and config.noise.measurement_snr_db is not None
    ):
        measurements = add_measurement_noise(
            measurements, config.noise.measurement_snr_db, rng
        )
    out, cache = dec.forward(net, measurements)
    task_value, dpred = dec.loss(config.loss_kind, out, targets)
    net_grads, dmeas = dec.backward(net, cache, dpred)
    dvalues = sensing.forward_grad_wrt_ca_batch(scenes, dmeas)
    dvalues[~active] = 0.0  # gated shots contribute nothing to the task term

    reg_scenes = [scenes[i] for i in range(min(len(scenes), 8))]
    reg_value = 0.0
    for spec in config.regularizers:
        rho = spec.schedule.rho_at(epoch)
        value, g = spec.evaluate(ca, sensing=sensing, scenes=reg_scenes)
        reg_value += rho * value
        dvalues = dvalues + rho * g
    dtrain = expand_backward(param, dvalues)
    return task_value, reg_value, dtrain, net_grads


def train_e2e(config: TrainConfig, dataset, param: CaParameterization, sensing, net):
    """Run the coupled optimization; mutates param and net in place.

    ``dataset`` provides ``scenes`` (K, ...) and ``targets``. Returns
    (param, net, TrainHistory).
    """
    scenes = np.asarray(dataset.scenes, dtype=np.float64)
    targets = np.asarray(dataset.targets)
    if len(scenes) == 0:
        raise TrainingError("dataset is empty")
    rng = np.random.default_rng(config.seed)

    params = [param.trainables] + net.parameters()
    lr_scales = [config.ca_lr_mult] + [1.0] * len(net.parameters())
    opt = _make_optimizer(config, params, lr_scales)
    history = TrainHistory()

    levels = _history_levels(config)
    n = len(scenes)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            task_value, _, dtrain, net_grads = _batch_objective_grads(
                param, net, sensing, scenes[idx], targets[idx], config, epoch, rng
            )
            if not np.isfinite(task_value):
                raise TrainingError(
                    f"task loss became non-finite at epoch {epoch}"
                )
            flat_net_grads = [g for pair in net_grads for g in pair]
            opt.step([dtrain] + flat_net_grads)
            epoch_loss += task_value
            n_batches += 1

        _record_epoch(history, config, param, sensing, scenes, epoch, levels,
                      epoch_loss / n_batches)
    return param, net, history


def _history_levels(config: TrainConfig):
    for spec in config.regularizers:
        lv = spec.target_levels()
        if lv is not None:
            return lv
    return (0.0, 1.0)


def _record_epoch(history, config, param, sensing, scenes, epoch, levels, mean_loss):
    ca = expand(param)
    _, active = snapshot_gate(ca.values, config.gate_threshold, config.gate_literal)
    reg_values = {}
    rho_values = {}
    reg_scenes = [scenes[i] for i in range(min(len(scenes), 8))]
    for spec in config.regularizers:
        value, _ = spec.evaluate(ca, sensing=sensing, scenes=reg_scenes)
        reg_values[spec.kind] = value
        rho_values[spec.kind] = spec.schedule.rho_at(epoch)
    history.task_loss.append(mean_loss)
    history.reg_values.append(reg_values)
    history.rho.append(rho_values)
    history.transmittance.append(ca.values.mean(axis=(1, 2, 3)).tolist())
    history.binarization_residual.append(binarization_residual(ca, levels))
    history.active_shots.append(int(active.sum()))


def gradient_check(
    param,
    net,
    sensing,
    scenes,
    targets,
    config: TrainConfig,
    epoch: int = 0,
    h: float = 1e-5,
    floor: float = 1e-4,
):
    """Central finite differences of the full objective vs analytic gradients.

    Noise is disabled for the check (it would break differentiability of the
    comparison, and additive noise does not change the gradients anyway).
    Returns a dict mapping parameter-group names to max relative error.
    Gradient entries smaller than ``floor`` are compared absolutely so that
    finite-difference round-off on near-zero entries does not drown the report.
    """
    scenes = np.asarray(scenes, dtype=np.float64)
    targets = np.asarray(targets)

    def objective():
        task_value, reg_value, _, _ = _batch_objective_grads(
            param, net, sensing, scenes, targets, config, epoch, rng=None
        )
        return task_value + reg_value

    task_value, _, dtrain, net_grads = _batch_objective_grads(
        param, net, sensing, scenes, targets, config, epoch, rng=None
    )
    groups = {"ca": (param.trainables, dtrain)}
    for i, (layer, (dw, db)) in enumerate(zip(net.layers, net_grads)):
        groups[f"layer{i}_weights"] = (layer.weights, dw)
        groups[f"layer{i}_bias"] = (layer.bias, db)

    report = {}
    for name, (array, analytic) in groups.items():
        fd = np.zeros_like(array)
        flat = array.reshape(-1)
        fd_flat = fd.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            fplus = objective()
            flat[j] = orig - h
            fminus = objective()
            flat[j] = orig
            fd_flat[j] = (fplus - fminus) / (2.0 * h)
        scale = np.maximum(np.abs(analytic) + np.abs(fd), floor)
        report[name] = float(np.max(np.abs(analytic - fd) / scale))
    return report
