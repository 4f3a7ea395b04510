"""Glue that turns a normalized config dict into runnable objects."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import aperture, data_io
from .datasets import build_dataset
from .decoder import DecoderNetwork, init_network
from .regularizers import RegularizerSpec, RhoSchedule
from .sensing import CASSI, SPC
from .trainer import TrainConfig


@dataclass
class Run:
    config: TrainConfig
    param: aperture.CaParameterization
    net: DecoderNetwork
    sensing: object
    sensing_kind: str
    train: object
    test: object
    cfg: dict


def build_sensing(cfg: dict):
    s = cfg["sensing"]
    if s["kind"] == "spc":
        return SPC(s["shots"], s["rows"], s["cols"])
    return CASSI(s["shots"], s["rows"], s["cols"], s["planes"])


def build_param(cfg: dict, rng: np.random.Generator):
    s = cfg["sensing"]
    ca = cfg["ca"]
    init = ca["init"]
    if init not in ("uniform01", "uniform_pm1", "uniform_full"):
        raise data_io.FormatError(f"unknown ca init {init!r}")
    signed = init == "uniform_pm1"
    kind = ca["parameterization"]
    if kind == "dense":
        if init == "uniform_full":
            # full-range start: higher mask contrast than the midpoint draw
            values = rng.uniform(0.0, 1.0, size=(s["shots"], s["rows"], s["cols"], 1))
            return aperture.DenseParam(values)
        return aperture.init_dense(
            s["shots"], s["rows"], s["cols"], 1, rng=rng, signed=signed
        )
    if kind == "kronecker":
        if init == "uniform_full":
            kernel = rng.uniform(
                0.0, 1.0, size=(s["shots"], ca["kernel_rows"], ca["kernel_cols"], 1)
            )
            return aperture.KroneckerParam(kernel, s["rows"], s["cols"])
        return aperture.init_kronecker(
            s["shots"], s["rows"], s["cols"],
            ca["kernel_rows"], ca["kernel_cols"], 1, rng=rng, signed=signed,
        )
    if kind == "colored":
        return aperture.init_colored(
            s["shots"], s["rows"], s["cols"],
            ca["kernel_rows"], ca["kernel_cols"],
            ca["filters"], s["planes"], rng=rng,
        )
    raise data_io.FormatError(f"unknown parameterization {kind!r}")


def build_regularizers(cfg: dict) -> list:
    epochs = cfg["schedule"]["epochs"]
    default_period = cfg["schedule"]["update_period"]
    specs = []
    for reg in cfg["regularizers"]:
        rho0 = reg["rho0"]
        rhoT = reg.get("rhoT")
        mode = reg.get("mode", "dynamic" if rhoT is not None else "static")
        sched = RhoSchedule(
            rho0=rho0,
            rhoT=rhoT,
            total_epochs=epochs,
            update_period=reg.get("update_period", default_period),
            mode=mode,
        )
        specs.append(
            RegularizerSpec(
                kind=reg["kind"],
                schedule=sched,
                p1=reg.get("p1", 1.0),
                p2=reg.get("p2", 1.0),
                levels=tuple(reg.get("levels", ())),
                exponents=tuple(reg.get("exponents", ())),
                target=reg.get("target", 0.5),
            )
        )
    return specs


def build_net(cfg: dict, sensing, rng: np.random.Generator) -> DecoderNetwork:
    task = cfg["task"]
    in_size = cfg["sensing"]["shots"] * sensing.per_shot_length
    hidden = list(task["hidden"])
    # measurements scale with the scene size and (for classification) carry a
    # large common offset across shots; normalize them inside the decoder
    scale = 1.0 / sensing.scene_size
    if task["kind"] == "classification":
        sizes = [in_size] + hidden + [10]
        activations = ["relu"] * len(hidden) + ["softmax"]
        return init_network(sizes, activations, rng, input_scale=scale,
                            center_input=True)
    sizes = [in_size] + hidden + [sensing.scene_size]
    activations = ["relu"] * len(hidden) + ["sigmoid"]
    return init_network(sizes, activations, rng, input_scale=scale)


def build_run(cfg: dict, with_data: bool = True) -> Run:
    """Deterministically build all run objects from a normalized config."""
    init_rng = np.random.default_rng(cfg["seed"])
    sensing = build_sensing(cfg)
    param = build_param(cfg, init_rng)
    net = build_net(cfg, sensing, init_rng)
    opt = cfg["optimizer"]
    config = TrainConfig(
        epochs=cfg["schedule"]["epochs"],
        batch_size=opt["batch_size"],
        optimizer=opt["kind"],
        learning_rate=opt["lr"],
        beta1=opt["beta1"],
        beta2=opt["beta2"],
        adam_eps=opt["eps"],
        momentum=opt["momentum"],
        ca_lr_mult=opt["ca_lr_mult"],
        seed=cfg["seed"],
        noise=data_io.build_noise_spec(cfg),
        gate_threshold=cfg["ca"]["gate_threshold"],
        gate_literal=cfg["ca"]["gate_literal"],
        regularizers=build_regularizers(cfg),
        task=cfg["task"]["kind"],
    )
    train = test = None
    if with_data:
        data_rng = np.random.default_rng(cfg["seed"] + 10_000)
        train, test = build_dataset(cfg["dataset"], data_rng)
        if cfg["sensing"]["kind"] == "spc":
            # the single-pixel model contracts flat scene vectors
            train = type(train)(train.scenes.reshape(len(train), -1), train.targets)
            test = type(test)(test.scenes.reshape(len(test), -1), test.targets)
        if cfg["task"]["kind"] == "reconstruction":
            train = type(train)(train.scenes, train.scenes.reshape(len(train), -1))
            test = type(test)(test.scenes, test.scenes.reshape(len(test), -1))
    return Run(config, param, net, sensing, cfg["sensing"]["kind"], train, test, cfg)
