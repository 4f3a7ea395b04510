"""On-disk formats: mask exports (CSV/PGM/RAW), checkpoints, and JSON configs.

RAW and CSV mask exports round-trip bit-exactly; PGM is a lossy 8-bit
visualization. A checkpoint bundles the mask parameterization and the decoder
weights in one little-endian float64 container.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .aperture import (
    CodedApertureSet,
    ColoredParam,
    DenseParam,
    KroneckerParam,
    NoiseSpec,
)
from .decoder import ACTIVATIONS, DecoderNetwork, DenseLayer


class FormatError(ValueError):
    """Raised for malformed files or schema violations."""


RAW_MAGIC = b"APTR"
CKPT_MAGIC = b"ACKP"
FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# Mask exports
# ---------------------------------------------------------------------------


def save_ca_raw(path, ca: CodedApertureSet) -> None:
    s, m, n, planes = ca.values.shape
    header = RAW_MAGIC + struct.pack("<5I", FORMAT_VERSION, s, m, n, planes)
    data = ca.values.astype("<f8").tobytes()
    Path(path).write_bytes(header + data)


def load_ca_raw(path) -> CodedApertureSet:
    blob = Path(path).read_bytes()
    if len(blob) < 24 or blob[:4] != RAW_MAGIC:
        raise FormatError(f"{path}: not a RAW mask file (bad magic)")
    version, s, m, n, planes = struct.unpack("<5I", blob[4:24])
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = 24 + 8 * s * m * n * planes
    if len(blob) != expected:
        raise FormatError(
            f"{path}: file size {len(blob)} does not match header ({expected} expected)"
        )
    values = np.frombuffer(blob[24:], dtype="<f8").reshape(s, m, n, planes)
    return CodedApertureSet(values.copy())


def save_ca_csv(directory, ca: CodedApertureSet) -> None:
    """One CSV per shot and plane, row-major, 17 significant digits."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for s in range(ca.shots):
        for ell in range(ca.planes):
            rows = [
                ",".join(format(v, ".17g") for v in row)
                for row in ca.values[s, :, :, ell]
            ]
            (directory / f"ca_s{s:03d}_l{ell:03d}.csv").write_text(
                "\n".join(rows) + "\n"
            )


def load_ca_csv(directory) -> CodedApertureSet:
    directory = Path(directory)
    files = sorted(directory.glob("ca_s*_l*.csv"))
    if not files:
        raise FormatError(f"{directory}: no mask CSV files found")
    shots = 1 + max(int(f.stem.split("_")[1][1:]) for f in files)
    planes = 1 + max(int(f.stem.split("_")[2][1:]) for f in files)
    slabs = {}
    for f in files:
        s = int(f.stem.split("_")[1][1:])
        ell = int(f.stem.split("_")[2][1:])
        slabs[(s, ell)] = np.array(
            [[float(v) for v in line.split(",")] for line in f.read_text().split()]
        )
    if len(slabs) != shots * planes:
        raise FormatError(f"{directory}: missing shot/plane files")
    m, n = next(iter(slabs.values())).shape
    values = np.empty((shots, m, n, planes))
    for (s, ell), slab in slabs.items():
        if slab.shape != (m, n):
            raise FormatError(f"{directory}: inconsistent slab shapes")
        values[s, :, :, ell] = slab
    return CodedApertureSet(values)


def save_ca_pgm(directory, ca: CodedApertureSet) -> None:
    """Binary PGM (P5, maxval 255) per shot and plane; visualization only."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for s in range(ca.shots):
        for ell in range(ca.planes):
            slab = np.clip(ca.values[s, :, :, ell], 0.0, 1.0)
            pixels = np.round(255.0 * slab).astype(np.uint8)
            m, n = pixels.shape
            header = f"P5\n{n} {m}\n255\n".encode("ascii")
            (directory / f"ca_s{s:03d}_l{ell:03d}.pgm").write_bytes(
                header + pixels.tobytes()
            )


def save_ca(path, ca: CodedApertureSet, fmt: str) -> None:
    if fmt == "raw":
        save_ca_raw(path, ca)
    elif fmt == "csv":
        save_ca_csv(path, ca)
    elif fmt == "pgm":
        save_ca_pgm(path, ca)
    else:
        raise FormatError(f"unknown mask format {fmt!r}")


def load_ca(path, fmt: str) -> CodedApertureSet:
    if fmt == "raw":
        return load_ca_raw(path)
    if fmt == "csv":
        return load_ca_csv(path)
    raise FormatError(f"cannot load mask format {fmt!r} (PGM is write-only)")


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_PARAM_CODES = {"dense": 0, "kronecker": 1, "colored": 2}
_SENSING_CODES = {"spc": 0, "cassi": 1}
_TASK_CODES = {"classification": 0, "reconstruction": 1}


def _pack_array(a: np.ndarray) -> bytes:
    return struct.pack("<I", a.ndim) + struct.pack(
        f"<{a.ndim}I", *a.shape
    ) + a.astype("<f8").tobytes()


class _Reader:
    def __init__(self, blob: bytes, offset: int = 0):
        self.blob = blob
        self.offset = offset

    def u32(self, count: int = 1):
        vals = struct.unpack_from(f"<{count}I", self.blob, self.offset)
        self.offset += 4 * count
        return vals[0] if count == 1 else vals

    def array(self) -> np.ndarray:
        ndim = self.u32()
        shape = self.u32(ndim)
        shape = (shape,) if ndim == 1 else shape
        size = int(np.prod(shape))
        a = np.frombuffer(self.blob, dtype="<f8", count=size, offset=self.offset)
        self.offset += 8 * size
        return a.reshape(shape).copy()


def save_checkpoint(path, param, net: DecoderNetwork, sensing_kind: str, task: str,
                    sensing_dims) -> None:
    """Bundle the mask parameterization, decoder, and model metadata."""
    parts = [CKPT_MAGIC, struct.pack("<I", FORMAT_VERSION)]
    parts.append(struct.pack("<2I", _SENSING_CODES[sensing_kind], _TASK_CODES[task]))
    parts.append(struct.pack("<4I", *sensing_dims))  # shots, rows, cols, planes
    if isinstance(param, DenseParam):
        parts.append(struct.pack("<I", _PARAM_CODES["dense"]))
        parts.append(_pack_array(param.values))
    elif isinstance(param, KroneckerParam):
        parts.append(struct.pack("<I", _PARAM_CODES["kronecker"]))
        parts.append(struct.pack("<2I", param.rows, param.cols))
        parts.append(_pack_array(param.kernel))
    elif isinstance(param, ColoredParam):
        parts.append(struct.pack("<I", _PARAM_CODES["colored"]))
        parts.append(struct.pack("<2I", param.rows, param.cols))
        parts.append(_pack_array(param.weights))
        parts.append(_pack_array(param.filter_bank))
    else:
        raise FormatError(f"cannot checkpoint parameterization {type(param).__name__}")
    parts.append(struct.pack("<d", net.input_scale))
    parts.append(struct.pack("<I", 1 if net.center_input else 0))
    parts.append(struct.pack("<I", len(net.layers)))
    for layer in net.layers:
        parts.append(struct.pack("<I", ACTIVATIONS.index(layer.activation)))
        parts.append(_pack_array(layer.weights))
        parts.append(_pack_array(layer.bias))
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path):
    """Returns (param, net, sensing_kind, task, sensing_dims)."""
    blob = Path(path).read_bytes()
    if len(blob) < 8 or blob[:4] != CKPT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint file (bad magic)")
    r = _Reader(blob, 4)
    version = r.u32()
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    sensing_code, task_code = r.u32(2)
    sensing_kind = {v: k for k, v in _SENSING_CODES.items()}[sensing_code]
    task = {v: k for k, v in _TASK_CODES.items()}[task_code]
    sensing_dims = r.u32(4)
    param_code = r.u32()
    if param_code == _PARAM_CODES["dense"]:
        param = DenseParam(r.array())
    elif param_code == _PARAM_CODES["kronecker"]:
        rows, cols = r.u32(2)
        param = KroneckerParam(r.array(), rows, cols)
    elif param_code == _PARAM_CODES["colored"]:
        rows, cols = r.u32(2)
        weights = r.array()
        bank = r.array()
        param = ColoredParam(weights, bank, rows, cols)
    else:
        raise FormatError(f"{path}: unknown parameterization code {param_code}")
    (input_scale,) = struct.unpack_from("<d", blob, r.offset)
    r.offset += 8
    center_input = bool(r.u32())
    n_layers = r.u32()
    layers = []
    for _ in range(n_layers):
        act = ACTIVATIONS[r.u32()]
        weights = r.array()
        bias = r.array()
        layers.append(DenseLayer(weights, bias, act))
    if r.offset != len(blob):
        raise FormatError(f"{path}: trailing bytes after checkpoint payload")
    net = DecoderNetwork(layers, input_scale, center_input)
    return param, net, sensing_kind, task, sensing_dims


# ---------------------------------------------------------------------------
# JSON run configuration
# ---------------------------------------------------------------------------

_TOP_KEYS = {
    "task", "sensing", "ca", "regularizers", "optimizer", "schedule",
    "noise", "seed", "dataset",
}
_SENSING_KEYS = {"kind", "shots", "rows", "cols", "planes"}
_CA_KEYS = {
    "parameterization", "kernel_rows", "kernel_cols", "filters", "init",
    "gate_threshold", "gate_literal",
}
_REG_KEYS = {
    "kind", "rho0", "rhoT", "mode", "update_period", "p1", "p2",
    "levels", "exponents", "target",
}
_OPT_KEYS = {
    "kind", "lr", "beta1", "beta2", "eps", "momentum", "ca_lr_mult", "batch_size",
}
_SCHEDULE_KEYS = {"epochs", "update_period"}
_NOISE_KEYS = {"ca", "measurement_snr_db"}
_NOISE_CA_KEYS = {"distribution", "lo", "hi", "mean", "sigma"}
_TASK_KEYS = {"kind", "hidden"}
_DATASET_KEYS = {
    "kind", "images", "labels", "test_images", "test_labels",
    "train_size", "test_size", "count", "rows", "cols", "planes", "blobs",
}


def _check_keys(obj: dict, allowed: set, path: str) -> None:
    for key in obj:
        if key not in allowed:
            raise FormatError(f"unknown config key {path}{key!r}")


CONFIG_DEFAULTS = {
    "task": {"kind": "classification", "hidden": [128]},
    "sensing": {"rows": 28, "cols": 28, "planes": 1},
    "ca": {
        "parameterization": "dense",
        "init": "uniform01",
        "gate_threshold": None,
        "gate_literal": False,
    },
    "optimizer": {
        "kind": "adam", "lr": 1e-3, "beta1": 0.9, "beta2": 0.999,
        "eps": 1e-8, "momentum": 0.0, "ca_lr_mult": 1.0, "batch_size": 32,
    },
    "schedule": {"epochs": 50, "update_period": 5},
    "noise": {"ca": None, "measurement_snr_db": None},
}


def load_config(path) -> dict:
    """Parse and validate a run config; unknown keys are rejected by key path.

    Returns the normalized config dict with all defaults filled in.
    """
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    return normalize_config(raw)


def normalize_config(raw: dict) -> dict:
    if not isinstance(raw, dict):
        raise FormatError("config root must be an object")
    _check_keys(raw, _TOP_KEYS, "")
    for required in ("task", "sensing", "dataset", "seed"):
        if required not in raw:
            raise FormatError(f"missing required config key {required!r}")

    cfg = {}

    task = raw["task"]
    if isinstance(task, str):
        task = {"kind": task}
    _check_keys(task, _TASK_KEYS, "task.")
    cfg["task"] = {**CONFIG_DEFAULTS["task"], **task}
    if cfg["task"]["kind"] not in ("classification", "reconstruction"):
        raise FormatError(f"unknown task kind {cfg['task']['kind']!r}")

    sensing = raw["sensing"]
    _check_keys(sensing, _SENSING_KEYS, "sensing.")
    if "kind" not in sensing or "shots" not in sensing:
        raise FormatError("sensing.kind and sensing.shots are required")
    cfg["sensing"] = {**CONFIG_DEFAULTS["sensing"], **sensing}
    if cfg["sensing"]["kind"] not in ("spc", "cassi"):
        raise FormatError(f"unknown sensing kind {cfg['sensing']['kind']!r}")

    ca = raw.get("ca", {})
    _check_keys(ca, _CA_KEYS, "ca.")
    cfg["ca"] = {**CONFIG_DEFAULTS["ca"], **ca}

    schedule = raw.get("schedule", {})
    _check_keys(schedule, _SCHEDULE_KEYS, "schedule.")
    cfg["schedule"] = {**CONFIG_DEFAULTS["schedule"], **schedule}

    regs = raw.get("regularizers", [])
    cfg["regularizers"] = []
    for i, reg in enumerate(regs):
        _check_keys(reg, _REG_KEYS, f"regularizers[{i}].")
        if "kind" not in reg or "rho0" not in reg:
            raise FormatError(f"regularizers[{i}]: kind and rho0 are required")
        cfg["regularizers"].append(dict(reg))

    opt = raw.get("optimizer", {})
    _check_keys(opt, _OPT_KEYS, "optimizer.")
    cfg["optimizer"] = {**CONFIG_DEFAULTS["optimizer"], **opt}

    noise = raw.get("noise", {})
    _check_keys(noise, _NOISE_KEYS, "noise.")
    cfg["noise"] = {**CONFIG_DEFAULTS["noise"], **noise}
    if cfg["noise"]["ca"] is not None:
        _check_keys(cfg["noise"]["ca"], _NOISE_CA_KEYS, "noise.ca.")

    dataset = raw["dataset"]
    if isinstance(dataset, str):
        dataset = {"kind": dataset}
    _check_keys(dataset, _DATASET_KEYS, "dataset.")
    cfg["dataset"] = dataset

    cfg["seed"] = int(raw["seed"])
    return cfg


def build_noise_spec(cfg: dict) -> NoiseSpec | None:
    noise = cfg["noise"]
    if noise["ca"] is None and noise["measurement_snr_db"] is None:
        return None
    ca_noise = noise["ca"] or {}
    return NoiseSpec(
        distribution=ca_noise.get("distribution", "uniform"),
        lo=ca_noise.get("lo", 0.0),
        hi=ca_noise.get("hi", 0.0),
        mean=ca_noise.get("mean", 0.0),
        sigma=ca_noise.get("sigma", 0.0),
        measurement_snr_db=noise["measurement_snr_db"],
    )
