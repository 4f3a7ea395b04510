"""Coded-aperture tensors, reduced parameterizations, noise, and export quantization.

A coded-aperture set holds S mask patterns of shape M x N x L (L=1 for planar
masks). Trainable parameterizations generate the full tensor from a smaller
set of variables: a dense copy, a periodically tiled kernel, or a linear
combination of fixed optical filters tiled the same way.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ApertureError(ValueError):
    """Raised for invalid coded-aperture shapes, values, or parameterizations."""


@dataclass
class CodedApertureSet:
    """Set of S coded apertures stored as a float64 array of shape (S, M, N, L)."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 4:
            raise ApertureError(
                f"coded aperture values must be 4-D (S, M, N, L), got shape {self.values.shape}"
            )
        if min(self.values.shape) < 1:
            raise ApertureError(f"all axes must be >= 1, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ApertureError("coded aperture values must be finite")

    @property
    def shots(self) -> int:
        return self.values.shape[0]

    @property
    def rows(self) -> int:
        return self.values.shape[1]

    @property
    def cols(self) -> int:
        return self.values.shape[2]

    @property
    def planes(self) -> int:
        return self.values.shape[3]

    def copy(self) -> "CodedApertureSet":
        return CodedApertureSet(self.values.copy())


@dataclass
class DenseParam:
    """Full tensor of trainables, one per aperture entry."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 4:
            raise ApertureError(
                f"dense parameter must be 4-D (S, M, N, L), got shape {self.values.shape}"
            )

    @property
    def trainables(self) -> np.ndarray:
        return self.values

    def output_shape(self):
        return self.values.shape


@dataclass
class KroneckerParam:
    """Kernel of shape (S, dn, dm, L) tiled periodically to fill an M x N mask.

    The expansion equals the Kronecker product of an all-ones (M/dn) x (N/dm)
    matrix with the kernel, applied per shot and plane.
    """

    kernel: np.ndarray
    rows: int
    cols: int

    def __post_init__(self):
        self.kernel = np.asarray(self.kernel, dtype=np.float64)
        if self.kernel.ndim != 4:
            raise ApertureError(
                f"kernel must be 4-D (S, dn, dm, L), got shape {self.kernel.shape}"
            )
        _, dn, dm, _ = self.kernel.shape
        if self.rows % dn != 0:
            raise ApertureError(
                f"kernel rows {dn} do not divide mask rows {self.rows} (axis: rows)"
            )
        if self.cols % dm != 0:
            raise ApertureError(
                f"kernel cols {dm} do not divide mask cols {self.cols} (axis: cols)"
            )

    @property
    def trainables(self) -> np.ndarray:
        return self.kernel

    def output_shape(self):
        s, _, _, planes = self.kernel.shape
        return (s, self.rows, self.cols, planes)


@dataclass
class ColoredParam:
    """Per-cell weights over a fixed filter bank, then tiled like a kernel.

    ``weights`` has shape (S, dn, dm, V) and ``filter_bank`` shape (V, L) with
    entries in [0, 1] and V < L. Each kernel cell is the weighted combination
    of the bank's spectral responses.
    """

    weights: np.ndarray
    filter_bank: np.ndarray
    rows: int
    cols: int

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.filter_bank = np.asarray(self.filter_bank, dtype=np.float64)
        if self.weights.ndim != 4:
            raise ApertureError(
                f"weights must be 4-D (S, dn, dm, V), got shape {self.weights.shape}"
            )
        if self.filter_bank.ndim != 2:
            raise ApertureError(
                f"filter bank must be 2-D (V, L), got shape {self.filter_bank.shape}"
            )
        n_filters, planes = self.filter_bank.shape
        if self.weights.shape[3] != n_filters:
            raise ApertureError(
                f"weights have {self.weights.shape[3]} filter slots, bank has {n_filters}"
            )
        if n_filters > planes:
            raise ApertureError(
                f"filter count V={n_filters} must not exceed plane count L={planes}"
            )
        if np.any(self.filter_bank < 0.0) or np.any(self.filter_bank > 1.0):
            raise ApertureError("filter bank entries must lie in [0, 1]")
        _, dn, dm, _ = self.weights.shape
        if self.rows % dn != 0:
            raise ApertureError(
                f"kernel rows {dn} do not divide mask rows {self.rows} (axis: rows)"
            )
        if self.cols % dm != 0:
            raise ApertureError(
                f"kernel cols {dm} do not divide mask cols {self.cols} (axis: cols)"
            )

    @property
    def trainables(self) -> np.ndarray:
        return self.weights

    def output_shape(self):
        s = self.weights.shape[0]
        planes = self.filter_bank.shape[1]
        return (s, self.rows, self.cols, planes)


CaParameterization = DenseParam | KroneckerParam | ColoredParam


@dataclass
class NoiseSpec:
    """Fabrication noise on the mask plus optional measurement SNR.

    ``distribution`` is "uniform" (bounds ``lo``/``hi``) or "gaussian"
    (``mean``/``sigma``). ``measurement_snr_db`` of None disables measurement
    noise.
    """

    distribution: str = "uniform"
    lo: float = 0.0
    hi: float = 0.0
    mean: float = 0.0
    sigma: float = 0.0
    measurement_snr_db: float | None = None

    def __post_init__(self):
        if self.distribution not in ("uniform", "gaussian"):
            raise ApertureError(f"unknown noise distribution {self.distribution!r}")
        if self.distribution == "uniform" and self.hi < self.lo:
            raise ApertureError("uniform noise requires lo <= hi")
        if self.distribution == "gaussian" and self.sigma < 0:
            raise ApertureError("gaussian noise requires sigma >= 0")

    @property
    def is_zero(self) -> bool:
        if self.distribution == "uniform":
            return self.lo == 0.0 and self.hi == 0.0
        return self.mean == 0.0 and self.sigma == 0.0

    def draw(self, shape, rng: np.random.Generator) -> np.ndarray:
        if self.distribution == "uniform":
            return rng.uniform(self.lo, self.hi, size=shape)
        return rng.normal(self.mean, self.sigma, size=shape)


def expand(param: CaParameterization) -> CodedApertureSet:
    """Generate the full coded-aperture set from its trainable parameterization."""
    if isinstance(param, DenseParam):
        return CodedApertureSet(param.values.copy())
    if isinstance(param, KroneckerParam):
        _, dn, dm, _ = param.kernel.shape
        tiled = np.tile(param.kernel, (1, param.rows // dn, param.cols // dm, 1))
        return CodedApertureSet(tiled)
    if isinstance(param, ColoredParam):
        kernel = np.einsum("sijv,vl->sijl", param.weights, param.filter_bank)
        _, dn, dm, _ = kernel.shape
        tiled = np.tile(kernel, (1, param.rows // dn, param.cols // dm, 1))
        return CodedApertureSet(tiled)
    raise ApertureError(f"unknown parameterization {type(param).__name__}")


def expand_backward(param: CaParameterization, upstream: np.ndarray) -> np.ndarray:
    """Chain-rule an upstream gradient on the full mask back to the trainables."""
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != param.output_shape():
        raise ApertureError(
            f"upstream gradient shape {upstream.shape} does not match "
            f"expanded shape {param.output_shape()}"
        )
    if isinstance(param, DenseParam):
        return upstream.copy()
    if isinstance(param, KroneckerParam):
        s, dn, dm, planes = param.kernel.shape
        blocks = upstream.reshape(s, param.rows // dn, dn, param.cols // dm, dm, planes)
        return blocks.sum(axis=(1, 3))
    if isinstance(param, ColoredParam):
        s, dn, dm, _ = param.weights.shape
        planes = param.filter_bank.shape[1]
        blocks = upstream.reshape(s, param.rows // dn, dn, param.cols // dm, dm, planes)
        kernel_grad = blocks.sum(axis=(1, 3))
        return np.einsum("sijl,vl->sijv", kernel_grad, param.filter_bank)
    raise ApertureError(f"unknown parameterization {type(param).__name__}")


def inject_ca_noise(
    ca: CodedApertureSet, spec: NoiseSpec, rng: np.random.Generator
) -> CodedApertureSet:
    """Return a copy of the mask perturbed by i.i.d. fabrication noise.

    The perturbation's sup-norm must stay strictly below the mask's own
    sup-norm; exceeding it means the noise spec is not "small" for this mask.
    """
    if spec.is_zero:
        return ca.copy()
    eta = spec.draw(ca.values.shape, rng)
    ca_sup = np.max(np.abs(ca.values))
    if np.max(np.abs(eta)) >= ca_sup:
        raise ApertureError(
            f"noise amplitude {np.max(np.abs(eta)):.3g} is not small relative "
            f"to the mask sup-norm {ca_sup:.3g}"
        )
    return CodedApertureSet(ca.values + eta)


def transmittance_of(ca: CodedApertureSet, shot: int) -> float:
    """Mean of one shot's entries: the fraction of light energy passed."""
    if not 0 <= shot < ca.shots:
        raise IndexError(f"shot {shot} out of range for {ca.shots} shots")
    return float(ca.values[shot].mean())


def transmittances(ca: CodedApertureSet) -> np.ndarray:
    """Per-shot transmittance vector of length S."""
    return ca.values.mean(axis=(1, 2, 3))


def quantize_for_export(ca: CodedApertureSet, levels) -> CodedApertureSet:
    """Snap every entry to the nearest quantization level, ties toward the smaller."""
    levels = np.asarray(levels, dtype=np.float64)
    if levels.size == 0:
        raise ApertureError("levels list must be non-empty")
    if levels.ndim != 1 or np.any(np.diff(levels) <= 0):
        raise ApertureError("levels must be strictly increasing")
    flat = ca.values.reshape(-1, 1)
    dist = np.abs(flat - levels[np.newaxis, :])
    # argmin takes the first minimum, i.e. the smaller level on ties
    nearest = levels[np.argmin(dist, axis=1)]
    return CodedApertureSet(nearest.reshape(ca.values.shape))


def trainable_parameter_count(param: CaParameterization) -> int:
    """Number of trainable variables in the parameterization."""
    return int(param.trainables.size)


def init_dense(
    shots: int,
    rows: int,
    cols: int,
    planes: int = 1,
    rng: np.random.Generator | None = None,
    signed: bool = False,
) -> DenseParam:
    """Dense trainables drawn i.i.d. near the midpoint of the target levels.

    Uniform(0.4, 0.6) for {0,1}-targeted masks, Uniform(-0.1, 0.1) for
    {-1,1}-targeted ones, so the binarization term, not the start, picks each
    entry's level.
    """
    rng = rng if rng is not None else np.random.default_rng()
    lo, hi = (-0.1, 0.1) if signed else (0.4, 0.6)
    return DenseParam(rng.uniform(lo, hi, size=(shots, rows, cols, planes)))


def init_kronecker(
    shots: int,
    rows: int,
    cols: int,
    kernel_rows: int,
    kernel_cols: int,
    planes: int = 1,
    rng: np.random.Generator | None = None,
    signed: bool = False,
) -> KroneckerParam:
    rng = rng if rng is not None else np.random.default_rng()
    lo, hi = (-0.1, 0.1) if signed else (0.4, 0.6)
    kernel = rng.uniform(lo, hi, size=(shots, kernel_rows, kernel_cols, planes))
    return KroneckerParam(kernel, rows, cols)


def gaussian_filter_bank(n_filters: int, planes: int) -> np.ndarray:
    """Synthetic Gaussian bandpass bank of shape (V, L), entries in [0, 1].

    Stand-in for a physical filter catalogue: V bumps with centers spread
    evenly over the spectral axis.
    """
    centers = np.linspace(0, planes - 1, n_filters)
    width = max(planes / (1.5 * n_filters), 0.8)
    grid = np.arange(planes, dtype=np.float64)
    bank = np.exp(-0.5 * ((grid[np.newaxis, :] - centers[:, np.newaxis]) / width) ** 2)
    return bank


def init_colored(
    shots: int,
    rows: int,
    cols: int,
    kernel_rows: int,
    kernel_cols: int,
    n_filters: int,
    planes: int,
    rng: np.random.Generator | None = None,
) -> ColoredParam:
    rng = rng if rng is not None else np.random.default_rng()
    weights = rng.uniform(0.4, 0.6, size=(shots, kernel_rows, kernel_cols, n_filters))
    return ColoredParam(weights, gaussian_filter_bank(n_filters, planes), rows, cols)
