"""Quality and mask-design metrics: PSNR, SAM, accuracy, quantization residual."""

from __future__ import annotations

import math

import numpy as np


class MetricError(ValueError):
    """Raised for invalid metric inputs."""


def psnr(reference, estimate, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE) in dB; +inf signals an exact match."""
    reference = np.asarray(reference, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if reference.shape != estimate.shape:
        raise MetricError(
            f"shape mismatch: {reference.shape} vs {estimate.shape}"
        )
    if peak <= 0:
        raise MetricError("peak must be positive")
    mse = float(((reference - estimate) ** 2).mean())
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak**2 / mse)


def sam(spectrum_a, spectrum_b) -> float:
    """Spectral angle between two vectors, radians in [0, pi]."""
    a = np.asarray(spectrum_a, dtype=np.float64).ravel()
    b = np.asarray(spectrum_b, dtype=np.float64).ravel()
    if a.size != b.size or a.size == 0:
        raise MetricError("spectra must have equal nonzero length")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise MetricError("spectral angle undefined for a zero vector")
    cosine = np.clip(a @ b / (na * nb), -1.0, 1.0)
    return float(np.arccos(cosine))


def accuracy(predictions, labels) -> float:
    """Fraction of matching entries."""
    predictions = np.asarray(predictions).ravel()
    labels = np.asarray(labels).ravel()
    if predictions.size == 0 or predictions.size != labels.size:
        raise MetricError("predictions and labels must have equal nonzero length")
    return float((predictions == labels).mean())


def binarization_residual(ca, levels) -> float:
    """Mean squared distance of mask entries to their nearest level.

    Zero exactly when every entry sits on a level, i.e. the mask is
    physically implementable at those quantization levels.
    """
    levels = np.asarray(levels, dtype=np.float64)
    if levels.size == 0:
        raise MetricError("levels must be non-empty")
    values = ca.values if hasattr(ca, "values") else np.asarray(ca, dtype=np.float64)
    flat = values.reshape(-1, 1)
    return float(((flat - levels[np.newaxis, :]) ** 2).min(axis=1).mean())


def correlation_value(ca) -> float:
    """Inter-shot correlation; shares the regularizer's implementation."""
    from .regularizers import r_correlation

    value, _ = r_correlation(ca)
    return value


METRIC_HEADER = [
    "psnr_db",
    "sam_radians",
    "accuracy",
    "binarization_residual",
    "correlation_value",
    "compression_ratio",
]


def report_csv_rows(report: dict):
    """Fixed-header CSV rows for a metric report; missing entries are blank."""
    header = METRIC_HEADER + sorted(
        k for k in report if k not in METRIC_HEADER and not k.startswith("transmittance_")
    )
    header += sorted(k for k in report if k.startswith("transmittance_"))
    row = [
        format(float(report[k]), ".17g") if k in report else "" for k in header
    ]
    return [header, row]
