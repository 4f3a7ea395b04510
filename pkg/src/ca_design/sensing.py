"""Coded sensing operators: single-pixel camera and single-disperser CASSI.

Both models are linear in the scene and bilinear in (mask, scene). The
multishot measurement stacks per-shot outputs shot-major. The CASSI operator
is applied by shift-and-sum and is never materialized as a matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .aperture import CodedApertureSet


class SensingError(ValueError):
    """Raised for scene/detector shape mismatches."""


@dataclass
class Measurement:
    """Stacked multishot measurement with shot-major layout."""

    stacked: np.ndarray
    shots: int
    per_shot_length: int

    def per_shot(self, s: int) -> np.ndarray:
        m = self.per_shot_length
        return self.stacked[s * m : (s + 1) * m]


class SPC:
    """Single-pixel camera: each shot yields one inner product with the scene.

    Scenes are flat vectors of length rows*cols; masks are planar (L=1).
    """

    def __init__(self, shots: int, rows: int, cols: int):
        self.shots = shots
        self.rows = rows
        self.cols = cols

    @property
    def scene_size(self) -> int:
        return self.rows * self.cols

    @property
    def per_shot_length(self) -> int:
        return 1

    def _mask_matrix(self, ca: CodedApertureSet) -> np.ndarray:
        if ca.planes != 1:
            raise SensingError("SPC masks must be planar (L=1)")
        if (ca.shots, ca.rows, ca.cols) != (self.shots, self.rows, self.cols):
            raise SensingError(
                f"mask shape {ca.values.shape} does not match SPC "
                f"({self.shots}, {self.rows}, {self.cols}, 1)"
            )
        return ca.values.reshape(self.shots, -1)

    def forward(self, ca: CodedApertureSet, f: np.ndarray) -> Measurement:
        f = np.asarray(f, dtype=np.float64).ravel()
        if f.size != self.scene_size:
            raise SensingError(
                f"scene length {f.size} does not match {self.scene_size}"
            )
        g = self._mask_matrix(ca) @ f
        return Measurement(g, self.shots, 1)

    def forward_batch(self, values: np.ndarray, scenes: np.ndarray) -> np.ndarray:
        """Measurements for a batch of flat scenes, shape (B, S)."""
        return scenes @ values.reshape(self.shots, -1).T

    def adjoint(self, ca: CodedApertureSet, g) -> np.ndarray:
        g = g.stacked if isinstance(g, Measurement) else np.asarray(g, dtype=np.float64)
        if g.size != self.shots:
            raise SensingError(f"measurement length {g.size} does not match {self.shots}")
        return self._mask_matrix(ca).T @ g

    def forward_grad_wrt_ca(self, f: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        """Gradient of upstream . (H f) with respect to the mask entries."""
        f = np.asarray(f, dtype=np.float64).ravel()
        upstream = np.asarray(upstream, dtype=np.float64).ravel()
        if f.size != self.scene_size or upstream.size != self.shots:
            raise SensingError("gradient shapes do not match the SPC model")
        grad = np.outer(upstream, f)
        return grad.reshape(self.shots, self.rows, self.cols, 1)

    def forward_grad_wrt_ca_batch(
        self, scenes: np.ndarray, upstream: np.ndarray
    ) -> np.ndarray:
        """Summed mask gradient over a batch: upstream (B, S), scenes (B, n)."""
        grad = upstream.T @ scenes
        return grad.reshape(self.shots, self.rows, self.cols, 1)

    def grad_wrt_scene_batch(self, values: np.ndarray, upstream: np.ndarray):
        """Gradient of measurements w.r.t. the scenes: the adjoint, batched."""
        return upstream @ values.reshape(self.shots, -1)

    def compression_ratio(self) -> float:
        return self.shots * self.per_shot_length / self.scene_size

    def materialize(self, ca: CodedApertureSet) -> np.ndarray:
        """Dense (S, n) sensing matrix; for oracle tests at desk scale only."""
        return self._mask_matrix(ca).copy()


class CASSI:
    """Single-disperser CASSI: planar mask, then one-column-per-band shift.

    Scenes are cubes of shape (rows, cols, planes); each shot's detector has
    shape (rows, cols + planes - 1) with band l landing at column offset l.
    """

    def __init__(self, shots: int, rows: int, cols: int, planes: int):
        self.shots = shots
        self.rows = rows
        self.cols = cols
        self.planes = planes

    @property
    def scene_size(self) -> int:
        return self.rows * self.cols * self.planes

    @property
    def detector_cols(self) -> int:
        return self.cols + self.planes - 1

    @property
    def per_shot_length(self) -> int:
        return self.rows * self.detector_cols

    def _mask(self, ca: CodedApertureSet) -> np.ndarray:
        if ca.planes != 1:
            raise SensingError("CASSI masks are planar (L=1), applied to every band")
        if (ca.shots, ca.rows, ca.cols) != (self.shots, self.rows, self.cols):
            raise SensingError(
                f"mask shape {ca.values.shape} does not match CASSI "
                f"({self.shots}, {self.rows}, {self.cols}, 1)"
            )
        return ca.values[..., 0]

    def _check_cube(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=np.float64)
        if f.shape != (self.rows, self.cols, self.planes):
            raise SensingError(
                f"scene shape {f.shape} does not match "
                f"({self.rows}, {self.cols}, {self.planes})"
            )
        return f

    def forward(self, ca: CodedApertureSet, f: np.ndarray) -> Measurement:
        f = self._check_cube(f)
        mask = self._mask(ca)
        y = np.zeros((self.shots, self.rows, self.detector_cols))
        for ell in range(self.planes):
            y[:, :, ell : ell + self.cols] += mask * f[:, :, ell]
        return Measurement(y.reshape(-1), self.shots, self.per_shot_length)

    def forward_batch(self, values: np.ndarray, scenes: np.ndarray) -> np.ndarray:
        """Measurements for scenes of shape (B, rows, cols, planes) -> (B, S*m)."""
        mask = values[..., 0]
        b = scenes.shape[0]
        y = np.zeros((b, self.shots, self.rows, self.detector_cols))
        for ell in range(self.planes):
            y[:, :, :, ell : ell + self.cols] += (
                mask[np.newaxis] * scenes[:, np.newaxis, :, :, ell]
            )
        return y.reshape(b, -1)

    def adjoint(self, ca: CodedApertureSet, y) -> np.ndarray:
        y = y.stacked if isinstance(y, Measurement) else np.asarray(y, dtype=np.float64)
        if y.size != self.shots * self.per_shot_length:
            raise SensingError(
                f"measurement length {y.size} does not match "
                f"{self.shots * self.per_shot_length}"
            )
        y = y.reshape(self.shots, self.rows, self.detector_cols)
        mask = self._mask(ca)
        f = np.zeros((self.rows, self.cols, self.planes))
        for ell in range(self.planes):
            f[:, :, ell] = (mask * y[:, :, ell : ell + self.cols]).sum(axis=0)
        return f

    def forward_grad_wrt_ca(self, f: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        """Gradient of upstream . (H f) with respect to the mask entries."""
        f = self._check_cube(f)
        upstream = np.asarray(upstream, dtype=np.float64).reshape(
            self.shots, self.rows, self.detector_cols
        )
        grad = np.zeros((self.shots, self.rows, self.cols))
        for ell in range(self.planes):
            grad += upstream[:, :, ell : ell + self.cols] * f[:, :, ell]
        return grad[..., np.newaxis]

    def forward_grad_wrt_ca_batch(self, scenes, upstream) -> np.ndarray:
        upstream = upstream.reshape(-1, self.shots, self.rows, self.detector_cols)
        grad = np.zeros((self.shots, self.rows, self.cols))
        for ell in range(self.planes):
            grad += (
                upstream[:, :, :, ell : ell + self.cols]
                * scenes[:, np.newaxis, :, :, ell]
            ).sum(axis=0)
        return grad[..., np.newaxis]

    def grad_wrt_scene_batch(self, values: np.ndarray, upstream: np.ndarray):
        mask = values[..., 0]
        b = upstream.shape[0]
        up = upstream.reshape(b, self.shots, self.rows, self.detector_cols)
        grad = np.zeros((b, self.rows, self.cols, self.planes))
        for ell in range(self.planes):
            grad[:, :, :, ell] = (mask[np.newaxis] * up[:, :, :, ell : ell + self.cols]).sum(
                axis=1
            )
        return grad

    def compression_ratio(self) -> float:
        return self.shots * self.per_shot_length / self.scene_size


def add_measurement_noise(
    g: np.ndarray, snr_db: float | None, rng: np.random.Generator
) -> np.ndarray:
    """Additive white Gaussian noise at the requested SNR; None is a no-op."""
    g = np.asarray(g, dtype=np.float64)
    if snr_db is None:
        return g.copy()
    signal_power = float((g**2).mean())
    noise_power = signal_power / 10.0 ** (snr_db / 10.0)
    return g + rng.normal(0.0, np.sqrt(noise_power), size=g.shape)


def compression_ratio(model) -> float:
    """Measurement count over scene size, S*m/n."""
    return model.compression_ratio()
