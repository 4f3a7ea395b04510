"""Mask regularizers with exact values and analytic (sub)gradients.

Seven families: binarization to {0,1} or {-1,1}, multi-level quantization,
transmittance targeting, snapshot-count shrinkage (group l2,1), inter-shot
correlation, and data-driven conditionality of the sensing operator. Each
evaluation returns ``(value, grad)`` with the gradient shaped like the mask.

A geometric weight schedule grows each term's weight from ``rho0`` to
``rhoT`` by a factor ``alpha`` every ``update_period`` epochs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .aperture import CodedApertureSet


class RegularizerError(ValueError):
    """Raised for invalid regularizer hyper-parameters."""


# ---------------------------------------------------------------------------
# Weight schedule
# ---------------------------------------------------------------------------


@dataclass
class RhoSchedule:
    """Per-term regularization weight, static or geometrically increasing.

    In dynamic mode the weight is multiplied by ``alpha`` every
    ``update_period`` epochs, for a total of floor(total_epochs /
    update_period) updates, so the final update lands on ``rhoT``.
    """

    rho0: float
    rhoT: float | None = None
    total_epochs: int = 1
    update_period: int = 1
    mode: str = "static"
    alpha: float = field(init=False, default=1.0)

    def __post_init__(self):
        if self.rho0 <= 0:
            raise RegularizerError("rho0 must be positive")
        if self.mode not in ("static", "dynamic"):
            raise RegularizerError(f"unknown schedule mode {self.mode!r}")
        if self.mode == "dynamic":
            if not 1 <= self.update_period <= self.total_epochs:
                raise RegularizerError(
                    "update_period must lie in [1, total_epochs] for dynamic mode"
                )
            self.alpha = alpha_from_endpoints(self)

    @property
    def n_updates(self) -> int:
        return self.total_epochs // self.update_period

    def rho_at(self, epoch: int) -> float:
        """Weight in force during the given zero-based epoch.

        The k-th update takes effect once k*update_period epochs have
        completed, so the last training epoch runs at rhoT when the period
        divides the epoch count.
        """
        if self.mode == "static":
            return self.rho0
        k = min((epoch + 1) // self.update_period, self.n_updates)
        return self.rho0 * self.alpha**k


def alpha_from_endpoints(sched: RhoSchedule) -> float:
    """Growth factor giving rhoT after floor(T / period) updates from rho0."""
    if sched.rhoT is None or sched.rhoT <= sched.rho0:
        raise RegularizerError("dynamic schedule requires rho0 < rhoT")
    n = sched.total_epochs // sched.update_period
    if n < 1:
        raise RegularizerError("dynamic schedule requires at least one update")
    # solve in log10 space so decade endpoints yield an exact growth factor
    return float(10.0 ** ((np.log10(sched.rhoT) - np.log10(sched.rho0)) / n))


# ---------------------------------------------------------------------------
# Regularizer families
# ---------------------------------------------------------------------------


def r_multilevel(ca: CodedApertureSet, levels, exponents):
    """Polynomial penalty vanishing exactly on the target quantization levels.

    value = (1/S) * sum over entries of prod_d ((phi - kappa_d)^2)^(p_d).
    """
    levels = np.asarray(levels, dtype=np.float64)
    exponents = np.asarray(exponents, dtype=np.float64)
    if levels.size < 2:
        raise RegularizerError("need at least two quantization levels")
    if levels.size != np.unique(levels).size:
        raise RegularizerError("quantization levels must be distinct")
    if exponents.shape != levels.shape:
        raise RegularizerError("one exponent per level is required")
    if np.any(exponents <= 0):
        raise RegularizerError("exponents must be positive")

    phi = ca.values
    s = ca.shots
    # factors[d] = ((phi - kappa_d)^2)^(p_d), per entry
    diffs = phi[..., np.newaxis] - levels
    factors = (diffs**2) ** exponents
    prod = factors.prod(axis=-1)
    value = float(prod.sum() / s)

    # product rule with leave-one-out products (avoids dividing by zero factors)
    n_levels = levels.size
    grad = np.zeros_like(phi)
    for d in range(n_levels):
        others = np.ones_like(phi)
        for e in range(n_levels):
            if e != d:
                others *= factors[..., e]
        # d/dphi ((phi-k)^2)^p = 2 p (phi-k) ((phi-k)^2)^(p-1)
        grad += 2.0 * exponents[d] * diffs[..., d] * (diffs[..., d] ** 2) ** (
            exponents[d] - 1.0
        ) * others
    grad /= s
    return value, grad


def r_binary01(ca: CodedApertureSet, p1: float, p2: float):
    """Binarization penalty with minima exactly at entries 0 and 1."""
    return r_multilevel(ca, [0.0, 1.0], [p1, p2])


def r_binary_pm1(ca: CodedApertureSet, p1: float, p2: float):
    """Binarization penalty with minima exactly at entries -1 and +1."""
    return r_multilevel(ca, [-1.0, 1.0], [p1, p2])


def r_transmittance(ca: CodedApertureSet, target: float):
    """Squared deviation of each shot's mean transmittance from a target."""
    if not 0.0 <= target <= 1.0:
        raise RegularizerError(f"target transmittance {target} outside [0, 1]")
    s = ca.shots
    cell_count = ca.rows * ca.cols * ca.planes
    means = ca.values.mean(axis=(1, 2, 3))
    value = float(((means - target) ** 2).sum() / s)
    grad = np.broadcast_to(
        (2.0 / s) * (means - target)[:, None, None, None] / cell_count,
        ca.values.shape,
    ).copy()
    return value, grad


def r_snapshot_group(ca: CodedApertureSet):
    """Group l2,1 penalty over shots; drives whole shots to zero.

    The subgradient is phi / ||shot|| on shots with nonzero norm and 0 on
    all-zero shots.
    """
    norms = np.sqrt((ca.values**2).sum(axis=(1, 2, 3)))
    value = float(norms.sum())
    grad = np.zeros_like(ca.values)
    nonzero = norms > 0.0
    grad[nonzero] = ca.values[nonzero] / norms[nonzero, None, None, None]
    return value, grad


def r_correlation(ca: CodedApertureSet):
    """Entrywise product across shots, summed and normalized by mask size.

    The numerator of the Pearson correlation between shots; small values mean
    the shots observe complementary parts of the scene.
    """
    if ca.shots < 2:
        raise RegularizerError("correlation needs at least two shots")
    cell_count = ca.rows * ca.cols * ca.planes
    prod = ca.values.prod(axis=0)
    value = float(prod.sum() / cell_count)
    # leave-one-out products per shot
    grad = np.empty_like(ca.values)
    for s in range(ca.shots):
        others = np.ones_like(prod)
        for t in range(ca.shots):
            if t != s:
                others *= ca.values[t]
        grad[s] = others / cell_count
    return value, grad


def r_conditionality(ca: CodedApertureSet, sensing, scenes):
    """Mean squared deviation of H^T H from the identity on a scene batch.

    Evaluated by apply-then-adjoint so the operator is never materialized.
    The mask gradient combines the forward-operator gradients of both factors
    of the bilinear form.
    """
    if len(scenes) == 0:
        raise RegularizerError("conditionality needs a non-empty scene batch")
    value = 0.0
    grad = np.zeros_like(ca.values)
    for f in scenes:
        f = np.asarray(f, dtype=np.float64)
        u = sensing.forward(ca, f).stacked
        w = sensing.adjoint(ca, u).reshape(f.shape)
        r = w - f
        value += float((r**2).sum())
        hr = sensing.forward(ca, r).stacked
        # d/dPhi [ u^T H r + (H r)^T H f ] with residual held fixed
        grad += sensing.forward_grad_wrt_ca(f=r, upstream=2.0 * u)
        grad += sensing.forward_grad_wrt_ca(f=f, upstream=2.0 * hr)
    b = len(scenes)
    return value / b, grad / b


# ---------------------------------------------------------------------------
# Term specifications and aggregation
# ---------------------------------------------------------------------------


@dataclass
class RegularizerSpec:
    """One active penalty term: a family, its hyper-parameters, and a schedule.

    ``kind`` is one of binary01, binary_pm1, multilevel, transmittance,
    snapshot_group, correlation, conditionality.
    """

    kind: str
    schedule: RhoSchedule
    p1: float = 1.0
    p2: float = 1.0
    levels: tuple = ()
    exponents: tuple = ()
    target: float = 0.5

    KINDS = (
        "binary01",
        "binary_pm1",
        "multilevel",
        "transmittance",
        "snapshot_group",
        "correlation",
        "conditionality",
    )

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise RegularizerError(f"unknown regularizer kind {self.kind!r}")

    @property
    def needs_sensing(self) -> bool:
        return self.kind == "conditionality"

    def evaluate(self, ca: CodedApertureSet, sensing=None, scenes=None):
        if self.kind == "binary01":
            return r_binary01(ca, self.p1, self.p2)
        if self.kind == "binary_pm1":
            return r_binary_pm1(ca, self.p1, self.p2)
        if self.kind == "multilevel":
            return r_multilevel(ca, self.levels, self.exponents)
        if self.kind == "transmittance":
            return r_transmittance(ca, self.target)
        if self.kind == "snapshot_group":
            return r_snapshot_group(ca)
        if self.kind == "correlation":
            return r_correlation(ca)
        if self.kind == "conditionality":
            if sensing is None or scenes is None:
                raise RegularizerError(
                    "conditionality requires a sensing model and a scene batch"
                )
            return r_conditionality(ca, sensing, scenes)
        raise RegularizerError(f"unknown regularizer kind {self.kind!r}")

    def target_levels(self):
        """Quantization levels this term drives the mask toward, if any."""
        if self.kind == "binary01":
            return (0.0, 1.0)
        if self.kind == "binary_pm1":
            return (-1.0, 1.0)
        if self.kind == "multilevel":
            return tuple(self.levels)
        return None


def aggregate(specs, ca: CodedApertureSet, sensing=None, scenes=None, epoch: int = 0):
    """Weighted sum of all active terms and its gradient at the given epoch."""
    total = 0.0
    grad = np.zeros_like(ca.values)
    for spec in specs:
        rho = spec.schedule.rho_at(epoch)
        value, g = spec.evaluate(ca, sensing=sensing, scenes=scenes)
        total += rho * value
        grad += rho * g
    return total, grad
