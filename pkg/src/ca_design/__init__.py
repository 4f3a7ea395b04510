"""End-to-end co-design of coded-aperture patterns and a small decoder network.

Subpackages cover the mask model and its reduced parameterizations, the
regularizer family with analytic gradients, the SPC and CASSI sensing
operators, a self-contained dense decoder, the coupled trainer with a dynamic
regularization-weight schedule, quality metrics, and on-disk formats.
"""

from .aperture import (
    ApertureError,
    CodedApertureSet,
    ColoredParam,
    DenseParam,
    KroneckerParam,
    NoiseSpec,
    expand,
    expand_backward,
    inject_ca_noise,
    quantize_for_export,
    trainable_parameter_count,
    transmittance_of,
    transmittances,
)
from .regularizers import RegularizerSpec, RhoSchedule, aggregate
from .sensing import CASSI, SPC, Measurement, add_measurement_noise, compression_ratio
from .trainer import TrainConfig, TrainHistory, gradient_check, snapshot_gate, train_e2e

__version__ = "0.1.0"
