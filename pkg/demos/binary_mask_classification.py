"""Train a binary-leaning single-pixel mask and a small classifier together.

A quick version of the binarization trade-off study: a dense mask and an MLP
are optimized end to end on a digit-classification task while a scheduled
binarization penalty ramps up. At the end the mask is snapped to {0, 1} and
both the continuous and the exported masks are scored on held-out digits.

Run:  python demos/binary_mask_classification.py
"""

import numpy as np

from ca_design.aperture import DenseParam, expand, quantize_for_export
from ca_design.datasets import build_dataset
from ca_design.decoder import forward, init_network, predict_classes
from ca_design.metrics import accuracy, binarization_residual
from ca_design.regularizers import RegularizerSpec, RhoSchedule
from ca_design.sensing import SPC
from ca_design.trainer import TrainConfig, train_e2e

SHOTS, ROWS, COLS = 49, 28, 28
EPOCHS = 30


def score(param, net, sensing, test, quantize):
    ca = expand(param)
    if quantize:
        ca = quantize_for_export(ca, [0.0, 1.0])
    out, _ = forward(net, sensing.forward_batch(ca.values, test.scenes))
    return accuracy(predict_classes(out), test.targets)


def main():
    rng = np.random.default_rng(0)
    train, test = build_dataset(
        {"kind": "digits", "train_size": 2000, "test_size": 500}, rng
    )
    sensing = SPC(SHOTS, ROWS, COLS)
    param = DenseParam(rng.uniform(0.0, 1.0, size=(SHOTS, ROWS, COLS, 1)))
    net = init_network([SHOTS, 128, 10], ["relu", "softmax"], rng,
                       input_scale=1.0 / (ROWS * COLS), center_input=True)

    schedule = RhoSchedule(1e-4, 0.1, EPOCHS, EPOCHS // 10, "dynamic")
    config = TrainConfig(
        epochs=EPOCHS, batch_size=128, optimizer="adam", learning_rate=1e-3,
        seed=0, task="classification",
        regularizers=[RegularizerSpec("binary01", schedule)],
    )
    print(f"training {SHOTS} shots on {len(train)} digits for {EPOCHS} epochs...")
    param, net, history = train_e2e(config, train, param, sensing, net)

    for epoch in (0, EPOCHS // 2, EPOCHS - 1):
        print(f"  epoch {epoch:3d}: task loss {history.task_loss[epoch]:.4f}  "
              f"binarization residual {history.binarization_residual[epoch]:.4f}")

    resid = binarization_residual(expand(param), [0.0, 1.0])
    print(f"final residual {resid:.4f}")
    print(f"test accuracy, continuous mask: {score(param, net, sensing, test, False):.3f}")
    print(f"test accuracy, exported {{0,1}} mask: {score(param, net, sensing, test, True):.3f}")


if __name__ == "__main__":
    main()
