"""Discover how many single-pixel shots a reconstruction task really needs.

Starts from 16 candidate shots and trains with a per-shot group-sparsity
penalty. Shots whose mask energy falls below a gate are dropped from the
measurement; the penalty steadily empties out the shots the decoder can live
without, leaving a small informative subset.

Run:  python demos/snapshot_pruning.py
"""

import numpy as np

from ca_design.aperture import DenseParam, expand
from ca_design.datasets import build_dataset
from ca_design.regularizers import RegularizerSpec, RhoSchedule
from ca_design.sensing import SPC
from ca_design.trainer import TrainConfig, snapshot_gate, train_e2e
from ca_design.decoder import init_network

SHOTS, ROWS, COLS = 16, 8, 8
EPOCHS = 150
GATE = 0.1


def main():
    rng = np.random.default_rng(1)
    train, _ = build_dataset(
        {"kind": "synthetic_cubes", "count": 128,
         "rows": ROWS, "cols": COLS, "planes": 1}, rng
    )
    flat = train.scenes.reshape(len(train), -1)
    train = type(train)(flat, flat)

    sensing = SPC(SHOTS, ROWS, COLS)
    param = DenseParam(rng.uniform(0.0, 1.0, size=(SHOTS, ROWS, COLS, 1)))
    net = init_network([SHOTS, ROWS * COLS], ["sigmoid"], rng,
                       input_scale=1.0 / (ROWS * COLS))

    config = TrainConfig(
        epochs=EPOCHS, batch_size=32, optimizer="adam", learning_rate=1e-3,
        seed=1, task="reconstruction", gate_threshold=GATE,
        regularizers=[RegularizerSpec(
            "snapshot_group", RhoSchedule(1.0, 1.0, EPOCHS, EPOCHS, "static"))],
    )
    print(f"training {SHOTS} candidate shots for {EPOCHS} epochs...")
    param, net, history = train_e2e(config, train, param, sensing, net)

    for epoch in range(0, EPOCHS, 25):
        active = history.active_shots[epoch]
        print(f"  epoch {epoch:3d}: loss {history.task_loss[epoch]:.5f}  "
              f"active shots {active}/{SHOTS}")

    _, keep = snapshot_gate(expand(param).values, GATE)
    print(f"surviving shots: {int(keep.sum())}/{SHOTS} "
          f"(indices {np.flatnonzero(keep).tolist()})")


if __name__ == "__main__":
    main()
