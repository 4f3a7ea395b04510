import struct

import numpy as np
import pytest

from ca_design.aperture import (
    CodedApertureSet,
    ColoredParam,
    DenseParam,
    KroneckerParam,
    gaussian_filter_bank,
)
from ca_design.data_io import (
    FormatError,
    build_noise_spec,
    load_ca,
    load_ca_csv,
    load_ca_raw,
    load_checkpoint,
    load_config,
    normalize_config,
    save_ca_csv,
    save_ca_pgm,
    save_ca_raw,
    save_checkpoint,
)
from ca_design.datasets import DatasetError, load_mnist_idx
from ca_design.decoder import init_network


def random_ca(rng, shots=3, rows=4, cols=5, planes=2):
    return CodedApertureSet(rng.uniform(-0.2, 1.2, size=(shots, rows, cols, planes)))


class TestRaw:
    def test_round_trip_bit_exact(self, rng, tmp_path):
        ca = random_ca(rng)
        path = tmp_path / "mask.raw"
        save_ca_raw(path, ca)
        loaded = load_ca_raw(path)
        np.testing.assert_array_equal(loaded.values, ca.values)
        assert loaded.values.dtype == np.float64

    def test_header_layout(self, rng, tmp_path):
        ca = random_ca(rng, shots=2, rows=3, cols=4, planes=5)
        path = tmp_path / "mask.raw"
        save_ca_raw(path, ca)
        blob = path.read_bytes()
        assert blob[:4] == b"APTR"
        assert struct.unpack("<5I", blob[4:24]) == (1, 2, 3, 4, 5)
        assert len(blob) == 24 + 8 * 2 * 3 * 4 * 5

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bogus.raw"
        path.write_bytes(b"NOPE" + bytes(40))
        with pytest.raises(FormatError, match="magic"):
            load_ca_raw(path)

    def test_size_mismatch_rejected(self, rng, tmp_path):
        ca = random_ca(rng)
        path = tmp_path / "mask.raw"
        save_ca_raw(path, ca)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(FormatError, match="size"):
            load_ca_raw(path)


class TestCsv:
    def test_round_trip_bit_exact(self, rng, tmp_path):
        ca = random_ca(rng)
        save_ca_csv(tmp_path / "csv", ca)
        loaded = load_ca_csv(tmp_path / "csv")
        np.testing.assert_array_equal(loaded.values, ca.values)

    def test_one_file_per_shot_and_plane(self, rng, tmp_path):
        ca = random_ca(rng, shots=2, planes=3)
        save_ca_csv(tmp_path / "csv", ca)
        names = sorted(p.name for p in (tmp_path / "csv").glob("*.csv"))
        assert names == [
            f"ca_s{s:03d}_l{ell:03d}.csv" for s in range(2) for ell in range(3)
        ]

    def test_missing_file_rejected(self, rng, tmp_path):
        ca = random_ca(rng, shots=2, planes=2)
        save_ca_csv(tmp_path / "csv", ca)
        (tmp_path / "csv" / "ca_s001_l000.csv").unlink()
        with pytest.raises(FormatError, match="missing"):
            load_ca_csv(tmp_path / "csv")

    def test_empty_directory_rejected(self, tmp_path):
        with pytest.raises(FormatError, match="no mask"):
            load_ca_csv(tmp_path)


class TestPgm:
    def test_binary_mask_maps_to_0_and_255(self, tmp_path):
        values = np.array([[[0.0, 1.0], [1.0, 0.0]]])[..., None]
        save_ca_pgm(tmp_path, CodedApertureSet(values))
        blob = (tmp_path / "ca_s000_l000.pgm").read_bytes()
        assert blob.startswith(b"P5\n2 2\n255\n")
        assert list(blob[len(b"P5\n2 2\n255\n"):]) == [0, 255, 255, 0]

    def test_values_clamped_and_rounded(self, tmp_path):
        values = np.array([[[-0.5, 0.5], [1.5, 0.25]]])[..., None]
        save_ca_pgm(tmp_path, CodedApertureSet(values))
        blob = (tmp_path / "ca_s000_l000.pgm").read_bytes()
        assert list(blob[-4:]) == [0, 128, 255, 64]

    def test_pgm_is_write_only(self, tmp_path):
        with pytest.raises(FormatError, match="write-only"):
            load_ca(tmp_path, "pgm")


class TestCheckpoint:
    @pytest.mark.parametrize("kind", ["dense", "kronecker", "colored"])
    def test_round_trip(self, kind, rng, tmp_path):
        if kind == "dense":
            param = DenseParam(rng.uniform(size=(3, 4, 4, 2)))
        elif kind == "kronecker":
            param = KroneckerParam(rng.uniform(size=(3, 2, 2, 2)), 4, 4)
        else:
            bank = gaussian_filter_bank(2, 2)
            param = ColoredParam(rng.uniform(size=(3, 4, 4, 2)), bank, 4, 4)
        net = init_network([3, 8, 10], ["relu", "softmax"], rng,
                           input_scale=1.0 / 16, center_input=True)
        path = tmp_path / "ckpt.bin"
        save_checkpoint(path, param, net, "spc", "classification", (3, 4, 4, 2))
        param2, net2, sensing_kind, task, dims = load_checkpoint(path)

        assert type(param2) is type(param)
        np.testing.assert_array_equal(param2.trainables, param.trainables)
        assert sensing_kind == "spc"
        assert task == "classification"
        assert tuple(dims) == (3, 4, 4, 2)
        assert net2.input_scale == net.input_scale
        assert net2.center_input == net.center_input
        assert len(net2.layers) == len(net.layers)
        for a, b in zip(net.layers, net2.layers):
            np.testing.assert_array_equal(a.weights, b.weights)
            np.testing.assert_array_equal(a.bias, b.bias)
            assert a.activation == b.activation

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "ckpt.bin"
        path.write_bytes(b"XXXX" + bytes(64))
        with pytest.raises(FormatError, match="magic"):
            load_checkpoint(path)

    def test_trailing_bytes_rejected(self, rng, tmp_path):
        param = DenseParam(rng.uniform(size=(2, 2, 2, 1)))
        net = init_network([2, 3], ["softmax"], rng)
        path = tmp_path / "ckpt.bin"
        save_checkpoint(path, param, net, "spc", "classification", (2, 2, 2, 1))
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(FormatError, match="trailing"):
            load_checkpoint(path)


MINIMAL_CONFIG = {
    "task": "classification",
    "sensing": {"kind": "spc", "shots": 16},
    "dataset": "digits",
    "seed": 7,
}


class TestConfig:
    def test_minimal_config_fills_defaults(self):
        cfg = normalize_config(dict(MINIMAL_CONFIG))
        assert cfg["sensing"] == {
            "kind": "spc", "shots": 16, "rows": 28, "cols": 28, "planes": 1,
        }
        assert cfg["optimizer"]["kind"] == "adam"
        assert cfg["optimizer"]["lr"] == 1e-3
        assert cfg["ca"]["parameterization"] == "dense"
        assert cfg["schedule"]["epochs"] == 50
        assert cfg["seed"] == 7
        assert cfg["regularizers"] == []

    def test_unknown_top_key_named_in_error(self):
        bad = dict(MINIMAL_CONFIG, learning_rate=0.1)
        with pytest.raises(FormatError, match="'learning_rate'"):
            normalize_config(bad)

    def test_unknown_nested_key_named_with_path(self):
        bad = dict(MINIMAL_CONFIG)
        bad["sensing"] = {"kind": "spc", "shots": 4, "stride": 2}
        with pytest.raises(FormatError, match=r"sensing\.'stride'"):
            normalize_config(bad)

    def test_missing_required_key(self):
        bad = {k: v for k, v in MINIMAL_CONFIG.items() if k != "seed"}
        with pytest.raises(FormatError, match="'seed'"):
            normalize_config(bad)

    def test_regularizer_requires_kind_and_rho0(self):
        bad = dict(MINIMAL_CONFIG, regularizers=[{"kind": "binary01"}])
        with pytest.raises(FormatError, match="rho0"):
            normalize_config(bad)

    def test_unknown_task_kind(self):
        bad = dict(MINIMAL_CONFIG, task="segmentation")
        with pytest.raises(FormatError, match="segmentation"):
            normalize_config(bad)

    def test_invalid_json_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{not json")
        with pytest.raises(FormatError, match="JSON"):
            load_config(path)

    def test_load_config_from_file(self, tmp_path):
        import json

        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(MINIMAL_CONFIG))
        cfg = load_config(path)
        assert cfg["task"]["kind"] == "classification"

    def test_transmittance_pairing_low_target(self):
        # a 10% open-fraction target pairs with a stronger pull toward zero
        cfg = normalize_config(dict(
            MINIMAL_CONFIG,
            regularizers=[
                {"kind": "binary01", "rho0": 1e-9, "p1": 1.8, "p2": 1.0},
                {"kind": "transmittance", "rho0": 1e-2, "target": 0.1},
            ],
        ))
        reg = cfg["regularizers"][0]
        assert (reg["p1"], reg["p2"]) == (1.8, 1.0)

    def test_noise_spec_built_from_config(self):
        cfg = normalize_config(dict(
            MINIMAL_CONFIG,
            noise={
                "ca": {"distribution": "uniform", "lo": -0.05, "hi": 0.05},
                "measurement_snr_db": 30,
            },
        ))
        spec = build_noise_spec(cfg)
        assert spec.distribution == "uniform"
        assert spec.lo == -0.05 and spec.hi == 0.05
        assert spec.measurement_snr_db == 30

    def test_no_noise_section_gives_none(self):
        cfg = normalize_config(dict(MINIMAL_CONFIG))
        assert build_noise_spec(cfg) is None


def write_idx(tmp_path, images, labels, image_magic=0x00000803,
              label_magic=0x00000801, lie_about_count=None):
    images = np.asarray(images, dtype=np.uint8)
    count, rows, cols = images.shape
    hdr_count = count if lie_about_count is None else lie_about_count
    img_path = tmp_path / "images.idx"
    img_path.write_bytes(
        struct.pack(">4i", image_magic, hdr_count, rows, cols) + images.tobytes()
    )
    lbl_path = tmp_path / "labels.idx"
    lbl_path.write_bytes(
        struct.pack(">2i", label_magic, len(labels)) + bytes(labels)
    )
    return img_path, lbl_path


class TestIdxParsing:
    def test_round_trip_and_scaling(self, tmp_path):
        images = np.zeros((2, 3, 3), dtype=np.uint8)
        images[0, 0, 0] = 255
        images[1, 1, 1] = 51
        img, lbl = write_idx(tmp_path, images, [7, 2])
        ds = load_mnist_idx(img, lbl)
        assert ds.scenes.shape == (2, 9)
        assert ds.scenes[0, 0] == 1.0
        assert ds.scenes[1, 4] == pytest.approx(51 / 255)
        np.testing.assert_array_equal(ds.targets, [7, 2])

    def test_bad_image_magic(self, tmp_path):
        images = np.zeros((1, 2, 2), dtype=np.uint8)
        img, lbl = write_idx(tmp_path, images, [0], image_magic=0x00000802)
        with pytest.raises(DatasetError, match="0x00000802"):
            load_mnist_idx(img, lbl)

    def test_bad_label_magic(self, tmp_path):
        images = np.zeros((1, 2, 2), dtype=np.uint8)
        img, lbl = write_idx(tmp_path, images, [0], label_magic=0x00000803)
        with pytest.raises(DatasetError, match="magic"):
            load_mnist_idx(img, lbl)

    def test_size_arithmetic_mismatch(self, tmp_path):
        images = np.zeros((2, 2, 2), dtype=np.uint8)
        img, lbl = write_idx(tmp_path, images, [0, 1], lie_about_count=3)
        with pytest.raises(DatasetError, match="size"):
            load_mnist_idx(img, lbl)

    def test_image_label_count_mismatch(self, tmp_path):
        images = np.zeros((2, 2, 2), dtype=np.uint8)
        img, lbl = write_idx(tmp_path, images, [0, 1, 2])
        with pytest.raises(DatasetError, match="mismatch|count"):
            load_mnist_idx(img, lbl)

    def test_truncated_header(self, tmp_path):
        img = tmp_path / "images.idx"
        img.write_bytes(b"\x00\x00\x08")
        lbl = tmp_path / "labels.idx"
        lbl.write_bytes(struct.pack(">2i", 0x00000801, 0))
        with pytest.raises(DatasetError, match="truncated"):
            load_mnist_idx(img, lbl)
