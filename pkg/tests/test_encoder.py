"""Content encoder: patch embedding, transformer layers, shift tokens, weight files."""

import struct

import numpy as np
import pytest

from transformar.autodiff import Tensor
from transformar.encoder import (
    EncoderConfig,
    EncoderWeights,
    embed_image,
    encode,
    encoder_forward,
    load_weights,
    patchify,
    save_weights,
    shift_representation,
)
from transformar.errors import (
    ConfigError,
    MissingTensorError,
    ShapeError,
    TruncatedWeightFileError,
    UnknownDtypeError,
    WeightFormatError,
    WeightShapeError,
)
from transformar.params import make_tensors
from transformar.weights_io import decode_weights, encode_weights, read_weights, write_weights

SMALL = EncoderConfig(32, 32, 16, 8, 2, 2, 2)


def weights(cfg=SMALL, seed=0):
    return EncoderWeights.initialize(cfg, np.random.default_rng(seed))


def patch_oracle(image, p):
    """Explicit loops: scan patches left-to-right, top-to-bottom; flatten row, column, channel."""
    h, w, _ = image.shape
    rows = []
    for pr in range(h // p):
        for pc in range(w // p):
            vec = []
            for r in range(p):
                for c in range(p):
                    for ch in range(3):
                        vec.append(image[pr * p + r, pc * p + c, ch])
            rows.append(vec)
    return np.array(rows)


class TestConfig:
    def test_patch_divisibility(self):
        with pytest.raises(ConfigError):
            EncoderConfig(30, 32, 16)

    def test_head_divisibility(self):
        with pytest.raises(ConfigError):
            EncoderConfig(embed_dim=10, num_heads=4)

    def test_at_least_one_layer(self):
        with pytest.raises(ConfigError):
            EncoderConfig(num_layers=0)

    def test_desk_defaults(self):
        cfg = EncoderConfig()
        assert (cfg.image_height, cfg.patch_size, cfg.embed_dim, cfg.num_heads, cfg.num_layers) == (96, 16, 64, 4, 2)
        assert cfg.num_patches == 36


class TestEmbedding:
    def test_token_count(self):
        seq = embed_image(np.zeros((32, 32, 3)), weights())
        assert seq.shape == (5, 8)

    def test_zero_image_gives_position_embeddings(self):
        w = weights()
        seq = embed_image(np.zeros((32, 32, 3)), w)
        np.testing.assert_array_equal(seq.data[1:], w["pos_embed"].data[1:])
        # class token starts at zero, so row 0 is its position embedding too
        np.testing.assert_array_equal(seq.data[0], w["pos_embed"].data[0])

    def test_patchify_matches_loop_oracle(self):
        img = np.random.default_rng(1).uniform(size=(32, 48, 3))
        np.testing.assert_array_equal(patchify(img, 16), patch_oracle(img, 16))

    def test_swapping_patches_swaps_rows(self):
        w = weights()
        w["pos_embed"].data[:] = 0.0
        img = np.random.default_rng(2).uniform(size=(32, 32, 3))
        swapped = img.copy()
        swapped[:16, :16], swapped[16:, 16:] = img[16:, 16:], img[:16, :16]
        a, b = embed_image(img, w).data, embed_image(swapped, w).data
        np.testing.assert_array_equal(a[[0, 4, 2, 3, 1]], b)

    def test_batch_matches_single(self):
        w = weights()
        imgs = np.random.default_rng(3).uniform(size=(3, 32, 32, 3))
        batch = embed_image(imgs, w).data
        for i in range(3):
            np.testing.assert_allclose(batch[i], embed_image(imgs[i], w).data, atol=1e-14)

    def test_wrong_size_rejected(self):
        with pytest.raises(ShapeError):
            embed_image(np.zeros((16, 32, 3)), weights())


class TestEncoderForward:
    def test_residual_identity(self):
        w = weights()
        for name, t in w.items():
            if ".attn." in name or ".mlp." in name:
                t.data[:] = 0.0
        seq = Tensor(np.random.default_rng(4).normal(size=(5, 8)))
        np.testing.assert_array_equal(encoder_forward(seq, w).data, seq.data)

    def test_attention_rows_sum_to_one(self):
        w = weights()
        for t in w.parameters():
            t.data = np.random.default_rng(5).normal(size=t.shape)
        _, attn = encode(np.random.default_rng(6).uniform(size=(2, 32, 32, 3)), w, return_attention=True)
        assert len(attn) == SMALL.num_layers
        for probs in attn:
            assert probs.shape == (2, SMALL.num_heads, 5, 5)
            np.testing.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-9)

    def test_hand_computed_single_layer(self):
        """Two tokens, C=2, one head, identity projections, unit-ratio FFNN.

        Both tokens normalise to [1, -1]/sqrt(1 + eps), the attention output
        is that vector whatever the weights, and each FFNN input normalises
        to the same vector again.
        """
        cfg = EncoderConfig(4, 4, 4, 2, 1, 1, 1, ln_eps=1e-12)
        w = weights(cfg)
        eye, zero = np.eye(2), np.zeros(2)
        for part in ("q", "k", "v", "proj"):
            w[f"blocks.0.attn.{part}.weight"].data = eye.copy()
            w[f"blocks.0.attn.{part}.bias"].data = zero.copy()
        for fc in ("fc1", "fc2"):
            w[f"blocks.0.mlp.{fc}.weight"].data = eye.copy()
            w[f"blocks.0.mlp.{fc}.bias"].data = zero.copy()
        seq = Tensor(np.array([[1.0, -1.0], [3.0, 1.0]]))
        g1, g_1 = 0.8411919906082768, -0.15880800939172324  # tanh-GELU at +1 and -1
        expected = np.array([[2 + g1, -2 + g_1], [4 + g1, 0 + g_1]])
        np.testing.assert_allclose(encoder_forward(seq, w).data, expected, atol=1e-9)

    def test_permutation_equivariance_without_positions(self):
        w = weights()
        for t in w.parameters():
            t.data = np.random.default_rng(7).normal(size=t.shape) * 0.5
        rng = np.random.default_rng(8)
        seq = rng.normal(size=(5, 8))
        for _ in range(5):
            perm = np.concatenate([[0], 1 + rng.permutation(4)])
            out = encoder_forward(Tensor(seq), w).data
            out_perm = encoder_forward(Tensor(seq[perm]), w).data
            np.testing.assert_allclose(out_perm, out[perm], atol=1e-12)

    def test_deterministic(self):
        w = weights()
        img = np.random.default_rng(9).uniform(size=(32, 32, 3))
        np.testing.assert_array_equal(encode(img, w).data, encode(img, w).data)

    def test_sequence_shape_checked(self):
        with pytest.raises(ShapeError):
            encoder_forward(Tensor(np.zeros((4, 8))), weights())


class TestShift:
    def test_identical_is_zero(self):
        x = Tensor(np.random.default_rng(0).normal(size=(5, 8)))
        assert not np.any(shift_representation(x, x).data)

    def test_example_row(self):
        out = shift_representation(Tensor([[1.0, -1.0]]), Tensor([[0.0, 1.0]]))
        np.testing.assert_array_equal(out.data, [[1.0, 2.0]])

    def test_symmetric(self):
        rng = np.random.default_rng(1)
        a, b = Tensor(rng.normal(size=(2, 5, 8))), Tensor(rng.normal(size=(2, 5, 8)))
        np.testing.assert_array_equal(shift_representation(a, b).data, shift_representation(b, a).data)

    def test_includes_class_token(self):
        a, b = np.zeros((5, 8)), np.zeros((5, 8))
        b[0] = 3.0
        assert shift_representation(Tensor(a), Tensor(b)).data[0].sum() == 24.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            shift_representation(Tensor(np.zeros((5, 8))), Tensor(np.zeros((4, 8))))


class TestWeightFiles:
    def test_roundtrip_bit_identical(self, tmp_path):
        w = weights(seed=3)
        save_weights(tmp_path / "enc.arwt", w)
        loaded = load_weights(tmp_path / "enc.arwt", SMALL)
        for name, t in w.items():
            np.testing.assert_array_equal(loaded[name].data, t.data)
            assert loaded[name].data.tobytes() == t.data.tobytes()

    def test_header_layout(self):
        blob = encode_weights({"x": np.arange(3.0)})
        assert blob[:4] == b"ARWT"
        assert struct.unpack("<II", blob[4:12]) == (1, 1)
        assert struct.unpack("<H", blob[12:14]) == (1,)
        assert blob[14:15] == b"x"
        assert blob[15:17] == bytes([0, 1])
        assert struct.unpack("<I", blob[17:21]) == (3,)
        assert np.frombuffer(blob[21:], "<f8").tolist() == [0.0, 1.0, 2.0]

    def test_wrong_magic(self):
        blob = encode_weights({"x": np.zeros(2)})
        with pytest.raises(WeightFormatError):
            decode_weights(b"XXXX" + blob[4:])

    def test_wrong_version(self):
        blob = bytearray(encode_weights({"x": np.zeros(2)}))
        blob[4:8] = struct.pack("<I", 2)
        with pytest.raises(WeightFormatError):
            decode_weights(bytes(blob))

    def test_truncated(self):
        blob = encode_weights({"x": np.zeros(4)})
        with pytest.raises(TruncatedWeightFileError):
            decode_weights(blob[:-3])

    def test_unknown_dtype(self):
        blob = bytearray(encode_weights({"x": np.zeros(2)}))
        blob[15] = 7
        with pytest.raises(UnknownDtypeError):
            decode_weights(bytes(blob))

    def test_missing_tensor_named(self, tmp_path):
        arrays = weights().arrays()
        del arrays["blocks.1.norm2.weight"]
        write_weights(tmp_path / "w.arwt", arrays)
        with pytest.raises(MissingTensorError, match="blocks.1.norm2.weight"):
            load_weights(tmp_path / "w.arwt", SMALL)

    def test_shape_mismatch(self, tmp_path):
        arrays = weights().arrays()
        arrays["cls_token"] = np.zeros(9)
        write_weights(tmp_path / "w.arwt", arrays)
        with pytest.raises(WeightShapeError, match="cls_token"):
            load_weights(tmp_path / "w.arwt", SMALL)

    def test_scalar_and_empty_roundtrip(self, tmp_path):
        arrays = {"s": np.array(2.5), "e": np.zeros((0, 3))}
        write_weights(tmp_path / "w.arwt", arrays)
        back = read_weights(tmp_path / "w.arwt")
        assert back["s"].shape == () and back["s"] == 2.5
        assert back["e"].shape == (0, 3)

    def test_copies_are_independent(self):
        w = weights()
        c = w.copy()
        c["cls_token"].data[:] = 1.0
        assert not np.any(w["cls_token"].data)
        assert isinstance(make_tensors({"a": np.zeros(1)})["a"], Tensor)
