import shutil
import subprocess

import numpy as np
import pytest

from featquant.core import ThresholdSet, encode
from featquant.deploy import (
    EncoderTable,
    PackedFrame,
    emit_encoder_source,
    export_table,
    footprint,
    pack,
    unpack,
)
from featquant.deploy.codegen import c_float
from featquant.deploy.loopback import compression_factor, direct_predict, loopback_infer
from featquant.deploy.table import TableMismatchError, raw_threshold
from featquant.deploy.wire import (
    HEADER_SIZE,
    BadMagicError,
    CodeRangeError,
    FrameLengthError,
    TrailingBitsError,
    UnsupportedVersionError,
)
from featquant.estimators import QuantizedMLPRegressor
from featquant.harness.data import generate_fried
from featquant.nn import DenseNet, QuantLayer, load_checkpoint, save_checkpoint
from featquant.preprocessing import Standardizer

CC = shutil.which("cc") or shutil.which("gcc") or shutil.which("clang")


def manual_checkpoint(A, mean, std, decoder="bitwise"):
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    K = A.shape[0]
    net = DenseNet(K, [4], quant=QuantLayer(A, decoder), seed=0)
    s = Standardizer(np.asarray(mean, float), np.asarray(std, float), 0.0, 1.0)
    doc = save_checkpoint(None, net, standardizer=s, meta={"method": "Bw-QQ"})
    return load_checkpoint(doc)


@pytest.fixture(scope="module")
def fried():
    return generate_fried(600, seed=3)


@pytest.fixture(scope="module")
def trained(fried, tmp_path_factory):
    out = {}
    d = tmp_path_factory.mktemp("ckpt")
    for method in ("Bw-SQ", "SQ", "Pr-QQ", "Bw-MQ"):
        model = QuantizedMLPRegressor(method=method, bit_width=3, hidden_layers=1, hidden_neurons=16,
                                      epochs=4, learning_rate=0.01, random_state=1)
        model.fit(fried.X[:500], fried.y[:500])
        path = d / f"{method}.json"
        model.save_checkpoint(path, feature_names=fried.feature_names)
        out[method] = path
    return out


class TestPack:
    def test_layout_example(self):
        frame = pack([2, 1, 3], 2)
        assert frame.payload == bytes([0x36])
        assert frame.to_bytes() == b"BWSQ" + bytes([1, 3, 0, 2, 0x36])

    def test_zeros(self):
        assert pack([0] * 11, 3).payload == bytes(5)

    def test_unpack_example(self):
        assert unpack(b"BWSQ\x01\x03\x00\x02\x36") == [2, 1, 3]

    def test_code_too_large_names_index(self):
        with pytest.raises(CodeRangeError) as info:
            pack([1, 2, 4], 2)
        assert info.value.index == 2

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        for K in range(1, 129):
            for n in range(2, 9):
                codes = rng.integers(0, 2 ** n, size=K).tolist()
                data = pack(codes, n).to_bytes()
                assert len(data) == HEADER_SIZE + -(-K * n // 8)
                assert unpack(data) == codes

    def test_truncated(self):
        data = pack([1, 2, 3, 0, 1], 3).to_bytes()
        with pytest.raises(FrameLengthError):
            unpack(data[:-1])
        with pytest.raises(FrameLengthError):
            unpack(data + b"\x00")
        with pytest.raises(FrameLengthError):
            unpack(data[:6])

    def test_bad_magic(self):
        data = bytearray(pack([1, 2], 2).to_bytes())
        data[0] = ord("X")
        with pytest.raises(BadMagicError):
            unpack(bytes(data))

    def test_version(self):
        data = bytearray(pack([1, 2], 2).to_bytes())
        data[4] = 2
        with pytest.raises(UnsupportedVersionError):
            unpack(bytes(data))

    def test_trailing_bits(self):
        with pytest.raises(TrailingBitsError):
            unpack(b"BWSQ\x01\x03\x00\x02\xf6")

    def test_errors_are_distinct(self):
        kinds = {BadMagicError, FrameLengthError, TrailingBitsError, UnsupportedVersionError}
        assert len(kinds) == 4

    def test_frame_from_bytes(self):
        f = PackedFrame.from_bytes(pack([3, 3, 3], 2).to_bytes())
        assert (f.k, f.bits, len(f)) == (3, 2, HEADER_SIZE + 1)


class TestExportTable:
    def test_identity_standardization(self):
        a = [-1.25, 0.0, 0.75]
        table = export_table(manual_checkpoint([a], [0.0], [1.0]))
        assert table.thresholds_raw[0].tolist() == a

    def test_affine(self):
        table = export_table(manual_checkpoint([[0.5, 1.0, 2.0]], [10.0], [2.0]))
        assert table.thresholds_raw[0, 0] == 11.0
        assert table.thresholds_raw[0].tolist() == [11.0, 12.0, 14.0]

    def test_raw_equivalence(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            mean, std = rng.normal(scale=50, size=3), rng.uniform(0.01, 30, size=3)
            A = np.sort(rng.normal(size=(3, 15)), axis=1)
            table = export_table(manual_checkpoint(A, mean, std))
            x = (mean + std * rng.normal(scale=1.5, size=(10_000, 3))).astype(np.float32)
            z = (x.astype(np.float64) - mean) / std
            want = np.column_stack([encode(z[:, k], ThresholdSet(tuple(A[k]), 4)) for k in range(3)])
            assert np.array_equal(table.encode(x), want)
            # boundary inputs: the raw thresholds themselves and their float32 neighbours
            edges = table.thresholds_raw.T
            for probe in (edges, np.nextafter(edges, np.float32(-np.inf)), np.nextafter(edges, np.float32(np.inf))):
                zp = (probe.astype(np.float64) - mean) / std
                want = np.column_stack([encode(zp[:, k], ThresholdSet(tuple(A[k]), 4)) for k in range(3)])
                assert np.array_equal(table.encode(probe), want)

    def test_raw_threshold_is_minimal(self):
        rng = np.random.default_rng(2)
        for _ in range(500):
            a, mu, sd = rng.normal(), rng.normal(scale=100), rng.uniform(1e-3, 10)
            r = raw_threshold(a, mu, sd)
            assert (float(r) - mu) / sd >= a
            below = np.nextafter(r, np.float32(-np.inf))
            assert (float(below) - mu) / sd < a

    def test_needs_standardizer(self):
        doc = manual_checkpoint([[0.0, 1.0, 2.0]], [0.0], [1.0])
        doc["standardizer"] = None
        with pytest.raises(ValueError, match="standardizer"):
            export_table(doc)

    def test_fp_has_no_table(self):
        doc = load_checkpoint(save_checkpoint(None, DenseNet(2, [3]), standardizer=None))
        with pytest.raises(ValueError, match="full-precision"):
            export_table(doc)

    def test_file_round_trip(self, tmp_path, trained):
        table = export_table(trained["Bw-SQ"])
        assert table.order == [f"x{k}" for k in range(1, 11)]
        table.save(tmp_path / "t.json")
        back = EncoderTable.load(tmp_path / "t.json")
        assert np.array_equal(back.thresholds_raw, table.thresholds_raw)
        assert back.source_hash == table.source_hash


class TestCodegen:
    def test_three_comparison_sites(self):
        table = EncoderTable(1, 2, np.array([[0.0, 1.0, 2.0]]))
        src = emit_encoder_source(table, "if_chain")
        assert src.count(">=") == 3
        assert footprint(table, "if_chain")["comparison_sites"] == 3
        assert "void encode_features(const float* in, unsigned char* out)" in src
        assert "#include" not in src

    def test_threshold_bytes(self):
        table = EncoderTable(81, 4, np.tile(np.arange(15.0), (81, 1)))
        fp = footprint(table, "binary_search")
        assert fp["threshold_bytes"] == 4860
        assert "threshold bytes:      4860" in emit_encoder_source(table, "binary_search")

    def test_rejects_bit_width(self):
        table = EncoderTable(1, 2, np.array([[0.0, 1.0, 2.0]]))
        object.__setattr__(table, "bits", 9)
        with pytest.raises(ValueError):
            emit_encoder_source(table)
        with pytest.raises(ValueError):
            EncoderTable(1, 1, np.array([[0.0]]))

    def test_unknown_style(self):
        with pytest.raises(ValueError, match="style"):
            emit_encoder_source(EncoderTable(1, 2, np.array([[0.0, 1.0, 2.0]])), "switch")

    def test_hex_literals_are_exact(self):
        for v in (0.1, -3.75, 1e-30, 123456.789):
            lit = c_float(v)
            assert float.fromhex(lit[:-1]) == float(np.float32(v))

    def test_comment_cannot_break_out(self):
        table = EncoderTable(1, 2, np.array([[0.0, 1.0, 2.0]]), order=["evil */ int x;"])
        assert "*/ int" not in emit_encoder_source(table, "binary_search")


DRIVER = r"""
#include <stdio.h>
#include <stdlib.h>
void encode_features(const float* in, unsigned char* out);
int main(int argc, char** argv) {
    int k = atoi(argv[1]);
    float* row = malloc(sizeof(float) * k);
    unsigned char* out = malloc(k);
    while (fread(row, sizeof(float), k, stdin) == (size_t)k) {
        encode_features(row, out);
        fwrite(out, 1, k, stdout);
    }
    return 0;
}
"""


def compile_and_run(tmp_path, table, style, rows):
    src = tmp_path / f"{style}_encoder.c"
    src.write_text(emit_encoder_source(table, style, "golden"))
    drv = tmp_path / "driver.c"
    drv.write_text(DRIVER)
    exe = tmp_path / f"enc_{style}"
    subprocess.run([CC, "-std=c99", "-O2", "-Wall", "-Werror", "-o", str(exe), str(src), str(drv)], check=True)
    res = subprocess.run([str(exe), str(table.k)], input=rows.astype("<f4").tobytes(),
                         capture_output=True, check=True)
    return np.frombuffer(res.stdout, dtype=np.uint8).reshape(-1, table.k).astype(np.int64)


def golden_rows(table, rng, n=10_000):
    lo, hi = table.thresholds_raw.min(axis=1), table.thresholds_raw.max(axis=1)
    span = hi - lo
    rand = (lo - 0.2 * span + rng.uniform(size=(n, table.k)) * 1.4 * span).astype(np.float32)
    edges = table.thresholds_raw.T
    down = np.nextafter(edges, np.float32(-np.inf))
    up = np.nextafter(edges, np.float32(np.inf))
    return np.vstack([rand, edges, down, up]).astype(np.float32)


@pytest.mark.skipif(CC is None, reason="no C compiler on PATH")
@pytest.mark.parametrize("style", ["if_chain", "binary_search"])
def test_compiled_encoder_matches_library(tmp_path, trained, style):
    rng = np.random.default_rng(4)
    for table in (export_table(trained["Bw-SQ"]), export_table(trained["Pr-QQ"]),
                  EncoderTable(3, 8, np.sort(rng.normal(size=(3, 255)), axis=1).astype(np.float32))):
        rows = golden_rows(table, rng)
        got = compile_and_run(tmp_path, table, style, rows)
        assert np.array_equal(got, table.encode(rows))


class TestLoopback:
    @pytest.mark.parametrize("method", ["Bw-SQ", "SQ", "Pr-QQ", "Bw-MQ"])
    def test_matches_direct_evaluation(self, fried, trained, method):
        table = export_table(trained[method])
        rows = fried.X[500:]
        res = loopback_infer(rows, table, trained[method])
        assert np.array_equal(res.predictions, direct_predict(rows, trained[method]))
        assert len(res.frames) == len(rows)

    def test_byte_count(self, fried, trained):
        table = export_table(trained["Bw-SQ"])
        res = loopback_infer(fried.X[:7], table, trained["Bw-SQ"])
        per_frame = HEADER_SIZE + -(-10 * 3 // 8)
        assert res.bytes_sent == 7 * per_frame
        assert per_frame - HEADER_SIZE < 4 * 10

    def test_payload_always_below_raw(self):
        for K in range(1, 200):
            for n in range(2, 9):
                assert len(pack([0] * K, n).payload) < 4 * K

    def test_fp_rejected(self, fried, tmp_path):
        model = QuantizedMLPRegressor(method="FP", hidden_layers=1, hidden_neurons=4, epochs=1)
        model.fit(fried.X[:100], fried.y[:100])
        model.save_checkpoint(tmp_path / "fp.json")
        table = EncoderTable(10, 2, np.tile([0.0, 1.0, 2.0], (10, 1)))
        with pytest.raises(TableMismatchError):
            loopback_infer(fried.X[:2], table, tmp_path / "fp.json")

    def test_mismatched_pair(self, fried, trained):
        other = export_table(trained["Bw-MQ"])
        with pytest.raises(TableMismatchError, match="different checkpoint"):
            loopback_infer(fried.X[:2], other, trained["Bw-SQ"])
        wrong_bits = EncoderTable(10, 2, np.tile([0.0, 1.0, 2.0], (10, 1)))
        with pytest.raises(TableMismatchError, match="bits"):
            loopback_infer(fried.X[:2], wrong_bits, trained["Bw-SQ"])

    def test_compression(self):
        assert compression_factor(8, 2) == 16.0
        assert compression_factor(10, 2) == 40 / 3
        assert compression_factor(10, 2) > 13
