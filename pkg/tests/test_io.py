import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tau_ppg import io
from tau_ppg.model import TAU_LITE, WeightsMismatch, init_weights, variant
from tau_ppg.model.config import TAU_SMALL
from tau_ppg.signal import PpgSegment


@settings(max_examples=30)
@given(arrays(np.float64, st.integers(1, 50), elements=st.floats(-1e6, 1e6)),
       st.floats(1, 1000), st.booleans())
def test_segment_round_trip(tmp_path_factory, x, fs, with_truth):
    path = tmp_path_factory.mktemp("seg") / "s.csv"
    peaks = np.arange(0, x.size, 3) if with_truth else None
    seg = PpgSegment(x, fs, "subj-1", peaks, 71.25 if with_truth else None)
    io.write_segment(path, seg)
    back = io.read_segment(path)
    assert back.samples.tobytes() == seg.samples.tobytes()
    assert back.fs == fs and back.subject_id == "subj-1"
    if with_truth:
        assert back.truth_peaks.tolist() == peaks.tolist() and back.ref_hr == 71.25
    else:
        assert back.truth_peaks is None and back.ref_hr is None


@pytest.mark.parametrize("text, line", [
    ("# fs=100\n0.5\nabc\n", 3),
    ("# fs=100\n0.5\n# subject=x\n", 3),
    ("# fs=-1\n0.5\n", 1),
    ("# fs=100\n0.5\nnan\n", 3),
    ("# fs=100\n# peaks=3,x\n0.5\n", 2),
])
def test_segment_errors_name_the_line(tmp_path, text, line):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(io.DataFormatError, match=f"bad.csv:{line}:"):
        io.read_segment(path)


def test_segment_missing_fs_and_samples(tmp_path):
    (tmp_path / "a.csv").write_text("0.1\n0.2\n")
    with pytest.raises(io.DataFormatError, match="fs"):
        io.read_segment(tmp_path / "a.csv")
    (tmp_path / "b.csv").write_text("# fs=10\n")
    with pytest.raises(io.DataFormatError, match="no samples"):
        io.read_segment(tmp_path / "b.csv")


def test_read_dataset_sorted(tmp_path):
    for name in ("b", "a", "c"):
        io.write_segment(tmp_path / f"{name}.csv", PpgSegment(np.ones(4), 10.0, f"s-{name}"))
    assert [s.subject_id for s in io.read_dataset([tmp_path])] == ["s-a", "s-b", "s-c"]
    with pytest.raises(io.DataFormatError):
        io.read_dataset([tmp_path / "missing"])


@pytest.mark.parametrize("cfg", [TAU_LITE, TAU_SMALL, variant(TAU_SMALL, "tau_b")])
def test_weights_round_trip(cfg):
    w = init_weights(cfg, 3)
    blob = io.encode_weights(cfg, w)
    cfg2, w2 = io.decode_weights(blob)
    assert cfg2 == cfg
    assert sorted(w2) == sorted(w)
    for k in w:
        np.testing.assert_array_equal(w2[k].data, w[k].data.astype(np.float32))
    assert io.encode_weights(cfg2, w2) == blob


def test_weights_errors():
    blob = io.encode_weights(TAU_LITE, init_weights(TAU_LITE, 0))
    with pytest.raises(io.WeightsFormatError, match="magic"):
        io.decode_weights(b"XXXX" + blob[4:])
    with pytest.raises(io.WeightsFormatError, match="truncated"):
        io.decode_weights(blob[:-3])
    with pytest.raises(io.WeightsFormatError, match="version"):
        io.decode_weights(blob[:4] + struct.pack("<H", 9) + blob[6:])
    # header claims a different width than the stored tensors
    bad = bytearray(blob)
    struct.pack_into("<I", bad, 6 + 4 * 2, 8)
    with pytest.raises(WeightsMismatch):
        io.decode_weights(bytes(bad))


def test_manifest_and_csv(tmp_path):
    io.write_manifest(tmp_path / "m.json", "train", {"depth": 3}, seed=4)
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["seed"] == 4 and doc["command"] == "train" and "code_version" in doc
    io.write_csv(tmp_path / "t.csv", ["a", "b"], [[1, 0.1], [None, float("nan")]])
    assert (tmp_path / "t.csv").read_text() == "a,b\n1,0.1\n,\n"


def test_svgs_are_well_formed():
    import xml.etree.ElementTree as ET
    ET.fromstring(io.overlay_svg(np.sin(np.arange(100) / 5), np.arange(100.0), [10, 40], [11, 41]))
    ET.fromstring(io.bland_altman_svg([60, 70, 80], [61, 69, 82]))


def test_float32_weights_round_trip_bit_exact():
    w = init_weights(TAU_LITE, 9)
    for t in w.values():
        t.data[...] = t.data.astype(np.float32)
    _, back = io.decode_weights(io.encode_weights(TAU_LITE, w))
    assert all(back[k].data.tobytes() == w[k].data.tobytes() for k in w)
