import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from predictron import io as pio


# sample records ---------------------------------------------------------------

def sample_set(n=3, c=2, h=4, w=5, d=6, seed=0):
    rng = np.random.default_rng(seed)
    return pio.SampleSet(pio.TASK_MAZE1, h, rng.random((n, c, h, w), dtype=np.float32),
                         rng.random((n, d), dtype=np.float32))


def test_sample_header_layout():
    buf = pio.encode_samples(sample_set())
    assert buf[:4] == b"PRSM"
    version, task, size = struct.unpack("<HBH", buf[4:9])
    assert (version, task, size) == (pio.SAMPLE_VERSION, pio.TASK_MAZE1, 4)
    assert len(buf) == 4 + struct.calcsize("<HBHIHHHI") + 3 * (2 * 4 * 5 + 6) * 4


@given(st.integers(0, 4), st.integers(1, 3), st.integers(1, 6), st.integers(1, 300), st.integers(0, 999))
def test_sample_round_trip(n, c, hw, d, seed):
    s = sample_set(n, c, hw, hw, d, seed)
    back = pio.decode_samples(pio.encode_samples(s))
    assert (back.task, back.size) == (s.task, s.size)
    assert back.planes.tobytes() == s.planes.tobytes()
    assert back.targets.tobytes() == s.targets.tobytes()


def test_sample_file_round_trip(tmp_path):
    s = sample_set()
    pio.write_samples(tmp_path / "x.bin", s)
    assert not list(tmp_path.glob("*.tmp"))
    assert pio.read_samples(tmp_path / "x.bin").planes.tobytes() == s.planes.tobytes()


def test_sample_errors():
    buf = pio.encode_samples(sample_set())
    with pytest.raises(pio.FormatError, match="truncated"):
        pio.decode_samples(buf[:-1])
    with pytest.raises(pio.FormatError, match="trailing"):
        pio.decode_samples(buf + b"\0")
    with pytest.raises(pio.FormatError, match="magic"):
        pio.decode_samples(b"XXXX" + buf[4:])
    newer = buf[:4] + struct.pack("<H", pio.SAMPLE_VERSION + 1) + buf[6:]
    with pytest.raises(pio.FormatError, match="newer"):
        pio.decode_samples(newer)
    bad = sample_set()
    bad.targets = bad.targets[:2]
    with pytest.raises(ValueError):
        pio.encode_samples(bad)


# manifests --------------------------------------------------------------------

def test_manifest_round_trip(tmp_path):
    p = tmp_path / "m.txt"
    pio.write_manifest(p, {"": {"version": "0.1"}, "run": {"seed": 3, "lr": 0.1 + 0.2, "flag": True,
                                                            "scale": np.array([1.5, 2.0])}})
    m = pio.read_manifest(p)
    assert m[""] == {"version": "0.1"}
    assert m["run"]["flag"] == "true" and m["run"]["seed"] == "3"
    assert float(m["run"]["lr"]) == 0.1 + 0.2
    assert pio.parse_floats(m["run"]["scale"]).tolist() == [1.5, 2.0]


def test_manifest_skips_comments_and_rejects_junk(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text("# note\n\n[a]\nx = 1\n")
    assert pio.read_manifest(p)["a"] == {"x": "1"}
    p.write_text("[a]\nnot a pair\n")
    with pytest.raises(pio.FormatError, match=":2:"):
        pio.read_manifest(p)


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=20))
def test_float_lists_round_trip(xs):
    assert pio.parse_floats(pio.format_value(xs)).tolist() == xs


# checkpoints ------------------------------------------------------------------

dtypes = st.sampled_from([np.float32, np.float64, np.int64])
shapes = st.lists(st.integers(0, 4), min_size=0, max_size=4).map(tuple)


@st.composite
def checkpoints(draw):
    names = draw(st.lists(st.text(min_size=1, max_size=12), max_size=5, unique=True))
    tensors = {n: draw(arrays(draw(dtypes), draw(shapes))) for n in names}
    counters = draw(st.dictionaries(st.text(min_size=1, max_size=8), st.integers(-2**63, 2**63 - 1), max_size=4))
    return pio.Checkpoint(counters, tensors)


@given(checkpoints())
def test_checkpoint_round_trip_is_byte_identical(ck):
    buf = pio.encode_checkpoint(ck)
    back = pio.decode_checkpoint(buf)
    assert back.counters == ck.counters
    assert back.tensors.keys() == ck.tensors.keys()
    for k, v in ck.tensors.items():
        assert back.tensors[k].dtype == v.dtype and back.tensors[k].shape == v.shape
        assert back.tensors[k].tobytes() == v.tobytes()
    assert pio.encode_checkpoint(back) == buf


def test_checkpoint_file_save_load_save(tmp_path):
    ck = pio.Checkpoint({"step": 7}, {"param/w": np.arange(6, dtype=np.float32).reshape(2, 3)})
    pio.save_checkpoint(tmp_path / "a.bin", ck)
    pio.save_checkpoint(tmp_path / "b.bin", pio.load_checkpoint(tmp_path / "a.bin"))
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()


def test_every_truncation_is_rejected():
    ck = pio.Checkpoint({"step": 1}, {"a": np.ones((2, 2), np.float32), "b": np.zeros(3)})
    buf = pio.encode_checkpoint(ck)
    for cut in range(len(buf)):
        with pytest.raises(pio.FormatError):
            pio.decode_checkpoint(buf[:cut])


def test_checkpoint_rejects_bad_input():
    with pytest.raises(ValueError, match="dtype"):
        pio.encode_checkpoint(pio.Checkpoint({}, {"x": np.zeros(2, np.int8)}))
    buf = pio.encode_checkpoint(pio.Checkpoint({}, {"x": np.zeros(2, np.float32)}))
    with pytest.raises(pio.FormatError, match="magic"):
        pio.decode_checkpoint(b"PRSM" + buf[4:])
    # header: magic, version, counter count, tensor count, name length, name, then the dtype code
    pos = 4 + 2 + 4 + 4 + 2 + 1
    corrupt = buf[:pos] + bytes([9]) + buf[pos + 1:]
    with pytest.raises(pio.FormatError, match="dtype code"):
        pio.decode_checkpoint(corrupt)


# metrics ----------------------------------------------------------------------

def rows(n, seed=0):
    rng = np.random.default_rng(seed)
    return [{"step": 100 * (i + 1), "labelled_samples": 3200 * (i + 1), "seed": seed,
             "rmse": float(rng.random()), "loss": float(rng.random()) / 3, "wall_ms": 0.0}
            for i in range(n)]


def test_header_present_on_empty_series(tmp_path):
    with pio.MetricsWriter(tmp_path / "m.csv"):
        pass
    assert (tmp_path / "m.csv").read_text() == ",".join(pio.METRIC_FIELDS) + "\n"
    assert pio.read_metrics(tmp_path / "m.csv") == []


def test_reparse_equals_series_and_rows_flushed(tmp_path):
    series = rows(5)
    path = tmp_path / "m.csv"
    with pio.MetricsWriter(path) as w:
        for i, r in enumerate(series):
            w.write(r)
            assert len(pio.read_metrics(path)) == i + 1  # visible before close
    back = pio.read_metrics(path)
    assert back == series
    steps = [r["step"] for r in back]
    assert steps == sorted(set(steps))


def test_append_and_truncate(tmp_path):
    path = tmp_path / "m.csv"
    series = rows(6)
    with pio.MetricsWriter(path) as w:
        for r in series[:3]:
            w.write(r)
    with pio.MetricsWriter(path, append=True) as w:
        for r in series[3:]:
            w.write(r)
    assert pio.read_metrics(path) == series
    pio.truncate_metrics(path, 300)
    assert pio.read_metrics(path) == series[:3]
