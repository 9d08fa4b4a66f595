import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clens.errors import FormatError, ValidationError
from clens.problog import (
    MetricsSeries,
    ProbLog,
    read_cpl,
    read_features,
    read_labels,
    read_metrics,
    read_tags,
    write_cpl,
    write_features,
    write_labels,
    write_metrics,
    write_tags,
)


def make_log(rng, t=3, n=4, c=2, model_id="m0"):
    raw = rng.random((t, n, c)) + 1e-3
    return ProbLog.from_probs(model_id, raw / raw.sum(axis=-1, keepdims=True))


def test_round_trip_identity(tmp_path, rng):
    log = make_log(rng, t=3, n=4, c=2, model_id="resnet-oops")
    path = str(tmp_path / "log.cpl")
    write_cpl(log, path)
    back = read_cpl(path)
    assert back.model_id == log.model_id
    assert back.probs.shape == (3, 4, 2)
    assert back.probs.dtype == np.float32
    assert np.array_equal(back.probs, log.probs)


def test_file_size_arithmetic(tmp_path, rng):
    log = make_log(rng, t=3, n=4, c=2, model_id="m0")
    path = str(tmp_path / "log.cpl")
    write_cpl(log, path)
    assert os.path.getsize(path) == 22 + len("m0") + 4 * 3 * 4 * 2


def test_loading_twice_is_identical(tmp_path, rng):
    log = make_log(rng, t=2, n=5, c=4)
    path = str(tmp_path / "log.cpl")
    write_cpl(log, path)
    a = read_cpl(path)
    b = read_cpl(path)
    assert np.array_equal(a.probs, b.probs)
    # and writing what was read reproduces the file byte for byte
    path2 = str(tmp_path / "log2.cpl")
    write_cpl(a, path2)
    assert open(path, "rb").read() == open(path2, "rb").read()


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    t=st.integers(1, 4),
    n=st.integers(1, 6),
    c=st.integers(2, 10),
)
def test_round_trip_property(tmp_path_factory, seed, t, n, c):
    rng = np.random.default_rng(seed)
    log = make_log(rng, t=t, n=n, c=c, model_id=f"m{seed % 97}")
    path = str(tmp_path_factory.mktemp("cpl") / "x.cpl")
    write_cpl(log, path)
    back = read_cpl(path)
    assert back.model_id == log.model_id
    assert np.array_equal(back.probs, log.probs)
    sums = back.probs.astype(np.float64).sum(axis=-1)
    assert np.abs(sums - 1.0).max() <= 1e-6


def test_mild_row_deviation_renormalizes():
    # 0.6 + 0.399 = 0.999: inside the closed 1e-3 tolerance
    log = ProbLog.from_probs("m", np.array([[[0.6, 0.399]]]))
    assert abs(log.probs.astype(np.float64).sum() - 1.0) <= 1e-6


def test_row_sum_out_of_tolerance():
    with pytest.raises(ValidationError) as err:
        ProbLog.from_probs("m", np.array([[[0.6, 0.3]]]))
    assert err.value.code == "RowSumOutOfTolerance"


def test_boundary_is_closed():
    # deviations straddling 1e-3 on both sides
    ProbLog.from_probs("m", np.array([[[0.6, 0.39901]]]))  # dev ~9.9e-4 -> loads
    with pytest.raises(ValidationError):
        ProbLog.from_probs("m", np.array([[[0.6, 0.3988]]]))  # dev ~1.2e-3


def test_negative_probability():
    with pytest.raises(ValidationError) as err:
        ProbLog.from_probs("m", np.array([[[1.1, -0.1]]]))
    assert err.value.code == "NegativeProbability"


def test_dimension_checks():
    with pytest.raises(ValidationError) as err:
        ProbLog.from_probs("m", np.empty((0, 1, 2)))
    assert err.value.code == "DimensionZero"
    with pytest.raises(ValidationError):
        ProbLog.from_probs("m", np.ones((1, 1, 1)))


def test_bad_magic(tmp_path):
    path = tmp_path / "x.cpl"
    path.write_bytes(b"NOPE" + b"\x00" * 40)
    with pytest.raises(FormatError) as err:
        read_cpl(str(path))
    assert err.value.code == "BadMagic"


def test_truncated_file(tmp_path, rng):
    log = make_log(rng)
    path = str(tmp_path / "x.cpl")
    write_cpl(log, path)
    blob = open(path, "rb").read()
    open(path, "wb").write(blob[:-5])
    with pytest.raises(FormatError) as err:
        read_cpl(path)
    assert err.value.code == "TruncatedFile"


def test_write_into_missing_dir_fails(tmp_path, rng):
    log = make_log(rng)
    with pytest.raises(FormatError) as err:
        write_cpl(log, str(tmp_path / "no" / "such" / "dir" / "x.cpl"))
    assert err.value.code == "IoFailure"


def test_features_round_trip(tmp_path, rng):
    feats = rng.normal(size=(7, 3)).astype(np.float32)
    path = str(tmp_path / "f.cft")
    write_features("trainset", feats, path)
    name, back = read_features(path)
    assert name == "trainset"
    assert np.array_equal(back, feats)


def test_labels_round_trip_and_errors(tmp_path):
    path = str(tmp_path / "labels.csv")
    (tmp_path / "labels.csv").write_text("0\n1\n9\n3\n")
    assert read_labels(path, 4, 10).tolist() == [0, 1, 9, 3]
    with pytest.raises(ValidationError) as err:
        read_labels(path, 5, 10)
    assert err.value.code == "LengthMismatch"
    (tmp_path / "labels.csv").write_text("0\n1\n10\n3\n")
    with pytest.raises(ValidationError) as err:
        read_labels(path, 4, 10)
    assert err.value.code == "ClassOutOfRange"
    write_labels(np.array([1, 0, 2]), path)
    assert read_labels(path, 3, 3).tolist() == [1, 0, 2]


def test_tags_round_trip(tmp_path):
    path = str(tmp_path / "tags.csv")
    tags = [("clean",), ("corrupted", "ambiguous"), ()]
    write_tags(tags, path, provenance="test artifact")
    assert read_tags(path, 3) == [("clean",), ("corrupted", "ambiguous"), ()]
    with pytest.raises(ValidationError):
        read_tags(path, 2)


def test_metrics_round_trip_and_validation(tmp_path):
    rows = (
        (1, "train", 1.5, 0.4),
        (1, "id", 1.7, 0.3),
        (2, "train", 1.2, 0.6),
        (2, "id", 1.6, 0.4),
    )
    path = str(tmp_path / "metrics.csv")
    write_metrics(MetricsSeries(rows=rows), path, provenance="test artifact")
    back = read_metrics(path)
    assert back.rows == rows
    epochs, losses, accs = back.series("id")
    assert epochs.tolist() == [1, 2]
    assert losses.tolist() == [1.7, 1.6]
    assert accs.tolist() == [0.3, 0.4]

    with pytest.raises(ValidationError):
        MetricsSeries(rows=((2, "train", 1.0, 0.5), (1, "train", 1.0, 0.5))).validate()
    with pytest.raises(ValidationError):
        MetricsSeries(rows=((1, "train", -1.0, 0.5),)).validate()
    with pytest.raises(ValidationError):
        MetricsSeries(rows=((1, "train", 1.0, 1.5),)).validate()
