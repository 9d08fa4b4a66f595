import numpy as np
import pytest

from clens.errors import ValidationError
from clens.phases import detect_phases, moving_average
from clens.problog import MetricsSeries


def make_phase_curves(t1_true=5, t2_true=10, n_epochs=20, noise=0.002, seed=0):
    """Metrics with a test-loss minimum at t1_true and accuracy saturation at t2_true."""
    rng = np.random.default_rng(seed)
    rows = []
    for t in range(1, n_epochs + 1):
        train_loss = 2.0 * 0.80**t + noise * rng.normal()
        train_acc = min(0.5 + 0.45 * t / t2_true, 0.95) + 0.0002 * max(t - t2_true, 0)
        train_acc = float(np.clip(train_acc + 0.5 * noise * rng.normal(), 0.0, 1.0))
        test_loss = 1.5 * 0.70 ** min(t, t1_true) + 0.05 * max(t - t1_true, 0)
        test_loss += noise * rng.normal()
        id_acc = min(0.4 + 0.40 * t / t2_true, 0.80) + 0.0002 * max(t - t2_true, 0)
        id_acc = float(np.clip(id_acc + 0.5 * noise * rng.normal(), 0.0, 1.0))
        rows.append((t, "train", max(train_loss, 1e-6), train_acc))
        rows.append((t, "id", max(test_loss, 1e-6), id_acc))
    return MetricsSeries(rows=tuple(rows)).validate()


def test_moving_average_window_one_is_identity():
    x = np.array([3.0, 1.0, 4.0, 1.0, 5.0])
    assert np.array_equal(moving_average(x, 1), x)


def test_moving_average_edges_truncate():
    x = np.array([0.0, 3.0, 6.0])
    got = moving_average(x, 3)
    assert got.tolist() == [1.5, 3.0, 4.5]


def test_detects_known_change_points():
    hits = 0
    for seed in range(20):
        metrics = make_phase_curves(seed=seed)
        report = detect_phases(metrics)
        assert report.t1 is not None and report.t2 is not None
        assert report.t1 < report.t2
        if abs(report.t1 - 5) <= 1 and abs(report.t2 - 10) <= 1:
            hits += 1
    assert hits == 20


def test_monotone_test_loss_leaves_t1_absent():
    rows = []
    for t in range(1, 12):
        rows.append((t, "train", 2.0 * 0.8**t, min(0.5 + 0.05 * t, 0.99)))
        rows.append((t, "id", 1.5 * 0.85**t, min(0.4 + 0.05 * t, 0.9)))
    report = detect_phases(MetricsSeries(rows=tuple(rows)))
    assert report.t1 is None


def test_constant_accuracy_gives_t2_one():
    rows = []
    for t in range(1, 8):
        rows.append((t, "train", 1.0 / t, 0.7))
        rows.append((t, "id", 0.9 / t, 0.6))
    report = detect_phases(MetricsSeries(rows=tuple(rows)))
    assert report.t2 == 1


def test_affine_loss_rescaling_is_invariant():
    metrics = make_phase_curves(seed=3)
    scaled_rows = tuple(
        (e, name, 7.5 * loss + 2.0, acc) for e, name, loss, acc in metrics.rows
    )
    base = detect_phases(metrics)
    scaled = detect_phases(MetricsSeries(rows=scaled_rows))
    assert (base.t1, base.t2) == (scaled.t1, scaled.t2)


def test_too_few_epochs():
    rows = tuple((t, name, 1.0, 0.5) for t in range(1, 4) for name in ("train", "id"))
    with pytest.raises(ValidationError) as err:
        detect_phases(MetricsSeries(rows=rows))
    assert err.value.code == "TooFewEpochs"


def test_requires_train_and_test_series():
    rows = tuple((t, "train", 1.0, 0.5) for t in range(1, 8))
    with pytest.raises(ValidationError) as err:
        detect_phases(MetricsSeries(rows=rows))
    assert err.value.code == "UnknownDataset"


def test_smoothing_one_uses_raw_series():
    metrics = make_phase_curves(noise=0.0, seed=1)
    raw = detect_phases(metrics, smoothing=1)
    # noise-free raw series: loss minimum and saturation land exactly
    assert raw.t1 == 5
    assert raw.t2 == 10
