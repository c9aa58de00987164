import numpy as np
import pytest

from driftlab import nnet, strategies as S, synth
from driftlab.detectors import DriftSignal
from driftlab.ingest import StreamDataset, partition

T = 10


@pytest.fixture(scope="module")
def small():
    """A short drifting Friedman stream with a small, fast network."""
    sch = synth.DriftSchedule((800, 1400), (1100,), 2000, 0)
    ds = synth.friedman_stream(sch)
    part = partition(ds)
    spec = nnet.NetworkSpec((10, 16, 16, 8, 1), (0.2, 0.1, 0.1), "linear")
    trainer = S.Trainer(spec, nnet.TrainConfig(epochs=15))
    model = S.initial_model(ds, part, trainer, 0)
    return ds, part, trainer, model


@pytest.fixture(scope="module")
def udd(small):
    ds, part, trainer, model = small
    return S.run_udd(model, ds, part, trainer, 0.05, T, 0)


def test_equal_distribution_times():
    assert S.equal_distribution_times(partition(10_000), 1) == [5750]
    assert S.equal_distribution_times(partition(10_000), 3) == [3625, 5750, 7875]
    assert S.equal_distribution_times(partition(10_000), 0) == []


def test_uninformed_times_are_distinct_and_in_stream():
    part = partition(10_000)
    a = S.uninformed_times(part, 5, 0)
    b = S.uninformed_times(part, 5, 1)
    assert len(set(a)) == 5 and a == sorted(a) and a != b
    assert all(t in part.stream for t in a)
    with pytest.raises(ValueError):
        S.uninformed_times(part, len(part.stream) + 1, 0)


def test_choose_alpha_rules():
    assert S.choose_alpha({0.1: 0, 0.002: 0, 1e-6: 0}) == 0.002
    assert S.choose_alpha({0.1: 3, 0.05: 1, 0.01: 1, 1e-6: 0}) == 0.05
    # nothing hits exactly one: closest count wins, ties go to the larger alpha
    assert S.choose_alpha({0.1: 4, 0.05: 2, 0.01: 2, 1e-6: 0}) == 0.05
    assert S.choose_alpha({0.1: 5, 0.05: 3}) == 0.05


def test_calibration_grid():
    g = S.CALIBRATION_GRID
    assert g[0] == 0.1 and g[-1] == 1e-90
    assert {1e-2, 2e-3, 0.05, 1e-86, 1e-6}.issubset(g)
    assert all(b < a for a, b in zip(g, g[1:]))


def test_calibration_on_a_step_finds_one_detection():
    rng = np.random.default_rng(0)
    u = np.r_[rng.normal(0.1, 0.02, 750), rng.normal(0.3, 0.02, 750)]
    counts = {a: S.count_adwin(u, a) for a in S.CALIBRATION_GRID}
    alpha = S.choose_alpha(counts)
    assert counts[alpha] == 1
    # first-detection times only move earlier as alpha grows, so the
    # counts around the chosen value never fall below one on the larger side
    larger = [counts[a] for a in S.CALIBRATION_GRID if a > alpha]
    assert all(c >= 1 for c in larger)


def test_calibration_on_drift_free_validation_falls_back(small):
    ds, part, trainer, model = small
    alpha, counts = S.calibration_sweep(model, ds, part, "udd", T, 0)
    assert alpha == 0.002 and all(c == 0 for c in counts.values())
    assert S.calibration_sweep(model, ds, part, "kswin", T, 0)[0] in S.CALIBRATION_GRID
    with pytest.raises(ValueError):
        S.calibration_sweep(model, ds, part, "ddm", T, 0)


def test_no_retrain_record(small):
    ds, part, trainer, model = small
    rec = S.run_no_retrain(model, ds, part, trainer, T, 0)
    assert rec.retrain_times == [] and rec.labels_acquired == 0
    assert len(rec.predictions) == len(part.stream)
    np.testing.assert_array_equal(rec.targets, ds.y[part.stream.start:])


def test_budget_zero_equals_no_retrain(small):
    ds, part, trainer, model = small
    nr = S.run_no_retrain(model, ds, part, trainer, T, 0)
    for rec in (S.run_equal_distribution(model, ds, part, trainer, 0, T, 0),
                S.run_uninformed(model, ds, part, trainer, 0, T, [0])[0]):
        np.testing.assert_array_equal(rec.predictions, nr.predictions)
        assert rec.retrain_times == []


def test_udd_detects_and_resets(small, udd):
    ds, part, trainer, model = small
    assert udd.n_retrains >= 1
    assert all(isinstance(d, DriftSignal) and d.source == "uncertainty_adwin" for d in udd.detections)
    assert [d.time_index for d in udd.detections] == udd.retrain_times
    assert set(udd.retrain_times) <= set(part.stream)
    assert udd.alpha == 0.05


def test_udd_adwin_width_restarts_after_retrain(small):
    ds, part, trainer, model = small
    trig = S._AdwinOnUncertainty(0.05)
    S._run("udd", model, ds, part, trainer, trig, T, 0)
    assert trig.widths_after_reset and all(w == 0 for w in trig.widths_after_reset)


def test_tiny_alpha_never_detects(small):
    ds, part, trainer, model = small
    rec = S.run_udd(model, ds, part, trainer, 1e-300, T, 0)
    assert rec.retrain_times == []


def test_constant_inputs_never_detect():
    X = np.full((1000, 3), 0.5)
    ds = StreamDataset(X, np.zeros(1000), "regression")
    part = partition(ds)
    trainer = S.Trainer(nnet.NetworkSpec((3, 8, 8, 8, 1), (0.2, 0.1, 0.1), "linear"), nnet.TrainConfig(epochs=5))
    model = S.initial_model(ds, part, trainer, 0)
    udd = S.run_udd(model, ds, part, trainer, 0.002, T, 0)
    nr = S.run_no_retrain(model, ds, part, trainer, T, 0)
    assert udd.retrain_times == []
    np.testing.assert_array_equal(udd.predictions, nr.predictions)


def test_prequential_integrity(small):
    ds, part, trainer, model = small
    seen = []

    def check(t, m, pool):
        # the predicting model was fit on indices strictly below t
        assert m.horizon < t and pool.max_index < t
        assert pool.indices().max() == m.horizon
        seen.append(t)

    rec = S.run_udd(model, ds, part, trainer, 0.05, T, 0, on_step=check)
    assert seen == list(part.stream)
    assert np.all(rec.train_horizon < rec.times)
    assert rec.n_retrains >= 1


def test_budget_matching_and_label_accounting(small, udd):
    ds, part, trainer, model = small
    b = udd.n_retrains
    runs = S.run_uninformed(model, ds, part, trainer, b, T, range(5))
    runs.append(S.run_equal_distribution(model, ds, part, trainer, b, T, 0))
    runs.append(S.run_kswin(model, ds, part, trainer, 0.05, b, T, 0))
    assert len(S.kswin_pass(ds, part.stream, 0.05)) >= b
    for rec in runs + [udd]:
        assert rec.n_retrains == b
        union = {i for r in rec.acquired for i in r}
        assert rec.labels_acquired == len(union) <= b * part.retrain_batch_size
        assert all(i in part.stream for i in union)
    assert len({tuple(r.retrain_times) for r in runs[:5]}) > 1


def test_kswin_limited_keeps_smallest_p_values():
    sigs = [DriftSignal(t, "kswin", p, 0) for t, p in
            [(100, 0.01), (200, 1e-9), (300, 0.003), (400, 1e-9), (500, 1e-4)]]
    assert S.select_by_p_value(sigs, 3) == [200, 400, 500]
    assert S.select_by_p_value(sigs, 0) == []
    assert S.select_by_p_value(sigs, 10) == [100, 200, 300, 400, 500]


def test_kswin_limited_replays_selected_times(small):
    ds, part, trainer, model = small
    signals = S.kswin_pass(ds, part.stream, 0.05)
    rec = S.run_kswin(model, ds, part, trainer, 0.05, 2, T, 0)
    assert rec.retrain_times == S.select_by_p_value(signals, 2)
    assert [d.time_index for d in rec.detections] == rec.retrain_times


def test_kswin_unlimited_retrains_on_every_detection(small):
    ds, part, trainer, model = small
    rec = S.run_kswin(model, ds, part, trainer, 0.01, None, T, 0)
    assert rec.strategy == "kswin_unlimited"
    assert [d.time_index for d in rec.detections] == rec.retrain_times
    assert all(d.p_value < 0.01 for d in rec.detections)


def test_adwin_error_counts_every_label(small):
    ds, part, trainer, model = small
    rec = S.run_adwin_error(model, ds, part, trainer, T, 0)
    assert rec.labels_acquired == len(part.stream)
    assert rec.n_retrains >= 1


def test_runs_are_deterministic(small):
    ds, part, trainer, model = small
    a = S.run_udd(model, ds, part, trainer, 0.05, T, 3)
    b = S.run_udd(model, ds, part, trainer, 0.05, T, 3)
    np.testing.assert_array_equal(a.predictions, b.predictions)
    np.testing.assert_array_equal(a.uncertainty, b.uncertainty)
    assert a.retrain_times == b.retrain_times


def test_default_architectures():
    ds, _ = synth.generate("mixed", 0)
    spec = S.default_spec(ds)
    assert spec.layer_sizes == (6, 128, 64, 32, 16, 8, 2) and spec.output_head == "softmax"
    assert S.default_T("classification") == 50 and S.default_T("regression") == 100
