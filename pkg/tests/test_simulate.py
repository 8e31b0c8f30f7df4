"""Monte Carlo click generation against the closed-form statistics."""

import math

import numpy as np
import pytest
from scipy import stats

from photonmem.model import ModelParams, g2_cross, mean_counts
from photonmem.simulate import (
    ClickDataset,
    NoiseGrowth,
    SequenceRecord,
    SimConfig,
    apply_memory_decay,
    sample_time_tags,
    simulate,
    simulate_sweep,
)

CAL = ModelParams(mu=0.02, lambda_a=1e-4, lambda_b=5e-3, eta_x=0.029, eta_y=0.06, g2_bb=1.8)


def config(**kw):
    base = dict(model=CAL, n_sequences=10_000, rng_seed=123, time_tags=False)
    base.update(kw)
    return SimConfig(**base)


# ---------------------------------------------------------------------------
# basics


def test_vacuum_gives_all_zero_records():
    cfg = config(model=ModelParams(0.0, 0.0, 0.0, 0.5, 0.5), n_sequences=2000)
    data = simulate(cfg)
    assert data.write_clicks.sum() == 0
    assert data.read_clicks.sum() == 0


def test_lossless_pairing():
    cfg = config(model=ModelParams(1.0, 0.0, 0.0, 1.0, 1.0), n_sequences=100_000)
    data = simulate(cfg)
    assert np.array_equal(data.write_clicks, data.read_clicks)


def test_deterministic_for_fixed_seed():
    a = simulate(config(time_tags=True))
    b = simulate(config(time_tags=True))
    assert np.array_equal(a.write_clicks, b.write_clicks)
    assert np.array_equal(a.read_clicks, b.read_clicks)
    assert np.array_equal(a.tag_values, b.tag_values)
    c = simulate(config(time_tags=True, rng_seed=124))
    assert not np.array_equal(a.read_clicks, c.read_clicks)


def test_parallel_equals_serial():
    cfg = config(n_sequences=600_000, time_tags=True)
    serial = simulate(cfg, n_workers=1)
    parallel = simulate(cfg, n_workers=3)
    assert np.array_equal(serial.write_clicks, parallel.write_clicks)
    assert np.array_equal(serial.read_clicks, parallel.read_clicks)
    assert np.array_equal(serial.tag_values, parallel.tag_values)
    assert np.array_equal(serial.tag_offsets, parallel.tag_offsets)


# ---------------------------------------------------------------------------
# statistics


def _check_moments(data, params, n):
    w, r = data.write_clicks, data.read_clicks
    exp_w, exp_r = mean_counts(params)
    for counts, expected in ((w, exp_w), (r, exp_r)):
        err = counts.std() / math.sqrt(n)
        assert abs(counts.mean() - expected) < 5 * err


def test_moments_converge_to_model():
    cfg = config(n_sequences=400_000)
    data = simulate(cfg)
    _check_moments(data, cfg.effective_params(), cfg.n_sequences)
    # cross-correlation within 5 sigma of the closed form
    w, r = data.write_clicks, data.read_clicks
    n = len(data)
    coinc = int((w * r).sum())
    g2_est = coinc * n / (w.sum() * r.sum())
    g2_model = g2_cross(cfg.effective_params())
    err = g2_est / math.sqrt(max(coinc, 1))
    assert abs(g2_est - g2_model) < 5 * err


def test_no_write_reads_are_pure_noise():
    cfg = config(n_sequences=300_000, write_pulse_present=False)
    data = simulate(cfg)
    n = len(data)
    r = data.read_clicks
    mean = r.mean()
    assert abs(mean - CAL.lambda_b) < 5 * r.std() / math.sqrt(n)
    fact2 = (r * (r - 1.0)).mean()
    g2 = fact2 / mean**2
    pairs = (r * (r - 1.0)).sum() / 2
    err = g2 * math.sqrt(1 / pairs + 4 / r.sum())
    assert abs(g2 - CAL.g2_bb) < 5 * err


def test_memory_decay_thins_read_signal():
    cfg = config(
        model=ModelParams(0.5, 0.0, 0.0, 1.0, 0.5),
        n_sequences=200_000,
        delay_us=300.0,
        memory_tau_us=300.0,
    )
    data = simulate(cfg)
    expected = 0.5 * 0.5 * math.exp(-1.0)
    err = data.read_clicks.std() / math.sqrt(len(data))
    assert abs(data.read_clicks.mean() - expected) < 5 * err


def test_apply_memory_decay():
    assert apply_memory_decay(1.0, 0.0, 123.0) == 1.0
    assert apply_memory_decay(1.0, 50.0, 50.0) == pytest.approx(math.exp(-1))
    assert apply_memory_decay(0.5, 100.0, 500.0) == pytest.approx(0.5 * math.exp(-0.2))
    assert apply_memory_decay(2.0, 100.0, math.inf) == 2.0
    with pytest.raises(ValueError):
        apply_memory_decay(1.0, 1.0, 0.0)


# ---------------------------------------------------------------------------
# time tags


def test_sample_time_tags_empty():
    tags = sample_time_tags(0, config(), "retrieval", np.random.default_rng(0))
    assert len(tags) == 0


def test_retrieval_tags_flat_limit_is_uniform():
    cfg = config(envelope_decay_us=math.inf)
    tags = sample_time_tags(50_000, cfg, "retrieval", np.random.default_rng(7))
    assert tags.min() >= 0 and tags.max() <= cfg.read_pulse_us
    stat = stats.kstest(tags / cfg.read_pulse_us, "uniform")
    assert stat.pvalue > 0.01


def test_retrieval_tags_follow_envelope():
    cfg = config(envelope_decay_us=25.0)
    rng = np.random.default_rng(8)
    tags = sample_time_tags(200_000, cfg, "retrieval", rng)
    hist, edges = np.histogram(tags, bins=26, range=(0, cfg.read_pulse_us))
    centers = 0.5 * (edges[:-1] + edges[1:])
    slope = np.polyfit(centers, np.log(hist), 1)[0]
    assert slope == pytest.approx(-1.0 / 25.0, rel=0.05)


def test_asym_tags_rise_linearly():
    cfg = config(delay_us=0.0)
    rng = np.random.default_rng(9)
    tags = sample_time_tags(1_000_000, cfg, "asym_noise", rng)
    hist, edges = np.histogram(tags, bins=26, range=(0, cfg.read_pulse_us))
    centers = 0.5 * (edges[:-1] + edges[1:])
    coef = np.polyfit(centers, hist, 1)
    assert coef[0] > 0
    fit = np.polyval(coef, centers)
    assert np.max(np.abs(hist - fit)) / hist.max() < 0.02  # linear within tolerance
    # density ~ t at zero delay: intercept consistent with zero
    assert abs(coef[1]) < 0.02 * hist.max()


def test_unknown_tag_source():
    with pytest.raises(ValueError):
        sample_time_tags(5, config(), "bogus", np.random.default_rng(0))


def test_tags_sorted_within_sequences_and_counted():
    cfg = config(n_sequences=20_000, time_tags=True)
    data = simulate(cfg)
    counts = np.diff(data.tag_offsets)
    assert np.array_equal(counts, data.read_clicks)
    for i in range(0, len(data), 997):
        rec = data.record(i)
        assert rec.read_time_tags == tuple(sorted(rec.read_time_tags))
        assert all(0 <= t <= cfg.read_pulse_us for t in rec.read_time_tags)


def test_windowing_consistency():
    # recounting tags inside the window must reproduce the statistics of
    # the window-scaled model parameters
    cfg = config(
        n_sequences=400_000,
        time_tags=True,
        noise_growth=NoiseGrowth(symmetric_fraction=0.5, linear_rate=0.0),
    )
    data = simulate(cfg)
    window = cfg.read_window_us
    wins = data.windowed_read_counts(window)
    eff = cfg.effective_params(window)
    _, exp_r = mean_counts(eff)
    err = wins.std() / math.sqrt(len(data))
    assert abs(wins.mean() - exp_r) < 5 * err


# ---------------------------------------------------------------------------
# dataset container


def test_record_round_trip():
    records = [
        SequenceRecord(1, 2, (3.0, 5.0), 10.0, True),
        SequenceRecord(0, 0, (), 10.0, True),
        SequenceRecord(2, 1, (7.5,), 110.0, False),
    ]
    data = ClickDataset.from_records(records)
    assert [data.record(i) for i in range(3)] == records
    assert data.delays() == [10.0, 110.0]


def test_record_validation():
    with pytest.raises(ValueError):
        SequenceRecord(-1, 0, None, 10.0, True)
    with pytest.raises(ValueError):
        SequenceRecord(0, 2, (5.0, 3.0), 10.0, True)
    with pytest.raises(ValueError):
        SequenceRecord(0, 2, (1.0,), 10.0, True)


def test_select_and_take_with_tags():
    records = [
        SequenceRecord(1, 2, (1.0, 2.0), 10.0, True),
        SequenceRecord(0, 1, (4.0,), 10.0, False),
        SequenceRecord(1, 0, (), 110.0, True),
    ]
    data = ClickDataset.from_records(records)
    sub = data.select(write_pulse=True)
    assert len(sub) == 2
    assert sub.record(0).read_time_tags == (1.0, 2.0)
    assert sub.record(1).read_time_tags == ()
    sub2 = data.select(delay_us=110.0)
    assert len(sub2) == 1
    with pytest.raises(ValueError):
        data.select(delay_us=999.0)


def test_windowed_read_counts():
    records = [
        SequenceRecord(0, 3, (1.0, 5.0, 50.0), 10.0, True),
        SequenceRecord(0, 1, (45.0,), 10.0, True),
        SequenceRecord(0, 0, (), 10.0, True),
    ]
    data = ClickDataset.from_records(records)
    assert data.windowed_read_counts(40.0).tolist() == [2, 0, 0]


def test_dataset_requires_records():
    with pytest.raises(ValueError):
        ClickDataset.from_records([])


# ---------------------------------------------------------------------------
# sweeps


def test_sweep_interleaves_blocks():
    base = config(n_sequences=5000, time_tags=False)
    data = simulate_sweep(base, delays_us=[10.0, 110.0], include_no_write=True)
    assert len(data) == 4 * 5000
    assert data.delays() == [10.0, 110.0]
    groups = data.meta["groups"]
    assert len(groups) == 4
    assert {(g["delay_us"], g["write_pulse"]) for g in groups} == {
        (10.0, True),
        (10.0, False),
        (110.0, True),
        (110.0, False),
    }
    # interleaving: the first few thousand records already span all blocks
    head = data.take(np.arange(5000))
    assert set(head.delay_us.tolist()) == {10.0, 110.0}
    assert set(head.write_pulse.tolist()) == {True, False}


def test_sweep_deterministic():
    base = config(n_sequences=3000)
    a = simulate_sweep(base, [10.0, 210.0])
    b = simulate_sweep(base, [10.0, 210.0])
    assert np.array_equal(a.write_clicks, b.write_clicks)
    assert np.array_equal(a.read_clicks, b.read_clicks)


# ---------------------------------------------------------------------------
# config plumbing


def test_config_validation():
    with pytest.raises(ValueError):
        config(n_sequences=0)
    with pytest.raises(ValueError):
        config(read_window_us=200.0)  # larger than the pulse
    with pytest.raises(ValueError):
        config(memory_tau_us=-1.0)
    with pytest.raises(ValueError):
        NoiseGrowth(symmetric_fraction=1.5)


def test_effective_params_windows():
    cfg = config(
        delay_us=100.0,
        memory_tau_us=400.0,
        noise_growth=NoiseGrowth(symmetric_fraction=0.4, linear_rate=1e-5),
    )
    eff = cfg.effective_params()
    assert eff.eta_y == pytest.approx(CAL.eta_y * math.exp(-0.25))
    assert eff.lambda_b == pytest.approx(CAL.lambda_b + 1e-5 * 100.0)
    w = cfg.read_window_us
    eff_w = cfg.effective_params(w)
    f_env = cfg.envelope_fraction(w)
    f_lin = cfg.linear_fraction(w)
    assert 0 < f_lin < f_env < 1
    assert eff_w.eta_y == pytest.approx(eff.eta_y * f_env)
    assert eff_w.lambda_b == pytest.approx(eff.lambda_b * (0.4 * f_env + 0.6 * f_lin))


def test_config_dict_round_trip():
    cfg = config(memory_tau_us=math.inf, time_tags=True)
    assert SimConfig.from_dict(cfg.to_dict()) == cfg
    cfg2 = config(memory_tau_us=350.0)
    assert SimConfig.from_dict(cfg2.to_dict()) == cfg2
