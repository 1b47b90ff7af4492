import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from c2polab.channel import SystemConfig, constellation
from c2polab.errors import ArgumentError, GenerationStalledError
from c2polab.numerics import RngStream
from c2polab.precoder import PrecoderParams
from c2polab.evaluator import (LinkStats, SweepResult, awgn, demodulate, error_floor, format_table,
                               noise_variance_for, norm_sweep, parse_table, simulate_ser,
                               wilson_interval)
from c2polab.trainer import TrainHyper

SMALL = SystemConfig(users=4, antennas=32, modulation="QPSK", t_max=2)
SMALL_P = PrecoderParams.baseline(2, 8.0)


def genie(H, s, cfg):
    """Test-only precoder: Hx = s exactly (not 1-bit, not power constrained)."""
    return np.matmul(np.linalg.pinv(H), s[..., None])[..., 0]


def binom_z(a: LinkStats, b: LinkStats):
    p = (a.symbol_errors + b.symbol_errors) / (a.symbols_sent + b.symbols_sent)
    se = math.sqrt(p * (1 - p) * (1 / a.symbols_sent + 1 / b.symbols_sent))
    return abs(a.ser - b.ser) / se


# -- demodulate -----------------------------------------------------------------

@pytest.mark.parametrize("mod", ["QPSK", "16QAM"])
def test_demodulate_exact_points(mod):
    c = constellation(mod)
    assert np.array_equal(demodulate(c, mod), np.arange(c.size))


@pytest.mark.parametrize("mod", ["QPSK", "16QAM"])
def test_demodulate_small_perturbation(mod, gen):
    c = constellation(mod)
    dmin = np.min(np.abs(c[:, None] - c[None, :])[~np.eye(c.size, dtype=bool)])
    for _ in range(20):
        pert = gen.standard_normal(c.size) + 1j * gen.standard_normal(c.size)
        pert *= 0.49 * dmin / np.abs(pert)
        assert np.array_equal(demodulate(c + pert, mod), np.arange(c.size))


def test_demodulate_tie_goes_to_lowest_index():
    c = constellation("16QAM")
    idx = demodulate(np.array([0j]), "16QAM")[0]
    inner = [k for k in range(16) if abs(abs(c[k]) - math.sqrt(0.2)) < 1e-12]
    assert idx == min(inner) == 5
    assert demodulate(np.array([0j]), "QPSK")[0] == 0


# -- awgn -----------------------------------------------------------------------

def test_awgn_zero_variance(gen):
    y = gen.standard_normal(5) + 0j
    assert np.array_equal(awgn(y, 0.0, RngStream(1)), y)


def test_awgn_variance_within_one_percent():
    y = np.zeros(1_000_000, complex)
    n = awgn(y, 0.37, RngStream(2))
    assert abs(np.var(n) / 0.37 - 1) < 0.01


def test_awgn_reproducible_and_validated():
    y = np.ones(4, complex)
    assert np.array_equal(awgn(y, 1.0, RngStream(3)), awgn(y, 1.0, RngStream(3)))
    with pytest.raises(ArgumentError):
        awgn(y, -1.0, RngStream(3))


def test_noise_variance_axis():
    assert noise_variance_for(10.0, SMALL) == pytest.approx(0.1)
    assert noise_variance_for(float("inf"), SMALL) == 0.0


# -- LinkStats / Wilson ------------------------------------------------------------

@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**7), st.integers(1, 10**7))
def test_interval_contains_ser(e, n):
    e = min(e, n)
    s = LinkStats(n, e)
    lo, hi = s.interval
    assert 0 <= lo <= s.ser <= hi <= 1


def test_wilson_known_value():
    lo, hi = wilson_interval(10, 100)
    assert lo == pytest.approx(0.05522914, abs=1e-7)
    assert hi == pytest.approx(0.17436566, abs=1e-7)


def test_interval_width_shrinks_with_doubling():
    for p in (1e-4, 1e-2, 0.3):
        n = 10**6
        w1 = np.subtract(*wilson_interval(round(p * n), n)[::-1])
        w2 = np.subtract(*wilson_interval(round(p * 2 * n), 2 * n)[::-1])
        assert abs(w2 / w1 - 1 / math.sqrt(2)) < 0.1 / math.sqrt(2)


def test_linkstats_validation_and_sum():
    with pytest.raises(ArgumentError):
        LinkStats(5, 6)
    with pytest.raises(ArgumentError):
        LinkStats(5, -1)
    assert LinkStats(10, 1, 2) + LinkStats(20, 3, 4) == LinkStats(30, 4, 6)


# -- error floor ----------------------------------------------------------------

def test_genie_floor_is_zero():
    st_ = error_floor(None, SystemConfig(), 4000, RngStream(1), precoder=genie)
    assert st_.symbol_errors == 0 and st_.symbols_sent == 4000 * 8


def test_floor_deterministic_and_worker_independent():
    a = error_floor(SMALL_P, SMALL, 20_000, RngStream(4), min_errors=None, chunk_size=3000)
    b = error_floor(SMALL_P, SMALL, 20_000, RngStream(4), min_errors=None, chunk_size=3000, workers=2)
    assert a == b and a.trials == 20_000


def test_early_stop_at_chunk_boundary():
    full = error_floor(SMALL_P, SMALL, 100_000, RngStream(5), min_errors=None, chunk_size=1000)
    part = error_floor(SMALL_P, SMALL, 100_000, RngStream(5), min_errors=10, chunk_size=1000)
    assert part.symbol_errors >= 10 and part.trials % 1000 == 0 and part.trials < full.trials
    prefix = error_floor(SMALL_P, SMALL, part.trials, RngStream(5), min_errors=None, chunk_size=1000)
    assert prefix == part
    shorter = error_floor(SMALL_P, SMALL, part.trials - 1000, RngStream(5), min_errors=None,
                          chunk_size=1000)
    assert shorter.symbol_errors < 10


@pytest.mark.slow
def test_binomial_consistency_across_seeds():
    a = error_floor(SMALL_P, SMALL, 10**6, RngStream(100), min_errors=None)
    b = error_floor(SMALL_P, SMALL, 10**6, RngStream(200), min_errors=None)
    assert a.symbol_errors > 100
    assert binom_z(a, b) < 1.96  # joint 95% test


def test_floor_input_errors():
    with pytest.raises(ArgumentError):
        error_floor(SMALL_P, SMALL, 0, RngStream(1))


# -- simulate_ser -------------------------------------------------------------------

def test_noiseless_ser_equals_floor_count_for_count():
    floor = error_floor(SMALL_P, SMALL, 30_000, RngStream(6), min_errors=None)
    sweep = simulate_ser(SMALL_P, SMALL, [float("inf")], 30_000, RngStream(6))
    assert sweep.stats[0] == floor


def test_ser_axis_sorted_and_rows():
    snr = [22, -10, 2, -6, 14, -2, 6, 18, 10]
    res = simulate_ser(SMALL_P, SMALL, snr, 500, RngStream(7))
    assert res.axis == sorted(float(v) for v in snr)
    assert len(list(res.rows())) == 9


@pytest.mark.slow
def test_ser_shape_on_full_scenario():
    cfg = SystemConfig()
    p = PrecoderParams.baseline(7)
    snr = [-10, -6, -2, 2, 6, 10, 14, 18, 22, 60]
    res = simulate_ser(p, cfg, snr, 20_000, RngStream(8))
    floor = error_floor(p, cfg, 20_000, RngStream(8), min_errors=None)
    low = res.stats[0]
    # noise-dominated: no better than half wrong, never worse than guessing
    assert low.ser > 0.5 and low.interval[0] <= 15 / 16
    # non-increasing up to sampling noise: every later point's lower bound is
    # below every earlier point's upper bound
    for i in range(len(snr)):
        for j in range(i + 1, len(snr)):
            assert res.stats[j].interval[0] <= res.stats[i].interval[1]
    # very high SNR sits on the floor
    hi = res.stats[-1]
    assert hi.interval[0] <= floor.interval[1] and floor.interval[0] <= hi.interval[1]


def test_ser_reproducible():
    a = simulate_ser(SMALL_P, SMALL, [0, 10], 4000, RngStream(9))
    b = simulate_ser(SMALL_P, SMALL, [0, 10], 4000, RngStream(9), workers=2)
    assert format_table(a) == format_table(b)


def test_ser_empty_list():
    with pytest.raises(ArgumentError):
        simulate_ser(SMALL_P, SMALL, [], 10, RngStream(1))


# -- tables -------------------------------------------------------------------------

def test_sweep_result_invariants():
    with pytest.raises(ArgumentError):
        SweepResult("snr_db", [1.0, 1.0], [LinkStats(1, 0), LinkStats(1, 0)])
    with pytest.raises(ArgumentError):
        SweepResult("snr_db", [1.0], [])


def test_table_round_trip():
    res = simulate_ser(SMALL_P, SMALL, [-2, 4.5], 2000, RngStream(10))
    text = format_table(res)
    assert text.startswith("# c2polab-table v1\n# axis: snr_db\n# meta: ")
    assert "snr_db,trials,symbols_sent,symbol_errors,ser,ci_low,ci_high" in text
    back = parse_table(text)
    assert back.axis == res.axis and back.stats == res.stats
    assert back.metadata["seed"] == 10 and back.metadata["trials_per_point"] == 2000


# -- norm sweep ---------------------------------------------------------------------

def test_norm_sweep_small():
    hyper = TrainHyper(max_epochs=40)
    res, params = norm_sweep(SMALL, [9.0, 7.0], "NT1", 32, hyper, 4000, RngStream(11),
                             init=SMALL_P, return_params=True)
    assert res.axis == [7.0, 9.0] and res.axis_name == "target_norm"
    assert [p.metadata["target_norm"] for p in params] == [7.0, 9.0]
    again = norm_sweep(SMALL, [7.0, 9.0], "NT1", 32, hyper, 4000, RngStream(11), init=SMALL_P)
    assert format_table(again) == format_table(res)


def test_norm_sweep_errors_annotated():
    with pytest.raises(GenerationStalledError) as info:
        norm_sweep(SystemConfig(users=2, antennas=4, modulation="QPSK", t_max=1), [60.0], "NT2", 2,
                   TrainHyper(max_epochs=2), 100, RngStream(1))
    assert "[N=60]" in str(info.value) and info.value.target_norm == 60.0
    with pytest.raises(ArgumentError):
        norm_sweep(SMALL, [], "NT1", 2, TrainHyper(), 10, RngStream(1))
    with pytest.raises(ArgumentError):
        norm_sweep(SMALL, [8.0], "DF", 2, TrainHyper(), 10, RngStream(1))
