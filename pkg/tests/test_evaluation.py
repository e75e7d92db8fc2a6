import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from mcpsd import evaluation as ev
from mcpsd.fastpsd import PowerSpectrum
from mcpsd.siggen import OccupancyMask


def spectrum(values, grid=None):
    values = np.asarray(values, float)
    grid = np.arange(values.size, dtype=float) if grid is None else grid
    return PowerSpectrum(grid, values, {})


def mask_of(occupied):
    occupied = np.asarray(occupied, bool)
    return OccupancyMask(np.arange(occupied.size, dtype=float), occupied)


class TestNmse:
    def test_identical_is_zero(self, rng):
        s = spectrum(rng.random(50))
        assert ev.nmse(s, s) == 0.0

    def test_zero_estimate_is_one(self, rng):
        s = spectrum(rng.random(50))
        assert ev.nmse(spectrum(np.zeros(50)), s) == pytest.approx(1.0)

    def test_uses_raw_values(self):
        ref = spectrum([1.0, 1.0])
        est = PowerSpectrum(ref.grid_hz, np.array([1.0, 0.0]), {}, np.array([1.0, -1.0]))
        assert ev.nmse(est, ref) == pytest.approx(2.0)

    def test_grid_mismatch(self):
        with pytest.raises(ValueError, match="grid"):
            ev.nmse(spectrum([1.0, 2.0]), spectrum([1.0, 2.0], np.array([0.0, 2.0])))

    def test_zero_reference(self):
        with pytest.raises(ValueError):
            ev.nmse(spectrum([1.0]), spectrum([0.0]))


class TestAlign:
    def test_nearest_bin(self):
        s = spectrum([10.0, 20.0, 30.0], np.array([0.0, 1.0, 2.0]))
        assert ev.align_to_grid(s, [0.4, 0.6, 1.9, 5.0]).tolist() == [10, 20, 30, 30]


class TestRoc:
    def test_separable_gives_one(self):
        curve = ev.roc(spectrum([5, 6, 1, 2, 0]), mask_of([1, 1, 0, 0, 0]))
        assert curve.auc == 1.0

    def test_inverted_gives_zero(self):
        assert ev.roc(spectrum([0, 1, 5, 6]), mask_of([1, 1, 0, 0])).auc == 0.0

    def test_random_is_near_half(self):
        rng = np.random.default_rng(1)
        aucs = [
            ev.roc(spectrum(rng.random(400)), mask_of(rng.random(400) < 0.3)).auc
            for _ in range(200)
        ]
        assert np.mean(aucs) == pytest.approx(0.5, abs=0.01)

    @pytest.mark.parametrize("occ", [[1, 1, 1], [0, 0, 0]])
    def test_degenerate_mask(self, occ):
        with pytest.raises(ValueError):
            ev.roc(spectrum([1, 2, 3]), mask_of(occ))

    @given(st.integers(4, 200), st.integers(0, 2**32 - 1), st.integers(2, 64))
    def test_curve_invariants(self, n, seed, n_thr):
        rng = np.random.default_rng(seed)
        occ = rng.random(n) < 0.5
        occ[0], occ[1] = True, False
        curve = ev.roc(spectrum(rng.standard_normal(n)), mask_of(occ), n_thr)
        assert curve.points.shape == (n_thr, 3)
        assert np.all(np.diff(curve.thresholds) <= 0)
        assert np.all(np.diff(curve.fpr) >= 0) and np.all(np.diff(curve.tpr) >= 0)
        assert ((0 <= curve.tpr) & (curve.tpr <= 1)).all()
        assert ((0 <= curve.fpr) & (curve.fpr <= 1)).all()
        assert 0.0 <= curve.auc <= 1.0

    @given(st.integers(4, 200), st.integers(0, 2**32 - 1))
    def test_auc_equals_rank_statistic(self, n, seed):
        rng = np.random.default_rng(seed)
        values = rng.integers(0, 6, n).astype(float)  # with ties
        occ = rng.random(n) < 0.5
        occ[0], occ[1] = True, False
        auc = ev.roc(spectrum(values), mask_of(occ)).auc
        pos, neg = values[occ], values[~occ]
        u = stats.mannwhitneyu(pos, neg).statistic
        assert auc == pytest.approx(u / (pos.size * neg.size), abs=1e-12)

    @given(st.integers(4, 100), st.integers(0, 2**32 - 1))
    def test_auc_invariant_to_monotone_maps(self, n, seed):
        rng = np.random.default_rng(seed)
        v = rng.random(n) + 0.1
        occ = rng.random(n) < 0.5
        occ[0], occ[1] = True, False
        a = ev.roc(spectrum(v), mask_of(occ)).auc
        b = ev.roc(spectrum(10 * np.log10(v)), mask_of(occ)).auc
        assert a == pytest.approx(b, abs=1e-12)


class TestDetect:
    def test_below_min_all_true(self):
        assert ev.detect(spectrum([1.0, 2.0]), 0.5).all()

    def test_above_max_all_false(self):
        assert not ev.detect(spectrum([1.0, 2.0]), 2.0).any()

    def test_two_level_percentile(self):
        occ = np.zeros(1000, bool)
        occ[100:150] = True  # 5 % occupied
        s = spectrum(np.where(occ, 10.0, 1.0))
        thr = float(np.percentile(s.values, 95))
        assert np.array_equal(ev.detect(s, thr), occ)

    def test_negative_values_treated_as_zero(self):
        s = PowerSpectrum(np.arange(2.0), np.array([0.0, 1.0]), {}, np.array([-3.0, 1.0]))
        assert ev.detect(s, -1.0).tolist() == [True, True]

    def test_non_finite_threshold(self):
        with pytest.raises(ValueError):
            ev.detect(spectrum([1.0]), math.nan)


class TestReceiverSensitivity:
    def test_one_gigahertz_six_db(self):
        assert ev.receiver_sensitivity(1e9, 6, 0) == pytest.approx(-78.0)

    def test_minus_two_db(self):
        assert ev.receiver_sensitivity(1e9, 6, -2) == pytest.approx(-80.0)

    def test_thermal_floor(self):
        assert ev.receiver_sensitivity(1, 0, 0) == -174.0

    def test_bandwidth_positive(self):
        with pytest.raises(ValueError):
            ev.receiver_sensitivity(0, 0, 0)


class TestBench:
    def test_proposed_records(self):
        recs = ev.bench("proposed", [{"N": 8, "L": 16, "delays": [0, 2, 3, 4]}], repeats=2)
        (r,) = recs
        assert r.status == "ok" and r.wall_time_s > 0
        assert (r.M, r.N, r.L) == (4, 8, 16)
        assert r.flops_model == pytest.approx(
            (6 * 16 * 8 - 3) * math.log2(2 * 16 * 8 - 1) + 2 * 16 * 8 - 1
        )

    def test_time_domain_over_cap_is_skipped(self):
        recs = ev.bench("time_domain", [{"N": 4, "L": 41, "delays": [0, 1, 3]}], repeats=1)
        assert recs[0].status.startswith("skipped") and recs[0].wall_time_s is None

    def test_freq_domain_m2_below_n_is_skipped(self):
        recs = ev.bench("freq_domain", [{"M": 2, "N": 5, "L": 8}], repeats=1)
        assert recs[0].status.startswith("skipped")

    def test_freq_domain_runs(self):
        (r,) = ev.bench("freq_domain", [{"M": 3, "N": 5, "L": 8, "P": 4}], repeats=1)
        assert r.status == "ok" and r.P == 4 and r.resolution_hz == pytest.approx(1 / 80)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            ev.bench("nope", [{}])

    def test_time_call_median(self):
        calls = []
        ev.time_call(lambda: calls.append(1), repeats=3, warmup=2)
        assert len(calls) == 5


def test_loglog_slope():
    x = np.array([1, 2, 4, 8.0])
    assert ev.loglog_slope(x, 3 * x**1.5) == pytest.approx(1.5)
