"""Service distributions, prediction models, and trace files."""

import numpy as np
import pytest

from predq.engine import RngStreams
from predq.workload import (
    LONG,
    SHORT,
    BoundedMultiplicative,
    Deterministic,
    Empirical,
    Exact,
    Exponential,
    ExponentialMean,
    OneBit,
    Poisson,
    TraceError,
    UniformMultiplicative,
    WeibullPaper,
    Workload,
    generate,
    load_trace,
    moments,
    sample_job,
    save_trace,
)

N = 200_000


class TestServiceDistributions:
    def test_exponential_moments_match_samples(self, rngs):
        d = Exponential(2.0)
        x = d.sample(rngs.service, N)
        m1, m2 = d.moments()
        assert m1 == 2.0 and m2 == 8.0
        assert abs(x.mean() - m1) < 0.03 * m1
        assert abs((x**2).mean() - m2) < 0.05 * m2

    def test_weibull_moments_match_samples(self, rngs):
        d = WeibullPaper()
        x = d.sample(rngs.service, 4 * N)
        m1, m2 = d.moments()
        assert (m1, m2) == (1.0, 6.0)
        assert abs(x.mean() - m1) < 0.03
        assert abs((x**2).mean() - m2) < 0.10 * m2

    def test_weibull_tail_shape(self, rngs):
        # P(X > x) = exp(-sqrt(2x)): check the empirical tail at two points
        x = WeibullPaper().sample(rngs.service, 4 * N)
        for q in (0.5, 2.0):
            want = np.exp(-np.sqrt(2.0 * q))
            got = (x > q).mean()
            assert abs(got - want) < 0.01

    def test_deterministic(self, rngs):
        d = Deterministic(3.0)
        assert np.all(d.sample(rngs.service, 10) == 3.0)
        assert d.moments() == (3.0, 9.0)

    def test_empirical_resamples_support(self, rngs):
        d = Empirical(values=(1.0, 2.0, 4.0))
        x = d.sample(rngs.service, 1000)
        assert set(np.unique(x)) == {1.0, 2.0, 4.0}
        with pytest.raises(ValueError):
            moments(d)

    def test_validation(self):
        with pytest.raises(ValueError):
            Exponential(0.0)
        with pytest.raises(ValueError):
            Deterministic(-1.0)
        with pytest.raises(ValueError):
            Empirical(values=())
        with pytest.raises(ValueError):
            Empirical(values=(1.0, -2.0))


class TestPredictionModels:
    def setup_method(self):
        self.sizes = RngStreams(3).service.exponential(1.0, N)

    def test_exact_copies_sizes(self, rngs):
        y, bits = Exact().predict(self.sizes, rngs.prediction)
        assert np.array_equal(y, self.sizes)
        assert y is not self.sizes
        assert bits is None

    def test_exponential_mean_is_unbiased_multiplier(self, rngs):
        y, _ = ExponentialMean().predict(self.sizes, rngs.prediction)
        ratio = y / self.sizes
        assert abs(ratio.mean() - 1.0) < 0.02
        # exponential multiplier: second moment of ratio is 2
        assert abs((ratio**2).mean() - 2.0) < 0.05

    def test_uniform_multiplicative_bounds(self, rngs):
        y, _ = UniformMultiplicative(0.3).predict(self.sizes, rngs.prediction)
        r = y / self.sizes
        assert r.min() >= 0.7 and r.max() <= 1.3
        assert abs(r.mean() - 1.0) < 0.01

    def test_uniform_alpha_zero_is_exact(self, rngs):
        y, _ = UniformMultiplicative(0.0).predict(self.sizes, rngs.prediction)
        assert np.array_equal(y, self.sizes)

    def test_bounded_multiplicative_bounds(self, rngs):
        y, _ = BoundedMultiplicative(0.5, 2.0).predict(self.sizes, rngs.prediction)
        r = y / self.sizes
        assert r.min() >= 0.5 and r.max() <= 2.0

    def test_onebit_thresholds_base_prediction(self, rngs):
        model = OneBit(threshold=1.5, base=Exact())
        y, bits = model.predict(self.sizes, rngs.prediction)
        assert np.array_equal(y, self.sizes)
        assert bits.dtype == np.int8
        assert np.array_equal(bits == LONG, self.sizes > 1.5)
        assert np.array_equal(bits == SHORT, self.sizes <= 1.5)

    def test_validation(self):
        with pytest.raises(ValueError):
            UniformMultiplicative(1.0)
        with pytest.raises(ValueError):
            UniformMultiplicative(-0.1)
        with pytest.raises(ValueError):
            BoundedMultiplicative(0.0, 2.0)
        with pytest.raises(ValueError):
            BoundedMultiplicative(0.9, 0.95)
        with pytest.raises(ValueError):
            OneBit(threshold=0.0, base=Exact())


class TestGenerate:
    def test_poisson_interarrivals(self, rngs):
        t = Poisson(4.0).sample(rngs.arrivals, N)
        gaps = np.diff(t)
        assert np.all(np.diff(t) >= 0)
        assert abs(gaps.mean() - 0.25) < 0.005
        with pytest.raises(ValueError):
            Poisson(0.0)

    def test_prediction_model_does_not_perturb_other_streams(self):
        # common random numbers: swapping the prediction model leaves
        # arrivals and sizes bit-identical
        a = generate(Poisson(1.0), Exponential(1.0), ExponentialMean(), 1000, RngStreams(9))
        b = generate(Poisson(1.0), Exponential(1.0), UniformMultiplicative(0.5), 1000, RngStreams(9))
        c = generate(Poisson(1.0), Exponential(1.0), None, 1000, RngStreams(9))
        assert np.array_equal(a.arrival, b.arrival)
        assert np.array_equal(a.size, b.size)
        assert np.array_equal(a.size, c.size)
        assert not np.array_equal(a.pred, b.pred)
        assert c.pred is None and c.bits is None

    def test_onebit_workload_carries_bits(self, rngs):
        wl = generate(Poisson(1.0), Exponential(1.0), OneBit(1.0, ExponentialMean()), 500, rngs)
        assert wl.bits is not None
        assert np.array_equal(wl.bits, (wl.pred > 1.0).astype(np.int8))

    def test_head_is_a_view(self, rngs):
        wl = generate(Poisson(1.0), Exponential(1.0), Exact(), 100, rngs)
        h = wl.head(10)
        assert len(h) == 10
        assert h.arrival.base is wl.arrival

    def test_job_view(self, rngs):
        wl = generate(Poisson(1.0), Exponential(1.0), OneBit(1.0, Exact()), 50, rngs)
        j = wl.job(3)
        assert j.id == 3
        assert j.arrival_time == wl.arrival[3]
        assert j.true_size == wl.size[3]
        assert j.class_bit == ("L" if wl.bits[3] else "S")

    def test_sample_job_advances_arrival(self, rngs):
        j = sample_job(Poisson(1.0), Exponential(1.0), Exact(), rngs, prev_arrival=5.0, job_id=2)
        assert j.arrival_time > 5.0
        assert j.id == 2
        assert j.predicted_size == j.true_size


class TestTraceFiles:
    def roundtrip(self, tmp_path, wl):
        p = tmp_path / "trace.csv"
        save_trace(p, wl)
        back = load_trace(p)
        assert np.array_equal(back.arrival, wl.arrival)
        assert np.array_equal(back.size, wl.size)
        if wl.pred is None:
            assert back.pred is None
        else:
            assert np.array_equal(back.pred, wl.pred)
        if wl.bits is None:
            assert back.bits is None
        else:
            assert np.array_equal(back.bits, wl.bits)

    def test_roundtrip_full_columns(self, tmp_path, rngs):
        wl = generate(Poisson(1.0), Exponential(1.0), OneBit(1.0, ExponentialMean()), 200, rngs)
        self.roundtrip(tmp_path, wl)

    def test_roundtrip_minimal_columns(self, tmp_path, rngs):
        wl = generate(Poisson(1.0), Exponential(1.0), None, 200, rngs)
        self.roundtrip(tmp_path, wl)

    def write(self, tmp_path, text):
        p = tmp_path / "bad.csv"
        p.write_text(text)
        return p

    def test_empty_file(self, tmp_path):
        with pytest.raises(TraceError, match="empty"):
            load_trace(self.write(tmp_path, ""))

    def test_bad_header(self, tmp_path):
        p = self.write(tmp_path, "when,how_big\n0.0,1.0\n")
        with pytest.raises(TraceError, match=":1:"):
            load_trace(p)

    def test_unknown_column(self, tmp_path):
        p = self.write(tmp_path, "arrival_time,true_size,color\n0.0,1.0,red\n")
        with pytest.raises(TraceError, match="unknown column"):
            load_trace(p)

    def test_field_count_mismatch_names_line(self, tmp_path):
        p = self.write(tmp_path, "arrival_time,true_size\n0.0,1.0\n1.0\n")
        with pytest.raises(TraceError, match=":3:"):
            load_trace(p)

    def test_nonpositive_size_names_line(self, tmp_path):
        p = self.write(tmp_path, "arrival_time,true_size\n0.0,1.0\n1.0,-2.0\n")
        with pytest.raises(TraceError, match=":3:.*positive"):
            load_trace(p)

    def test_decreasing_arrivals_rejected(self, tmp_path):
        p = self.write(tmp_path, "arrival_time,true_size\n1.0,1.0\n0.5,1.0\n")
        with pytest.raises(TraceError, match="nondecreasing"):
            load_trace(p)

    def test_bad_class_bit(self, tmp_path):
        p = self.write(
            tmp_path, "arrival_time,true_size,class_bit\n0.0,1.0,S\n1.0,1.0,X\n"
        )
        with pytest.raises(TraceError, match="class_bit"):
            load_trace(p)

    def test_unparsable_number_names_line(self, tmp_path):
        p = self.write(tmp_path, "arrival_time,true_size\nzero,1.0\n")
        with pytest.raises(TraceError, match=":2:"):
            load_trace(p)

    def test_blank_lines_skipped(self, tmp_path):
        p = self.write(tmp_path, "arrival_time,true_size\n0.0,1.0\n\n1.0,2.0\n")
        wl = load_trace(p)
        assert len(wl) == 2
