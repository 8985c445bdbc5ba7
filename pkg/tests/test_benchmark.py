import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import cxrcl.network as network_mod
import cxrcl.strategies as strategies_mod
from cxrcl.benchmark import (
    BenchmarkReport,
    Experience,
    avg_forgetting,
    emit_report,
    forgetting_terms,
    make_stream,
    overall_performance,
    parse_reports,
    report_from_trace,
    run_benchmark,
)
from cxrcl.network import NetworkConfig, TrainConfig
from cxrcl.strategies import StrategyConfig

from conftest import make_samples

TABLE_ROWS = [
    (94.44, 0.91, 71.99),
    (94.28, 1.19, 71.84),
    (93.89, 1.56, 71.56),
    (94.33, 1.13, 71.88),
    (94.18, 1.25, 71.78),
    (94.18, 1.25, 71.78),
    (92.43, 3.82, 70.26),
    (92.43, 3.82, 70.26),
    (92.43, 3.82, 70.26),
]


class TestMakeStream:
    def test_single_experience_holds_pool(self, toy_samples):
        stream = make_stream(toy_samples, 1, seed=0)
        assert len(stream) == 1
        assert len(stream[0].samples) == len(toy_samples)

    def test_ten_into_three(self):
        pool = make_samples(n_per_class=5, n_classes=2, seed=1)
        stream = make_stream(pool, 3, seed=0)
        assert sorted(len(e.samples) for e in stream) == [3, 3, 4]
        assert [e.index for e in stream] == [1, 2, 3]

    def test_deterministic(self, toy_samples):
        a = make_stream(toy_samples, 4, seed=42)
        b = make_stream(toy_samples, 4, seed=42)
        assert [
            [s.source_id for s in e.samples] for e in a
        ] == [[s.source_id for s in e.samples] for e in b]

    def test_partitions_pool(self, toy_samples):
        stream = make_stream(toy_samples, 5, seed=3)
        ids = [s.source_id for e in stream for s in e.samples]
        assert sorted(ids) == sorted(s.source_id for s in toy_samples)
        assert len(set(ids)) == len(ids)

    def test_oversized_k_rejected(self, toy_samples):
        with pytest.raises(ValueError):
            make_stream(toy_samples, len(toy_samples) + 1, seed=0)


class TestForgetting:
    def test_single_entry_zero(self):
        assert avg_forgetting([90.0]) == 0.0

    def test_two_entries(self):
        assert avg_forgetting([90.0, 80.0]) == pytest.approx(10.0, abs=0)

    def test_three_entries_cancel(self):
        assert forgetting_terms([90.0, 85.0, 95.0]) == [5.0, -5.0]
        assert avg_forgetting([90.0, 85.0, 95.0]) == pytest.approx(0.0, abs=0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            avg_forgetting([])

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(min_value=0, max_value=100), min_size=2, max_size=12))
    def test_nondecreasing_trace_nonpositive(self, increments):
        trace = np.minimum(np.cumsum(np.abs(increments)), 100.0)
        assert avg_forgetting(list(trace)) <= 0.0

    def test_strictly_decreasing_positive(self):
        assert avg_forgetting([90.0, 70.0, 50.0]) > 0.0


class TestOverallPerformance:
    def test_best_and_worst_endpoints_exact(self):
        assert overall_performance(100.0, -100.0) == 100.0
        assert overall_performance(0.0, 100.0) == 0.0

    @pytest.mark.parametrize("a,f,expected", TABLE_ROWS)
    def test_published_rows(self, a, f, expected):
        assert abs(overall_performance(a, f) - expected) <= 0.005 + 1e-9

    @settings(max_examples=60, deadline=None)
    @given(
        st.floats(min_value=0, max_value=99),
        st.floats(min_value=-100, max_value=99),
        st.floats(min_value=0.01, max_value=1.0),
    )
    def test_monotone(self, a, f, eps):
        assert overall_performance(min(a + eps, 100.0), f) > overall_performance(a, f)
        assert overall_performance(a, min(f + eps, 100.0)) < overall_performance(a, f)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            overall_performance(101.0, 0.0)
        with pytest.raises(ValueError):
            overall_performance(50.0, -101.0)


class TestRunBenchmark:
    def tc(self, **kw):
        base = dict(max_epochs=2, batch_size=4, patience=5, lr=0.01, seed=0)
        base.update(kw)
        return TrainConfig(**base)

    def test_frozen_model_constant_trace(self, toy_samples):
        stream = make_stream(toy_samples, 3, seed=0)
        test = make_samples(n_per_class=4, n_classes=3, seed=99, prefix="t")
        report = run_benchmark(
            StrategyConfig(method="naive"),
            stream,
            test,
            NetworkConfig(layer_sizes=(4, 3), seed=0),
            self.tc(lr=0.0),
        )
        assert len(set(report.accuracies)) == 1
        assert report.avg_forgetting == 0.0

    def test_naive_vs_gdumb_two_experiences(self):
        first = make_samples(n_per_class=6, n_classes=3, seed=1, prefix="e1")
        second = make_samples(n_per_class=6, n_classes=3, seed=2, prefix="e2")
        stream = [
            Experience(index=1, samples=tuple(first)),
            Experience(index=2, samples=tuple(second)),
        ]
        test = make_samples(n_per_class=3, n_classes=3, seed=3, prefix="t")
        for strategy in (StrategyConfig(method="naive"), StrategyConfig(method="gdumb", k=12)):
            report = run_benchmark(
                strategy,
                stream,
                test,
                NetworkConfig(layer_sizes=(4, 6, 3), seed=0),
                self.tc(),
            )
            assert len(report.accuracies) == 2
            assert len(report.eval_times_ms) == 2

    def test_report_internally_consistent(self, toy_samples):
        stream = make_stream(toy_samples, 2, seed=1)
        test = make_samples(n_per_class=2, n_classes=3, seed=9, prefix="t")
        report = run_benchmark(
            StrategyConfig(method="naive"),
            stream,
            test,
            NetworkConfig(layer_sizes=(4, 3), seed=0),
            self.tc(),
        )
        assert report.overall_performance == overall_performance(
            report.avg_accuracy, report.avg_forgetting
        )
        assert report.avg_accuracy == pytest.approx(np.mean(report.accuracies))

    def test_test_ids_never_reach_training(self, monkeypatch, toy_samples):
        test = make_samples(n_per_class=3, n_classes=3, seed=50, prefix="test")
        test_ids = {s.source_id for s in test}
        trained_ids = set()
        real = network_mod.samples_to_batch

        def spy(samples):
            trained_ids.update(s.source_id for s in samples)
            return real(samples)

        monkeypatch.setattr(network_mod, "samples_to_batch", spy)
        monkeypatch.setattr(strategies_mod, "samples_to_batch", spy)
        stream = make_stream(toy_samples, 3, seed=0)
        for strategy in (
            StrategyConfig(method="naive"),
            StrategyConfig(method="ewc"),
            StrategyConfig(method="lwf"),
            StrategyConfig(method="gem", k=6),
            StrategyConfig(method="gdumb", k=6),
        ):
            run_benchmark(
                strategy,
                stream,
                test,
                NetworkConfig(layer_sizes=(4, 3), seed=0),
                self.tc(max_epochs=1),
            )
        assert trained_ids
        assert not trained_ids & test_ids


class TestReports:
    def sample_report(self):
        return report_from_trace("lwf(T=2,lambda_o=1)", 7, [90.0, 85.0, 95.0], [1.5, 2.5, 2.0])

    def test_json_round_trip(self, tmp_path):
        report = self.sample_report()
        path = tmp_path / "r.json"
        emit_report(report, "json", path)
        assert parse_reports(path, "json") == [report]

    def test_csv_round_trip_and_append(self, tmp_path):
        report = self.sample_report()
        other = report_from_trace("naive", 8, [70.0, 60.0], [1.0, 1.0])
        path = tmp_path / "r.csv"
        emit_report(report, "csv", path)
        emit_report(other, "csv", path)
        parsed = parse_reports(path, "csv")
        assert parsed == [report, other]

    def test_csv_header_is_stable(self, tmp_path):
        path = tmp_path / "r.csv"
        emit_report(self.sample_report(), "csv", path)
        header = path.read_text().splitlines()[0]
        assert header == (
            "strategy,seed,avg_accuracy,accuracy_std,avg_forgetting,"
            "forgetting_std,overall_performance,avg_eval_time_ms,"
            "accuracies,eval_times_ms"
        )

    def test_unknown_format_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            emit_report(self.sample_report(), "xml", tmp_path / "r.xml")

    def test_metrics_from_trace(self):
        report = self.sample_report()
        assert report.avg_accuracy == pytest.approx(90.0)
        assert report.avg_forgetting == pytest.approx(0.0)
        assert report.overall_performance == pytest.approx(70.0)
        assert report.avg_eval_time_ms == pytest.approx(2.0)
