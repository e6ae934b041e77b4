import json

import numpy as np
import pytest
from numpy.testing import assert_array_equal

import modeseek as ms
from modeseek import harness


def make_config(reference, tmp_path, algorithms, **kw):
    data = {
        "model": {"inline": reference.to_dict()},
        "algorithms": algorithms,
        "starts": {"kind": "grid", "num": 12, "box_sigma": 2.0},
        "record_timing": False,
    }
    data.update(kw)
    return harness.ExperimentConfig.from_dict(data, base_dir=tmp_path)


class TestConfig:
    def test_load_shipped(self, config_dir):
        for name in ("reference.json", "consistency.json"):
            cfg = harness.ExperimentConfig.load(config_dir / name)
            assert cfg.algorithms
            assert harness.build_model(cfg).dim == 2

    @pytest.mark.parametrize("data, where", [
        ({"algorithms": [{"name": "oracle"}]}, "config.model"),
        ({"model": {}, "algorithms": []}, "config.algorithms"),
        ({"model": {}, "algorithms": [{"name": "nope", "values": [1]}]}, "config.algorithms[0].name"),
        ({"model": {}, "algorithms": [{"name": "max_shift", "values": [-1]}]}, "config.algorithms[0].values[0]"),
        ({"model": {}, "algorithms": [{"name": "max_shift", "values": [0.1], "extra": 1}]}, "config.algorithms[0]"),
        ({"model": {}, "algorithms": [{"name": "oracle"}], "starts": {"kind": "cloud"}}, "config.starts.kind"),
        ({"model": {}, "algorithms": [{"name": "oracle"}], "colour": 1}, "unknown field"),
        ({"model": {}, "algorithms": [{"name": "oracle"}], "oracle": {"tolerance": 1}}, "config.oracle"),
    ])
    def test_field_diagnostics(self, data, where):
        with pytest.raises(ms.ConfigError, match=where.replace("[", r"\[").replace("]", r"\]")):
            harness.ExperimentConfig.from_dict(data)

    def test_json_syntax_position(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{\n  "model": {},\n  "algorithms": [\n}\n')
        with pytest.raises(ms.ConfigError, match=r"bad\.json:4:1"):
            harness.ExperimentConfig.load(path)

    def test_model_needs_source(self, reference, tmp_path):
        cfg = harness.ExperimentConfig.from_dict({"model": {}, "algorithms": [{"name": "oracle"}]})
        with pytest.raises(ms.ConfigError):
            harness.build_model(cfg)


class TestStarts:
    def test_floor_applied(self, reference, tmp_path):
        cfg = make_config(reference, tmp_path, [{"name": "oracle"}])
        modes = reference.modes
        starts = harness.build_starts(cfg, reference, modes)
        floor = 0.01 * reference.values(modes.modes).max()
        assert np.all(reference.values(starts) >= floor)
        assert 0 < len(starts) <= 144

    def test_thinning(self, reference, tmp_path):
        cfg = make_config(reference, tmp_path, [{"name": "oracle"}],
                          starts={"kind": "grid", "num": 30, "max_n": 50})
        assert len(harness.build_starts(cfg, reference, reference.modes)) == 50

    def test_file_starts(self, reference, tmp_path):
        (tmp_path / "s.csv").write_text("0.1,0.2\n-1.0,0.0\n")
        cfg = make_config(reference, tmp_path, [{"name": "oracle"}], starts={"kind": "file", "path": "s.csv"})
        assert_array_equal(harness.build_starts(cfg, reference, reference.modes), [[0.1, 0.2], [-1.0, 0.0]])


class TestMatchModes:
    def test_identical(self, reference_modes):
        m = ms.match_modes(reference_modes.modes, reference_modes)
        assert m.hausdorff == 0.0
        assert sorted(m.pairs) == [(0, 0), (1, 1), (2, 2)]

    def test_pair_gaps(self):
        m = ms.match_modes([[-1.9], [2.05]], [[-2.0], [2.0]])
        assert m.hausdorff == pytest.approx(0.1)
        assert sorted(m.pairs) == [(0, 0), (1, 1)]
        assert not m.cardinality_mismatch

    def test_cardinality_mismatch(self):
        m = ms.match_modes([[-1.9], [2.05], [5.0]], [[-2.0], [2.0]])
        assert m.cardinality_mismatch
        assert m.hausdorff == pytest.approx(3.0)
        assert len(m.pairs) == 2

    def test_bottleneck_optimal(self):
        # greedy nearest-first would pair (0, 0) and leave a gap of 2
        m = ms.match_modes([[0.0], [1.0]], [[0.5], [-1.0]])
        assert m.bottleneck == pytest.approx(1.0)

    def test_greedy_path_agrees_on_clear_case(self, rng):
        truth = rng.uniform(-10, 10, size=(12, 2))
        est = truth[::-1] + 1e-3
        m = ms.match_modes(est, truth, exhaustive_limit=1)
        assert m.certified
        assert all(a == 11 - b for a, b in m.pairs)


class TestClustering:
    def test_clusters_and_representatives(self):
        P = np.array([[0.0, 0.0], [5.0, 0.0], [0.05, 0.0], [5.02, 0.0]])
        labels, reps = harness.cluster_endpoints(P, np.array([1.0, 2.0, 3.0, 0.5]), 0.1)
        assert_array_equal(labels, [0, 1, 0, 1])
        assert_array_equal(reps, [[0.05, 0.0], [5.0, 0.0]])


class TestRunExperiment:
    def test_oracle_self_agreement(self, reference, tmp_path):
        rep = harness.run_experiment(make_config(reference, tmp_path, [{"name": "oracle"}]))
        row = rep.row("oracle")
        assert row.agreement_fraction == 1.0
        assert row.n_resolved <= row.n_starts

    def test_single_start_at_mode(self, reference, reference_modes, tmp_path):
        ms.kde.save_points(reference_modes.modes[:1], tmp_path / "m.csv")
        cfg = make_config(reference, tmp_path, [{"name": "max_shift", "values": [0.05]}],
                          starts={"kind": "file", "path": "m.csv"})
        row = harness.run_experiment(cfg).row("max_shift")
        assert (row.n_starts, row.agreement_fraction) == (1, 1.0)

    def test_rows_and_bounds(self, reference, tmp_path):
        algs = [{"name": n, "values": [0.1]} for n in ("euler", "line_search", "max_shift", "max_slope_shift")]
        algs.append({"name": "quick_shift", "values": [0.3], "options": {"n": 500}})
        rep = harness.run_experiment(make_config(reference, tmp_path, algs))
        assert [r.algorithm for r in rep.rows] == [a["name"] for a in algs]
        for r in rep.rows:
            assert 0.0 <= r.agreement_fraction <= 1.0
            assert r.n_resolved <= r.n_starts
            assert r.wall_time_s == 0.0

    def test_thread_count_does_not_change_report(self, reference, tmp_path):
        algs = [{"name": "max_shift", "values": [0.1]}, {"name": "medoid_max_shift", "values": [0.3],
                                                         "options": {"n": 400}}]
        paths = []
        for workers in (1, 4):
            out = tmp_path / f"r{workers}.csv"
            harness.run_experiment(make_config(reference, tmp_path, algs, output=str(out)), workers=workers)
            paths.append(out)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_oracle_cache_sound(self, reference, tmp_path):
        cfg = make_config(reference, tmp_path, [{"name": "oracle"}])
        modes = reference.modes
        fc = ms.FlowConfig().resolve(reference, modes)
        starts = harness.build_starts(cfg, reference, modes)
        cache = harness.OracleCache(reference, modes, fc)
        first = cache(starts)
        assert len(cache) == len(starts)
        assert cache(starts) == first == ms.assign_basins(reference, starts, modes, fc)

    def test_per_start_errors_not_fatal(self, reference, tmp_path, monkeypatch):
        real = harness.shift.max_shift

        def flaky(model, x, cfg):
            if x[0] < 0:
                raise ms.SolverError("injected")
            return real(model, x, cfg)

        monkeypatch.setitem(harness.ANALYTIC, "max_shift", (flaky, "eps"))
        rep = harness.run_experiment(make_config(reference, tmp_path, [{"name": "max_shift", "values": [0.1]}]))
        row = rep.row("max_shift")
        # starts left of the axis fail and count as disagreements
        assert 0.0 < row.agreement_fraction < 1.0

    @pytest.mark.slow
    def test_max_shift_sweep_nondecreasing(self, reference, tmp_path):
        cfg = make_config(reference, tmp_path, [{"name": "max_shift", "values": [0.2, 0.1, 0.05]}],
                          starts={"kind": "grid", "num": 80, "box_sigma": 2.0, "max_n": 2000})
        rep = harness.run_experiment(cfg)
        assert harness.agreement_nondecreasing(rep, "max_shift")


class TestReportCsv:
    def test_empty_is_header_only(self, tmp_path):
        path = tmp_path / "r.csv"
        ms.emit_report(ms.ExperimentReport(), path)
        assert path.read_bytes() == (",".join(harness.REPORT_HEADER) + "\n").encode()

    def test_roundtrip(self, tmp_path):
        rep = ms.ExperimentReport([harness.ReportRow("max_shift", "eps", 0.1, 10, 9, 8 / 9, 1e-12 / 3,
                                                     0, 1, 2, 0.123456789)])
        path = tmp_path / "r.csv"
        ms.emit_report(rep, path)
        assert ms.parse_report(path) == rep
        assert b"\r" not in path.read_bytes()

    def test_header(self):
        assert harness.REPORT_HEADER == [
            "algorithm", "param_name", "param_value", "n_starts", "n_resolved", "agreement_fraction",
            "mode_hausdorff", "violations_monotone", "violations_steplaw", "violations_angle", "wall_time_s",
        ]

    def test_not_a_report(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("a,b\n")
        with pytest.raises(ValueError):
            ms.parse_report(path)

    def test_to_dicts(self):
        rep = ms.ExperimentReport([harness.ReportRow("oracle", "rtol", 1e-9, 1, 1, 1.0, 0.0, 0, 0, 0, 0.0)])
        assert json.loads(json.dumps(harness.report_to_dicts(rep)))[0]["algorithm"] == "oracle"
