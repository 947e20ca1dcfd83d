import csv

import pytest

from cusumac.cli import (
    RESULT_COLUMNS,
    TRACE_COLUMNS,
    ConfigError,
    _canned_specs,
    main,
    parse_config,
)


def write(tmp_path, text, name="exp.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


BASE = """
[meta]
seed = 4242

[experiment:{name}]
kind = {kind}
{body}
"""


class TestParsing:
    def test_unknown_key_is_hard_error(self, tmp_path):
        cfg = write(tmp_path, BASE.format(name="t", kind="trace",
                                          body="detector = cusum\na = 4.5\nzeta = 3"))
        with pytest.raises(ConfigError, match="unknown key 'zeta'"):
            parse_config(cfg)

    def test_unknown_kind(self, tmp_path):
        cfg = write(tmp_path, BASE.format(name="t", kind="bogus", body="a = 1"))
        with pytest.raises(ConfigError, match="unknown kind"):
            parse_config(cfg)

    def test_unknown_section(self, tmp_path):
        cfg = write(tmp_path, "[meta]\nseed = 1\n\n[wat]\nx = 1\n")
        with pytest.raises(ConfigError, match="unknown section"):
            parse_config(cfg)

    def test_numeric_preconditions_checked_before_running(self, tmp_path):
        cfg = write(tmp_path, BASE.format(
            name="r", kind="rate",
            body="detector = cusum\na = 5\nhorizon = 500\nn_reps = 10"))
        with pytest.raises(ConfigError, match="horizon"):
            parse_config(cfg)

    def test_cusum_ac_requires_levels(self, tmp_path):
        cfg = write(tmp_path, BASE.format(
            name="d", kind="delay", body="detector = cusum_ac\na = 4.5\nn_reps = 200"))
        with pytest.raises(ConfigError, match="a1 and eps1"):
            parse_config(cfg)

    def test_missing_seed_is_an_error(self, tmp_path):
        cfg = write(tmp_path, "[experiment:t]\nkind = trace\ndetector = cusum\n"
                              "a = 4.5\nhorizon = 50\n")
        rc = main(["--config", str(cfg), "--out", str(tmp_path / "out")])
        assert rc == 2

    def test_empty_experiment_list_exits_zero(self, tmp_path):
        cfg = write(tmp_path, "[meta]\nseed = 3\n")
        out = tmp_path / "out"
        rc = main(["--config", str(cfg), "--out", str(out)])
        assert rc == 0
        assert not out.exists()


class TestRuns:
    def test_trace_run_schema(self, tmp_path):
        cfg = write(tmp_path, BASE.format(
            name="fig3_style", kind="trace",
            body="detector = cusum\na = 4.5\nnu = 60\nhorizon = 300"))
        out = tmp_path / "out"
        assert main(["--config", str(cfg), "--out", str(out)]) == 0
        rows = read_csv(out / "fig3_style.csv")
        assert list(rows[0]) == TRACE_COLUMNS
        assert 1 <= len(rows) <= 300
        ks = [int(r["k"]) for r in rows]
        assert ks == list(range(1, len(rows) + 1))
        stopped = [int(r["stopped"]) for r in rows]
        assert all(v == 0 for v in stopped[:-1])

    def test_trace_cusum_ac_emits_levels(self, tmp_path):
        cfg = write(tmp_path, BASE.format(
            name="actrace", kind="trace",
            body="detector = cusum_ac\na = 4.5\na1 = 0.78\neps1 = 0.63\n"
                 "nu = 60\nhorizon = 200"))
        out = tmp_path / "out"
        assert main(["--config", str(cfg), "--out", str(out)]) == 0
        rows = read_csv(out / "actrace.csv")
        levels = {r["level"] for r in rows}
        sents = {r["sent"] for r in rows}
        assert levels <= {"0", "1"} and "0" in sents

    def test_point_estimates_schema(self, tmp_path):
        cfg = write(tmp_path, """
[meta]
seed = 11

[experiment:a]
kind = arlfa
detector = cusum
a = 3.0
n_reps = 200
cap = 10000

[experiment:d]
kind = delay
detector = random_tx
a = 3.0
epsilon = 0.5
n_reps = 200

[experiment:r]
kind = rate
detector = cusum_ac
a = 6.0
a1 = 0.78
eps1 = 0.63
n_reps = 50
horizon = 10000
""")
        out = tmp_path / "out"
        assert main(["--config", str(cfg), "--out", str(out)]) == 0
        arlfa = read_csv(out / "a.csv")
        assert list(arlfa[0]) == RESULT_COLUMNS + ["cap"]
        assert arlfa[0]["metric"] == "arlfa"
        assert float(arlfa[0]["mean"]) > 0
        delay = read_csv(out / "d.csv")
        assert list(delay[0]) == RESULT_COLUMNS
        rate = read_csv(out / "r.csv")
        assert rate[0]["metric"] == "comm_rate"
        assert 0.0 < float(rate[0]["mean"]) <= 1.0

    def test_delay_vs_arlfa_rows(self, tmp_path):
        cfg = write(tmp_path, BASE.format(
            name="sweep", kind="delay_vs_arlfa",
            body="zeta_grid = 150 300\na1 = 0.78\neps1 = 0.63\nepsilon = 0.7\n"
                 "n_reps = 200\ntolerance = 0.1"))
        out = tmp_path / "out"
        assert main(["--config", str(cfg), "--out", str(out)]) == 0
        rows = read_csv(out / "sweep.csv")
        assert len(rows) == 12  # six metrics per zeta point
        metrics = {(r["detector"], r["metric"]) for r in rows}
        assert ("cusum_ac", "delay_gap_vs_cusum") in metrics
        assert ("cusum", "arlfa") in metrics

    def test_calibrate_writes_trace(self, tmp_path):
        cfg = write(tmp_path, BASE.format(
            name="cal", kind="calibrate",
            body="zeta = 150\nepsilon = 0.8\na1_grid = 0.78\neps1_grid = 0.63\n"
                 "n_reps = 200\ntolerance = 0.1"))
        out = tmp_path / "out"
        assert main(["--config", str(cfg), "--out", str(out)]) == 0
        trace = read_csv(out / "cal_trace.csv")
        assert trace and trace[0]["a1"] == "0.78"
        results = read_csv(out / "cal.csv")
        assert {r["metric"] for r in results} == {
            "arlfa", "delay", "comm_rate", "feedback_ratio", "frac_time_above_a1"}

    def test_manifest_round_trip_bit_identical(self, tmp_path):
        cfg = write(tmp_path, """
[meta]
seed = 77

[experiment:t1]
kind = trace
detector = cusum_ac
a = 3.5
a1 = 0.78
eps1 = 0.63
nu = 40
horizon = 150

[experiment:d1]
kind = delay
detector = cusum
a = 3.0
n_reps = 150
""")
        out1 = tmp_path / "out1"
        out2 = tmp_path / "out2"
        assert main(["--config", str(cfg), "--out", str(out1)]) == 0
        assert main(["--config", str(out1 / "manifest.ini"), "--out", str(out2)]) == 0
        for name in ("t1.csv", "d1.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_worst_history_delay_kind(self, tmp_path):
        cfg = write(tmp_path, BASE.format(
            name="wh", kind="delay",
            body="detector = cusum_ac\na = 4.0\na1 = 0.78\neps1 = 0.63\n"
                 "nu = 10\nworst_history = true\nn_reps = 150"))
        out = tmp_path / "out"
        assert main(["--config", str(cfg), "--out", str(out)]) == 0
        rows = read_csv(out / "wh.csv")
        assert rows[0]["nu"] == "10"
        assert float(rows[0]["mean"]) > 0

    def test_reps_flag_overrides(self, tmp_path):
        cfg = write(tmp_path, BASE.format(
            name="d", kind="delay",
            body="detector = cusum\na = 3.0\nn_reps = 150"))
        out = tmp_path / "out"
        assert main(["--config", str(cfg), "--out", str(out), "--reps", "250"]) == 0
        rows = read_csv(out / "d.csv")
        assert rows[0]["n_reps"] == "250"


class TestCanned:
    def test_canned_specs_match_reported_setups(self):
        fig4 = _canned_specs("fig4", 2000)[0]
        assert fig4.kind == "delay_vs_arlfa" and fig4.m == 3
        assert (fig4.a1, fig4.eps1) == (0.78, 0.63)
        assert fig4.zeta_grid == (2000.0, 5000.0, 10000.0)
        fig5 = _canned_specs("fig5", 2000)[0]
        assert (fig5.a1, fig5.eps1) == (0.79, 0.27)
        assert fig5.epsilon == 0.4
        fig6 = _canned_specs("fig6", 500)[0]
        assert fig6.kind == "delay_vs_rate"
        assert fig6.zeta == 10_000.0
        assert fig6.epsilon_grid == (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
        assert fig6.n_reps == 500

    def test_reproduce_requires_seed(self, tmp_path):
        assert main(["--reproduce", "fig5", "--out", str(tmp_path)]) == 2
