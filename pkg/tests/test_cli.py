import json
import os

import numpy as np
import pytest

from contagion_fit.cli import EXIT_INPUT_ERROR, EXIT_OK, main, summary_text
from contagion_fit.mcmc_engine import PosteriorSamples, read_posterior_csv
from contagion_fit.outbreak_analysis import peak_timing
from contagion_fit.sir_dynamics import SirParams, final_size_oracle

from conftest import make_window

FAST = ["--seed", "7", "--burn-in", "200", "--samples", "200", "--ensemble", "20"]


def write_series(path, window, label="flu"):
    lines = [f"Day,{label}"]
    for day, value in zip(window.dates, window.values):
        lines.append(f"{day.isoformat()},{int(min(value, 100))}")
    path.write_text("\n".join(lines) + "\n")
    return str(path)


@pytest.fixture(scope="module")
def series_csv(tmp_path_factory):
    params = SirParams(beta=2.0, gamma=1.0, r=5.0, i0=1e-3)
    window = make_window(params, 30, rng=np.random.default_rng(99))
    return write_series(tmp_path_factory.mktemp("data") / "flu.csv", window)


@pytest.fixture(scope="module")
def fit_dir(tmp_path_factory, series_csv):
    out = str(tmp_path_factory.mktemp("fit"))
    assert main(["fit", "--input", series_csv, "--out-dir", out, *FAST]) == EXIT_OK
    return out


def read_json(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


# Test fit


def test_fit_writes_artifacts(fit_dir):
    for name in ("posterior.csv", "fit_report.json", "envelope.csv"):
        assert os.path.exists(os.path.join(fit_dir, name))
    report = read_json(os.path.join(fit_dir, "fit_report.json"))
    assert report["seed"] == 7
    assert report["series"] == {"label": "flu", "start_date": "2014-02-01", "days": 30}
    assert report["config"]["burn_in"] == 200
    assert "out_dir" not in report["config"]
    assert 0.0 <= report["extinction"]["extinction_probability"] < 1.0


def test_fit_is_reproducible(fit_dir, series_csv, tmp_path):
    assert main(["fit", "--input", series_csv, "--out-dir", str(tmp_path), *FAST]) == EXIT_OK
    for name in ("posterior.csv", "fit_report.json", "envelope.csv"):
        with open(os.path.join(fit_dir, name), "rb") as a, open(tmp_path / name, "rb") as b:
            assert a.read() == b.read()


def test_fit_missing_input(tmp_path, caplog):
    missing = str(tmp_path / "nope.csv")
    assert main(["fit", "--input", missing, "--seed", "1", "--out-dir", str(tmp_path)]) == EXIT_INPUT_ERROR
    assert missing in caplog.text
    assert not os.path.exists(tmp_path / "posterior.csv")


def test_fit_requires_seed(series_csv, tmp_path, caplog):
    assert main(["fit", "--input", series_csv, "--out-dir", str(tmp_path)]) == EXIT_INPUT_ERROR
    assert "--seed" in caplog.text


def test_unknown_flag_is_an_input_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["fit", "--no-such-flag"])
    assert exc.value.code == EXIT_INPUT_ERROR


# Test validate


def test_validate_reproduces_in_sample_r2(fit_dir, series_csv, tmp_path):
    posterior = os.path.join(fit_dir, "posterior.csv")
    args = ["validate", "--posterior", posterior, "--input", series_csv, "--validate-input", series_csv]
    assert main([*args, "--out-dir", str(tmp_path)]) == EXIT_OK
    validation = read_json(tmp_path / "validation.json")
    fitted = read_json(os.path.join(fit_dir, "fit_report.json"))["validation"]
    assert validation["r2_in_sample"] == fitted["r2_in_sample"]
    assert validation["r2_out_sample"] == validation["r2_in_sample"]


# Test simulate


def test_simulate_parameters_reach_final_size(tmp_path):
    args = ["simulate", "--beta", "2", "--gamma", "1", "--i0", "0.001", "--horizon", "40", "--out-dir", str(tmp_path)]
    assert main(args) == EXIT_OK
    result = read_json(tmp_path / "peak_timing.json")
    expected = final_size_oracle(2.0, 0.999)
    assert result["final_size_oracle"] == pytest.approx(expected)
    assert abs(result["final_cumulative"] - expected) <= 1e-4
    trajectory = (tmp_path / "trajectory.csv").read_text().splitlines()
    assert trajectory[0] == "day,S,I,R,C,incidence"
    assert len(trajectory) == 42


def test_simulate_rejects_zero_horizon(tmp_path, caplog):
    args = ["simulate", "--beta", "2", "--gamma", "1", "--horizon", "0", "--out-dir", str(tmp_path)]
    assert main(args) == EXIT_INPUT_ERROR
    assert "horizon" in caplog.text


def test_simulate_from_posterior_matches_peak_timing(fit_dir, tmp_path):
    posterior = os.path.join(fit_dir, "posterior.csv")
    args = ["simulate", "--posterior", posterior, "--seed", "5", "--i0", "0.001", "--horizon", "60", "--ensemble", "20"]
    assert main([*args, "--out-dir", str(tmp_path)]) == EXIT_OK
    result = read_json(tmp_path / "peak_timing.json")
    expected = peak_timing(read_posterior_csv(posterior), 20, 0.001, np.random.default_rng(5), horizon=60)
    assert result["mean_days"] == expected.mean
    assert result["days"] == expected.days.tolist()
    assert (tmp_path / "ensemble.csv").read_text().splitlines()[0] == (
        "day,incidence_median,incidence_lo95,incidence_hi95"
    )


# Test report


def test_report_summarises_run(fit_dir, capsys):
    assert main(["report", "--out-dir", fit_dir]) == EXIT_OK
    printed = capsys.readouterr().out
    with open(os.path.join(fit_dir, "report.txt"), encoding="utf-8") as f:
        assert f.read() == printed
    assert "R0: " in printed
    assert "Seed: 7" in printed


def test_report_svg_is_stable(fit_dir):
    assert main(["report", "--out-dir", fit_dir, "--emit-svg"]) == EXIT_OK
    first = {}
    for name in ("fit.svg", "effective_r.svg", "posterior.svg"):
        with open(os.path.join(fit_dir, name), "rb") as f:
            first[name] = f.read()
    assert main(["report", "--out-dir", fit_dir, "--emit-svg"]) == EXIT_OK
    for name, content in first.items():
        with open(os.path.join(fit_dir, name), "rb") as f:
            assert f.read() == content


def test_report_missing_artifacts(tmp_path, caplog):
    assert main(["report", "--out-dir", str(tmp_path)]) == EXIT_INPUT_ERROR
    assert "posterior.csv" in caplog.text


def test_summary_text_handles_missing_out_of_sample(fit_dir):
    report = read_json(os.path.join(fit_dir, "fit_report.json"))
    report["validation"]["r2_out_sample"] = None
    report["effective_r"]["crossing_day"] = None
    text = summary_text(report)
    assert "R^2 out-of-sample: n/a" in text
    assert "from day: never" in text


@pytest.mark.slow
def test_fit_recovers_r0_from_simulated_series(series_csv, tmp_path):
    args = ["fit", "--input", series_csv, "--seed", "42", "--burn-in", "5000", "--samples", "20000"]
    assert main([*args, "--ensemble", "100", "--out-dir", str(tmp_path)]) == EXIT_OK
    report = read_json(tmp_path / "fit_report.json")
    assert report["summary"]["r0"]["median"] == pytest.approx(2.0, rel=0.15)


def test_report_prints_r0_from_fit_report(fit_dir, capsys):
    assert main(["report", "--out-dir", fit_dir]) == EXIT_OK
    printed = capsys.readouterr().out
    r0 = read_json(os.path.join(fit_dir, "fit_report.json"))["summary"]["r0"]
    line = next(line for line in printed.splitlines() if line.startswith("R0: "))
    assert line == f"R0: {r0['median']:.3f} ({r0['lower95']:.3f}-{r0['upper95']:.3f})"


def test_validate_noisy_regions_score_between_zero_and_one(tmp_path):
    truth = SirParams(beta=2.0, gamma=1.0, r=5.0, i0=1e-3)
    posterior = tmp_path / "posterior.csv"
    n = 100
    PosteriorSamples(
        draws=np.tile(truth.as_array(), (n, 1)),
        log_posterior=np.zeros(n),
        iterations=np.arange(1, n + 1),
        chains=np.zeros(n, dtype=int),
    ).to_csv(posterior)
    region_a = write_series(tmp_path / "a.csv", make_window(truth, 30, rng=np.random.default_rng(1)), "a")
    region_b = write_series(tmp_path / "b.csv", make_window(truth, 30, rng=np.random.default_rng(2)), "b")
    args = ["validate", "--posterior", str(posterior), "--input", region_a, "--validate-input", region_b]
    assert main([*args, "--out-dir", str(tmp_path)]) == EXIT_OK
    validation = read_json(tmp_path / "validation.json")
    assert 0.0 < validation["r2_in_sample"] < 1.0
    assert 0.0 < validation["r2_out_sample"] < 1.0
    assert validation["out_sample_label"] == "b"


@pytest.mark.parametrize("source", ["posterior", "params"])
def test_simulate_rejects_i0_outside_unit_interval(source, fit_dir, tmp_path, caplog):
    if source == "posterior":
        given = ["--posterior", os.path.join(fit_dir, "posterior.csv"), "--seed", "1"]
    else:
        given = ["--beta", "2", "--gamma", "1"]
    args = ["simulate", *given, "--i0", "1.5", "--horizon", "30", "--out-dir", str(tmp_path)]
    assert main(args) == EXIT_INPUT_ERROR
    assert "--i0 must lie in (0, 1)" in caplog.text
    assert not os.path.exists(tmp_path / "peak_timing.json")
