import csv
import math
import statistics

import numpy as np
import pytest

from cmabo import cli, runner
from cmabo.benchmarks import make_problem
from cmabo.optimizers import OptimizerConfig
from cmabo.region import chi2_quantile


def quick_config(tmp_path, **kw):
    text = {"problem": "sphere-2d", "method": "cma-es", "budget": 60, "n0": 10, "repeats": 2, "out": str(tmp_path)}
    text.update(kw)
    return runner.parse_config("\n".join(f"{k}={v}" for k, v in text.items()))


def test_parse_and_round_trip():
    cfg = runner.parse_config("""
        # comment line
        problem=levy-20d
        method=cma-turbo
        budget=600
        repeats=5
        alpha=0.99
        n_candidates=1000
        gp_on_global=true
        refit_interval=none
        literal_chi2=yes
    """)
    assert cfg.optimizer == OptimizerConfig(alpha=0.99, n_candidates=1000, gp_on_global=True, literal_chi2=True)
    assert cfg.repeats == 5 and cfg.n0 == 20 and cfg.base_seed == 0
    assert runner.parse_config(cfg.to_text()) == cfg


@pytest.mark.parametrize("text", [
    "problem=levy-2d\nmethod=cma-bo\nbudget=50\nwibble=3",
    "problem=levy-2d\nmethod=cma-bo",
    "problem=levy-2d\nmethod=cma-bo\nbudget=ten",
    "problem=levy-2d\nmethod=cma-bo\nbudget=20\nn0=20",
    "problem=levy-2d\nmethod=cma-bo\nbudget=50\nrepeats=0",
    "problem=levy-2d\nmethod=simplex\nbudget=50",
    "problem=levy-2d\nmethod=cma-bo\nbudget=50\ngp_on_global=maybe",
    "problem=levy-2d method=cma-bo",
])
def test_strict_parsing_rejects(text):
    with pytest.raises(runner.ConfigError):
        runner.parse_config(text)


def test_unknown_problem_is_config_error(tmp_path):
    cfg = quick_config(tmp_path, problem="nosuch-3d")
    with pytest.raises(runner.ConfigError):
        runner.run_experiment(cfg)


def test_unwritable_output_fails_before_running(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = quick_config(tmp_path, out=str(blocker / "sub"))
    with pytest.raises(runner.ConfigError):
        runner.run_experiment(cfg)


def test_single_repeat_summary_equals_trace(tmp_path):
    res = runner.run_experiment(quick_config(tmp_path, repeats=1))
    run = runner.read_run_csv(res.run_files[0])
    assert np.array_equal(res.summary.mean_best, run["best_y"])
    assert np.all(res.summary.stderr_best == 0)


def test_run_csv_schema_and_snapshot(tmp_path):
    res = runner.run_experiment(quick_config(tmp_path))
    with open(res.run_files[0], newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["eval", "x0", "x1", "y", "best_y", "gen", "event"]
    assert len(rows) - 1 == res.records[0].n_evals == 60
    best = [float(r[4]) for r in rows[1:]]
    assert all(b2 <= b1 for b1, b2 in zip(best, best[1:]))
    assert runner.parse_config(res.records[0].config["text"]) == res.config
    assert (tmp_path / "cma-es_sphere-2d_seed0_meta.json").exists()


def test_rerun_is_byte_identical(tmp_path):
    a = runner.run_experiment(quick_config(tmp_path / "a", method="cma-bo", budget=40))
    b = runner.run_experiment(quick_config(tmp_path / "b", method="cma-bo", budget=40))
    for fa, fb in zip(a.run_files, b.run_files):
        assert fa.read_bytes() == fb.read_bytes()
    assert a.summary_file.read_bytes() == b.summary_file.read_bytes()


def test_summary_recomputes_from_files(tmp_path):
    res = runner.run_experiment(quick_config(tmp_path, repeats=10, problem="shifted-sphere-2d"))
    summary = runner.read_summary(res.summary_file)
    traces = [runner.read_run_csv(f)["best_y"] for f in res.run_files]
    for k in (0, 17, 59):
        column = [t[k] for t in traces]
        assert summary.mean_best[k] == pytest.approx(statistics.fmean(column), rel=1e-12)
        assert summary.stderr_best[k] == pytest.approx(statistics.stdev(column) / math.sqrt(10), rel=1e-9, abs=1e-300)
    problems = [make_problem("shifted-sphere-2d", seed) for seed in range(10)]
    again = runner.summarize_runs(res.run_files, problems)
    for name in ("mean_best", "stderr_best", "mean_dist", "stderr_dist"):
        assert np.array_equal(getattr(again, name), getattr(summary, name))


def test_trajectory_generation_zero_circle(tmp_path):
    res = runner.run_experiment(quick_config(tmp_path, method="cma-bo", problem="branin-2d", budget=80, repeats=1))
    path = res.run_files[0].with_name(res.run_files[0].stem + "_trajectory.csv")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(res.records[0].generations)
    radius = 0.3 * 15.0 * math.sqrt(chi2_quantile(0.9973, 2))
    assert float(rows[0]["radius_major"]) == pytest.approx(radius, rel=1e-9)
    assert float(rows[0]["radius_minor"]) == pytest.approx(radius, rel=1e-9)
    assert rows[0]["event"] == "init"


def test_trajectory_restart_marker(tmp_path):
    cfg = quick_config(tmp_path, method="cma-turbo", problem="sphere-2d", budget=120, repeats=1, length_min=0.3)
    res = runner.run_experiment(cfg)
    rec = res.records[0]
    path = res.run_files[0].with_name(res.run_files[0].stem + "_trajectory.csv")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    markers = [r["event"] for r in rows]
    assert markers.count("restart") == sum(g.new_run for g in rec.generations) - 1 >= 1


def test_svg_rendering(tmp_path):
    flat = runner.Summary(np.arange(1, 11), np.full(10, 2.0), np.zeros(10), label="flat")
    geo = runner.emit_regret_svg([flat], tmp_path / "flat.svg")
    ys = geo["py"](geo["series"][0]["mean"])
    assert np.all(ys == ys[0])

    a = runner.Summary(np.arange(1, 6), np.array([5.0, 4, 3, 2, 1]), np.array([0.5, 0.4, 0.3, 0.2, 0.1]), label="one")
    b = runner.Summary(np.arange(1, 6), np.array([5.0, 5, 4, 4, 3]), np.full(5, 0.25), label="two")
    out = tmp_path / "two.svg"
    geo = runner.emit_regret_svg([a, b], out)
    text = out.read_text()
    assert text.count('class="legend"') == 2 and ">one<" in text and ">two<" in text
    assert text.count('class="band"') == 2
    assert np.array_equal(geo["series"][0]["band_half_width"], a.stderr_best)
    scale = geo["py"](0.0) - geo["py"](1.0)
    band_px = geo["py"](a.mean_best - a.stderr_best) - geo["py"](a.mean_best)
    assert np.allclose(band_px, a.stderr_best * scale)

    short = runner.Summary(np.arange(1, 4), np.ones(3), np.zeros(3))
    with pytest.raises(ValueError):
        runner.emit_regret_svg([a, short], tmp_path / "bad.svg")
    with pytest.raises(ValueError):
        runner.emit_regret_svg([], tmp_path / "none.svg")


def test_cli_exit_codes(tmp_path, monkeypatch):
    out = tmp_path / "bench"
    code = cli.main(["bench", "--problem", "sphere-2d", "--method", "cma-es", "--budget", "40", "--repeats", "2",
                     "--n0", "10", "--out", str(out)])
    assert code == 0
    summary = out / "cma-es_sphere-2d_summary.csv"
    assert summary.exists()
    assert cli.main(["plot", "--summaries", str(summary), "--out", str(tmp_path / "p.svg")]) == 0
    assert (tmp_path / "p.svg").read_text().startswith("<svg")

    cfg = tmp_path / "exp.cfg"
    cfg.write_text(f"problem=sphere-2d\nmethod=bo\nbudget=25\nn0=10\nrepeats=1\nout={tmp_path / 'run'}\n")
    assert cli.main(["run", "--config", str(cfg)]) == 0
    assert cli.main(["run", "--config", str(cfg), "--set", "bogus=1"]) == 2
    assert cli.main(["run", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert cli.main(["bench", "--problem", "sphere-2d"]) == 2
    assert cli.main(["frobnicate"]) == 2

    def boom(*args, **kwargs):
        raise RuntimeError("evaluator crashed")

    monkeypatch.setattr(runner, "run_method", boom)
    assert cli.main(["run", "--config", str(cfg)]) == 3
