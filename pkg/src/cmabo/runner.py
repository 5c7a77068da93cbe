"""Experiment orchestration: configs, seeded repeats, run files, summaries, plots.

Config files are flat ``key=value`` text (``#`` starts a comment). Keys are
the :class:`ExperimentConfig` fields plus any :class:`OptimizerConfig` field;
anything else is rejected.

Repeat ``i`` runs with seed ``base_seed + i``. That seed fixes both the
problem instance (shift vector) and the optimizer stream, which is a numpy
``PCG64`` generator seeded through ``SeedSequence(seed)``.
"""
from __future__ import annotations

import csv
import json
import math
import tempfile
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .benchmarks import Problem, distance_to_optimum, make_problem, with_noise
from .optimizers import METHODS, OptimizerConfig, RunRecord, run_method

RNG_NAME = "numpy.PCG64(SeedSequence(seed))"
NOISE_STREAM = 0x0B5E_2A7E


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    problem: str
    method: str
    budget: int
    n0: int = 20
    repeats: int = 10
    base_seed: int = 0
    out: str = "results"
    noise_std: float = 0.0
    permute_effective: bool = False
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {sorted(METHODS)}")
        if self.repeats < 1:
            raise ConfigError(f"repeats must be >= 1, got {self.repeats}")
        if self.n0 < 2:
            raise ConfigError(f"n0 must be >= 2, got {self.n0}")
        if self.budget <= self.n0:
            raise ConfigError(f"budget must exceed n0 ({self.budget} <= {self.n0})")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be non-negative")

    @property
    def tag(self) -> str:
        return f"{self.method}_{self.problem}"

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            if f.name == "optimizer":
                continue
            lines.append(f"{f.name}={_format_value(getattr(self, f.name))}")
        for f in fields(self.optimizer):
            lines.append(f"{f.name}={_format_value(getattr(self.optimizer, f.name))}")
        return "\n".join(lines) + "\n"


_TOP_KEYS = {f.name: f.type for f in fields(ExperimentConfig) if f.name != "optimizer"}
_OPT_KEYS = {f.name: f.type for f in fields(OptimizerConfig)}


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _convert(key: str, text: str, annotation: str):
    optional = "None" in annotation
    base = annotation.replace("| None", "").strip()
    if optional and text.lower() == "none":
        return None
    try:
        if base == "bool":
            low = text.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(text)
        if base == "int":
            return int(text)
        if base == "float":
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r} (expected {annotation})") from None


def parse_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Parse ``key=value`` lines; later keys and ``overrides`` win."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        raw[key] = value
    for key, value in (overrides or {}).items():
        raw[key] = _format_value(value) if not isinstance(value, str) else value
    unknown = sorted(set(raw) - set(_TOP_KEYS) - set(_OPT_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    missing = [k for k in ("problem", "method", "budget") if k not in raw]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    top = {k: _convert(k, v, _TOP_KEYS[k]) for k, v in raw.items() if k in _TOP_KEYS}
    opt = {k: _convert(k, v, _OPT_KEYS[k]) for k, v in raw.items() if k in _OPT_KEYS}
    return ExperimentConfig(**top, optimizer=OptimizerConfig(**opt))


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), overrides)


def run_seeds(config: ExperimentConfig) -> list[int]:
    return [config.base_seed + i for i in range(config.repeats)]


def build_problem(config: ExperimentConfig, seed: int) -> Problem:
    try:
        problem = make_problem(config.problem, seed, config.permute_effective)
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from None
    if config.noise_std > 0:
        problem = with_noise(problem, config.noise_std, np.random.default_rng([seed, NOISE_STREAM]))
    return problem


def run_single(config: ExperimentConfig, seed: int) -> tuple[RunRecord, Problem]:
    problem = build_problem(config, seed)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    record = run_method(config.method, problem, config.budget, config.n0, config.optimizer, rng, seed)
    record.config = {"text": config.to_text()}
    return record, problem


def _check_writable(out: Path):
    try:
        out.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=out):
            pass
    except OSError as exc:
        raise ConfigError(f"output directory {str(out)!r} is not writable: {exc}") from None


def run_path(out: Path, config: ExperimentConfig, seed: int) -> Path:
    return Path(out) / f"{config.tag}_seed{seed}.csv"


def write_run_csv(record: RunRecord, path) -> Path:
    """Per-evaluation log with ``repr`` floats so reruns are byte-identical."""
    path = Path(path)
    d = record.dim
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eval", *(f"x{i}" for i in range(d)), "y", "best_y", "gen", "event"])
        for k in range(record.n_evals):
            w.writerow([k + 1, *(repr(float(v)) for v in record.points[k]), repr(float(record.values[k])),
                        repr(float(record.best[k])), record.gens[k], record.events[k]])
    return path


def read_run_csv(path) -> dict[str, np.ndarray]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    xcols = [i for i, h in enumerate(header) if h.startswith("x")]
    iy, ib, ig, ie = (header.index(h) for h in ("y", "best_y", "gen", "event"))
    return {
        "eval": np.array([int(r[0]) for r in body], dtype=int),
        "x": np.array([[float(r[i]) for i in xcols] for r in body]).reshape(len(body), len(xcols)),
        "y": np.array([float(r[iy]) for r in body]),
        "best_y": np.array([float(r[ib]) for r in body]),
        "gen": np.array([int(r[ig]) for r in body], dtype=int),
        "event": [r[ie] for r in body],
    }


def write_trajectory(record: RunRecord, path) -> Path:
    """Per-generation region log in original coordinates.

    Columns: generation, first evaluation index, event marker (``init`` /
    ``restart`` on the first generation of a local run), step size, scale L,
    target dimension, threshold, center, then either the full 2x2 effective
    covariance with semi-axes and rotation (d = 2) or the largest and
    smallest semi-axes.
    """
    path = Path(path)
    d = record.dim
    head = ["gen", "eval_start", "event", "sigma", "L", "d_V", "threshold_sq", *(f"m{i}" for i in range(d))]
    head += ["cov00", "cov01", "cov11", "radius_major", "radius_minor", "angle"] if d == 2 else [
        "radius_max", "radius_min"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(head)
        for k, g in enumerate(record.generations):
            event = ("init" if k == 0 else "restart") if g.new_run else ""
            row = [g.generation, g.eval_start, event, repr(float(g.sigma)), repr(float(g.length)), g.target_dim,
                   repr(float(g.threshold_sq)), *(repr(float(c)) for c in g.center)]
            vals, vecs = np.linalg.eigh(g.cov)
            radii = np.sqrt(g.threshold_sq * np.maximum(vals, 0.0))
            if d == 2:
                angle = math.atan2(vecs[1, 1], vecs[0, 1])
                row += [repr(float(g.cov[0, 0])), repr(float(g.cov[0, 1])), repr(float(g.cov[1, 1])),
                        repr(float(radii[1])), repr(float(radii[0])), repr(angle)]
            else:
                row += [repr(float(radii.max())), repr(float(radii.min()))]
            w.writerow(row)
    return path


emit_trajectory = write_trajectory


def write_meta(record: RunRecord, config: ExperimentConfig, seed: int, path) -> Path:
    """Non-deterministic companions (wall times) live here, never in the CSVs."""
    meta = {
        "method": record.method,
        "problem": record.problem,
        "seed": seed,
        "rng": RNG_NAME,
        "budget": record.budget,
        "n_evals": record.n_evals,
        "config": config.to_text(),
        "wall_time": record.wall_time,
        "generation_wall_times": [g.wall_time for g in record.generations],
    }
    Path(path).write_text(json.dumps(meta, indent=1))
    return Path(path)


@dataclass
class Summary:
    eval: np.ndarray
    mean_best: np.ndarray
    stderr_best: np.ndarray
    mean_dist: np.ndarray | None = None
    stderr_dist: np.ndarray | None = None
    label: str = ""


def _mean_stderr(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = np.mean(rows, axis=0)
    if rows.shape[0] < 2:
        return mean, np.zeros_like(mean)
    return mean, np.std(rows, axis=0, ddof=1) / math.sqrt(rows.shape[0])


def summarize_runs(run_files, problems=None, label: str = "") -> Summary:
    """Per-evaluation mean and standard error across per-run CSVs.

    ``problems`` (one per file) enables the distance-to-optimum columns; the
    distance is that of the point evaluated at each index.
    """
    runs = [read_run_csv(p) for p in run_files]
    if not runs:
        raise ValueError("no run files to summarize")
    lengths = {len(r["y"]) for r in runs}
    if len(lengths) != 1:
        raise ValueError(f"run files have different lengths: {sorted(lengths)}")
    mean_best, se_best = _mean_stderr(np.stack([r["best_y"] for r in runs]))
    mean_dist = se_dist = None
    if problems is not None and all(p.optimum is not None for p in problems):
        dists = np.stack([distance_to_optimum(r["x"], p) for r, p in zip(runs, problems)])
        mean_dist, se_dist = _mean_stderr(dists)
    return Summary(runs[0]["eval"], mean_best, se_best, mean_dist, se_dist, label)


def write_summary(summary: Summary, path) -> Path:
    path = Path(path)
    with_dist = summary.mean_dist is not None
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eval", "mean_best", "stderr_best"] + (["mean_dist", "stderr_dist"] if with_dist else []))
        for k in range(len(summary.eval)):
            row = [int(summary.eval[k]), repr(float(summary.mean_best[k])), repr(float(summary.stderr_best[k]))]
            if with_dist:
                row += [repr(float(summary.mean_dist[k])), repr(float(summary.stderr_dist[k]))]
            w.writerow(row)
    return path


def read_summary(path) -> Summary:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = {h: np.array([float(r[i]) for r in body]) for i, h in enumerate(header)}
    label = path.stem.removesuffix("_summary")
    return Summary(cols["eval"].astype(int), cols["mean_best"], cols["stderr_best"], cols.get("mean_dist"),
                   cols.get("stderr_dist"), label)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[RunRecord]
    problems: list[Problem]
    run_files: list[Path]
    summary: Summary
    summary_file: Path


def run_experiment(config: ExperimentConfig, progress=None) -> ExperimentResult:
    """Run every repeat, write per-run files, then summarize from those files."""
    out = Path(config.out)
    _check_writable(out)
    build_problem(config, config.base_seed)
    records, problems, files = [], [], []
    for seed in run_seeds(config):
        record, problem = run_single(config, seed)
        path = write_run_csv(record, run_path(out, config, seed))
        write_trajectory(record, path.with_name(path.stem + "_trajectory.csv"))
        write_meta(record, config, seed, path.with_name(path.stem + "_meta.json"))
        records.append(record)
        problems.append(problem)
        files.append(path)
        if progress is not None:
            progress(seed, record)
    summary = summarize_runs(files, problems, config.tag)
    summary_file = write_summary(summary, out / f"{config.tag}_summary.csv")
    (out / f"{config.tag}_config.txt").write_text(config.to_text())
    return ExperimentResult(config, records, problems, files, summary, summary_file)


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def emit_regret_svg(summaries, out, width: int = 640, height: int = 400, title: str = "") -> dict:
    """Mean best-so-far curves with shaded +/- standard error bands.

    ``summaries`` holds :class:`Summary` objects or summary CSV paths. Returns
    the plot geometry (data-to-pixel maps and per-series data) for inspection.
    """
    items = [s if isinstance(s, Summary) else read_summary(s) for s in summaries]
    if not items:
        raise ValueError("need at least one summary to plot")
    lengths = {len(s.eval) for s in items}
    if len(lengths) != 1 or any(not np.array_equal(s.eval, items[0].eval) for s in items):
        raise ValueError("summaries cover different evaluation budgets")
    margin_l, margin_r, margin_t, margin_b = 70, 150, 30, 45
    x = items[0].eval.astype(float)
    lo = min(float(np.min(s.mean_best - s.stderr_best)) for s in items)
    hi = max(float(np.max(s.mean_best + s.stderr_best)) for s in items)
    if hi - lo < 1e-12 * max(1.0, abs(hi)):
        lo, hi = lo - 0.5, hi + 0.5
    x0, x1 = float(x[0]), float(x[-1]) if x[-1] > x[0] else float(x[0]) + 1.0
    plot_w, plot_h = width - margin_l - margin_r, height - margin_t - margin_b

    def px(v):
        return margin_l + (np.asarray(v, dtype=float) - x0) / (x1 - x0) * plot_w

    def py(v):
        return margin_t + (hi - np.asarray(v, dtype=float)) / (hi - lo) * plot_h

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
             f'<rect x="{margin_l}" y="{margin_t}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>']
    for frac in np.linspace(0.0, 1.0, 5):
        yv, xv = hi - frac * (hi - lo), x0 + frac * (x1 - x0)
        parts.append(f'<text x="{margin_l - 6}" y="{py(yv):.2f}" font-size="10" text-anchor="end">{yv:.3g}</text>')
        parts.append(f'<text x="{px(xv):.2f}" y="{height - margin_b + 15}" font-size="10" '
                     f'text-anchor="middle">{xv:.0f}</text>')
    parts.append(f'<text x="{margin_l + plot_w / 2}" y="{height - 8}" font-size="12" '
                 f'text-anchor="middle">evaluations</text>')
    parts.append(f'<text x="14" y="{margin_t + plot_h / 2}" font-size="12" text-anchor="middle" '
                 f'transform="rotate(-90 14 {margin_t + plot_h / 2})">best value</text>')
    if title:
        parts.append(f'<text x="{margin_l + plot_w / 2}" y="18" font-size="13" text-anchor="middle">{title}</text>')

    series = []
    for k, s in enumerate(items):
        color = _PALETTE[k % len(_PALETTE)]
        label = s.label or f"series {k}"
        upper, lower = s.mean_best + s.stderr_best, s.mean_best - s.stderr_best
        band = " ".join(f"{a:.3f},{b:.3f}" for a, b in zip(px(x), py(upper)))
        band += " " + " ".join(f"{a:.3f},{b:.3f}" for a, b in zip(px(x)[::-1], py(lower)[::-1]))
        line = " ".join(f"{a:.3f},{b:.3f}" for a, b in zip(px(x), py(s.mean_best)))
        parts.append(f'<polygon class="band" points="{band}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        parts.append(f'<polyline class="mean" points="{line}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = margin_t + 16 * k + 10
        parts.append(f'<line x1="{width - margin_r + 10}" y1="{ly}" x2="{width - margin_r + 30}" y2="{ly}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text class="legend" x="{width - margin_r + 35}" y="{ly + 4}" font-size="11">{label}</text>')
        series.append({"label": label, "color": color, "x": x, "mean": s.mean_best.copy(),
                       "band_half_width": s.stderr_best.copy()})
    parts.append("</svg>")
    Path(out).write_text("\n".join(parts) + "\n")
    return {"x_range": (x0, x1), "y_range": (lo, hi), "px": px, "py": py, "series": series}


def parse_overrides(pairs: typing.Iterable[str]) -> dict[str, str]:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override must be key=value, got {pair!r}")
        k, v = pair.split("=", 1)
        out[k.strip()] = v.strip()
    return out

