"""CMA-driven local Bayesian optimization and the comparison baselines.

All methods minimize a :class:`~cmabo.benchmarks.Problem` after rescaling its
box to [0, 1]^d. Evaluated points are recorded in the problem's original
coordinates. Every method follows the same outer structure: a Latin-hypercube
initial design of ``n0`` points, a local run, and a fresh initial design on
restart, all charged against the evaluation budget.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import gp
from .benchmarks import Problem, latin_hypercube, to_working_domain
from .cma import (
    CmaParams,
    RankedPopulation,
    RestartConfig,
    SearchDistribution,
    default_params,
    init_distribution,
    should_restart,
    update,
)
from .embedding import Embedding, identity_embedding, increase_dim, make_embedding, project_distribution, project_up
from .region import build_region, chi2_quantile, default_n_candidates, region_from_moments, region_radii, sample_candidates
from .trust import TrustScaleState, init_scale, is_improvement, record as record_outcome


@dataclass
class OptimizerConfig:
    alpha: float = 0.9973
    n_candidates: int | None = None
    max_candidates: int = 5000
    gp_restarts: int = 3
    gp_max_iter: int = 100
    gp_on_global: bool = False
    refit_every_point: bool = False
    refit_interval: int | None = None
    literal_chi2: bool = False
    canonical_sigma_path: bool = False
    length_init: float = 0.8
    length_min: float = 2.0**-7
    length_max: float = 1.6
    tau_succ: int = 3
    success_tol: float = 1e-3
    success_per_generation: bool = False
    bin_size: int = 3
    initial_target_dim: int = 2
    flat_generations: int | None = None
    flat_tol: float = 1e-9
    cond_max: float = 1e14
    sigma_min: float = 1e-8
    sigma_max_factor: float = 10.0
    popsize: int | None = None

    def restart_config(self) -> RestartConfig:
        return RestartConfig(self.flat_generations, self.flat_tol, self.cond_max, self.sigma_min,
                             self.sigma_max_factor)

    def n_candidates_for(self, d_c: int) -> int:
        if self.n_candidates is not None:
            return min(self.n_candidates, self.max_candidates)
        return default_n_candidates(d_c, self.max_candidates)


@dataclass
class GenerationLog:
    """State of the local region when a generation starts (original coordinates)."""

    generation: int
    eval_start: int
    center: np.ndarray
    cov: np.ndarray | None
    sigma: float
    length: float
    target_dim: int
    threshold_sq: float
    radii: np.ndarray | None
    new_run: bool
    wall_time: float
    embedding: Embedding | None = field(default=None, repr=False)


@dataclass
class RunRecord:
    method: str
    problem: str
    dim: int
    budget: int
    seed: int | None = None
    config: dict = field(default_factory=dict)
    points: list = field(default_factory=list, repr=False)
    working_points: list = field(default_factory=list, repr=False)
    values: list = field(default_factory=list, repr=False)
    best: list = field(default_factory=list, repr=False)
    gens: list = field(default_factory=list, repr=False)
    events: list = field(default_factory=list, repr=False)
    lengths: list = field(default_factory=list, repr=False)
    target_dims: list = field(default_factory=list, repr=False)
    latent: list = field(default_factory=list, repr=False)
    generations: list = field(default_factory=list, repr=False)
    final_mean: np.ndarray | None = None
    wall_time: float = 0.0

    @property
    def n_evals(self) -> int:
        return len(self.values)

    @property
    def best_value(self) -> float:
        return self.best[-1] if self.best else math.inf

    @property
    def best_point(self) -> np.ndarray:
        return self.points[int(np.argmin(self.values))]


class BudgetExhausted(Exception):
    pass


class _Tracker:
    """Budget-enforcing evaluator that appends every call to the run record."""

    def __init__(self, problem: Problem, budget: int, record: RunRecord):
        self.problem = problem
        self.budget = budget
        self.record = record
        self.start = time.perf_counter()

    @property
    def remaining(self) -> int:
        return self.budget - self.record.n_evals

    def __call__(self, u, gen: int, event: str = "", length: float = math.nan,
                 target_dim: int | None = None, latent=None) -> float:
        if self.record.n_evals >= self.budget:
            raise BudgetExhausted
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        y = self.problem(u)
        rec = self.record
        rec.working_points.append(u)
        rec.points.append(self.problem.to_original(u))
        rec.values.append(y)
        rec.best.append(min(y, rec.best[-1]) if rec.best else y)
        rec.gens.append(gen)
        rec.events.append(event)
        rec.lengths.append(length)
        rec.target_dims.append(self.problem.dim if target_dim is None else target_dim)
        rec.latent.append(None if latent is None else np.asarray(latent, dtype=float))
        return y

    def elapsed(self) -> float:
        return time.perf_counter() - self.start


def _new_record(method: str, problem: Problem, budget: int, config: OptimizerConfig, seed) -> RunRecord:
    return RunRecord(method, problem.name, problem.dim, budget, seed, asdict(config))


def _check_budget(budget: int, n0: int):
    if n0 < 2:
        raise ValueError(f"need n0 >= 2 initial points, got {n0}")
    if budget < n0:
        raise ValueError(f"budget {budget} smaller than the initial design n0={n0}")


def _map_cov(problem: Problem, cov: np.ndarray) -> np.ndarray:
    if problem.original is None:
        return cov
    span = problem.original.upper - problem.original.lower
    return cov * np.outer(span, span)


def _initial_design(track: _Tracker, n0: int, d: int, rng, gen: int, first: bool, **kw):
    X0 = latin_hypercube(n0, d, rng)
    ys = []
    for k, x in enumerate(X0):
        event = ("init" if first else "restart") if k == 0 else ""
        ys.append(track(x, gen, event, **kw))
    return X0, np.array(ys)


class _Surrogate:
    """Hyperparameter refits on demand; cheap re-conditioning in between."""

    def __init__(self, config: OptimizerConfig, rng: np.random.Generator):
        self.config = config
        self.rng = rng
        self.params: gp.KernelParams | None = None

    def model(self, X, y, refit: bool) -> gp.GpModel:
        obs = gp.ObservationSet.from_arrays(X, y)
        if refit or self.params is None or self.params.dim != obs.dim:
            init = self.params if self.params is not None and self.params.dim == obs.dim else None
            model = gp.fit(obs, restarts=self.config.gp_restarts, rng=self.rng,
                           max_iter=self.config.gp_max_iter, init=init)
            self.params = model.params
            return model
        return gp.build_model(obs, self.params)

    def reset(self):
        self.params = None


def _run_cma_region(problem: Problem, budget: int, n0: int, config: OptimizerConfig,
                    rng: np.random.Generator, method: str, use_trust: bool, seed=None) -> RunRecord:
    wp = to_working_domain(problem)
    _check_budget(budget, n0)
    d = wp.dim
    params = default_params(d, config.popsize)
    n_c = config.n_candidates_for(d)
    restart_cfg = config.restart_config()
    rec = _new_record(method, wp, budget, config, seed)
    track = _Tracker(wp, budget, rec)
    surrogate = _Surrogate(config, rng)
    all_X, all_y = [], []
    gen, first = 0, True
    dist = None
    try:
        while True:
            X0, y0 = _initial_design(track, n0, d, rng, gen, first,
                                     length=config.length_init if use_trust else 1.0)
            first = False
            all_X.extend(X0)
            all_y.extend(y0)
            dist = init_distribution(X0, y0)
            omega_X, omega_y = list(X0), list(y0)
            state = _fresh_scale(d, config) if use_trust else None
            best_local = float(np.min(y0))
            best_hist: list[float] = []
            surrogate.reset()
            new_run = True
            while True:
                if track.remaining <= 0:
                    raise BudgetExhausted
                length = state.length if use_trust else 1.0
                region = build_region(dist, length, config.alpha, config.literal_chi2)
                rec.generations.append(GenerationLog(
                    gen, rec.n_evals, wp.to_original(dist.mean), _map_cov(wp, region.eff_cov),
                    dist.step_size, length, d, region.threshold_sq, region_radii(region), new_run,
                    track.elapsed()))
                new_run = False
                pop_X, pop_y = [], []
                best_before = best_local
                for i in range(params.lam):
                    X_train, y_train = (all_X, all_y) if config.gp_on_global else (omega_X, omega_y)
                    model = surrogate.model(X_train, y_train, refit=(i == 0 or config.refit_every_point))
                    cand = sample_candidates(region, n_c, rng)
                    x = cand[gp.thompson_select(model, cand, rng, config.max_candidates)]
                    y = track(x, gen, length=length)
                    pop_X.append(x)
                    pop_y.append(y)
                    omega_X.append(x)
                    omega_y.append(y)
                    all_X.append(x)
                    all_y.append(y)
                    if use_trust and not config.success_per_generation:
                        state = record_outcome(state, is_improvement(y, best_local, config.success_tol))
                    best_local = min(best_local, y)
                    if use_trust and state.needs_restart:
                        break
                if len(pop_X) == params.lam:
                    dist = update(dist, params, RankedPopulation.from_evaluations(pop_X, pop_y),
                                  config.canonical_sigma_path)
                if use_trust and config.success_per_generation:
                    state = record_outcome(state, is_improvement(min(pop_y), best_before, config.success_tol))
                gen += 1
                best_hist.append(best_local)
                if (use_trust and state.needs_restart) or should_restart(dist, params, best_hist, restart_cfg, 0.3):
                    break
    except BudgetExhausted:
        pass
    rec.final_mean = None if dist is None else wp.to_original(dist.mean)
    rec.wall_time = track.elapsed()
    return rec


def _fresh_scale(d: int, config: OptimizerConfig) -> TrustScaleState:
    return init_scale(d, 1, config.length_init, config.length_min, config.length_max, config.tau_succ)


def run_cma_bo(problem: Problem, budget: int, n0: int = 20, config: OptimizerConfig | None = None,
               rng: np.random.Generator | None = None, seed=None) -> RunRecord:
    """CMA-BO: Thompson sampling inside the confidence ellipsoid of the CMA distribution."""
    config = config or OptimizerConfig()
    rng = rng if rng is not None else np.random.default_rng(seed)
    return _run_cma_region(problem, budget, n0, config, rng, "cma-bo", False, seed)


def run_cma_turbo(problem: Problem, budget: int, n0: int = 20, config: OptimizerConfig | None = None,
                  rng: np.random.Generator | None = None, seed=None) -> RunRecord:
    """CMA-TuRBO: the ellipsoid is additionally scaled by a success-driven factor L.

    The local run restarts at a random new location once L halves below its
    minimum; the interrupted generation is dropped without a CMA update.
    """
    config = config or OptimizerConfig()
    rng = rng if rng is not None else np.random.default_rng(seed)
    return _run_cma_region(problem, budget, n0, config, rng, "cma-turbo", True, seed)


def run_cma_baxus(problem: Problem, budget: int, n0: int = 20, config: OptimizerConfig | None = None,
                  rng: np.random.Generator | None = None, seed=None) -> RunRecord:
    """CMA-BAxUS: CMA in the input space, BO in a growing sparse target space.

    The CMA distribution lives on the centered box [-1, 1]^d; each generation
    it is pushed into the target space, where candidates are sampled and the
    GP is trained. A collapsed trust scale below full dimension splits the
    target space (observations carried over); at full dimension the run
    restarts with the identity embedding.
    """
    config = config or OptimizerConfig()
    rng = rng if rng is not None else np.random.default_rng(seed)
    wp = to_working_domain(problem)
    _check_budget(budget, n0)
    d = wp.dim
    params = default_params(d, config.popsize)
    restart_cfg = config.restart_config()
    rec = _new_record("cma-baxus", wp, budget, config, seed)
    track = _Tracker(wp, budget, rec)
    surrogate = _Surrogate(config, rng)
    d_v0 = min(max(config.initial_target_dim, 1), d)
    emb = identity_embedding(d, config.bin_size) if d_v0 == d else make_embedding(d, d_v0, rng, config.bin_size)
    sigma0 = 0.3 * 2.0
    all_U, all_y = [], []
    gen, first = 0, True
    dist = None

    def to_unit(u):
        return 0.5 * (np.asarray(u) + 1.0)

    try:
        while True:
            V0 = 2.0 * latin_hypercube(n0, emb.target_dim, rng) - 1.0
            U0 = project_up(emb, V0)
            y0 = []
            for k, (v, u) in enumerate(zip(V0, U0)):
                event = ("init" if first else "restart") if k == 0 else ""
                y0.append(track(to_unit(u), gen, event, config.length_init, emb.target_dim, v))
            first = False
            y0 = np.array(y0)
            all_U.extend(U0)
            all_y.extend(y0)
            dist = init_distribution(U0, y0, domain_length=2.0)
            omega_V, omega_y = np.array(V0), list(y0)
            state = _fresh_scale(emb.target_dim, config)
            best_local = float(np.min(y0))
            best_hist: list[float] = []
            surrogate.reset()
            new_run, full_restart = True, False
            while True:
                if track.remaining <= 0:
                    raise BudgetExhausted
                length = state.length
                m_v, S_v = project_distribution(emb, dist.mean, dist.covariance)
                region = region_from_moments(m_v, S_v, length, config.alpha, config.literal_chi2)
                rec.generations.append(GenerationLog(
                    gen, rec.n_evals, wp.to_original(to_unit(dist.mean)),
                    _map_cov(wp, 0.25 * length**2 * dist.covariance), dist.step_size, length,
                    emb.target_dim, region.threshold_sq, region_radii(region), new_run, track.elapsed(), emb))
                new_run = False
                n_c = config.n_candidates_for(emb.target_dim)
                pop_U, pop_y = [], []
                best_before = best_local
                for i in range(params.lam):
                    if config.gp_on_global:
                        V_train, y_train = np.asarray(all_U) @ emb.P.T, all_y
                    else:
                        V_train, y_train = omega_V, omega_y
                    model = surrogate.model(to_unit(V_train), y_train,
                                            refit=(i == 0 or config.refit_every_point))
                    cand = sample_candidates(region, n_c, rng, -1.0, 1.0)
                    v = cand[gp.thompson_select(model, to_unit(cand), rng, config.max_candidates)]
                    u = project_up(emb, v)
                    y = track(to_unit(u), gen, length=length, target_dim=emb.target_dim, latent=v)
                    pop_U.append(u)
                    pop_y.append(y)
                    omega_V = np.vstack([omega_V, v])
                    omega_y.append(y)
                    all_U.append(u)
                    all_y.append(y)
                    if not config.success_per_generation:
                        state = record_outcome(state, is_improvement(y, best_local, config.success_tol))
                    best_local = min(best_local, y)
                    if state.needs_restart:
                        break
                if len(pop_U) == params.lam:
                    dist = update(dist, params, RankedPopulation.from_evaluations(pop_U, pop_y),
                                  config.canonical_sigma_path)
                if config.success_per_generation:
                    state = record_outcome(state, is_improvement(min(pop_y), best_before, config.success_tol))
                gen += 1
                best_hist.append(best_local)
                if state.needs_restart:
                    if emb.target_dim < d:
                        emb, omega_V = increase_dim(emb, omega_V, rng)
                        state = _fresh_scale(emb.target_dim, config)
                        surrogate.reset()
                        rec.events[-1] = rec.events[-1] or "split"
                        continue
                    emb = identity_embedding(d, config.bin_size)
                    full_restart = True
                if full_restart or should_restart(dist, params, best_hist, restart_cfg, sigma0):
                    break
    except BudgetExhausted:
        pass
    rec.final_mean = None if dist is None else wp.to_original(to_unit(dist.mean))
    rec.wall_time = track.elapsed()
    return rec


def uniform_candidates(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    return rng.random((n, d))


def run_baseline_bo(problem: Problem, budget: int, n0: int = 20, config: OptimizerConfig | None = None,
                    rng: np.random.Generator | None = None, seed=None) -> RunRecord:
    """Global Thompson-sampling BO over uniform candidates in the whole box."""
    config = config or OptimizerConfig()
    rng = rng if rng is not None else np.random.default_rng(seed)
    wp = to_working_domain(problem)
    _check_budget(budget, n0)
    d = wp.dim
    interval = config.refit_interval or default_params(d, config.popsize).lam
    n_c = config.n_candidates_for(d)
    rec = _new_record("bo", wp, budget, config, seed)
    track = _Tracker(wp, budget, rec)
    surrogate = _Surrogate(config, rng)
    try:
        X0, y0 = _initial_design(track, n0, d, rng, 0, True)
        X, y = list(X0), list(y0)
        step = 0
        while True:
            gen = step // interval
            model = surrogate.model(X, y, refit=(step % interval == 0 or config.refit_every_point))
            cand = uniform_candidates(n_c, d, rng)
            x = cand[gp.thompson_select(model, cand, rng, config.max_candidates)]
            X.append(x)
            y.append(track(x, gen))
            step += 1
    except BudgetExhausted:
        pass
    rec.wall_time = track.elapsed()
    return rec


def turbo_box(center: np.ndarray, lengthscales: np.ndarray, length: float) -> tuple[np.ndarray, np.ndarray]:
    """Volume-preserving lengthscale-weighted hyper-rectangle, clipped to [0, 1]^d.

    Before clipping, the side lengths multiply to ``length ** d``.
    """
    w = lengthscales / np.mean(lengthscales)
    w = w / np.prod(np.power(w, 1.0 / len(w)))
    lo = np.clip(center - 0.5 * length * w, 0.0, 1.0)
    hi = np.clip(center + 0.5 * length * w, 0.0, 1.0)
    return lo, hi


def run_baseline_turbo(problem: Problem, budget: int, n0: int = 20, config: OptimizerConfig | None = None,
                       rng: np.random.Generator | None = None, seed=None) -> RunRecord:
    """Single trust-region TuRBO with Thompson sampling and restarts.

    The rectangle is centered at the incumbent of the current local run; the
    GP sees only that run's data.
    """
    config = config or OptimizerConfig()
    rng = rng if rng is not None else np.random.default_rng(seed)
    wp = to_working_domain(problem)
    _check_budget(budget, n0)
    d = wp.dim
    interval = config.refit_interval or default_params(d, config.popsize).lam
    n_c = config.n_candidates_for(d)
    rec = _new_record("turbo", wp, budget, config, seed)
    track = _Tracker(wp, budget, rec)
    surrogate = _Surrogate(config, rng)
    gen, first = 0, True
    try:
        while True:
            X0, y0 = _initial_design(track, n0, d, rng, gen, first, length=config.length_init)
            first = False
            X, y = list(X0), list(y0)
            state = _fresh_scale(d, config)
            best_local = float(np.min(y0))
            surrogate.reset()
            step = 0
            while not state.needs_restart:
                if track.remaining <= 0:
                    raise BudgetExhausted
                refit = step % interval == 0 or config.refit_every_point
                model = surrogate.model(X, y, refit)
                center = X[int(np.argmin(y))]
                lo, hi = turbo_box(center, model.params.lengthscales, state.length)
                if step % interval == 0:
                    rec.generations.append(GenerationLog(
                        gen, rec.n_evals, wp.to_original(center), _map_cov(wp, np.diag(((hi - lo) / 2) ** 2)),
                        math.nan, state.length, d, 1.0, np.sort((hi - lo) / 2)[::-1], step == 0,
                        track.elapsed()))
                cand = lo + (hi - lo) * rng.random((n_c, d))
                x = cand[gp.thompson_select(model, cand, rng, config.max_candidates)]
                val = track(x, gen, length=state.length)
                X.append(x)
                y.append(val)
                state = record_outcome(state, is_improvement(val, best_local, config.success_tol))
                best_local = min(best_local, val)
                step += 1
                if step % interval == 0:
                    gen += 1
            gen += 1
    except BudgetExhausted:
        pass
    rec.wall_time = track.elapsed()
    return rec


def run_baseline_cmaes(problem: Problem, budget: int, n0: int = 20, config: OptimizerConfig | None = None,
                       rng: np.random.Generator | None = None, seed=None) -> RunRecord:
    """Plain CMA-ES with restarts: random sampling from N(m, sigma^2 C), no surrogate."""
    config = config or OptimizerConfig()
    rng = rng if rng is not None else np.random.default_rng(seed)
    wp = to_working_domain(problem)
    _check_budget(budget, n0)
    d = wp.dim
    params = default_params(d, config.popsize)
    restart_cfg = config.restart_config()
    q = chi2_quantile(config.alpha, d)
    rec = _new_record("cma-es", wp, budget, config, seed)
    track = _Tracker(wp, budget, rec)
    gen, first = 0, True
    dist = None
    try:
        while True:
            X0, y0 = _initial_design(track, n0, d, rng, gen, first)
            first = False
            dist = init_distribution(X0, y0)
            best_local = float(np.min(y0))
            best_hist: list[float] = []
            new_run = True
            while True:
                if track.remaining <= 0:
                    raise BudgetExhausted
                rec.generations.append(GenerationLog(
                    gen, rec.n_evals, wp.to_original(dist.mean), _map_cov(wp, dist.covariance),
                    dist.step_size, 1.0, d, q, None, new_run, track.elapsed()))
                new_run = False
                pop = np.clip(dist.sample(params.lam, rng), 0.0, 1.0)
                vals = [track(x, gen) for x in pop]
                dist = update(dist, params, RankedPopulation.from_evaluations(pop, vals),
                              config.canonical_sigma_path)
                best_local = min(best_local, min(vals))
                best_hist.append(best_local)
                gen += 1
                if should_restart(dist, params, best_hist, restart_cfg, 0.3):
                    break
    except BudgetExhausted:
        pass
    rec.final_mean = None if dist is None else wp.to_original(dist.mean)
    rec.wall_time = track.elapsed()
    return rec


METHODS = {
    "cma-bo": run_cma_bo,
    "cma-turbo": run_cma_turbo,
    "cma-baxus": run_cma_baxus,
    "bo": run_baseline_bo,
    "turbo": run_baseline_turbo,
    "cma-es": run_baseline_cmaes,
}


def run_method(method: str, problem: Problem, budget: int, n0: int = 20,
               config: OptimizerConfig | None = None, rng: np.random.Generator | None = None,
               seed=None) -> RunRecord:
    try:
        fn = METHODS[method]
    except KeyError:
        raise KeyError(f"unknown method {method!r}; choose from {sorted(METHODS)}") from None
    return fn(problem, budget, n0, config, rng, seed)
