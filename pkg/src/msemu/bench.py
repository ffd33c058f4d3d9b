"""Benchmark harness: MSPE against the number of stages on the built-in test functions."""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .design import Design, generate_net, nest, uniform_points
from .errors import ArgumentError, MsemuError, ResourceError
from .kernel import Kernel, RescaledKernel, Rescaling
from .linalg import MEMORY_BUDGET, estimate_nnz
from .multistep import fit
from .select import SelectionSpec, default_bounds, sparsity_theta, stage_selector
from .testfunctions import get_test_function

REPORT_VERSION = 1


@dataclass
class BenchConfig:
    function: str = "franke"
    base: int = 5
    m: int = 4
    s: int = 2
    seeds: tuple = (0,)
    stages: tuple = (250, 375, 500, 625)
    kernel: str = "wendland-smooth"
    criterion: str = "loo"
    budget: float | None = None
    grid_size: int = 12
    test_size: int = 1000
    test_seed_offset: int = 1000
    mode: str = "auto"
    memory_budget: float = MEMORY_BUDGET
    degenerate: bool = False  # near-duplicate cluster appended to the net prefix
    single_stage_grid: bool = False
    bounds_summary: bool = True

    def validate(self):
        f, dim = get_test_function(self.function)
        if dim is not None and dim != self.s:
            raise ArgumentError(f"{self.function} is {dim}-dimensional but s={self.s}")
        n = self.n_points
        st = list(self.stages)
        if not st or any(b <= a for a, b in zip(st, st[1:])) or st[-1] != n:
            raise ArgumentError(f"stage sizes {st} must increase strictly and end at n={n}")
        if self.kernel not in ("gaussian", "wendland-smooth", "wendland-rough"):
            raise ArgumentError(f"unsupported bench kernel {self.kernel!r}")
        SelectionSpec(self.criterion, budget=self.budget, grid_size=self.grid_size)
        return self

    @property
    def n_points(self):
        if self.degenerate:
            return DEGENERATE_BASE + DEGENERATE_DUPLICATES
        return self.base**self.m


DEGENERATE_BASE = 900
DEGENERATE_DUPLICATES = 25
DEGENERATE_SEPARATION = 5e-11

PRESETS = {
    "franke": dict(function="franke", base=5, m=4, s=2, stages=(250, 375, 500, 625),
                   kernel="wendland-smooth", criterion="loo", test_size=1000),
    "schwefel": dict(function="schwefel", base=5, m=6, s=5, stages=(3125, 6250, 15625),
                     kernel="wendland-rough", criterion="fixed_sparsity", budget=1e5,
                     test_size=2000, mode="sparse"),
    "schwefel-full": dict(function="schwefel", base=5, m=8, s=5, stages=(78125, 156250, 390625),
                          kernel="wendland-rough", criterion="fixed_sparsity", budget=1e7,
                          test_size=1000, mode="sparse"),
    "michalewicz": dict(function="michalewicz2d", base=5, m=5, s=2, stages=(900, 925),
                        kernel="gaussian", criterion="loo", test_size=2000, degenerate=True,
                        single_stage_grid=True),
}


def degenerate_design(seed=0, n_base=DEGENERATE_BASE, n_dup=DEGENERATE_DUPLICATES,
                      separation=DEGENERATE_SEPARATION):
    """Well-spread net prefix followed by near-copies of some of its points.

    The first ``n_base`` points of a base-5 (0, 5, 2)-net are kept; ``n_dup``
    of them are copied and moved by ``2 * separation`` in a random
    direction, so the full design has separation distance ``separation``.
    """
    base = generate_net(5, 5, 2, seed=seed).points[:n_base]
    rng = np.random.default_rng([seed, 1])
    idx = rng.choice(n_base, n_dup, replace=False)
    ang = rng.uniform(0.0, 2.0 * np.pi, n_dup)
    step = 2.0 * separation * np.c_[np.cos(ang), np.sin(ang)]
    dup = base[idx] + step
    # reflect moves that would leave the unit square
    out = (dup < 0) | (dup > 1)
    dup[out] = (base[idx] - step)[out]
    return Design(np.vstack([base, dup]))


def stage_schedules(stages):
    """Size lists for 1..J stages: ``stages[:J-1] + [n]``."""
    st = list(stages)
    return [st[: J - 1] + [st[-1]] for J in range(1, len(st) + 1)]


def _design(cfg: BenchConfig, seed):
    if cfg.degenerate:
        return degenerate_design(seed)
    return generate_net(cfg.base, cfg.m, cfg.s, seed=seed)


def _selector(cfg: BenchConfig):
    kern = Kernel(cfg.kernel, cfg.s)
    spec = SelectionSpec(cfg.criterion, budget=cfg.budget, grid_size=cfg.grid_size)
    return stage_selector(kern, spec)


def check_memory(cfg: BenchConfig):
    """Estimated stored entries per stage; raises ResourceError over ``memory_budget``."""
    est = []
    for n in cfg.stages:
        if cfg.criterion == "fixed_sparsity":
            th = sparsity_theta(n, cfg.s, cfg.budget)
            k = RescaledKernel(Kernel(cfg.kernel, cfg.s), Rescaling.scalar(th))
            e = estimate_nnz(n, k)
        else:
            e = float(n) * n
        est.append(e)
        if e > cfg.memory_budget:
            raise ResourceError(f"stage with n={n} needs about {e:.3g} entries, over the memory budget "
                                f"{cfg.memory_budget:.3g}", estimated_nnz=e)
    return est


def _run_one(args):
    cfg, seed, sizes = args
    f, _ = get_test_function(cfg.function)
    t0 = time.perf_counter()
    D = _design(cfg, seed)
    y = f(D.points)
    T = uniform_points(cfg.test_size, cfg.s, seed=seed + cfg.test_seed_offset)
    yt = f(T)
    rec = {"seed": seed, "J": len(sizes), "stage_sizes": list(sizes)}
    try:
        m = fit(nest(D.points, sizes), y, _selector(cfg), mode=cfg.mode, memory_budget=cfg.memory_budget)
        err = m.predict_batch(T) - yt
        mspe = float(np.mean(err**2))
        rec.update(status="ok", mspe=mspe, log10_mspe=math.log10(mspe) if mspe > 0 else None,
                   interp_max_abs=float(np.max(np.abs(m.predict_batch(D.points) - y))),
                   rescalings=[list(st.kernel.rescale.values) for st in m.stages],
                   storage=[st.info["storage"] for st in m.stages],
                   nnz=[st.info["nnz"] for st in m.stages],
                   iterations=[st.info["iterations"] for st in m.stages])
        if cfg.bounds_summary:
            rec["bounds"] = _bounds_summary(m)
    except MsemuError as exc:
        rec.update(status="failed", error=f"{type(exc).__name__}: {exc}")
    return rec, time.perf_counter() - t0


def _bounds_summary(m):
    from .bounds import log_lambda_min_lower
    from .design import separation_distance

    out = []
    for st in m.stages:
        X = m.points[: st.n]
        q = separation_distance(X)
        try:
            llo = log_lambda_min_lower(X, st.kernel, q=q)
        except MsemuError:
            llo = None
        out.append({"n": st.n, "q_X": q, "log_lam_min_lower": llo,
                    "log_kappa_upper": None if llo is None else math.log(st.n) - llo})
    return out


def single_stage_grid_best(cfg: BenchConfig, seed):
    """Best test-set MSPE of one-stage fits over a diagonal log grid of re-scalings.

    This uses the test set to choose, so it is an optimistic reference for
    the single-stage interpolator, not a selection procedure.
    """
    f, _ = get_test_function(cfg.function)
    D = _design(cfg, seed)
    y = f(D.points)
    T = uniform_points(cfg.test_size, cfg.s, seed=seed + cfg.test_seed_offset)
    yt = f(T)
    lo, hi = default_bounds(D.points)
    grid = np.exp(np.linspace(math.log(lo), math.log(hi), cfg.grid_size))
    base = Kernel(cfg.kernel, cfg.s)
    best, best_theta, failures = math.inf, None, 0
    for theta in np.ndindex(*([cfg.grid_size] * cfg.s)):
        th = grid[list(theta)]
        k = RescaledKernel(base, Rescaling.diagonal(th))
        try:
            m = fit(nest(D.points, [D.n]), y, [k], mode=cfg.mode)
        except MsemuError:
            failures += 1
            continue
        mspe = float(np.mean((m.predict_batch(T) - yt) ** 2))
        if mspe < best:
            best, best_theta = mspe, th.tolist()
    return {"seed": seed, "best_mspe": best if math.isfinite(best) else None,
            "theta": best_theta, "failures": failures, "grid_size": cfg.grid_size}


def run_bench(cfg: BenchConfig, jobs=1):
    """Run every (seed, stage count) fit.  Returns ``(report, timings)``.

    The report depends only on the configuration; wall-clock timings are
    returned separately so reports stay byte-identical across runs.
    """
    cfg.validate()
    est = check_memory(cfg)
    tasks = [(cfg, seed, sizes) for seed in cfg.seeds for sizes in stage_schedules(cfg.stages)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            out = list(ex.map(_run_one, tasks))
    else:
        out = [_run_one(t) for t in tasks]
    results = [r for r, _ in out]
    timings = [{"seed": r["seed"], "J": r["J"], "seconds": t} for r, t in out]
    summary = []
    for J in range(1, len(cfg.stages) + 1):
        vals = [r["mspe"] for r in results if r["J"] == J and r["status"] == "ok"]
        med = float(np.median(vals)) if vals else None
        summary.append({"J": J, "n_ok": len(vals), "median_mspe": med,
                        "log10_median_mspe": math.log10(med) if med else None})
    report = {"version": REPORT_VERSION, "config": _config_dict(cfg),
              "estimated_entries": est, "results": results, "summary": summary}
    if cfg.single_stage_grid:
        report["single_stage_grid"] = [single_stage_grid_best(cfg, s) for s in cfg.seeds]
    report["all_failed"] = all(r["status"] != "ok" for r in results)
    return report, timings


def _config_dict(cfg):
    d = asdict(cfg)
    d["seeds"] = list(cfg.seeds)
    d["stages"] = list(cfg.stages)
    d["test_seeds"] = [s + cfg.test_seed_offset for s in cfg.seeds]
    return d


def plot_rows(report):
    """Rows ``(J, seed, mspe, log10_mspe)`` for the plot-data CSV."""
    rows = []
    for r in report["results"]:
        if r["status"] == "ok":
            rows.append((r["J"], r["seed"], r["mspe"], r["log10_mspe"]))
    return rows


def preset(name, **overrides):
    if name not in PRESETS:
        raise ArgumentError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    cfg = BenchConfig(**PRESETS[name])
    return replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
