"""Per-stage choice of the re-scaling ``Theta_j``.

Criteria: the leave-one-out shortcut ``e_i = alpha_i / (A^{-1})_ii``, k-fold
cross-validation, the profiled (RE)ML criterion, and a fixed scalar
``theta`` that caps the expected number of Gram nonzeros.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .design import fill_distance, separation_distance
from .errors import ArgumentError, CapabilityError, ConditioningError, MsemuError, SelectionError
from .kernel import Kernel, RescaledKernel, Rescaling
from .linalg import DENSE_CUTOFF, Factorization, assemble_gram, logdet_spd, solve_spd

CRITERIA = ("loo", "kfold", "ml", "reml", "fixed_sparsity")
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class SelectionSpec:
    """How to choose ``Theta_j`` at one stage.

    ``bounds`` is the ``(low, high)`` range of each re-scaling coordinate;
    ``None`` derives it from the stage design as ``[1/(10 h_X), 10/q_X]``.
    ``diagonal=None`` searches one coordinate per input for ``d <= 2`` and
    a scalar otherwise.
    """

    criterion: str = "loo"
    folds: int = 10
    seed: int = 0
    budget: float | None = None
    grid_size: int = 12
    bounds: tuple | None = None
    refine_steps: int = 20
    diagonal: bool | None = None

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise ArgumentError(f"unknown criterion {self.criterion!r}; choose from {CRITERIA}")
        if self.criterion == "kfold" and self.folds < 2:
            raise ArgumentError("k-fold cross-validation needs at least 2 folds")
        if self.criterion == "fixed_sparsity" and (self.budget is None or not self.budget > 0):
            raise ArgumentError("fixed_sparsity needs a positive budget")
        if self.grid_size < 1 or self.refine_steps < 0:
            raise ArgumentError("grid_size must be >= 1 and refine_steps >= 0")
        if self.bounds is not None:
            lo, hi = self.bounds
            if not (0 < lo <= hi < math.inf):
                raise ArgumentError(f"grid bounds must be positive and finite, got {self.bounds}")

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _kernel(base: Kernel, theta):
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    resc = Rescaling.scalar(float(theta[0])) if theta.size == 1 else Rescaling.diagonal(theta)
    return RescaledKernel(base, resc)


def _dense_gram(X, k):
    X = np.atleast_2d(X)
    if X.shape[0] > DENSE_CUTOFF:
        raise CapabilityError(
            f"the leave-one-out shortcut needs a dense inverse diagonal; n={X.shape[0]} exceeds "
            f"{DENSE_CUTOFF}, use k-fold cross-validation instead"
        )
    return assemble_gram(X, k, mode="dense")


def loo_errors(X, y, k: RescaledKernel, tol=1e-10):
    """Leave-one-out errors from one factorization: ``alpha_i / (A^{-1})_ii``.

    The full-data solve must reach relative residual ``tol``, so a kernel
    that scores well here can also be fitted.
    """
    y = np.asarray(y, dtype=float)
    A = _dense_gram(X, k)
    fac = Factorization(A)
    alpha = solve_spd(A, y, factor=fac, tol=tol).x
    binv = fac.inverse_diagonal()
    if not np.all(binv > 0) or not np.all(np.isfinite(alpha)):
        raise ConditioningError("inverse diagonal is not positive; Gram too ill-conditioned", A.hint())
    return alpha / binv


def kfold_score(X, y, k: RescaledKernel, folds=10, seed=0):
    """Mean squared held-out error of ``folds``-fold cross-validation."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    if folds < 2 or folds > n:
        raise ArgumentError(f"need 2 <= folds <= n, got folds={folds}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    sq = 0.0
    for held in np.array_split(perm, folds):
        keep = np.setdiff1d(perm, held, assume_unique=True)
        A = assemble_gram(X[keep], k)
        alpha = solve_spd(A, y[keep]).x
        K = k.cross(X[held], X[keep])
        sq += float(np.sum((y[held] - K @ alpha) ** 2))
    return sq / n


def ml_criterion(X, y, k: RescaledKernel, reml=False, n_prev=0):
    """``n_eff log(r' alpha / n_eff) + log det A`` (smaller is better).

    ``n_eff`` is ``n`` for ML and ``n - n_prev`` for REML.
    """
    y = np.asarray(y, dtype=float)
    A = assemble_gram(X, k)
    n_eff = A.n - n_prev if reml else A.n
    if n_eff < 1:
        raise ArgumentError("REML needs n > n_prev")
    fac = Factorization(A) if not A.is_sparse else None
    alpha = solve_spd(A, y, factor=fac).x
    quad = float(y @ alpha)
    if not quad > 0:
        raise ConditioningError(f"r' alpha = {quad:.3g} is not positive", A.hint())
    logdet = fac.logdet if fac is not None else logdet_spd(A)
    return n_eff * math.log(quad / n_eff) + logdet


def sparsity_theta(n, d, budget):
    """Scalar ``theta`` whose support ball keeps about ``budget`` Gram nonzeros.

    ``theta = (n^2 pi^{d/2} / (budget Gamma(d/2 + 1)))^{1/d}``.
    """
    if budget < n:
        raise ArgumentError(f"budget {budget:g} is below n={n}; the diagonal alone exceeds it")
    return (n * n * math.pi ** (d / 2) / (budget * math.gamma(d / 2 + 1))) ** (1.0 / d)


def default_bounds(X):
    X = np.atleast_2d(X)
    # a coarse candidate set is plenty for placing a search grid
    h = fill_distance(X, resolution=256 if X.shape[1] <= 2 else 32, n_candidates=2**14)
    q = separation_distance(X) if X.shape[0] >= 2 else h
    lo, hi = 1.0 / (10.0 * h), 10.0 / q
    return lo, max(hi, lo)


class _Scorer:
    def __init__(self, X, y, base, spec, n_prev):
        self.X, self.y, self.base, self.spec, self.n_prev = X, y, base, spec, n_prev
        self.trace = []
        self.cache = {}

    def __call__(self, theta):
        key = tuple(float(t) for t in np.atleast_1d(theta))
        if key in self.cache:
            return self.cache[key]
        k = _kernel(self.base, key)
        spec = self.spec
        failure = None
        try:
            if spec.criterion == "loo":
                score = float(np.mean(loo_errors(self.X, self.y, k) ** 2))
            elif spec.criterion == "kfold":
                score = kfold_score(self.X, self.y, k, spec.folds, spec.seed)
            else:
                score = ml_criterion(self.X, self.y, k, reml=spec.criterion == "reml", n_prev=self.n_prev)
            if not math.isfinite(score):
                raise ConditioningError("criterion is not finite")
        except CapabilityError:
            raise
        except MsemuError as exc:
            score, failure = math.inf, str(exc)
        self.cache[key] = score
        self.trace.append({"theta": list(key), "criterion": spec.criterion,
                           "score": score if math.isfinite(score) else None, "failures": failure})
        return score


def _better(a, b):
    """Is candidate ``a = (score, theta)`` preferred to ``b``?  Near-ties go to larger theta."""
    (sa, ta), (sb, tb) = a, b
    if not math.isfinite(sa):
        return False
    if not math.isfinite(sb):
        return True
    if abs(sa - sb) <= TIE_RTOL * max(abs(sa), abs(sb)):
        return float(np.sum(np.log(ta))) > float(np.sum(np.log(tb)))
    return sa < sb


def _golden(f, a, b, steps):
    """Golden-section minimization of ``f`` on ``[a, b]`` (log-theta scale)."""
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max(steps - 2, 0)):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)


def optimize_theta(X, y, base: Kernel, spec: SelectionSpec | None = None, n_prev=0):
    """Choose ``Theta`` for one stage.

    Evaluates the criterion on a log-spaced grid (one axis per re-scaled
    coordinate), then refines each coordinate by golden-section search
    inside the grid cells around the best point.

    Returns
    -------
    (Rescaling, list of dict)
        The chosen re-scaling and every evaluated ``{theta, criterion,
        score, failures}`` record, in evaluation order.
    """
    spec = spec or SelectionSpec()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if spec.criterion == "fixed_sparsity":
        theta = sparsity_theta(n, d, spec.budget)
        return Rescaling.scalar(theta), [{"theta": [theta], "criterion": "fixed_sparsity",
                                          "score": None, "failures": None}]
    diagonal = spec.diagonal if spec.diagonal is not None else d <= 2
    dims = d if diagonal else 1
    lo, hi = spec.bounds or default_bounds(X)
    grid = np.exp(np.linspace(math.log(lo), math.log(hi), spec.grid_size))
    score = _Scorer(X, y, base, spec, n_prev)
    best = (math.inf, np.full(dims, grid[-1]))
    for idx in np.ndindex(*([spec.grid_size] * dims)):
        theta = grid[list(idx)]
        cand = (score(theta), theta)
        if _better(cand, best):
            best = cand
    if not math.isfinite(best[0]):
        raise SelectionError("every grid point failed", [t["failures"] for t in score.trace])
    if spec.refine_steps > 0 and spec.grid_size > 1:
        step = (math.log(hi) - math.log(lo)) / (spec.grid_size - 1)
        for c in range(dims):
            centre = best[1].copy()
            t0 = math.log(centre[c])

            def f(logt, c=c, centre=centre):
                th = centre.copy()
                th[c] = math.exp(logt)
                return score(th)

            _golden(f, max(t0 - step, math.log(lo)), min(t0 + step, math.log(hi)), spec.refine_steps)
            for rec in score.trace:
                th = np.asarray(rec["theta"])
                s = rec["score"] if rec["score"] is not None else math.inf
                if _better((s, th), best):
                    best = (s, th)
    theta = best[1]
    resc = Rescaling.scalar(float(theta[0])) if dims == 1 else Rescaling.diagonal(theta)
    return resc, score.trace


def stage_selector(base, spec: SelectionSpec | None = None):
    """Adapter for ``multistep.fit``: choose each stage's re-scaling in turn.

    ``base`` is a Kernel used at every stage, or a callable ``j -> Kernel``.
    """
    spec = spec or SelectionSpec()

    def select(j, X_j, r, n_prev):
        kern = base(j) if callable(base) else base
        resc, trace = optimize_theta(X_j, r, kern, spec, n_prev)
        return RescaledKernel(kern, resc), trace

    return select
