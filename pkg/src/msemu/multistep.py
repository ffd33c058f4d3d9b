"""Multi-step residual interpolation.

Stage ``j`` interpolates what the earlier stages left over on the nested
prefix ``X_j``::

    A_j alpha^j = (y - P^1 - ... - P^{j-1})|_{X_j}
    P(x) = sum_j sum_u alpha^j_u Phi_j(x - x_u)

Each stage is solved as a linear system; ``A_j^{-1}`` is never formed.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .design import NestedDesign, nest
from .errors import ArgumentError, FitError, FormatError, MsemuError, StateError
from .kernel import RescaledKernel
from .linalg import (
    DENSE_CUTOFF,
    MEMORY_BUDGET,
    Factorization,
    GramMatrix,
    assemble_gram,
    cross_matrix,
    kernel_combination,
    solve_spd,
)

logger = logging.getLogger(__name__)

MODEL_VERSION = 1

# selector(j, X_j, residuals, n_prev) -> RescaledKernel or (RescaledKernel, trace)
StageSelector = Callable[[int, np.ndarray, np.ndarray, int], object]


@dataclass
class StageModel:
    j: int
    kernel: RescaledKernel
    n: int
    alpha: np.ndarray
    sigma2: float
    residual_norm: float
    info: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "j": self.j,
            "kernel": self.kernel.to_dict(),
            "rescale": self.kernel.rescale.to_dict(),
            "n": self.n,
            "alpha": [float(a) for a in self.alpha],
            "sigma2": float(self.sigma2),
            "residual_norm": float(self.residual_norm),
            "info": self.info,
        }


@dataclass
class PredictiveDistribution:
    mean: np.ndarray
    variance: np.ndarray
    clamped: np.ndarray  # True where a negative variance was set to 0


class MultiStepModel:
    """A fitted multi-step interpolator (immutable after ``fit``)."""

    def __init__(self, nd: NestedDesign, y, stages: Sequence[StageModel], fit_meta=None, design_ref=None):
        self.nd = nd
        self.y = np.asarray(y, dtype=float)
        self.stages = list(stages)
        self.fit_meta = dict(fit_meta or {})
        self.design_ref = design_ref
        self._grams: dict[int, GramMatrix] = {}
        self._factors: dict[int, Factorization] = {}

    @property
    def J(self):
        return len(self.stages)

    @property
    def d(self):
        return self.nd.design.d

    @property
    def points(self):
        return self.nd.points

    @property
    def stage_sizes(self):
        return tuple(self.nd.stage_sizes)

    def _check_fitted(self):
        if not self.stages:
            raise StateError("model has no fitted stages")

    def _probes(self, x):
        x = np.asarray(x, dtype=float)
        P = np.atleast_2d(x)
        if x.ndim == 1 and self.d != 1 and x.shape[0] != self.d:
            raise ArgumentError(f"point has dimension {x.shape[0]}, model expects {self.d}")
        if x.ndim == 1 and self.d == 1 and x.shape[0] != 1:
            P = x[:, None]
        if P.shape[1] != self.d:
            raise ArgumentError(f"points have dimension {P.shape[1]}, model expects {self.d}")
        return P, x.ndim == 1 and x.shape[0] == self.d

    def stage_values(self, x):
        """``(J, m)`` array of the per-stage interpolants at ``m`` probes."""
        self._check_fitted()
        P, _ = self._probes(x)
        out = np.empty((self.J, P.shape[0]))
        for i, st in enumerate(self.stages):
            out[i] = kernel_combination(st.kernel, self.points[: st.n], st.alpha, P)
        return out

    def predict(self, x):
        """Sum of the stage interpolants; scalar for a single point, else an array."""
        P, single = self._probes(x)
        v = self.stage_values(P).sum(axis=0)
        return float(v[0]) if single else v

    def predict_batch(self, X):
        return self.stage_values(X).sum(axis=0)

    # -- predictive variance ------------------------------------------------

    def _stage_gram(self, i):
        if i not in self._grams:
            st = self.stages[i]
            mode = self.fit_meta.get("mode", "auto")
            budget = self.fit_meta.get("memory_budget", MEMORY_BUDGET)
            self._grams[i] = assemble_gram(self.points[: st.n], st.kernel, mode=mode, memory_budget=budget)
        return self._grams[i]

    def _stage_solve_many(self, i, B):
        A = self._stage_gram(i)
        if not A.is_sparse:
            if i not in self._factors:
                self._factors[i] = Factorization(A, jitter=self.fit_meta.get("jitter", False))
            return self._factors[i].solve(B)
        tol = self.fit_meta.get("tol", 1e-10)
        return np.column_stack([solve_spd(A, B[:, c], tol=tol).x for c in range(B.shape[1])])

    def predict_with_variance(self, x, chunk=256):
        """Predictive mean and plug-in variance by backward recursion over stages.

        On ``X~ = X_J + {x}`` the conditional mean of ``f(x)`` is written as
        ``w' Z_k`` with one shared weight ``w = (u, 1)`` for every remaining
        stage.  Integrating out stage ``j`` adds
        ``sigma_j^2 (w' G~_j w - (K_j w)' A_j^{-1} (K_j w))`` and replaces
        ``u`` by ``u - A_j^{-1} K_j w`` on ``X_j``.
        """
        self._check_fitted()
        P, single = self._probes(x)
        nJ = self.stages[-1].n
        XJ = self.points[:nJ]
        mean = self.predict_batch(P)
        var = np.zeros(P.shape[0])
        grams_J = {}
        for s in range(0, P.shape[0], chunk):
            Q = P[s:s + chunk]
            m = Q.shape[0]
            U = np.zeros((nJ, m))
            v = np.zeros(m)
            for i in range(self.J - 1, -1, -1):
                st = self.stages[i]
                g = cross_matrix(st.kernel, XJ, Q)
                g = g.toarray() if hasattr(g, "toarray") else g
                if i == self.J - 1:
                    GU = np.zeros((nJ, m))
                else:
                    if i not in grams_J:
                        grams_J[i] = assemble_gram(XJ, st.kernel, mode=self.fit_meta.get("mode", "auto"),
                                                   memory_budget=self.fit_meta.get("memory_budget", MEMORY_BUDGET))
                    GU = grams_J[i].matvec(U)
                Kw = GU[: st.n] + g[: st.n]
                quad = np.einsum("ij,ij->j", U, GU) + 2.0 * np.einsum("ij,ij->j", g, U) + st.kernel.phi_zero()
                S = self._stage_solve_many(i, Kw)
                v += st.sigma2 * (quad - np.einsum("ij,ij->j", Kw, S))
                U[: st.n] -= S
            var[s:s + chunk] = v
        clamped = var < 0
        if np.any(clamped):
            logger.debug("clamped %d negative variances (min %.3g)", clamped.sum(), var.min())
        var = np.where(clamped, 0.0, var)
        if single:
            return PredictiveDistribution(mean[:1], var[:1], clamped[:1])
        return PredictiveDistribution(mean, var, clamped)

    def residual_trace(self):
        """Per-stage residual vectors ``(y - sum_{k<j} P^k)|_{X_j}`` and their norms."""
        self._check_fitted()
        XJ = self.points[: self.stages[-1].n]
        cum = np.zeros(XJ.shape[0])
        out = []
        for st in self.stages:
            r = self.y[: st.n] - cum[: st.n]
            out.append({"stage": st.j, "residual": r, "norm": float(np.linalg.norm(r))})
            cum += kernel_combination(st.kernel, self.points[: st.n], st.alpha, XJ)
        return out

    def to_dict(self):
        return {
            "version": MODEL_VERSION,
            "design_ref": self.design_ref,
            "stage_sizes": list(self.stage_sizes),
            "points": self.points.tolist(),
            "y": [float(v) for v in self.y],
            "stages": [st.to_dict() for st in self.stages],
            "fit_meta": self.fit_meta,
        }


def _stage_kernel(kernels, j, X_j, r, n_prev):
    if callable(kernels):
        out = kernels(j, X_j, r, n_prev)
        if isinstance(out, tuple):
            return out
        return out, None
    return kernels[j - 1], None


def fit(nd: NestedDesign, y, kernels, *, tol=1e-10, mode="auto", jitter=False, reml=False,
        dense_cutoff=DENSE_CUTOFF, memory_budget=MEMORY_BUDGET, design_ref=None) -> MultiStepModel:
    """Fit the multi-step interpolator on a nested design.

    Parameters
    ----------
    nd : NestedDesign
        Nested prefixes ``X_1 < ... < X_J``.
    y : array of length ``n_J``
        Observed values.
    kernels : list of RescaledKernel, or callable
        One kernel per stage, or ``selector(j, X_j, residuals, n_prev)``
        returning a kernel (optionally with a selection trace) for stage ``j``.
    reml : bool
        Divide ``r'alpha`` by ``n_j - n_{j-1}`` instead of ``n_j``.

    Raises
    ------
    FitError
        A stage failed to assemble or solve; carries the stage index and the
        conditioning diagnostics.
    """
    if not isinstance(nd, NestedDesign):
        nd = nest(nd, [len(nd)])
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != nd.design.n:
        raise ArgumentError(f"got {y.shape[0]} values for {nd.design.n} design points")
    if not np.all(np.isfinite(y)):
        raise ArgumentError("values must be finite")
    if not callable(kernels) and len(kernels) != nd.J:
        raise ArgumentError(f"{len(kernels)} kernels supplied for {nd.J} stages")
    X = nd.points
    stages = []
    cum = np.zeros(X.shape[0])
    meta = {"tol": tol, "mode": mode, "jitter": jitter, "reml": reml,
            "memory_budget": memory_budget, "stages": [], "selection": []}
    n_prev = 0
    for j in range(1, nd.J + 1):
        n_j = nd.stage_sizes[j - 1]
        X_j = X[:n_j]
        r = y[:n_j] - cum[:n_j]
        try:
            k, trace = _stage_kernel(kernels, j, X_j, r, n_prev)
            if k.d != nd.design.d:
                raise ArgumentError(f"stage {j} kernel has dimension {k.d}, design has {nd.design.d}")
            A = assemble_gram(X_j, k, mode=mode, dense_cutoff=dense_cutoff, memory_budget=memory_budget)
            rep = solve_spd(A, r, tol=tol, jitter=jitter)
        except ArgumentError:
            raise
        except MsemuError as exc:
            diag = getattr(exc, "diagnostics", None) or {}
            raise FitError(f"stage {j} failed: {exc}", stage=j, diagnostics=diag) from exc
        alpha = rep.x
        n_eff = n_j - n_prev if reml else n_j
        sigma2 = max(float(r @ alpha) / n_eff, 0.0)
        info = {"storage": "sparse" if A.is_sparse else "dense", "nnz": int(A.nnz), **rep.to_dict()}
        stages.append(StageModel(j, k, n_j, alpha, sigma2, float(np.linalg.norm(r)), info))
        meta["stages"].append(info)
        if trace is not None:
            meta["selection"].append({"stage": j, "trace": trace})
        if j < nd.J:
            cum += kernel_combination(k, X_j, alpha, X)
        n_prev = n_j
    return MultiStepModel(nd, y, stages, meta, design_ref)


def save_model(m: MultiStepModel, path):
    with open(path, "w") as fh:
        json.dump(m.to_dict(), fh, indent=1)
        fh.write("\n")


def model_from_dict(obj) -> MultiStepModel:
    if not isinstance(obj, dict) or "version" not in obj:
        raise FormatError("not a model file (missing version)")
    if obj["version"] != MODEL_VERSION:
        raise FormatError(f"model version {obj['version']!r} is incompatible with this library (expects {MODEL_VERSION})")
    try:
        pts = np.asarray(obj["points"], dtype=float)
        nd = nest(pts, obj["stage_sizes"])
        stages = []
        for s in obj["stages"]:
            k = RescaledKernel.from_dict(s["kernel"])
            stages.append(StageModel(int(s["j"]), k, int(s["n"]), np.asarray(s["alpha"], dtype=float),
                                     float(s["sigma2"]), float(s["residual_norm"]), dict(s.get("info", {}))))
        if len(stages) != nd.J or any(st.n != n for st, n in zip(stages, nd.stage_sizes)):
            raise FormatError("stage records do not match stage_sizes")
        return MultiStepModel(nd, obj["y"], stages, obj.get("fit_meta", {}), obj.get("design_ref"))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"malformed model: {exc}") from exc


def load_model(path) -> MultiStepModel:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    return model_from_dict(obj)


def predict(m: MultiStepModel, x):
    return m.predict(x)


def predict_with_variance(m: MultiStepModel, x):
    return m.predict_with_variance(x)


def residual_trace(m: MultiStepModel):
    return m.residual_trace()
