"""Gram matrices and the symmetric positive-definite algebra built on them."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from .errors import ArgumentError, CapabilityError, ConditioningError, InfeasibleError, ResourceError
from .kernel import RescaledKernel

logger = logging.getLogger(__name__)

DENSE_CUTOFF = 4000
MEMORY_BUDGET = 5e7  # stored matrix entries
JITTER_SCALE = 1e-10


@dataclass(eq=False)
class GramMatrix:
    """Interpolation matrix ``{Phi(x_u - x_v)}``.

    Dense matrices are stored in full.  Sparse matrices keep only the upper
    triangle (diagonal included) in CSR form; ``nnz`` counts the nonzeros of
    the full symmetric matrix.
    """

    n: int
    kernel: RescaledKernel
    dense: np.ndarray | None = None
    upper: sp.csr_matrix | None = None
    points: np.ndarray | None = field(default=None, repr=False)

    @property
    def is_sparse(self):
        return self.upper is not None

    @property
    def nnz(self):
        if self.is_sparse:
            return 2 * self.upper.nnz - self.n
        return int(np.count_nonzero(self.dense))

    @property
    def phi0(self):
        return self.kernel.phi_zero()

    def matvec(self, v):
        if not self.is_sparse:
            return self.dense @ v
        U = self.upper
        out = U @ v + U.T @ v
        diag = U.diagonal()
        return out - (diag[:, None] * v if np.ndim(v) == 2 else diag * v)

    def diagonal(self):
        return self.upper.diagonal() if self.is_sparse else np.diag(self.dense).copy()

    def full_sparse(self):
        """Symmetric CSC matrix (sparse storage only)."""
        if not self.is_sparse:
            return sp.csc_matrix(self.dense)
        U = self.upper
        return (U + U.T - sp.diags(U.diagonal())).tocsc()

    def toarray(self):
        return self.dense if not self.is_sparse else self.full_sparse().toarray()

    def gershgorin_cap(self):
        return self.n * self.phi0

    def hint(self):
        diag = {"n": self.n, "gershgorin_cap": self.gershgorin_cap()}
        if self.points is not None and self.n >= 2:
            from .design import separation_distance

            diag["q_X"] = separation_distance(self.points)
        return diag


def _unit_ball_volume(d):
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def estimate_nnz(n, k: RescaledKernel):
    """Expected nonzeros of the Gram matrix on ``n`` uniform points (edge effects ignored)."""
    if not k.is_compact:
        return float(n) * n
    frac = _unit_ball_volume(k.d) * math.exp(-k.rescale.log_abs_det(k.d))
    return n + n * (n - 1.0) * min(1.0, frac)


def assemble_gram(X, k: RescaledKernel, mode="auto", dense_cutoff=DENSE_CUTOFF, memory_budget=MEMORY_BUDGET):
    """Assemble ``A_{X,Phi} = {Phi_Theta(x_u - x_v)}``.

    ``mode`` is ``"dense"``, ``"sparse"`` or ``"auto"`` (sparse when the
    kernel is compactly supported and ``n > dense_cutoff``).  Sparse assembly
    stores exactly the pairs with ``||Theta (x_u - x_v)|| < 1``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    if mode not in ("auto", "dense", "sparse"):
        raise ArgumentError(f"unknown assembly mode {mode!r}")
    if mode == "auto":
        mode = "sparse" if (k.is_compact and n > dense_cutoff) else "dense"
    if mode == "sparse" and not k.is_compact:
        raise ArgumentError("sparse assembly requires a compactly supported kernel")
    est = float(n) * n if mode == "dense" else estimate_nnz(n, k)
    if est > memory_budget:
        raise ResourceError(
            f"{mode} Gram matrix needs about {est:.3g} stored entries, over the budget of {memory_budget:.3g}",
            estimated_nnz=est,
        )
    if mode == "dense":
        return GramMatrix(n, k, dense=k.gram(X), points=X)
    Z = k._coords(X)
    pairs = cKDTree(Z).query_pairs(1.0, output_type="ndarray")
    phi0 = k.phi_zero()
    if len(pairs):
        diff = Z[pairs[:, 0]] - Z[pairs[:, 1]]
        vals = k.base.profile_sq(np.einsum("ij,ij->i", diff, diff))
        keep = vals != 0.0
        pairs, vals = pairs[keep], vals[keep]
        lo = np.minimum(pairs[:, 0], pairs[:, 1])
        hi = np.maximum(pairs[:, 0], pairs[:, 1])
    else:
        lo = hi = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0)
    rows = np.concatenate([np.arange(n), lo])
    cols = np.concatenate([np.arange(n), hi])
    data = np.concatenate([np.full(n, phi0), vals])
    upper = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    upper.sum_duplicates()
    return GramMatrix(n, k, upper=upper, points=X)


def cross_matrix(k: RescaledKernel, X, Y, sparse=None):
    """``{Phi_Theta(x_u - y_v)}``, sparse (CSR) for compact kernels unless disabled."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if sparse is None:
        sparse = k.is_compact and X.shape[0] * Y.shape[0] > 4_000_000
    if not sparse or not k.is_compact:
        return k.cross(X, Y)
    ZX, ZY = k._coords(X), k._coords(Y)
    D = cKDTree(ZX).sparse_distance_matrix(cKDTree(ZY), 1.0, output_type="coo_matrix")
    vals = k.base.profile(D.data)
    return sp.csr_matrix((vals, (D.row, D.col)), shape=(X.shape[0], Y.shape[0]))


def kernel_combination(k: RescaledKernel, centers, coeffs, probes, chunk=2048):
    """``sum_u coeffs_u Phi_Theta(x - x_u)`` at every probe ``x``."""
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    coeffs = np.asarray(coeffs, dtype=float)
    out = np.empty(probes.shape[0])
    for s in range(0, probes.shape[0], chunk):
        K = cross_matrix(k, probes[s:s + chunk], centers)
        out[s:s + chunk] = K @ coeffs
    return out


@dataclass
class SolveReport:
    x: np.ndarray
    method: str
    iterations: int
    residual: float
    jitter: float = 0.0

    def to_dict(self):
        return {"method": self.method, "iterations": self.iterations,
                "residual": self.residual, "jitter": self.jitter}


class Factorization:
    """Reusable factorization of an SPD Gram matrix.

    Dense matrices use Cholesky; sparse ones a sparse LU (SuperLU), which is
    only attempted when the caller accepts the fill-in cost.
    """

    def __init__(self, A: GramMatrix, jitter=False):
        self.A = A
        self.jitter = 0.0
        if A.is_sparse:
            M = A.full_sparse()
            try:
                self._lu = spla.splu(M, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                                     options={"SymmetricMode": True})
            except (RuntimeError, MemoryError) as exc:
                raise CapabilityError(f"sparse factorization failed: {exc}") from exc
            self._chol = None
        else:
            self._chol = _cholesky(A, jitter)
            self.jitter = self._chol[2]
            self._lu = None

    def solve(self, B):
        if self._lu is not None:
            return self._lu.solve(np.asarray(B, dtype=float))
        L, lower, _ = self._chol
        return sla.cho_solve((L, lower), B, check_finite=False)

    @property
    def logdet(self):
        if self._lu is not None:
            du = self._lu.U.diagonal()
            return float(np.sum(np.log(np.abs(du))))
        return 2.0 * float(np.sum(np.log(np.diag(self._chol[0]))))

    def inverse_diagonal(self):
        """Diagonal of ``A^{-1}`` via ``||L^{-1} e_i||^2`` (dense only)."""
        if self._lu is not None:
            raise CapabilityError("the inverse diagonal needs the dense path")
        L = self._chol[0]
        Linv = sla.solve_triangular(L, np.eye(L.shape[0]), lower=True, check_finite=False)
        return np.einsum("ij,ij->j", Linv, Linv)


def _cholesky(A: GramMatrix, jitter):
    M = A.dense
    try:
        L, lower = sla.cho_factor(M, lower=True, check_finite=False)
        if not np.all(np.isfinite(L)):
            raise np.linalg.LinAlgError("non-finite factor")
        return L, lower, 0.0
    except np.linalg.LinAlgError as exc:
        if not jitter:
            raise ConditioningError(
                "Cholesky factorization failed; narrow the kernel or enable jitter", A.hint()
            ) from exc
    amount = JITTER_SCALE * A.phi0
    logger.warning("adding jitter %.3g to the Gram diagonal", amount)
    try:
        L, lower = sla.cho_factor(M + amount * np.eye(A.n), lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError("Cholesky factorization failed even with jitter", A.hint()) from exc
    return L, lower, amount


def factorize(A: GramMatrix, jitter=False):
    return Factorization(A, jitter=jitter)


def _pcg(A: GramMatrix, b, tol, max_iter, x0=None):
    """Conjugate gradients with a diagonal (Jacobi) preconditioner."""
    dinv = 1.0 / A.diagonal()
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - A.matvec(x) if x0 is not None else b.copy()
    bnorm = np.linalg.norm(b)
    z = dinv * r
    p = z.copy()
    rz = r @ z
    it = 0
    res = np.linalg.norm(r) / bnorm
    while res > tol and it < max_iter:
        Ap = A.matvec(p)
        pAp = p @ Ap
        if pAp <= 0:
            break
        step = rz / pAp
        x += step * p
        r -= step * Ap
        it += 1
        res = np.linalg.norm(r) / bnorm
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    # recompute the true residual; the recurrence drifts on hard problems
    res = np.linalg.norm(b - A.matvec(x)) / bnorm
    return x, it, res


def solve_spd(A: GramMatrix, b, tol=1e-10, max_iter=None, jitter=False, refine=3, factor=None):
    """Solve ``A x = b`` for SPD ``A``.

    Dense matrices are solved by Cholesky with a few steps of iterative
    refinement; sparse matrices by Jacobi-preconditioned conjugate gradients
    stopped at relative residual ``tol`` (``max_iter`` defaults to ``10 n``).
    """
    b = np.asarray(b, dtype=float)
    if b.shape != (A.n,):
        raise ArgumentError(f"right-hand side has shape {b.shape}, expected ({A.n},)")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return SolveReport(np.zeros(A.n), "sparse-pcg" if A.is_sparse else "dense-cholesky", 0, 0.0)
    if A.is_sparse and factor is None:
        max_iter = 10 * A.n if max_iter is None else max_iter
        x, it, res = _pcg(A, b, tol, max_iter)
        if not res <= tol:
            raise ConditioningError(
                f"conjugate gradients stalled at relative residual {res:.3g} after {it} iterations; "
                "narrow the kernel or enable jitter",
                {**A.hint(), "residual": res, "iterations": it},
            )
        return SolveReport(x, "sparse-pcg", it, float(res))
    fac = factor if factor is not None else Factorization(A, jitter=jitter)
    M = A if not fac.jitter else None
    x = fac.solve(b)
    it = 0

    def residual(v):
        Av = A.matvec(v) if M is not None else A.matvec(v) + fac.jitter * v
        return b - Av

    r = residual(x)
    res = np.linalg.norm(r) / bnorm
    while it < refine and res > 1e-15:
        x_new = x + fac.solve(r)
        r_new = residual(x_new)
        res_new = np.linalg.norm(r_new) / bnorm
        it += 1
        if not res_new < res:
            break
        x, r, res = x_new, r_new, res_new
    if not np.all(np.isfinite(x)) or not res <= tol:
        raise ConditioningError(
            f"direct solve left relative residual {res:.3g} (> {tol:g})", {**A.hint(), "residual": float(res)}
        )
    method = "dense-cholesky" if not A.is_sparse else "sparse-lu"
    return SolveReport(x, method, it, float(res), fac.jitter)


def logdet_spd(A: GramMatrix, jitter=False):
    """``log det A`` from a Cholesky (dense) or sparse LU factorization."""
    try:
        return Factorization(A, jitter=jitter).logdet
    except CapabilityError:
        raise
    except Exception as exc:  # splu may raise plain RuntimeError on singular input
        if isinstance(exc, ConditioningError):
            raise
        raise ConditioningError(f"log-determinant failed: {exc}", A.hint()) from exc


@dataclass
class EigenResult:
    lam_min: float | None
    lam_max: float | None
    method: str
    gershgorin_cap: float
    certified: bool = True
    residuals: tuple = (0.0, 0.0)

    @property
    def kappa(self):
        if self.lam_min is None or self.lam_max is None or self.lam_min <= 0:
            return math.inf
        return self.lam_max / self.lam_min

    def to_dict(self):
        return {"lam_min": self.lam_min, "lam_max": self.lam_max, "method": self.method,
                "gershgorin_cap": self.gershgorin_cap, "certified": self.certified}


def eigen_extremes(A: GramMatrix, max_n_exact=2000):
    """Smallest and largest eigenvalues of ``A``.

    Exact dense eigensolves up to ``max_n_exact``; beyond that Lanczos
    (largest) and shift-invert Lanczos (smallest), each accepted only when
    its residual ``||A v - lam v||`` is small.  On breakdown the result falls
    back to the Gershgorin cap ``n Phi(0)`` with ``lam_min=None``.
    """
    cap = A.gershgorin_cap()
    if A.n <= max_n_exact:
        M = A.toarray()
        if A.n <= 400:
            w = sla.eigvalsh(M, check_finite=False)
            lo, hi = float(w[0]), float(w[-1])
        else:
            lo = float(sla.eigvalsh(M, subset_by_index=[0, 0], check_finite=False)[0])
            hi = float(sla.eigvalsh(M, subset_by_index=[A.n - 1, A.n - 1], check_finite=False)[0])
        return EigenResult(lo, hi, "dense", cap)
    op = spla.LinearOperator((A.n, A.n), matvec=A.matvec, dtype=float)
    try:
        hi_w, hi_v = spla.eigsh(op, k=1, which="LA", tol=1e-10)
        hi = float(hi_w[0])
        res_hi = float(np.linalg.norm(A.matvec(hi_v[:, 0]) - hi * hi_v[:, 0]))
    except spla.ArpackError:
        return EigenResult(None, cap, "bound-only", cap, certified=False)
    try:
        M = A.full_sparse()
        lo_w, lo_v = spla.eigsh(M, k=1, sigma=0.0, which="LM", tol=1e-10)
        lo = float(lo_w[0])
        res_lo = float(np.linalg.norm(A.matvec(lo_v[:, 0]) - lo * lo_v[:, 0]))
    except (spla.ArpackError, RuntimeError, MemoryError):
        return EigenResult(None, hi, "bound-only", cap, certified=False, residuals=(math.nan, res_hi))
    # a residual r certifies an eigenvalue within r of the reported value
    ok = lo > 0 and res_lo <= 0.5 * lo and res_hi <= 1e-6 * hi
    return EigenResult(lo, hi, "iterative", cap, certified=bool(ok), residuals=(res_lo, res_hi))


def solve_error_bound(kappa, delta_A, delta_b):
    """Perturbation bounds for ``A x = b`` versus ``A~ x~ = b~``.

    With ``r = kappa delta_A < 1`` returns
    ``(||x~|| / ||x|| bound, ||x - x~|| / ||x|| bound)`` =
    ``((1 + r delta_b / delta_A) / (1 - r), kappa (delta_A + delta_b) / (1 - r))``.
    """
    if kappa < 1 or delta_A < 0 or delta_b < 0:
        raise ArgumentError("need kappa >= 1 and nonnegative perturbation levels")
    r = kappa * delta_A
    if r >= 1:
        raise InfeasibleError(
            f"matrix too ill-conditioned for the perturbation level (kappa * delta_A = {r:.3g} >= 1)"
        )
    # r * delta_b / delta_A == kappa * delta_b, which stays finite at delta_A = 0
    ratio = (1.0 + kappa * delta_b) / (1.0 - r)
    rel = kappa * (delta_A + delta_b) / (1.0 - r)
    return ratio, rel
