"""Numeric and nominal error bounds as runnable diagnostics.

Numeric side: the minimum-eigenvalue bound in terms of the separation
distance, the Gershgorin cap, the amplification factor ``g`` and the
multi-stage numeric bound summed over index chains.  Nominal side: the
power function and a rate factor whose constant is unknown (set to 1).
``error_decomposition`` measures both portions empirically by comparing a
reference fit with a reduced-precision replica.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import mpmath
import numpy as np
import scipy.linalg as sla

from .design import NestedDesign, fill_distance, separation_distance
from .errors import ArgumentError, CapabilityError, InfeasibleError
from .kernel import (
    RescaledKernel,
    check_rescaling_admissibility,
    is_convolution_schedule,
    log_fourier_lower_envelope,
)
from .linalg import assemble_gram, eigen_extremes

EPS = np.finfo(float).eps
DEFAULT_DELTA = 1e-15
DEFAULT_R = 0.5
MAX_STAGES = 20


def constants_M_C(d):
    """``(M_d, C_d)`` of the minimum-eigenvalue bound."""
    if int(d) != d or d < 1:
        raise ArgumentError(f"d must be a positive integer, got {d!r}")
    g = math.gamma(d / 2 + 1)
    M = 12.0 * (math.pi * g * g / 9.0) ** (1.0 / (d + 1))
    C = (M / 2**1.5) ** d / (2.0 * g)
    return M, C


def log_lambda_min_lower(X, k: RescaledKernel, q=None):
    """Log of ``C_d phi_*(M_d / q, Phi) / q^d`` with ``q = q_X`` unless given."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if q is None:
        if X.shape[0] < 2:
            raise ArgumentError("the separation distance needs at least two points")
        q = separation_distance(X)
    d = k.d
    M, C = constants_M_C(d)
    try:
        log_env = log_fourier_lower_envelope(k, M / q)
    except ArgumentError as exc:
        raise CapabilityError(f"no Fourier envelope for this kernel: {exc}") from exc
    return math.log(C) + log_env - d * math.log(q)


def lambda_min_lower(X, k: RescaledKernel, q=None):
    """Lower bound on ``lambda_min(A_{X,Phi})`` from the separation distance (may underflow to 0)."""
    return math.exp(log_lambda_min_lower(X, k, q))


def kappa_upper(X, k: RescaledKernel, include_phi0=False):
    """``n q^d / (C_d phi_*(M_d / q))``.

    As printed this bounds the condition number only when ``Phi(0) <= 1``;
    ``include_phi0=True`` returns ``n Phi(0) / lambda_min_lower``, which
    bounds it for every kernel.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    val = math.log(n) - log_lambda_min_lower(X, k)
    if include_phi0:
        val += math.log(k.phi_zero())
    return _safe_exp(val)


def default_D(phi0):
    """Kernel-evaluation error scale: ``D delta`` covers 8 ulps of ``Phi(0)`` at working precision."""
    return 8.0 * float(np.spacing(phi0)) / EPS


def _safe_exp(x):
    return math.exp(x) if x < 709.0 else math.inf


def g_value(X, k: RescaledKernel, D=None, use_bounds=False, eig=None):
    """Amplification factor ``g = n / lambda_min (kappa Phi(0) + D)``.

    With ``use_bounds`` the eigenvalues are replaced by the separation
    bound and the Gershgorin cap ``n Phi(0)``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    phi0 = k.phi_zero()
    D = default_D(phi0) if D is None else D
    if use_bounds:
        if n == 1:
            log_lmin, log_lmax = math.log(phi0), math.log(phi0)
        else:
            log_lmin = log_lambda_min_lower(X, k)
            log_lmax = math.log(n * phi0)
    else:
        if eig is None:
            eig = eigen_extremes(assemble_gram(X, k))
        if eig.lam_min is None or eig.lam_min <= 0:
            return math.inf
        log_lmin, log_lmax = math.log(eig.lam_min), math.log(eig.lam_max)
    log_kappa = max(log_lmax - log_lmin, 0.0)
    inner = np.logaddexp(log_kappa + math.log(phi0), math.log(D)) if D > 0 else log_kappa + math.log(phi0)
    return _safe_exp(math.log(n) - log_lmin + float(inner))


@dataclass
class BoundInputs:
    """Perturbation levels for the numeric bound.

    ``delta_A`` holds one value per stage; ``None`` uses ``r / kappa_j``.
    ``D=None`` uses :func:`default_D` of the largest ``Phi_j(0)``.
    """

    delta: float = DEFAULT_DELTA
    r: float = DEFAULT_R
    D: float | None = None
    delta_A: list | None = None
    delta_f: float | None = None

    def __post_init__(self):
        if not self.delta > 0:
            raise ArgumentError("delta must be positive")
        if not self.r > 0:
            raise ArgumentError("r must be positive")
        if self.D is not None and not self.D > 0:
            raise ArgumentError("D must be positive")

    def to_dict(self):
        return {"delta": self.delta, "r": self.r, "D": self.D, "delta_A": self.delta_A, "delta_f": self.delta_f}


def index_chains(J):
    """All ``(i_1 < ... < i_M, i_{M+1} = J)`` for ``M = 1..J``; there are ``2^J - 1``."""
    out = []
    for M in range(1, J + 1):
        for head in itertools.combinations(range(1, J + 1), M):
            out.append((M, head + (J,)))
    return out


def _rms(v):
    v = np.asarray(v, dtype=float)
    return float(np.linalg.norm(v) / math.sqrt(v.size))


def chain_sum(g, rms, C):
    """``sum_M C^M sum_{chains} prod_k rho(X_{i_k}, X_{i_{k+1}}) g_{i_k}``, itemized.

    ``g`` and ``rms`` are per-stage lists (stage ``j`` at index ``j-1``);
    ``rho(X_a, X_b) = rms_a / rms_b``.
    """
    J = len(g)
    total = 0.0
    terms = []
    for M, chain in index_chains(J):
        rho_prod = 1.0
        g_prod = 1.0
        for a, b in zip(chain[:-1], chain[1:]):
            rho_prod *= rms[a - 1] / rms[b - 1] if rms[b - 1] > 0 else (1.0 if rms[a - 1] == 0 else math.inf)
            g_prod *= g[a - 1]
        term = C**M * rho_prod * g_prod
        total += term
        terms.append({"M": M, "indices": list(chain), "rho_product": rho_prod,
                      "g_values": [g[a - 1] for a in chain[:-1]], "term": term})
    return total, terms


def numeric_bound(model, inputs: BoundInputs | None = None, use_bounds=False, stage_stats=None):
    """Bound on ``|P(x) - P~(x)|`` for the multi-stage interpolator.

    ``delta ||f|_{X_J} / sqrt(n_J)|| sum_M C^M sum_chains prod rho g`` with
    ``C = 2 / (1 - r)``.  Returns a dict with the value, every chain term and
    the per-stage quantities; side-assumption violations are flagged, not
    raised.

    Raises
    ------
    InfeasibleError
        ``r >= 1``.
    """
    inputs = inputs or BoundInputs()
    if inputs.r >= 1:
        raise InfeasibleError(f"r = {inputs.r:g} >= 1: no matrix is conditioned well enough for this slack")
    J = model.J
    if J > MAX_STAGES:
        raise ArgumentError(f"J = {J} would need {2**J - 1} terms; at most {MAX_STAGES} stages are supported")
    stats = stage_stats or [stage_statistics(model, j) for j in range(1, J + 1)]
    phi0 = max(st.kernel.phi_zero() for st in model.stages)
    D = inputs.D if inputs.D is not None else default_D(phi0)
    g = [g_value(model.points[: s["n"]], model.stages[j].kernel, D, use_bounds, eig=s.get("_eig"))
         for j, s in enumerate(stats)]
    rms = [_rms(model.y[: s["n"]]) for s in stats]
    C = 2.0 / (1.0 - inputs.r)
    S, terms = chain_sum(g, rms, C)
    value = inputs.delta * rms[-1] * S
    violations = []
    delta_A = []
    for j, s in enumerate(stats):
        dA = inputs.delta_A[j] if inputs.delta_A is not None else inputs.r / s["kappa"]
        delta_A.append(dA)
        if s["kappa"] * dA > inputs.r * (1 + 1e-12):
            violations.append({"stage": j + 1, "assumption": "kappa * delta_j <= r",
                               "lhs": s["kappa"] * dA, "rhs": inputs.r})
        lhs = dA * s["residual_rms"]
        if lhs > inputs.delta * rms[j]:
            violations.append({"stage": j + 1, "assumption": "delta_j ||r_j|| <= delta ||f|_Xj||",
                               "lhs": lhs, "rhs": inputs.delta * rms[j]})
    return {"value": value, "delta": inputs.delta, "r": inputs.r, "C": C, "D": D,
            "f_rms": rms[-1], "sum": S, "g": g, "rms": rms, "delta_A": delta_A,
            "terms": terms, "n_terms": len(terms), "violations": violations}


def stage_statistics(model, j, eig_max_exact=2000, geometry=True):
    """Geometry, eigenvalues and their bounds for stage ``j`` of a fitted model.

    ``geometry=False`` skips ``q_X``, ``h_X`` and the eigenvalue bounds,
    leaving the computed spectrum and residual size.
    """
    st = model.stages[j - 1]
    X = model.points[: st.n]
    k = st.kernel
    A = assemble_gram(X, k, mode=model.fit_meta.get("mode", "auto"),
                      memory_budget=model.fit_meta.get("memory_budget", 5e7))
    eig = eigen_extremes(A, max_n_exact=eig_max_exact)
    out = {"stage": j, "n": st.n, "lam_min": eig.lam_min, "lam_max": eig.lam_max,
           "eig_method": eig.method, "eig_certified": eig.certified,
           "gershgorin": eig.gershgorin_cap, "kappa": eig.kappa, "phi0": k.phi_zero(),
           "residual_rms": st.residual_norm / math.sqrt(st.n), "_eig": eig}
    checks = {"gershgorin_ok": eig.lam_max is not None and eig.lam_max <= eig.gershgorin_cap * (1 + 1e-12)}
    out["checks"] = checks
    if not geometry:
        return out
    out["q_X"] = separation_distance(X) if st.n >= 2 else None
    out["h_X"] = fill_distance(X)
    if st.n >= 2:
        try:
            log_lo = log_lambda_min_lower(X, k)
            out["log_lam_min_lower"] = log_lo
            out["lam_min_lower"] = math.exp(log_lo)
            log_ku = math.log(st.n) - log_lo
            out["kappa_upper"] = _safe_exp(log_ku)
            out["kappa_upper_phi0"] = _safe_exp(log_ku + math.log(k.phi_zero()))
        except CapabilityError as exc:
            out["bound_error"] = str(exc)
    else:
        out["lam_min_lower"] = k.phi_zero()
        out["kappa_upper"] = out["kappa_upper_phi0"] = 1.0
    if eig.lam_min is not None and "lam_min_lower" in out:
        checks["lam_min_ok"] = out["lam_min_lower"] <= eig.lam_min
        checks["kappa_ok"] = eig.kappa <= max(1.0, k.phi_zero()) * out["kappa_upper"]
    return out


def power_function(X, k: RescaledKernel, x):
    """``sqrt(max(0, Phi(0) - k(x)' A^{-1} k(x)))`` at one or many probes."""
    x = np.asarray(x, dtype=float)
    P = np.atleast_2d(x) if not (k.d == 1 and x.ndim == 1 and x.size != 1) else x[:, None]
    single = x.ndim <= 1 and P.shape[0] == 1
    X = np.asarray(X, dtype=float).reshape(-1, k.d)
    if X.shape[0] == 0:
        v = np.full(P.shape[0], math.sqrt(k.phi_zero()))
        return float(v[0]) if single else v
    A = assemble_gram(X, k, mode="dense")
    L = sla.cho_factor(A.dense, lower=True, check_finite=False)
    K = k.cross(X, P)
    W = sla.cho_solve(L, K, check_finite=False)
    v = np.sqrt(np.maximum(0.0, k.phi_zero() - np.einsum("ij,ij->j", K, W)))
    return float(v[0]) if single else v


def nominal_rate_factor(nd: NestedDesign, kernels, smoothness_k=None, theta0=None, h=None):
    """Rate factor of the nominal multi-stage bound (unknown constant set to 1).

    ``||Theta_J||^{k/2} h_J^{k/2} prod_j sqrt|det Xi_{j-1}| / |det Xi_j|
    (||Theta_j||^k h_j^k)^{2^{J-j-1}}`` with ``Xi_j = Theta_j^{-T}`` and
    ``Theta_0`` the identity unless given.  Computed in logs.

    Raises
    ------
    InfeasibleError
        A consecutive pair of re-scalings violates the admissibility
        condition; the message names the pair and its ``lambda_max``.
    """
    J = len(kernels)
    if J != nd.J:
        raise ArgumentError(f"{J} kernels for {nd.J} stages")
    d = nd.design.d
    k = kernels[0].base.smoothness_k if smoothness_k is None else smoothness_k
    admissibility = []
    for j in range(2, J + 1):
        ok, lam = check_rescaling_admissibility(kernels[j - 2].rescale, kernels[j - 1].rescale, d)
        admissibility.append({"pair": [j - 1, j], "lam_max": lam, "admissible": ok})
        if not ok:
            raise InfeasibleError(f"re-scalings of stages {j - 1} and {j} are not admissible "
                                  f"(lambda_max = {lam:.6g} > 1)")
    hs = h if h is not None else [fill_distance(nd.prefix(j)) for j in range(1, J + 1)]
    log_det_theta = [0.0 if theta0 is None else theta0.log_abs_det(d)]
    log_det_theta += [kk.rescale.log_abs_det(d) for kk in kernels]
    log_norm = [math.log(kk.rescale.norm2(d)) for kk in kernels]
    total = 0.5 * k * (log_norm[-1] + math.log(hs[-1]))
    per_stage = []
    for j in range(1, J + 1):
        # |det Xi| = 1 / |det Theta|
        lf = -0.5 * log_det_theta[j - 1] + log_det_theta[j]
        lf += 2.0 ** (J - j - 1) * k * (log_norm[j - 1] + math.log(hs[j - 1]))
        per_stage.append(lf)
        total += lf
    label = "rate" if is_convolution_schedule(kernels) else "rate heuristic"
    return {"log_factor": total, "factor": _safe_exp(total) if total > -745 else 0.0,
            "per_stage_log": per_stage, "smoothness_k": k, "h_X": list(hs),
            "admissibility": admissibility, "label": label, "constant": 1.0}


# -- reduced precision replica and error decomposition ----------------------

def round_bits(a, p):
    """Round to ``p`` significant bits (relative error at most ``2^-p``)."""
    a = np.asarray(a, dtype=float)
    if p >= 53:
        return a.copy()
    m, e = np.frexp(a)
    return np.ldexp(np.round(np.ldexp(m, p)), e - p)


class Replica:
    """The multi-stage fit repeated with kernel values and data rounded to ``p`` bits.

    Linear solves are carried out in double precision by LU without any
    conditioning checks, so an ill-conditioned stage yields whatever the
    arithmetic produces rather than an exception.
    """

    def __init__(self, model, p):
        self.model, self.p = model, p
        X = model.points
        self.f = round_bits(model.y, p)
        self.alpha = []
        self.delta_A = []
        cum = np.zeros(X.shape[0])
        for st in model.stages:
            Xj = X[: st.n]
            A = st.kernel.gram(Xj)
            At = round_bits(A, p)
            r = self.f[: st.n] - cum[: st.n]
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", sla.LinAlgWarning)
                    a = sla.solve(At, r, check_finite=False)
            except (sla.LinAlgError, ValueError):
                a = np.full(st.n, np.nan)
            self.alpha.append(a)
            nA = np.linalg.norm(A, 2)
            self.delta_A.append(float(np.linalg.norm(A - At, 2) / nA) if nA > 0 else 0.0)
            cum += round_bits(st.kernel.cross(X, Xj), p) @ a
        self.delta_f = float(np.linalg.norm(model.y - self.f) / max(np.linalg.norm(model.y), 1e-300))

    @property
    def diverged(self):
        return not all(np.all(np.isfinite(a)) for a in self.alpha)

    def predict(self, P):
        P = np.atleast_2d(P)
        out = np.zeros(P.shape[0])
        for st, a in zip(self.model.stages, self.alpha):
            out += round_bits(st.kernel.cross(P, self.model.points[: st.n]), self.p) @ a
        return out


def _mp_profile(k: RescaledKernel, r2):
    base = k.base
    if base.is_gaussian:
        a, c = base.gaussian_params
        return mpmath.mpf(a) * mpmath.exp(-mpmath.mpf(c) * r2)
    r = mpmath.sqrt(r2)
    if r >= 1:
        return mpmath.mpf(0)
    l = base.l
    s = (1 - r) ** (l + 2)
    if base.family == "wendland-rough":
        return s
    return s * ((l * l + 4 * l + 3) * r2 + (3 * l + 6) * r + 3)


def _mp_cross(k, X, Y):
    T = mpmath.matrix(k.rescale.matrix(k.d).tolist())
    ZX = [T * mpmath.matrix([mpmath.mpf(float(v)) for v in x]) for x in X]
    ZY = [T * mpmath.matrix([mpmath.mpf(float(v)) for v in y]) for y in Y]
    out = mpmath.matrix(len(X), len(Y))
    for i, zx in enumerate(ZX):
        for j, zy in enumerate(ZY):
            diff = zx - zy
            out[i, j] = _mp_profile(k, sum(v * v for v in diff))
    return out


def mp_reference_predict(model, probes, dps=60):
    """Multi-stage prediction with every operation in ``dps``-digit arithmetic.

    Practical for a few hundred points at most; used as the exact-arithmetic
    stand-in when double precision is itself the source of error.
    """
    P = np.atleast_2d(np.asarray(probes, dtype=float))
    X = model.points
    with mpmath.workdps(dps):
        f = [mpmath.mpf(float(v)) for v in model.y]
        cum = [mpmath.mpf(0)] * X.shape[0]
        pred = [mpmath.mpf(0)] * P.shape[0]
        for st in model.stages:
            Xj = X[: st.n]
            A = _mp_cross(st.kernel, Xj, Xj)
            r = mpmath.matrix([f[i] - cum[i] for i in range(st.n)])
            a = mpmath.lu_solve(A, r)
            KX = _mp_cross(st.kernel, X, Xj)
            KP = _mp_cross(st.kernel, P, Xj)
            for i in range(X.shape[0]):
                cum[i] += sum(KX[i, u] * a[u] for u in range(st.n))
            for i in range(P.shape[0]):
                pred[i] += sum(KP[i, u] * a[u] for u in range(st.n))
        return np.array([float(v) for v in pred])


def mp_reference_predict_converged(model, probes, dps=60, max_dps=2000):
    """:func:`mp_reference_predict` with the precision doubled until two runs agree to 1e-12."""
    prev = mp_reference_predict(model, probes, dps)
    while dps < max_dps:
        dps *= 2
        cur = mp_reference_predict(model, probes, dps)
        if np.allclose(cur, prev, rtol=1e-12, atol=1e-12 * max(1.0, float(np.max(np.abs(cur))))):
            return cur, dps
        prev = cur
    raise CapabilityError(f"reference prediction did not settle below {max_dps} digits")


def replica_bound_check(model, p, probes):
    """Compare the replica's numeric error with the bound built from measured perturbations.

    ``delta = 2^-p``; ``delta_j`` is the measured relative spectral-norm
    change of each Gram matrix; ``r = max_j kappa_j delta_j``;
    ``D = Phi(0) (1 + 2^-20)`` since rounding moves each kernel value by at
    most ``2^-p Phi(0)``.  ``preconditions_ok`` reports whether every
    hypothesis of the bound holds, in which case ``error <= bound`` must hold.
    """
    rep = Replica(model, p)
    delta = 2.0 ** -p
    stats = [stage_statistics(model, j, geometry=False) for j in range(1, model.J + 1)]
    kappas = [s["kappa"] for s in stats]
    r = max(kk * dA for kk, dA in zip(kappas, rep.delta_A))
    phi0 = max(st.kernel.phi_zero() for st in model.stages)
    pre = {"r_lt_1": r < 1, "delta_f": rep.delta_f <= delta}
    side = all(dA * s["residual_rms"] <= delta * _rms(model.y[: s["n"]])
               for dA, s in zip(rep.delta_A, stats))
    pre["side_assumption"] = side
    out = {"p": p, "delta": delta, "delta_A": rep.delta_A, "delta_f": rep.delta_f, "r": r,
           "preconditions": pre, "preconditions_ok": all(pre.values()), "diverged": rep.diverged}
    P = np.atleast_2d(probes)
    err = np.abs(model.predict_batch(P) - rep.predict(P))
    out["error"] = float(np.max(err)) if not rep.diverged else math.inf
    if r < 1:
        nb = numeric_bound(model, BoundInputs(delta=delta, r=max(r, 1e-300), D=phi0 * (1 + 2.0**-20),
                                              delta_A=rep.delta_A), stage_stats=stats)
        out["bound"] = nb["value"]
        out["holds"] = out["error"] <= nb["value"]
    else:
        out["bound"] = None
        out["holds"] = None
    return out


def error_decomposition(model, oracle_f, probes, replica_precision=None, reference="float64",
                        dps=60, adversarial=False):
    """Split the prediction error into nominal and numeric parts at the probes.

    Parameters
    ----------
    model : MultiStepModel
    oracle_f : callable
        The true function.
    replica_precision : int or None
        Bits kept by the replica; ``None`` compares against the fitted
        double-precision model itself.
    reference : {"float64", "mpmath"}
        How the exact-arithmetic interpolant is computed.  ``"mpmath"``
        refits at ``dps`` digits (doubling until converged).
    adversarial : bool
        Also perturb the Gram matrix of the last stage by ``delta ||A||``
        along its minimal eigenvector and report the resulting change in
        prediction (the worst-case amplification direction).
    """
    P = np.atleast_2d(np.asarray(probes, dtype=float))
    if model.d == 1 and P.shape[0] == 1 and np.ndim(probes) == 1:
        P = P.T
    truth = np.asarray(oracle_f(P), dtype=float)
    if reference == "mpmath":
        exact, used = mp_reference_predict_converged(model, P, dps)
    elif reference == "float64":
        exact, used = model.predict_batch(P), None
    else:
        raise ArgumentError(f"unknown reference {reference!r}")
    diverged = False
    if replica_precision is None:
        computed = model.predict_batch(P)
    else:
        rep = Replica(model, replica_precision)
        diverged = rep.diverged
        computed = rep.predict(P)
    nominal = np.abs(truth - exact)
    numeric = np.abs(exact - computed) if not diverged else np.full(P.shape[0], math.inf)
    total = np.abs(truth - computed) if not diverged else np.full(P.shape[0], math.inf)
    out = {
        "nominal": {"max": float(nominal.max()), "mean": float(nominal.mean())},
        "numeric": {"max": float(numeric.max()), "mean": float(numeric.mean())},
        "total": {"max": float(total.max()), "mean": float(total.mean()),
                  "mspe": float(np.mean(total**2))},
        "triangle_bound_max": float(np.max(nominal + numeric)),
        "fit_diverged": diverged,
        "reference": reference, "reference_dps": used, "replica_precision": replica_precision,
        "f_norm_max": float(np.max(np.abs(truth))),
    }
    if adversarial:
        out["adversarial"] = _adversarial_probe(model, P)
    return out


def _adversarial_probe(model, P, delta=DEFAULT_DELTA):
    st = model.stages[-1]
    X = model.points[: st.n]
    A = st.kernel.gram(X)
    w, V = np.linalg.eigh(A)
    v = V[:, 0]
    eps = delta * w[-1]
    resid = A @ st.alpha
    a_pert = np.linalg.solve(A + eps * np.outer(v, v), resid)
    K = st.kernel.cross(P, X)
    change = np.abs(K @ (a_pert - st.alpha))
    return {"epsilon": eps, "lam_min": float(w[0]), "max_change": float(change.max()),
            "amplification": float(change.max() / max(eps, 1e-300))}


def bound_report(model, inputs: BoundInputs | None = None, nominal=True):
    """Every bound for a fitted model, as a JSON-ready dict."""
    inputs = inputs or BoundInputs()
    stats = [stage_statistics(model, j) for j in range(1, model.J + 1)]
    d = model.d
    M, C = constants_M_C(d)
    report = {"constants": {"M_d": M, "C_d": C, "d": d}, "inputs": inputs.to_dict(),
              "stages": [{k: v for k, v in s.items() if not k.startswith("_")} for s in stats]}
    for s, st in zip(report["stages"], model.stages):
        s["g"] = g_value(model.points[: st.n], st.kernel, inputs.D, eig=stats[s["stage"] - 1]["_eig"])
        try:
            s["g_bound"] = g_value(model.points[: st.n], st.kernel, inputs.D, use_bounds=True)
        except CapabilityError as exc:
            s["g_bound"] = None
            s["bound_error"] = str(exc)
        s["rho_to_final"] = _rms(model.y[: st.n]) / _rms(model.y) if _rms(model.y) > 0 else None
    try:
        nb = numeric_bound(model, inputs, stage_stats=stats)
        nb.pop("rms", None)
        report["numeric"] = {"feasible": True, **nb}
    except InfeasibleError as exc:
        report["numeric"] = {"feasible": False, "reason": str(exc)}
    if nominal:
        kernels = [st.kernel for st in model.stages]
        h = [s["h_X"] for s in stats]
        try:
            report["nominal"] = nominal_rate_factor(model.nd, kernels, h=h)
        except InfeasibleError as exc:
            report["nominal"] = {"admissible": False, "reason": str(exc), "label": "rate heuristic"}
    return _jsonable(report)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj
