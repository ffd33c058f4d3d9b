"""Translation-invariant kernels, re-scalings and their Fourier transforms.

All kernels here are radial in the re-scaled argument: ``Phi_Theta(x - y) =
phi(||Theta (x - y)||_2)``.  Four families are provided:

===================  ==================================================  ========
family               profile phi(r)                                      Phi(0)
===================  ==================================================  ========
``gaussian``         ``exp(-r^2)``                                       1
``gaussian-conv``    k-fold self-convolution of the Gaussian             a_k
``wendland-smooth``  ``(1-r)_+^{l+2} [(l^2+4l+3) r^2 + (3l+6) r + 3]``   3
``wendland-rough``   ``(1-r)_+^{l+2}``                                   1
===================  ==================================================  ========

with ``l = floor(d/2) + 3`` for the smooth and ``l = floor(d/2) + 1`` for the
rough Wendland family.  The Wendland kernels are deliberately left
unnormalized.

Fourier transforms use the convention
``f_hat(w) = (2 pi)^{-d/2} int f(x) exp(-i w'x) dx``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np
from scipy.spatial.distance import cdist

from .errors import ArgumentError, UnsupportedFamilyError

FAMILIES = ("gaussian", "gaussian-conv", "wendland-smooth", "wendland-rough")

# multiplier applied to the numerically located minimum of a Wendland transform
WENDLAND_ENVELOPE_SAFETY = 0.9
_ENVELOPE_HEAD = 129
_ENVELOPE_TAIL = 97


def _gaussian_params(d, power):
    """Amplitude and rate ``(a, c)`` of ``a exp(-c r^2)`` after ``power`` doublings.

    Uses ``(a e^{-c|.|^2}) * (a e^{-c|.|^2}) = a^2 (pi / 2c)^{d/2} e^{-c|x|^2 / 2}``.
    """
    a, c = 1.0, 1.0
    for _ in range(power):
        a = a * a * (math.pi / (2.0 * c)) ** (d / 2.0)
        c = c / 2.0
    return a, c


@dataclass(frozen=True)
class Kernel:
    """A base (un-scaled) radial kernel on R^d.

    Parameters
    ----------
    family : str
        One of :data:`FAMILIES`.
    d : int
        Input dimension.
    conv_power : int
        For ``gaussian-conv`` the number k of self-convolutions in
        ``Psi^k = Psi^{k-1} * Psi^{k-1}``; must be 0 for other families.
    smoothness_cap : int
        Finite stand-in for the Gaussian's unbounded smoothness in rate
        formulas.
    """

    family: str
    d: int
    conv_power: int = 0
    smoothness_cap: int = 8

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ArgumentError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        if int(self.d) != self.d or self.d < 1:
            raise ArgumentError(f"dimension must be a positive integer, got {self.d!r}")
        if self.conv_power < 0:
            raise ArgumentError("conv_power must be nonnegative")
        if self.conv_power and self.family != "gaussian-conv":
            raise ArgumentError("conv_power is only meaningful for the gaussian-conv family")

    @property
    def is_gaussian(self):
        return self.family in ("gaussian", "gaussian-conv")

    @property
    def is_compact(self):
        return not self.is_gaussian

    @property
    def l(self):
        if self.family == "wendland-smooth":
            return self.d // 2 + 3
        if self.family == "wendland-rough":
            return self.d // 2 + 1
        raise UnsupportedFamilyError("l is defined for Wendland kernels only")

    @property
    def smoothness_k(self):
        if self.is_gaussian:
            return int(self.smoothness_cap)
        return 4 if self.family == "wendland-smooth" else 0

    @property
    def support_radius(self):
        return math.inf if self.is_gaussian else 1.0

    @property
    def gaussian_params(self):
        if not self.is_gaussian:
            raise UnsupportedFamilyError("not a Gaussian kernel")
        return _gaussian_params(self.d, self.conv_power)

    def phi_zero(self):
        if self.is_gaussian:
            return self.gaussian_params[0]
        return 3.0 if self.family == "wendland-smooth" else 1.0

    def profile_sq(self, r2):
        """Evaluate the radial profile given squared radii."""
        r2 = np.asarray(r2, dtype=float)
        if self.is_gaussian:
            a, c = self.gaussian_params
            return a * np.exp(-c * r2)
        return self.profile(np.sqrt(r2))

    def profile(self, r):
        r = np.asarray(r, dtype=float)
        if self.is_gaussian:
            a, c = self.gaussian_params
            return a * np.exp(-c * r * r)
        l = self.l
        s = np.clip(1.0 - r, 0.0, None)
        base = s ** (l + 2)
        if self.family == "wendland-rough":
            return base
        return base * ((l * l + 4 * l + 3) * r * r + (3 * l + 6) * r + 3.0)

    def fourier(self, w):
        """Radial Fourier transform of the un-scaled kernel at radii ``w``."""
        w = np.asarray(w, dtype=float)
        if self.is_gaussian:
            a, c = self.gaussian_params
            return a * (2.0 * c) ** (-self.d / 2.0) * np.exp(-w * w / (4.0 * c))
        out = np.array([float(_wendland_fourier(self.family, self.d, float(v))) for v in w.ravel()])
        return out.reshape(w.shape)

    def to_dict(self):
        return {"family": self.family, "d": self.d, "conv_power": self.conv_power}


def _wendland_coeffs(family, d):
    """Integer polynomial coefficients of the Wendland profile, lowest degree first."""
    l = d // 2 + 3 if family == "wendland-smooth" else d // 2 + 1
    e = l + 2
    base = [math.comb(e, p) * (-1) ** p for p in range(e + 1)]
    if family == "wendland-rough":
        return base
    quad = [3, 3 * l + 6, l * l + 4 * l + 3]
    out = [0] * (len(base) + 2)
    for i, bi in enumerate(base):
        for j, qj in enumerate(quad):
            out[i + j] += bi * qj
    return out


@lru_cache(maxsize=65536)
def _wendland_fourier(family, d, w):
    """Hankel transform of a Wendland profile, evaluated with mpmath.

    ``Phi_hat(w) = w^{-nu} int_0^1 phi(t) t^{d/2} J_nu(w t) dt`` with
    ``nu = d/2 - 1``; each monomial integrates to a 1F2 series.  The working
    precision is raised until two successive evaluations agree.
    """
    coeffs = _wendland_coeffs(family, d)
    nu = mpmath.mpf(d) / 2 - 1

    def evaluate(dps):
        with mpmath.workdps(dps):
            z = -mpmath.mpf(w) ** 2 / 4
            total = mpmath.mpf(0)
            for p, cp in enumerate(coeffs):
                if cp == 0:
                    continue
                a = mpmath.mpf(p + d) / 2
                total += cp * mpmath.hyp1f2(a, nu + 1, a + 1, z) / (p + d)
            return total * mpmath.power(2, -nu) / mpmath.gamma(nu + 1)

    dps = 30
    prev = evaluate(dps)
    for _ in range(8):
        dps += 25
        cur = evaluate(dps)
        if cur != 0 and abs(cur - prev) <= 1e-14 * abs(cur):
            return cur
        prev = cur
    return prev


@dataclass(frozen=True)
class Rescaling:
    """Linear re-scaling Theta of kernel inputs, ``Phi_Theta(x) = Phi(Theta x)``.

    ``kind`` is ``"scalar"`` (``theta I``), ``"diagonal"`` or ``"full"``;
    ``values`` holds one number, d numbers, or d rows of d numbers.
    """

    kind: str
    values: tuple

    def __post_init__(self):
        if self.kind not in ("scalar", "diagonal", "full"):
            raise ArgumentError(f"unknown rescaling kind {self.kind!r}")
        if self.kind == "full":
            vals = tuple(tuple(float(v) for v in row) for row in self.values)
            arr = np.array(vals, dtype=float)
            if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
                raise ArgumentError("full rescaling must be a square matrix")
        else:
            vals = tuple(float(v) for v in np.atleast_1d(np.asarray(self.values, dtype=float)))
            arr = np.array(vals)
            if self.kind == "scalar" and len(vals) != 1:
                raise ArgumentError("scalar rescaling takes exactly one value")
        object.__setattr__(self, "values", vals)
        if not np.all(np.isfinite(arr)):
            raise ArgumentError("rescaling entries must be finite")
        if self.kind != "full":
            if np.any(arr <= 0):
                raise ArgumentError("scalar/diagonal rescaling entries must be positive")
        else:
            sign, logdet = np.linalg.slogdet(arr)
            if sign == 0 or not np.isfinite(logdet):
                raise ArgumentError("full rescaling matrix is singular")
            if np.linalg.cond(arr) > 1e14:
                raise ArgumentError("full rescaling matrix is numerically singular")

    @classmethod
    def scalar(cls, theta):
        return cls("scalar", (float(theta),))

    @classmethod
    def diagonal(cls, thetas):
        return cls("diagonal", tuple(float(t) for t in thetas))

    @classmethod
    def full(cls, matrix):
        return cls("full", tuple(tuple(row) for row in np.asarray(matrix, dtype=float)))

    @classmethod
    def identity(cls):
        return cls.scalar(1.0)

    def dim(self):
        if self.kind == "scalar":
            return None
        return len(self.values)

    def matrix(self, d):
        if self.kind == "scalar":
            return self.values[0] * np.eye(d)
        self._check_dim(d)
        if self.kind == "diagonal":
            return np.diag(self.values)
        return np.array(self.values, dtype=float)

    def inverse(self, d):
        """``Xi' = Theta^{-1}``."""
        if self.kind == "scalar":
            return np.eye(d) / self.values[0]
        if self.kind == "diagonal":
            self._check_dim(d)
            return np.diag(1.0 / np.array(self.values))
        return np.linalg.inv(self.matrix(d))

    def _check_dim(self, d):
        if self.dim() is not None and self.dim() != d:
            raise ArgumentError(f"rescaling has dimension {self.dim()}, kernel has {d}")

    def apply(self, X):
        """Map row-vector points ``x`` to ``Theta x``."""
        X = np.asarray(X, dtype=float)
        if self.kind == "scalar":
            return X * self.values[0]
        if self.kind == "diagonal":
            self._check_dim(X.shape[-1])
            return X * np.asarray(self.values)
        return X @ self.matrix(X.shape[-1]).T

    def log_abs_det(self, d):
        if self.kind == "scalar":
            return d * math.log(self.values[0])
        if self.kind == "diagonal":
            self._check_dim(d)
            return float(np.sum(np.log(self.values)))
        return float(np.linalg.slogdet(self.matrix(d))[1])

    def singular_values(self, d):
        if self.kind == "scalar":
            return np.full(d, self.values[0])
        if self.kind == "diagonal":
            self._check_dim(d)
            return np.sort(np.asarray(self.values))[::-1]
        return np.linalg.svd(self.matrix(d), compute_uv=False)

    def norm2(self, d):
        return float(self.singular_values(d).max())

    def to_dict(self):
        if self.kind == "full":
            return {"kind": "full", "values": [list(row) for row in self.values]}
        return {"kind": self.kind, "values": list(self.values)}

    @classmethod
    def from_dict(cls, obj):
        try:
            return cls(obj["kind"], obj["values"])
        except (KeyError, TypeError) as exc:
            raise ArgumentError(f"malformed rescaling specification: {obj!r}") from exc


@dataclass(frozen=True)
class RescaledKernel:
    base: Kernel
    rescale: Rescaling = Rescaling.identity()

    def __post_init__(self):
        self.rescale._check_dim(self.base.d)

    @property
    def d(self):
        return self.base.d

    @property
    def is_compact(self):
        return self.base.is_compact

    def phi_zero(self):
        return self.base.phi_zero()

    def support_radius_original(self):
        """Largest ``||x - y||`` at which the kernel can be nonzero."""
        if not self.base.is_compact:
            return math.inf
        return 1.0 / float(self.rescale.singular_values(self.d).min())

    def _coords(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d:
            raise ArgumentError(f"points have dimension {X.shape[1]}, kernel expects {self.d}")
        return self.rescale.apply(X)

    def eval(self, x, y):
        """``Phi(Theta (x - y))`` for two single points."""
        x = np.asarray(x, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        if x.size != self.d or y.size != self.d:
            raise ArgumentError(f"points must have dimension {self.d}")
        z = self.rescale.apply((x - y)[None, :])[0]
        return float(self.base.profile_sq(np.dot(z, z)))

    def cross(self, X, Y):
        """Matrix ``{Phi_Theta(x_u - y_v)}`` of shape ``(len(X), len(Y))``."""
        return self.base.profile_sq(cdist(self._coords(X), self._coords(Y), "sqeuclidean"))

    def gram(self, X):
        Z = self._coords(X)
        return self.base.profile_sq(cdist(Z, Z, "sqeuclidean"))

    def fourier(self, omega):
        """Transform of the re-scaled kernel, ``|det Xi| Phi_hat(Xi omega)``, ``Xi = Theta^{-T}``."""
        omega = np.atleast_2d(np.asarray(omega, dtype=float))
        xi = self.rescale.inverse(self.d).T
        radii = np.linalg.norm(omega @ xi.T, axis=1)
        return math.exp(-self.rescale.log_abs_det(self.d)) * self.base.fourier(radii)

    def to_dict(self):
        out = self.base.to_dict()
        out["rescale"] = self.rescale.to_dict()
        return out

    @classmethod
    def from_dict(cls, obj):
        try:
            base = Kernel(obj["family"], int(obj["d"]), int(obj.get("conv_power", 0)))
            rescale = Rescaling.from_dict(obj.get("rescale", {"kind": "scalar", "values": [1.0]}))
        except (KeyError, TypeError) as exc:
            raise ArgumentError(f"malformed kernel specification: {obj!r}") from exc
        return cls(base, rescale)


def eval(k: RescaledKernel, x, y):
    return k.eval(x, y)


def phi_zero(k):
    """``Phi(0)`` for a :class:`Kernel` or :class:`RescaledKernel`."""
    return k.phi_zero()


def _envelope_grid(radius):
    """Radial sample points: linear up to ``4 pi``, geometric beyond, linear again near the end.

    The transform decays like a power of ``w`` with an oscillation of period
    about ``2 pi`` on top, so the minimum over the ball sits in the first few
    periods or in the last two; the stretch between needs only log spacing.
    """
    span = 4.0 * math.pi
    head = min(radius, span)
    parts = [np.linspace(0.0, head, _ENVELOPE_HEAD)]
    if radius > head:
        parts.append(np.geomspace(head, radius, _ENVELOPE_TAIL))
        parts.append(np.linspace(max(head, radius - span), radius, _ENVELOPE_HEAD))
    return np.unique(np.concatenate(parts))


def log_fourier_lower_envelope(k: RescaledKernel, M):
    """Natural log of :func:`fourier_lower_envelope` (never underflows for Gaussians)."""
    if not np.isfinite(M) or M < 0:
        raise ArgumentError(f"M must be finite and nonnegative, got {M!r}")
    d = k.d
    log_det_xi = -k.rescale.log_abs_det(d)
    # ||Xi omega|| over the ball ||omega|| <= 2M reaches 2M / sigma_min(Theta)
    radius = 2.0 * M / float(k.rescale.singular_values(d).min())
    if k.base.is_gaussian:
        a, c = k.base.gaussian_params
        return log_det_xi + math.log(a) - (d / 2.0) * math.log(2.0 * c) - radius * radius / (4.0 * c)
    grid = _envelope_grid(radius)
    low = min(_wendland_fourier(k.base.family, d, float(w)) for w in grid)
    if low <= 0:
        raise ArgumentError("numerical Wendland transform is not positive on the requested ball")
    return log_det_xi + float(mpmath.log(low)) + math.log(WENDLAND_ENVELOPE_SAFETY)


def fourier_lower_envelope(k: RescaledKernel, M):
    """Lower bound on ``inf_{||w|| <= 2M}`` of the re-scaled kernel's transform.

    Closed form for Gaussians.  For Wendland kernels the transform is evaluated
    in extended precision on a radial grid and the minimum is multiplied by
    ``WENDLAND_ENVELOPE_SAFETY``; this is conservative, not a proof.
    """
    return math.exp(log_fourier_lower_envelope(k, M))


def envelope_ratio(k: RescaledKernel, radius, num=129):
    """Ratio ``c2 / c1`` for the running-minimum envelope of ``|Phi_hat|`` on ``[0, radius]``.

    With ``Upsilon_hat(w) = min_{v <= w} Phi_hat(v)`` one has ``c1 = 1`` and
    ``c2 = max Phi_hat / Upsilon_hat``; for a Gaussian this is exactly 1.
    """
    grid = np.linspace(0.0, radius, num)
    vals = k.base.fourier(grid)
    running = np.minimum.accumulate(vals)
    return float(np.max(vals / running))


def convolution_schedule(base: Kernel, J, rescalings):
    """Stage kernels ``Phi_j = Psi^{J-j}`` re-scaled by ``Theta_j``, j = 1..J."""
    if not base.is_gaussian:
        raise UnsupportedFamilyError(
            f"convolution schedules need closed-form self-convolutions; {base.family!r} has none. "
            "Use independently re-scaled kernels instead."
        )
    if J < 1:
        raise ArgumentError("J must be at least 1")
    if len(rescalings) != J:
        raise ArgumentError(f"expected {J} rescalings, got {len(rescalings)}")
    out = []
    for j, theta in enumerate(rescalings, start=1):
        kern = Kernel("gaussian-conv", base.d, base.conv_power + J - j, base.smoothness_cap)
        out.append(RescaledKernel(kern, theta))
    return out


def is_convolution_schedule(kernels):
    """True when ``kernels`` follow ``Phi_j = Psi^{J-j}_{Theta_j}`` for a Gaussian ``Psi``."""
    J = len(kernels)
    if not all(k.base.is_gaussian for k in kernels):
        return False
    last = kernels[-1].base.conv_power
    return all(k.base.conv_power == last + J - j for j, k in enumerate(kernels, start=1))


def check_rescaling_admissibility(prev: Rescaling, nxt: Rescaling, d):
    """``lambda_max(Theta_prev' Theta_prev Xi_next' Xi_next)`` and whether it is <= 1.

    Returns ``(admissible, lam_max)``.
    """
    tp = prev.matrix(d)
    inv_n = nxt.inverse(d)
    prod = tp.T @ tp @ inv_n @ inv_n.T
    lam = float(np.max(np.linalg.eigvals(prod).real))
    return lam <= 1.0 + 1e-12, lam
