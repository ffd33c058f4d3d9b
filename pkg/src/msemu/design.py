"""Nested space-filling designs and their geometry.

Nets come from the Faure construction (generator matrices are powers of the
Pascal matrix mod a prime base), so points are produced in (0,s)-sequence
order and every prefix of ``b^m'`` points is itself a (0,m',s)-net.  Owen's
nested uniform scrambling (depth ``m``) plus a uniform jitter within the final
cell randomizes the points without breaking either property.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .errors import ArgumentError, FormatError


def _is_prime(b):
    if b < 2:
        return False
    return all(b % p for p in range(2, int(math.isqrt(b)) + 1))


@dataclass(frozen=True, eq=False)
class Design:
    """Distinct points in the unit cube, one row per point."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ArgumentError("a design needs at least one point given as an (n, d) array")
        if not np.all(np.isfinite(pts)):
            raise ArgumentError("design coordinates must be finite")
        if pts.min() < 0.0 or pts.max() > 1.0:
            raise ArgumentError("design coordinates must lie in [0, 1]")
        if pts.shape[0] > 1 and _min_pair_distance(pts) <= 0.0:
            raise ArgumentError("design points must be pairwise distinct")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]

    def __len__(self):
        return self.n


@dataclass(frozen=True, eq=False)
class NestedDesign:
    """Prefix nesting ``X_1 subset ... subset X_J``; ``X_j`` is the first ``n_j`` points."""

    design: Design
    stage_sizes: tuple = field(default=())

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.stage_sizes) or (self.design.n,)
        if any(s < 1 for s in sizes):
            raise ArgumentError("stage sizes must be positive")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ArgumentError(f"stage sizes must be strictly increasing, got {sizes}")
        if sizes[-1] != self.design.n:
            raise ArgumentError(f"last stage size {sizes[-1]} must equal the design size {self.design.n}")
        object.__setattr__(self, "stage_sizes", sizes)

    @property
    def J(self):
        return len(self.stage_sizes)

    @property
    def points(self):
        return self.design.points

    def prefix(self, j):
        """Points of stage ``j`` (1-based)."""
        if not 1 <= j <= self.J:
            raise ArgumentError(f"stage index {j} outside 1..{self.J}")
        return self.design.points[: self.stage_sizes[j - 1]]


def _min_pair_distance(pts):
    dist, _ = cKDTree(pts).query(pts, k=2)
    return float(dist[:, 1].min())


def _pascal_power(b, m, c):
    """``P^c mod b`` with ``P[r, k] = C(k, r)``; entries ``C(k, r) c^{k-r}``."""
    out = np.zeros((m, m), dtype=np.int64)
    for k in range(m):
        for r in range(k + 1):
            out[r, k] = (math.comb(k, r) * pow(c, k - r, b)) % b
    return out


def _faure_digits(b, m, s):
    """Output digits ``(n, s, m)`` of the first ``b^m`` Faure points, most significant first."""
    n = b**m
    idx = np.arange(n, dtype=np.int64)
    a = np.empty((n, m), dtype=np.int64)
    for k in range(m):
        a[:, k] = (idx // b**k) % b
    digits = np.empty((n, s, m), dtype=np.int64)
    for c in range(s):
        C = _pascal_power(b, m, c)
        digits[:, c, :] = (a @ C.T) % b
    return digits


def _owen_scramble(digits, b, rng):
    """Nested uniform scrambling: the permutation of digit k depends on digits 1..k-1."""
    n, s, m = digits.shape
    out = np.empty_like(digits)
    identity = np.tile(np.arange(b, dtype=np.int64), (1, 1))
    for c in range(s):
        code = np.zeros(n, dtype=np.int64)
        for k in range(m):
            uniq, inv = np.unique(code, return_inverse=True)
            perms = rng.permuted(np.repeat(identity, len(uniq), axis=0), axis=1)
            out[:, c, k] = perms[inv.ravel(), digits[:, c, k]]
            code = code * b + digits[:, c, k]
    return out


def generate_net(b, m, s, seed=0, scramble=True):
    """Randomized (0,m,s)-net in base ``b`` with ``b^m`` points.

    Parameters
    ----------
    b : int
        Prime base.
    m : int
        Net exponent, ``m >= 1`` (``m = 0`` gives a single point).
    s : int
        Dimension, ``s <= b``.
    seed : int
        Seed for the scrambling permutations and jitter.
    scramble : bool
        If False the raw Faure points (lower-left cell corners) are returned.

    Returns
    -------
    Design
        Points ordered so that each prefix of size ``b^m'`` is a (0,m',s)-net.
    """
    if not _is_prime(int(b)):
        raise ArgumentError(f"base {b} is not prime")
    if s < 1 or s > b:
        raise ArgumentError(f"the construction needs 1 <= s <= b, got s={s}, b={b}")
    if m < 0:
        raise ArgumentError("m must be nonnegative")
    digits = _faure_digits(b, m, s)
    weights = float(b) ** -np.arange(1, m + 1)
    if scramble:
        rng = np.random.default_rng(seed)
        digits = _owen_scramble(digits, b, rng)
        jitter = rng.random((b**m, s))
    else:
        jitter = np.zeros((b**m, s))
    pts = digits @ weights + jitter * float(b) ** -m
    return Design(pts)


def _compositions(m, s):
    for cut in itertools.combinations(range(m + s - 1), s - 1):
        parts, prev = [], -1
        for c in cut + (m + s - 1,):
            parts.append(c - prev - 1)
            prev = c
        yield parts


def verify_net(X, b, m, s=None):
    """True iff every base-``b`` elementary interval of volume ``b^-m`` holds one point."""
    pts = X.points if isinstance(X, Design) else np.atleast_2d(np.asarray(X, dtype=float))
    n = pts.shape[0]
    s = pts.shape[1] if s is None else s
    if pts.shape[1] != s:
        raise ArgumentError(f"design has dimension {pts.shape[1]}, expected {s}")
    if n != b**m:
        raise ArgumentError(f"a (0,{m},{s})-net in base {b} has {b**m} points, got {n}")
    for parts in _compositions(m, s):
        cell = np.zeros(n, dtype=np.int64)
        for c, dc in enumerate(parts):
            # small offset absorbs rounding for points sitting exactly on a cell corner
            k = np.floor(pts[:, c] * float(b) ** dc + 1e-10).astype(np.int64)
            k = np.clip(k, 0, b**dc - 1)
            cell = cell * b**dc + k
        if np.any(np.bincount(cell, minlength=n) != 1):
            return False
    return True


def separation_distance(X):
    """``q_X``: half the smallest pairwise Euclidean distance."""
    pts = X.points if isinstance(X, Design) else np.atleast_2d(np.asarray(X, dtype=float))
    if pts.shape[0] < 2:
        raise ArgumentError("separation distance needs at least two points")
    return 0.5 * _min_pair_distance(pts)


def _default_resolution(d):
    return 1024 if d <= 2 else 64


def fill_distance(X, resolution=None, n_candidates=100_000, seed=0):
    """Approximate ``h_X = sup_{x in [0,1]^d} min_u ||x - x_u||``.

    The supremum is taken over a candidate set: a ``resolution^d`` grid that
    includes the cube's faces for ``d <= 3``, otherwise at least
    ``n_candidates`` scrambled Sobol points (rounded up to a power of two) plus the ``2^d`` corners.  The result never exceeds
    the true fill distance and falls short of it by at most the candidate
    set's covering radius.
    """
    pts = X.points if isinstance(X, Design) else np.atleast_2d(np.asarray(X, dtype=float))
    if pts.size == 0:
        raise ArgumentError("fill distance of an empty design is undefined")
    d = pts.shape[1]
    if d <= 3:
        r = _default_resolution(d) if resolution is None else int(resolution)
        if r < 2:
            raise ArgumentError("resolution must be at least 2")
        axis = np.linspace(0.0, 1.0, r)
        cand = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    else:
        sob = qmc.Sobol(d, scramble=True, seed=seed)
        cand = sob.random_base2(max(1, math.ceil(math.log2(n_candidates))))
        corners = np.array(list(itertools.product([0.0, 1.0], repeat=d)))
        cand = np.vstack([cand, corners])
    tree = cKDTree(pts)
    best = 0.0
    for start in range(0, cand.shape[0], 262_144):
        dist, _ = tree.query(cand[start:start + 262_144], k=1)
        best = max(best, float(dist.max()))
    return best


def nest(X, stage_sizes):
    """Build the prefix nesting of ``X`` with the given stage sizes."""
    design = X if isinstance(X, Design) else Design(X)
    return NestedDesign(design, tuple(stage_sizes))


def uniform_points(n, d, seed):
    """I.i.d. uniform points on ``[0,1]^d`` (test sets)."""
    return np.random.default_rng(seed).random((n, d))


# -- CSV / JSON interchange -------------------------------------------------


def read_points_csv(path, with_values=False):
    """Read ``x1..xd[,y]`` rows.

    Returns ``points`` or ``(points, values)``; raises :class:`FormatError`
    naming the offending line.
    """
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise FormatError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        xcols = [i for i, h in enumerate(header) if h.startswith("x")]
        ycol = header.index("y") if "y" in header else None
        if not xcols:
            raise FormatError(f"{path}:1: header must name columns x1..xd")
        if with_values and ycol is None:
            raise FormatError(f"{path}:1: header has no 'y' column")
        rows, vals = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(row[i]) for i in xcols])
                if with_values:
                    vals.append(float(row[ycol]))
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric field") from None
    pts = np.array(rows, dtype=float).reshape(-1, len(xcols))
    if with_values:
        return pts, np.array(vals, dtype=float)
    return pts


def write_points_csv(path, points, values=None, extra=None):
    """Write points (and optionally a ``y`` column or extra named columns)."""
    points = np.atleast_2d(points)
    header = [f"x{i + 1}" for i in range(points.shape[1])]
    cols = [points]
    if values is not None:
        header.append("y")
        cols.append(np.asarray(values, dtype=float)[:, None])
    for name, col in (extra or {}).items():
        header.append(name)
        cols.append(np.asarray(col, dtype=float)[:, None])
    data = np.hstack(cols)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in data:
            w.writerow([repr(float(v)) for v in row])


def stage_sidecar_path(csv_path):
    p = Path(csv_path)
    return p.with_name(p.name + ".stages.json")


def write_nested(path, nd: NestedDesign):
    write_points_csv(path, nd.points)
    stage_sidecar_path(path).write_text(json.dumps({"stage_sizes": list(nd.stage_sizes)}) + "\n")


def read_nested(path):
    """Read a design CSV; stage sizes come from the sidecar when present."""
    pts = read_points_csv(path)
    side = stage_sidecar_path(path)
    sizes = (pts.shape[0],)
    if side.exists():
        try:
            sizes = tuple(json.loads(side.read_text())["stage_sizes"])
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"{side}: malformed stage sidecar") from exc
    return nest(Design(pts), sizes)
