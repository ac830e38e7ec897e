"""Metric-space geometries and weighted Frechet-mean solvers.

Four response spaces are supported:

* ``wasserstein`` -- one-dimensional distributions represented by their
  quantile function evaluated on a fixed grid of ``m`` levels.
* ``spd_logcholesky`` -- symmetric positive-definite matrices with the
  Log-Cholesky distance.
* ``spd_affine`` -- SPD matrices with the affine-invariant distance.
* ``sphere`` -- unit vectors with the great-circle (geodesic) distance.

The first two spaces admit a global Euclidean embedding in which the metric
is the ordinary Euclidean distance, so weighted means reduce to weighted
averages in the embedding.  The sphere and the affine-invariant geometry are
genuinely curved and use an iterative Riemannian descent solver.

Objects are plain numpy arrays: a length-``m`` nondecreasing vector, an
``m x m`` SPD matrix, or a unit vector.  Collections of objects are stacked
along the first axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

WASSERSTEIN = "wasserstein"
SPD_LOGCHOLESKY = "spd_logcholesky"
SPD_AFFINE = "spd_affine"
SPHERE = "sphere"

KINDS = (WASSERSTEIN, SPD_LOGCHOLESKY, SPD_AFFINE, SPHERE)

_SYM_TOL = 1e-10
_UNIT_TOL = 1e-10


@dataclass(frozen=True)
class MetricSpace:
    """Descriptor of a response metric space.

    ``dim`` is the quantile-grid size, the matrix order, or the ambient
    dimension of the sphere.  ``normalization`` selects the quadrature weight
    of the Wasserstein distance: ``"riemann"`` divides the squared grid
    differences by ``dim`` (a Riemann sum over [0, 1]), ``"euclidean"`` uses
    the raw Euclidean distance between quantile vectors.
    """

    kind: str
    dim: int
    normalization: str = "riemann"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown metric space kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("space dimension must be >= 1")
        if self.normalization not in ("riemann", "euclidean"):
            raise ValueError(f"unknown normalization {self.normalization!r}")

    @property
    def is_spd(self) -> bool:
        return self.kind in (SPD_LOGCHOLESKY, SPD_AFFINE)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dim": self.dim,
                "normalization": self.normalization}

    @staticmethod
    def from_dict(d: dict) -> "MetricSpace":
        return MetricSpace(d["kind"], int(d["dim"]),
                           d.get("normalization", "riemann"))


def wasserstein_space(grid_size: int = 21, normalization: str = "riemann") -> MetricSpace:
    return MetricSpace(WASSERSTEIN, grid_size, normalization)


def spd_space(order: int, metric: str = "logcholesky") -> MetricSpace:
    kind = SPD_LOGCHOLESKY if metric == "logcholesky" else SPD_AFFINE
    return MetricSpace(kind, order)


def sphere_space(ambient_dim: int = 3) -> MetricSpace:
    return MetricSpace(SPHERE, ambient_dim)


# ---------------------------------------------------------------------------
# object validation


def validate_object(space: MetricSpace, y: np.ndarray) -> np.ndarray:
    """Check a single object against its space invariants.

    Returns the validated array (as float ndarray).  Raises ValueError on a
    shape mismatch or invariant violation.
    """
    y = np.asarray(y, dtype=float)
    if space.kind == WASSERSTEIN:
        if y.shape != (space.dim,):
            raise ValueError(f"expected quantile vector of length {space.dim}, "
                             f"got shape {y.shape}")
        if np.any(np.diff(y) < -1e-9):
            raise ValueError("quantile vector is not nondecreasing")
    elif space.is_spd:
        m = space.dim
        if y.shape != (m, m):
            raise ValueError(f"expected {m}x{m} matrix, got shape {y.shape}")
        if np.max(np.abs(y - y.T)) > max(_SYM_TOL, _SYM_TOL * np.abs(y).max()):
            raise ValueError("matrix is not symmetric")
        # positive definiteness checked by the Cholesky factorization
        cholesky_factor(y)
    elif space.kind == SPHERE:
        if y.shape != (space.dim,):
            raise ValueError(f"expected unit vector of length {space.dim}, "
                             f"got shape {y.shape}")
        if abs(np.linalg.norm(y) - 1.0) > 100 * _UNIT_TOL:
            raise ValueError("vector does not have unit norm")
    return y


def stack_objects(space: MetricSpace, objects) -> np.ndarray:
    """Stack a list of objects into a single array along axis 0."""
    return np.stack([np.asarray(y, dtype=float) for y in objects])


# ---------------------------------------------------------------------------
# SPD primitives


def cholesky_factor(y: np.ndarray) -> np.ndarray:
    """Lower-triangular Cholesky factor with positive diagonal."""
    try:
        return np.linalg.cholesky(np.asarray(y, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise ValueError("matrix is not positive definite") from exc


def matrix_log(y: np.ndarray) -> np.ndarray:
    """Logarithm of an SPD matrix via symmetric eigendecomposition."""
    y = np.asarray(y, dtype=float)
    if np.max(np.abs(y - y.T)) > max(_SYM_TOL, _SYM_TOL * np.abs(y).max()):
        raise ValueError("matrix is not symmetric")
    vals, vecs = np.linalg.eigh(y)
    if vals[0] <= 0:
        raise ValueError("matrix is not positive definite")
    return (vecs * np.log(vals)) @ vecs.T


def matrix_exp(a: np.ndarray) -> np.ndarray:
    """Exponential of a symmetric matrix; the result is SPD."""
    a = np.asarray(a, dtype=float)
    if np.max(np.abs(a - a.T)) > max(_SYM_TOL, _SYM_TOL * np.abs(a).max() if a.size else _SYM_TOL):
        raise ValueError("matrix is not symmetric")
    vals, vecs = np.linalg.eigh(a)
    return (vecs * np.exp(vals)) @ vecs.T


def _batch_sym_log(mats: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mats)
    return np.einsum("...ij,...j,...kj->...ik", vecs, np.log(vals), vecs)


def _sqrt_and_invsqrt(y: np.ndarray):
    vals, vecs = np.linalg.eigh(y)
    if vals[0] <= 0:
        raise ValueError("matrix is not positive definite")
    s = np.sqrt(vals)
    return (vecs * s) @ vecs.T, (vecs / s) @ vecs.T


# ---------------------------------------------------------------------------
# sphere primitives


def sphere_exp(base: np.ndarray, tangent: np.ndarray) -> np.ndarray:
    """Riemannian exponential map on the unit sphere."""
    base = np.asarray(base, dtype=float)
    tangent = np.asarray(tangent, dtype=float)
    if abs(base @ tangent) > 1e-8 * (1.0 + np.linalg.norm(tangent)):
        raise ValueError("tangent vector is not orthogonal to the base point")
    norm = np.linalg.norm(tangent)
    if norm < 1e-15:
        return base.copy()
    out = np.cos(norm) * base + np.sin(norm) * tangent / norm
    return out / np.linalg.norm(out)


def sphere_log(base: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Riemannian log map; the returned tangent has the geodesic length."""
    base = np.asarray(base, dtype=float)
    target = np.asarray(target, dtype=float)
    dot = float(np.clip(base @ target, -1.0, 1.0))
    if dot <= -1.0 + 1e-12:
        raise ValueError("antipodal points: geodesic is not unique")
    proj = target - dot * base
    norm = np.linalg.norm(proj)
    if norm < 1e-15:
        return np.zeros_like(base)
    return np.arccos(dot) * proj / norm


def _sphere_logs(base: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Log map of a stack of points, without the antipodal check."""
    dots = np.clip(targets @ base, -1.0, 1.0)
    proj = targets - dots[:, None] * base
    norms = np.linalg.norm(proj, axis=1)
    theta = np.arccos(dots)
    scale = np.where(norms > 1e-15, theta / np.maximum(norms, 1e-300), 0.0)
    return scale[:, None] * proj


# ---------------------------------------------------------------------------
# isotonic projection


def isotonic_project(values: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the nondecreasing cone (PAVA)."""
    v = np.asarray(values, dtype=float)
    n = v.size
    # pooled blocks: (sum, count); merge backwards while means decrease
    sums = np.empty(n)
    counts = np.empty(n, dtype=np.intp)
    k = 0
    for x in v:
        sums[k] = x
        counts[k] = 1
        k += 1
        while k > 1 and sums[k - 1] * counts[k - 2] < sums[k - 2] * counts[k - 1]:
            sums[k - 2] += sums[k - 1]
            counts[k - 2] += counts[k - 1]
            k -= 1
    out = np.empty(n)
    pos = 0
    for b in range(k):
        out[pos:pos + counts[b]] = sums[b] / counts[b]
        pos += counts[b]
    return out


# ---------------------------------------------------------------------------
# distances


def _wasserstein_scale(space: MetricSpace) -> float:
    return 1.0 / space.dim if space.normalization == "riemann" else 1.0


def distance(space: MetricSpace, a: np.ndarray, b: np.ndarray) -> float:
    """Distance between two objects of the space."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if space.kind == WASSERSTEIN:
        return float(np.sqrt(_wasserstein_scale(space) * np.sum((a - b) ** 2)))
    if space.kind == SPHERE:
        return float(np.arccos(np.clip(a @ b, -1.0, 1.0)))
    if space.kind == SPD_LOGCHOLESKY:
        ea = _logchol_embed_one(a)
        eb = _logchol_embed_one(b)
        return float(np.linalg.norm(ea - eb))
    # affine-invariant
    _, isq = _sqrt_and_invsqrt(a)
    mid = isq @ b @ isq
    vals = np.linalg.eigvalsh((mid + mid.T) / 2.0)
    if vals[0] <= 0:
        raise ValueError("matrix is not positive definite")
    return float(np.sqrt(np.sum(np.log(vals) ** 2)))


def dist2_to_point(space: MetricSpace, ystack: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Squared distances from every stacked object to ``y``."""
    y = np.asarray(y, dtype=float)
    if space.kind == WASSERSTEIN:
        return _wasserstein_scale(space) * np.sum((ystack - y) ** 2, axis=1)
    if space.kind == SPHERE:
        return np.arccos(np.clip(ystack @ y, -1.0, 1.0)) ** 2
    if space.kind == SPD_LOGCHOLESKY:
        e = embed(space, ystack)
        ey = _logchol_embed_one(y)
        return np.sum((e - ey) ** 2, axis=1)
    _, isq = _sqrt_and_invsqrt(y)
    mids = np.einsum("ij,njk,kl->nil", isq, ystack, isq)
    mids = (mids + np.swapaxes(mids, 1, 2)) / 2.0
    vals = np.linalg.eigvalsh(mids)
    return np.sum(np.log(np.maximum(vals, 1e-300)) ** 2, axis=1)


# ---------------------------------------------------------------------------
# Euclidean embeddings (Wasserstein, Log-Cholesky)


def has_embedding(space: MetricSpace) -> bool:
    return space.kind in (WASSERSTEIN, SPD_LOGCHOLESKY)


def _logchol_embed_one(y: np.ndarray) -> np.ndarray:
    L = cholesky_factor(y)
    m = L.shape[0]
    tril = np.tril_indices(m, -1)
    return np.concatenate([L[tril], np.log(np.diag(L))])


def embed(space: MetricSpace, ystack: np.ndarray) -> np.ndarray:
    """Isometric Euclidean embedding of a stack of objects."""
    if space.kind == WASSERSTEIN:
        return np.sqrt(_wasserstein_scale(space)) * np.asarray(ystack, dtype=float)
    if space.kind == SPD_LOGCHOLESKY:
        ys = np.asarray(ystack, dtype=float)
        L = np.linalg.cholesky(ys)
        m = space.dim
        tril = np.tril_indices(m, -1)
        diag = np.arange(m)
        return np.concatenate(
            [L[:, tril[0], tril[1]], np.log(L[:, diag, diag])], axis=1)
    raise ValueError(f"space {space.kind} has no Euclidean embedding")


def unembed(space: MetricSpace, e: np.ndarray) -> np.ndarray:
    """Inverse of :func:`embed`; accepts a single vector or a stack."""
    e = np.asarray(e, dtype=float)
    if space.kind == WASSERSTEIN:
        return e / np.sqrt(_wasserstein_scale(space))
    if space.kind == SPD_LOGCHOLESKY:
        if e.ndim == 2:
            return np.stack([unembed(space, row) for row in e])
        m = space.dim
        L = np.zeros((m, m))
        tril = np.tril_indices(m, -1)
        k = tril[0].size
        L[tril] = e[:k]
        L[np.arange(m), np.arange(m)] = np.exp(e[k:])
        return L @ L.T
    raise ValueError(f"space {space.kind} has no Euclidean embedding")


# ---------------------------------------------------------------------------
# weighted Frechet means


def frechet_objective(space: MetricSpace, ystack: np.ndarray,
                      weights: np.ndarray, y: np.ndarray) -> float:
    """Weighted sum of squared distances ``sum_i w_i d^2(Y_i, y)``."""
    weights = np.asarray(weights, dtype=float)
    if len(weights) != len(ystack):
        raise ValueError("weights and objects have different lengths")
    return float(weights @ dist2_to_point(space, ystack, y))


def weighted_frechet_mean(space: MetricSpace, ystack: np.ndarray,
                          weights: np.ndarray, return_info: bool = False):
    """Minimizer of the weighted Frechet objective.

    Weights may be signed (local-linear estimators produce signed weights)
    but must have a positive total.  For the embedded spaces the minimizer is
    the weighted average in the embedding; the quantile result is projected
    back onto the nondecreasing cone, which is only active for signed
    weights.  Curved spaces use Riemannian descent with step halving.
    """
    ystack = np.asarray(ystack, dtype=float)
    w = np.asarray(weights, dtype=float)
    if len(w) != len(ystack):
        raise ValueError("weights and objects have different lengths")
    total = w.sum()
    if total <= 0 or not np.any(w != 0):
        raise ValueError("total weight must be positive")
    wn = w / total

    info = {"converged": True, "iterations": 0}
    if space.kind == WASSERSTEIN:
        out = isotonic_project(wn @ ystack)
    elif space.kind == SPD_LOGCHOLESKY:
        out = unembed(space, wn @ embed(space, ystack))
    elif space.kind == SPHERE:
        out, info = _sphere_mean(ystack, wn)
    else:
        out, info = _affine_mean(space, ystack, wn)
    if return_info:
        return out, info
    return out


_MAX_ITER = 200
_OBJ_TOL = 1e-10


_MULTISTART_CAP = 8


def _signed_starts(ystack: np.ndarray, wn: np.ndarray) -> list:
    """Extra descent starts for signed weights (non-convex objective)."""
    if not np.any(wn < 0):
        return []
    order = np.argsort(-np.abs(wn))[:min(len(wn), _MULTISTART_CAP)]
    return [ystack[i] for i in order]


def _sphere_mean(ystack: np.ndarray, wn: np.ndarray):
    extrinsic = wn @ ystack
    norm = np.linalg.norm(extrinsic)
    if norm < 1e-6:
        y = ystack[int(np.argmax(wn))].copy()
    else:
        y = extrinsic / norm
    best = None
    for start in [y] + _signed_starts(ystack, wn):
        cand = _sphere_descent(ystack, wn, start)
        if best is None or cand[1]["objective"] < best[1]["objective"]:
            best = cand
    return best


def _sphere_descent(ystack: np.ndarray, wn: np.ndarray, y: np.ndarray):
    def obj(p):
        return float(wn @ (np.arccos(np.clip(ystack @ p, -1.0, 1.0)) ** 2))

    cur = obj(y)
    step = 1.0
    converged = False
    it = 0
    for it in range(1, _MAX_ITER + 1):
        v = wn @ _sphere_logs(y, ystack)
        v -= (v @ y) * y
        if np.linalg.norm(v) < 1e-14:
            converged = True
            break
        accepted = False
        while step >= 1e-12:
            cand = _sphere_step(y, step * v)
            cand_obj = obj(cand)
            if cand_obj < cur:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            converged = True
            break
        improvement = cur - cand_obj
        y, cur = cand, cand_obj
        step = min(1.0, 2.0 * step)
        if improvement < _OBJ_TOL:
            converged = True
            break
    return y, {"converged": converged, "iterations": it, "objective": cur}


def _sphere_step(base: np.ndarray, v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    if norm < 1e-15:
        return base
    out = np.cos(norm) * base + np.sin(norm) * v / norm
    return out / np.linalg.norm(out)


def _affine_mean(space: MetricSpace, ystack: np.ndarray, wn: np.ndarray):
    logchol = MetricSpace(SPD_LOGCHOLESKY, space.dim)
    y = unembed(logchol, wn @ embed(logchol, ystack))
    best = None
    for start in [y] + _signed_starts(ystack, wn):
        cand = _affine_descent(ystack, wn, start)
        if best is None or cand[1]["objective"] < best[1]["objective"]:
            best = cand
    return best


def _affine_descent(ystack: np.ndarray, wn: np.ndarray, y: np.ndarray):
    def obj_and_logs(p):
        _, isq = _sqrt_and_invsqrt(p)
        mids = np.einsum("ij,njk,kl->nil", isq, ystack, isq)
        mids = (mids + np.swapaxes(mids, 1, 2)) / 2.0
        logs = _batch_sym_log(mids)
        vals = np.linalg.eigvalsh(mids)
        o = float(wn @ np.sum(np.log(np.maximum(vals, 1e-300)) ** 2, axis=1))
        return o, logs

    cur, logs = obj_and_logs(y)
    step = 1.0
    converged = False
    it = 0
    for it in range(1, _MAX_ITER + 1):
        v = np.einsum("n,nij->ij", wn, logs)
        if np.linalg.norm(v) < 1e-14:
            converged = True
            break
        sq, _ = _sqrt_and_invsqrt(y)
        accepted = False
        while step >= 1e-12:
            cand = sq @ matrix_exp(step * (v + v.T) / 2.0) @ sq
            cand = (cand + cand.T) / 2.0
            cand_obj, cand_logs = obj_and_logs(cand)
            if cand_obj < cur:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            converged = True
            break
        improvement = cur - cand_obj
        y, cur, logs = cand, cand_obj, cand_logs
        step = min(1.0, 2.0 * step)
        if improvement < _OBJ_TOL:
            converged = True
            break
    return y, {"converged": converged, "iterations": it, "objective": cur}
