"""Differential geometry of the rotation group SO(n).

Points are plain ``(..., n, n)`` float arrays; every function broadcasts over
leading batch axes. Tangent vectors at ``C`` are stored in ambient form
``C @ Omega`` with ``Omega`` skew-symmetric. The metric is the Frobenius inner
product, so ``geodesic_distance(a, b) == ||logm(a.T @ b)||_F``.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

TOL_ORTHO = 1e-10
TOL_CUTLOCUS = 1e-8
FRECHET_TOL = 1e-9
FRECHET_MAX_ITER = 100

# Above this rotation angle the eigh-based logarithm loses digits; defer to Schur.
_EIGH_MAX_ANGLE = np.pi - 1e-2


class CutLocusError(ValueError):
    """The logarithm is not unique: the relative rotation has eigenvalue -1."""


class NoConvergenceError(RuntimeError):
    pass


class SingularMatrixError(ValueError):
    pass


def _t(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


def sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + _t(a))


def skew(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a - _t(a))


def _check_square(*arrays: np.ndarray) -> None:
    shapes = {a.shape[-2:] for a in arrays}
    if len(shapes) != 1 or any(a.ndim < 2 or a.shape[-1] != a.shape[-2] for a in arrays):
        raise ValueError(f"dimension mismatch: {[a.shape for a in arrays]}")


def is_rotation(x: np.ndarray, tol: float = TOL_ORTHO) -> bool:
    """True if every matrix in ``x`` is orthogonal with determinant +1 within ``tol``."""
    x = np.asarray(x, dtype=float)
    if x.ndim < 2 or x.shape[-1] != x.shape[-2]:
        return False
    eye = np.eye(x.shape[-1])
    ortho = np.max(np.abs(_t(x) @ x - eye), initial=0.0) <= tol
    return bool(ortho and np.all(np.abs(np.linalg.det(x) - 1.0) <= tol))


def check_rotation(x, tol: float = TOL_ORTHO) -> np.ndarray:
    """Validate and return ``x`` as a float array of rotations."""
    x = np.asarray(x, dtype=float)
    if not is_rotation(x, tol):
        raise ValueError("matrix is not in SO(n) within tolerance")
    return x


def is_tangent(base: np.ndarray, v: np.ndarray, tol: float = 1e-10) -> bool:
    w = _t(base) @ v
    return bool(np.max(np.abs(w + _t(w)), initial=0.0) <= 2 * tol)


def project_to_tangent(base: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Orthogonal projection of an ambient matrix onto the tangent space at ``base``."""
    base, v = np.asarray(base, dtype=float), np.asarray(v, dtype=float)
    _check_square(base, v)
    return v - base @ sym(_t(base) @ v)


def qf(a: np.ndarray) -> np.ndarray:
    """Q factor of the QR decomposition with columns flipped so that diag(R) > 0."""
    q, r = np.linalg.qr(a)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    scale = np.max(np.abs(a), axis=(-2, -1), keepdims=True)[..., 0]
    if np.any(np.abs(d) <= 1e-14 * np.maximum(scale, 1e-300)):
        raise SingularMatrixError("singular matrix in QR retraction")
    return q * np.sign(d)[..., None, :]


def retract(base: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """QR retraction ``qf(base + xi)``."""
    base, xi = np.asarray(base, dtype=float), np.asarray(xi, dtype=float)
    _check_square(base, xi)
    return qf(base + xi)


def _logm_schur_single(r: np.ndarray, tol: float) -> np.ndarray:
    t, z = scipy.linalg.schur(r, output="real")
    n = r.shape[0]
    log_t = np.zeros_like(t)
    k = 0
    while k < n:
        if k + 1 < n and abs(t[k + 1, k]) > 1e-13:
            c = 0.5 * (t[k, k] + t[k + 1, k + 1])
            s = 0.5 * (t[k + 1, k] - t[k, k + 1])
            theta = np.arctan2(s, c)
            if np.pi - abs(theta) < tol:
                raise CutLocusError(f"rotation angle {theta!r} is on the cut locus")
            log_t[k, k + 1] = -theta
            log_t[k + 1, k] = theta
            k += 2
        else:
            if t[k, k] < 0:
                raise CutLocusError("relative rotation has eigenvalue -1")
            k += 1
    return skew(z @ log_t @ z.T)


def _logm_eigh(r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # sym(R) and skew(R) commute for orthogonal R; on each invariant plane
    # sym = cos(t) I and skew = sin(t) J, so log R = g(sym R) skew R with g(c) = t / sin t.
    lam, v = np.linalg.eigh(sym(r))
    theta = np.arccos(np.clip(lam, -1.0, 1.0))
    g = np.ones_like(theta)
    big = theta > 1e-8
    g[big] = theta[big] / np.sin(theta[big])
    small = ~big
    g[small] = 1.0 + theta[small] ** 2 / 6.0
    out = skew(((v * g[..., None, :]) @ _t(v)) @ skew(r))
    return out, theta.max(axis=-1, initial=0.0)


def logm_so(r: np.ndarray, tol: float = TOL_CUTLOCUS) -> np.ndarray:
    """Principal logarithm of rotation matrices; returns exactly skew-symmetric arrays.

    Raises CutLocusError when a rotation angle lies within ``tol`` of pi.
    """
    r = np.asarray(r, dtype=float)
    batch = r.shape[:-2]
    flat = r.reshape((-1,) + r.shape[-2:])
    out, max_angle = _logm_eigh(flat)
    for k in np.flatnonzero(~(max_angle < _EIGH_MAX_ANGLE)):
        out[k] = _logm_schur_single(flat[k], tol)
    return out.reshape(batch + r.shape[-2:])


def expm_skew(a: np.ndarray) -> np.ndarray:
    """Matrix exponential of skew-symmetric matrices (Pade scaling and squaring)."""
    a = np.asarray(a, dtype=float)
    return scipy.linalg.expm(skew(a))


def group_log(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Riemannian logarithm of ``b`` at ``a``, returned as a tangent vector at ``a``."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    _check_square(a, b)
    return a @ logm_so(_t(a) @ b)


def group_exp(base: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Riemannian exponential ``base @ expm(base.T @ xi)``."""
    base, xi = np.asarray(base, dtype=float), np.asarray(xi, dtype=float)
    _check_square(base, xi)
    return base @ expm_skew(_t(base) @ xi)


def geodesic_distance(a: np.ndarray, b: np.ndarray):
    """Bi-invariant geodesic distance; a float for single matrices, an array for batches."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    _check_square(a, b)
    d = np.linalg.norm(logm_so(_t(a) @ b), axis=(-2, -1))
    return float(d) if d.ndim == 0 else d


def project_to_group(v: np.ndarray) -> np.ndarray:
    """Nearest rotation in Frobenius norm, ``U diag(1, ..., 1, det(U W^T)) W^T``."""
    v = np.asarray(v, dtype=float)
    u, s, wt = np.linalg.svd(v)
    if np.any(s[..., -1] <= 1e-14 * np.maximum(s[..., 0], 1e-300)):
        raise SingularMatrixError("cannot project a singular matrix onto SO(n)")
    d = np.sign(np.linalg.det(u @ wt))
    u = u.copy()
    u[..., :, -1] *= d[..., None]
    return u @ wt


def haar_sample(n: int, rng: np.random.Generator, size: int | tuple | None = None) -> np.ndarray:
    """Haar-uniform random rotation(s) in SO(n)."""
    if n < 2:
        raise ValueError("n must be at least 2")
    shape = () if size is None else np.atleast_1d(size).tolist()
    g = rng.standard_normal(tuple(shape) + (n, n))
    q = qf(g)
    q[..., :, -1] *= np.sign(np.linalg.det(q))[..., None]
    return q


def frechet_mean(
    points,
    tol: float = FRECHET_TOL,
    max_iter: int = FRECHET_MAX_ITER,
) -> np.ndarray:
    """Karcher mean by the fixed-point iteration ``m <- exp_m(mean_k log_m(p_k))``.

    Starts from the first point. ``points`` is a sequence or a ``(K, n, n)`` array.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 3 or pts.shape[0] == 0:
        raise ValueError("need a nonempty (K, n, n) collection of rotations")
    m = pts[0]
    for _ in range(max_iter):
        step = np.mean(logm_so(m.T @ pts), axis=0)
        if np.linalg.norm(step) < tol:
            return m
        m = m @ expm_skew(step)
    raise NoConvergenceError(f"Frechet mean did not converge in {max_iter} iterations")
