"""Closed-form geometry of the unit 2-sphere and the product posture manifold.

Points are numpy arrays whose last axis has length 3. A posture is an array
of shape ``(P, 3)`` holding ``P = n - 1`` unit bone directions, and every
function here broadcasts over any leading axes, so the same call handles a
single sphere point, a posture, or a stack of postures over time.

Tangent coordinates of a posture ``Y`` at a base posture ``M`` are the
``2P``-vector ``(c_11, c_12, c_21, c_22, ...)`` of each part's log map
expressed in the orthonormal tangent basis returned by :func:`tangent_basis`.
"""

import numpy as np

from .errors import AntipodalError, DimensionMismatch, NotTangentError

ANTIPODAL_TOL = 1e-6
SMALL_ANGLE = 1e-9
EXP_ZERO = 1e-12
TANGENT_TOL = 1e-6

_AXES = np.eye(3)


def _first_offender(mask):
    idx = np.argwhere(mask)[0]
    part = int(idx[-1]) if mask.ndim >= 1 else None
    index = int(idx[-2]) if mask.ndim >= 2 else None
    return part, index


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


def normalize(x):
    """Scale vectors along the last axis to unit length."""
    x = np.asarray(x, dtype=float)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def _angle_and_proj(y, z):
    d = _dot(y, z)
    proj = z - d[..., None] * y
    s = np.linalg.norm(proj, axis=-1)
    theta = np.arctan2(s, d)
    return theta, proj, s


def _check_antipodal(theta):
    bad = theta > np.pi - ANTIPODAL_TOL
    if np.any(bad):
        part, index = _first_offender(np.asarray(bad))
        raise AntipodalError("points are antipodal, geodesic is not unique", part=part, index=index)


def sphere_distance(y, z):
    """Great-circle distance in radians, in ``[0, pi]``."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    return np.arctan2(np.linalg.norm(np.cross(y, z), axis=-1), _dot(y, z))


def sphere_geodesic(y, z, t):
    """Point at fraction ``t`` along the shortest great-circle arc from ``y`` to ``z``.

    ``t`` may be a scalar or broadcast against the leading axes of the points.
    """
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    t = np.asarray(t, dtype=float)
    theta = sphere_distance(y, z)
    _check_antipodal(theta)
    theta, t = np.broadcast_arrays(theta, t)
    small = theta < SMALL_ANGLE
    th = np.where(small, 1.0, theta)
    sin_th = np.sin(th)
    a = np.sin((1.0 - t) * th) / sin_th
    b = np.sin(t * th) / sin_th
    out = a[..., None] * y + b[..., None] * z
    return np.where(small[..., None], np.broadcast_to(y, out.shape), out)


def sphere_log(y, z):
    """Inverse exponential map: the tangent vector at ``y`` pointing to ``z``.

    Its norm equals the geodesic distance. Raises :class:`AntipodalError`
    for (nearly) antipodal pairs.
    """
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    theta, proj, s = _angle_and_proj(y, z)
    _check_antipodal(theta)
    # theta / sin(theta) -> 1 as theta -> 0
    factor = np.where(theta < SMALL_ANGLE, 1.0, theta / np.where(s > 0, s, 1.0))
    out = factor[..., None] * proj
    same = np.all(y == z, axis=-1)
    if np.any(same):
        out = np.where(same[..., None], 0.0, out)
    return out


def log_unchecked(y, z):
    """Like :func:`sphere_log` but returns ``(log, antipodal_mask)`` instead of raising.

    Antipodal entries are set to zero; callers decide whether they matter.
    """
    theta, proj, s = _angle_and_proj(y, z)
    bad = theta > np.pi - ANTIPODAL_TOL
    factor = np.where(theta < SMALL_ANGLE, 1.0, theta / np.where(s > 0, s, 1.0))
    out = np.where(bad[..., None], 0.0, factor[..., None] * proj)
    return out, bad


def sphere_exp(y, f):
    """Exponential map ``cos|f| y + sin|f| f/|f|``; ``f`` must be tangent at ``y``."""
    y = np.asarray(y, dtype=float)
    f = np.asarray(f, dtype=float)
    off = np.abs(_dot(y, f)) > TANGENT_TOL
    if np.any(off):
        part, index = _first_offender(np.asarray(off))
        raise NotTangentError(f"vector is not tangent at base point (part {part}, index {index})")
    n = np.linalg.norm(f, axis=-1)
    zero = n < EXP_ZERO
    nn = np.where(zero, 1.0, n)
    out = np.cos(nn)[..., None] * y + (np.sin(nn) / nn)[..., None] * f
    out = out / np.linalg.norm(out, axis=-1, keepdims=True)
    return np.where(zero[..., None], np.broadcast_to(y, out.shape), out)


def sphere_transport(y, z, f):
    """Parallel transport of ``f`` (tangent at ``y``) along the geodesic to ``z``."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    f = np.asarray(f, dtype=float)
    _check_antipodal(sphere_distance(y, z))
    s = y + z
    coef = 2.0 * _dot(f, z) / _dot(s, s)
    return f - coef[..., None] * s


def tangent_basis(y):
    """Orthonormal tangent basis ``(nu, omega)`` at ``y``.

    The Gram-Schmidt seed is the coordinate axis least aligned with ``y``
    (lowest index on ties) and ``omega = y x nu``, so the basis is a
    deterministic function of ``y``.
    """
    y = np.asarray(y, dtype=float)
    k = np.argmin(np.abs(y), axis=-1)
    e = _AXES[k]
    nu = e - _dot(e, y)[..., None] * y
    nu = nu / np.linalg.norm(nu, axis=-1, keepdims=True)
    omega = np.cross(y, nu)
    return nu, omega


def _check_parts(a, b):
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != 3 or b.shape[-1] != 3:
        raise DimensionMismatch(f"postures must have shape (P, 3), got {a.shape} and {b.shape}")
    if a.shape[-2] != b.shape[-2]:
        raise DimensionMismatch(f"posture part counts {a.shape[-2]} and {b.shape[-2]} differ")


def posture_distance(Y, Z):
    """Sum of part-wise great-circle distances between two postures."""
    Y = np.asarray(Y, dtype=float)
    Z = np.asarray(Z, dtype=float)
    _check_parts(Y, Z)
    return np.sum(sphere_distance(Y, Z), axis=-1)


def posture_log(M, Y):
    M = np.asarray(M, dtype=float)
    Y = np.asarray(Y, dtype=float)
    _check_parts(M, Y)
    return sphere_log(M, Y)


def posture_exp(M, F):
    M = np.asarray(M, dtype=float)
    F = np.asarray(F, dtype=float)
    _check_parts(M, F)
    return sphere_exp(M, F)


def posture_transport(M, Z, F):
    M = np.asarray(M, dtype=float)
    Z = np.asarray(Z, dtype=float)
    _check_parts(M, Z)
    return sphere_transport(M, Z, F)


def tangent_to_coords(M, F):
    """Express a tangent field at ``M`` in the basis of :func:`tangent_basis`."""
    nu, omega = tangent_basis(M)
    c = np.stack([_dot(F, nu), _dot(F, omega)], axis=-1)
    return c.reshape(c.shape[:-2] + (-1,))


def coords_to_tangent(M, c):
    """Inverse of :func:`tangent_to_coords`."""
    M = np.asarray(M, dtype=float)
    c = np.asarray(c, dtype=float)
    P = M.shape[-2]
    if c.shape[-1] != 2 * P:
        raise DimensionMismatch(f"expected {2 * P} coordinates, got {c.shape[-1]}")
    c = c.reshape(c.shape[:-1] + (P, 2))
    nu, omega = tangent_basis(M)
    return c[..., 0:1] * nu + c[..., 1:2] * omega


def posture_coords(M, Y):
    """Tangent coordinates of posture(s) ``Y`` at base posture ``M``.

    Part ``i`` contributes ``(theta_i / sin theta_i) W_i^T y_i``, which is the
    basis expansion of the log map; the part norm equals the geodesic distance.
    """
    M = np.asarray(M, dtype=float)
    return tangent_to_coords(M, posture_log(M, Y))


def coords_to_posture(M, c):
    """Map tangent coordinates at ``M`` back to the posture manifold."""
    return posture_exp(M, coords_to_tangent(M, c))


def part_norms(c):
    """Per-part 2-norms of a tangent coordinate vector (or stack of them)."""
    c = np.asarray(c, dtype=float)
    return np.linalg.norm(c.reshape(c.shape[:-1] + (-1, 2)), axis=-1)
