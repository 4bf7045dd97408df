"""Traceless symmetric tensors, rotations, and radial/angular bases.

A symmetric traceless 3x3 tensor is stored as the 5-vector
``[T_xy, T_xz, T_yz, T_an, T_zz]`` with ``T_an = (T_xx - T_yy) / 2``.
Under this convention the rotation-invariant Frobenius norm is

    ||T|| = sqrt(2*(T_xy^2 + T_xz^2 + T_yz^2 + T_an^2) + 1.5*T_zz^2),

which coincides with the plain Frobenius norm of the full 3x3 tensor.
All routines work in float64.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

__all__ = [
    "to_traceless5",
    "from_traceless5",
    "frob_norm5",
    "frob_norms5",
    "gyration_tensor",
    "gyration_tensors",
    "cos_gyration",
    "rotate_vec",
    "rotate5",
    "rbf_basis",
    "legendre_basis",
    "sample_rotation",
    "check_rotation",
]

_SQRT_3_2 = np.sqrt(1.5)


def to_traceless5(full: np.ndarray) -> np.ndarray:
    """Convert a symmetric 3x3 tensor to the traceless 5-vector form.

    The isotropic part (trace/3 on the diagonal) is removed first.
    Raises ValidationError if the input is not symmetric within 1e-9
    relative to its largest element.
    """
    t = np.asarray(full, dtype=float)
    if t.shape != (3, 3):
        raise ValidationError(f"expected a 3x3 tensor, got shape {t.shape}")
    scale = max(1.0, float(np.abs(t).max()))
    asym = float(np.abs(t - t.T).max())
    if asym > 1e-9 * scale:
        raise ValidationError(f"tensor not symmetric (max asymmetry {asym:.3e})")
    iso = np.trace(t) / 3.0
    return np.array(
        [
            t[0, 1],
            t[0, 2],
            t[1, 2],
            (t[0, 0] - t[1, 1]) / 2.0,
            t[2, 2] - iso,
        ]
    )


def from_traceless5(t5: np.ndarray) -> np.ndarray:
    """Rebuild the full symmetric traceless 3x3 tensor from its 5-vector."""
    t_xy, t_xz, t_yz, t_an, t_zz = np.asarray(t5, dtype=float)
    t_xx = t_an - t_zz / 2.0
    t_yy = -t_an - t_zz / 2.0
    return np.array(
        [
            [t_xx, t_xy, t_xz],
            [t_xy, t_yy, t_yz],
            [t_xz, t_yz, t_zz],
        ]
    )


def frob_norm5(t5: np.ndarray) -> float:
    """Rotation-invariant Frobenius norm of a traceless 5-vector."""
    t = np.asarray(t5, dtype=float)
    return float(np.sqrt(2.0 * np.dot(t[:4], t[:4]) + 1.5 * t[4] ** 2))


def frob_norms5(t5: np.ndarray) -> np.ndarray:
    """Vectorized `frob_norm5` over an (n, 5) array."""
    t = np.asarray(t5, dtype=float)
    return np.sqrt(2.0 * np.sum(t[:, :4] ** 2, axis=1) + 1.5 * t[:, 4] ** 2)


def gyration_tensor(unit_r: np.ndarray) -> np.ndarray:
    """Unit-norm traceless outer product of a unit vector.

    G(r) = sqrt(3/2) * [r_x r_y, r_x r_z, r_y r_z, (r_x^2 - r_y^2)/2, r_z^2 - 1/3]
    which always has unit Frobenius norm.
    """
    r = np.asarray(unit_r, dtype=float)
    if r.shape != (3,):
        raise ValidationError(f"expected a 3-vector, got shape {r.shape}")
    n = float(np.linalg.norm(r))
    if abs(n - 1.0) > 1e-9:
        raise ValidationError(f"input must be a unit vector (norm {n:.12f})")
    x, y, z = r
    return _SQRT_3_2 * np.array([x * y, x * z, y * z, (x * x - y * y) / 2.0, z * z - 1.0 / 3.0])


def gyration_tensors(unit_r: np.ndarray) -> np.ndarray:
    """Vectorized `gyration_tensor` over an (n, 3) array of unit vectors."""
    r = np.asarray(unit_r, dtype=float)
    x, y, z = r[:, 0], r[:, 1], r[:, 2]
    return _SQRT_3_2 * np.stack(
        [x * y, x * z, y * z, (x * x - y * y) / 2.0, z * z - 1.0 / 3.0], axis=1
    )


def cos_gyration(a: np.ndarray, b: np.ndarray) -> float:
    """Inner product Tr(A^T B) of two unit-norm traceless 5-vectors.

    For gyration tensors of unit vectors at angle theta this equals the
    second Legendre polynomial P2(cos theta).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    for name, t in (("a", a), ("b", b)):
        n = frob_norm5(t)
        if abs(n - 1.0) > 1e-6:
            raise ValidationError(f"{name} must have unit Frobenius norm (got {n:.8f})")
    return float(2.0 * np.dot(a[:4], b[:4]) + 1.5 * a[4] * b[4])


def rotate_vec(rot: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Apply a rotation matrix to a 3-vector."""
    return np.asarray(rot, dtype=float) @ np.asarray(v, dtype=float)


def rotate5(rot: np.ndarray, t5: np.ndarray) -> np.ndarray:
    """Rotate a traceless 5-vector: T -> R T R^T through the full tensor."""
    r = np.asarray(rot, dtype=float)
    full = from_traceless5(t5)
    return to_traceless5(r @ full @ r.T)


def rbf_basis(r, cutoff: float, n_max: int) -> np.ndarray:
    """Sinc-like radial basis with a smooth cosine cutoff envelope.

    Component n (1-based) is
        sqrt(2/c) * sin(n pi r / c) / r * (1 + cos(pi r / c)) / 2,
    with the removable r=0 singularity replaced by its analytic limit
    sqrt(2/c) * n pi / c. Accepts a scalar or an array of distances and
    returns shape (..., n_max).

    Distances must satisfy 0 <= r <= cutoff; edges longer than the
    cutoff must never be built in the first place.
    """
    if n_max < 1:
        raise ValidationError("n_max must be >= 1")
    if cutoff <= 0:
        raise ValidationError("cutoff must be positive")
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise ValidationError("negative distance in rbf_basis")
    if np.any(r_arr > cutoff * (1 + 1e-12)):
        raise ValidationError("distance beyond cutoff in rbf_basis")
    n = np.arange(1, n_max + 1, dtype=float)
    scale = np.sqrt(2.0 / cutoff)
    envelope = 0.5 * (1.0 + np.cos(np.pi * np.minimum(r_arr, cutoff) / cutoff))
    rr = r_arr[..., None]
    with np.errstate(invalid="ignore", divide="ignore"):
        radial = np.sin(n * np.pi * rr / cutoff) / rr
    limit = n * np.pi / cutoff
    radial = np.where(rr == 0.0, limit, radial)
    return scale * radial * envelope[..., None]


def legendre_basis(x, degree: int) -> np.ndarray:
    """Legendre polynomials P_0..P_degree via the three-term recurrence.

    Inputs are clamped to [-1, 1]; values beyond 1 + 1e-9 in magnitude
    are rejected. Accepts scalars or arrays, returns (..., degree + 1).
    """
    if degree < 0:
        raise ValidationError("degree must be >= 0")
    x_arr = np.asarray(x, dtype=float)
    if np.any(np.abs(x_arr) > 1.0 + 1e-9):
        raise ValidationError("legendre_basis input outside [-1, 1]")
    x_arr = np.clip(x_arr, -1.0, 1.0)
    out = np.empty(x_arr.shape + (degree + 1,))
    out[..., 0] = 1.0
    if degree >= 1:
        out[..., 1] = x_arr
    for n in range(1, degree):
        out[..., n + 1] = ((2 * n + 1) * x_arr * out[..., n] - n * out[..., n - 1]) / (n + 1)
    return out


def sample_rotation(rng: np.random.Generator) -> np.ndarray:
    """Draw a Haar-uniform rotation matrix via a random unit quaternion."""
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def check_rotation(rot: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Validate orthogonality and det=+1 within ``tol``; returns the matrix."""
    r = np.asarray(rot, dtype=float)
    if r.shape != (3, 3):
        raise ValidationError(f"rotation must be 3x3, got {r.shape}")
    if np.abs(r @ r.T - np.eye(3)).max() > tol:
        raise ValidationError("matrix is not orthogonal")
    if abs(np.linalg.det(r) - 1.0) > tol:
        raise ValidationError("matrix determinant is not +1")
    return r
