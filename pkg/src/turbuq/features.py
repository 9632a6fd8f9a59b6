"""Structured-grid gradients and the nine non-dimensional flow features.

Per point the features are, with S / W the symmetric and antisymmetric
parts of the velocity gradient, ||.|| Frobenius norms and eps a small
additive guard on every denominator:

    q1  (||W||^2 - ||S||^2) / (||W||^2 + ||S||^2)          Q criterion
    q2  k / (0.5 U_i U_i + k)                              turbulence intensity
    q3  min(sqrt(k) d / (50 nu), 2)                        turbulence Re number
    q4  U_k dP/dx_k / (sqrt(dP/dx_j dP/dx_j U_i U_i)
                       + |U_l dP/dx_l|)                    streamwise dP
    q5  |grad P| / (|grad P| + |0.5 rho grad(U_k U_k)|)    pressure vs inertia
    q6  nu_t / (100 nu + nu_t)                             viscosity ratio
    q7  ||2 nu_t S|| / (k + ||2 nu_t S||)                  stress ratio
    q8  ||U|| / C0                                         Mach number
    q9  ||S|| k / (||S|| k + epsilon)                      time-scale ratio

All nine are rotation invariant. The q5 inertia term is the magnitude of
the kinetic-energy gradient vector 0.5 rho d(U_k U_k)/dx_j = rho (G^T U)_j,
which keeps the feature non-negative, bounded by one and frame-indifferent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

from .errors import ConfigError, DataError, DomainError
from .tensors import SymTensor3

if TYPE_CHECKING:
    from .dataset import FlowFieldSnapshot

#: Additive guard applied to every feature denominator.
DENOM_GUARD = 1e-30

FEATURE_NAMES = ("q1", "q2", "q3", "q4", "q5", "q6", "q7", "q8", "q9")

#: Declared (min, max) range of each feature.
FEATURE_RANGES = (
    (-1.0, 1.0),
    (0.0, 1.0),
    (0.0, 2.0),
    (-1.0, 1.0),
    (0.0, 1.0),
    (0.0, 1.0),
    (0.0, 1.0),
    (0.0, math.inf),
    (0.0, 1.0),
)


@dataclass
class GradientField:
    """Per-point gradients: velocity gradient tensor, grad P and grad k."""

    grad_u: np.ndarray  # (n, 3, 3), entry (i, j) = dU_i / dx_j
    grad_p: np.ndarray  # (n, 3)
    grad_k: np.ndarray  # (n, 3)

    def __post_init__(self):
        n = self.grad_u.shape[0]
        if self.grad_u.shape != (n, 3, 3) or self.grad_p.shape != (n, 3) or self.grad_k.shape != (n, 3):
            raise DataError("gradient arrays are not co-indexed (n,3,3)/(n,3)/(n,3)")

    @property
    def n_points(self) -> int:
        return self.grad_u.shape[0]


class FeatureVector(NamedTuple):
    q1: float
    q2: float
    q3: float
    q4: float
    q5: float
    q6: float
    q7: float
    q8: float
    q9: float

    def as_array(self) -> np.ndarray:
        return np.array(self)


def strain_and_rotation(grad_u) -> tuple[SymTensor3, np.ndarray]:
    """Split a velocity gradient into strain rate S and rotation rate W.

    S + W reconstructs the input exactly.
    """
    g = np.asarray(grad_u, dtype=float)
    if g.shape != (3, 3):
        raise DomainError(f"velocity gradient must be 3x3, got shape {g.shape}")
    s = SymTensor3(
        g[0, 0],
        g[1, 1],
        g[2, 2],
        0.5 * (g[0, 1] + g[1, 0]),
        0.5 * (g[0, 2] + g[2, 0]),
        0.5 * (g[1, 2] + g[2, 1]),
    )
    w = 0.5 * (g - g.T)
    return s, w


def _index_derivative(a: np.ndarray, axis: int) -> np.ndarray:
    """d/d(index) along an axis: central interior, one-sided at the ends."""
    out = np.empty_like(a)
    sl = [slice(None)] * a.ndim

    def at(idx):
        s = sl.copy()
        s[axis] = idx
        return tuple(s)

    out[at(slice(1, -1))] = 0.5 * (a[at(slice(2, None))] - a[at(slice(None, -2))])
    out[at(0)] = a[at(1)] - a[at(0)]
    out[at(-1)] = a[at(-1)] - a[at(-2)]
    return out


def compute_gradients(snapshot: "FlowFieldSnapshot") -> GradientField:
    """Gradients of U, P and k on a structured, possibly curvilinear grid.

    If the snapshot already carries gradient columns they are returned
    unchanged. Otherwise the grid dims (nx, ny) are required; derivatives
    are taken along the index directions (second order in the interior,
    first-order one-sided at boundaries) and mapped to physical space
    through the inverse grid Jacobian. Point ordering is row major with
    the x index fastest: point = j * nx + i.
    """
    if snapshot.gradients is not None:
        return snapshot.gradients
    if snapshot.nx is None or snapshot.ny is None:
        raise ConfigError(
            "cannot compute gradients: snapshot has neither gradient columns "
            "nor structured grid dims (nx, ny)"
        )
    nx, ny = snapshot.nx, snapshot.ny
    if nx < 2 or ny < 2:
        raise ConfigError(f"structured gradients need nx, ny >= 2, got ({nx}, {ny})")

    def grid(name, arr):
        if arr is None:
            raise ConfigError(f"gradient computation needs the '{name}' field")
        return arr.reshape(ny, nx)

    x = grid("x", snapshot.x)
    y = grid("y", snapshot.y)
    x_xi = _index_derivative(x, 1)
    x_eta = _index_derivative(x, 0)
    y_xi = _index_derivative(y, 1)
    y_eta = _index_derivative(y, 0)
    det = x_xi * y_eta - x_eta * y_xi
    if np.any(det == 0.0) or (np.any(det > 0.0) and np.any(det < 0.0)):
        bad = int(np.argmin(np.abs(det)))
        raise DataError(
            "grid coordinate lines are non-monotone or degenerate "
            f"(singular mapping near point {bad})"
        )
    xi_x = y_eta / det
    xi_y = -x_eta / det
    eta_x = -y_xi / det
    eta_y = x_xi / det

    def ddx_ddy(f2d):
        f_xi = _index_derivative(f2d, 1)
        f_eta = _index_derivative(f2d, 0)
        return f_xi * xi_x + f_eta * eta_x, f_xi * xi_y + f_eta * eta_y

    n = snapshot.n_points
    grad_u = np.zeros((n, 3, 3))
    for row, field in ((0, snapshot.u), (1, snapshot.v), (2, snapshot.w)):
        if field is None or not np.any(field):
            continue
        fx, fy = ddx_ddy(grid("velocity", field))
        grad_u[:, row, 0] = fx.ravel()
        grad_u[:, row, 1] = fy.ravel()

    grad_p = np.zeros((n, 3))
    px, py = ddx_ddy(grid("P", snapshot.p))
    grad_p[:, 0] = px.ravel()
    grad_p[:, 1] = py.ravel()

    grad_k = np.zeros((n, 3))
    kx, ky = ddx_ddy(grid("k", snapshot.k))
    grad_k[:, 0] = kx.ravel()
    grad_k[:, 1] = ky.ravel()

    return GradientField(grad_u, grad_p, grad_k)


def compute_features(
    point: int, snapshot: "FlowFieldSnapshot", gradients: GradientField
) -> FeatureVector:
    """Evaluate the nine features at one grid point."""
    nu = snapshot.nu
    rho = snapshot.rho
    if nu <= 0.0:
        raise DomainError(f"molecular viscosity must be positive at point {point}, got {nu}")
    if rho <= 0.0:
        raise DomainError(f"density must be positive at point {point}, got {rho}")
    c0 = snapshot.c0

    u = float(snapshot.u[point])
    v = float(snapshot.v[point])
    w = float(snapshot.w[point]) if snapshot.w is not None else 0.0
    k = float(snapshot.k[point])
    eps_rate = float(snapshot.epsilon[point])
    nu_t = float(snapshot.nu_t[point])
    d = float(snapshot.d[point])

    g = gradients.grad_u[point]
    g00 = float(g[0, 0]); g01 = float(g[0, 1]); g02 = float(g[0, 2])
    g10 = float(g[1, 0]); g11 = float(g[1, 1]); g12 = float(g[1, 2])
    g20 = float(g[2, 0]); g21 = float(g[2, 1]); g22 = float(g[2, 2])

    sxy = 0.5 * (g01 + g10)
    sxz = 0.5 * (g02 + g20)
    syz = 0.5 * (g12 + g21)
    s2 = g00**2 + g11**2 + g22**2 + 2.0 * (sxy**2 + sxz**2 + syz**2)
    wxy = 0.5 * (g01 - g10)
    wxz = 0.5 * (g02 - g20)
    wyz = 0.5 * (g12 - g21)
    w2 = 2.0 * (wxy**2 + wxz**2 + wyz**2)

    q1 = (w2 - s2) / (w2 + s2 + DENOM_GUARD)

    uu = u * u + v * v + w * w
    q2 = k / (0.5 * uu + k + DENOM_GUARD)

    q3 = min(math.sqrt(k) * d / (50.0 * nu), 2.0)

    gp = gradients.grad_p[point]
    px = float(gp[0]); py = float(gp[1]); pz = float(gp[2])
    p2 = px * px + py * py + pz * pz
    udp = u * px + v * py + w * pz
    q4 = udp / (math.sqrt(p2 * uu) + abs(udp) + DENOM_GUARD)

    # rho * |G^T U| = |0.5 rho grad(U_k U_k)|
    a0 = u * g00 + v * g10 + w * g20
    a1 = u * g01 + v * g11 + w * g21
    a2 = u * g02 + v * g12 + w * g22
    pnorm = math.sqrt(p2)
    inertia = rho * math.sqrt(a0 * a0 + a1 * a1 + a2 * a2)
    q5 = pnorm / (pnorm + inertia + DENOM_GUARD)

    q6 = nu_t / (100.0 * nu + nu_t + DENOM_GUARD)

    anorm = 2.0 * nu_t * math.sqrt(s2)
    q7 = anorm / (k + anorm + DENOM_GUARD)

    q8 = math.sqrt(uu) / (c0 + DENOM_GUARD)

    sk = math.sqrt(s2) * k
    q9 = sk / (sk + eps_rate + DENOM_GUARD)

    return FeatureVector(q1, q2, q3, q4, q5, q6, q7, q8, q9)


def compute_feature_matrix(
    snapshot: "FlowFieldSnapshot", gradients: GradientField
) -> np.ndarray:
    """Features for every point, shape (n, 9)."""
    if gradients.n_points != snapshot.n_points:
        raise DataError(
            f"gradient field has {gradients.n_points} points, snapshot has {snapshot.n_points}"
        )
    out = np.empty((snapshot.n_points, 9))
    for i in range(snapshot.n_points):
        out[i] = compute_features(i, snapshot, gradients)
    return out


def feature_range_report(matrix: np.ndarray) -> list[str]:
    """One 'name min max [lo, hi] OK/OUT' line per feature."""
    lines = []
    for j, (name, (lo, hi)) in enumerate(zip(FEATURE_NAMES, FEATURE_RANGES)):
        col = matrix[:, j]
        vmin, vmax = float(col.min()), float(col.max())
        status = "OK" if (vmin >= lo - 1e-12 and vmax <= hi + 1e-12) else "OUT OF RANGE"
        hi_txt = "inf" if math.isinf(hi) else f"{hi:g}"
        lines.append(f"{name} min={vmin:.6g} max={vmax:.6g} range [{lo:g}, {hi_txt}] {status}")
    return lines
