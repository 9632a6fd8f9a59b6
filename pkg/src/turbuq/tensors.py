"""Reynolds stress and anisotropy tensor algebra.

Symmetric 3x3 tensors are stored by their six independent components.
Eigenvalues come from the trigonometric closed form of the characteristic
cubic; when the eigenvalue discriminant is near zero the solver falls back
to cyclic Jacobi sweeps, which stay accurate for (near-)repeated roots.

Sorted anisotropy eigenvalues map onto the barycentric realizability
triangle with vertices

    1C = (1, 0)              one-component turbulence
    2C = (0, 0)              two-component turbulence
    3C = (1/2, sqrt(3)/2)    isotropic (three-component) turbulence

via the weights C1 = l1 - l2, C2 = 2(l2 - l3), C3 = 3*l3 + 1, which sum
to one for a traceless tensor. Every realizable state lies inside the
triangle, and an eigenvalue perturbation of magnitude delta moves a state
linearly toward a chosen vertex, which keeps it realizable by convexity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError

_SQRT3_2 = math.sqrt(3.0) / 2.0

#: Planar coordinates of the three limiting states.
CORNERS = {
    "1C": (1.0, 0.0),
    "2C": (0.0, 0.0),
    "3C": (0.5, _SQRT3_2),
}

_CORNER_WEIGHTS = {
    "1C": (1.0, 0.0, 0.0),
    "2C": (0.0, 1.0, 0.0),
    "3C": (0.0, 0.0, 1.0),
}

#: Eigenvalue triples of the limiting states, sorted descending.
CORNER_EIGENVALUES = {
    "1C": (2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0),
    "2C": (1.0 / 6.0, 1.0 / 6.0, -1.0 / 3.0),
    "3C": (0.0, 0.0, 0.0),
}

TRACE_TOL = 1e-8
WEIGHT_TOL = 1e-8
_ORTHO_TOL = 1e-8
_JACOBI_DISC_TOL = 1e-12


@dataclass(frozen=True)
class SymTensor3:
    """Symmetric 3x3 tensor held as six independent components."""

    xx: float
    yy: float
    zz: float
    xy: float
    xz: float
    yz: float

    @classmethod
    def from_matrix(cls, m, tol: float = 1e-9) -> "SymTensor3":
        """Build from a 3x3 array, rejecting visibly asymmetric input."""
        m = np.asarray(m, dtype=float)
        if m.shape != (3, 3):
            raise DomainError(f"expected a 3x3 matrix, got shape {m.shape}")
        skew = max(
            abs(m[0, 1] - m[1, 0]), abs(m[0, 2] - m[2, 0]), abs(m[1, 2] - m[2, 1])
        )
        if skew > tol:
            raise DomainError(f"matrix is not symmetric (max skew {skew:.3e})")
        return cls(
            float(m[0, 0]),
            float(m[1, 1]),
            float(m[2, 2]),
            0.5 * float(m[0, 1] + m[1, 0]),
            0.5 * float(m[0, 2] + m[2, 0]),
            0.5 * float(m[1, 2] + m[2, 1]),
        )

    def as_matrix(self) -> np.ndarray:
        return np.array(
            [
                [self.xx, self.xy, self.xz],
                [self.xy, self.yy, self.yz],
                [self.xz, self.yz, self.zz],
            ]
        )

    def components(self) -> tuple[float, float, float, float, float, float]:
        """(xx, yy, zz, xy, xz, yz), the storage and CSV column order."""
        return (self.xx, self.yy, self.zz, self.xy, self.xz, self.yz)

    def trace(self) -> float:
        return self.xx + self.yy + self.zz

    def norm(self) -> float:
        """Frobenius norm."""
        return math.sqrt(
            self.xx**2
            + self.yy**2
            + self.zz**2
            + 2.0 * (self.xy**2 + self.xz**2 + self.yz**2)
        )

    def is_finite(self) -> bool:
        return all(math.isfinite(c) for c in self.components())


ZERO_TENSOR = SymTensor3(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class EigenState:
    """Eigenvalues sorted descending with column-paired orthonormal eigenvectors."""

    eigenvalues: np.ndarray  # (3,)
    eigenvectors: np.ndarray  # (3, 3), column i pairs with eigenvalues[i]


class BarycentricPoint(NamedTuple):
    """Weights of the three limiting states plus planar map coordinates."""

    c1: float
    c2: float
    c3: float
    x: float
    y: float

    @property
    def weights(self) -> tuple[float, float, float]:
        return (self.c1, self.c2, self.c3)


class RealizabilityReport(NamedTuple):
    ok: bool
    reason: str
    weights: tuple[float, float, float]


@dataclass(frozen=True)
class AnisotropyState:
    """Normalized anisotropy tensor with its eigenstate and map location."""

    b: SymTensor3
    eig: EigenState
    bary: BarycentricPoint


@dataclass(frozen=True)
class PerturbedState:
    """Result of moving one state toward a limiting corner by delta_b."""

    corner: str
    eigenvalues: tuple[float, float, float]
    bary: BarycentricPoint
    b: SymTensor3
    stress: SymTensor3


def turbulent_kinetic_energy(stress: SymTensor3) -> float:
    """Half the trace of the Reynolds stress tensor."""
    return 0.5 * stress.trace()


def anisotropy_from_reynolds(
    stress: SymTensor3, k: float, point: int | None = None
) -> SymTensor3:
    """Normalized anisotropy b = (R - (2/3) k I) / (2 k).

    The trace of the result is trace(R)/(2k) - 1, i.e. zero whenever k is
    the half-trace of R.
    """
    if not (k > 0.0):
        where = "" if point is None else f" at point {point}"
        raise DomainError(f"turbulent kinetic energy must be positive{where}, got {k}")
    if not stress.is_finite():
        raise DomainError("Reynolds stress has non-finite components")
    inv = 1.0 / (2.0 * k)
    third = 1.0 / 3.0
    return SymTensor3(
        stress.xx * inv - third,
        stress.yy * inv - third,
        stress.zz * inv - third,
        stress.xy * inv,
        stress.xz * inv,
        stress.yz * inv,
    )


def boussinesq_reynolds(strain: SymTensor3, k: float, nu_t: float) -> SymTensor3:
    """Linear eddy viscosity stress R = (2/3) k I - 2 nu_t S."""
    iso = 2.0 * k / 3.0
    f = -2.0 * nu_t
    return SymTensor3(
        iso + f * strain.xx,
        iso + f * strain.yy,
        iso + f * strain.zz,
        f * strain.xy,
        f * strain.xz,
        f * strain.yz,
    )


def _sign_fix_columns(v: np.ndarray) -> np.ndarray:
    # Deterministic orientation: first nonzero component of each column >= 0.
    for j in range(3):
        for i in range(3):
            if v[i, j] != 0.0:
                if v[i, j] < 0.0:
                    v[:, j] = -v[:, j]
                break
    return v


def _diagonal_eig(b: SymTensor3) -> EigenState:
    diag = (b.xx, b.yy, b.zz)
    order = sorted(range(3), key=lambda i: (-diag[i], i))
    vals = np.array([diag[i] for i in order])
    vecs = np.zeros((3, 3))
    for col, i in enumerate(order):
        vecs[i, col] = 1.0
    return EigenState(vals, vecs)


def _jacobi_eig(a: np.ndarray) -> EigenState:
    # Cyclic Jacobi sweeps; robust for repeated eigenvalues.
    a = a.copy()
    v = np.eye(3)
    for _ in range(50):
        off = a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2
        if off < 1e-30:
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            apq = a[p, q]
            if apq == 0.0:
                continue
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
            c = 1.0 / math.sqrt(t * t + 1.0)
            s = t * c
            rot = np.eye(3)
            rot[p, p] = c
            rot[q, q] = c
            rot[p, q] = s
            rot[q, p] = -s
            a = rot.T @ a @ rot
            v = v @ rot
    diag = np.diag(a)
    order = sorted(range(3), key=lambda i: (-diag[i], i))
    vals = np.array([diag[i] for i in order])
    vecs = _sign_fix_columns(v[:, order].copy())
    return EigenState(vals, vecs)


def _cross(a, b):
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


def _eigvec_from_rows(b: SymTensor3, lam: float) -> np.ndarray:
    # Null-space direction of (B - lam I) from the largest row cross product.
    r0 = (b.xx - lam, b.xy, b.xz)
    r1 = (b.xy, b.yy - lam, b.yz)
    r2 = (b.xz, b.yz, b.zz - lam)
    best = None
    best_n2 = -1.0
    for u, w in ((r0, r1), (r0, r2), (r1, r2)):
        c = _cross(u, w)
        n2 = c[0] ** 2 + c[1] ** 2 + c[2] ** 2
        if n2 > best_n2:
            best_n2 = n2
            best = c
    n = math.sqrt(best_n2)
    return np.array(best) / n


def eig_sym3(b: SymTensor3) -> EigenState:
    """Eigendecomposition of a symmetric 3x3 tensor.

    Returns eigenvalues sorted descending and an orthonormal eigenvector
    matrix whose columns pair with them, oriented so the first nonzero
    component of each column is positive. A diagonal input keeps the
    identity basis (stable ordering on ties), so the zero tensor maps to
    eigenvalues (0, 0, 0) with V = I.
    """
    if not b.is_finite():
        raise DomainError("cannot decompose a tensor with non-finite components")
    p1 = b.xy**2 + b.xz**2 + b.yz**2
    if p1 == 0.0:
        return _diagonal_eig(b)

    q = b.trace() / 3.0
    p2 = (b.xx - q) ** 2 + (b.yy - q) ** 2 + (b.zz - q) ** 2 + 2.0 * p1
    p = math.sqrt(p2 / 6.0)
    # Deviator scaled to unit spread; det(B)/2 lands in [-1, 1] exactly
    # in real arithmetic, clamp guards roundoff.
    dxx = (b.xx - q) / p
    dyy = (b.yy - q) / p
    dzz = (b.zz - q) / p
    dxy = b.xy / p
    dxz = b.xz / p
    dyz = b.yz / p
    det = (
        dxx * (dyy * dzz - dyz * dyz)
        - dxy * (dxy * dzz - dyz * dxz)
        + dxz * (dxy * dyz - dyy * dxz)
    )
    r = min(1.0, max(-1.0, det / 2.0))
    phi = math.acos(r) / 3.0
    l1 = q + 2.0 * p * math.cos(phi)
    l3 = q + 2.0 * p * math.cos(phi + 2.0 * math.pi / 3.0)
    l2 = 3.0 * q - l1 - l3

    disc = ((l1 - l2) * (l2 - l3) * (l1 - l3)) ** 2
    if disc < _JACOBI_DISC_TOL:
        return _jacobi_eig(b.as_matrix())

    v1 = _eigvec_from_rows(b, l1)
    v3 = _eigvec_from_rows(b, l3)
    v3 = v3 - np.dot(v3, v1) * v1
    v3 /= math.sqrt(v3 @ v3)
    v2 = np.array(_cross(v3, v1))
    vecs = _sign_fix_columns(np.column_stack((v1, v2, v3)))
    return EigenState(np.array([l1, l2, l3]), vecs)


def _point_from_xy(x: float, y: float) -> BarycentricPoint:
    c3 = 2.0 * y / math.sqrt(3.0)
    c1 = x - 0.5 * c3
    c2 = 1.0 - c1 - c3
    return BarycentricPoint(c1, c2, c3, x, y)


def barycentric_from_eigs(eigenvalues) -> BarycentricPoint:
    """Map sorted, traceless eigenvalues onto the realizability triangle."""
    l1, l2, l3 = (float(v) for v in eigenvalues)
    if l1 < l2 - 1e-9 or l2 < l3 - 1e-9:
        raise DomainError(f"eigenvalues must be sorted descending, got ({l1}, {l2}, {l3})")
    s = l1 + l2 + l3
    if abs(s) > TRACE_TOL:
        raise DomainError(f"anisotropy eigenvalues must sum to zero, got {s:.3e}")
    c1 = l1 - l2
    c2 = 2.0 * (l2 - l3)
    c3 = 3.0 * l3 + 1.0
    x = c1 * 1.0 + c3 * 0.5
    y = c3 * _SQRT3_2
    return BarycentricPoint(c1, c2, c3, x, y)


def eigs_from_barycentric(point: BarycentricPoint) -> tuple[float, float, float]:
    """Exact inverse of :func:`barycentric_from_eigs`."""
    s = point.c1 + point.c2 + point.c3
    if abs(s - 1.0) > WEIGHT_TOL:
        raise DomainError(f"barycentric weights must sum to one, got {s}")
    l3 = (point.c3 - 1.0) / 3.0
    l2 = l3 + point.c2 / 2.0
    l1 = l2 + point.c1
    return (l1, l2, l3)


def perturb_eigenvalues(
    point: BarycentricPoint, delta_b: float, corner: str
) -> BarycentricPoint:
    """Move a map point toward a limiting corner: x* = x + delta_b (x_c - x).

    delta_b = 0 is the identity and delta_b = 1 lands exactly on the
    corner; both cases are returned exactly, without roundoff.
    """
    if corner not in CORNERS:
        raise DomainError(f"unknown corner {corner!r}, expected one of 1C, 2C, 3C")
    if not (0.0 <= delta_b <= 1.0):
        raise DomainError(f"delta_b must lie in [0, 1], got {delta_b}")
    s = point.c1 + point.c2 + point.c3
    if abs(s - 1.0) > WEIGHT_TOL:
        raise DomainError(f"barycentric weights must sum to one, got {s}")
    if delta_b == 0.0:
        return point
    if delta_b == 1.0:
        cx, cy = CORNERS[corner]
        w = _CORNER_WEIGHTS[corner]
        return BarycentricPoint(w[0], w[1], w[2], cx, cy)
    cx, cy = CORNERS[corner]
    return _point_from_xy(
        point.x + delta_b * (cx - point.x),
        point.y + delta_b * (cy - point.y),
    )


def realizability_check(eigenvalues) -> RealizabilityReport:
    """Diagnostic: do these eigenvalues describe a realizable anisotropy state?

    Passes iff the triple is finite, sums to zero within 1e-8 and all three
    barycentric weights are >= -1e-8 (the point lies inside the triangle).
    """
    l1, l2, l3 = (float(v) for v in eigenvalues)
    if not all(math.isfinite(v) for v in (l1, l2, l3)):
        return RealizabilityReport(False, "non-finite eigenvalues", (l1, l2, l3))
    c1 = l1 - l2
    c2 = 2.0 * (l2 - l3)
    c3 = 3.0 * l3 + 1.0
    weights = (c1, c2, c3)
    s = l1 + l2 + l3
    if abs(s) > TRACE_TOL:
        return RealizabilityReport(False, f"eigenvalue sum {s:.3e} exceeds 1e-08", weights)
    names = ("C1 (one-component)", "C2 (two-component)", "C3 (three-component)")
    for name, w in zip(names, weights):
        if w < -WEIGHT_TOL:
            return RealizabilityReport(
                False, f"weight {name} = {w:.3e} is negative: state leaves the triangle", weights
            )
    return RealizabilityReport(True, "", weights)


def reconstruct_reynolds(k: float, eigenvectors: np.ndarray, eigenvalues) -> SymTensor3:
    """Reassemble a Reynolds stress: R = 2 k (V diag(l) V^T + I/3).

    The trace equals 2k whenever the eigenvalues sum to zero.
    """
    if not (k > 0.0):
        raise DomainError(f"turbulent kinetic energy must be positive, got {k}")
    v = np.asarray(eigenvectors, dtype=float)
    if v.shape != (3, 3):
        raise DomainError(f"eigenvector matrix must be 3x3, got shape {v.shape}")
    gram = v.T @ v
    if np.max(np.abs(gram - np.eye(3))) > _ORTHO_TOL:
        raise DomainError("eigenvector matrix is not orthonormal")
    lam = np.asarray(eigenvalues, dtype=float)
    m = (v * lam) @ v.T
    tk = 2.0 * k
    third = tk / 3.0
    return SymTensor3(
        tk * m[0, 0] + third,
        tk * m[1, 1] + third,
        tk * m[2, 2] + third,
        tk * 0.5 * (m[0, 1] + m[1, 0]),
        tk * 0.5 * (m[0, 2] + m[2, 0]),
        tk * 0.5 * (m[1, 2] + m[2, 1]),
    )


def anisotropy_state(b: SymTensor3) -> AnisotropyState:
    """Decompose a normalized anisotropy tensor and place it on the map."""
    eig = eig_sym3(b)
    bary = barycentric_from_eigs(eig.eigenvalues)
    return AnisotropyState(b, eig, bary)


ISOTROPIC_STATE = AnisotropyState(
    ZERO_TENSOR,
    EigenState(np.zeros(3), np.eye(3)),
    BarycentricPoint(0.0, 0.0, 1.0, 0.5, _SQRT3_2),
)


def barycentric_distance(a: BarycentricPoint, b: BarycentricPoint) -> float:
    """Planar distance between two map points (the triangle has unit sides)."""
    return math.hypot(a.x - b.x, a.y - b.y)


def perturbed_state(
    state: AnisotropyState, k: float, delta_b: float, corner: str
) -> PerturbedState:
    """Perturb one state's eigenvalues toward a corner and rebuild the stress.

    Eigenvectors and k are held fixed; only the eigenvalues move.
    """
    bary = perturb_eigenvalues(state.bary, delta_b, corner)
    lam = eigs_from_barycentric(bary)
    v = state.eig.eigenvectors
    stress = reconstruct_reynolds(k, v, lam)
    m = (v * np.asarray(lam)) @ v.T
    b = SymTensor3(
        m[0, 0],
        m[1, 1],
        m[2, 2],
        0.5 * (m[0, 1] + m[1, 0]),
        0.5 * (m[0, 2] + m[2, 0]),
        0.5 * (m[1, 2] + m[2, 1]),
    )
    return PerturbedState(corner, lam, bary, b, stress)
