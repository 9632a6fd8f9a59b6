"""Flow-field CSV loading, target construction and train/validation splits.

File format: UTF-8 CSV, comma separated, decimal points, one mandatory
header row naming the columns. Lines starting with '#' are comments and
may appear before the header (our own writers put metadata there).

A schema file (key = value text) maps column roles to column names and
carries the per-dataset constants. Roles default to their own name, so a
file whose header already uses the role names needs no column entries:

    # roles (only needed when the header differs)
    k = tke
    nu_t = mut
    # constants
    rho = 1.0
    nu = 1.5e-5
    C0 = 340.0
    # structured dims, x index fastest
    nx = 128
    ny = 128
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import features as feat
from .errors import DataError, DomainError, PairingError, SchemaError
from .tensors import (
    ISOTROPIC_STATE,
    AnisotropyState,
    SymTensor3,
    anisotropy_state,
    barycentric_distance,
)

#: Below this turbulent kinetic energy the anisotropy is treated as isotropic.
K_FLOOR = 1e-12

_ROLE_DESCRIPTIONS = {
    "x": "x coordinate",
    "y": "y coordinate",
    "U": "x velocity",
    "V": "y velocity",
    "W": "z velocity",
    "P": "pressure",
    "k": "turbulent kinetic energy",
    "epsilon": "dissipation rate",
    "nu_t": "eddy viscosity",
    "d": "wall distance",
}

_FLOW_ROLES = ("x", "y", "U", "V", "P", "k", "epsilon", "nu_t", "d")
STRESS_ROLES = ("uu", "vv", "ww", "uv", "uw", "vw")
_GRADIENT_ROLES = ("dU_dx", "dU_dy", "dV_dx", "dV_dy", "dP_dx", "dP_dy", "dk_dx", "dk_dy")
_OPTIONAL_GRADIENT_ROLES = ("dW_dx", "dW_dy")


@dataclass
class DatasetSchema:
    """Role-to-column mapping plus dataset constants and grid dims."""

    columns: dict = field(default_factory=dict)
    rho: float = 1.0
    nu: float = 1e-5
    c0: float = 340.0
    nx: int | None = None
    ny: int | None = None

    def column(self, role: str) -> str:
        return self.columns.get(role, role)


def read_keyvalue(path) -> dict:
    """Parse a 'key = value' text file, '#' comments and blank lines allowed."""
    out = {}
    p = Path(path)
    if not p.exists():
        raise SchemaError(f"file not found: {p}")
    for lineno, raw in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise SchemaError(f"{p}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def load_schema(path) -> DatasetSchema:
    entries = read_keyvalue(path)
    schema = DatasetSchema()
    for key, value in entries.items():
        if key in ("rho", "nu", "C0"):
            try:
                num = float(value)
            except ValueError:
                raise SchemaError(f"schema constant {key} is not a number: {value!r}") from None
            if key == "rho":
                schema.rho = num
            elif key == "nu":
                schema.nu = num
            else:
                schema.c0 = num
        elif key in ("nx", "ny"):
            try:
                setattr(schema, key, int(value))
            except ValueError:
                raise SchemaError(f"schema dim {key} is not an integer: {value!r}") from None
        else:
            schema.columns[key] = value
    if schema.rho <= 0.0:
        raise SchemaError(f"density must be positive, got {schema.rho}")
    if schema.nu <= 0.0:
        raise SchemaError(f"molecular viscosity must be positive, got {schema.nu}")
    if schema.c0 <= 0.0:
        raise SchemaError(f"speed of sound must be positive, got {schema.c0}")
    return schema


@dataclass
class FlowFieldSnapshot:
    """Per-point flow fields on one grid plus the dataset constants.

    RANS-style snapshots carry the full flow set (x, y, U, V, P, k,
    epsilon, nu_t, d); high-fidelity snapshots may carry only coordinates
    and the six Reynolds stress columns. Point ordering on structured
    grids is row major with the x index fastest.
    """

    x: np.ndarray
    y: np.ndarray
    u: np.ndarray | None = None
    v: np.ndarray | None = None
    w: np.ndarray | None = None
    p: np.ndarray | None = None
    k: np.ndarray | None = None
    epsilon: np.ndarray | None = None
    nu_t: np.ndarray | None = None
    d: np.ndarray | None = None
    stresses: np.ndarray | None = None  # (n, 6): uu vv ww uv uw vw
    gradients: "feat.GradientField | None" = None
    rho: float = 1.0
    nu: float = 1e-5
    c0: float = 340.0
    nx: int | None = None
    ny: int | None = None
    tag: str = ""

    @property
    def n_points(self) -> int:
        return len(self.x)

    def validate(self) -> None:
        n = self.n_points
        for name in ("y", "u", "v", "w", "p", "k", "epsilon", "nu_t", "d"):
            arr = getattr(self, name)
            if arr is not None and len(arr) != n:
                raise DataError(f"column '{name}' has {len(arr)} rows, expected {n}")
        if self.stresses is not None and self.stresses.shape != (n, 6):
            raise DataError(f"stress block has shape {self.stresses.shape}, expected ({n}, 6)")
        if self.nx is not None and self.ny is not None and self.nx * self.ny != n:
            raise DataError(f"nx * ny = {self.nx * self.ny} does not match {n} points")
        for name, arr in (("k", self.k), ("epsilon", self.epsilon), ("nu_t", self.nu_t), ("d", self.d)):
            if arr is not None and len(arr) and float(arr.min()) < 0.0:
                row = int(np.argmin(arr))
                raise DataError(f"column '{name}' must be non-negative, row {row} has {arr[row]}")
        if self.rho <= 0.0 or self.nu <= 0.0:
            raise DataError(f"constants rho ({self.rho}) and nu ({self.nu}) must be positive")


def _read_csv_table(path) -> tuple[list[str], np.ndarray, int | None, int | None]:
    """Header, float data matrix and any '# dims nx ny' comment."""
    p = Path(path)
    if not p.exists():
        raise SchemaError(f"file not found: {p}")
    header: list[str] | None = None
    rows: list[list[float]] = []
    dims: tuple[int, int] | None = None
    with open(p, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 3 and parts[0] == "dims":
                    try:
                        dims = (int(parts[1]), int(parts[2]))
                    except ValueError:
                        raise DataError(f"{p}:{lineno}: malformed dims comment: {line!r}") from None
                continue
            cells = [c.strip() for c in line.split(",")]
            if header is None:
                header = cells
                continue
            if len(cells) != len(header):
                raise DataError(
                    f"{p}:{lineno}: row has {len(cells)} cells, header has {len(header)}"
                )
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                for col, cell in zip(header, cells):
                    try:
                        float(cell)
                    except ValueError:
                        raise DataError(
                            f"{p}:{lineno}: column '{col}': cannot parse {cell!r} as a number"
                        ) from None
                raise
    if header is None:
        raise DataError(f"{p}: no header row found")
    data = np.array(rows, dtype=float) if rows else np.empty((0, len(header)))
    nx, ny = dims if dims is not None else (None, None)
    return header, data, nx, ny


def read_table(path) -> tuple[list[str], np.ndarray, int | None, int | None]:
    """Generic CSV reader: header, float matrix and any '# dims nx ny' comment."""
    return _read_csv_table(path)


def csv_columns(path) -> list[str]:
    """Just the header names of a flow CSV."""
    header, _, _, _ = _read_csv_table(path)
    return header


def load_flow_csv(path, schema: DatasetSchema, kind: str = "rans") -> FlowFieldSnapshot:
    """Load a flow CSV into a snapshot, validating its invariants.

    kind = 'rans' requires the full flow role set; kind = 'hifi' requires
    coordinates plus the six Reynolds stress columns. Unknown columns are
    ignored and the row order is preserved.
    """
    if kind not in ("rans", "hifi"):
        raise ValueError(f"kind must be 'rans' or 'hifi', got {kind!r}")
    header, data, file_nx, file_ny = _read_csv_table(path)
    index = {name: i for i, name in enumerate(header)}

    def col(role: str, required: bool) -> np.ndarray | None:
        name = schema.column(role)
        if name not in index:
            if required:
                desc = _ROLE_DESCRIPTIONS.get(role, role)
                raise SchemaError(
                    f"{path}: {desc} column not found (role '{role}' maps to column {name!r})"
                )
            return None
        column = data[:, index[name]].copy()
        if not np.all(np.isfinite(column)):
            row = int(np.argmin(np.isfinite(column)))
            raise DataError(f"{path}: column '{name}' has a non-finite value at row {row}")
        return column

    required_flow = kind == "rans"
    snap = FlowFieldSnapshot(
        x=col("x", True),
        y=col("y", True),
        u=col("U", required_flow),
        v=col("V", required_flow),
        w=col("W", False),
        p=col("P", required_flow),
        k=col("k", required_flow),
        epsilon=col("epsilon", required_flow),
        nu_t=col("nu_t", required_flow),
        d=col("d", required_flow),
        rho=schema.rho,
        nu=schema.nu,
        c0=schema.c0,
        nx=schema.nx if schema.nx is not None else file_nx,
        ny=schema.ny if schema.ny is not None else file_ny,
        tag=str(path),
    )

    stress_cols = [col(role, kind == "hifi") for role in STRESS_ROLES]
    if all(c is not None for c in stress_cols):
        snap.stresses = np.column_stack(stress_cols)

    grad_cols = {role: col(role, False) for role in _GRADIENT_ROLES}
    if all(c is not None for c in grad_cols.values()):
        n = snap.n_points
        grad_u = np.zeros((n, 3, 3))
        grad_u[:, 0, 0] = grad_cols["dU_dx"]
        grad_u[:, 0, 1] = grad_cols["dU_dy"]
        grad_u[:, 1, 0] = grad_cols["dV_dx"]
        grad_u[:, 1, 1] = grad_cols["dV_dy"]
        for role, (r, c) in (("dW_dx", (2, 0)), ("dW_dy", (2, 1))):
            extra = col(role, False)
            if extra is not None:
                grad_u[:, r, c] = extra
        grad_p = np.zeros((n, 3))
        grad_p[:, 0] = grad_cols["dP_dx"]
        grad_p[:, 1] = grad_cols["dP_dy"]
        grad_k = np.zeros((n, 3))
        grad_k[:, 0] = grad_cols["dk_dx"]
        grad_k[:, 1] = grad_cols["dk_dy"]
        snap.gradients = feat.GradientField(grad_u, grad_p, grad_k)

    snap.validate()
    return snap


def write_flow_csv(snapshot: FlowFieldSnapshot, path, header_lines=()) -> None:
    """Write a snapshot back to CSV with round-trip exact decimal values."""
    names: list[str] = []
    cols: list[np.ndarray] = []
    for role, arr in (
        ("x", snapshot.x),
        ("y", snapshot.y),
        ("U", snapshot.u),
        ("V", snapshot.v),
        ("W", snapshot.w),
        ("P", snapshot.p),
        ("k", snapshot.k),
        ("epsilon", snapshot.epsilon),
        ("nu_t", snapshot.nu_t),
        ("d", snapshot.d),
    ):
        if arr is not None:
            names.append(role)
            cols.append(arr)
    if snapshot.stresses is not None:
        for j, role in enumerate(STRESS_ROLES):
            names.append(role)
            cols.append(snapshot.stresses[:, j])
    with open(path, "w", encoding="utf-8") as handle:
        for line in header_lines:
            handle.write(f"# {line}\n")
        if snapshot.nx is not None and snapshot.ny is not None:
            handle.write(f"# dims {snapshot.nx} {snapshot.ny}\n")
        handle.write(",".join(names) + "\n")
        for i in range(snapshot.n_points):
            handle.write(",".join(repr(float(c[i])) for c in cols) + "\n")


def _deviatoric(s: SymTensor3) -> SymTensor3:
    third = s.trace() / 3.0
    return SymTensor3(s.xx - third, s.yy - third, s.zz - third, s.xy, s.xz, s.yz)


def rans_anisotropy(
    snapshot: FlowFieldSnapshot,
    gradients: feat.GradientField,
    k_floor: float = K_FLOOR,
) -> tuple[list[AnisotropyState], int]:
    """Boussinesq anisotropy b = -(nu_t / k) S per point.

    The numerically nonzero trace of S (discrete divergence) is projected
    out so the states are exactly traceless. Points with k <= k_floor are
    mapped to the isotropic state; the second return value counts them.
    """
    if gradients.n_points != snapshot.n_points:
        raise PairingError("gradient field and snapshot have different point counts")
    states: list[AnisotropyState] = []
    floored = 0
    for i in range(snapshot.n_points):
        k = float(snapshot.k[i])
        if k <= k_floor:
            states.append(ISOTROPIC_STATE)
            floored += 1
            continue
        s, _ = feat.strain_and_rotation(gradients.grad_u[i])
        s = _deviatoric(s)
        f = -float(snapshot.nu_t[i]) / k
        b = SymTensor3(f * s.xx, f * s.yy, f * s.zz, f * s.xy, f * s.xz, f * s.yz)
        states.append(anisotropy_state(b))
    return states, floored


def hifi_anisotropy(
    snapshot: FlowFieldSnapshot, k_floor: float = K_FLOOR
) -> tuple[list[AnisotropyState], int]:
    """Anisotropy states from measured or DNS Reynolds stress columns."""
    if snapshot.stresses is None:
        raise SchemaError(
            f"{snapshot.tag or 'snapshot'}: Reynolds stress columns "
            f"({', '.join(STRESS_ROLES)}) are required for high-fidelity anisotropy"
        )
    states: list[AnisotropyState] = []
    floored = 0
    for i in range(snapshot.n_points):
        uu, vv, ww, uv, uw, vw = (float(c) for c in snapshot.stresses[i])
        k = 0.5 * (uu + vv + ww)
        if k <= k_floor:
            states.append(ISOTROPIC_STATE)
            floored += 1
            continue
        inv = 1.0 / (2.0 * k)
        third = 1.0 / 3.0
        b = SymTensor3(
            uu * inv - third,
            vv * inv - third,
            ww * inv - third,
            uv * inv,
            uw * inv,
            vw * inv,
        )
        states.append(anisotropy_state(b))
    return states, floored


def make_targets(
    rans_states: list[AnisotropyState], hifi_states: list[AnisotropyState]
) -> np.ndarray:
    """Per-point perturbation magnitude: planar barycentric distance."""
    if len(rans_states) != len(hifi_states):
        raise PairingError(
            f"state arrays differ in length: {len(rans_states)} vs {len(hifi_states)}"
        )
    out = np.empty(len(rans_states))
    for i, (a, b) in enumerate(zip(rans_states, hifi_states)):
        out[i] = barycentric_distance(a.bary, b.bary)
    return out


@dataclass(frozen=True)
class TrainingSample:
    features: np.ndarray  # (9,)
    target: float
    point_index: int
    tag: str = ""


_SPLIT_NAMES = {
    1: ("train",),
    2: ("train", "validation"),
    3: ("train", "validation", "test"),
}


@dataclass
class SampleSet:
    """Samples plus their split assignment and the seed that produced it."""

    samples: list[TrainingSample]
    assignment: list[str]
    seed: int

    def indices(self, subset: str) -> list[int]:
        return [i for i, name in enumerate(self.assignment) if name == subset]

    def matrix(self, subset: str) -> tuple[np.ndarray, np.ndarray]:
        """(features, targets) arrays for one subset."""
        idx = self.indices(subset)
        if not idx:
            return np.empty((0, 9)), np.empty(0)
        x = np.stack([self.samples[i].features for i in idx])
        y = np.array([self.samples[i].target for i in idx])
        return x, y

    def counts(self) -> dict:
        out: dict = {}
        for name in self.assignment:
            out[name] = out.get(name, 0) + 1
        return out


def make_samples(
    feature_matrix: np.ndarray, targets: np.ndarray, tag: str = ""
) -> list[TrainingSample]:
    """Pair features with targets, enforcing the target range [0, 1]."""
    if len(feature_matrix) != len(targets):
        raise PairingError(
            f"feature matrix has {len(feature_matrix)} rows, targets {len(targets)}"
        )
    samples = []
    for i, (row, t) in enumerate(zip(feature_matrix, targets)):
        t = float(t)
        if not math.isfinite(t) or t < -1e-9 or t > 1.0 + 1e-9:
            raise DataError(f"target at point {i} is outside [0, 1]: {t}")
        if not np.all(np.isfinite(row)):
            raise DataError(f"features at point {i} contain non-finite values")
        samples.append(TrainingSample(np.asarray(row, dtype=float), min(max(t, 0.0), 1.0), i, tag))
    return samples


def split(
    samples: list[TrainingSample],
    fractions,
    seed: int,
    mode: str = "random",
) -> SampleSet:
    """Partition samples into train/validation(/test) subsets.

    Subset sizes use the floor rule: every group except the last gets
    floor(fraction * n) samples, the last gets the remainder. mode
    'random' permutes with the seeded generator before assigning
    contiguous chunks; 'contiguous' keeps file order (spatially blocked).
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) not in _SPLIT_NAMES:
        raise DataError(f"expected 1 to 3 split fractions, got {len(fractions)}")
    if any(f <= 0.0 for f in fractions):
        raise DataError(f"split fractions must be positive, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"split fractions must sum to 1, got sum {sum(fractions)}")
    if mode not in ("random", "contiguous"):
        raise DataError(f"unknown split mode {mode!r}")
    n = len(samples)
    if n < len(fractions):
        raise DataError(f"cannot split {n} samples into {len(fractions)} groups")

    if mode == "random":
        order = np.random.default_rng(seed).permutation(n)
    else:
        order = np.arange(n)
    names = _SPLIT_NAMES[len(fractions)]
    counts = [int(math.floor(f * n)) for f in fractions[:-1]]
    counts.append(n - sum(counts))
    assignment = [""] * n
    start = 0
    for name, count in zip(names, counts):
        for j in order[start : start + count]:
            assignment[int(j)] = name
        start += count
    return SampleSet(list(samples), assignment, seed)


def resample_nearest(
    source: FlowFieldSnapshot, x: np.ndarray, y: np.ndarray, chunk: int = 2048
) -> np.ndarray:
    """Indices of the nearest source point for each (x, y) target location.

    Brute-force nearest neighbour, intended for pairing mildly mismatched
    grids. This is approximate resampling: values are copied, never
    interpolated, so targets computed from it inherit the grid mismatch.
    """
    sx = source.x
    sy = source.y
    out = np.empty(len(x), dtype=int)
    for start in range(0, len(x), chunk):
        end = min(start + chunk, len(x))
        dx = x[start:end, None] - sx[None, :]
        dy = y[start:end, None] - sy[None, :]
        out[start:end] = np.argmin(dx * dx + dy * dy, axis=1)
    return out
