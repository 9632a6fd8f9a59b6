"""Field-wide eigenvalue perturbation and discrepancy maps.

For every grid point and each of the three limiting states this applies
the predicted perturbation magnitude to the local anisotropy eigenvalues
(eigenvectors and k held fixed) and rebuilds the perturbed Reynolds
stress. The three resulting stress fields bound the model-form
uncertainty; propagating them through a flow solver is out of scope here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dataset as ds
from .errors import DataError, DomainError, PairingError, TurbuqError
from .tensors import (
    CORNERS,
    AnisotropyState,
    eigs_from_barycentric,
    perturb_eigenvalues,
    perturbed_state,
    realizability_check,
)

CORNER_ORDER = ("1C", "2C", "3C")


@dataclass
class UncertaintyField:
    """Per-point perturbation results for all three limiting states."""

    bary: np.ndarray  # (n, 2) unperturbed map coordinates
    delta_b: np.ndarray  # (n,)
    bary_perturbed: dict  # corner -> (n, 2)
    eigenvalues: dict  # corner -> (n, 3)
    stresses: dict  # corner -> (n, 6), columns uu vv ww uv uw vw

    @property
    def n_points(self) -> int:
        return len(self.delta_b)


def apply_perturbation(
    rans_states: list[AnisotropyState],
    k: np.ndarray,
    delta_b: np.ndarray,
) -> UncertaintyField:
    """Perturb every point toward each corner by its predicted delta_b.

    Inputs must be co-indexed and realizable; each output state is checked
    and a failure is reported as an internal error, since convexity of the
    triangle guarantees realizability for valid inputs.
    """
    n = len(rans_states)
    k = np.asarray(k, dtype=float)
    delta_b = np.asarray(delta_b, dtype=float)
    if len(k) != n or len(delta_b) != n:
        raise PairingError(
            f"co-indexed arrays expected: {n} states, {len(k)} k values, "
            f"{len(delta_b)} delta_b values"
        )

    bary = np.empty((n, 2))
    bary_perturbed = {c: np.empty((n, 2)) for c in CORNER_ORDER}
    eigenvalues = {c: np.empty((n, 3)) for c in CORNER_ORDER}
    stresses = {c: np.empty((n, 6)) for c in CORNER_ORDER}

    for i, state in enumerate(rans_states):
        d = float(delta_b[i])
        if not (0.0 <= d <= 1.0):
            raise DomainError(f"delta_b at point {i} is outside [0, 1]: {d}")
        check = realizability_check(state.eig.eigenvalues)
        if not check.ok:
            raise DataError(
                f"input state at point {i} is not realizable ({check.reason}); "
                "clean the upstream anisotropy before perturbing"
            )
        bary[i] = (state.bary.x, state.bary.y)
        for corner in CORNER_ORDER:
            if k[i] > 0.0:
                ps = perturbed_state(state, float(k[i]), d, corner)
                lam = ps.eigenvalues
                bary_c = ps.bary
                stress = ps.stress.components()
            else:
                # k-floored points carry no turbulent stress; the map
                # location still moves, the stress stays the zero tensor
                bary_c = perturb_eigenvalues(state.bary, d, corner)
                lam = eigs_from_barycentric(bary_c)
                stress = (0.0,) * 6
            post = realizability_check(lam)
            if not post.ok:
                raise TurbuqError(
                    f"internal: perturbed state at point {i} toward {corner} "
                    f"left the triangle ({post.reason})"
                )
            bary_perturbed[corner][i] = (bary_c.x, bary_c.y)
            eigenvalues[corner][i] = lam
            stresses[corner][i] = stress
    return UncertaintyField(bary, delta_b.copy(), bary_perturbed, eigenvalues, stresses)


def discrepancy_map(
    states_a: list[AnisotropyState], states_b: list[AnisotropyState]
) -> np.ndarray:
    """Per-point map distance between two state fields.

    Same metric and code path as the training-target construction, so the
    two agree bit for bit.
    """
    return ds.make_targets(states_a, states_b)


def export_field_csv(
    values: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    path,
    names=("value",),
    dims: tuple[int, int] | None = None,
    header_lines=(),
) -> None:
    """Write one or more per-point scalar fields as x, y, value columns.

    A '# dims nx ny' comment is emitted for structured fields so plotting
    tools can reshape the flat point list.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if len(x) != len(values) or len(y) != len(values):
        raise PairingError(
            f"coordinates and values are not co-indexed: {len(x)}, {len(y)}, {len(values)}"
        )
    if values.shape[1] != len(names):
        raise PairingError(f"{values.shape[1]} value columns but {len(names)} names")
    with open(path, "w", encoding="utf-8") as handle:
        for line in header_lines:
            handle.write(f"# {line}\n")
        if dims is not None:
            handle.write(f"# dims {dims[0]} {dims[1]}\n")
        handle.write("x,y," + ",".join(names) + "\n")
        for i in range(len(values)):
            row = [repr(float(x[i])), repr(float(y[i]))]
            row.extend(repr(float(v)) for v in values[i])
            handle.write(",".join(row) + "\n")


def corner_filename(base: str, corner: str) -> str:
    """stress_1c.csv style filenames for the per-corner exports."""
    if corner not in CORNERS:
        raise DomainError(f"unknown corner {corner!r}")
    return f"{base}_{corner.lower()}.csv"
