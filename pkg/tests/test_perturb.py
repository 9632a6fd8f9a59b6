"""Field-wide perturbation and export tests."""

import numpy as np
import pytest

from turbuq import dataset as ds, features as feat, perturb as pt, tensors as T
from turbuq.errors import DataError, DomainError, PairingError

from synthcase import analytic_snapshot, random_realizable_tensor


def field_inputs(nx=8, ny=8, seed=0, delta=None):
    snap = analytic_snapshot(nx, ny)
    grads = feat.compute_gradients(snap)
    states, _ = ds.rans_anisotropy(snap, grads)
    rng = np.random.default_rng(seed)
    if delta is None:
        delta = rng.uniform(0.0, 1.0, size=snap.n_points)
    return snap, states, np.asarray(delta, dtype=float)


class TestApplyPerturbation:
    def test_zero_delta_reproduces_rans_stress(self):
        snap, states, _ = field_inputs()
        field = pt.apply_perturbation(states, snap.k, np.zeros(snap.n_points))
        for i, state in enumerate(states):
            base = T.reconstruct_reynolds(
                float(snap.k[i]), state.eig.eigenvectors, state.eig.eigenvalues
            )
            for corner in pt.CORNER_ORDER:
                assert np.abs(
                    field.stresses[corner][i] - np.array(base.components())
                ).max() < 1e-12

    def test_full_delta_absorbs_corners(self):
        snap, states, _ = field_inputs()
        field = pt.apply_perturbation(states, snap.k, np.ones(snap.n_points))
        for corner in pt.CORNER_ORDER:
            xy = np.array(T.CORNERS[corner])
            assert np.abs(field.bary_perturbed[corner] - xy).max() == 0.0

    def test_isotropic_point_to_1c(self):
        # delta 1 from an isotropic state with identity basis: diag(2k, 0, 0)
        state = T.anisotropy_state(T.ZERO_TENSOR)
        field = pt.apply_perturbation([state], np.array([0.5]), np.array([1.0]))
        assert np.allclose(field.stresses["1C"][0], [1.0, 0.0, 0.0, 0.0, 0.0, 0.0], atol=1e-12)

    def test_all_outputs_realizable(self):
        snap, states, delta = field_inputs(seed=3)
        field = pt.apply_perturbation(states, snap.k, delta)
        for corner in pt.CORNER_ORDER:
            for lam in field.eigenvalues[corner]:
                assert T.realizability_check(lam).ok

    def test_trace_preserved_everywhere(self):
        snap, states, delta = field_inputs(seed=4)
        field = pt.apply_perturbation(states, snap.k, delta)
        for corner in pt.CORNER_ORDER:
            traces = field.stresses[corner][:, :3].sum(axis=1)
            assert np.abs(traces - 2.0 * snap.k).max() < 1e-10

    def test_monotone_displacement(self):
        snap, states, delta = field_inputs(seed=5)
        smaller = 0.5 * delta
        big = pt.apply_perturbation(states, snap.k, delta)
        small = pt.apply_perturbation(states, snap.k, smaller)
        for corner in pt.CORNER_ORDER:
            d_big = np.hypot(
                big.bary_perturbed[corner][:, 0] - big.bary[:, 0],
                big.bary_perturbed[corner][:, 1] - big.bary[:, 1],
            )
            d_small = np.hypot(
                small.bary_perturbed[corner][:, 0] - small.bary[:, 0],
                small.bary_perturbed[corner][:, 1] - small.bary[:, 1],
            )
            assert np.all(d_small <= d_big + 1e-15)

    def test_delta_out_of_range_names_point(self):
        snap, states, delta = field_inputs()
        delta = delta.copy()
        delta[5] = 1.5
        with pytest.raises(DomainError, match="point 5"):
            pt.apply_perturbation(states, snap.k, delta)

    def test_unrealizable_input_is_data_error(self):
        bad = T.AnisotropyState(
            T.ZERO_TENSOR,
            T.EigenState(np.array([0.8, -0.4, -0.4]), np.eye(3)),
            T.BarycentricPoint(1.2, 0.0, -0.2, 1.1, -0.17),
        )
        with pytest.raises(DataError, match="not realizable"):
            pt.apply_perturbation([bad], np.array([1.0]), np.array([0.5]))

    def test_length_mismatch(self):
        snap, states, delta = field_inputs()
        with pytest.raises(PairingError):
            pt.apply_perturbation(states, snap.k[:-1], delta)

    def test_k_floored_points_emit_zero_stress(self):
        snap, states, delta = field_inputs()
        k = snap.k.copy()
        k[3] = 0.0
        states = list(states)
        states[3] = T.ISOTROPIC_STATE
        field = pt.apply_perturbation(states, k, delta)
        for corner in pt.CORNER_ORDER:
            assert not np.any(field.stresses[corner][3])
            assert T.realizability_check(field.eigenvalues[corner][3]).ok


class TestDiscrepancyMap:
    def test_identical_zero(self):
        _, states, _ = field_inputs()
        assert not np.any(pt.discrepancy_map(states, states))

    def test_corner_to_corner_one(self):
        a = [T.anisotropy_state(T.ZERO_TENSOR)]
        b = [T.anisotropy_state(T.SymTensor3(2 / 3, -1 / 3, -1 / 3, 0, 0, 0))]
        assert pt.discrepancy_map(a, b)[0] == pytest.approx(1.0, abs=1e-12)

    def test_bit_exact_match_with_targets(self):
        rng = np.random.default_rng(9)
        a = [T.anisotropy_state(random_realizable_tensor(rng)) for _ in range(64)]
        b = [T.anisotropy_state(random_realizable_tensor(rng)) for _ in range(64)]
        assert np.array_equal(pt.discrepancy_map(a, b), ds.make_targets(a, b))


class TestExport:
    def test_four_point_field(self, tmp_path):
        path = tmp_path / "field.csv"
        pt.export_field_csv(
            np.array([0.1, 0.2, 0.3, 0.4]),
            np.arange(4.0),
            np.zeros(4),
            path,
            names=("delta_b",),
        )
        lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
        assert lines[0] == "x,y,delta_b"
        assert len(lines) == 5

    def test_roundtrip_exact(self, tmp_path):
        rng = np.random.default_rng(10)
        values = rng.uniform(size=16)
        x = rng.uniform(size=16)
        y = rng.uniform(size=16)
        path = tmp_path / "field.csv"
        pt.export_field_csv(values, x, y, path, dims=(4, 4), header_lines=["meta"])
        header, data, nx, ny = ds.read_table(path)
        assert (nx, ny) == (4, 4)
        assert np.array_equal(data[:, 2], values)
        assert np.array_equal(data[:, 0], x)

    def test_structured_dims_comment(self, tmp_path):
        path = tmp_path / "field.csv"
        n = 128 * 128
        pt.export_field_csv(np.zeros(n), np.zeros(n), np.zeros(n), path, dims=(128, 128))
        assert "# dims 128 128" in path.read_text().splitlines()

    def test_multicolumn_stress_export(self, tmp_path):
        path = tmp_path / "stress.csv"
        pt.export_field_csv(
            np.ones((3, 6)), np.zeros(3), np.zeros(3), path, names=ds.STRESS_ROLES
        )
        header, data, _, _ = ds.read_table(path)
        assert header == ["x", "y", "uu", "vv", "ww", "uv", "uw", "vw"]
        assert data.shape == (3, 8)

    def test_corner_filename(self):
        assert pt.corner_filename("stress", "1C") == "stress_1c.csv"
        with pytest.raises(DomainError):
            pt.corner_filename("stress", "5C")
