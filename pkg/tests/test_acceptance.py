"""Acceptance suite: one test per release criterion, run in order.

Each test prints a single PASS line once its criterion holds (run with
pytest -s to see them); a failing assert marks the criterion FAIL. The
wavy-wall criterion runs against user-supplied data when the environment
variables TURBUQ_WAVYWALL_RANS / TURBUQ_WAVYWALL_DNS (and optionally
TURBUQ_WAVYWALL_SCHEMA) point at co-located exports; otherwise it runs on
the built-in synthetic wavy case.
"""

import math
import os
import time

import numpy as np
import pytest

from turbuq import dataset as ds, features as feat, nn, perturb as pt, tensors as T

from synthcase import (
    analytic_snapshot,
    paired_case,
    random_realizable_eigs,
    random_realizable_tensor,
    random_rotation,
    write_schema,
)


def report(n, text):
    print(f"PASS criterion {n}: {text}")


def test_criterion_1_eigen_barycentric_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst_rec = worst_round = 0.0
    for _ in range(1000):
        b = random_realizable_tensor(rng)
        es = T.eig_sym3(b)
        rec = (es.eigenvectors * es.eigenvalues) @ es.eigenvectors.T
        worst_rec = max(worst_rec, float(np.linalg.norm(rec - b.as_matrix())))
        lam = tuple(float(v) for v in es.eigenvalues)
        out = T.eigs_from_barycentric(T.barycentric_from_eigs(lam))
        worst_round = max(worst_round, max(abs(a - c) for a, c in zip(lam, out)))
    assert worst_rec < 1e-10
    assert worst_round < 1e-12

    for corner, lam in T.CORNER_EIGENVALUES.items():
        p = T.barycentric_from_eigs(lam)
        assert (p.x, p.y) == pytest.approx(T.CORNERS[corner], abs=1e-15)
        back = T.eigs_from_barycentric(p)
        assert back == pytest.approx(lam, abs=1e-15)

    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    report(1, f"eigen reconstruction {worst_rec:.2e}, roundtrip {worst_round:.2e}, "
              f"corners exact, {elapsed:.2f}s")


def test_criterion_2_perturbation_realizability():
    t0 = time.perf_counter()
    rng = np.random.default_rng(102)
    points = [T.barycentric_from_eigs(random_realizable_eigs(rng)) for _ in range(1000)]
    corners = ("1C", "2C", "3C")

    for p in points[:500]:
        assert T.perturb_eigenvalues(p, 0.0, "1C") is p  # identity, exact
        for corner in corners:
            q = T.perturb_eigenvalues(p, 1.0, corner)
            assert (q.x, q.y) == T.CORNERS[corner]  # absorption, exact

    n = 0
    deltas = rng.uniform(0.0, 1.0, size=100_000)
    for i, d in enumerate(deltas):
        p = points[i % 1000]
        corner = corners[i % 3]
        lam = T.eigs_from_barycentric(T.perturb_eigenvalues(p, float(d), corner))
        assert T.realizability_check(lam).ok
        n += 1
    elapsed = time.perf_counter() - t0
    assert n == 100_000
    assert elapsed < 10.0
    report(2, f"100% of {n} perturbation triples realizable, {elapsed:.2f}s")


def test_criterion_3_gradient_oracle():
    from test_nn import finite_difference_gradients, max_relative_error

    t0 = time.perf_counter()
    rng = np.random.default_rng(103)
    worst = 0.0
    for trial in range(20):
        n_in = int(rng.integers(2, 10))
        hidden = [int(rng.integers(4, 16)) for _ in range(int(rng.integers(1, 4)))]
        sizes = [n_in] + hidden + [1]
        model = nn.xavier_init(sizes, rng=rng, activation="tanh", dropout_rate=0.0)
        x = rng.uniform(-1.0, 1.0, size=(int(rng.integers(1, 5)), n_in))
        y_true = rng.uniform(-1.0, 1.0, size=len(x))
        _, cache = nn.forward_batch(model, x)
        analytic = nn.backward(model, cache, y_true)
        numeric = finite_difference_gradients(model, x, y_true, h=1e-6)
        worst = max(worst, max_relative_error(analytic, numeric))
    elapsed = time.perf_counter() - t0
    assert worst < 1e-6
    assert elapsed < 30.0
    report(3, f"20 networks, max relative gradient error {worst:.2e}, {elapsed:.2f}s")


def test_criterion_4_feature_invariance():
    from synthcase import point_snapshot, random_plausible_point, gradient_field

    rng = np.random.default_rng(104)
    lows = np.array([r[0] for r in feat.FEATURE_RANGES])
    highs = np.array([r[1] for r in feat.FEATURE_RANGES])
    worst = 0.0
    for _ in range(1000):
        u, g, gp, k, eps, nu_t, nu, rho, d, c0 = random_plausible_point(rng)
        snap = point_snapshot(u, k, eps, nu_t, nu, rho, d, c0)
        q0 = np.array(feat.compute_features(0, snap, gradient_field(g, gp)))
        assert np.all(q0 >= lows - 1e-12) and np.all(q0 <= highs + 1e-12)
        rot = random_rotation(rng)
        snap_r = point_snapshot(rot @ u, k, eps, nu_t, nu, rho, d, c0)
        q1 = np.array(
            feat.compute_features(0, snap_r, gradient_field(rot @ g @ rot.T, rot @ gp))
        )
        worst = max(worst, float(np.abs(q1 - q0).max()))
    assert worst < 1e-10

    # clamp at 2: sqrt(k) d / (50 nu) = 5
    nu = 1e-3
    snap = point_snapshot(np.ones(3), 0.25, 0.1, 0.0, nu, 1.0, 5 * 50 * nu / 0.5, 340.0)
    q = feat.compute_features(0, snap, gradient_field(np.zeros((3, 3)), np.zeros(3)))
    assert q.q3 == 2.0
    report(4, f"nine features rotation-invariant to {worst:.2e}, ranges hold, clamp hit")


def train_on_case(nx, ny, wavy, config):
    snap = analytic_snapshot(nx, ny, wavy=wavy)
    grads = feat.compute_gradients(snap)
    states, _ = ds.rans_anisotropy(snap, grads)
    matrix = feat.compute_feature_matrix(snap, grads)
    from synthcase import hifi_from_targets, true_delta_fn

    truth = true_delta_fn(matrix)
    hifi = hifi_from_targets(snap, states, truth)
    hifi_states, _ = ds.hifi_anisotropy(hifi)
    delta = ds.make_targets(states, hifi_states)
    samples = ds.make_samples(matrix, delta, tag="synthetic")
    sample_set = ds.split(samples, (0.8, 0.2), seed=config.seed)
    model, history = nn.train(sample_set, config)
    return snap, matrix, delta, sample_set, model, history


def test_criterion_5_synthetic_end_to_end():
    t0 = time.perf_counter()
    config = nn.TrainConfig(
        learning_rate=2.5e-4,
        batch_size=256,
        max_epochs=1500,
        patience=100,
        dropout_rate=0.0,
        seed=7,
        activation="relu",
        standardize=True,
    )
    snap, matrix, delta, sample_set, model, history = train_on_case(64, 64, False, config)
    idx = sample_set.indices("validation")
    x_val = matrix[idx]
    y_val = delta[idx]
    pred, _ = nn.predict_field(model, x_val)
    metrics = nn.regression_metrics(pred, y_val)
    elapsed = time.perf_counter() - t0
    assert metrics["r2"] > 0.9, metrics
    assert metrics["mse"] < 5e-3, metrics
    assert elapsed < 600.0
    report(5, f"64x64 end-to-end: held-out r2={metrics['r2']:.4f} "
              f"mse={metrics['mse']:.2e} in {elapsed:.1f}s ({len(history)} epochs)")


def test_criterion_6_overfit_sanity():
    rng = np.random.default_rng(106)
    snap, hifi, delta = paired_case(16, 16)
    grads = feat.compute_gradients(snap)
    matrix = feat.compute_feature_matrix(snap, grads)
    pick = rng.choice(snap.n_points, size=100, replace=False)
    samples = ds.make_samples(matrix[pick], delta[pick], tag="subset")
    sample_set = ds.split(samples, (0.8, 0.2), seed=3)
    config = nn.TrainConfig(
        learning_rate=2.5e-4,
        batch_size=256,
        max_epochs=5000,
        patience=5000,
        dropout_rate=0.0,
        seed=3,
        activation="relu",
        standardize=True,
    )
    model, history = nn.train(sample_set, config)
    best_train = min(r.train_loss for r in history)
    assert best_train < 1e-3, best_train
    report(6, f"default architecture overfits 100 samples to train mse {best_train:.2e} "
              f"({len(history)} epochs)")


def test_criterion_7_dataset_arithmetic(tmp_path):
    snap = analytic_snapshot(128, 128)
    path = tmp_path / "wavy.csv"
    ds.write_flow_csv(snap, path)
    schema = ds.DatasetSchema(rho=1.0, nu=1e-3, c0=340.0)
    back = ds.load_flow_csv(path, schema)
    assert back.n_points == 16384

    samples = [ds.TrainingSample(np.zeros(9), 0.0, i) for i in range(back.n_points)]
    a = ds.split(samples, (0.8, 0.2), seed=12)
    counts = a.counts()
    assert counts == {"train": 13107, "validation": 3277}
    b = ds.split(samples, (0.8, 0.2), seed=12)
    assert a.assignment == b.assignment
    report(7, "16384-point file splits into 13107 train / 3277 validation, deterministic")


def test_criterion_8_serialization(tmp_path):
    rng = np.random.default_rng(108)
    model = nn.xavier_init([9, 15, 15, 1], rng=rng, dropout_rate=0.1)
    model.feature_mean = rng.normal(size=9)
    model.feature_scale = rng.uniform(0.5, 2.0, size=9)
    mpath = tmp_path / "model.txt"
    nn.save_model(model, mpath)
    loaded = nn.load_model(mpath)
    probe = rng.uniform(-1, 1, size=(64, 9))
    ya, _ = nn.forward_batch(model, probe)
    yb, _ = nn.forward_batch(loaded, probe)
    assert np.array_equal(ya, yb)

    snap = analytic_snapshot(8, 8)
    fpath = tmp_path / "snap.csv"
    ds.write_flow_csv(snap, fpath)
    back = ds.load_flow_csv(fpath, ds.DatasetSchema(rho=snap.rho, nu=snap.nu))
    for name in ("x", "y", "u", "v", "p", "k", "epsilon", "nu_t", "d"):
        assert np.array_equal(getattr(snap, name), getattr(back, name))

    values = rng.uniform(size=(64, 2))
    tpath = tmp_path / "field.csv"
    pt.export_field_csv(values, snap.x, snap.y, tpath, names=("a", "b"), dims=(8, 8))
    _, data, nx, ny = ds.read_table(tpath)
    assert np.array_equal(data[:, 2:], values) and (nx, ny) == (8, 8)
    report(8, "model and CSV round trips are exact")


def _wavywall_user_case():
    rans = os.environ.get("TURBUQ_WAVYWALL_RANS")
    dns = os.environ.get("TURBUQ_WAVYWALL_DNS")
    if not rans or not dns:
        return None
    schema_path = os.environ.get("TURBUQ_WAVYWALL_SCHEMA")
    schema = ds.load_schema(schema_path) if schema_path else ds.DatasetSchema()
    snap = ds.load_flow_csv(rans, schema, kind="rans")
    grads = feat.compute_gradients(snap)
    states, _ = ds.rans_anisotropy(snap, grads)
    matrix = feat.compute_feature_matrix(snap, grads)
    header = ds.csv_columns(dns)
    if all(schema.column(r) in header for r in ds.STRESS_ROLES):
        hifi = ds.load_flow_csv(dns, schema, kind="hifi")
        hifi_states, _ = ds.hifi_anisotropy(hifi)
    else:
        hifi = ds.load_flow_csv(dns, schema, kind="rans")
        hifi_states, _ = ds.rans_anisotropy(hifi, feat.compute_gradients(hifi))
    delta = ds.make_targets(states, hifi_states)
    return snap, matrix, delta


def test_criterion_9_wavywall_direction():
    config = nn.TrainConfig(
        learning_rate=2.5e-4,
        batch_size=256,
        max_epochs=800,
        patience=80,
        dropout_rate=0.0,
        seed=9,
        activation="relu",
        standardize=True,
    )
    user = _wavywall_user_case()
    if user is not None:
        snap, matrix, delta = user
        samples = ds.make_samples(matrix, delta, tag="wavywall")
        sample_set = ds.split(samples, (0.8, 0.2), seed=config.seed)
        model, _ = nn.train(sample_set, config)
        source = "user-supplied wavy-wall data"
    else:
        snap, matrix, delta, sample_set, model, _ = train_on_case(48, 48, True, config)
        source = "synthetic wavy-wall case"

    pred, _ = nn.predict_field(model, matrix)
    y = snap.y
    band = y < y.min() + 0.2 * (y.max() - y.min())
    assert band.sum() > 10
    near_wall_mean = float(pred[band].mean())
    overall_mean = float(pred.mean())
    assert near_wall_mean > overall_mean, (near_wall_mean, overall_mean)
    report(9, f"{source}: mean predicted delta_b near the lower wall "
              f"{near_wall_mean:.4f} > domain mean {overall_mean:.4f}")
