"""Command-line pipeline: gradients, features, targets, train, predict,
perturb, evaluate and export-plot.

Each stage reads and writes plain CSV files in the output directory, so
runs are resumable and every stage can be tested on its own. A config
file holds the shared keys (key = value text); any flag overrides its
config key. Exit codes: 0 ok, 2 schema or config error, 3 data error,
4 numeric divergence.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, dataset as ds, features as feat, nn, perturb as pt
from .errors import (
    ConfigError,
    DataError,
    DivergenceError,
    PairingError,
    SchemaError,
    TurbuqError,
)

_CONFIG_KEYS = {
    "rans_file": str,
    "hifi_file": str,
    "schema_file": str,
    "output_dir": str,
    "seed": int,
    "learning_rate": float,
    "batch_size": int,
    "max_epochs": int,
    "patience": int,
    "dropout": float,
    "activation": str,
    "validation_fraction": float,
    "standardize": bool,
    "hidden_layers": int,
    "hidden_width": int,
    "split_mode": str,
    "rho": float,
    "nu": float,
    "C0": float,
}


@dataclass
class PipelineConfig:
    rans_file: str | None = None
    hifi_file: str | None = None
    schema_file: str | None = None
    output_dir: str = "out"
    seed: int = 0
    split_mode: str = "random"
    train: nn.TrainConfig = field(default_factory=nn.TrainConfig)
    constants: dict = field(default_factory=dict)
    effective: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        text = "\n".join(f"{k}={self.effective[k]}" for k in sorted(self.effective))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]

    def out_path(self, name: str) -> Path:
        out = Path(self.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        return out / name

    def metadata_lines(self) -> list[str]:
        return [
            f"turbuq {__version__}",
            f"config_hash {self.config_hash}",
            f"seed {self.seed}",
            f"timestamp {datetime.now(timezone.utc).isoformat()}",
        ]


def _parse_value(key: str, raw: str):
    kind = _CONFIG_KEYS[key]
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"config key {key}: cannot parse {raw!r} as {kind.__name__}") from None


def resolve_config(config_path: str | None, overrides: dict) -> PipelineConfig:
    """Defaults, then the config file, then flag overrides."""
    values: dict = {}
    if config_path is not None:
        for key, raw in ds.read_keyvalue(config_path).items():
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"unknown config key {key!r} in {config_path}")
            values[key] = _parse_value(key, raw)
    for key, value in overrides.items():
        if value is not None:
            values[key] = value

    cfg = PipelineConfig()
    cfg.rans_file = values.get("rans_file")
    cfg.hifi_file = values.get("hifi_file")
    cfg.schema_file = values.get("schema_file")
    cfg.output_dir = values.get("output_dir", "out")
    cfg.seed = values.get("seed", 0)
    cfg.split_mode = values.get("split_mode", "random")
    cfg.train = nn.TrainConfig(
        learning_rate=values.get("learning_rate", 2.5e-4),
        batch_size=values.get("batch_size", 256),
        max_epochs=values.get("max_epochs", 2000),
        patience=values.get("patience", 50),
        dropout_rate=values.get("dropout", 0.1),
        seed=cfg.seed,
        validation_fraction=values.get("validation_fraction", 0.2),
        activation=values.get("activation", "relu"),
        standardize=values.get("standardize", True),
        hidden_layers=values.get("hidden_layers", 8),
        hidden_width=values.get("hidden_width", 15),
    )
    cfg.constants = {k: values[k] for k in ("rho", "nu", "C0") if k in values}
    cfg.effective = dict(values)
    return cfg


def _load_schema(cfg: PipelineConfig) -> ds.DatasetSchema:
    schema = ds.load_schema(cfg.schema_file) if cfg.schema_file else ds.DatasetSchema()
    if "rho" in cfg.constants:
        schema.rho = cfg.constants["rho"]
    if "nu" in cfg.constants:
        schema.nu = cfg.constants["nu"]
    if "C0" in cfg.constants:
        schema.c0 = cfg.constants["C0"]
    return schema


def _require_file(path: str | None, what: str) -> str:
    if path is None:
        raise ConfigError(f"{what} is not configured (flag or config key)")
    if not Path(path).exists():
        raise ConfigError(f"{what} does not exist: {path}")
    return path


def _load_rans(cfg: PipelineConfig, path: str | None = None) -> ds.FlowFieldSnapshot:
    rans = _require_file(path or cfg.rans_file, "RANS flow file (rans_file)")
    return ds.load_flow_csv(rans, _load_schema(cfg), kind="rans")


def _dims(snapshot: ds.FlowFieldSnapshot) -> tuple[int, int] | None:
    if snapshot.nx is not None and snapshot.ny is not None:
        return (snapshot.nx, snapshot.ny)
    return None


# ----------------------------------------------------------------- commands


def cmd_gradients(cfg: PipelineConfig, args) -> int:
    snap = _load_rans(cfg, args.rans_file)
    grads = feat.compute_gradients(snap)
    names = ["point_index", "x", "y", "dU_dx", "dU_dy", "dV_dx", "dV_dy",
             "dP_dx", "dP_dy", "dk_dx", "dk_dy"]
    cols = [
        np.arange(snap.n_points, dtype=float), snap.x, snap.y,
        grads.grad_u[:, 0, 0], grads.grad_u[:, 0, 1],
        grads.grad_u[:, 1, 0], grads.grad_u[:, 1, 1],
        grads.grad_p[:, 0], grads.grad_p[:, 1],
        grads.grad_k[:, 0], grads.grad_k[:, 1],
    ]
    out = Path(args.out) if args.out else cfg.out_path("gradients.csv")
    _write_table(out, names, cols, cfg, dims=_dims(snap))
    print(f"wrote {out} ({snap.n_points} points)")
    return 0


def cmd_features(cfg: PipelineConfig, args) -> int:
    snap = _load_rans(cfg, args.rans_file)
    grads = feat.compute_gradients(snap)
    matrix = feat.compute_feature_matrix(snap, grads)
    names = ["point_index", "x", "y", *feat.FEATURE_NAMES]
    cols = [np.arange(snap.n_points, dtype=float), snap.x, snap.y]
    cols.extend(matrix[:, j] for j in range(9))
    out = Path(args.out) if args.out else cfg.out_path("features.csv")
    _write_table(out, names, cols, cfg, dims=_dims(snap))
    for line in feat.feature_range_report(matrix):
        print(line)
    print(f"wrote {out} ({snap.n_points} points)")
    return 0


def cmd_targets(cfg: PipelineConfig, args) -> int:
    schema = _load_schema(cfg)
    snap_r = _load_rans(cfg, args.rans_file)
    grads = feat.compute_gradients(snap_r)
    states_r, floored_r = ds.rans_anisotropy(snap_r, grads)

    hifi_path = _require_file(args.hifi_file or cfg.hifi_file, "high-fidelity file (hifi_file)")
    header = ds.csv_columns(hifi_path)
    has_stress = all(schema.column(role) in header for role in ds.STRESS_ROLES)
    if has_stress:
        snap_h = ds.load_flow_csv(hifi_path, schema, kind="hifi")
        states_h, floored_h = ds.hifi_anisotropy(snap_h)
        source = "stress columns"
    else:
        snap_h = ds.load_flow_csv(hifi_path, schema, kind="rans")
        grads_h = feat.compute_gradients(snap_h)
        states_h, floored_h = ds.rans_anisotropy(snap_h, grads_h)
        source = "eddy-viscosity model (no stress columns found)"
    if snap_h.n_points != snap_r.n_points:
        raise PairingError(
            f"RANS file has {snap_r.n_points} points, high-fidelity file has "
            f"{snap_h.n_points}; grids must be co-located "
            "(see turbuq.dataset.resample_nearest for approximate pairing)"
        )

    delta = ds.make_targets(states_r, states_h)
    names = ["point_index", "x", "y", "x_bary_rans", "y_bary_rans",
             "x_bary_hifi", "y_bary_hifi", "delta_b"]
    cols = [
        np.arange(snap_r.n_points, dtype=float), snap_r.x, snap_r.y,
        np.array([s.bary.x for s in states_r]), np.array([s.bary.y for s in states_r]),
        np.array([s.bary.x for s in states_h]), np.array([s.bary.y for s in states_h]),
        delta,
    ]
    out = Path(args.out) if args.out else cfg.out_path("targets.csv")
    _write_table(out, names, cols, cfg, dims=_dims(snap_r))
    print(f"high-fidelity anisotropy from {source}")
    if floored_r or floored_h:
        print(f"k-floor applied at {floored_r} RANS and {floored_h} high-fidelity points")
    print(f"wrote {out} ({snap_r.n_points} points, delta_b in "
          f"[{delta.min():.4g}, {delta.max():.4g}])")
    return 0


def _read_features_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, tuple | None]:
    header, data, nx, ny = ds.read_table(_require_file(str(path), "features file"))
    missing = [name for name in ("point_index", "x", "y", *feat.FEATURE_NAMES) if name not in header]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")
    idx = {name: i for i, name in enumerate(header)}
    matrix = np.column_stack([data[:, idx[name]] for name in feat.FEATURE_NAMES])
    dims = (nx, ny) if nx is not None else None
    return data[:, idx["point_index"]], data[:, idx["x"]], data[:, idx["y"]], matrix, dims


def _read_targets_csv(path) -> tuple[np.ndarray, np.ndarray]:
    header, data, _, _ = ds.read_table(_require_file(str(path), "targets file"))
    for name in ("point_index", "delta_b"):
        if name not in header:
            raise SchemaError(f"{path}: missing column {name!r}")
    idx = {name: i for i, name in enumerate(header)}
    return data[:, idx["point_index"]], data[:, idx["delta_b"]]


def cmd_train(cfg: PipelineConfig, args) -> int:
    features_path = args.features or cfg.out_path("features.csv")
    targets_path = args.targets or cfg.out_path("targets.csv")
    pidx_f, _, _, matrix, _ = _read_features_csv(features_path)
    pidx_t, delta = _read_targets_csv(targets_path)
    if len(pidx_f) != len(pidx_t) or not np.array_equal(pidx_f, pidx_t):
        raise PairingError(
            f"{features_path} and {targets_path} do not cover the same points"
        )

    tag = Path(cfg.rans_file).name if cfg.rans_file else str(features_path)
    samples = ds.make_samples(matrix, delta, tag=tag)
    fractions = (1.0 - cfg.train.validation_fraction, cfg.train.validation_fraction)
    sample_set = ds.split(samples, fractions, cfg.seed, mode=cfg.split_mode)
    counts = sample_set.counts()
    print(f"split: {counts.get('train', 0)} train / {counts.get('validation', 0)} validation "
          f"(seed {cfg.seed})")

    model, history = nn.train(sample_set, cfg.train)

    model_path = Path(args.model) if args.model else cfg.out_path("model.txt")
    nn.save_model(model, model_path, header_lines=cfg.metadata_lines())
    history_path = cfg.out_path("history.csv")
    _write_history(history_path, history, cfg)
    best = min(history, key=lambda r: r.val_loss)
    last = history[-1]
    print(f"trained {last.epoch} epochs; final train_mse={last.train_loss:.6g} "
          f"val_mse={last.val_loss:.6g}")
    print(f"best epoch {best.epoch}: val_mse={best.val_loss:.6g}")
    print(f"wrote {model_path} and {history_path}")
    return 0


def cmd_predict(cfg: PipelineConfig, args) -> int:
    model = nn.load_model(args.model or cfg.out_path("model.txt"))
    features_path = args.features or cfg.out_path("features.csv")
    _, x, y, matrix, dims = _read_features_csv(features_path)
    values, clamped = nn.predict_field(model, matrix)
    out = Path(args.out) if args.out else cfg.out_path("delta_b.csv")
    pt.export_field_csv(values, x, y, out, names=("delta_b",), dims=dims,
                        header_lines=cfg.metadata_lines())
    print(f"wrote {out} ({len(values)} points, {clamped} clamped to [0, 1])")
    return 0


def cmd_perturb(cfg: PipelineConfig, args) -> int:
    snap = _load_rans(cfg, args.rans_file)
    grads = feat.compute_gradients(snap)
    states, floored = ds.rans_anisotropy(snap, grads)

    delta_path = _require_file(
        str(args.delta_b or cfg.out_path("delta_b.csv")), "delta_b field file"
    )
    header, data, _, _ = ds.read_table(delta_path)
    if "delta_b" not in header:
        raise SchemaError(f"{delta_path}: missing column 'delta_b'")
    delta = data[:, header.index("delta_b")]
    if len(delta) != snap.n_points:
        raise PairingError(
            f"delta_b field has {len(delta)} points, RANS snapshot has {snap.n_points}"
        )

    field = pt.apply_perturbation(states, snap.k, delta)
    stress_names = list(ds.STRESS_ROLES)
    for corner in pt.CORNER_ORDER:
        out = cfg.out_path(pt.corner_filename("stress", corner))
        pt.export_field_csv(field.stresses[corner], snap.x, snap.y, out,
                            names=stress_names, dims=_dims(snap),
                            header_lines=cfg.metadata_lines())
        print(f"wrote {out}")
    if floored:
        print(f"k-floor applied at {floored} points")
    return 0


def cmd_evaluate(cfg: PipelineConfig, args) -> int:
    model = nn.load_model(args.model or cfg.out_path("model.txt"))
    features_path = args.features or cfg.out_path("features.csv")
    targets_path = args.targets or cfg.out_path("targets.csv")
    pidx_f, _, _, matrix, _ = _read_features_csv(features_path)
    pidx_t, delta = _read_targets_csv(targets_path)
    if len(pidx_f) != len(pidx_t) or not np.array_equal(pidx_f, pidx_t):
        raise PairingError(f"{features_path} and {targets_path} do not cover the same points")
    values, clamped = nn.predict_field(model, matrix)
    metrics = nn.regression_metrics(values, delta)
    out = cfg.out_path("evaluation.txt")
    with open(out, "w", encoding="utf-8") as handle:
        for line in cfg.metadata_lines():
            handle.write(f"# {line}\n")
        for key in ("mse", "mae", "r2"):
            handle.write(f"{key} = {metrics[key]!r}\n")
        handle.write(f"clamped = {clamped}\n")
    print(f"mse={metrics['mse']:.6g} mae={metrics['mae']:.6g} r2={metrics['r2']:.6g} "
          f"({clamped} clamped)")
    print(f"wrote {out}")
    return 0


def cmd_export_plot(cfg: PipelineConfig, args) -> int:
    try:
        import matplotlib
    except ImportError:
        raise ConfigError(
            "export-plot needs matplotlib (pip install turbuq[plot])"
        ) from None
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = _require_file(args.field, "field file")
    header, data, nx, ny = ds.read_table(path)
    column = args.column or (header[2] if len(header) > 2 else None)
    if column not in header:
        raise SchemaError(f"{path}: column {column!r} not found (have {header})")
    x = data[:, header.index("x")]
    y = data[:, header.index("y")]
    v = data[:, header.index(column)]

    fig, ax = plt.subplots(figsize=(7, 4))
    if nx is not None and ny is not None and nx * ny == len(v):
        m = ax.contourf(x.reshape(ny, nx), y.reshape(ny, nx), v.reshape(ny, nx), levels=30)
    else:
        m = ax.tricontourf(x, y, v, levels=30)
    fig.colorbar(m, ax=ax, label=column)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(Path(path).name)
    out = Path(args.out) if args.out else cfg.out_path(f"{Path(path).stem}.png")
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=150, bbox_inches="tight")
    plt.close(fig)
    print(f"wrote {out}")
    return 0


# ------------------------------------------------------------------ plumbing


def _write_table(path, names, cols, cfg: PipelineConfig, dims=None) -> None:
    arrays = [np.asarray(c, dtype=float) for c in cols]
    with open(path, "w", encoding="utf-8") as handle:
        for line in cfg.metadata_lines():
            handle.write(f"# {line}\n")
        if dims is not None:
            handle.write(f"# dims {dims[0]} {dims[1]}\n")
        handle.write(",".join(names) + "\n")
        for i in range(len(arrays[0])):
            handle.write(",".join(repr(float(a[i])) for a in arrays) + "\n")


def _write_history(path, history, cfg: PipelineConfig) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for line in cfg.metadata_lines():
            handle.write(f"# {line}\n")
        handle.write(f"# learning_rate {cfg.train.learning_rate!r}\n")
        handle.write("epoch,train_loss,val_loss,learning_rate,wall_time\n")
        for row in history:
            handle.write(
                f"{row.epoch},{row.train_loss!r},{row.val_loss!r},"
                f"{row.learning_rate!r},{row.wall_time!r}\n"
            )


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--output-dir", dest="output_dir", help="directory for pipeline outputs")
    p.add_argument("--seed", type=int, help="RNG seed recorded in every output")
    p.add_argument("--rans-file", dest="rans_file", help="RANS flow CSV")
    p.add_argument("--hifi-file", dest="hifi_file", help="high-fidelity flow CSV")
    p.add_argument("--schema-file", dest="schema_file", help="dataset schema file")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--activation", choices=list(nn.ACTIVATIONS))
    p.add_argument("--validation-fraction", dest="validation_fraction", type=float)
    p.add_argument("--standardize", type=int, choices=(0, 1))
    p.add_argument("--hidden-layers", dest="hidden_layers", type=int)
    p.add_argument("--hidden-width", dest="hidden_width", type=int)
    p.add_argument("--split-mode", dest="split_mode", choices=("random", "contiguous"))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="turbuq",
        description="Eigenvalue perturbation uncertainty pipeline for RANS data",
    )
    parser.add_argument("--version", action="version", version=f"turbuq {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gradients", help="compute grid gradients for a RANS file")
    _add_common(p)
    p.add_argument("--out", help="output CSV path")
    p.set_defaults(func=cmd_gradients)

    p = sub.add_parser("features", help="evaluate the nine flow features")
    _add_common(p)
    p.add_argument("--out", help="output CSV path")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("targets", help="perturbation magnitudes from paired RANS/high-fidelity data")
    _add_common(p)
    p.add_argument("--out", help="output CSV path")
    p.set_defaults(func=cmd_targets)

    p = sub.add_parser("train", help="train the regression network")
    _add_common(p)
    _add_train_flags(p)
    p.add_argument("--features", help="features CSV (default <output_dir>/features.csv)")
    p.add_argument("--targets", help="targets CSV (default <output_dir>/targets.csv)")
    p.add_argument("--model", help="model output path (default <output_dir>/model.txt)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict the perturbation magnitude field")
    _add_common(p)
    p.add_argument("--model", help="model file (default <output_dir>/model.txt)")
    p.add_argument("--features", help="features CSV")
    p.add_argument("--out", help="output CSV path")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("perturb", help="emit the three perturbed Reynolds stress fields")
    _add_common(p)
    p.add_argument("--delta-b", dest="delta_b", help="delta_b field CSV")
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("evaluate", help="score predictions against known targets")
    _add_common(p)
    p.add_argument("--model", help="model file")
    p.add_argument("--features", help="features CSV")
    p.add_argument("--targets", help="targets CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-plot", help="render a field CSV as a contour plot")
    _add_common(p)
    p.add_argument("field", help="field CSV produced by the pipeline")
    p.add_argument("--column", help="value column to plot (default: first)")
    p.add_argument("--out", help="output PNG path")
    p.set_defaults(func=cmd_export_plot)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    overrides = {
        key: getattr(args, key)
        for key in _CONFIG_KEYS
        if hasattr(args, key) and getattr(args, key) is not None
    }
    if "standardize" in overrides:
        overrides["standardize"] = bool(overrides["standardize"])
    try:
        cfg = resolve_config(args.config, overrides)
        return args.func(cfg, args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except TurbuqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
