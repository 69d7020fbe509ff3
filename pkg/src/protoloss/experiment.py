"""Experiment orchestration behind the CLI: config parsing, runs, analysis, comparisons.

Config files are JSON::

    {
      "data":  {"preset": "blobs-10-3"}                       # or
               {"kind": "blobs", "M": 10, "D": 16, "n_per_class": 500,
                "center_scale": 5.0, "noise_sigma": 1.0, "seed": 0}   # or
               {"kind": "csv", "train": "train.csv", "test": "test.csv", "M": 10, "rescale": false},
      "model": {"hidden": [64, 64], "latent_dim": 3},
      "train": {"epochs": 200, "batch_size": 64, "eta": 0.1, "eta_c": 0.1, "momentum": 0.9,
                "weight_decay": 0.0005, "lr_drop_points": [0.25, 0.5, 0.75], "lr_drop_factor": 0.1,
                "loss_weights": {"lambda_pos": 0.01, "lambda_neg_sample": 0.01, "lambda_neg_class": 0.02},
                "alpha": 40.0, "seed": 0, "method": "DPNP"},
      "output_dir": "runs/example"
    }

Every section and field is optional. Omitted ``loss_weights`` default by
latent size: the low-dimensional set for ``latent_dim <= 3``, otherwise 0.1 each.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import geometry
from .data import Dataset, gaussian_blobs, load_csv, write_generated
from .errors import ConfigError, ContractError, ParseError, TrainingDiverged
from .losses import LossWeights
from .model import FeatureExtractor, MlpConfig
from .prototypes import init_prototypes, read_prototypes_csv, write_prototypes_csv
from .svg import histogram_svg, sphere_svg
from .trainer import Method, TrainConfig, train

logger = logging.getLogger(__name__)

PRESETS = {
    "blobs-10-3": {"kind": "blobs", "M": 10, "D": 16, "n_per_class": 500,
                   "center_scale": 5.0, "noise_sigma": 1.0, "seed": 0},
}
PRESET_MODELS = {"blobs-10-3": {"hidden": [64, 64], "latent_dim": 3}}

METRICS_COLUMNS = ["epoch", "ce", "pos", "neg_sample", "neg_class", "total", "train_acc", "test_acc", "lr"]
COMPARISON_COLUMNS = ["method", "seed", "test_acc", "min_sep", "mean_sep", "std_sep", "scr"]


def default_loss_weights(latent_dim: int) -> LossWeights:
    return LossWeights.low_dim() if latent_dim <= 3 else LossWeights(0.1, 0.1, 0.1)


# --- config ----------------------------------------------------------------

@dataclass
class DataConfig:
    kind: str = "blobs"
    M: int = 10
    D: int = 16
    n_per_class: int = 500
    center_scale: float = 5.0
    noise_sigma: float = 1.0
    seed: int = 0
    train: str | None = None
    test: str | None = None
    rescale: bool = False
    preset: str | None = None

    def validate(self, check_paths: bool = True) -> None:
        if self.kind not in ("blobs", "csv"):
            raise ConfigError("data.kind", f"expected 'blobs' or 'csv', got {self.kind!r}")
        if self.M < 1:
            raise ConfigError("data.M", "must be >= 1")
        if self.kind == "blobs":
            for name in ("D", "n_per_class"):
                if getattr(self, name) < 1:
                    raise ConfigError(f"data.{name}", "must be a positive integer")
            if not self.center_scale > 0:
                raise ConfigError("data.center_scale", "must be positive")
            if self.noise_sigma < 0:
                raise ConfigError("data.noise_sigma", "must be >= 0")
        else:
            if not self.train:
                raise ConfigError("data.train", "csv data needs a train path")
            if check_paths:
                for name in ("train", "test"):
                    p = getattr(self, name)
                    if p and not Path(p).is_file():
                        raise ConfigError(f"data.{name}", f"file not found: {p}")


@dataclass
class ModelConfig:
    hidden: list[int] = field(default_factory=lambda: [64, 64])
    latent_dim: int = 3

    def validate(self) -> None:
        if self.latent_dim < 1:
            raise ConfigError("model.latent_dim", "must be >= 1")
        if any(int(h) < 1 for h in self.hidden):
            raise ConfigError("model.hidden", "layer sizes must be >= 1")


@dataclass
class ExperimentConfig:
    data: DataConfig
    model: ModelConfig
    train: TrainConfig
    output_dir: str = "runs/latest"

    def to_json(self) -> dict:
        tr = asdict(self.train)
        tr["method"] = self.train.method.value
        tr["lr_drop_points"] = list(self.train.lr_drop_points)
        return {"data": asdict(self.data), "model": asdict(self.model), "train": tr,
                "output_dir": self.output_dir}


def _take(section: dict, cls, prefix: str) -> dict:
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(section) - known)
    if unknown:
        raise ConfigError(f"{prefix}.{unknown[0]}", "unknown field")
    return section


def _coerce(value, kind, name):
    try:
        if kind is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError
            return int(value)
        if kind is float:
            if isinstance(value, bool):
                raise ValueError
            return float(value)
        if kind is bool:
            if not isinstance(value, bool):
                raise ValueError
            return value
    except (TypeError, ValueError):
        raise ConfigError(name, f"expected {kind.__name__}, got {value!r}") from None
    return value


def parse_config(raw: dict, overrides: dict | None = None, check_paths: bool = True) -> ExperimentConfig:
    """Build and validate an :class:`ExperimentConfig`; ``overrides`` win over ``raw``."""
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be a JSON object")
    raw = copy.deepcopy(raw)
    unknown = sorted(set(raw) - {"data", "model", "train", "output_dir"})
    if unknown:
        raise ConfigError(unknown[0], "unknown field")

    data_raw = dict(raw.get("data") or {})
    model_raw = dict(raw.get("model") or {})
    preset = data_raw.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError("data.preset", f"unknown preset {preset!r}; known: {sorted(PRESETS)}")
        data_raw = {**PRESETS[preset], **data_raw}
        model_raw = {**PRESET_MODELS[preset], **model_raw}
    _take(data_raw, DataConfig, "data")
    types = {"M": int, "D": int, "n_per_class": int, "seed": int, "center_scale": float,
             "noise_sigma": float, "rescale": bool}
    for k, t in types.items():
        if k in data_raw:
            data_raw[k] = _coerce(data_raw[k], t, f"data.{k}")
    data = DataConfig(**data_raw)
    data.validate(check_paths)

    _take(model_raw, ModelConfig, "model")
    if "latent_dim" in model_raw:
        model_raw["latent_dim"] = _coerce(model_raw["latent_dim"], int, "model.latent_dim")
    if "hidden" in model_raw:
        if not isinstance(model_raw["hidden"], list):
            raise ConfigError("model.hidden", "expected a list of layer sizes")
        model_raw["hidden"] = [_coerce(h, int, "model.hidden") for h in model_raw["hidden"]]
    model = ModelConfig(**model_raw)
    model.validate()

    train_raw = dict(raw.get("train") or {})
    train_raw.update({k: v for k, v in (overrides or {}).items() if v is not None and k != "output_dir"})
    _take(train_raw, TrainConfig, "train")
    ttypes = {"epochs": int, "batch_size": int, "seed": int, "eta": float, "eta_c": float,
              "momentum": float, "weight_decay": float, "lr_drop_factor": float, "alpha": float}
    for k, t in ttypes.items():
        if k in train_raw:
            train_raw[k] = _coerce(train_raw[k], t, f"train.{k}")
    lw = train_raw.get("loss_weights")
    if lw is None:
        train_raw["loss_weights"] = default_loss_weights(model.latent_dim)
    elif isinstance(lw, dict):
        _take(lw, LossWeights, "train.loss_weights")
        train_raw["loss_weights"] = LossWeights(**{k: _coerce(v, float, f"train.loss_weights.{k}")
                                                   for k, v in lw.items()})
    try:
        train_cfg = TrainConfig(**train_raw)
    except ConfigError as exc:
        raise ConfigError(f"train.{exc.field}", str(exc).split(": ", 1)[-1]) from None

    out = (overrides or {}).get("output_dir") or raw.get("output_dir") or "runs/latest"
    return ExperimentConfig(data, model, train_cfg, str(out))


def load_config(path, overrides: dict | None = None, check_paths: bool = True) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON in {path}: {exc}") from None
    return parse_config(raw, overrides, check_paths)


# --- data ------------------------------------------------------------------

def build_data(cfg: DataConfig) -> tuple[Dataset, Dataset | None]:
    if cfg.kind == "blobs":
        return gaussian_blobs(cfg.M, cfg.D, cfg.n_per_class, cfg.center_scale, cfg.noise_sigma, cfg.seed)
    train_ds = load_csv(cfg.train, cfg.M, cfg.rescale, "train")
    test_ds = load_csv(cfg.test, cfg.M, cfg.rescale, "test") if cfg.test else None
    return train_ds, test_ds


def generate_data(cfg: ExperimentConfig, out_dir=None) -> Path:
    if cfg.data.kind != "blobs":
        raise ConfigError("data.kind", "gen-data only supports generated ('blobs') datasets")
    out = Path(out_dir or cfg.output_dir)
    train_ds, test_ds = build_data(cfg.data)
    d = cfg.data
    meta = {"generator": "gaussian_blobs", "n_per_class": d.n_per_class, "center_scale": d.center_scale,
            "noise_sigma": d.noise_sigma, "seed": d.seed}
    write_generated(out, train_ds, test_ds, meta)
    return out


# --- artifacts -------------------------------------------------------------

def _fmt(v) -> str:
    return repr(float(v))


def write_metrics_csv(path, history) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_COLUMNS)
        for m in history:
            row = m.row()
            w.writerow([row["epoch"]] + [_fmt(row[c]) for c in METRICS_COLUMNS[1:]])


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != METRICS_COLUMNS:
            raise ParseError(path, 1, f"unexpected header {reader.fieldnames}")
        return [{k: (int(v) if k == "epoch" else float(v)) for k, v in row.items()} for row in reader]


def write_embeddings_csv(path, H: np.ndarray, labels: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label"] + [f"h{t}" for t in range(H.shape[1])])
        for y, h in zip(labels, H):
            w.writerow([int(y)] + [_fmt(v) for v in h])


def read_embeddings_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:1] != ["label"]:
        raise ParseError(path, 1, "missing 'label,h0,...' header")
    d = len(rows[0]) - 1
    H = np.zeros((len(rows) - 1, d))
    y = np.zeros(len(rows) - 1, dtype=np.intp)
    for n, row in enumerate(rows[1:], start=2):
        if len(row) != d + 1:
            raise ParseError(path, n, f"expected {d + 1} columns, got {len(row)}")
        try:
            y[n - 2] = int(row[0])
            H[n - 2] = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise ParseError(path, n, str(exc)) from None
    return H, y


def git_blob_hash(payload: bytes) -> str:
    return hashlib.sha1(b"blob %d\0" % len(payload) + payload).hexdigest()


def _input_hash(cfg: ExperimentConfig, train_ds: Dataset, test_ds: Dataset | None) -> str:
    blob = json.dumps(cfg.to_json(), sort_keys=True).encode()
    for ds in (train_ds, test_ds):
        if ds is not None:
            blob += np.ascontiguousarray(ds.features).tobytes() + np.ascontiguousarray(ds.labels, dtype="<i8").tobytes()
    return git_blob_hash(blob)


def run_seeds(seed: int) -> tuple[int, int]:
    """Model-init and prototype-init seeds derived from the single run seed."""
    state = np.random.SeedSequence(seed).generate_state(2)
    return int(state[0]), int(state[1])


def run_training(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Train per ``cfg`` and write every run artifact. Returns the summary dict.

    On divergence ``diagnostics.json`` is written and the
    :class:`TrainingDiverged` is re-raised.
    """
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    train_ds, test_ds = build_data(cfg.data)
    tc = cfg.train
    model_seed, bank_seed = run_seeds(tc.seed)
    fx = FeatureExtractor.from_config(MlpConfig([train_ds.D, *cfg.model.hidden, cfg.model.latent_dim], seed=model_seed))
    bank = init_prototypes(train_ds.M, cfg.model.latent_dim, tc.alpha, bank_seed)
    try:
        result = train(fx, bank, train_ds, tc, test_ds)
    except TrainingDiverged as exc:
        diag = {"error": str(exc), **exc.state, "config": cfg.to_json()}
        (out / "diagnostics.json").write_text(json.dumps(diag, indent=2) + "\n")
        raise

    write_metrics_csv(out / "metrics.csv", result.history)
    write_prototypes_csv(out / "prototypes.csv", result.bank.values)
    if result.centers is not None:
        write_prototypes_csv(out / "centers.csv", result.centers)
    result.fx.save(out / "theta.bin")
    eval_ds = test_ds if test_ds is not None else train_ds
    write_embeddings_csv(out / "embeddings.csv", result.fx.embed(eval_ds.features), eval_ds.labels)
    write_embeddings_csv(out / "train_embeddings.csv", result.fx.embed(train_ds.features), train_ds.labels)

    last = result.history[-1]
    summary = {
        "method": tc.method.value,
        "seed": tc.seed,
        "train_accuracy": last.train_accuracy,
        "test_accuracy": None if math.isnan(last.test_accuracy) else last.test_accuracy,
        "final_loss": last.loss.as_dict(),
        "epochs": len(result.history),
        "norm_violations": int(sum(result.norm_checks)),
        "wall_time_s": time.perf_counter() - t0,
        "input_hash": _input_hash(cfg, train_ds, test_ds),
        "config": cfg.to_json(),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


# --- analysis --------------------------------------------------------------

def _write_hist_csv(path, edges, counts) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["edge_low", "edge_high", "count"])
        for a, b, c in zip(edges[:-1], edges[1:], counts):
            w.writerow([_fmt(a), _fmt(b), int(c)])


def analyze_run(run_dir, bin_width: float = geometry.DEFAULT_BIN_WIDTH) -> dict:
    """Geometry report for a finished run directory.

    Class centers come from ``centers.csv`` when the run has one (CL), else
    ``prototypes.csv``. SCR and intra-class angles use training embeddings
    when present.
    """
    run = Path(run_dir)
    for name in ("embeddings.csv", "prototypes.csv"):
        if not (run / name).is_file():
            raise FileNotFoundError(f"{run / name} is missing")
    centers_file = run / "centers.csv" if (run / "centers.csv").is_file() else run / "prototypes.csv"
    C = read_prototypes_csv(centers_file)
    emb_file = run / "train_embeddings.csv" if (run / "train_embeddings.csv").is_file() else run / "embeddings.csv"
    H, y = read_embeddings_csv(emb_file)
    if H.shape[1] != C.shape[1]:
        raise ContractError(f"embedding dim {H.shape[1]} differs from prototype dim {C.shape[1]}")

    report = geometry.geometry_report(H, y, C, bin_width)
    payload = report.to_json()
    payload.update({"centers_source": centers_file.name, "embeddings_source": emb_file.name,
                    "M": int(C.shape[0]), "d": int(C.shape[1])})
    (run / "geometry_report.json").write_text(json.dumps(payload, indent=2) + "\n")
    _write_hist_csv(run / "inter_hist.csv", *report.inter_hist)
    _write_hist_csv(run / "intra_hist.csv", *report.intra_hist)
    (run / "inter_hist.svg").write_text(histogram_svg(*report.inter_hist, "inter-class angles"))
    (run / "intra_hist.svg").write_text(histogram_svg(*report.intra_hist, "intra-class angles"))

    if C.shape[1] == 3:
        sh = geometry.spherical_surface_histogram(H, y, C, bin_width)
        with open(run / "sphere_hist.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["phi_bin", "theta_bin", "class", "count"])
            w.writerows(sh.rows())
        with open(run / "sphere_markers.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["kind", "class", "phi", "theta"])
            for kind, j, phi, theta in sh.markers:
                w.writerow([kind, j, _fmt(phi), _fmt(theta)])
        (run / "sphere_hist.svg").write_text(sphere_svg(sh))
    return payload


# --- comparison ------------------------------------------------------------

def _run_cell(args) -> dict:
    cfg_json, method, seed, out_dir = args
    cfg = parse_config(cfg_json, {"method": method, "seed": seed})
    row = {"method": method, "seed": seed}
    try:
        summary = run_training(cfg, out_dir)
        report = analyze_run(out_dir)
    except TrainingDiverged as exc:
        return {**row, "error": str(exc), "code": 4}
    except Exception as exc:  # child failures are reported, not fatal to the grid
        return {**row, "error": f"{type(exc).__name__}: {exc}", "code": 1}
    row.update({
        "test_acc": summary["test_accuracy"] if summary["test_accuracy"] is not None else summary["train_accuracy"],
        "min_sep": report["min_sep"],
        "mean_sep": report["mean_sep"],
        "std_sep": report["std_sep"],
        "scr": report["scr"],
    })
    return row


def worker_count(n_cells: int) -> int:
    env = os.environ.get("PROTOLOSS_THREADS")
    if env:
        try:
            cap = int(env)
        except ValueError:
            raise ConfigError("PROTOLOSS_THREADS", f"expected an integer, got {env!r}") from None
        if cap < 1:
            raise ConfigError("PROTOLOSS_THREADS", "must be >= 1")
    else:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_cells))


def compare(cfg: ExperimentConfig, methods, seeds, out_dir=None, workers: int | None = None) -> tuple[list[dict], Path]:
    """Run the method x seed grid; write ``comparison.csv`` and ``comparison.md``.

    Rows that failed carry ``error`` and ``code`` keys and are left out of
    both files.
    """
    methods = [Method.parse(m).value for m in methods]
    seeds = [int(s) for s in seeds]
    cells = [(m, s) for m in methods for s in seeds]
    if len(cells) < 2:
        raise ConfigError("methods", "compare needs at least two (method, seed) configurations")
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = cfg.to_json()
    jobs = [(base, m, s, str(out / m / f"seed_{s}")) for m, s in cells]
    n_workers = workers or worker_count(len(jobs))
    if n_workers == 1:
        rows = [_run_cell(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            rows = list(pool.map(_run_cell, jobs))

    good = [r for r in rows if "error" not in r]
    with open(out / "comparison.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARISON_COLUMNS)
        for r in good:
            w.writerow([r["method"], r["seed"]] + [_fmt(r[c]) for c in COMPARISON_COLUMNS[2:]])
    (out / "comparison.md").write_text(comparison_table(good, methods))
    return rows, out


def read_comparison_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != COMPARISON_COLUMNS:
            raise ParseError(path, 1, f"unexpected header {reader.fieldnames}")
        return [{k: (v if k == "method" else int(v) if k == "seed" else float(v)) for k, v in row.items()}
                for row in reader]


def comparison_table(rows: list[dict], methods) -> str:
    """Markdown table: one row per method, mean +- population std over seeds."""
    lines = ["| Model | Accuracy (%) | MinSep | MeanSep | Std | SCR | seeds |",
             "|---|---|---|---|---|---|---|"]
    for m in methods:
        sel = [r for r in rows if r["method"] == m]
        if not sel:
            lines.append(f"| {m} | - | - | - | - | - | 0 |")
            continue

        def cell(key, mult=1.0, digits=2):
            v = np.array([r[key] for r in sel], dtype=float) * mult
            return f"{v.mean():.{digits}f} ± {v.std():.{digits}f}"

        lines.append(f"| {m} | {cell('test_acc', 100.0)} | {cell('min_sep')} | {cell('mean_sep')} | "
                     f"{cell('std_sep')} | {cell('scr')} | {len(sel)} |")
    return "\n".join(lines) + "\n"
