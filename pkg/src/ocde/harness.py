"""Run configuration, the circle toy problem, and the commands behind the CLI."""

from __future__ import annotations

import csv
import dataclasses
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .boosting import BoostConfig
from .data import (
    Dataset,
    SplitSpec,
    apply_scaling,
    fit_scaling,
    load_csv,
    make_grid,
    split,
    subsample,
)
from .estimator import (
    DensityCurve,
    EstimatorError,
    InstrumentalDist,
    OcdeModel,
    fit_instrumental,
    fit_ocde,
)
from .evaluation import (
    METHODS,
    EvalReport,
    ExperimentConfig,
    ToyOracleEstimator,
    UniformEstimator,
    cde_loss,
    run_debiased,
    run_raw,
    write_report,
)

log = logging.getLogger(__name__)

TOY_INSTRUMENTAL = (-10.0, 10.0)


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "ocde_out"
    # toy
    n: int = 10000
    n_val: int = 2000
    n_test: int = 2000
    toy_x: str = "0,2.5,5"
    smooth_components: int = 20
    # bench
    target: str = "y"
    cap: int = 5000
    train_frac: float = 0.64
    val_frac: float = 0.16
    methods: str = ",".join(METHODS)
    nnk_k: str = "5,10,20,50,100,200"
    nnk_h: str = "0.005,0.01,0.02,0.05,0.1,0.2"
    fourier_candidates: str = ""
    timing: bool = True
    # fit / predict
    data: str = ""
    model: str = "ocde_model.json"
    query: str = ""
    # estimator
    bins: int = 1000
    pad_frac: float = 0.01
    max_trees: int = 500
    learning_rate: float = 0.1
    max_depth: int = 6
    min_samples_leaf: int = 20
    early_stopping_rounds: int = 50
    histogram_bins: int = 64

    @classmethod
    def keys(cls) -> dict[str, type]:
        return {f.name: _TYPES[f.type] for f in dataclasses.fields(cls)}

    def updated(self, values: dict) -> "RunConfig":
        kinds = self.keys()
        clean = {}
        for k, v in values.items():
            k = k.strip().replace("-", "_")
            if k not in kinds:
                raise ValueError(f"unknown config key {k!r}")
            clean[k] = _convert(v, kinds[k], k)
        return dataclasses.replace(self, **clean)

    def boost(self) -> BoostConfig:
        return BoostConfig(
            max_trees=self.max_trees,
            learning_rate=self.learning_rate,
            max_depth=self.max_depth,
            min_samples_leaf=self.min_samples_leaf,
            early_stopping_rounds=self.early_stopping_rounds,
            histogram_bins_per_feature=self.histogram_bins,
            seed=self.seed,
        )

    def experiment(self) -> ExperimentConfig:
        cands = _int_list(self.fourier_candidates) or None
        return ExperimentConfig(
            boost=self.boost(),
            bins=self.bins,
            pad_frac=self.pad_frac,
            fourier_candidates=tuple(cands) if cands else None,
            nnk_k_grid=tuple(_int_list(self.nnk_k)),
            nnk_h_grid=tuple(_float_list(self.nnk_h)),
            seed=self.seed,
        )

    def method_list(self) -> list[str]:
        out = [m.strip() for m in self.methods.split(",") if m.strip()]
        bad = [m for m in out if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {METHODS}")
        return out


_TYPES = {"int": int, "float": float, "str": str, "bool": bool}


def _convert(value, kind, key):
    if isinstance(value, kind) and not (kind is int and isinstance(value, bool)):
        return value
    text = str(value).strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        return kind(text)
    except ValueError:
        raise ValueError(f"config key {key!r}: cannot read {text!r} as {kind.__name__}") from None


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def read_config_file(path) -> dict[str, str]:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def write_config_file(path, cfg: RunConfig) -> None:
    lines = [f"{k} = {getattr(cfg, k)}" for k in RunConfig.keys()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def resolve_config(path=None, overrides: dict | None = None, environ=None) -> RunConfig:
    """Defaults, then the config file, then ``OCDE_SEED``, then explicit overrides."""
    environ = os.environ if environ is None else environ
    cfg = RunConfig()
    if path:
        cfg = cfg.updated(read_config_file(path))
    if environ.get("OCDE_SEED"):
        cfg = cfg.updated({"seed": environ["OCDE_SEED"]})
    if overrides:
        cfg = cfg.updated(overrides)
    return cfg


def generate_toy(n: int, seed=None) -> Dataset:
    """n draws of x = 5 cos(t), y = 5 sin(t) + e with t ~ U[0, 2 pi], e ~ N(0, 1)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    eps = rng.standard_normal(n)
    return Dataset((5.0 * np.cos(theta)).reshape(-1, 1), 5.0 * np.sin(theta) + eps,
                   ("x",), "y", "toy")


def write_density_csv(path, curves: list[DensityCurve], query_ids=None) -> None:
    query_ids = range(len(curves)) if query_ids is None else query_ids
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["query_id", "bin_center", "density"])
        for qid, curve in zip(query_ids, curves):
            for c, v in zip(curve.grid.centers, curve.values):
                w.writerow([qid, repr(float(c)), repr(float(v))])


def read_density_csv(path) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Map query_id to (bin_centers, densities)."""
    out: dict[str, tuple[list, list]] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["query_id", "bin_center", "density"]:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            c, d = out.setdefault(row["query_id"], ([], []))
            c.append(float(row["bin_center"]))
            d.append(float(row["density"]))
    return {k: (np.array(c), np.array(d)) for k, (c, d) in out.items()}


def _tag(x: float) -> str:
    return f"{x:g}"


def cmd_toy(cfg: RunConfig) -> dict:
    """Fit OCDE on the toy problem and dump estimated and true curves at a few x values."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    s_train, s_val, s_test, s_fit = np.random.SeedSequence(cfg.seed).spawn(4)
    train = generate_toy(cfg.n, s_train)
    val = generate_toy(cfg.n_val, s_val) if cfg.n_val > 0 else None
    test = generate_toy(cfg.n_test, s_test)
    boost = cfg.boost() if val is not None else dataclasses.replace(cfg.boost(), early_stopping_rounds=0)
    inst = InstrumentalDist(*TOY_INSTRUMENTAL)
    grid = make_grid(inst.lo, inst.hi, cfg.bins)
    model = fit_ocde(train, val, inst, grid, boost, s_fit)
    oracle = ToyOracleEstimator(grid)
    files = []
    for x in _float_list(cfg.toy_x):
        q = np.array([[x]])
        for name, values in (("ocde", model.densities(q)[0]), ("oracle", oracle.densities(q)[0])):
            path = out / f"toy_{name}_x{_tag(x)}.csv"
            write_density_csv(path, [DensityCurve(grid, values)])
            files.append(path)
    reports = []
    for name, est in (("ocde", model),
                      (f"ocde-smooth{cfg.smooth_components}", model.with_smoothing(cfg.smooth_components)),
                      ("oracle", oracle),
                      ("uniform", UniformEstimator(grid))):
        loss, se = cde_loss(est, test, grid)
        reports.append(EvalReport("toy", name, "raw", loss, se, 0.0, test.n))
    report_path = out / "toy_report.csv"
    write_report(report_path, reports)
    model.save(out / "toy_model.json")
    return {"densities": files, "report": report_path, "model": out / "toy_model.json"}


def _failed_rows(name, methods, protocol, exc, n_test) -> list[EvalReport]:
    msg = f"{type(exc).__name__}: {exc}"
    return [EvalReport(name, m, protocol, float("nan"), float("nan"), 0.0, n_test, msg)
            for m in methods]


def bench_dataset(path, cfg: RunConfig) -> list[EvalReport]:
    """Subsample, split, scale, then run both protocols for every configured method."""
    methods = cfg.method_list()
    name = Path(path).stem
    try:
        sub_seed, split_seed = (int(s) for s in np.random.SeedSequence(cfg.seed).generate_state(2))
        ds = load_csv(path, cfg.target, name)
        ds = subsample(ds, cfg.cap, sub_seed)
        train, val, test = split(ds, SplitSpec(cfg.train_frac, cfg.val_frac, split_seed))
        params = fit_scaling(train)
        train, val, test = (apply_scaling(d, params) for d in (train, val, test))
    except Exception as exc:
        log.warning("%s: preprocessing failed: %s", name, exc)
        return (_failed_rows(name, methods, "raw", exc, 0)
                + _failed_rows(name, methods, "debiased", exc, 0))
    exp = cfg.experiment()
    reports = []
    for protocol, runner in (("raw", run_raw), ("debiased", run_debiased)):
        try:
            reports += runner(train, val, test, methods, exp)
        except Exception as exc:
            log.warning("%s/%s failed: %s", name, protocol, exc)
            reports += _failed_rows(name, methods, protocol, exc, test.n)
    if not cfg.timing:
        for r in reports:
            r.runtime_seconds = 0.0
    return reports


def cmd_bench(cfg: RunConfig, csv_paths) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for p in csv_paths:
        reports += bench_dataset(p, cfg)
    reports.sort(key=lambda r: (r.dataset, r.protocol != "raw", METHODS.index(r.method)
                                if r.method in METHODS else len(METHODS)))
    path = out / "report.csv"
    write_report(path, reports)
    return path


def cmd_fit(cfg: RunConfig) -> Path:
    """Fit OCDE on a CSV (in its own units) and persist the model."""
    if not cfg.data:
        raise ValueError("fit needs data=<training csv>")
    ds = load_csv(cfg.data, cfg.target)
    boost = cfg.boost()
    if cfg.val_frac > 0:
        train, val = _train_val(ds, cfg.val_frac, cfg.seed)
    else:
        train, val = ds, None
        boost = dataclasses.replace(boost, early_stopping_rounds=0)
    inst = fit_instrumental(train.target, cfg.pad_frac)
    grid = make_grid(inst.lo, inst.hi, cfg.bins)
    model = fit_ocde(train, val, inst, grid, boost, cfg.seed)
    if cfg.smooth_components > 0:
        model = model.with_smoothing(cfg.smooth_components)
    Path(cfg.model).parent.mkdir(parents=True, exist_ok=True)
    model.save(cfg.model)
    return Path(cfg.model)


def _train_val(ds: Dataset, val_frac: float, seed):
    perm = np.random.default_rng(seed).permutation(ds.n)
    n_val = int(np.floor(ds.n * val_frac))
    if n_val < 1 or n_val >= ds.n:
        raise ValueError(f"val_frac={val_frac} leaves an empty part for n={ds.n}")
    return ds.take(np.sort(perm[n_val:])), ds.take(np.sort(perm[:n_val]))


def read_query_csv(path, n_features: int, target: str | None = None) -> np.ndarray:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    keep = list(range(len(header)))
    if target in header and len(header) == n_features + 1:
        keep.remove(header.index(target))
    if len(keep) != n_features:
        raise EstimatorError(
            f"{path}: query has {len(keep)} feature columns, model expects width {n_features}"
        )
    try:
        X = np.array([[float(r[j]) for j in keep] for r in rows], dtype=float)
    except (ValueError, IndexError) as exc:
        raise EstimatorError(f"{path}: unreadable query row: {exc}") from None
    return X.reshape(-1, n_features)


def cmd_predict(cfg: RunConfig) -> Path:
    """Write one density curve per query row."""
    if not cfg.query:
        raise ValueError("predict needs query=<csv of feature rows>")
    model = OcdeModel.load(cfg.model)
    X = read_query_csv(cfg.query, model.n_features, cfg.target)
    vals = model.densities(X)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "predictions.csv"
    write_density_csv(path, [DensityCurve(model.grid, v) for v in vals])
    return path
