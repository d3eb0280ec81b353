"""Parameter sweeps over synthesized pairs and the statistics reported on them."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .estimators import EstimationError, Method, estimate_cumulant, estimate_var
from .imageio import load_image
from .likelihood import LikelihoodConfig, log_likelihood, params_from_estimate, relative_gap
from .noise import NoiseParams, synthesize

log = logging.getLogger(__name__)

PARAMETERS = ("a_inv", "b_sq")
IMAGE_SUFFIXES = (".pgm", ".ppm", ".pnm", ".png")


def linear_grid(lo: float, hi: float, n: int) -> list:
    return [float(v) for v in np.linspace(lo, hi, n)]


@dataclass
class SweepConfig:
    images: list
    a_values: list = field(default_factory=lambda: linear_grid(1.0, 100.0, 25))
    b_values: list = field(default_factory=lambda: linear_grid(0.01, 0.15, 25))
    seeds: list = field(default_factory=lambda: list(range(10)))
    methods: list = field(default_factory=lambda: [Method.CUMULANT, Method.VAR])
    quantization_levels: int = 256
    var_weighted: bool = True
    with_ll: bool = False
    tail_mass: float = 1e-12
    color: str = "luma"
    workers: int = 1

    def __post_init__(self):
        self.images = [str(p) for p in self.images]
        self.methods = [Method(m) for m in self.methods]
        for name in ("images", "a_values", "b_values", "seeds", "methods"):
            if not getattr(self, name):
                raise ValueError(f"{name} must not be empty")
        if any(a <= 0 for a in self.a_values) or any(b <= 0 for b in self.b_values):
            raise ValueError("all a and b values must be > 0")
        ids = [image_id(p) for p in self.images]
        if len(set(ids)) != len(ids):
            raise ValueError("image file names must have distinct stems")

    @classmethod
    def paper(cls, images, **overrides) -> "SweepConfig":
        return cls(images=list(images), **overrides)

    @classmethod
    def desk(cls, images, **overrides) -> "SweepConfig":
        kw = dict(
            a_values=linear_grid(1.0, 100.0, 5),
            b_values=linear_grid(0.01, 0.15, 5),
            seeds=[0, 1, 2],
        )
        kw.update(overrides)
        return cls(images=list(images)[:3], **kw)

    @property
    def expected_records(self) -> int:
        return len(self.images) * len(self.seeds) * len(self.a_values) * len(self.b_values)


@dataclass
class MethodResult:
    a_inv: float = math.nan
    b_sq: float = math.nan
    se_a_inv: float = math.nan
    se_b_sq: float = math.nan
    ll_gap: float = math.nan
    status: str = "ok"
    clamped: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class EvalRecord:
    image_id: str
    seed: int
    a_true: float
    b_true: float
    results: dict

    def error(self, method, parameter: str) -> float:
        return getattr(self.results[Method(method)], "se_" + parameter)

    def signed_error(self, method, parameter: str) -> float:
        r = self.results[Method(method)]
        truth = 1.0 / self.a_true if parameter == "a_inv" else self.b_true**2
        return getattr(r, parameter) - truth


def image_id(path) -> str:
    return Path(path).stem


def discover_images(spec) -> list:
    """Directory -> sorted raster files in it; otherwise a list of paths."""
    if isinstance(spec, (str, Path)):
        p = Path(spec)
        if p.is_dir():
            return sorted(str(f) for f in p.iterdir() if f.suffix.lower() in IMAGE_SUFFIXES)
        return [s for s in str(spec).split(",") if s]
    return [str(s) for s in spec]


@lru_cache(maxsize=16)
def _clean(path: str, color: str):
    return load_image(path, color=color)


def _estimate(pair, method: Method, cfg: SweepConfig):
    if method is Method.CUMULANT:
        return estimate_cumulant(pair)
    return estimate_var(pair, cfg.quantization_levels, weighted=cfg.var_weighted)


def run_cell(cfg: SweepConfig, path: str, seed: int, a: float, b: float) -> EvalRecord:
    params = NoiseParams(a, b)
    pair = synthesize(_clean(path, cfg.color), params, seed)
    ll_cfg = LikelihoodConfig(cfg.tail_mass)
    ll_true = log_likelihood(pair, params, ll_cfg).ll if cfg.with_ll else None

    results = {}
    for method in cfg.methods:
        try:
            est = _estimate(pair, method, cfg)
        except EstimationError as exc:
            log.debug("%s failed on %s seed=%d a=%g b=%g: %s", method.value, path, seed, a, b, exc)
            results[method] = MethodResult(status=type(exc).__name__)
            continue
        res = MethodResult(
            a_inv=est.a_inv,
            b_sq=est.b_sq,
            se_a_inv=(est.a_inv - 1.0 / a) ** 2,
            se_b_sq=(est.b_sq - b * b) ** 2,
            clamped="".join(
                tag for tag, key in (("a", "a_inv_clamped"), ("b", "b_sq_clamped"))
                if est.diagnostics.get(key)
            ),
        )
        if cfg.with_ll:
            try:
                ll_est = log_likelihood(pair, params_from_estimate(est), ll_cfg).ll
                res.ll_gap = relative_gap(ll_est, ll_true)
            except (ValueError, ZeroDivisionError):
                pass
        results[method] = res
    return EvalRecord(image_id(path), int(seed), float(a), float(b), results)


def _cell_task(args):
    cfg, key = args
    ii, seed, ai, bi = key
    rec = run_cell(cfg, cfg.images[ii], seed, cfg.a_values[ai], cfg.b_values[bi])
    return key, rec


def run_sweep(cfg: SweepConfig, progress=None) -> list:
    """Evaluate every (image, seed, a, b) cell.

    Output order is (image, seed, a, b) in configuration order, whatever the
    worker count or completion order.
    """
    keys = [
        (ii, seed, ai, bi)
        for ii in range(len(cfg.images))
        for seed in cfg.seeds
        for ai in range(len(cfg.a_values))
        for bi in range(len(cfg.b_values))
    ]
    tasks = [(cfg, k) for k in keys]
    done = {}
    if cfg.workers <= 1:
        it = map(_cell_task, tasks)
        pool = None
    else:
        pool = ProcessPoolExecutor(max_workers=cfg.workers)
        it = pool.map(_cell_task, tasks, chunksize=max(1, len(tasks) // (8 * cfg.workers)))
    try:
        for n, (key, rec) in enumerate(it, 1):
            done[key] = rec
            if progress is not None:
                progress(n, len(tasks))
    finally:
        if pool is not None:
            pool.shutdown()
    return [done[k] for k in keys]


# -- statistics ---------------------------------------------------------------

@dataclass(frozen=True)
class StatSummary:
    mean: float
    std: float
    q75: float
    max: float
    count: int
    excluded: int = 0


def _check_parameter(parameter: str) -> None:
    if parameter not in PARAMETERS:
        raise ValueError(f"parameter must be one of {PARAMETERS}, got {parameter!r}")


def _successful(records, method):
    method = Method(method)
    return [r for r in records if method in r.results and r.results[method].ok]


def describe(values) -> StatSummary:
    """Mean, sample standard deviation, type-7 75% quantile and maximum."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("no values to summarise")
    std = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    return StatSummary(
        float(np.mean(v)), std, float(np.quantile(v, 0.75)), float(np.max(v)), int(v.size)
    )


def summarize(records, method, parameter: str) -> StatSummary:
    """Statistics of the squared-error column; failed estimates are excluded
    and counted in ``excluded``."""
    _check_parameter(parameter)
    ok = _successful(records, method)
    s = describe([r.error(method, parameter) for r in ok])
    return StatSummary(s.mean, s.std, s.q75, s.max, s.count, len(records) - len(ok))


def iqr_fence(values) -> float:
    q1, q3 = np.quantile(np.asarray(values, dtype=np.float64), [0.25, 0.75])
    return float(q3 + 1.5 * (q3 - q1))


def outlier_mask(values) -> np.ndarray:
    """True where a value lies strictly above the upper IQR fence."""
    v = np.asarray(values, dtype=np.float64)
    return v > iqr_fence(v)


def filter_outliers(records, method, parameter: str = "a_inv"):
    """Drop records whose squared error is above the IQR fence.

    ``parameter="combined"`` drops a record when either parameter is an
    outlier. Returns ``(kept, kept_fraction)``; the fraction is relative to
    the successful estimates of ``method``.
    """
    ok = _successful(records, method)
    if not ok:
        raise ValueError("no successful records for this method")
    params = PARAMETERS if parameter == "combined" else (parameter,)
    for p in params:
        _check_parameter(p)
    drop = np.zeros(len(ok), dtype=bool)
    for p in params:
        drop |= outlier_mask([r.error(method, p) for r in ok])
    kept = [r for r, d in zip(ok, drop) if not d]
    return kept, len(kept) / len(ok)


def bias_curves(records, method) -> dict:
    """Mean signed error of both parameters, grouped by true a and by true b."""
    ok = _successful(records, method)
    out = {}
    for axis, attr in (("a", "a_true"), ("b", "b_true")):
        groups = {}
        for r in ok:
            groups.setdefault(getattr(r, attr), []).append(r)
        rows = []
        for value in sorted(groups):
            g = groups[value]
            rows.append({
                "value": value,
                "bias_a_inv": float(np.mean([r.signed_error(method, "a_inv") for r in g])),
                "bias_b_sq": float(np.mean([r.signed_error(method, "b_sq") for r in g])),
                "count": len(g),
            })
        out[axis] = rows
    return out


def per_image_mse(records, method, parameter: str) -> list:
    """Per-image MSE with all records and with global outliers removed."""
    _check_parameter(parameter)
    ok = _successful(records, method)
    kept_ids = {id(r) for r in filter_outliers(ok, method, parameter)[0]} if ok else set()
    rows = []
    for img in sorted({r.image_id for r in ok}):
        errs = [r.error(method, parameter) for r in ok if r.image_id == img]
        kept = [r.error(method, parameter) for r in ok if r.image_id == img and id(r) in kept_ids]
        rows.append({
            "image_id": img,
            "mse": float(np.mean(errs)),
            "mse_without_outliers": float(np.mean(kept)) if kept else math.nan,
            "count": len(errs),
            "kept": len(kept),
        })
    return rows


def summary_report(records, cfg: SweepConfig) -> dict:
    report = {"records": len(records), "methods": {}}
    for method in cfg.methods:
        ok = _successful(records, method)
        entry = {"failures": len(records) - len(ok)}
        if ok:
            for p in PARAMETERS:
                entry[p] = asdict(summarize(records, method, p))
                kept, _ = filter_outliers(records, method, p)
                entry[p + "_without_outliers"] = asdict(summarize(kept, method, p))
            entry["kept_fraction"] = {
                p: filter_outliers(records, method, p)[1] for p in (*PARAMETERS, "combined")
            }
            gaps = [r.results[method].ll_gap for r in ok if not math.isnan(r.results[method].ll_gap)]
            if gaps:
                entry["ll_gap_mean"] = float(np.mean(gaps))
        report["methods"][method.value] = entry
    return report


# -- output -------------------------------------------------------------------

_RESULT_FIELDS = ("a_inv", "b_sq", "se_a_inv", "se_b_sq", "ll_gap", "status", "clamped")


def records_header(methods) -> list:
    cols = ["image_id", "seed", "a", "b"]
    for m in methods:
        cols += [f"{Method(m).value}_{f}" for f in _RESULT_FIELDS]
    return cols


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def records_csv(records, methods) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(records_header(methods))
    for r in records:
        row = [r.image_id, r.seed, _fmt(r.a_true), _fmt(r.b_true)]
        for m in methods:
            res = r.results[Method(m)]
            row += [_fmt(getattr(res, f)) for f in _RESULT_FIELDS]
        w.writerow(row)
    return buf.getvalue()


def read_records_csv(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return []
    methods = [m for m in Method if f"{m.value}_status" in rows[0]]
    out = []
    for row in rows:
        results = {}
        for m in methods:
            kw = {}
            for f in _RESULT_FIELDS:
                raw = row[f"{m.value}_{f}"]
                if f in ("status", "clamped"):
                    kw[f] = raw
                else:
                    kw[f] = float(raw) if raw else math.nan
            results[m] = MethodResult(**kw)
        out.append(EvalRecord(row["image_id"], int(row["seed"]), float(row["a"]), float(row["b"]), results))
    return out


def _write_rows(path: Path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(v) for k, v in row.items()})


def write_outputs(records, cfg: SweepConfig, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "records.csv").write_text(records_csv(records, cfg.methods))

    report = summary_report(records, cfg)
    report["config"] = {
        "images": [image_id(p) for p in cfg.images],
        "a_values": cfg.a_values,
        "b_values": cfg.b_values,
        "seeds": list(cfg.seeds),
        "methods": [m.value for m in cfg.methods],
        "quantization_levels": cfg.quantization_levels,
        "var_weighted": cfg.var_weighted,
        "with_ll": cfg.with_ll,
    }
    (out / "summary.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")

    bias_rows, image_rows = [], []
    for m in cfg.methods:
        if not _successful(records, m):
            continue
        for axis, rows in bias_curves(records, m).items():
            bias_rows += [{"method": m.value, "axis": axis, **row} for row in rows]
        for p in PARAMETERS:
            image_rows += [{"method": m.value, "parameter": p, **row} for row in per_image_mse(records, m, p)]
    _write_rows(out / "bias.csv", bias_rows)
    _write_rows(out / "per_image.csv", image_rows)
    return report
