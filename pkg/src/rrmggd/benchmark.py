"""Dataset evaluation: correlation statistics, the five-parameter logistic
mapping, manifest handling and per-distortion reports."""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .errors import (
    DegenerateVariance,
    DimensionMismatch,
    EmptyInput,
    FitFailed,
    LengthMismatch,
    NonFinite,
    RRError,
)
from .imageio import encode_ppm, load_image
from .metric import extract_features, read_features, score_image, write_atomic, write_features
from .pyramid import DEFAULT_SELECTION

log = logging.getLogger(__name__)

MIN_GROUP = 10
PSNR_CAP = 99.0

MANIFEST_HEADER = ["distorted", "reference", "type", "level", "mos"]
REPORT_HEADER = ["type", "n", "srcc", "plcc", "b1", "b2", "b3", "b4", "b5", "rmse"]
SCATTER_HEADER = ["distorted", "type", "q", "mos", "predicted_mos"]


# --- correlation ----------------------------------------------------------------


def _vector(values, name="values"):
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyInput(f"{name} is empty")
    if not np.all(np.isfinite(v)):
        raise NonFinite(f"{name} contains non-finite entries")
    return v


def rank_with_ties(values) -> np.ndarray:
    """1-based ranks; tied values share the average of their positions."""
    v = _vector(values)
    order = np.argsort(v, kind="mergesort")
    sorted_v = v[order]
    ranks = np.empty(v.size)
    start = 0
    while start < v.size:
        stop = start + 1
        while stop < v.size and sorted_v[stop] == sorted_v[start]:
            stop += 1
        ranks[order[start:stop]] = 0.5 * (start + stop + 1)
        start = stop
    return ranks


def _pair(subjective, objective):
    s = _vector(subjective, "subjective")
    x = _vector(objective, "objective")
    if s.size != x.size:
        raise LengthMismatch(f"{s.size} subjective vs {x.size} objective values")
    if s.size < 3:
        raise LengthMismatch("need at least 3 pairs")
    return s, x


def plcc(subjective, objective) -> float:
    s, x = _pair(subjective, objective)
    ds, dx = s - s.mean(), x - x.mean()
    ss, sx = float(np.dot(ds, ds)), float(np.dot(dx, dx))
    if ss == 0 or sx == 0:
        raise DegenerateVariance("one of the inputs is constant")
    # one square root keeps perfectly (anti)correlated inputs at exactly +-1
    return float(np.clip(np.dot(ds, dx) / math.sqrt(ss * sx), -1.0, 1.0))


def srcc(subjective, objective) -> float:
    """Spearman correlation as Pearson correlation of tie-averaged ranks.

    Without ties this equals ``1 - 6 sum d_i**2 / (N (N**2 - 1))``.
    """
    s, x = _pair(subjective, objective)
    return plcc(rank_with_ties(s), rank_with_ties(x))


# --- logistic mapping --------------------------------------------------------------


@dataclass(frozen=True)
class LogisticParams:
    b1: float
    b2: float
    b3: float
    b4: float
    b5: float

    def as_array(self):
        return np.array([self.b1, self.b2, self.b3, self.b4, self.b5])


def _logistic(tau, x):
    # 1/2 - 1/(1 + exp(tau x)), with expit keeping large |tau x| finite
    return 0.5 - expit(-tau * x)


def _predict(b, x):
    return b[0] * _logistic(b[1], x - b[2]) + b[3] * x + b[4]


def logistic_predict(params: LogisticParams, x):
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(over="ignore"):
        return _predict(params.as_array(), x)


@dataclass
class LogisticFit:
    params: LogisticParams
    rmse: float
    sse_history: list = field(default_factory=list, repr=False)


def _initial_guesses(x, y):
    span = float(y.max() - y.min())
    med = float(np.median(x))
    A = np.column_stack([x, np.ones_like(x)])
    slope, intercept = np.linalg.lstsq(A, y, rcond=None)[0]
    return [
        np.array([span, 1.0, med, 0.0, float(y.min())]),
        np.array([-span, 1.0, med, 0.0, float(y.min())]),
        np.array([0.0, 1.0, med, slope, intercept]),
    ]


def fit_logistic(objective, mos, restarts: int = 4) -> LogisticFit:
    """Least-squares fit of the five-parameter logistic by Nelder-Mead.

    Three deterministic starting points, tried in order of their SSE; each
    run is restarted from its own optimum until the SSE stops improving, and
    the overall best is kept.
    ``sse_history`` records the best-so-far SSE after every iteration.
    """
    y, x = _pair(mos, objective)
    if x.size < MIN_GROUP:
        raise LengthMismatch(f"need at least {MIN_GROUP} points, got {x.size}")

    def sse(b):
        with np.errstate(over="ignore", invalid="ignore"):
            r = y - _predict(b, x)
        v = float(np.dot(r, r))
        return v if math.isfinite(v) else math.inf

    best_b, best_f = None, math.inf
    history = []
    # below this the residual is rounding noise
    floor = 1e-24 * (1.0 + float(np.dot(y, y)))

    def track(xk):
        history.append(min(sse(xk), history[-1] if history else math.inf, best_f))

    # best start first, so an exact fit ends the search early
    for b0 in sorted(_initial_guesses(x, y), key=sse):
        if best_f <= floor:
            break
        b, f = b0, sse(b0)
        if not math.isfinite(f):
            continue
        for _ in range(restarts):
            res = minimize(
                sse,
                b,
                method="Nelder-Mead",
                callback=track,
                options={
                    "xatol": 1e-12,
                    "fatol": max(1e-13 * f, floor),
                    "maxiter": 20000,
                    "maxfev": 20000,
                    "adaptive": True,
                },
            )
            if not (math.isfinite(res.fun) and res.fun < f):
                break
            improved = f - res.fun
            b, f = res.x, res.fun
            if f <= floor or improved <= 1e-10 * f:
                break
        if f < best_f:
            best_b, best_f = b, f
    if best_b is None:
        raise FitFailed("every starting point diverged")
    return LogisticFit(LogisticParams(*map(float, best_b)), math.sqrt(best_f / x.size), history)


# --- full-reference baseline -----------------------------------------------------------


def psnr_baseline(ref, dist) -> float:
    """PSNR in dB for planes in [0, 1]; identical images give ``PSNR_CAP``."""
    if ref.planes.shape != dist.planes.shape:
        raise DimensionMismatch("images differ in size")
    mse = float(np.mean((ref.planes - dist.planes) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP)


# --- manifests -------------------------------------------------------------------------


@dataclass(frozen=True)
class ManifestRow:
    distorted_path: str
    reference_path: str
    distortion_type: str
    level: int
    mos: float

    def __post_init__(self):
        if not self.distorted_path or not self.reference_path:
            raise ValueError("paths must be non-empty")
        if not math.isfinite(self.mos):
            raise ValueError("mos must be finite")


def read_manifest(path) -> list:
    """Read a manifest CSV; relative paths are resolved against its directory."""
    base = Path(path).resolve().parent
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or [h.strip() for h in lines[0].split(",")] != MANIFEST_HEADER:
        raise ValueError(f"manifest header must be {','.join(MANIFEST_HEADER)}")
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        if '"' in line:
            raise ValueError(f"line {lineno}: quoted fields are not supported")
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 5:
            raise ValueError(f"line {lineno}: expected 5 fields, got {len(parts)}")
        dist, ref, kind, level, mos = parts
        try:
            rows.append(
                ManifestRow(
                    str(base / dist), str(base / ref), kind, int(level), float(mos)
                )
            )
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return rows


def write_manifest(rows, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MANIFEST_HEADER)
    for r in rows:
        if "," in r.distorted_path or "," in r.reference_path:
            raise ValueError("paths containing commas are not supported")
        w.writerow([r.distorted_path, r.reference_path, r.distortion_type, r.level, repr(r.mos)])
    write_atomic(path, buf.getvalue())


TID2008_TYPES = (
    "Additive Gaussian noise",
    "Additive noise in color components",
    "Spatially correlated noise",
    "Masked noise",
    "High frequency noise",
    "Impulse noise",
    "Quantization noise",
    "Gaussian blur",
    "Image denoising",
    "JPEG compression",
    "JPEG2000 compression",
    "JPEG transmission errors",
    "JPEG2000 transmission errors",
    "Non eccentricity pattern noise",
    "Local block-wise distortions of different intensity",
    "Mean shift (intensity shift)",
    "Contrast change",
)


def tid2008_manifest(root, convert_dir=None) -> list:
    """Manifest rows for a local TID2008 copy.

    Reads ``mos_with_names.txt`` (``<mos> iXX_YY_Z.bmp`` per line) and maps
    distorted image ``iXX_YY_Z`` to reference ``IXX`` (``I25`` for the
    i25 series), type ``YY`` and level ``Z``. TID2008 ships BMP files; when
    ``convert_dir`` is given every referenced image is converted to PPM
    there with Pillow and the rows point at the converted copies.
    """
    root = Path(root)
    lines = (root / "mos_with_names.txt").read_text(encoding="utf-8", errors="replace").split("\n")
    ref_dir = root / "reference_images"
    dist_dir = root / "distorted_images"

    index = {d: {p.stem.lower(): p for p in d.iterdir()} for d in (ref_dir, dist_dir)}

    def find(directory, stem):
        try:
            return index[directory][stem.lower()]
        except KeyError:
            raise FileNotFoundError(f"{stem} not found in {directory}") from None

    rows = []
    for line in lines:
        parts = line.split()
        if len(parts) != 2:
            continue
        mos, name = float(parts[0]), parts[1]
        stem = Path(name).stem
        img_id, kind, level = stem[1:].split("_")
        dist = find(dist_dir, stem)
        ref = find(ref_dir, "I" + img_id)
        if convert_dir is not None:
            dist, ref = _to_ppm(dist, convert_dir), _to_ppm(ref, convert_dir)
        rows.append(ManifestRow(str(dist), str(ref), TID2008_TYPES[int(kind) - 1], int(level), mos))
    return rows


def _to_ppm(path, out_dir):
    from PIL import Image

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / (Path(path).stem + ".ppm")
    if not target.exists():
        with Image.open(path) as im:
            write_atomic(target, encode_ppm(np.asarray(im.convert("RGB"))))
    return target


# --- evaluation ------------------------------------------------------------------------


@dataclass(frozen=True)
class GroupResult:
    distortion_type: str
    n: int
    srcc: float
    plcc: float
    params: LogisticParams | None
    rmse: float

    @property
    def sufficient(self) -> bool:
        return self.n >= MIN_GROUP and math.isfinite(self.srcc)


@dataclass(frozen=True)
class ScatterRecord:
    distorted: str
    distortion_type: str
    q: float
    mos: float
    predicted_mos: float


@dataclass
class EvaluationReport:
    groups: list
    overall: GroupResult
    scatter: list
    errors: list

    @property
    def insufficient(self) -> list:
        return [g.distortion_type for g in self.groups if not g.sufficient]

    def report_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for g in [*self.groups, self.overall]:
            p = g.params.as_array() if g.params is not None else [math.nan] * 5
            w.writerow([g.distortion_type, g.n, _fmt(g.srcc), _fmt(g.plcc), *map(_fmt, p), _fmt(g.rmse)])
        return buf.getvalue()

    def scatter_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SCATTER_HEADER)
        for s in self.scatter:
            w.writerow([s.distorted, s.distortion_type, _fmt(s.q), _fmt(s.mos), _fmt(s.predicted_mos)])
        return buf.getvalue()


def _fmt(v) -> str:
    return repr(float(v)) if math.isfinite(v) else "nan"


class _ReferenceCache:
    """Reference feature sets, computed once and optionally persisted as RRF files."""

    def __init__(self, cache_dir, selection):
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        self.selection = selection
        self.memory = {}
        if self.cache_dir is not None:
            self.cache_dir.mkdir(parents=True, exist_ok=True)

    def _file(self, ref_path):
        sel = ";".join(f"{s},{o}" for s, o in self.selection)
        digest = hashlib.sha256(f"{os.path.abspath(ref_path)}|{sel}".encode()).hexdigest()[:16]
        return self.cache_dir / f"{Path(ref_path).stem}-{digest}.rrf"

    def get(self, ref_path):
        if ref_path in self.memory:
            return self.memory[ref_path]
        feats = None
        if self.cache_dir is not None:
            f = self._file(ref_path)
            if f.exists():
                feats = read_features(f)
        if feats is None:
            feats = extract_features(load_image(ref_path), self.selection)
            if self.cache_dir is not None:
                write_features(feats, self._file(ref_path))
        self.memory[ref_path] = feats
        return feats


def _group_result(name, q, mos, fit=None):
    n = len(q)
    if n < MIN_GROUP:
        return GroupResult(name, n, math.nan, math.nan, None, math.nan), None
    try:
        rho = srcc(mos, q)
        if fit is None:
            fit = fit_logistic(q, mos)
        pred = logistic_predict(fit.params, q)
        r = plcc(mos, pred)
        rmse = float(np.sqrt(np.mean((np.asarray(mos) - pred) ** 2)))
    except (DegenerateVariance, FitFailed) as exc:
        log.warning("group %s: %s", name, exc)
        return GroupResult(name, n, math.nan, math.nan, None, math.nan), None
    return GroupResult(name, n, rho, r, fit.params, rmse), pred


def evaluate_dataset(
    manifest,
    cache_dir=None,
    metric: str = "rr",
    fit_scope: str = "group",
    selection=DEFAULT_SELECTION,
    workers: int = 1,
) -> EvaluationReport:
    """Score every manifest row and correlate the scores with MOS per distortion type.

    ``metric`` is ``"rr"`` (Q, larger is worse) or ``"psnr"`` (dB, larger
    is better). Rows that fail to load or score are skipped and listed in
    ``errors``. Correlations are signed.
    """
    if metric not in ("rr", "psnr"):
        raise ValueError(f"unknown metric {metric!r}")
    if fit_scope not in ("group", "global"):
        raise ValueError(f"unknown fit scope {fit_scope!r}")
    rows = sorted(manifest, key=lambda r: (r.distorted_path, r.reference_path))
    cache = _ReferenceCache(cache_dir, selection)
    refs = {}

    def score(row):
        try:
            if metric == "rr":
                return score_image(cache.get(row.reference_path), load_image(row.distorted_path)).Q
            if row.reference_path not in refs:
                refs[row.reference_path] = load_image(row.reference_path)
            return psnr_baseline(refs[row.reference_path], load_image(row.distorted_path))
        except (OSError, RRError, ValueError) as exc:
            return exc

    if workers > 1:
        # warm the reference cache serially so workers only read it
        for ref in sorted({r.reference_path for r in rows}):
            try:
                cache.get(ref) if metric == "rr" else refs.setdefault(ref, load_image(ref))
            except (OSError, RRError, ValueError):
                pass
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(score, rows))
    else:
        results = [score(r) for r in rows]

    good, errors = [], []
    for row, res in zip(rows, results):
        if isinstance(res, Exception):
            log.warning("skipping %s: %s", row.distorted_path, res)
            errors.append((row.distorted_path, f"{type(res).__name__}: {res}"))
        else:
            good.append((row, float(res)))

    by_type = {}
    for row, q in good:
        by_type.setdefault(row.distortion_type, []).append((row, q))

    all_q = [q for _, q in good]
    all_mos = [r.mos for r, _ in good]
    overall, _ = _group_result("overall", all_q, all_mos)
    global_fit = None
    if fit_scope == "global" and overall.params is not None:
        global_fit = LogisticFit(overall.params, overall.rmse)

    groups, scatter = [], []
    for name in sorted(by_type):
        items = by_type[name]
        q = [v for _, v in items]
        mos = [r.mos for r, _ in items]
        res, pred = _group_result(name, q, mos, global_fit)
        groups.append(res)
        if pred is None and global_fit is not None:
            pred = logistic_predict(global_fit.params, q)
        for i, (row, v) in enumerate(items):
            p = float(pred[i]) if pred is not None else math.nan
            scatter.append(ScatterRecord(row.distorted_path, name, v, row.mos, p))
    return EvaluationReport(groups, overall, scatter, errors)
