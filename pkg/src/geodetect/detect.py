"""Signed-triangle detection test, statistic-level total variation and phase sweeps.

Total variation is always measured between the laws of tau under the two
models. By data processing this is a lower bound on the total variation
between the graph laws themselves.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy import stats

from .ensembles import SeededStream, as_stream
from .entropy import tv_upper_bound
from .errors import GeodetectError, InvalidParameterError, UsageError
from .graphs import AdjacencyMatrix, er_tau_variance, moments_of, signed_triangles, tau_samples
from .parallel import Parallel, resolve
from .spectrum import (
    SpectrumLike,
    _parse_real,
    as_spectrum,
    effective_dim_3,
    effective_dim_4,
    power_law_with_eff3,
    spectrum_family,
)
from .threshold import threshold_charfun

MIN_BINS = 16
BOOTSTRAP_RESAMPLES = 64
TV_BIAS_NOTE = "histogram TV between tau laws; biased low, and a lower bound on graph-law TV"


# Single-graph test -----------------------------------------------------------


@dataclass(frozen=True)
class Rate:
    """An estimated probability with its binomial standard error."""

    value: float
    std_error: float


@dataclass(frozen=True)
class DetectionReport:
    tau_observed: float
    tau_threshold: float
    decision: str
    power_estimate: Optional[Rate] = None
    type1_estimate: Optional[Rate] = None
    threshold_kind: str = "given"

    def to_dict(self) -> dict:
        return asdict(self)


def tau_test(
    a: AdjacencyMatrix,
    p: float,
    tau_threshold: float,
    threshold_kind: str = "given",
) -> DetectionReport:
    """Declare geometry iff tau(a) >= tau_threshold."""
    tau_threshold = float(tau_threshold)
    if not math.isfinite(tau_threshold):
        raise InvalidParameterError("tau_threshold must be finite")
    tau = signed_triangles(a, p)
    decision = "geometry" if tau >= tau_threshold else "no_geometry"
    return DetectionReport(tau, tau_threshold, decision, None, None, threshold_kind)


def calibrated_threshold(n: int, p: float, z: float = 3.0) -> float:
    """z times the exact null standard deviation of tau."""
    return z * math.sqrt(er_tau_variance(n, p))


def level_threshold(n: int, p: float, level: float) -> float:
    """Calibrated threshold whose normal-approximation false-positive rate is ``level``."""
    if not 0 < level < 1:
        raise InvalidParameterError("level must lie in (0, 1)")
    return calibrated_threshold(n, p, float(stats.norm.isf(level)))


def oracle_threshold(
    n: int,
    p: float,
    alpha: SpectrumLike,
    replicas: int = 2000,
    stream: Union[SeededStream, int, None] = None,
    parallel: Optional[Parallel] = None,
) -> Rate:
    """Half the mean of tau under the geometric model, measured by Monte Carlo.

    This threshold needs the spectrum, so it serves to reproduce the
    detection regime rather than as a practical test.
    """
    x = tau_samples("geometric", n, p, replicas, as_stream(stream).derive("oracle_threshold"), alpha, None, parallel)
    m = moments_of(x)
    return Rate(0.5 * m.mean, 0.5 * m.mean_se)


def rejection_rate(samples: Sequence[float], tau_threshold: float) -> Rate:
    """Fraction of ``samples`` at or above the threshold, with binomial standard error."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise InvalidParameterError("samples must be nonempty")
    v = float(np.count_nonzero(x >= tau_threshold)) / x.size
    return Rate(v, math.sqrt(max(v * (1 - v), 1.0 / x.size) / x.size))


# Empirical total variation --------------------------------------------------


def _common_edges(pooled: np.ndarray, bins: Optional[int]) -> np.ndarray:
    lo, hi = float(pooled.min()), float(pooled.max())
    if hi == lo:
        return np.array([lo - 0.5, hi + 0.5])
    if bins is None:
        q75, q25 = np.percentile(pooled, [75, 25])
        width = 2.0 * (q75 - q25) / pooled.size ** (1.0 / 3.0)
        # a tiny but nonzero IQR would ask for astronomically many bins
        count = min(math.ceil((hi - lo) / width), pooled.size) if width > 0 else MIN_BINS
        bins = max(MIN_BINS, count)
    return np.linspace(lo, hi, bins + 1)


def empirical_tv(samples_a: Sequence[float], samples_b: Sequence[float], bins: Optional[int] = None) -> float:
    """Half the L1 distance between histograms on a common binning.

    Bins span the pooled range. By default their count follows the
    Freedman-Diaconis width on the pooled sample, with at least 16 bins and
    at most one per pooled observation beyond that.
    Binning merges mass, so the estimate is biased low relative to the TV
    of the underlying laws.
    """
    a = np.asarray(samples_a, dtype=np.float64).ravel()
    b = np.asarray(samples_b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise InvalidParameterError("both samples must be nonempty")
    if bins is not None and bins < 2:
        raise InvalidParameterError("bins must be >= 2")
    edges = _common_edges(np.concatenate([a, b]), bins)
    ha, _ = np.histogram(a, edges)
    hb, _ = np.histogram(b, edges)
    tv = 0.5 * float(np.abs(ha / a.size - hb / b.size).sum())
    return min(max(tv, 0.0), 1.0)


def bootstrap_tv_error(
    samples_a: np.ndarray,
    samples_b: np.ndarray,
    stream: SeededStream,
    resamples: int = BOOTSTRAP_RESAMPLES,
) -> float:
    """Bootstrap standard error of ``empirical_tv`` with the binning rule refitted per resample."""
    gen = stream.derive("bootstrap_tv").generator()
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    vals = [
        empirical_tv(a[gen.integers(0, a.size, a.size)], b[gen.integers(0, b.size, b.size)])
        for _ in range(resamples)
    ]
    return float(np.std(vals, ddof=1))


# Chebyshev lower bound ------------------------------------------------------


@dataclass(frozen=True)
class ChebyshevBound:
    """1 - (Var_H1 + Var_H0) / (mean_H1 / 2)^2 from measured moments.

    ``value`` is 0 when the alternative mean is not positive at three
    standard errors.
    """

    value: float
    std_error: float
    mean_h1: float
    mean_h1_se: float
    var_h1: float
    var_h0: float
    informative: bool


def tv_lower_bound_chebyshev(
    n: int,
    p: float,
    alpha: SpectrumLike,
    replicas: int = 2000,
    stream: Union[SeededStream, int, None] = None,
    parallel: Optional[Parallel] = None,
) -> ChebyshevBound:
    """Lower bound on TV(tau(G(n,p,alpha)), tau(G(n,p))) from the two Chebyshev tails.

    With mu the alternative mean, P_H1(tau <= mu/2) <= Var_H1 / (mu/2)^2 and
    P_H0(tau >= mu/2) <= Var_H0 / (mu/2)^2, so the test tau >= mu/2 separates
    the laws up to the sum of these. Moments are measured by Monte Carlo; the
    standard error is propagated to first order.
    """
    stream = as_stream(stream).derive("tv_lower_bound_chebyshev")
    h1 = moments_of(tau_samples("geometric", n, p, replicas, stream, alpha, None, parallel))
    h0 = moments_of(tau_samples("er", n, p, replicas, stream, None, None, parallel))
    informative = h1.mean > 3.0 * h1.mean_se
    if not informative:
        return ChebyshevBound(0.0, 0.0, h1.mean, h1.mean_se, h1.variance, h0.variance, False)
    half = 0.5 * h1.mean
    ratio = (h1.variance + h0.variance) / (half * half)
    d_var = 1.0 / (half * half)
    d_mean = 4.0 * (h1.variance + h0.variance) / h1.mean**3
    se = math.sqrt((d_var * h1.variance_se) ** 2 + (d_var * h0.variance_se) ** 2 + (d_mean * h1.mean_se) ** 2)
    return ChebyshevBound(max(0.0, 1.0 - ratio), se, h1.mean, h1.mean_se, h1.variance, h0.variance, True)


# Phase sweep ----------------------------------------------------------------


@dataclass
class SweepRow:
    """One cell of a phase sweep.

    ``tv_statistic_estimate`` is the histogram TV between tau samples under
    the two models (see ``empirical_tv``); ``power`` is the rejection rate
    of the calibrated test at the configured level under the alternative.
    """

    n: int
    p: float
    family: str
    d: int
    eff3: float
    eff4: float
    mean_tau_h0: float
    mean_tau_h0_se: float
    mean_tau_h1: float
    mean_tau_h1_se: float
    tv_statistic_estimate: float
    tv_statistic_se: float
    tv_upper_bound: float
    power: float
    power_se: float
    status: str = "ok"
    runtime: float = 0.0


# written to the primary CSV / JSON-lines outputs; runtime goes to the manifest
SWEEP_COLUMNS = tuple(f.name for f in fields(SweepRow) if f.name != "runtime")


@dataclass(frozen=True)
class SweepConfig:
    n_list: tuple
    p: float
    families: tuple
    d_list: tuple
    replicas: int = 1000
    seed: Optional[int] = None
    out: Optional[str] = None
    jsonl: Optional[str] = None
    level: float = 0.05
    entropy_replicas: int = 400
    tv_bound: bool = True


_CONFIG_KEYS = {f.name for f in fields(SweepConfig)}


def _parse_bool(v: str) -> bool:
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {v!r}")


def parse_sweep_config(text: str) -> SweepConfig:
    """Parse a line-oriented ``key = value`` config; ``#`` starts a comment.

    List values are comma separated. Families are ``isotropic``,
    ``powerlaw:<beta>``, ``spiked:<k>:<eps>`` or ``eff3:<k>`` (a power law
    at dimension d tuned to effective dimension k).
    """
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise UsageError(f"config line {lineno}: unknown key {key!r}")
        raw[key] = value
    missing = {"n_list", "p", "families", "d_list"} - raw.keys()
    if missing:
        raise UsageError(f"config missing keys: {', '.join(sorted(missing))}")

    def items(v):
        return tuple(s.strip() for s in v.split(",") if s.strip())

    try:
        cfg = SweepConfig(
            n_list=tuple(int(x) for x in items(raw["n_list"])),
            p=float(raw["p"]),
            families=items(raw["families"]),
            d_list=tuple(int(float(x)) for x in items(raw["d_list"])),
            replicas=int(raw.get("replicas", 1000)),
            seed=int(raw["seed"]) if "seed" in raw else None,
            out=raw.get("out"),
            jsonl=raw.get("jsonl"),
            level=float(raw.get("level", 0.05)),
            entropy_replicas=int(raw.get("entropy_replicas", 400)),
            tv_bound=_parse_bool(raw.get("tv_bound", "true")),
        )
    except ValueError as exc:
        raise UsageError(f"bad config value: {exc}") from exc
    for fam in cfg.families:
        _family_args(fam)
    return cfg


_FAMILY_ARITY = {"isotropic": 0, "iso": 0, "powerlaw": 1, "power_law": 1, "spiked": 2, "eff3": 1}


def _family_args(family: str) -> tuple[str, list]:
    parts = family.split(":")
    kind = parts[0].lower()
    if kind not in _FAMILY_ARITY or len(parts) - 1 != _FAMILY_ARITY[kind]:
        raise UsageError(f"unknown family {family!r}")
    try:
        if kind == "spiked":
            return kind, [int(parts[1]), float(parts[2])]
        return kind, [_parse_real(x) for x in parts[1:]]
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"bad family {family!r}: {exc}") from exc


def family_spectrum(family: str, d: int):
    """Spectrum of dimension ``d`` for a sweep family descriptor."""
    kind, args = _family_args(family)
    if kind in ("isotropic", "iso"):
        return spectrum_family("isotropic", d)
    if kind in ("powerlaw", "power_law"):
        return spectrum_family("power_law", d, *args)
    if kind == "spiked":
        return spectrum_family("spiked", d, *args)
    return power_law_with_eff3(d, args[0])


def _cell(
    n: int,
    p: float,
    family: str,
    d: int,
    cfg: SweepConfig,
    stream: SeededStream,
    parallel: Parallel,
) -> SweepRow:
    start = time.perf_counter()
    nan = math.nan
    row = SweepRow(n, p, family, d, nan, nan, nan, nan, nan, nan, nan, nan, nan, nan, nan)
    notes = []
    try:
        alpha = as_spectrum(family_spectrum(family, d))
        row.eff3 = effective_dim_3(alpha)
        row.eff4 = effective_dim_4(alpha)
        t_scaled = threshold_charfun(alpha, p).t / alpha.norm2
        h0 = tau_samples("er", n, p, cfg.replicas, stream, None, None, parallel)
        h1 = tau_samples("geometric", n, p, cfg.replicas, stream, alpha, t_scaled, parallel)
        m0, m1 = moments_of(h0), moments_of(h1)
        row.mean_tau_h0, row.mean_tau_h0_se = m0.mean, m0.mean_se
        row.mean_tau_h1, row.mean_tau_h1_se = m1.mean, m1.mean_se
        row.tv_statistic_estimate = empirical_tv(h0, h1)
        row.tv_statistic_se = bootstrap_tv_error(h0, h1, stream)
        power = rejection_rate(h1, level_threshold(n, p, cfg.level))
        row.power, row.power_se = power.value, power.std_error
        if cfg.tv_bound:
            try:
                rep = tv_upper_bound(
                    n, alpha, p, "mc", cfg.entropy_replicas, stream.derive("tv_upper_bound"), parallel,
                    t_scaled * alpha.norm2,
                )
                row.tv_upper_bound = rep.tv_upper
            except GeodetectError as exc:
                notes.append(f"tv_upper_bound: {exc}")
    except GeodetectError as exc:
        notes.append(f"error: {exc}")
    if notes:
        row.status = "; ".join(notes)
    row.runtime = time.perf_counter() - start
    return row


def phase_sweep(config: Union[SweepConfig, str], parallel: Optional[Parallel] = None) -> list[SweepRow]:
    """Run every (n, family, d) cell of the configuration in config order.

    Cells run in parallel with serial work inside each cell. Each cell draws
    from a stream derived from the seed and the cell's coordinates, so rows
    do not depend on the thread count or on which other cells are present.
    Failures are recorded in the row's ``status`` and the sweep continues.
    """
    cfg = parse_sweep_config(config) if isinstance(config, str) else config
    root = SeededStream(cfg.seed or 0)
    cells = [(n, fam, d) for n in cfg.n_list for fam in cfg.families for d in cfg.d_list]
    inner = Parallel(1)

    def run(cell):
        n, fam, d = cell
        stream = root.derive(f"cell:{n}:{cfg.p!r}:{fam}:{d}")
        return _cell(n, cfg.p, fam, d, cfg, stream, inner)

    return resolve(parallel).map(run, cells)


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".12g")
    return str(v)


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in SWEEP_COLUMNS])
    return buf.getvalue()


def sweep_jsonl(rows: Sequence[SweepRow]) -> str:
    out = []
    for r in rows:
        rec = {c: getattr(r, c) for c in SWEEP_COLUMNS}
        rec = {k: (float(_fmt(v)) if isinstance(v, float) and math.isfinite(v) else v) for k, v in rec.items()}
        rec = {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in rec.items()}
        out.append(json.dumps(rec, sort_keys=False))
    return "\n".join(out) + ("\n" if out else "")


def write_sweep(rows: Sequence[SweepRow], csv_path: Union[str, Path], jsonl_path: Union[str, Path, None] = None) -> None:
    Path(csv_path).write_text(sweep_csv(rows))
    if jsonl_path is not None:
        Path(jsonl_path).write_text(sweep_jsonl(rows))
