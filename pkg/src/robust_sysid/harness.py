"""Monte Carlo experiments for the boosted Markov-parameter estimator.

Every trial is a pure function of ``(config, master seed, trial key)`` so
trials can be farmed out to worker processes and merged in trial order
without affecting the results.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .distributions import DistributionSpec, kurtosis_ratio
from .errors import ConfigurationError
from .estimator import (
    DEFICIENT_MODES,
    bucket_count,
    estimate,
    single_ols,
    theorem1_bound,
)
from .lti import LtiSystem, default_system, f_matrix_norm, simulate_dataset, true_markov
from .textio import parse_key_values, read_matrices

logger = logging.getLogger(__name__)

WORKERS_ENV = "ROBUST_SYSID_WORKERS"
MODES = ("boosted", "single_ols")
PILOT_DELTA = 0.5

# leading element of every stream key, keeps experiment phases independent
_EXPERIMENT, _PILOT, _SWEEP = 0, 1, 2


def _parse_bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"not a boolean: {text!r}")


def _parse_int_list(text):
    if isinstance(text, (list, tuple)):
        return tuple(int(x) for x in text)
    return tuple(int(x) for x in str(text).replace(",", " ").split())


def _parse_float_list(text):
    if isinstance(text, (list, tuple)):
        return tuple(float(x) for x in text)
    return tuple(float(x) for x in str(text).replace(",", " ").split())


def _parse_optional_float(text):
    if text is None or str(text).strip().lower() in ("", "none"):
        return None
    return float(text)


@dataclass(frozen=True)
class ExperimentConfig:
    """All knobs of an experiment; each field is also a config-file key."""

    system: str = "default"
    system_seed: int = 20240601
    n: int = 3
    m: int = 2
    p: int = 2
    T: int = 5
    u_dist: str = "gaussian"
    u_scale: float = 1.0
    w_dist: str = "gaussian"
    w_scale: float = 1.0
    v_dist: str = "gaussian"
    v_scale: float = 1.0
    noiseless: bool = False
    delta: float = 0.1
    n_grid: Tuple[int, ...] = (256, 512, 1024)
    trials: int = 20
    mode: str = "boosted"
    strict: bool = False
    deficient: str = "pinv"
    c1: float = 1.0
    c2: float = 1.0
    fail_eps: Optional[float] = None
    deltas: Tuple[float, ...] = (0.5, 0.25, 0.1)
    rollouts_per_bucket: int = 64
    pilot_trials: int = 200
    seed: int = 0
    out: Optional[str] = None

    _PARSERS = {
        bool: _parse_bool,
        int: int,
        float: float,
        str: str,
    }

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.T < 1 or self.trials < 1 or self.pilot_trials < 1:
            raise ConfigurationError("T, trials and pilot_trials must be positive")
        if min(self.n, self.m, self.p) < 1:
            raise ConfigurationError("system dimensions must be positive")
        if not self.n_grid or min(self.n_grid) < 1:
            raise ConfigurationError(f"n_grid entries must be positive, got {self.n_grid}")
        if not 0.0 < self.delta < 1.0:
            raise ConfigurationError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.deltas or not all(0.0 < d < 1.0 for d in self.deltas):
            raise ConfigurationError(f"deltas must lie in (0, 1), got {self.deltas}")
        if self.rollouts_per_bucket < 1:
            raise ConfigurationError("rollouts_per_bucket must be positive")
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.deficient not in DEFICIENT_MODES:
            raise ConfigurationError(f"deficient must be one of {DEFICIENT_MODES}")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ConfigurationError("c1 and c2 must be positive")
        for prefix in "uwv":
            self.spec(prefix)

    @classmethod
    def from_mapping(cls, values) -> "ExperimentConfig":
        kwargs = {}
        known = {f.name: f for f in fields(cls) if not f.name.startswith("_")}
        for key, raw in values.items():
            name = key.replace("-", "_")
            if name not in known:
                raise ConfigurationError(f"unknown config key {key!r}")
            kwargs[name] = cls._coerce(name, raw)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path, overrides=None) -> "ExperimentConfig":
        values = parse_key_values(Path(path).read_text())
        values.update(overrides or {})
        return cls.from_mapping(values)

    @classmethod
    def _coerce(cls, name, raw):
        if not isinstance(raw, str):
            return raw
        try:
            if name == "n_grid":
                return _parse_int_list(raw)
            if name == "deltas":
                return _parse_float_list(raw)
            if name == "fail_eps":
                return _parse_optional_float(raw)
            if name == "out":
                return raw or None
            default = next(f.default for f in fields(cls) if f.name == name)
            return cls._PARSERS[type(default)](raw)
        except ValueError as exc:
            raise ConfigurationError(f"bad value for {name}: {raw!r} ({exc})") from None

    def spec(self, prefix: str) -> DistributionSpec:
        return DistributionSpec.parse(getattr(self, f"{prefix}_dist"), getattr(self, f"{prefix}_scale"))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def canonical_text(self) -> str:
        """Sorted ``key = value`` text of every result-affecting field."""
        lines = []
        for f in fields(self):
            if f.name.startswith("_") or f.name == "out":
                continue
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(repr(v) for v in value)
            lines.append(f"{f.name} = {value!r}" if isinstance(value, float) else f"{f.name} = {value}")
        return "\n".join(sorted(lines)) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()

    def build_system(self) -> LtiSystem:
        if self.system == "default":
            return default_system(self.n, self.m, self.p, seed=self.system_seed)
        mats = read_matrices(self.system)
        try:
            sys = LtiSystem(mats["A"], mats["B"], mats["C"], mats["D"])
        except KeyError as exc:
            raise ConfigurationError(f"system file lacks matrix {exc}") from None
        if (sys.n, sys.m, sys.p) != (self.n, self.m, self.p):
            raise ConfigurationError(
                f"system file has dims n,m,p={sys.n},{sys.m},{sys.p}; config says "
                f"{self.n},{self.m},{self.p}"
            )
        return sys


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        try:
            count = int(raw)
        except ValueError:
            raise ConfigurationError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
        return max(1, count)
    return os.cpu_count() or 1


@dataclass(frozen=True)
class _TrialSpec:
    system: LtiSystem
    T: int
    specs: Tuple[DistributionSpec, DistributionSpec, DistributionSpec]
    noiseless: bool
    mode: str
    delta: float
    strict: bool
    input_kurtosis: Optional[float]
    deficient: str
    seed: int


def _run_trial(job):
    """Errors of one simulated dataset; ``job = (spec, N, key)``."""
    spec, N, key = job
    data = simulate_dataset(
        spec.system, N, spec.T, *spec.specs, spec.seed, trial=key, noiseless=spec.noiseless
    )
    if spec.mode == "single_ols":
        g_hat = single_ols(data, on_deficient=spec.deficient)
        deficient = 0
    else:
        est = estimate(
            data,
            spec.delta,
            strict=spec.strict,
            input_kurtosis=spec.input_kurtosis,
            on_deficient=spec.deficient,
        )
        g_hat = est.g_hat
        deficient = len(est.deficient_buckets)
    err = g_hat - true_markov(spec.system, spec.T)
    return float(np.linalg.norm(err, 2)), float(np.linalg.norm(err, "fro")), deficient


def _map_trials(jobs, workers=None):
    """Run jobs in order, in parallel when more than one worker is available.

    Returns ``(results, error)``: on failure, the results completed before the
    first failing job in trial order, plus the exception.
    """
    workers = worker_count() if workers is None else workers
    results = []
    if workers <= 1 or len(jobs) <= 1:
        for job in jobs:
            try:
                results.append(_run_trial(job))
            except Exception as exc:  # noqa: BLE001 - surfaced to caller after flush
                return results, exc
        return results, None
    chunk = max(1, len(jobs) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        try:
            for res in pool.map(_run_trial, jobs, chunksize=chunk):
                results.append(res)
        except Exception as exc:  # noqa: BLE001
            return results, exc
    return results, None


@dataclass
class TrialError:
    N: int
    trial: int
    err_spec: float
    err_fro: float
    deficient_buckets: int = 0


@dataclass
class GridSummary:
    N: int
    mean_err: float
    median_err: float
    q99_err: float
    fail_frac: float
    bound: float
    K: int
    M: int


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rows: List[TrialError] = field(default_factory=list)
    summary: List[GridSummary] = field(default_factory=list)
    slope: Optional[float] = None
    reference_eps: dict = field(default_factory=dict)
    complete: bool = True

    @property
    def slope_defined(self) -> bool:
        return self.slope is not None

    def errors_for(self, N) -> np.ndarray:
        return np.array([r.err_spec for r in self.rows if r.N == N])

    def to_dict(self) -> dict:
        return {
            "config_sha256": self.config.digest(),
            "config": self.config.canonical_text(),
            "complete": self.complete,
            "slope": self.slope,
            "slope_defined": self.slope_defined,
            "summary": [dataclasses.asdict(s) for s in self.summary],
            "deficient_buckets": {
                str(N): int(sum(r.deficient_buckets for r in self.rows if r.N == N))
                for N in sorted({r.N for r in self.rows})
            },
        }

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        header = f"# config_sha256={self.config.digest()}\n"
        lines = ["N,trial,err_spec,err_fro"]
        lines += [f"{r.N},{r.trial},{r.err_spec!r},{r.err_fro!r}" for r in self.rows]
        (out / "errors.csv").write_text(header + "\n".join(lines) + "\n")
        lines = ["N,median_err,q99_err,fail_frac,bound"]
        lines += [
            f"{s.N},{s.median_err!r},{s.q99_err!r},{s.fail_frac!r},{s.bound!r}"
            for s in self.summary
        ]
        (out / "summary.csv").write_text(header + "\n".join(lines) + "\n")
        (out / "report.json").write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return out


def fit_slope(Ns, medians) -> Optional[float]:
    """Least-squares slope of ``ln median`` against ``ln N``; None if undefined."""
    Ns = np.asarray(Ns, dtype=float)
    med = np.asarray(medians, dtype=float)
    if len(Ns) < 2 or len(np.unique(Ns)) < 2 or np.any(~np.isfinite(med)) or np.any(med <= 1e-12):
        return None
    return float(np.polyfit(np.log(Ns), np.log(med), 1)[0])


def _trial_spec(cfg: ExperimentConfig, sys: LtiSystem, delta: float, mode: str = None) -> _TrialSpec:
    u = cfg.spec("u")
    return _TrialSpec(
        system=sys,
        T=cfg.T,
        specs=(u, cfg.spec("w"), cfg.spec("v")),
        noiseless=cfg.noiseless,
        mode=mode or cfg.mode,
        delta=delta,
        strict=cfg.strict,
        input_kurtosis=kurtosis_ratio(u) if cfg.strict else None,
        deficient=cfg.deficient,
        seed=cfg.seed,
    )


def _bound(cfg: ExperimentConfig, sys: LtiSystem, delta, N, c1=None, c2=None) -> float:
    sw = 0.0 if cfg.noiseless else cfg.w_scale
    sv = 0.0 if cfg.noiseless else cfg.v_scale
    return theorem1_bound(
        (sys.n, sys.m, sys.p), cfg.T, sw, sv, cfg.u_scale, f_matrix_norm(sys, cfg.T),
        delta, N, cfg.c1 if c1 is None else c1, cfg.c2 if c2 is None else c2,
    )


def _summarise(N, errs, eps, bound, K, M) -> GridSummary:
    errs = np.asarray(errs)
    return GridSummary(
        N=N,
        mean_err=float(errs.mean()),
        median_err=float(np.median(errs)),
        q99_err=float(np.quantile(errs, 0.99)),
        fail_frac=float(np.mean(errs > eps)),
        bound=bound,
        K=K,
        M=M,
    )


class ExperimentFailed(RuntimeError):
    """An estimator error interrupted the run; ``report`` holds partial results."""

    def __init__(self, report, cause):
        self.report = report
        self.cause = cause
        super().__init__(f"experiment stopped early: {cause}")


def run_experiment(cfg: ExperimentConfig, workers=None) -> ExperimentReport:
    """Errors of the configured estimator over the N grid.

    Partial results are written to ``cfg.out`` before an estimator error is
    re-raised as :class:`ExperimentFailed`.
    """
    sys = cfg.build_system()
    K = 1 if cfg.mode == "single_ols" else bucket_count(cfg.delta)
    if cfg.mode == "boosted" and min(cfg.n_grid) < K:
        raise ConfigurationError(
            f"N grid entry {min(cfg.n_grid)} is below K={K} buckets for delta={cfg.delta}"
        )
    tspec = _trial_spec(cfg, sys, cfg.delta)
    jobs = [(tspec, N, (_EXPERIMENT, N, r)) for N in cfg.n_grid for r in range(cfg.trials)]
    results, error = _map_trials(jobs, workers)

    report = ExperimentReport(cfg)
    for (_, N, key), (es, ef, nd) in zip(jobs, results):
        report.rows.append(TrialError(N, key[2], es, ef, nd))
    for N in cfg.n_grid:
        errs = report.errors_for(N)
        if len(errs) < cfg.trials:
            continue
        bound = _bound(cfg, sys, cfg.delta, N)
        eps = bound if cfg.fail_eps is None else cfg.fail_eps
        report.reference_eps[N] = eps
        report.summary.append(_summarise(N, errs, eps, bound, K, N // K))
    if error is not None:
        report.complete = False
        if cfg.out:
            report.write(cfg.out)
        raise ExperimentFailed(report, error) from error
    report.slope = fit_slope([s.N for s in report.summary], [s.median_err for s in report.summary])
    if report.slope is None:
        logger.info("log-log slope undefined (zero errors or fewer than two grid points)")
    if cfg.out:
        report.write(cfg.out)
    return report


def calibrate_constant(errors, unit_bound) -> float:
    """Smallest ``c`` with at most half the errors above ``c * unit_bound``.

    This is the ``ceil(R/2)``-th smallest error ratio, i.e. the exact answer a
    bisection over ``c`` would converge to.
    """
    ratios = np.sort(np.asarray(errors, dtype=float) / unit_bound)
    k = math.ceil(len(ratios) / 2)
    return float(ratios[k - 1])


@dataclass
class SweepPoint:
    delta: float
    K: int
    M: int
    N: int
    bound: float
    fail_frac: float
    median_err: float

    @property
    def passed(self) -> bool:
        return self.fail_frac <= self.delta


@dataclass
class SweepReport:
    config: ExperimentConfig
    constant: float
    pilot_N: int
    pilot_errors: np.ndarray
    points: List[SweepPoint] = field(default_factory=list)
    rows: List[TrialError] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "config_sha256": self.config.digest(),
            "config": self.config.canonical_text(),
            "calibrated_constant": self.constant,
            "pilot_delta": PILOT_DELTA,
            "pilot_N": self.pilot_N,
            "points": [dict(dataclasses.asdict(p), passed=p.passed) for p in self.points],
        }

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        header = f"# config_sha256={self.config.digest()}\n"
        lines = ["delta,K,M,N,bound,fail_frac,median_err,passed"]
        lines += [
            f"{p.delta!r},{p.K},{p.M},{p.N},{p.bound!r},{p.fail_frac!r},{p.median_err!r},{int(p.passed)}"
            for p in self.points
        ]
        (out / "sweep.csv").write_text(header + "\n".join(lines) + "\n")
        lines = ["N,trial,err_spec,err_fro"]
        lines += [f"{r.N},{r.trial},{r.err_spec!r},{r.err_fro!r}" for r in self.rows]
        (out / "errors.csv").write_text(header + "\n".join(lines) + "\n")
        (out / "report.json").write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return out


def run_delta_sweep(cfg: ExperimentConfig, workers=None) -> SweepReport:
    """Empirical failure frequency against the calibrated bound for each delta.

    For each delta, ``N = rollouts_per_bucket * K(delta)``. The constant
    ``c = c1 = c2`` is fixed beforehand from a pilot run at the largest of
    these N with delta = 0.5: the smallest ``c`` for which at most half of
    the ``pilot_trials`` pilot errors exceed the bound. Pilot and sweep use
    disjoint random streams.
    """
    if cfg.mode != "boosted":
        raise ConfigurationError("the delta sweep evaluates the boosted estimator only")
    sys = cfg.build_system()
    plan = [(d, bucket_count(d)) for d in cfg.deltas]
    Ns = [cfg.rollouts_per_bucket * K for _, K in plan]
    pilot_N = max(Ns)

    pilot_spec = _trial_spec(cfg, sys, PILOT_DELTA)
    pilot_jobs = [(pilot_spec, pilot_N, (_PILOT, pilot_N, r)) for r in range(cfg.pilot_trials)]
    pilot, error = _map_trials(pilot_jobs, workers)
    if error is not None:
        raise error
    pilot_errs = np.array([r[0] for r in pilot])
    unit = _bound(cfg, sys, PILOT_DELTA, pilot_N, 1.0, 1.0)
    c = calibrate_constant(pilot_errs, unit)
    logger.info("calibrated bound constant c=%.6g from %d pilot trials", c, len(pilot_errs))

    report = SweepReport(cfg, c, pilot_N, pilot_errs)
    for idx, ((delta, K), N) in enumerate(zip(plan, Ns)):
        tspec = _trial_spec(cfg, sys, delta)
        jobs = [(tspec, N, (_SWEEP, idx, r)) for r in range(cfg.trials)]
        res, error = _map_trials(jobs, workers)
        if error is not None:
            raise error
        errs = np.array([r[0] for r in res])
        report.rows += [TrialError(N, r, e[0], e[1], e[2]) for r, e in enumerate(res)]
        eps = _bound(cfg, sys, delta, N, c, c)
        report.points.append(
            SweepPoint(delta, K, N // K, N, eps, float(np.mean(errs > eps)), float(np.median(errs)))
        )
    if cfg.out:
        report.write(cfg.out)
    return report
