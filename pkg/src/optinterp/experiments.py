"""Seeded experiment sweeps producing CSV rows and plot-data series.

An :class:`ExperimentSpec` names a data regime, a parameter sweep and a set of
estimator labels; :func:`run_experiment` evaluates every (sweep value,
replicate, estimator) cell, appends per-replicate and mean rows, and, for the
two-level covariance family, the asymptotic prediction rows.  Output is
deterministic for a fixed (spec, seed): replicate generators are derived
positionally and rows are sorted before writing.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import interpolators, rf, risk, rmt
from .covest import fit_empirical_optimal
from .errors import InvalidSpec
from .model import (
    CovarianceSpec,
    PriorSpec,
    ProblemConfig,
    build_covariance,
    build_prior,
    sample_instance,
    sample_sphere,
)

LINEAR_ESTIMATORS = (
    "min_norm",
    "best_variance",
    "optimal_bias",
    "optimal_response_linear",
    "best_possible",
    "w_Oe",
    "w_Oe_phi",
)
RF_ESTIMATORS = ("rf_min_norm", "rf_optimal")
REGISTERED_ESTIMATORS = LINEAR_ESTIMATORS + RF_ESTIMATORS

# Stable per-label stream offsets so estimator subsets do not shift the
# randomness consumed by other estimators.
_LABEL_CODES = {label: 1000 + i for i, label in enumerate(REGISTERED_ESTIMATORS)}

SWEEPABLE = ("covariance.rho1", "covariance.rho2", "covariance.rho", "gamma", "rf.width_ratio")


@dataclass(frozen=True)
class RFExperimentConfig:
    """Random-features geometry: input dim from ``n / input_ratio``, width from ``width_ratio * d``."""

    activation: str = "relu"
    input_ratio: float = 3.0
    width_ratio: float = 4.0
    moment_samples: Optional[int] = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    model: str
    covariance: CovarianceSpec
    prior: PriorSpec
    n: int
    gamma: float
    signal: float
    noise_var: float
    sweep_param: str
    sweep_values: tuple
    estimators: tuple
    replicates: int = 20
    seed: int = 0
    rmt_predictions: bool = False
    rf: Optional[RFExperimentConfig] = None

    def __post_init__(self):
        object.__setattr__(self, "sweep_values", tuple(float(v) for v in self.sweep_values))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        self.validate()

    def validate(self) -> None:
        if self.model not in ("linear", "rf"):
            raise InvalidSpec(f"model must be 'linear' or 'rf', got {self.model!r}")
        if not self.sweep_values or not all(math.isfinite(v) for v in self.sweep_values):
            raise InvalidSpec("sweep values must be non-empty and finite")
        if self.sweep_param not in SWEEPABLE:
            raise InvalidSpec(f"unknown sweep parameter {self.sweep_param!r}")
        unknown = [e for e in self.estimators if e not in REGISTERED_ESTIMATORS]
        if unknown:
            raise InvalidSpec(f"unknown estimator labels {unknown}")
        if self.model == "linear":
            if any(e in RF_ESTIMATORS for e in self.estimators):
                raise InvalidSpec("random-features estimators need model='rf'")
            if self.sweep_param == "rf.width_ratio":
                raise InvalidSpec("rf.width_ratio sweep needs model='rf'")
            gammas = self.sweep_values if self.sweep_param == "gamma" else (self.gamma,)
            if any(g < 1.0 for g in gammas):
                raise InvalidSpec("linear experiments need gamma >= 1 (so d >= n)")
        else:
            if any(e not in RF_ESTIMATORS for e in self.estimators):
                raise InvalidSpec("model='rf' supports only the rf_* estimators")
            if self.rf is None:
                raise InvalidSpec("model='rf' needs an rf config block")
            if self.covariance.kind != "identity" or self.prior.kind != "identity":
                raise InvalidSpec("the rf experiment uses sphere-uniform data (identity specs)")
        if self.replicates < 1:
            raise InvalidSpec("replicates must be >= 1")
        if self.n < 1:
            raise InvalidSpec("n must be >= 1")

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "model": self.model,
            "covariance": self.covariance.to_dict(),
            "prior": self.prior.to_dict(),
            "n": self.n,
            "gamma": self.gamma,
            "signal": self.signal,
            "noise_var": self.noise_var,
            "sweep_param": self.sweep_param,
            "sweep_values": list(self.sweep_values),
            "estimators": list(self.estimators),
            "replicates": self.replicates,
            "seed": self.seed,
            "rmt_predictions": self.rmt_predictions,
        }
        if self.rf is not None:
            out["rf"] = self.rf.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        data = dict(data)
        try:
            data["covariance"] = CovarianceSpec.from_dict(data["covariance"])
            data["prior"] = PriorSpec.from_dict(data["prior"])
            if "rf" in data and data["rf"] is not None:
                data["rf"] = RFExperimentConfig(**data["rf"])
            return cls(**data)
        except (KeyError, TypeError) as exc:
            raise InvalidSpec(f"malformed experiment spec: {exc}") from exc


RESULT_FIELDS = (
    "experiment",
    "estimator",
    "sweep_param",
    "sweep_value",
    "n",
    "d",
    "gamma",
    "replicate",
    "excess_risk",
    "bias",
    "variance",
    "stderr",
    "seed",
    "error",
)


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    estimator: str
    sweep_param: str
    sweep_value: float
    n: int
    d: int
    gamma: float
    replicate: str
    excess_risk: Optional[float] = None
    bias: Optional[float] = None
    variance: Optional[float] = None
    stderr: Optional[float] = None
    seed: int = 0
    error: str = ""


@dataclass(frozen=True)
class _Point:
    index: int
    value: float
    covariance: CovarianceSpec
    prior: PriorSpec
    n: int
    d: int
    gamma: float
    width: int = 0


def _resolve_point(spec: ExperimentSpec, index: int, value: float) -> _Point:
    cov, prior, gamma = spec.covariance, spec.prior, spec.gamma
    rf_cfg = spec.rf
    if spec.sweep_param.startswith("covariance."):
        cov = replace(cov, **{spec.sweep_param.split(".", 1)[1]: value})
    elif spec.sweep_param == "gamma":
        gamma = value
    elif spec.sweep_param == "rf.width_ratio":
        rf_cfg = replace(rf_cfg, width_ratio=value)
    if spec.model == "linear":
        d = math.floor(gamma * spec.n)
        return _Point(index, value, cov, prior, spec.n, d, gamma)
    d = int(round(spec.n / rf_cfg.input_ratio))
    width = int(round(rf_cfg.width_ratio * d))
    return _Point(index, value, cov, prior, spec.n, d, rf_cfg.width_ratio, width=width)


def _rng_for(spec: ExperimentSpec, point: int, rep: int, label: Optional[str] = None):
    entropy = [spec.seed, point, rep]
    if label is not None:
        entropy.append(_LABEL_CODES[label])
    return np.random.default_rng(np.random.SeedSequence(entropy))


def _evaluate_linear_label(label, inst, spec, point, rep):
    X, y, sigma, phi = inst.X, inst.y, inst.sigma, inst.phi
    snr = inst.config.snr
    if label == "best_possible":
        value = risk.expected_excess_risk_best_possible(X, sigma, spec.noise_var)
        return value, 0.0, value
    if label == "min_norm":
        est = interpolators.min_norm(X)
    elif label == "best_variance":
        est = interpolators.best_variance(X, sigma)
    elif label == "optimal_bias":
        est = interpolators.optimal_bias(X, phi)
    elif label == "optimal_response_linear":
        est = interpolators.optimal_response_linear(X, sigma, phi, snr)
    elif label == "w_Oe":
        est = fit_empirical_optimal(X, y, rng=_rng_for(spec, point, rep, label)).estimator
    elif label == "w_Oe_phi":
        est = fit_empirical_optimal(
            X, y, phi_hat=phi, rng=_rng_for(spec, point, rep, label)
        ).estimator
    else:  # pragma: no cover - guarded by validate()
        raise InvalidSpec(f"estimator {label!r} is not a linear-model estimator")
    excess = risk.conditional_expected_excess_risk(est, X, inst.w_star, sigma, spec.noise_var)
    bias, variance = risk.bias_variance(est, X, sigma, phi, spec.signal, spec.noise_var)
    return excess, bias, variance


def _run_cell(spec: ExperimentSpec, pt: _Point, rep: int) -> list[ResultRow]:
    """Evaluate every estimator on one replicate of one sweep point."""
    base = dict(
        experiment=spec.name,
        sweep_param=spec.sweep_param,
        sweep_value=pt.value,
        n=pt.n,
        d=pt.d,
        gamma=pt.gamma,
        seed=spec.seed,
        replicate=str(rep),
    )
    rows = []
    rng = _rng_for(spec, pt.index, rep)
    if spec.model == "linear":
        sigma = build_covariance(pt.covariance, pt.d)
        phi = build_prior(pt.prior, sigma, pt.d)
        config = ProblemConfig(
            n=pt.n, d=pt.d, signal=spec.signal, noise_var=spec.noise_var, seed=spec.seed
        )
        try:
            inst = sample_instance(config, sigma, phi, rng)
        except (ValueError, RuntimeError) as exc:
            return [
                ResultRow(estimator=label, error=f"sampling failed: {exc}", **base)
                for label in spec.estimators
            ]
        for label in spec.estimators:
            try:
                excess, bias, variance = _evaluate_linear_label(label, inst, spec, pt.index, rep)
                rows.append(
                    ResultRow(
                        estimator=label, excess_risk=excess, bias=bias, variance=variance, **base
                    )
                )
            except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
                rows.append(ResultRow(estimator=label, error=str(exc), **base))
        return rows

    # random-features path: sphere-uniform inputs, identity input covariance
    rf_cfg = spec.rf
    model = rf.make_rf_model(pt.width, pt.d, rf_cfg.activation, rng)
    X = sample_sphere(pt.n, pt.d, rng)
    w_star = math.sqrt(spec.signal / pt.d) * rng.standard_normal(pt.d)
    xi = math.sqrt(spec.noise_var) * rng.standard_normal(pt.n)
    y = X @ w_star + xi
    Z = rf.rf_features(X, model)
    samples = rf_cfg.moment_samples or 50 * pt.width
    moments = rf.estimate_second_moments(model, samples, rng)
    snr = spec.signal / spec.noise_var if spec.noise_var > 0 else math.inf
    for label in spec.estimators:
        try:
            if label == "rf_min_norm":
                est = rf.rf_min_norm(Z)
            else:
                est = rf.rf_optimal(X, Z, moments, None, snr)
            a = est.matrix @ y
            excess = rf.rf_excess_risk(a, w_star, moments)
            rows.append(ResultRow(estimator=label, excess_risk=excess, **base))
        except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
            rows.append(ResultRow(estimator=label, error=str(exc), **base))
    return rows


def _mean_rows(spec: ExperimentSpec, pt: _Point, cell_rows: list[ResultRow]) -> list[ResultRow]:
    out = []
    for label in spec.estimators:
        values = [r for r in cell_rows if r.estimator == label and not r.error]
        if not values:
            continue
        risks = np.array([r.excess_risk for r in values])
        stderr = (
            float(np.std(risks, ddof=1) / math.sqrt(len(risks))) if len(risks) > 1 else 0.0
        )
        biases = [r.bias for r in values if r.bias is not None]
        variances = [r.variance for r in values if r.variance is not None]
        out.append(
            ResultRow(
                experiment=spec.name,
                estimator=label,
                sweep_param=spec.sweep_param,
                sweep_value=pt.value,
                n=pt.n,
                d=pt.d,
                gamma=pt.gamma,
                replicate="mean",
                excess_risk=float(np.mean(risks)),
                bias=float(np.mean(biases)) if biases else None,
                variance=float(np.mean(variances)) if variances else None,
                stderr=stderr,
                seed=spec.seed,
            )
        )
    return out


def _asymptotic_rows(spec: ExperimentSpec, pt: _Point) -> list[ResultRow]:
    if pt.covariance.kind != "strong_weak":
        return []
    params = rmt.StrongWeakParams(
        rho1=pt.covariance.rho1,
        rho2=pt.covariance.rho2,
        psi1=pt.covariance.psi1,
        gamma=pt.gamma,
    )
    base = dict(
        experiment=spec.name,
        sweep_param=spec.sweep_param,
        sweep_value=pt.value,
        n=pt.n,
        d=pt.d,
        gamma=pt.gamma,
        replicate="asymptotic",
        stderr=0.0,
        seed=spec.seed,
    )
    bias, variance = rmt.min_norm_asymptotics(params, spec.signal, spec.noise_var)
    bv_bias = spec.signal * params.mean_eigenvalue * (1.0 - 1.0 / pt.gamma)
    bv_var = spec.noise_var / (pt.gamma - 1.0)
    return [
        ResultRow(
            estimator="min_norm_asymptotic",
            excess_risk=bias + variance,
            bias=bias,
            variance=variance,
            **base,
        ),
        ResultRow(
            estimator="best_variance_asymptotic",
            excess_risk=bv_bias + bv_var,
            bias=bv_bias,
            variance=bv_var,
            **base,
        ),
    ]


def _replicate_order(row: ResultRow) -> tuple:
    if row.replicate == "mean":
        return (1, 0)
    if row.replicate == "asymptotic":
        return (2, 0)
    return (0, int(row.replicate))


def _sort_rows(rows: list[ResultRow]) -> list[ResultRow]:
    return sorted(
        rows,
        key=lambda r: (r.experiment, r.estimator, r.sweep_value, _replicate_order(r)),
    )


def _cell_task(args):
    spec, pt, rep = args
    return _run_cell(spec, pt, rep)


def run_experiment(spec: ExperimentSpec, jobs: int = 1) -> list[ResultRow]:
    """Run the sweep and return deterministic, sorted result rows.

    Per-cell failures become rows with a populated ``error`` column; the run
    continues.  ``jobs > 1`` evaluates (sweep point, replicate) cells in a
    process pool; output is identical to the sequential run.
    """
    spec.validate()
    points = [_resolve_point(spec, i, v) for i, v in enumerate(spec.sweep_values)]
    tasks = [(spec, pt, rep) for pt in points for rep in range(spec.replicates)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cell_lists = list(pool.map(_cell_task, tasks, chunksize=1))
    else:
        cell_lists = [_cell_task(t) for t in tasks]
    rows: list[ResultRow] = []
    by_point: dict[int, list[ResultRow]] = {pt.index: [] for pt in points}
    for (spec_, pt, rep), cell in zip(tasks, cell_lists):
        rows.extend(cell)
        by_point[pt.index].extend(cell)
    for pt in points:
        rows.extend(_mean_rows(spec, pt, by_point[pt.index]))
        if spec.rmt_predictions and spec.model == "linear":
            rows.extend(_asymptotic_rows(spec, pt))
    return _sort_rows(rows)


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def rows_to_csv(rows: Sequence[ResultRow]) -> str:
    """Serialize rows with a fixed header, '.' decimals and LF line endings."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_FIELDS)
    for row in rows:
        writer.writerow([_format_value(getattr(row, f)) for f in RESULT_FIELDS])
    return buf.getvalue()


def write_csv(rows: Sequence[ResultRow], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(rows_to_csv(rows), encoding="utf-8", newline="")
    return path


PLOTDATA_HEADER = "# sweep_value excess_risk stderr"


def emit_plotdata(rows: Sequence[ResultRow], outdir) -> list[Path]:
    """Write one whitespace-delimited series file per (experiment, estimator).

    Series contain the mean (or asymptotic) excess risk with its standard
    error against the sweep value, sorted by sweep value.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    series: dict[tuple[str, str], list[ResultRow]] = {}
    for row in rows:
        if row.replicate not in ("mean", "asymptotic") or row.error:
            continue
        series.setdefault((row.experiment, row.estimator), []).append(row)
    paths = []
    for (experiment, estimator), entries in sorted(series.items()):
        path = outdir / f"{experiment}_{estimator}.dat"
        lines = [PLOTDATA_HEADER]
        for row in sorted(entries, key=lambda r: r.sweep_value):
            lines.append(
                f"{_format_value(row.sweep_value)} "
                f"{_format_value(row.excess_risk)} "
                f"{_format_value(row.stderr)}"
            )
        try:
            path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot write plot data to {path}: {exc}") from exc
        paths.append(path)
    if not series:
        path = outdir / "empty.dat"
        path.write_text(PLOTDATA_HEADER + "\n", encoding="utf-8")
        paths.append(path)
    return paths


def read_plotdata(path) -> np.ndarray:
    """Parse a plot-data series back into an array of (sweep_value, mean, stderr)."""
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        rows.append([float(tok) for tok in line.split()])
    return np.array(rows).reshape(-1, 3) if rows else np.empty((0, 3))


# Built-in sweeps mirroring the headline experiment families.  The reference
# sample sizes are large; ``scale`` shrinks them for desk runs (default 1/6,
# i.e. n=3000 -> 500).
DEFAULT_SCALE = 1.0 / 6.0

_FIG_ESTIMATORS = (
    "min_norm",
    "best_variance",
    "optimal_response_linear",
    "w_Oe",
    "best_possible",
)
_EMPIRICAL_ESTIMATORS = ("optimal_response_linear", "w_Oe", "best_possible")
_PRIOR_ESTIMATORS = ("optimal_response_linear", "w_Oe", "w_Oe_phi", "best_possible")


def _scaled(n_ref: int, scale: float) -> int:
    return max(int(round(n_ref * scale)), 8)


def builtin_spec(name: str, scale: float = DEFAULT_SCALE, **overrides) -> ExperimentSpec:
    """Construct one of the built-in figure sweeps ``fig1`` ... ``fig7``."""
    builders = {
        "fig1": lambda: ExperimentSpec(
            name="fig1",
            model="linear",
            covariance=CovarianceSpec.strong_weak(rho1=1.0, rho2=1.0, psi1=0.5),
            prior=PriorSpec.identity(),
            n=_scaled(3000, scale),
            gamma=2.0,
            signal=1.0,
            noise_var=1.0,
            sweep_param="covariance.rho2",
            sweep_values=(1.0, 0.1, 0.01, 0.001),
            estimators=_FIG_ESTIMATORS,
            rmt_predictions=True,
        ),
        "fig2": lambda: ExperimentSpec(
            name="fig2",
            model="linear",
            covariance=CovarianceSpec.strong_weak(rho1=1.0, rho2=1.0, psi1=0.5),
            prior=PriorSpec.identity(),
            n=_scaled(3000, scale),
            gamma=2.0,
            signal=1.0,
            noise_var=1.0,
            sweep_param="covariance.rho1",
            sweep_values=(1.0, 10.0, 100.0),
            estimators=_FIG_ESTIMATORS,
            rmt_predictions=True,
        ),
        "fig3": lambda: ExperimentSpec(
            name="fig3",
            model="linear",
            covariance=CovarianceSpec.autoregressive(0.5),
            prior=PriorSpec.identity(),
            n=_scaled(2000, scale),
            gamma=2.0,
            signal=1.0,
            noise_var=1.0,
            sweep_param="gamma",
            sweep_values=(1.5, 2.0, 2.5, 3.0),
            estimators=_EMPIRICAL_ESTIMATORS,
        ),
        "fig4": lambda: ExperimentSpec(
            name="fig4",
            model="linear",
            covariance=CovarianceSpec.exponential(),
            prior=PriorSpec.identity(),
            n=_scaled(2000, scale),
            gamma=2.0,
            signal=1.0,
            noise_var=1.0,
            sweep_param="gamma",
            sweep_values=(1.5, 2.0, 2.5, 3.0),
            estimators=_EMPIRICAL_ESTIMATORS,
        ),
        "fig5": lambda: ExperimentSpec(
            name="fig5",
            model="linear",
            covariance=CovarianceSpec.exponential(),
            prior=PriorSpec.autoregressive(0.5),
            n=_scaled(2000, scale),
            gamma=2.0,
            signal=1.0,
            noise_var=1.0,
            sweep_param="gamma",
            sweep_values=(1.5, 2.0, 2.5, 3.0),
            estimators=_PRIOR_ESTIMATORS,
        ),
        "fig6": lambda: ExperimentSpec(
            name="fig6",
            model="linear",
            covariance=CovarianceSpec.autoregressive(0.5),
            prior=PriorSpec.inverse_of_covariance(),
            n=_scaled(2000, scale),
            gamma=2.0,
            signal=1.0,
            noise_var=1.0,
            sweep_param="gamma",
            sweep_values=(1.5, 2.0, 2.5, 3.0),
            estimators=_PRIOR_ESTIMATORS,
        ),
        "fig7": lambda: ExperimentSpec(
            name="fig7",
            model="rf",
            covariance=CovarianceSpec.identity(),
            prior=PriorSpec.identity(),
            n=_scaled(2000, scale),
            gamma=0.0,
            signal=5.0,
            noise_var=1.0,
            sweep_param="rf.width_ratio",
            sweep_values=(4.0, 6.0, 8.0),
            estimators=RF_ESTIMATORS,
            rf=RFExperimentConfig(activation="relu", input_ratio=3.0),
        ),
    }
    if name not in builders:
        raise InvalidSpec(f"unknown built-in experiment {name!r}; have {sorted(builders)}")
    spec = builders[name]()
    return replace(spec, **overrides) if overrides else spec


BUILTIN_NAMES = ("fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7")
