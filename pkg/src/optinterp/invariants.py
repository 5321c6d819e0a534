"""Cross-module invariant suite, runnable from the CLI.

Each check exercises one documented invariant at desk scale and reports
pass/fail; failures are data, not exceptions.  ``tol_scale`` multiplies every
tolerance, which gives the CLI a way to demonstrate that corrupted tolerances
are caught (scale them down and the suite must go red).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import covest, experiments, interpolators, numerics, optim, rf, risk, rmt
from .model import (
    CovarianceSpec,
    PriorSpec,
    ProblemConfig,
    build_covariance,
    build_prior,
    sample_instance,
    sample_sphere,
)


@dataclass(frozen=True)
class CheckResult:
    module: str
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class InvariantReport:
    seed: int
    results: tuple

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.results)

    def format(self) -> str:
        lines = []
        for r in self.results:
            status = "PASS" if r.passed else "FAIL"
            lines.append(f"[{status}] {r.module}.{r.name}: {r.detail}")
        n_fail = sum(not r.passed for r in self.results)
        lines.append(
            f"{len(self.results) - n_fail}/{len(self.results)} invariant checks passed"
        )
        return "\n".join(lines)


def _spd(rng, d, scale=1.0):
    a = rng.standard_normal((d, d))
    return scale * (a @ a.T + d * np.eye(d))


def _assert(cond: bool, detail: str) -> str:
    if not cond:
        raise AssertionError(detail)
    return detail


# ---------------------------------------------------------------------------
# numerics
# ---------------------------------------------------------------------------


def _check_penrose(rng, tol):
    M = rng.standard_normal((5, 9))
    P = numerics.pinv(M)
    errs = [
        np.linalg.norm(M @ P @ M - M) / np.linalg.norm(M),
        np.linalg.norm(P @ M @ P - P) / np.linalg.norm(P),
        np.linalg.norm((M @ P).T - M @ P) / np.linalg.norm(M @ P),
        np.linalg.norm((P @ M).T - P @ M) / np.linalg.norm(P @ M),
    ]
    return _assert(max(errs) <= 1e-10 * tol, f"max Penrose residual {max(errs):.2e}")


def _check_pinv_idempotent_and_gram(rng, tol):
    M = rng.standard_normal((4, 7))
    err1 = np.linalg.norm(numerics.pinv(numerics.pinv(M)) - M) / np.linalg.norm(M)
    gram_form = M.T @ np.linalg.inv(M @ M.T)
    err2 = np.linalg.norm(numerics.pinv(M) - gram_form) / np.linalg.norm(gram_form)
    return _assert(max(err1, err2) <= 1e-9 * tol, f"pinv residuals {err1:.2e}, {err2:.2e}")


def _check_inv_sqrt(rng, tol):
    S = _spd(rng, 6)
    R = numerics.inv_sqrt(S)
    err1 = np.linalg.norm(R @ S @ R - np.eye(6))
    err2 = np.linalg.norm(R @ R - np.linalg.inv(S)) / np.linalg.norm(np.linalg.inv(S))
    return _assert(max(err1, err2) <= 1e-9 * tol, f"inv_sqrt residuals {err1:.2e}, {err2:.2e}")


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------


def _check_strong_weak_spectrum(rng, tol):
    d = int(rng.integers(3, 40))
    psi1 = float(rng.uniform(0, 1))
    spec = CovarianceSpec.strong_weak(rho1=4.0, rho2=0.5, psi1=psi1)
    sigma = build_covariance(spec, d)
    eigvals = np.sort(np.linalg.eigvalsh(sigma))
    k = math.floor(d * psi1)
    expected = np.sort(np.r_[np.full(k, 4.0), np.full(d - k, 0.5)])
    return _assert(np.array_equal(eigvals.round(12), expected), f"multiset ok at d={d}, psi1={psi1:.3f}")


def _check_sampling_reproducible(rng, tol):
    spec = CovarianceSpec.autoregressive(0.5)
    config = ProblemConfig(n=6, d=12, signal=1.0, noise_var=0.5, seed=123)
    sigma = build_covariance(spec, 12)
    phi = np.eye(12)
    a = sample_instance(config, sigma, phi)
    b = sample_instance(config, sigma, phi)
    same = (
        np.array_equal(a.X, b.X)
        and np.array_equal(a.w_star, b.w_star)
        and np.array_equal(a.xi, b.xi)
        and np.array_equal(a.y, b.y)
    )
    exact = np.array_equal(a.y, a.X @ a.w_star + a.xi)
    return _assert(same and exact, "bitwise reproducible; response assembled exactly")


# ---------------------------------------------------------------------------
# interpolators
# ---------------------------------------------------------------------------


def _random_regime(rng, n=8, d=20):
    sigma = _spd(rng, d, scale=1.0 / d)
    phi = _spd(rng, d, scale=1.0 / d)
    config = ProblemConfig(
        n=n, d=d, signal=2.0, noise_var=0.5, seed=int(rng.integers(0, 2**31))
    )
    inst = sample_instance(config, sigma, phi, rng)
    return inst


def _check_interpolation(rng, tol):
    inst = _random_regime(rng)
    X, y = inst.X, inst.y
    snr = inst.config.snr
    worst = 0.0
    for est in (
        interpolators.min_norm(X),
        interpolators.best_variance(X, inst.sigma),
        interpolators.optimal_bias(X, inst.phi),
        interpolators.optimal_response_linear(X, inst.sigma, inst.phi, snr),
    ):
        resid = np.linalg.norm(X @ (est.matrix @ y) - y) / np.linalg.norm(y)
        worst = max(worst, resid)
    oracle = interpolators.best_possible(X, inst.sigma, inst.w_star, inst.xi)
    worst = max(worst, np.linalg.norm(X @ oracle.w - y) / np.linalg.norm(y))
    return _assert(worst <= 1e-8 * tol, f"worst interpolation residual {worst:.2e}")


def _check_square_uniqueness(rng, tol):
    d = 7
    sigma = _spd(rng, d)
    phi = _spd(rng, d)
    X = rng.standard_normal((d, d))
    y = rng.standard_normal(d)
    w_ref = np.linalg.solve(X, y)
    worst = 0.0
    for est in (
        interpolators.min_norm(X),
        interpolators.best_variance(X, sigma),
        interpolators.optimal_bias(X, phi),
        interpolators.optimal_response_linear(X, sigma, phi, 1.3),
    ):
        worst = max(worst, np.linalg.norm(est.matrix @ y - w_ref) / np.linalg.norm(w_ref))
    return _assert(worst <= 1e-8 * tol, f"square-case deviation {worst:.2e}")


def _check_variance_piece_identity(rng, tol):
    inst = _random_regime(rng)
    X, sigma = inst.X, inst.sigma
    piece = interpolators.variance_optimal_piece(X, sigma)
    root = numerics.inv_sqrt(sigma)
    svd_form = root @ numerics.pinv(X @ root)
    err = np.linalg.norm(piece - svd_form) / np.linalg.norm(svd_form)
    return _assert(err <= 1e-9 * tol, f"pseudoinverse-form deviation {err:.2e}")


def _check_risk_ordering(rng, tol):
    cov = CovarianceSpec.strong_weak(rho1=2.0, rho2=0.25, psi1=0.5)
    prior = PriorSpec.autoregressive(0.6)
    config = ProblemConfig(n=12, d=24, signal=2.0, noise_var=1.0, seed=7)
    reports = {}
    for label, factory in [
        ("best_possible", lambda inst, g: interpolators.best_possible(
            inst.X, inst.sigma, inst.w_star, inst.xi)),
        ("optimal", lambda inst, g: interpolators.optimal_response_linear(
            inst.X, inst.sigma, inst.phi, inst.config.snr)),
        ("min_norm", lambda inst, g: interpolators.min_norm(inst.X)),
        ("best_variance", lambda inst, g: interpolators.best_variance(inst.X, inst.sigma)),
        ("optimal_bias", lambda inst, g: interpolators.optimal_bias(inst.X, inst.phi)),
    ]:
        reports[label] = risk.monte_carlo_expected_risk(
            factory, config, cov, prior, replicates=200,
            rng=np.random.default_rng(rng.integers(0, 2**31)),
        )
    opt = reports["optimal"]
    slack = lambda a, b: a.excess_risk <= b.excess_risk + 2.0 * tol * (a.stderr + b.stderr)
    ok = (
        slack(reports["best_possible"], opt)
        and slack(opt, reports["min_norm"])
        and slack(opt, reports["best_variance"])
        and slack(opt, reports["optimal_bias"])
    )
    means = {k: round(v.excess_risk, 4) for k, v in reports.items()}
    return _assert(ok, f"mean excess risks {means}")


# ---------------------------------------------------------------------------
# optim
# ---------------------------------------------------------------------------


def _check_implicit_bias(rng, tol):
    inst = _random_regime(rng, n=5, d=12)
    w0 = rng.standard_normal(12)
    limit, trace = optim.precond_gd(
        inst.X, inst.y, inst.sigma, w0, optim.GDConfig(residual_tol=1e-12, max_iters=50_000)
    )
    closed = optim.implicit_bias_closed_form(inst.X, inst.sigma, w0, inst.y)
    err = np.linalg.norm(limit - closed) / np.linalg.norm(closed)
    return _assert(
        trace.converged and err <= 1e-6 * tol,
        f"closed-form deviation {err:.2e} after {trace.iterations_used} iters",
    )


def _check_variance_start_independence(rng, tol):
    inst = _random_regime(rng, n=6, d=15)
    piece = interpolators.variance_optimal_piece(inst.X, inst.sigma)
    noise_fit = piece @ inst.xi
    worst = 0.0
    for _ in range(3):
        w0 = rng.standard_normal(15)
        limit = optim.implicit_bias_closed_form(inst.X, inst.sigma, w0, inst.y)
        mean_limit = optim.implicit_bias_closed_form(
            inst.X, inst.sigma, w0, inst.X @ inst.w_star
        )
        worst = max(worst, np.linalg.norm((limit - mean_limit) - noise_fit))
    return _assert(worst <= 1e-8 * tol, f"noise-fit deviation {worst:.2e}")


def _check_monotone_residual(rng, tol):
    inst = _random_regime(rng, n=6, d=15)
    X, y, sigma = inst.X, inst.y, inst.sigma
    inv = np.linalg.inv(sigma)
    eta = 0.5 * X.shape[0] / np.linalg.eigvalsh(X @ inv @ X.T).max()
    w = rng.standard_normal(15)
    prev = np.linalg.norm(X @ w - y)
    ok = True
    for _ in range(200):
        w = w - eta * inv @ optim.grad_empirical_risk(w, X, y)
        cur = np.linalg.norm(X @ w - y)
        ok = ok and cur <= prev * (1 + 1e-12 / tol)
        prev = cur
    return _assert(ok, f"residual monotone over 200 iterations (final {prev:.2e})")


# ---------------------------------------------------------------------------
# covest
# ---------------------------------------------------------------------------


def _check_precondition_collapse(rng, tol):
    X = rng.standard_normal((10, 25))
    y = rng.standard_normal(10)
    w_ref = interpolators.min_norm(X).matrix @ y
    worst = 0.0
    for sigma_e in [
        covest.ridge_empirical(X, 0.1),
        covest.ridge_empirical(X, 1.0),
        covest.ridge_empirical(X, 10.0),
        covest.ledoit_wolf(X),
    ]:
        w = interpolators.best_variance(X, sigma_e).matrix @ y
        worst = max(worst, np.linalg.norm(w - w_ref) / np.linalg.norm(w_ref))
    return _assert(worst <= 1e-8 * tol, f"collapse deviation {worst:.2e}")


def _check_glasso_spd(rng, tol):
    X = rng.standard_normal((30, 45))
    worst_sym, worst_eig = 0.0, np.inf
    for alpha in (0.1, 0.25, 0.5):
        sigma_e = covest.graphical_lasso(X, covest.GlassoConfig(alpha=alpha))
        worst_sym = max(worst_sym, np.abs(sigma_e - sigma_e.T).max())
        worst_eig = min(worst_eig, np.linalg.eigvalsh(sigma_e).min())
    return _assert(
        worst_sym == 0.0 and worst_eig > 0.0,
        f"symmetric, min eigenvalue {worst_eig:.3e}",
    )


def _check_empirical_interpolation(rng, tol):
    inst = _random_regime(rng, n=8, d=18)
    X, y = inst.X, inst.y
    junk_sigma = _spd(rng, 18)
    junk_phi = _spd(rng, 18)
    worst = 0.0
    for est in (
        covest.empirical_optimal(X, junk_sigma, 3.7),
        covest.empirical_optimal_prior(X, junk_sigma, 0.2, junk_phi),
    ):
        resid = np.linalg.norm(X @ (est.matrix @ y) - y) / np.linalg.norm(y)
        worst = max(worst, resid)
    return _assert(worst <= 1e-8 * tol, f"worst interpolation residual {worst:.2e}")


# ---------------------------------------------------------------------------
# risk
# ---------------------------------------------------------------------------


def _check_decomposition(rng, tol):
    inst = _random_regime(rng, n=6, d=14)
    X, sigma, phi = inst.X, inst.sigma, inst.phi
    signal, noise_var = inst.config.signal, inst.config.noise_var
    Q = interpolators.optimal_response_linear(X, sigma, phi, inst.config.snr).matrix
    B, V = risk.bias_variance(Q, X, sigma, phi, signal, noise_var)
    draws = 10_000
    root = numerics.sqrt_spd(phi)
    ws = math.sqrt(signal / 14) * (rng.standard_normal((draws, 14)) @ root)
    # conditional risk averaged over the prior, vectorized over draws
    mis = ws @ (Q @ X - np.eye(14)).T
    vals = np.einsum("ij,ij->i", mis @ sigma, mis) + noise_var * risk.variance_term(Q, sigma)
    mc, se = vals.mean(), vals.std(ddof=1) / math.sqrt(draws)
    err = abs(B + V - mc)
    return _assert(err <= 3.0 * se / tol + 1e-12, f"|B+V - MC| = {err:.2e} vs 3se = {3*se:.2e}")


def _check_variance_rotation_invariance(rng, tol):
    inst = _random_regime(rng, n=6, d=14)
    Q = interpolators.min_norm(inst.X).matrix
    u, _, vt = np.linalg.svd(rng.standard_normal((6, 6)))
    rot = u @ vt
    v1 = risk.variance_term(Q, inst.sigma)
    v2 = risk.variance_term(Q @ rot, inst.sigma)
    return _assert(abs(v1 - v2) <= 1e-9 * tol * max(v1, 1.0), f"|V(Q)-V(QU)| = {abs(v1-v2):.2e}")


# ---------------------------------------------------------------------------
# rmt
# ---------------------------------------------------------------------------


def _check_silverstein(rng, tol):
    worst = 0.0
    for rho1, rho2, psi1, gamma in [
        (1.0, 1.0, 0.5, 2.0),
        (4.0, 1.0, 0.5, 2.0),
        (16.0, 0.25, 0.3, 1.5),
        (9.0, 0.5, 0.8, 3.0),
    ]:
        params = rmt.StrongWeakParams(rho1, rho2, psi1, gamma)
        v0 = rmt.companion_stieltjes_zero(params)
        worst = max(worst, abs(rmt.silverstein_gap(params, v0)))
    return _assert(worst <= 1e-10 * tol, f"worst fixed-point residual {worst:.2e}")


def _check_finite_sample_agreement(rng, tol):
    n, gamma = 1000, 2.0
    replicates = 24
    worst = 0.0
    for rho1 in (1.0, 4.0, 16.0):
        for rho2 in (0.25, 1.0):
            params = rmt.StrongWeakParams(rho1, rho2, 0.5, gamma)
            bias_pred, var_pred = rmt.min_norm_asymptotics(params, 1.0, 1.0)
            bv_pred = rmt.best_variance_asymptotics(params, 1.0, 1.0)
            cov = CovarianceSpec.strong_weak(rho1=rho1, rho2=rho2, psi1=0.5)
            config = ProblemConfig(n=n, d=2 * n, signal=1.0, noise_var=1.0, seed=0)
            mn = risk.monte_carlo_expected_risk(
                lambda inst, g: interpolators.min_norm(inst.X),
                config, cov, PriorSpec.identity(), replicates,
                rng=np.random.default_rng(rng.integers(0, 2**31)),
            )
            bv = risk.monte_carlo_expected_risk(
                lambda inst, g: interpolators.best_variance(inst.X, inst.sigma),
                config, cov, PriorSpec.identity(), replicates,
                rng=np.random.default_rng(rng.integers(0, 2**31)),
            )
            worst = max(
                worst,
                abs(mn.bias - bias_pred) / bias_pred,
                abs(mn.variance - var_pred) / var_pred,
                abs(bv.excess_risk - bv_pred) / bv_pred,
            )
    return _assert(worst <= 0.10 * tol, f"worst relative gap {worst:.3f} (tolerance 0.10)")


def _check_divergence_regimes(rng, tol):
    # rho2 -> 0: min-norm risk blows up, best-variance stays bounded
    mn_risks = []
    for rho2 in (1.0, 1e-2, 1e-4):
        params = rmt.StrongWeakParams(1.0, rho2, 0.5, 2.0)
        mn_risks.append(sum(rmt.min_norm_asymptotics(params, 1.0, 1.0)))
        bv = rmt.best_variance_asymptotics(params, 1.0, 1.0)
        if bv > 0.5 * 1.0 + 1.0:
            raise AssertionError(f"best-variance bound violated at rho2={rho2}: {bv}")
    increasing = mn_risks[0] < mn_risks[1] < mn_risks[2]
    # rho1 -> inf: best-variance grows ~rho1, min-norm ~sqrt(rho1)
    params_a = rmt.StrongWeakParams(100.0, 1.0, 0.5, 2.0)
    params_b = rmt.StrongWeakParams(10_000.0, 1.0, 0.5, 2.0)
    bv_rate = rmt.best_variance_asymptotics(params_b, 1.0, 1.0) / rmt.best_variance_asymptotics(
        params_a, 1.0, 1.0
    )
    mn_rate = sum(rmt.min_norm_asymptotics(params_b, 1.0, 1.0)) / sum(
        rmt.min_norm_asymptotics(params_a, 1.0, 1.0)
    )
    ok = increasing and bv_rate > 50.0 and 5.0 < mn_rate < 20.0
    return _assert(ok, f"min-norm divergence {mn_risks[-1]:.1f}; growth rates {bv_rate:.1f}/{mn_rate:.1f}")


# ---------------------------------------------------------------------------
# rf
# ---------------------------------------------------------------------------


def _rf_instance(rng, n=9, d=4, width=14, activation="tanh"):
    model = rf.make_rf_model(width, d, activation, rng)
    X = sample_sphere(n, d, rng)
    w_star = math.sqrt(2.0 / d) * rng.standard_normal(d)
    xi = 0.5 * rng.standard_normal(n)
    y = X @ w_star + xi
    Z = rf.rf_features(X, model)
    moments = rf.estimate_second_moments(model, 6000, rng)
    return model, X, w_star, y, Z, moments


def _check_rf_equivalence(rng, tol):
    _, X, _, y, Z, moments = _rf_instance(rng)
    snr = 8.0
    direct = rf.rf_optimal(X, Z, moments, None, snr).matrix @ y
    a0 = rf.rf_init(moments, None, X, snr, y)
    via_gd, trace = rf.rf_pgd(
        Z, y, moments.sigma_z, a0, optim.GDConfig(residual_tol=1e-12, max_iters=50_000)
    )
    err = np.linalg.norm(via_gd - direct) / np.linalg.norm(direct)
    return _assert(
        trace.converged and err <= 1e-6 * tol,
        f"gradient-descent deviation {err:.2e} after {trace.iterations_used} iters",
    )


def _check_rf_ordering(rng, tol):
    n, d, width = 24, 8, 40
    risks = {"rf_optimal": [], "rf_min_norm": []}
    for _ in range(40):
        model = rf.make_rf_model(width, d, "relu", rng)
        X = sample_sphere(n, d, rng)
        w_star = math.sqrt(5.0 / d) * rng.standard_normal(d)
        y = X @ w_star + rng.standard_normal(n)
        Z = rf.rf_features(X, model)
        moments = rf.estimate_second_moments(model, 4000, rng)
        a_opt = rf.rf_optimal(X, Z, moments, None, 5.0).matrix @ y
        a_min = rf.rf_min_norm(Z).matrix @ y
        risks["rf_optimal"].append(rf.rf_excess_risk(a_opt, w_star, moments))
        risks["rf_min_norm"].append(rf.rf_excess_risk(a_min, w_star, moments))
    opt = np.array(risks["rf_optimal"])
    base = np.array(risks["rf_min_norm"])
    se = (opt.std(ddof=1) + base.std(ddof=1)) / math.sqrt(len(opt))
    ok = opt.mean() <= base.mean() + 2.0 * se * tol
    return _assert(ok, f"means {opt.mean():.3f} <= {base.mean():.3f} + 2se")


def _check_rf_moment_stability(rng, tol):
    model, X, w_star, y, Z, moments = _rf_instance(rng, n=12, d=5, width=20)
    m2 = rf.estimate_second_moments(model, 2 * moments.sample_count, rng)
    r1 = rf.rf_excess_risk(rf.rf_optimal(X, Z, moments, None, 8.0).matrix @ y, w_star, moments)
    r2 = rf.rf_excess_risk(rf.rf_optimal(X, Z, m2, None, 8.0).matrix @ y, w_star, m2)
    rel = abs(r1 - r2) / max(r1, 1e-12)
    return _assert(rel <= 0.02 * tol, f"risk shift {rel:.4f} when doubling samples")


# ---------------------------------------------------------------------------
# experiments / cli
# ---------------------------------------------------------------------------


def _check_experiment_determinism(rng, tol):
    spec = experiments.builtin_spec(
        "fig1",
        scale=0.02,
        replicates=2,
        estimators=("min_norm", "best_variance"),
        sweep_values=(1.0, 0.1),
    )
    a = experiments.rows_to_csv(experiments.run_experiment(spec))
    b = experiments.rows_to_csv(experiments.run_experiment(spec))
    return _assert(a == b and len(a) > 0, f"byte-identical CSV ({len(a)} bytes)")


CHECKS: tuple[tuple[str, str, Callable], ...] = (
    ("numerics", "penrose_conditions", _check_penrose),
    ("numerics", "pinv_idempotence_and_gram_identity", _check_pinv_idempotent_and_gram),
    ("numerics", "inv_sqrt_reconstruction", _check_inv_sqrt),
    ("model", "strong_weak_spectrum", _check_strong_weak_spectrum),
    ("model", "sampling_reproducible", _check_sampling_reproducible),
    ("interpolators", "interpolation_constraint", _check_interpolation),
    ("interpolators", "square_case_uniqueness", _check_square_uniqueness),
    ("interpolators", "variance_piece_identity", _check_variance_piece_identity),
    ("interpolators", "risk_ordering", _check_risk_ordering),
    ("optim", "implicit_bias_equivalence", _check_implicit_bias),
    ("optim", "variance_start_independence", _check_variance_start_independence),
    ("optim", "monotone_residual", _check_monotone_residual),
    ("covest", "preconditioning_collapse", _check_precondition_collapse),
    ("covest", "glasso_spd", _check_glasso_spd),
    ("covest", "empirical_interpolation", _check_empirical_interpolation),
    ("risk", "decomposition_consistency", _check_decomposition),
    ("risk", "variance_rotation_invariance", _check_variance_rotation_invariance),
    ("rmt", "silverstein_fixed_point", _check_silverstein),
    ("rmt", "finite_sample_agreement", _check_finite_sample_agreement),
    ("rmt", "divergence_regimes", _check_divergence_regimes),
    ("rf", "gd_equivalence", _check_rf_equivalence),
    ("rf", "risk_ordering", _check_rf_ordering),
    ("rf", "moment_stability", _check_rf_moment_stability),
    ("cli", "experiment_determinism", _check_experiment_determinism),
)


def run_invariant_suite(
    seed: int = 0, tol_scale: float = 1.0, modules: Optional[Sequence[str]] = None
) -> InvariantReport:
    """Run the registered invariant checks; failures are reported, not raised.

    ``modules`` restricts the run to the named modules (all by default).
    """
    results = []
    for i, (module, name, fn) in enumerate(CHECKS):
        if modules is not None and module not in modules:
            continue
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        try:
            detail = fn(rng, tol_scale)
            results.append(CheckResult(module, name, True, detail))
        except Exception as exc:  # failures are data
            results.append(CheckResult(module, name, False, f"{type(exc).__name__}: {exc}"))
    return InvariantReport(seed=seed, results=tuple(results))
