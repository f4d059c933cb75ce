"""Acceptance criteria 1-8 at their stated tolerances.

Each test prints (and records for the terminal summary) one
``criterion k: PASS|FAIL | detail`` line, then asserts it. Criteria 1-7 share
two seeded sweeps computed once per module.
"""

import time

import numpy as np
import pytest

from mclab.convex import ConvexOptions, solve_convex, solve_usvt, usvt_threshold
from mclab.duality import injectivity_constant
from mclab.harness import ExperimentConfig, run_sweep, run_trial, trial_seeds
from mclab.model import gen_truth, observe, sample_mask
from mclab.nonconvex import FactorPair, GdOptions, balanced_factorization, gd_solve, gradient_f, objective_f
from mclab.nonconvex import spectral_init
from mclab.operators import (TangentSpace, nuclear_norm, procrustes_align, svt, tangent_complement,
                             tangent_project)

slow = pytest.mark.slow

TOL_MAP, TOL_GRAD = 1e-10, 1e-9
DESK = dict(n=200, r=5, p=0.2, spectrum=("flat",), trials=5, lambda_c=5.0, tol_grad_map=TOL_MAP,
            tol_grad=TOL_GRAD, max_iters=20000, t_max=20000)
DECADE = (1e-4, 2.15e-4, 4.64e-4, 1e-3)
GAP_CONSTANT = 1.0  # global calibration constant for the gap envelope, frozen


@pytest.fixture(scope="module")
def proximity_sweep():
    cfg = ExperimentConfig(sigma_grid=(1e-4, 1e-3), estimators=("convex", "convex_rank_r", "nonconvex_spectral"),
                           certify=True, **DESK)
    t0 = time.perf_counter()
    result = run_sweep(cfg, write=False)
    return result, time.perf_counter() - t0


@pytest.fixture(scope="module")
def decade_sweep():
    cfg = ExperimentConfig(sigma_grid=DECADE, estimators=("convex", "constrained", "usvt"), certify=False, **DESK)
    t0 = time.perf_counter()
    result = run_sweep(cfg, write=False)
    return result, time.perf_counter() - t0


def _records(result, sigma=None):
    return [r for r in result.records if sigma is None or r.sigma == sigma]


@slow
def test_criterion_1_proximity(proximity_sweep, verdict_line):
    result, wall = proximity_sweep
    parts, ok = [], wall <= 300
    for sigma in result.config.sigma_grid:
        dist = result.row("convex", sigma)["pair_dist"]
        err_c = result.row("convex", sigma)["rel_fro"]
        err_n = result.row("nonconvex_spectral", sigma)["rel_fro"]
        good = dist <= 1e-5 and dist <= 1e-2 * min(err_c, err_n)
        ok &= good
        per = ",".join(f"{r.pair_dist:.1e}" for r in _records(result, sigma))
        parts.append(f"sigma={sigma:g}: mean dist {dist:.2e} (trials {per}) vs errors {err_c:.2e}/{err_n:.2e}")
    verdict_line("criterion 1", ok, "; ".join(parts) + f"; wall {wall:.0f}s")
    assert ok


@slow
def test_criterion_2_linear_scaling(decade_sweep, verdict_line):
    result, wall = decade_sweep
    logs = np.log(result.config.sigma_grid)
    slopes = {k: float(np.polyfit(logs, np.log(result.series("convex", k)), 1)[0])
              for k in ("rel_fro", "rel_spec", "rel_inf")}
    ok = all(0.85 <= s <= 1.15 for s in slopes.values()) and wall <= 600
    verdict_line("criterion 2", ok, ", ".join(f"{k} slope {v:.3f}" for k, v in slopes.items()) + f"; wall {wall:.0f}s")
    assert ok


@slow
def test_criterion_3_frobenius_constant(decade_sweep, verdict_line):
    result, _ = decade_sweep
    cfg = result.config
    sigma_min = 1.0  # flat spectrum
    ratios = [r.errors["convex"].rel_fro / ((r.sigma / sigma_min) * np.sqrt(cfg.n / cfg.p))
              for r in result.records]
    ok = max(ratios) <= 10
    verdict_line("criterion 3", ok, f"constant range [{min(ratios):.2f}, {max(ratios):.2f}] over {len(ratios)} trials")
    assert ok


@slow
def test_criterion_4_near_low_rank(proximity_sweep, verdict_line):
    result, _ = proximity_sweep
    bound = 10 * TOL_MAP
    bad = []
    for r in result.records:
        a, b = r.errors["convex"], r.errors["convex_rank_r"]
        diff = max(abs(a.rel_fro - b.rel_fro), abs(a.rel_spec - b.rel_spec), abs(a.rel_inf - b.rel_inf))
        if not (r.diagnostics["sv_ratio"] <= bound and diff <= 2 * bound):
            bad.append(f"seed {r.seed} sigma {r.sigma:g}: ratio {r.diagnostics['sv_ratio']:.1e}, diff {diff:.1e}")
    ok = not bad
    worst = max(r.diagnostics["sv_ratio"] for r in result.records)
    detail = f"{len(result.records) - len(bad)}/{len(result.records)} trials with ratio <= {bound:g}, worst {worst:.1e}"
    verdict_line("criterion 4", ok, detail + ("; " + "; ".join(bad) if bad else ""))
    assert ok


@slow
def test_criterion_5_dual_certificate(proximity_sweep, verdict_line):
    result, _ = proximity_sweep
    certs = [r.certificate for r in result.records]
    assert all(c is not None for c in certs)
    w_ok = sum(c.w_spectral < 1 for c in certs)
    pt_ok = sum(c.pt_residual_fro <= 1e-6 for c in certs)
    unique = sum(c.unique_optimum for c in certs)
    n = len(certs)
    ok = w_ok == n and pt_ok == n and unique >= 0.9 * n
    ws = ",".join(f"{c.w_spectral:.2f}" for c in certs)
    verdict_line("criterion 5", ok, f"||W||<1 on {w_ok}/{n} ({ws}); tangent residual ok on {pt_ok}/{n}; "
                                    f"unique optimum {unique}/{n}")
    assert ok


@slow
def test_criterion_6_gap_domination(proximity_sweep, verdict_line):
    result, _ = proximity_sweep
    recs = result.records
    qualifying = [r for r in recs if r.certificate.gap_bound_valid]
    dominated = [r for r in qualifying if GAP_CONSTANT * r.certificate.gap_bound >= r.diagnostics["pair_gap_abs"]]
    # the oracle noise condition is reported alongside, since it decides qualification
    noise_ok = sum(bool(r.certificate.cond_noise) for r in recs)
    lam_ratio = np.mean([r.certificate.noise_norm / r.lam for r in recs])
    # non-oracle hypotheses only: small gradient, factor spectrum, positive injectivity
    partial = [r for r in recs if r.certificate.small_gradient and r.certificate.factor_sv_in_range
               and r.certificate.c_inj > 0]
    partial_dom = sum(GAP_CONSTANT * r.certificate.gap_bound >= r.diagnostics["pair_gap_abs"] for r in partial)
    ok = bool(qualifying) and len(dominated) == len(qualifying)
    detail = (f"C={GAP_CONSTANT:g}; {len(qualifying)}/{len(recs)} trials meet every hypothesis "
              f"(noise condition held on {noise_ok}, mean ||P_Omega(E)||/lambda = {lam_ratio:.3f} vs 1/8 needed)")
    if not qualifying:
        detail += "; nothing to dominate, criterion not demonstrated"
    detail += f"; non-oracle hypotheses only: dominated on {partial_dom}/{len(partial)}"
    verdict_line("criterion 6", ok, detail)
    assert ok


@slow
def test_criterion_7_comparison(decade_sweep, verdict_line):
    result, _ = decade_sweep
    grid = result.config.sigma_grid
    lo, hi = grid[0], grid[-1]
    paired = np.array([a.errors["usvt"].rel_fro - b.errors["usvt"].rel_fro
                       for a, b in zip(_records(result, lo), _records(result, hi))])
    se = paired.std(ddof=1) / np.sqrt(paired.size) if paired.size > 1 else 0.0
    usvt_ok = paired.mean() >= -2 * se
    drop = result.row("convex", hi)["rel_fro"] / result.row("convex", lo)["rel_fro"]
    spread = max(abs(result.row("constrained", s)[k] / result.row("convex", s)[k] - 1)
                 for s in grid for k in ("rel_fro", "rel_inf"))
    ok = usvt_ok and drop >= 5 and spread <= 0.05
    usvt_levels = result.series("usvt", "rel_fro")
    detail = (f"usvt smallest-minus-largest sigma {paired.mean():+.2e} (2 se {2 * se:.1e}); "
              f"convex drop {drop:.2f}x; constrained vs convex max rel diff {spread:.2%}")
    if np.all(usvt_levels == 1.0):
        detail += "; usvt estimate is identically zero at this size with the default threshold"
    verdict_line("criterion 7", ok, detail)
    assert ok


def _usvt_flat_at(scale, cfg, seeds):
    out = {}
    for sigma in (cfg.sigma_grid[0], cfg.sigma_grid[-1]):
        errs = []
        for seed in seeds:
            ts, ms, ns = trial_seeds(seed)
            truth = gen_truth(cfg.n, cfg.r, "flat", ts)
            obs = observe(truth, sample_mask(cfg.n, cfg.p, ms), sigma, ns, p=cfg.p)
            tau = usvt_threshold(cfg.n, cfg.p, sigma, float(np.abs(truth.M_star).max()), scale)
            Z = solve_usvt(obs, tau)
            errs.append(np.linalg.norm(Z - truth.M_star) / np.linalg.norm(truth.M_star))
        out[sigma] = float(np.mean(errs))
    return out


@slow
def test_usvt_flat_with_nontrivial_threshold(decade_sweep, verdict_line):
    # supplementary: half the default threshold keeps a nonzero estimate at n=200
    result, _ = decade_sweep
    cfg = result.config
    levels = _usvt_flat_at(0.25, cfg, range(cfg.base_seed, cfg.base_seed + cfg.trials))
    lo, hi = cfg.sigma_grid[0], cfg.sigma_grid[-1]
    ok = 0 < levels[lo] < 1 and levels[lo] >= levels[hi] * (1 - 1e-3)
    verdict_line("supplementary usvt scale 0.25", ok,
                 f"rel_fro {levels[lo]:.4f} at sigma={lo:g}, {levels[hi]:.4f} at sigma={hi:g}")
    assert ok


@slow
def test_full_scale_proximity(verdict_line):
    # supplementary: one trial at n=1000
    cfg = ExperimentConfig(**{**DESK, "n": 1000, "trials": 1}, sigma_grid=(1e-4,),
                           estimators=("convex", "nonconvex_spectral"), certify=False)
    rec = run_trial(cfg, 1e-4, 0)
    ok = rec.pair_dist is not None and rec.pair_dist <= 1e-5
    verdict_line("supplementary n=1000", ok, f"sigma=1e-4 seed 0: dist {rec.pair_dist:.2e}, "
                                             f"rel_fro {rec.errors['convex'].rel_fro:.3e}, "
                                             f"sv ratio {rec.diagnostics['sv_ratio']:.1e}")
    assert ok


# criterion 8: oracle and property suite

def _orth(rng, n, r):
    return np.linalg.qr(rng.standard_normal((n, r)))[0]


def _fd_error(seed):
    rng = np.random.default_rng(seed)
    truth = gen_truth(6, 2, seed=seed)
    obs = observe(truth, sample_mask(6, 0.6, seed=seed + 1), 0.1, seed=seed + 2, p=0.6)
    pair = FactorPair(rng.standard_normal((6, 2)), rng.standard_normal((6, 2)))
    lam, p, h = 0.3, 0.6, 1e-6
    ana = np.vstack(gradient_f(pair, obs, lam, p)).ravel()
    F = pair.stacked().ravel()
    num = np.empty_like(F)
    for k in range(F.size):
        up, dn = F.copy(), F.copy()
        up[k] += h
        dn[k] -= h
        fu = objective_f(FactorPair(up.reshape(12, 2)[:6], up.reshape(12, 2)[6:]), obs, lam, p)
        fd = objective_f(FactorPair(dn.reshape(12, 2)[:6], dn.reshape(12, 2)[6:]), obs, lam, p)
        num[k] = (fu - fd) / (2 * h)
    return float(np.linalg.norm(num - ana) / np.linalg.norm(ana))


def _oracle_checks():
    rng = np.random.default_rng(8)
    checks = {}

    checks["finite differences"] = max(_fd_error(s) for s in range(5)) <= 1e-5

    Z, tau = rng.standard_normal((5, 5)), 0.3
    W0, _ = svt(Z, tau)
    base = 0.5 * np.sum((W0 - Z) ** 2) + tau * nuclear_norm(W0)
    checks["svt sampling oracle"] = all(
        base <= 0.5 * np.sum((W - Z) ** 2) + tau * nuclear_norm(W) + 1e-14
        for W in (W0 + rng.uniform(-1e-3, 1e-3, (5, 5)) for _ in range(1000)))

    ok = True
    for _ in range(20):
        T = TangentSpace(_orth(rng, 8, 2), _orth(rng, 8, 2))
        H = rng.standard_normal((8, 8))
        PH = tangent_project(T, H)
        ok &= np.max(np.abs(tangent_project(T, PH) - PH)) <= 1e-10
        ok &= abs(np.sum(PH * tangent_complement(T, H))) <= 1e-10
    checks["tangent projector"] = bool(ok)

    ok = True
    for _ in range(50):
        M = rng.standard_normal((10, 2)) @ rng.standard_normal((2, 10))
        pair, _ = balanced_factorization(M, r=2)
        G = rng.standard_normal((2, 2)) + 0.5 * np.eye(2)
        ext = FactorPair(pair.X @ G, pair.Y @ np.linalg.inv(G).T)
        ok &= balanced_factorization(M, external=ext)[1].holds
    checks["balancing lemma (50 instances)"] = bool(ok)

    T = TangentSpace(_orth(rng, 12, 2), _orth(rng, 12, 2))
    omega = sample_mask(12, 0.6, seed=12)
    dense = injectivity_constant(T, omega, 0.6, method="dense")
    iterative = injectivity_constant(T, omega, 0.6, method="lanczos")
    checks["injectivity dense vs iterative"] = abs(dense - iterative) <= 1e-6

    ok = True
    for _ in range(10):
        F, F_ref = rng.standard_normal((20, 3)), rng.standard_normal((20, 3))
        H = procrustes_align(F, F_ref)
        best = np.linalg.norm(F @ H - F_ref)
        ok &= all(best <= np.linalg.norm(F @ _orth(rng, 3, 3) - F_ref) + 1e-12 for _ in range(32))
    checks["procrustes optimality"] = bool(ok)

    truth = gen_truth(40, 2, seed=1)
    obs = observe(truth, sample_mask(40, 0.5, seed=2), 1e-3, seed=3, p=0.5)
    lam = 5e-3 * np.sqrt(20)
    _, crep = solve_convex(obs, ConvexOptions(lam=lam, tol_grad_map=1e-9, max_iters=5000))
    _, grep = gd_solve(spectral_init(obs, 2), obs, GdOptions(lam=lam, p=0.5, tol_grad=1e-9))
    checks["monotone descent"] = crep.is_monotone() and grep.is_monotone()

    ok = True
    for r in (1, 2, 3):
        M = rng.standard_normal((9, r)) @ rng.standard_normal((r, 9))
        pair, _ = balanced_factorization(M, r=r)
        ok &= abs(0.5 * (np.sum(pair.X**2) + np.sum(pair.Y**2)) - nuclear_norm(M)) <= 1e-10
    checks["nuclear norm factor identity"] = bool(ok)
    return checks


def test_criterion_8_oracle_suite(verdict_line):
    t0 = time.perf_counter()
    checks = _oracle_checks()
    wall = time.perf_counter() - t0
    ok = all(checks.values()) and wall < 30
    failed = [k for k, v in checks.items() if not v]
    detail = f"{sum(checks.values())}/{len(checks)} checks in {wall:.1f}s"
    verdict_line("criterion 8", ok, detail + (f"; failed: {', '.join(failed)}" if failed else ""))
    assert ok
