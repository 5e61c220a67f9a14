"""Acceptance suite: one test per criterion, each printing a pass/fail line.

The lines are collected by the ``acceptance_report`` fixture and shown in the
"acceptance criteria" section of the pytest terminal summary.
"""
import time

import numpy as np
import pytest

from fragsim.cli import load_scenario
from fragsim.integrator import IntegratorConfig, expm_oracle, integrate
from fragsim.observables import mass_balance_residuals
from fragsim.operator import apply, apply_adjoint, build_generator, decay_resolvent_apply
from fragsim.rates import KernelSpec, RateFamily, RateModel, check_kernel_conservation, theta
from fragsim.spectral import project, spectral_data, trajectory_gap_series

from conftest import MODELS, SCENARIOS, monodisperse
from oracles import inverse_iteration, mass

K = KernelSpec.uniform_binary()
ALL = sorted(MODELS)


def _run_bundled(name):
    sc = load_scenario(SCENARIOS / f"{name}.json")
    G = build_generator(sc.model, sc.kernel, sc.N)
    return sc, G, integrate(G, sc.f0, sc.integrator)


def test_criterion_1_lambda1(acceptance_report):
    start = time.perf_counter()
    sd = spectral_data(MODELS["sec4_3"], K, 64)
    wall = time.perf_counter() - start
    ok = sd.lambda1 == -2.0 and wall < 1.0
    acceptance_report(1, "lambda1 reproduction", ok, f"lambda1={sd.lambda1!r} N0={sd.N0} wall={wall:.3f}s")
    assert ok


@pytest.mark.parametrize("name", ["sec4_3", "sec4_4"])
def test_criterion_2_gap_rate(acceptance_report, name):
    start = time.perf_counter()
    sc, G, tr = _run_bundled(name)
    sd = spectral_data(sc.model, sc.kernel, sc.N)
    gs = trajectory_gap_series(tr, sd, sc.f0, sc.fit_window)
    wall = time.perf_counter() - start
    th = np.sort(theta(sc.model, sc.N))
    expected = -(th[1] - th[0])
    rate = gs.fitted_rate
    ok = rate is not None and abs(rate - expected) <= 0.1 * abs(expected) and wall < 30
    acceptance_report(
        2,
        f"asynchronous growth rate ({name})",
        ok,
        f"fitted={rate} expected={expected:g} window={gs.fit_window} wall={wall:.2f}s",
    )
    assert ok


def test_criterion_3_oracle_equivalence(acceptance_report):
    start = time.perf_counter()
    worst = 0.0
    where = None
    for name in ALL:
        for N in (4, 8, 12):
            G = build_generator(MODELS[name], K, N)
            f0 = np.zeros(N)
            f0[-1] = 1.0
            # states fall to ~1e-17 by t = 20, so the absolute tolerance must sit far below them
            cfg = IntegratorConfig(t_end=20.0, rtol=1e-8, atol=1e-30, sample_every=1.0)
            tr = integrate(G, f0, cfg)
            for t in (1.0, 5.0, 20.0):
                k = int(np.flatnonzero(tr.t == t)[0])
                ref = expm_oracle(G, f0, t)
                err = mass(tr.f[k] - ref) / mass(ref)
                if err > worst:
                    worst, where = err, (name, N, t)
    wall = time.perf_counter() - start
    ok = worst <= 1e-6 and wall < 10
    acceptance_report(3, "oracle equivalence", ok, f"worst_rel_err={worst:.2e} at {where} wall={wall:.2f}s")
    assert ok


def test_criterion_4_resolvent_bound(acceptance_report):
    N = 64
    violations = 0
    worst_res = 0.0
    rng = np.random.default_rng(20)
    for name in ALL:
        r, d, a = MODELS[name].arrays(N)
        th = r + d + a
        for lam in (0.1, 1.0, 10.0):
            for _ in range(100):
                f = rng.random(N)
                u = decay_resolvent_apply(MODELS[name], N, lam, f)
                if not mass(u) <= mass(f) / lam:
                    violations += 1
                res = (lam + th) * u
                res[:-1] -= r[1:] * u[1:]
                worst_res = max(worst_res, mass(res - f) / mass(f))
    ok = violations == 0 and worst_res <= 1e-10
    acceptance_report(4, "resolvent bound", ok, f"violations={violations} worst_residual={worst_res:.2e}")
    assert ok


def test_criterion_5_mass_balance(acceptance_report):
    m = MODELS["sec4_3"]
    G = build_generator(m, K, 64)
    tr = integrate(G, monodisperse(64), IntegratorConfig(t_end=20.0, rtol=1e-8, atol=1e-30))
    t, rel = mass_balance_residuals(tr, m)
    worst = float(np.max(rel))
    ok = worst <= 0.01
    acceptance_report(5, "mass balance", ok, f"max_rel_err={worst:.2e} over {len(t)} interior steps")
    assert ok


def test_criterion_6_kernel_conservation(acceptance_report):
    rep = check_kernel_conservation(K, 1024)
    ok = rep.max_deviation <= 1e-12
    acceptance_report(6, "kernel conservation", ok, f"max_deviation={rep.max_deviation:.2e} (j={rep.worst_j})")
    assert ok


def test_criterion_7_eigen_residuals(acceptance_report):
    worst_res = 0.0
    for name in ("sec4_3", "sec4_4"):
        G = build_generator(MODELS[name], K, 64)
        sd = spectral_data(MODELS[name], K, 64)
        worst_res = max(
            worst_res,
            mass(apply(G, sd.e_right) - sd.lambda1 * sd.e_right) / mass(sd.e_right),
            mass(apply_adjoint(G, sd.e_left) - sd.lambda1 * sd.e_left) / mass(sd.e_left),
        )
    models = dict(MODELS)
    models["interior_min"] = RateModel(
        RateFamily.tabulated([1.0] * 12),
        RateFamily.tabulated([4.0] + [0.0] * 11),
        RateFamily.tabulated([0.0, 2.0] + list(range(3, 13))),
    )
    worst_oracle = 0.0
    for name, m in models.items():
        for N in (4, 8, 12):
            D = build_generator(m, K, N).dense()
            sd = spectral_data(m, K, N)
            i = sd.N0 - 1
            right = inverse_iteration(D, sd.lambda1 + 1e-7)
            left = inverse_iteration(D.T, sd.lambda1 + 1e-7)
            worst_oracle = max(
                worst_oracle,
                mass(right / right[i] - sd.e_right) / mass(sd.e_right),
                mass(left / left[i] - sd.e_left) / mass(sd.e_left),
            )
    ok = worst_res <= 1e-9 and worst_oracle <= 1e-8
    acceptance_report(7, "eigen-residuals", ok, f"worst_residual={worst_res:.2e} worst_oracle_err={worst_oracle:.2e}")
    assert ok


def _interior_maxima(y):
    s = np.sign(np.diff(y))
    s = s[s != 0]
    return int(np.count_nonzero((s[:-1] > 0) & (s[1:] < 0)))


def test_criterion_8_qualitative(acceptance_report):
    details = []
    ok = True
    for name in ALL:
        sc, G, tr = _run_bundled(name)
        mass_series = tr.f @ np.arange(1, sc.N + 1)
        if np.any(np.diff(mass_series) > 0):
            ok = False
            details.append(f"{name}: mass increases")
        above = float(np.max(np.abs(tr.step_f[:, 32:])))
        if above > 1e-12:
            ok = False
            details.append(f"{name}: size>32 reaches {above:.1e}")
        if name in ("sec4_1", "sec4_2"):
            count = tr.f.sum(axis=1)
            peaks = _interior_maxima(count)
            k = int(np.argmax(count))
            final_ratio = count[-1] / count[k]
            interior = 0 < k < len(count) - 1
            if peaks != 1 or not interior or final_ratio >= 0.01:
                ok = False
            details.append(f"{name}: maxima={peaks} peak_t={tr.t[k]:.1f} final/peak={final_ratio:.1e}")
    acceptance_report(8, "qualitative figure properties", ok, "; ".join(details))
    assert ok


def test_criterion_9_projection_algebra(acceptance_report):
    worst = 0.0
    exact = True
    rng = np.random.default_rng(9)
    for name in ALL:
        sd = spectral_data(MODELS[name], K, 64)
        exact &= bool(sd.e_left @ sd.e_right == 1.0)
        for _ in range(100):
            f = rng.standard_normal(64)
            p = project(sd, f)
            worst = max(worst, mass(project(sd, p) - p) / mass(p))
    ok = exact and worst <= 1e-12
    acceptance_report(9, "projection algebra", ok, f"idempotence_err={worst:.2e} <e*,e>==1: {exact}")
    assert ok
