"""Acceptance gate: one test per headline claim, each at its stated
tolerance, each emitting a single summary line.

Run with ``pytest -v tests/test_acceptance.py`` to get one pass/fail line
per criterion.
"""

import numpy as np
import pytest
import warnings

from stabmix import mp_rkc, mrkc, precision, problems, rkc
from stabmix.chebyshev import (make_inner_coefficients, make_rkc_coefficients,
                               shifted2_stability_poly,
                               shifted_stability_poly, stability_boundary,
                               stability_poly)
from stabmix.errors import NonFiniteState
from stabmix.harness import (ExperimentConfig, error_measure, fit_slope,
                             run_stability, run_stages)
from stabmix.mp_rkc import DeltaFStrategy, cost_report, mp_rkc_step
from stabmix.precision import get_format, round_to
from stabmix.rkc import EvalCounters

BF16 = get_format("bfloat16")
FP16 = get_format("fp16")
FP64 = get_format("fp64")

warnings.filterwarnings("ignore", category=precision.OverflowWarning)


def _report(name, detail):
    print(f"[PASS] {name}: {detail}")


# ---------------------------------------------------------------------------
# 1. format fidelity

def test_acceptance_format_fidelity():
    rng = np.random.default_rng(2024)
    total_mismatch = 0
    for name, dtype in (("fp16", np.float16), ("fp32", np.float32)):
        fmt = get_format(name)
        exps = rng.uniform(np.log2(fmt.x_tiny) - 1, np.log2(fmt.x_max), 100_000)
        x = rng.choice([-1.0, 1.0], exps.size) * np.exp2(exps) \
            * rng.uniform(1.0, 2.0, exps.size)
        x = x[np.isfinite(x.astype(dtype))]
        total_mismatch += np.count_nonzero(
            round_to(x, fmt) != x.astype(dtype).astype(np.float64))
    assert total_mismatch == 0
    table = {"bfloat16": (8, 8), "fp16": (11, 5), "fp32": (24, 8),
             "fp64": (53, 11)}
    for name, (t, e) in table.items():
        fmt = get_format(name)
        assert (fmt.t, fmt.e_bits, fmt.u) == (t, e, 2.0**-t)
    _report("format fidelity",
            "0 mismatches vs native fp16/fp32 on 2x10^5 samples; "
            "format table exact")


# ---------------------------------------------------------------------------
# 2. polynomial identities

def test_acceptance_polynomial_identities():
    worst = 0.0
    for p in (1, 2):
        for s in (4, 16, 64):
            coeffs = make_rkc_coefficients(p, s)
            beta = stability_boundary(p, s)
            z = -np.linspace(0.02, 0.98, 50) * beta
            d1 = (stability_poly(coeffs, z) - 1.0) / z
            r1 = np.max(np.abs(shifted_stability_poly(coeffs, z) - d1)
                        / np.maximum(np.abs(d1), 1e-30))
            d2 = (stability_poly(coeffs, z) - 1.0 - coeffs.c[s] * z) / z**2
            r2 = np.max(np.abs(shifted2_stability_poly(coeffs, z) - d2)
                        / np.maximum(np.abs(d2), 1e-30))
            worst = max(worst, r1, r2)
    assert worst < 1e-10
    for s in (2, 8, 32, 128):
        assert abs(shifted2_stability_poly(make_rkc_coefficients(2, s), 0.0)
                   - 0.5) < 1e-12
    bound_excess = 0.0
    for p in (1, 2):
        for s in range(2, 129):
            coeffs = make_rkc_coefficients(p, s)
            bound_excess = max(bound_excess, abs(
                stability_poly(coeffs, -stability_boundary(p, s))) - 1.0)
    assert bound_excess <= 1e-12
    _report("polynomial identities",
            f"shifted-form max rel dev {worst:.2e} (tol 1e-10); "
            f"boundary excess {bound_excess:.1e} (tol 1e-12)")


# ---------------------------------------------------------------------------
# 3. degenerate-format equivalence

def test_acceptance_degenerate_format_equivalence():
    cases = [("heat1d", problems.build_problem_1(1, 32), 1e-5, 8e-5),
             ("brusselator", problems.build_problem_3(64), 1e-4, 8e-4)]
    worst = 0.0
    for label, prob, dt, T in cases:
        for p, hybrid in ((1, False), (2, False), (2, True)):
            exact = rkc.rkc_integrate(prob, dt, p=p, T=T,
                                      force_s=8).final_state
            mp = mp_rkc.mp_rkc_integrate(prob, dt, p, FP64, strategy="s1",
                                         hybrid=hybrid, T=T,
                                         force_s=8).final_state
            rel = np.max(np.abs(mp - exact)) / np.max(np.abs(exact))
            worst = max(worst, rel)
    assert worst <= 1e-12
    _report("degenerate-format equivalence",
            f"max rel deviation {worst:.2e} (tol 1e-12) across "
            "mp-rkc1/mp-rkc2/mp-rkc2-hybrid on both problems")


# ---------------------------------------------------------------------------
# 4. order preservation

def _convergence_study(prob, margin, seed=0):
    rho = problems.estimate_spectral_radius(prob, prob.y0, seed=seed)
    out = {}
    for p, scheme in ((1, "mp-rkc1"), (2, "mp-rkc2-hybrid"), (1, "naive")):
        dt_max = margin * stability_boundary(p, 16) / rho
        T = 64 * dt_max
        grid = dt_max * np.arange(1, 65)
        dts = [dt_max / 2**k for k in range(7)]
        ref = rkc.rk4_reference(prob, dt_max, T=T, record_times=grid,
                                rho_seed=seed)
        errs = []
        for dt in dts:
            if scheme == "naive":
                tr = rkc.rkc_integrate(prob, dt, p=1, mode="naive-mixed",
                                       fmt=BF16, T=T, force_s=16,
                                       record_times=grid, rho_seed=seed)
            else:
                tr = mp_rkc.mp_rkc_integrate(prob, dt, p, BF16, strategy="s1",
                                             hybrid=(p == 2), T=T, force_s=16,
                                             record_times=grid, rho_seed=seed)
            errs.append(error_measure(tr.sample_states, ref.sample_states,
                                      prob))
        out[scheme] = (fit_slope(dts, errs), errs)
    return out


def test_acceptance_order_preservation_reaction_diffusion():
    res = _convergence_study(problems.build_problem_1(2, 32), margin=0.9)
    s1, _ = res["mp-rkc1"]
    s2, _ = res["mp-rkc2-hybrid"]
    _, naive_errs = res["naive"]
    plateau = naive_errs[-1] / BF16.u
    assert abs(s1 - 1.0) <= 0.15
    assert abs(s2 - 2.0) <= 0.2
    assert plateau >= 3.0
    _report("order preservation (2D reaction-diffusion)",
            f"slopes {s1:.3f} (1+-0.15) / {s2:.3f} (2+-0.2); "
            f"naive plateau {plateau:.1f}u (>=3u)")


def test_acceptance_order_preservation_two_species():
    res = _convergence_study(problems.build_problem_3(64), margin=0.45)
    s1, _ = res["mp-rkc1"]
    s2, _ = res["mp-rkc2-hybrid"]
    _, naive_errs = res["naive"]
    plateau = naive_errs[-1] / BF16.u
    assert abs(s1 - 1.0) <= 0.15
    assert abs(s2 - 2.0) <= 0.2
    assert plateau >= 30.0
    _report("order preservation (two-species reaction)",
            f"slopes {s1:.3f} / {s2:.3f}; naive plateau {plateau:.0f}u (>=30u)")


# ---------------------------------------------------------------------------
# 5. q-order linear study

def test_acceptance_q_order_linear_study():
    prob = problems.build_problem_1(3, 8, linear=True)
    rho = problems.estimate_spectral_radius(prob, prob.y0)
    A_low = precision.squeeze_matrix(prob.A, BF16)
    dt0 = 2.5 / rho
    dts = [dt0 / 2**k for k in range(3, 10)]
    T = 8 * dts[0]
    lam, Q = np.linalg.eigh(prob.A.toarray())
    y_exact = Q @ (np.exp(lam * T) * (Q.T @ prob.y0))
    slopes, coarse = {}, {}
    for q in (0, 1, 2, 3):
        errs = []
        for dt in dts:
            y = prob.y0.copy()
            for _ in range(max(1, round(T / dt))):
                y = mp_rkc.q_order_rk_linear_step(prob, A_low, y, dt, q)
            errs.append(float(np.max(np.abs(y - y_exact))))
        slopes[q] = fit_slope(dts, errs)
        coarse[q] = errs[0]
    assert slopes[0] < 0.2
    for q in (1, 2, 3):
        assert abs(slopes[q] - q) <= 0.25
        assert coarse[q] <= 0.1 * coarse[0]
    _report("q-order linear study",
            "slopes " + ", ".join(f"q={q}:{slopes[q]:.3f}" for q in range(4))
            + f"; coarse-step separation >= {min(coarse[0]/coarse[q] for q in (1,2,3)):.0f}x (>=10x)")


# ---------------------------------------------------------------------------
# 6. stability at the limit

def test_acceptance_stability_at_the_limit(tmp_path):
    worst = 0.0
    for scheme in ("mp-rkc1", "naive-rkc1", "mp-rkc2-hybrid", "naive-rkc2"):
        cfg = ExperimentConfig(
            kind="stability", problem="heat2d", scheme=scheme,
            low_prec="bfloat16", T=8.0,
            schedule=[(32, 4), (64, 8), (128, 16)],
            problem_kwargs={"linear": True, "diffusion": 50.0},
            out=str(tmp_path))
        rows, _ = run_stability(cfg)
        worst = max(worst, max(r["norm_ratio_final"] for r in rows))
    assert worst <= 1.0
    _report("stability at the limit",
            f"max final norm ratio {worst:.3f} (<=1) over 4 schemes x "
            "(s,N) in {(32,4),(64,8),(128,16)}")


# ---------------------------------------------------------------------------
# 7. stages vs error

def _stage_ratios(tmp_path, problem, N, scheme, strategy, s_list, T=None):
    cfg = ExperimentConfig(kind="stages", problem=problem, scheme=scheme,
                           N=N, strategy=strategy, low_prec="bfloat16",
                           s_list=s_list, T=T, out=str(tmp_path))
    rows, _ = run_stages(cfg)
    err = {(r["scheme"], r["s"]): r["error_abs"] for r in rows}
    return {s: err[(scheme, s)] / err[(f"{scheme}:disc", s)] for s in s_list}


def test_acceptance_stages_vs_error(tmp_path):
    msgs = []
    for problem, N, op_scheme, nv_scheme, strategy in (
            ("heat2d", 16, "mp-rkc2-hybrid", "naive-rkc2", "s1"),
            ("plap4", 64, "mp-rkc1", "naive-rkc1", "exact-diff")):
        op = _stage_ratios(tmp_path, problem, N, op_scheme, strategy,
                           [8, 16, 32, 64])
        assert max(op.values()) <= 10.0
        try:
            nv = _stage_ratios(tmp_path, problem, N, nv_scheme, strategy,
                               [8, 16])
            sep = min(nv[s] / op[s] for s in (8, 16))
        except NonFiniteState:
            sep = float("inf")   # the naive run diverged outright
        assert sep >= 10.0
        msgs.append(f"{problem}: max OP ratio {max(op.values()):.3g} (<=10), "
                    f"naive/OP >= {sep:.3g}x (>=10x)")
    _report("stages vs error", "; ".join(msgs))


# ---------------------------------------------------------------------------
# 8. multirate

def test_acceptance_multirate():
    # plan selection vs enumeration
    rng = np.random.default_rng(11)
    beta = 2.0 - 4.0 * 0.05 / 3.0
    mismatches = 0
    for _ in range(200):
        dt = float(np.exp(rng.uniform(np.log(1e-5), 0.0)))
        rho_S = float(np.exp(rng.uniform(0.0, np.log(1e5))))
        rho_F = rho_S * float(np.exp(rng.uniform(0.0, np.log(1e4))))
        plan = mrkc.select_multirate_plan(dt, rho_S, rho_F)
        s = 1
        while dt * rho_S > beta * s**2:
            s += 1
        m = 2
        while (6.0 * dt / (beta * s**2) * m**2 / (m**2 - 1.0)) * rho_F \
                > beta * m**2:
            m += 1
        mismatches += int((plan.s, plan.m) != (s, m))
    assert mismatches == 0

    mr = problems.build_multirate_surrogate(32, grading=8.0)
    # m = 1 degeneracy
    y = mr.base.y0 + 0.05
    fbar = mrkc.averaged_force(mr, y, 1e-6, make_inner_coefficients(1))
    assert np.max(np.abs(fbar - mr.f(y))) <= 1e-13 * np.max(np.abs(mr.f(y)))

    # linear averaged force vs the matrix-function oracle, first order in eta
    import scipy.linalg
    inner = make_inner_coefficients(4)
    mild = problems.build_multirate_surrogate(16, grading=4.0)
    ym = mild.base.y0 + 0.1
    AF = mild.A_F.toarray()
    n = AF.shape[0]
    f = mild.f(ym)
    devs, etas = [], [1e-6, 5e-7]
    for eta in etas:
        M = np.zeros((2 * n, 2 * n))
        M[:n, :n] = eta * AF
        M[:n, n:] = np.eye(n)
        phi_f = scipy.linalg.expm(M)[:n, n:] @ f
        devs.append(np.linalg.norm(
            mrkc.averaged_force(mild, ym, eta, inner) - phi_f))
    assert devs[0] < 1e-3 * np.linalg.norm(f)
    assert devs[1] < 0.75 * devs[0]

    # mixed-precision multirate convergence and the high-eval budget
    prob = mr.base
    T = prob.T
    dt0 = T / 8
    dts = [dt0 / 2**k for k in range(5)]
    grid = dt0 * np.arange(1, 9)
    ref = rkc.rk4_reference(prob, dt0, T=T, record_times=grid)
    errs, last = [], None
    for dt in dts:
        tr = mrkc.mp_mrkc_integrate(mr, dt, BF16, T=T, record_times=grid)
        errs.append(error_measure(tr.sample_states, ref.sample_states, prob))
        last = tr
    slope = fit_slope(dts, errs)
    assert abs(slope - 1.0) <= 0.15
    assert last.counters.n_high == 2 * len(last.times)
    _report("multirate",
            f"plan enumeration 0/200 mismatches; m=1 degeneracy <=1e-13; "
            f"matrix-function deviation first order in eta; mp slope "
            f"{slope:.3f} (1+-0.15); exactly one high (f_F,f_S) pair per step")


# ---------------------------------------------------------------------------
# 9. scaling laws of the increment formulas

def test_acceptance_increment_scaling_laws():
    # O(sqrt(u) dt) law of the finite-difference first-order increment
    prob = problems.build_problem_1(1, 32)
    y = prob.y0 + 0.05 * np.sin(np.linspace(0, np.pi, prob.n))
    fy = prob.f(y)
    dts = [1e-4 / 2**k for k in range(5)]
    devs = {}
    for fmt in (BF16, FP16):
        strat = DeltaFStrategy(prob, fmt, "scenario2_fd_first")
        ds = []
        for dt in dts:
            d = dt * fy
            caches = strat.step_caches(y, fy, dt, False, EvalCounters())
            approx = strat.first_order(y, d, fy, dt, caches)
            ds.append(np.linalg.norm(approx - (prob.f(y + d) - fy)))
        devs[fmt.name] = np.array(ds)
        slope = np.polyfit(np.log(dts), np.log(ds), 1)[0]
        assert slope >= 0.9, fmt.name
    expected = np.sqrt(BF16.u / FP16.u)
    observed = devs["bfloat16"] / devs["fp16"]
    assert np.all(observed / expected <= 4.0)
    assert np.all(expected / observed <= 4.0)

    # O(eps*eta) law of the mixed-precision averaged force
    mr = problems.build_multirate_surrogate(32, grading=8.0)
    mp = mrkc.MpAveragedForce(mr, BF16)
    inner = make_inner_coefficients(6)
    rng = np.random.default_rng(0)
    states = [mr.base.y0 + 0.1 * rng.standard_normal(mr.n) for _ in range(8)]
    etas = [5e-6 / 2**k for k in range(6)]
    ds = []
    for eta in etas:
        acc = sum(np.linalg.norm(
            mp.tilde(s, eta, inner, EvalCounters())
            - mrkc.averaged_force(mr, s, eta, inner)) for s in states)
        ds.append(acc / len(states))
    eta_slope = np.polyfit(np.log(etas), np.log(ds), 1)[0]
    assert abs(eta_slope - 1.0) <= 0.2
    _report("increment scaling laws",
            f"FD increment: dt-slope >= 0.9 both formats, cross-format "
            f"ratio within {max(np.max(observed/expected), np.max(expected/observed)):.2f}x "
            f"of sqrt(u) (tol 4x); averaged-force eta-slope {eta_slope:.3f} "
            f"(1+-0.2)")


# ---------------------------------------------------------------------------
# 10. budget and cost model

def test_acceptance_budget_and_cost():
    prob = problems.build_problem_1(1, 16)
    for s in (4, 8, 16):
        counters = EvalCounters()
        strategy = DeltaFStrategy(prob, BF16, "scenario1_first")
        mp_rkc_step(prob, prob.y0, make_rkc_coefficients(1, s), 1e-4,
                    strategy, counters=counters)
        assert (counters.n_high, counters.n_low) == (1, s - 1)
    assert cost_report(4, 2, 4.0).factor == 0.375
    assert cost_report(64, 1, 4.0).factor == pytest.approx(0.73828125)
    _report("budget and cost",
            "(1 high, s-1 low) per step for s in {4,8,16}; "
            "cost factors 0.375 and 0.738 exact")
