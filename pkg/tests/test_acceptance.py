"""Acceptance gate: quantitative desk-scale checks of the laboratory.

One test per criterion; run with -v to get one pass/fail line each.  Each
test also prints a [PASS]/[FAIL] line with the measured quantity so the tee'd
output documents the margins.

Scale notes
-----------
* "paper scale" means ell=0.05, h=0.5, flux level 3/16, grid step 0.0002.
* Strict profile ordering is asserted on the transition region (nodes where
  the profiles sit more than 1e-5 away from both asymptotes): beyond it the
  exponential tails collapse onto the asymptotes at double precision and
  ordering is undecidable in floating point.
* Forward invariance of the attraction band is asserted from the first
  sample where the whole metric window lies inside the band: Riemann data
  starts far outside it, so the theorem's hypothesis only holds after the
  transient has been absorbed.
* "Oscillation persists" is measured under the observation protocol used for
  the trajectory-band figures: snapshots at t=0 and at every accepted step
  of the final period [T_f - tau_p, T_f].
"""

import math
import time

import numpy as np
import pytest

import ftls_lab as F
from ftls_lab import (
    IncompatibleAsymptotesError,
    NoProfileError,
    ParticleState,
)

from conftest import FBAR, ROOT_HIGH_V2, ROOT_LOW_V2

PAPER_DZ = 0.0002
TF = 4.0


def _report(name, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def _params(tag):
    if tag.startswith("1"):
        return F.ModelParams.paper_defaults()
    return F.ModelParams.paper_defaults(V_minus=1.0, V_plus=2.0)


def _paper_report(tag):
    return F.classify_from_fbar(_params(tag), FBAR, tag)


@pytest.fixture(scope="session")
def paper_profiles():
    """The four connectable subcases at paper scale, built once."""
    out = {}
    for tag, anchor in (("1A", None), ("1B", 0.5), ("2A", None), ("2B", 0.5)):
        report = _paper_report(tag)
        out[tag] = F.build_profile(report, anchor, X_min=-10.0, X_max=10.0,
                                   dz=PAPER_DZ)
    return out


# -- criterion: critical densities against the closed-form quadratic oracle --
def test_critical_densities_closed_form():
    t0 = time.perf_counter()
    crit = F.CriticalDensities.compute(FBAR, 2.0, 1.0)
    errs = [
        abs(crit.rho_hat - 0.5),
        abs(crit.rho2 - 0.25),
        abs(crit.rho3 - 0.75),
        abs(crit.rho1 - ROOT_LOW_V2),
        abs(crit.rho4 - ROOT_HIGH_V2),
    ]
    elapsed = time.perf_counter() - t0
    _report("critical-densities", max(errs) < 1e-10 and elapsed < 1.0,
            f"max error {max(errs):.2e}, {elapsed:.3f} s")


# -- criterion: constant profile on a uniform road is exact -------------------
def test_constant_profile_exactness():
    t0 = time.perf_counter()
    params = F.ModelParams.paper_defaults(V_minus=1.0, V_plus=1.0)
    report = F.classify(params, 0.4, 0.4)
    P = F.build_profile(report, 0.4, X_min=-3.0, X_max=3.0, dz=0.002)
    residual = F.equation_residual(P, stride=25)
    elapsed = time.perf_counter() - t0
    _report("constant-profile-exactness", residual < 1e-12 and elapsed < 1.0,
            f"residual {residual:.2e}, {elapsed:.3f} s")


# -- criterion: periodicity identity on constructed profiles ------------------
@pytest.mark.parametrize("tag", ["1A", "1B", "2A", "2B"])
def test_periodicity_identity(tag, paper_profiles):
    xs = np.linspace(-3.0, 3.0, 50)
    dev = F.period_check(paper_profiles[tag], xs, subintervals=64)
    _report(f"periodicity-{tag}", dev < 1e-4, f"max deviation {dev:.2e}")


def test_periodicity_corrupted_control(paper_profiles):
    report = _paper_report("1B")
    bad = F.build_profile(report, 0.5, X_min=-10.0, X_max=10.0, dz=0.001)
    bad.values = bad.values + 2e-3 * np.exp(-bad.x ** 2)
    dev = F.period_check(bad, np.linspace(-3.0, 3.0, 50), subintervals=64)
    _report("periodicity-corrupted-control", dev > 1e-3,
            f"corrupted deviation {dev:.2e}")


# -- criterion: slope bound at every grid node --------------------------------
@pytest.mark.parametrize("tag", ["1A", "1B", "2A", "2B"])
def test_slope_bound(tag, paper_profiles):
    P = paper_profiles[tag]
    ell = P.params.ell
    worst = -np.inf
    for j in range(0, len(P.x), 4):
        x = float(P.x[j])
        margin = P(x) ** 2 / ell - F.profile_rhs(P, x)
        worst = min(worst, margin) if worst > -np.inf else margin
    _report(f"slope-bound-{tag}", worst > 0.0,
            f"min (P^2/ell - slope) = {worst:.3e} over {len(P.x[::4])} nodes")


# -- criterion: profiles with distinct anchors never cross --------------------
def _ordering_pairwise(tag, anchors):
    report = _paper_report(tag)
    rho_minus, rho_plus = report.rho_minus, report.rho_plus
    family = [F.build_profile(report, a, X_min=-10.0, X_max=10.0, dz=0.0005)
              for a in anchors]
    ok = True
    detail = []
    for i in range(len(family)):
        for j in range(i + 1, len(family)):
            lo, hi = family[i], family[j]
            diff = hi.values - lo.values
            # strict ordering where both profiles are resolvable from the
            # shared asymptotes; never more than tail noise elsewhere
            mask = (hi.values - rho_minus > 1e-5) & \
                   (rho_plus - lo.values > 1e-5)
            strict = bool(np.all(diff[mask] > 0.0))
            global_ok = bool(np.all(diff > -1e-6))
            ok = ok and strict and global_ok
            detail.append(f"{anchors[i]}/{anchors[j]}: "
                          f"min diff (transition) {diff[mask].min():.2e}")
    return ok, "; ".join(detail)


def test_non_crossing_1B():
    ok, detail = _ordering_pairwise("1B", (0.35, 0.55, 0.75))
    _report("non-crossing-1B", ok, detail)


def test_non_crossing_2B():
    ok, detail = _ordering_pairwise("2B", (0.35, 0.55, 0.7))
    _report("non-crossing-2B", ok, detail)


# -- criterion: profile-generated evolution is periodic -----------------------
def test_periodic_evolution(paper_profiles):
    P = paper_profiles["1B"]
    report = _paper_report("1B")
    state = F.generate_distribution(P, z0=-5.0, N_forward=130, N_backward=10)
    t_p = P.params.ell / report.fbar
    traj = F.integrate(state, t_final=t_p, sample_times=[t_p])
    z0, z1 = state.z, traj.positions[-1]
    window = (np.abs(z0) <= 2.5)[:-1]
    shift_err = np.abs(z1[:-1] - z0[1:])[window]
    bound = 1e-4 * P.params.ell
    _report("periodic-evolution", float(shift_err.max()) < bound,
            f"max |z_i(t_p) - z_(i+1)(0)| = {shift_err.max():.2e} "
            f"(bound {bound:.1e})")


# -- criterion: attracting subcase 1B pulls Riemann data onto a profile -------
def test_stability_1B_and_region_D_invariance():
    params = _params("1B")
    report = _paper_report("1B")
    anchors = np.concatenate([np.linspace(0.2505, 0.26, 6),
                              np.linspace(0.27, 0.45, 12),
                              np.linspace(0.48, 0.748, 8)])
    family = [F.build_profile(report, float(a), X_min=-12.0, X_max=12.0,
                              dz=0.001) for a in anchors]
    D = F.region_D(report, X_min=-12.0, X_max=12.0, dz=0.001)
    h = params.kernel.h
    samples = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0]
    all_ok = True
    details = []
    for gamma in (-0.1, 0.1, 0.5, 1.0):
        c0 = gamma * params.ell / report.rho_minus
        state = F.riemann_init(params, report.rho_minus, report.rho_plus,
                               c0=c0)
        traj = F.integrate(state, t_final=TF, sample_times=samples)
        P, _ = F.closest_profile(traj.final_state(), family)
        trace = F.stability_trace(traj, P)
        ratio = trace.d_final() / trace.d0()
        # forward invariance from the first sample with the whole metric
        # window inside the band
        entered = None
        invariant = True
        for k in range(len(traj.times)):
            st = traj.state_at(k)
            member = F.region_D_membership(D, st, tol=1e-4)
            inside = np.abs(st.z) <= 10.0 * h
            if member[inside].all():
                if entered is None:
                    entered = traj.times[k]
            elif entered is not None:
                invariant = False
        ok = ratio < 0.1 and entered is not None and invariant
        all_ok = all_ok and ok
        details.append(f"gamma={gamma}: anchor {P.anchor:.3f}, "
                       f"d(Tf)/d(0)={ratio:.3f}, in-band from t={entered}, "
                       f"invariant={invariant}")
    _report("stability-1B", all_ok, "; ".join(details))


# -- criterion: non-attracting subcases keep oscillating ----------------------
@pytest.mark.parametrize("tag", ["1A", "2A"])
def test_instability_oscillation_persists(tag, paper_profiles):
    params = _params(tag)
    report = _paper_report(tag)
    P = paper_profiles[tag]
    tau_p = params.ell / report.fbar
    state = F.riemann_init(params, report.rho_minus, report.rho_plus)
    traj = F.integrate(state, t_final=TF, sample_times=[0.0],
                       band_start=TF - tau_p)
    trace = F.stability_trace(traj, P)
    osc_final = float(trace.oscillations[-1])
    peak = float(np.max(trace.oscillations))
    ok = osc_final > 0.5 * peak and osc_final > 0.01
    _report(f"instability-{tag}", ok,
            f"osc(Tf)={osc_final:.4f}, observed peak {peak:.4f}")


# -- criterion: no profile is fabricated where none exists --------------------
def test_no_profile_refusal():
    refused = []
    for tag in ("1C", "1D", "2C", "2D"):
        report = _paper_report(tag)
        verdict_ok = report.verdict is F.Verdict.NONE
        try:
            F.build_profile(report, X_min=-3.0, X_max=3.0, dz=0.002)
            raised = False
        except NoProfileError:
            raised = True
        refused.append(verdict_ok and raised)
    try:
        F.classify(F.ModelParams.paper_defaults(), 0.25, 0.25)
        incompatible_ok = False
    except IncompatibleAsymptotesError:
        incompatible_ok = True
    _report("no-profile-refusal", all(refused) and incompatible_ok,
            f"subcase refusals {refused}, flux-incompatible refused "
            f"{incompatible_ok}")


# -- criterion: particle profiles converge to the continuum profile -----------
def test_micro_macro_convergence():
    report = _paper_report("1B")
    table = F.convergence_study_micro_macro(
        report, 0.5, ell_sequence=(0.05, 0.025, 0.0125, 0.00625), dz=0.0005)
    errs = table.column("sup_error")
    decreasing = all(b < a for a, b in zip(errs, errs[1:]))
    ok = decreasing and errs[-1] < errs[0] / 3.0
    _report("micro-macro-convergence", ok,
            "sup errors " + ", ".join(f"{e:.4f}" for e in errs))


# -- criterion: nonlocal profiles converge to the local-model profile ---------
def test_nonlocal_to_local_convergence():
    report = _paper_report("1B")
    table = F.convergence_study_nonlocal_local(
        report, 0.5, h_sequence=(0.5, 0.25, 0.125), dz=0.0005)
    errs = table.column("sup_error")
    ok = all(b < a for a, b in zip(errs, errs[1:]))
    _report("nonlocal-to-local-convergence", ok,
            "sup errors " + ", ".join(f"{e:.4f}" for e in errs))


# -- criterion: the density-averaging variant crashes, the main model not -----
@pytest.mark.parametrize("rho_plus", [0.75, 0.25])
def test_crash_reproduction(rho_plus):
    params = F.ModelParams.paper_defaults()
    state = F.riemann_init(params, 0.9, rho_plus)
    dense = np.linspace(0.0, 1.0, 101)
    alt = F.integrate(state, model="alternative", t_final=1.0,
                      sample_times=dense)
    main = F.integrate(state, model="main", t_final=1.0, sample_times=dense)
    # crash events are logged at every accepted step, snapshots are not
    alt_peak = max([c[2] for c in alt.crashes], default=alt.max_density())
    ok = alt_peak > 1.0 and len(alt.crashes) > 0 \
        and main.max_density() <= 1.0 + 1e-9
    _report(f"crash-reproduction-(0.9|{rho_plus})", ok,
            f"alternative peak rho {alt_peak:.4f} "
            f"({len(alt.crashes)} crash events), "
            f"main max rho {main.max_density():.4f}")


# -- criterion: the integrator shows fourth-order self-convergence ------------
def test_rk4_self_convergence():
    params = F.ModelParams.paper_defaults(V_minus=1.0, V_plus=1.0, h=0.08)
    ell = params.ell
    z = [0.0]
    for _ in range(159):
        rho = 0.8 + 0.15 * math.sin(4.0 * z[-1])
        z.append(z[-1] + ell / rho)
    z = np.array(z) - z[80]
    state = ParticleState(t=0.0, z=z, params=params,
                          rho_right=ell / (z[-1] - z[-2]), i_min=0)
    finals = []
    for dt in (0.008, 0.004, 0.002):
        traj = F.integrate(state, t_final=1.0, dt=dt, sample_times=[1.0])
        finals.append(traj.positions[-1])
    e1 = float(np.max(np.abs(finals[0] - finals[1])))
    e2 = float(np.max(np.abs(finals[1] - finals[2])))
    factor = e1 / e2
    _report("rk4-self-convergence", 10.0 <= factor <= 22.0,
            f"error ratio under dt halving: {factor:.2f}")
