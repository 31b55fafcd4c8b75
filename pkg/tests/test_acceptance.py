"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``ACCEPTANCE <n> PASS|FAIL`` line (visible even
under output capture) and then asserts the same condition.
"""

import json
import math

import numpy as np
import pytest

from thincell.cli import SUBCOMMANDS, main
from thincell.domain import RB87, CellGeometry, FieldConfig, derive_thermal, replace
from thincell.fit import FitProblem, fit_lineshape, model_values
from thincell.kinetics import flux_report, longitudinal_marginal, longitudinal_marginal_numeric, mass_fraction_below
from thincell.lineshape import LineshapeParams, Spectrum, auto_grid, kernel_values, sweep_diameter
from thincell.montecarlo import McConfig, marginal_chi_square, mc_lineshape
from thincell.obe import (
    PulseSequence,
    field_basis_coherences,
    precession_frequency,
    repopulation_rates,
    run_sequence,
)

from test_cli import CONFIG, _argv, _files

ENS = derive_thermal(393.15, 2e19)  # 120 C, 2e13 cm^-3
CELL5 = CellGeometry(W=5e-6, L=4e-3, w_pu=0.5e-3, R_pr=0.5e-3)
CELL30 = replace(CELL5, W=30e-6)


def report(capsys, n: int, title: str, ok: bool, detail: str):
    with capsys.disabled():
        print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {title} -- {detail}")
    assert ok, f"criterion {n} ({title}) failed: {detail}"


def _within(x, ref, rel):
    return abs(x / ref - 1.0) <= rel


def test_criterion_1_flux_chain(capsys):
    checks = []
    for cell, (V, N, F) in [(CELL5, (6.3e-5, 1.3e9, 2.2e9)), (CELL30, (3.8e-4, 7.7e9, 7.9e10))]:
        r = flux_report(cell, ENS)
        V_cm3 = r.V_pu * 1e6
        checks += [
            (f"V_pu[{cell.W * 1e6:.0f}um]={V_cm3:.3e}cm3", _within(V_cm3, V, 0.03)),
            (f"N_pu={r.N_pu:.3e}", _within(r.N_pu, N, 0.05)),
            (f"F_meas={r.F_meas:.3e}/s", _within(r.F_meas, F, 0.05)),
        ]
    report(capsys, 1, "flux chain", all(ok for _, ok in checks), ", ".join(s for s, _ in checks))


def test_criterion_2_spin_exchange(capsys):
    r = flux_report(CELL5, ENS)
    ok = _within(r.lambda_SE, 18e-3, 0.05) and _within(r.R_SE, 1.7e4, 0.10) and _within(ENS.v_p, 277.0, 0.02)
    report(capsys, 2, "spin exchange", ok,
           f"lambda_SE={r.lambda_SE * 1e3:.2f}mm R_SE={r.R_SE:.4g}/s v_p={ENS.v_p:.2f}m/s")


def test_criterion_3_marginal_distribution(capsys):
    sups = []
    for cell in (CELL5, CELL30):
        eta = np.linspace(0.0, 4.0, 201)
        v = eta * cell.W * ENS.u / cell.L
        closed = longitudinal_marginal(v, cell, ENS)
        quad = longitudinal_marginal_numeric(v, cell, ENS)
        sups.append(float(np.max(np.abs(closed - quad)) / np.max(np.abs(quad))))
    frac = mass_fraction_below(10.0, CELL5, ENS)
    ok = max(sups) <= 1e-4 and frac >= 0.95
    report(capsys, 3, "marginal oracle", ok,
           f"sup rel err 5um={sups[0]:.2e} 30um={sups[1]:.2e}; mass below 10 m/s={frac:.6f}")


def test_criterion_4_lineshape_properties(capsys):
    params = LineshapeParams(CELL5, ENS, FieldConfig(B_perp=0.0, Gamma_coh=0.0))
    B = auto_grid(CELL5, ENS, span=6, n_points=61)
    K_pos, K_neg = kernel_values(B, params), kernel_values(-B, params)
    anti = float(np.max(np.abs(K_pos + K_neg)) / np.max(np.abs(K_pos)))

    D = [d * 1e-3 for d in range(1, 9)]
    rows = sweep_diameter(D, params, n_points=481, span=6)
    fwhm = np.array([r.report.fwhm_central_lobe for r in rows])
    ptp = np.array([r.report.peak_to_peak for r in rows])
    L = np.array(D) / 2
    mono = bool(np.all(np.diff(fwhm) < 0) and np.all(np.diff(ptp) < 0))
    inv_L = max(float(np.ptp(fwhm * L) / np.mean(fwhm * L)), float(np.ptp(ptp * L) / np.mean(ptp * L)))

    strat = 0.0
    for cell in (CELL5, CELL30):
        for Gamma in (0.0, flux_report(cell, ENS).R_SE):
            p = LineshapeParams(cell, ENS, FieldConfig(B_perp=0.0, Gamma_coh=Gamma))
            g = auto_grid(cell, ENS, span=6, n_points=25)
            a, b = kernel_values(g, p), kernel_values(g, replace(p, strategy="joint-2d"))
            strat = max(strat, float(np.max(np.abs(a - b)) / np.max(np.abs(a))))
    ok = anti <= 1e-6 and mono and inv_L <= 0.01 and strat <= 1e-3
    report(capsys, 4, "lineshape properties", ok,
           f"antisym={anti:.1e} monotone={mono} 1/L spread={inv_L:.1e} strategies={strat:.1e}")


def test_criterion_5_monte_carlo(capsys):
    fields = FieldConfig(B_perp=0.0)
    grid = auto_grid(CELL5, ENS, span=4, n_points=41)
    res = mc_lineshape(grid, McConfig(CELL5, ENS, n_samples=10_000_000, seed=12345), fields)
    kern = kernel_values(grid, LineshapeParams(CELL5, ENS, fields))
    sp = res.spectrum_estimate
    z = np.zeros(grid.size)
    nz = sp.stderr > 0
    z[nz] = (sp.values[nz] - kern[nz]) / sp.stderr[nz]
    zero_ok = bool(np.all(np.abs(sp.values[~nz] - kern[~nz]) < 1e-12))
    _, p_chi, k = marginal_chi_square(res, CELL5, ENS)

    Ws = np.array([5e-6, 10e-6, 20e-6, 30e-6])
    fr, er = [], []
    for i, W in enumerate(Ws):
        r = mc_lineshape(None, McConfig(replace(CELL5, W=W), ENS, n_samples=10_000_000, seed=777 + i))
        fr.append(r.arrival_fraction)
        er.append(r.arrival_fraction_stderr)
    fr, er = np.array(fr), np.array(er)
    slope = np.sum(fr * Ws / er**2) / np.sum(Ws**2 / er**2)
    zW = (fr - slope * Ws) / er

    ok = float(np.max(np.abs(z))) <= 3.0 and zero_ok and p_chi > 0.01 and float(np.max(np.abs(zW))) <= 3.0
    report(capsys, 5, "Monte Carlo cross-check", ok,
           f"arrivals={res.n_arrivals} max|z|={np.max(np.abs(z)):.2f} chi2 p={p_chi:.3f} (bins={k}) "
           f"W-proportionality max|z|={np.max(np.abs(zW)):.2f}")


def test_criterion_6_obe_integrity(capsys):
    pulse = PulseSequence.from_geometry(CELL5, ENS, Omega_pu=2 * math.pi * 50e6, Omega_pr=2 * math.pi * 2e6)
    fields = FieldConfig(B_parallel=10e-6, B_perp=20e-6)
    res = run_sequence(pulse, fields, keep_states=True)
    d = res.trajectory.diagnostics
    integ = d["trace_error"] < 1e-9 and d["hermiticity"] < 1e-10 and d["min_eigenvalue"] >= -1e-9

    tr = res.trajectory
    m = tr.phase == "dark"
    t, states = tr.t[m], tr.states[m]
    keep = t > t[0] + 40 / RB87.Gamma_e
    freq_err = []
    for dm in (1, 2):
        c = field_basis_coherences(states[keep], fields, delta_m=dm, index=1)
        freq_err.append(abs(precession_frequency(t[keep], c) / (dm * res.omega_L) - 1.0))

    gen = np.random.default_rng(6)
    sum_rule = 0.0
    for _ in range(20):
        X = gen.normal(size=(7, 7)) + 1j * gen.normal(size=(7, 7))
        rho_ee = X @ X.conj().T
        rho_ee /= np.trace(rho_ee)
        rate = repopulation_rates(rho_ee, 1.0)
        sum_rule = max(sum_rule, abs(np.trace(rate) - np.trace(rho_ee)))
    ok = integ and max(freq_err) <= 1e-4 and sum_rule <= 1e-12
    report(capsys, 6, "OBE integrity", ok,
           f"trace={d['trace_error']:.1e} herm={d['hermiticity']:.1e} min eig={d['min_eigenvalue']:.1e} "
           f"dm1 err={freq_err[0]:.1e} dm2 err={freq_err[1]:.1e} sum rule={sum_rule:.1e}")


def test_criterion_7_fit_round_trip(capsys):
    truth = {"c1": 0.3, "c2": 1.5, "Gamma_coh": 2.0e4}
    B = auto_grid(CELL5, ENS, span=4, n_points=61)
    clean = model_values(B, truth["c1"], truth["c2"], truth["Gamma_coh"], CELL5, ENS)
    res = fit_lineshape(FitProblem(Spectrum(B, clean), CELL5, ENS))
    rt = max(abs(res.estimates[k] / v - 1.0) for k, v in truth.items())

    # SNR is the peak nonlinear amplitude over the noise standard deviation
    nl = model_values(B, 0.0, truth["c2"], truth["Gamma_coh"], CELL5, ENS)
    sigma = np.max(np.abs(nl)) / 100.0
    good, worst = 0, 0.0
    for seed in range(100):
        noisy = clean + sigma * np.random.default_rng(seed).standard_normal(B.size)
        r = fit_lineshape(FitProblem(Spectrum(B, noisy), CELL5, ENS))
        err = max(abs(r.estimates[k] / v - 1.0) for k, v in truth.items())
        worst = max(worst, err)
        good += err <= 0.05
    ok = rt <= 1e-6 and good >= 95
    report(capsys, 7, "fit round trip", ok,
           f"noiseless max rel err={rt:.1e}; SNR-100 trials within 5%: {good}/100 (worst {worst:.3f})")


def test_criterion_8_cli_determinism(capsys, tmp_path):
    d = tmp_path / "inputs"
    common = ["--set", "fields.B_perp=0", "--set", "fields.Gamma_coh=2e4",
              "--set", "lineshape.n_points=61", "--set", "lineshape.span=4", "--set", "fields.c1=0.3"]
    assert main(["lineshape", "-c", str(CONFIG), "--out", str(d / "on"), *common, "--set", "fields.c2=1.5"]) == 0
    assert main(["lineshape", "-c", str(CONFIG), "--out", str(d / "off"), *common, "--set", "fields.c2=0"]) == 0
    inputs = (d / "on" / "spectrum.csv", d / "off" / "spectrum.csv")

    differing = []
    for sub in SUBCOMMANDS:
        outs = []
        for threads in (1, 4):
            out = tmp_path / f"{sub}-{threads}"
            assert main(_argv(sub, out, threads, fit_inputs=inputs)) == 0, sub
            files = _files(out)
            manifest = json.loads(files.pop("manifest.json"))
            outs.append((files, manifest["outputs"]))
        (fa, oa), (fb, ob) = outs
        if fa != fb or oa != ob:
            differing.append(sub)
    ok = not differing
    report(capsys, 8, "CLI determinism", ok,
           f"{len(SUBCOMMANDS)} subcommands at 1 vs 4 threads; differing: {differing or 'none'}")
