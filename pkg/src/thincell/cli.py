"""``thincell`` command-line entry point.

    thincell <subcommand> -c config.yaml [--set section.key=value ...]
             [--out DIR] [--threads N]

Subcommands: lineshape, scan-fwhm, distributions, flux, obe, montecarlo, fit.
Each run writes its data files, the resolved configuration (``config.json``)
and a ``manifest.json`` with content digests into the output directory
(``--out``, else ``$THINCELL_OUTPUT_DIR/<subcommand>``, else
``./thincell-out/<subcommand>``).

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure,
4 insufficient Monte Carlo statistics.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import config_digest, load_config
from .domain import RB87, CellGeometry, FieldConfig, derive_thermal, replace
from .errors import (
    ConfigError,
    DegenerateFitError,
    DegenerateSpectrumError,
    DomainError,
    NumericError,
    StatisticsError,
    ValidationError,
)
from .io import read_spectrum_csv, sha256_file, write_csv, write_json

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_STATS = 0, 2, 3, 4
SUBCOMMANDS = ("lineshape", "scan-fwhm", "distributions", "flux", "obe", "montecarlo", "fit")
OUTPUT_ENV = "THINCELL_OUTPUT_DIR"


class _Run:
    """Per-invocation context: resolved config, output dir, file registry."""

    def __init__(self, subcommand, cfg, out_dir, threads):
        self.subcommand = subcommand
        self.cfg = cfg
        self.out = Path(out_dir)
        self.threads = threads
        self.digest = config_digest(cfg)
        self.files: list[Path] = []
        self.inputs: list[Path] = []
        self.seeds: list[int] = []

    @property
    def header(self):
        return {"thincell": __version__, "subcommand": self.subcommand, "config_sha256": self.digest}

    def csv(self, name, columns, data):
        self.files.append(write_csv(self.out / name, columns, data, self.header))

    def json(self, name, obj):
        self.files.append(write_json(self.out / name, obj))

    def finish(self):
        self.json("config.json", self.cfg)
        manifest = {
            "tool": "thincell",
            "version": __version__,
            "subcommand": self.subcommand,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "config": self.cfg,
            "config_sha256": self.digest,
            "seeds": self.seeds,
            "threads": self.threads,
            "inputs": [{"file": str(p), "sha256": sha256_file(p)} for p in self.inputs],
            "outputs": [{"file": p.name, "sha256": sha256_file(p)} for p in self.files],
        }
        write_json(self.out / "manifest.json", manifest)


# ---- model construction ---------------------------------------------------

def build_species(cfg):
    sp = {k: v for k, v in cfg["species"].items() if k != "name"}
    return replace(RB87, name=cfg["species"]["name"], **sp) if sp or cfg["species"]["name"] != "Rb87" else RB87


def build_geometry(cfg):
    c = cfg["cell"]
    return CellGeometry(c["W"], c["L"], c["w_pu"], c["R_pr"], c["lateral_extent"])


def build_models(cfg):
    from .kinetics import flux_report

    species = build_species(cfg)
    geometry = build_geometry(cfg)
    ensemble = derive_thermal(cfg["thermal"]["T"], cfg["thermal"]["n"], species)
    f = dict(cfg["fields"])
    if f["Gamma_coh"] == "R_SE":
        f["Gamma_coh"] = flux_report(geometry, ensemble, species).R_SE
    return species, geometry, ensemble, FieldConfig(**f)


def _grid(section, geometry, ensemble, species):
    from .lineshape import auto_grid

    n = section["n_points"]
    if n < 2:
        raise ConfigError("n_points must be at least 2")
    if section.get("B_min") is not None or section.get("B_max") is not None:
        if section.get("B_min") is None or section.get("B_max") is None:
            raise ConfigError("give both B_min and B_max, or neither")
        if not section["B_max"] > section["B_min"]:
            raise ConfigError("B_max must exceed B_min")
        return np.linspace(section["B_min"], section["B_max"], n)
    return auto_grid(geometry, ensemble, species, section["span"], n)


# ---- subcommands ------------------------------------------------------------

def cmd_lineshape(run: _Run):
    from .lineshape import LineshapeParams, full_lineshape

    species, geometry, ensemble, fields = build_models(run.cfg)
    s = run.cfg["lineshape"]
    params = LineshapeParams(geometry, ensemble, fields, species, s["strategy"], s["speed_model"], s["tol"])
    spec = full_lineshape(_grid(s, geometry, ensemble, species), params, run.threads)
    run.csv("spectrum.csv", ["B_tesla", "phi"], [spec.B, spec.values])


def cmd_scan_fwhm(run: _Run):
    from .lineshape import LineshapeParams, sweep_diameter

    species, geometry, ensemble, fields = build_models(run.cfg)
    s, ls = run.cfg["scan_fwhm"], run.cfg["lineshape"]
    # the sweep has its own transverse field: a large B_perp keeps the kernel
    # argument far out in its tail and leaves no central lobe to measure
    fields = replace(fields, B_perp=s["B_perp"])
    params = LineshapeParams(geometry, ensemble, fields, species, ls["strategy"], ls["speed_model"], ls["tol"])
    rows = sweep_diameter(s["D_list"], params, s["n_points"], s["span"], run.threads)
    run.csv(
        "fwhm.csv",
        ["D_m", "fwhm_T", "peak_to_peak_T", "B_peak_T"],
        [[r.D for r in rows], [r.report.fwhm_central_lobe for r in rows],
         [r.report.peak_to_peak for r in rows], [r.report.B_peak for r in rows]],
    )


def cmd_distributions(run: _Run):
    from .kinetics import angular_density, longitudinal_marginal, longitudinal_marginal_numeric, maxwell_speed_density

    species, geometry, ensemble, _ = build_models(run.cfg)
    s = run.cfg["distributions"]
    n = s["n_points"]
    eta = np.linspace(0.0, s["eta_max"], n)
    v_par = eta * geometry.W * ensemble.u / geometry.L
    run.csv(
        "marginal.csv",
        ["v_parallel_m_per_s", "eta", "density_s_per_m", "density_quadrature_s_per_m"],
        [v_par, eta, longitudinal_marginal(v_par, geometry, ensemble),
         longitudinal_marginal_numeric(v_par, geometry, ensemble)],
    )
    alpha = np.linspace(0.0, 1.05 * geometry.alpha_max, n)
    run.csv(
        "angular.csv",
        ["alpha_rad", "density_exact_per_rad", "density_linearized_per_rad"],
        [alpha, angular_density(alpha, geometry), angular_density(alpha, geometry, linearized=True)],
    )
    v = np.linspace(0.0, 5.0 * ensemble.u, n)
    run.csv("speed.csv", ["v_m_per_s", "density_s_per_m"], [v, maxwell_speed_density(v, ensemble)])


def cmd_flux(run: _Run):
    from .kinetics import flux_report

    species, geometry, ensemble, _ = build_models(run.cfg)
    rep = flux_report(geometry, ensemble, species).to_dict()
    rep.update({"u": ensemble.u, "v_p": ensemble.v_p, "V_Rb": ensemble.V_Rb})
    run.json("flux.json", rep)


def cmd_obe(run: _Run):
    from .obe import PulseSequence, run_sequence

    species, geometry, ensemble, fields = build_models(run.cfg)
    o = run.cfg["obe"]
    kw = {"detuning": o["detuning"], "polarization": o["polarization"], "probe_duration": o.get("probe_duration")}
    pulse = PulseSequence.from_geometry(geometry, ensemble, o["Omega_pu"], o["Omega_pr"], **kw)
    over = {k: o[k] for k in ("T1", "T2") if o.get(k) is not None}
    if over:
        pulse = replace(pulse, **over)
    res = run_sequence(pulse, fields, species=species, samples_per_phase=o["samples_per_phase"], L_sep=o["L_sep"])
    tr = res.trajectory
    run.csv("trajectory.csv", ["t_s", "phase", "Fx", "Fy", "Fz", "alignment"],
            [tr.t, list(tr.phase), tr.Fx, tr.Fy, tr.Fz, tr.alignment])
    run.json("obe.json", {
        "T1_s": pulse.T1,
        "T2_s": pulse.T2,
        "probe_duration_s": pulse.t_probe,
        "omega_L_rad_per_s": res.omega_L,
        "moments_end_of_phase": {ph: vars(m) for ph, m in res.moments.items()},
        "rotation": vars(res.rotation),
        "diagnostics": tr.diagnostics,
    })


def cmd_montecarlo(run: _Run):
    from .lineshape import auto_grid
    from .montecarlo import McConfig, mc_lineshape

    species, geometry, ensemble, fields = build_models(run.cfg)
    m = run.cfg["montecarlo"]
    mc = McConfig(geometry, ensemble, m["n_samples"], m["seed"], m["batch_size"], m["velocity_mode"],
                  species, m["n_bins"])
    run.seeds.append(mc.seed)
    grid = auto_grid(geometry, ensemble, species, m["span"], m["n_points"])
    res = mc_lineshape(grid, mc, fields, run.threads)
    sp = res.spectrum_estimate
    run.csv("spectrum.csv", ["B_tesla", "phi_mean", "phi_stderr"], [sp.B, sp.values, sp.stderr])
    th, vh = res.transit_time_histogram, res.v_parallel_histogram
    run.csv("transit_time_hist.csv", ["t_low_s", "t_high_s", "count"], [th.edges[:-1], th.edges[1:], th.counts])
    run.csv("v_parallel_hist.csv", ["v_parallel_low_m_per_s", "v_parallel_high_m_per_s", "count"],
            [vh.edges[:-1], vh.edges[1:], vh.counts])
    run.json("summary.json", {
        "seed": mc.seed,
        "n_samples": mc.n_samples,
        "n_arrivals": res.n_arrivals,
        "arrival_fraction": res.arrival_fraction,
        "arrival_fraction_stderr": res.arrival_fraction_stderr,
        "velocity_mode": mc.velocity_mode,
    })


def cmd_fit(run: _Run):
    from .fit import FitProblem, fit_lineshape, model_values
    from .lineshape import subtract_linear

    species, geometry, ensemble, fields = build_models(run.cfg)
    f = run.cfg["fit"]
    if f.get("pump_on") is None:
        raise ConfigError("missing required key fit.pump_on")
    on_path = Path(f["pump_on"])
    run.inputs.append(on_path)
    data = read_spectrum_csv(on_path)
    if f.get("pump_off") is not None:
        off_path = Path(f["pump_off"])
        run.inputs.append(off_path)
        data = subtract_linear(data, read_spectrum_csv(off_path))
    G0 = f.get("Gamma_init")
    if G0 == "R_SE":
        from .kinetics import flux_report

        G0 = flux_report(geometry, ensemble, species).R_SE
    pb = FitProblem(data, geometry, ensemble, fields.B_perp, species, f["fit_offset"], G0,
                    max_iter=f["max_iter"], strategy=f["strategy"], threads=run.threads)
    res = fit_lineshape(pb)
    e = res.estimates
    model = model_values(data.B, e["c1"], e["c2"], e["Gamma_coh"], geometry, ensemble, fields.B_perp,
                         e.get("B_offset", 0.0), species, f["strategy"], threads=run.threads)
    run.json("fit.json", res.to_dict())
    run.csv("residuals.csv", ["B_tesla", "data", "model", "residual"],
            [data.B, data.values, model, data.values - model])


_DISPATCH = {
    "lineshape": cmd_lineshape,
    "scan-fwhm": cmd_scan_fwhm,
    "distributions": cmd_distributions,
    "flux": cmd_flux,
    "obe": cmd_obe,
    "montecarlo": cmd_montecarlo,
    "fit": cmd_fit,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thincell", description="Thin-cell Faraday-Ramsey lineshape toolkit")
    p.add_argument("--version", action="version", version=f"thincell {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("-c", "--config", required=True, help="YAML configuration file")
        s.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a config value (repeatable)")
        s.add_argument("--out", help="output directory")
        s.add_argument("--threads", type=int, default=None, help="worker threads (default: all CPUs)")
    return p


def run(subcommand: str, config_path, overrides=(), out_dir=None, threads=None) -> int:
    """Execute one subcommand; returns the process exit code."""
    try:
        cfg = load_config(config_path, list(overrides))
        if threads is None:
            threads = os.cpu_count() or 1
        if threads < 1:
            raise ConfigError("--threads must be at least 1")
        if out_dir is None:
            base = os.environ.get(OUTPUT_ENV)
            out_dir = Path(base) / subcommand if base else Path("thincell-out") / subcommand
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        r = _Run(subcommand, cfg, out_dir, threads)
        _DISPATCH[subcommand](r)
        r.finish()
    except (DegenerateSpectrumError, DegenerateFitError, NumericError) as exc:
        print(f"thincell {subcommand}: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except StatisticsError as exc:
        print(f"thincell {subcommand}: statistics error: {exc}", file=sys.stderr)
        return EXIT_STATS
    except (ConfigError, DomainError, ValidationError) as exc:
        print(f"thincell {subcommand}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.subcommand, args.config, args.set, args.out, args.threads)


if __name__ == "__main__":
    sys.exit(main())
