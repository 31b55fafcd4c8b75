"""Central-lobe FWHM and peak-to-peak width versus pump-ring diameter.

For each cell thickness the sweep is run without decoherence (pure transit
broadening, width ~ 1/D) and with the spin-exchange rate of the vapour, which
sets a floor once the separation exceeds a few spin-exchange lengths.
The speed-averaged kernel does not depend on the cell thickness, so both
thicknesses give the same widths; W only scales the signal through the flux.

    python scripts/linewidth_vs_diameter.py [--out widths.csv] [--threads N]
"""

import argparse

import numpy as np

from thincell.domain import CellGeometry, FieldConfig, derive_thermal
from thincell.io import write_csv
from thincell.kinetics import flux_report
from thincell.lineshape import LineshapeParams, sweep_diameter


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--T", type=float, default=393.15, help="temperature [K]")
    ap.add_argument("--n", type=float, default=2e19, help="density [m^-3]")
    ap.add_argument("--D-max-mm", type=float, default=8.0)
    ap.add_argument("--n-points", type=int, default=481)
    ap.add_argument("--out", default=None, help="optional CSV output path")
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args(argv)

    ens = derive_thermal(args.T, args.n)
    D = np.arange(1.0, args.D_max_mm + 0.5, 1.0) * 1e-3
    cols = {k: [] for k in ("W_m", "D_m", "Gamma_per_s", "fwhm_T", "peak_to_peak_T")}
    for W in (5e-6, 30e-6):
        geom = CellGeometry(W=W, L=4e-3)
        rep = flux_report(geom, ens)
        print(f"\nW = {W * 1e6:.0f} um   lambda_SE = {rep.lambda_SE * 1e3:.2f} mm   R_SE = {rep.R_SE:.4g} 1/s")
        print(f"{'D [mm]':>7} {'FWHM(G=0) [nT]':>15} {'FWHM(R_SE) [nT]':>16} {'ptp(R_SE) [nT]':>15}")
        res = {}
        for Gamma in (0.0, rep.R_SE):
            params = LineshapeParams(geom, ens, FieldConfig(B_perp=0.0, Gamma_coh=Gamma))
            res[Gamma] = sweep_diameter(D, params, args.n_points, 6.0, args.threads)
            for row in res[Gamma]:
                for k, v in zip(cols, (W, row.D, Gamma, row.report.fwhm_central_lobe, row.report.peak_to_peak)):
                    cols[k].append(v)
        for a, b in zip(res[0.0], res[rep.R_SE]):
            print(f"{a.D * 1e3:7.1f} {a.report.fwhm_central_lobe * 1e9:15.2f} "
                  f"{b.report.fwhm_central_lobe * 1e9:16.2f} {b.report.peak_to_peak * 1e9:15.2f}")
        f = [r.report.fwhm_central_lobe for r in res[rep.R_SE]]
        print(f"FWHM({D[-1] * 1e3:.0f} mm) / FWHM({D[0] * 1e3:.0f} mm) with decoherence: {f[-1] / f[0]:.3f} "
              f"(transit-limited: {D[0] / D[-1]:.3f})")
    if args.out:
        write_csv(args.out, list(cols), list(cols.values()), {"script": "linewidth_vs_diameter"})
        print(f"\nwrote {args.out}")


if __name__ == "__main__":
    main()
