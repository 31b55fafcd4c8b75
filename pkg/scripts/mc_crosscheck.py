"""Monte Carlo transport versus the analytic speed-averaged kernel.

Prints the per-point pull (MC - kernel)/stderr, the chi-square test of the
arrival v_parallel distribution and the arrival fraction against the
geometric escape estimate.

    python scripts/mc_crosscheck.py [--samples 1e7] [--seed 12345] [--mode planar]
"""

import argparse

import numpy as np

from thincell.domain import CellGeometry, FieldConfig, derive_thermal
from thincell.kinetics import flux_report
from thincell.lineshape import LineshapeParams, auto_grid, kernel_values
from thincell.montecarlo import McConfig, marginal_chi_square, mc_lineshape


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=float, default=1e7)
    ap.add_argument("--seed", type=int, default=12345)
    ap.add_argument("--mode", choices=("planar", "physical"), default="planar",
                    help="velocity sampling; 'physical' is compared with the thermal3d kernel")
    ap.add_argument("--W-um", type=float, default=5.0)
    ap.add_argument("--n-points", type=int, default=41)
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args(argv)

    geom = CellGeometry(W=args.W_um * 1e-6, L=4e-3)
    ens = derive_thermal(393.15, 2e19)
    fields = FieldConfig(B_perp=0.0)
    grid = auto_grid(geom, ens, span=4, n_points=args.n_points)
    mc = McConfig(geom, ens, n_samples=int(args.samples), seed=args.seed, velocity_mode=args.mode)
    res = mc_lineshape(grid, mc, fields, args.threads)
    model = "planar" if args.mode == "planar" else "thermal3d"
    kern = kernel_values(grid, LineshapeParams(geom, ens, fields, speed_model=model), args.threads)

    sp = res.spectrum_estimate
    z = np.divide(sp.values - kern, sp.stderr, out=np.zeros_like(kern), where=sp.stderr > 0)
    print(f"{'B [nT]':>9} {'MC':>10} {'stderr':>9} {'kernel':>10} {'pull':>6}")
    for b, m, e, k, zz in zip(grid, sp.values, sp.stderr, kern, z):
        print(f"{b * 1e9:9.2f} {m:10.5f} {e:9.5f} {k:10.5f} {zz:6.2f}")
    stat, p, nb = marginal_chi_square(res, geom, ens)
    R_es = flux_report(geom, ens).R_es
    print(f"\narrivals {res.n_arrivals} / {mc.n_samples}  (fraction {res.arrival_fraction:.3e}, "
          f"geometric estimate {R_es:.3e}, ratio {res.arrival_fraction / R_es:.3f})")
    print(f"max |pull| = {np.max(np.abs(z)):.2f}   v_parallel chi2 = {stat:.2f} on {nb - 1} dof, p = {p:.3f}")


if __name__ == "__main__":
    main()
