"""Parameter recovery of the lineshape fit on synthetic noisy spectra.

Noise is Gaussian with standard deviation max|nonlinear component| / SNR.
Reports the relative-error distribution of each fitted parameter.

    python scripts/fit_study.py [--snr 100] [--trials 100] [--Gamma 2e4]
"""

import argparse

import numpy as np

from thincell.domain import CellGeometry, derive_thermal
from thincell.fit import FitProblem, fit_lineshape, model_values
from thincell.lineshape import Spectrum, auto_grid


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--snr", type=float, default=100.0)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--c1", type=float, default=0.3)
    ap.add_argument("--c2", type=float, default=1.5)
    ap.add_argument("--Gamma", type=float, default=2e4)
    ap.add_argument("--n-points", type=int, default=61)
    ap.add_argument("--weighted", action="store_true", help="pass the noise level as per-point stderr")
    args = ap.parse_args(argv)

    geom = CellGeometry(W=5e-6, L=4e-3)
    ens = derive_thermal(393.15, 2e19)
    truth = {"c1": args.c1, "c2": args.c2, "Gamma_coh": args.Gamma}
    B = auto_grid(geom, ens, span=4, n_points=args.n_points)
    clean = model_values(B, args.c1, args.c2, args.Gamma, geom, ens)
    sigma = np.max(np.abs(model_values(B, 0.0, args.c2, args.Gamma, geom, ens))) / args.snr

    errs = {k: [] for k in truth}
    pulls = {k: [] for k in truth}
    for seed in range(args.trials):
        y = clean + sigma * np.random.default_rng(seed).standard_normal(B.size)
        err = np.full(B.size, sigma) if args.weighted else None
        r = fit_lineshape(FitProblem(Spectrum(B, y, err), geom, ens))
        for k, v in truth.items():
            errs[k].append(r.estimates[k] / v - 1.0)
            pulls[k].append((r.estimates[k] - v) / r.stderr[k])
    within = np.all([np.abs(errs[k]) <= 0.05 for k in truth], axis=0)
    print(f"SNR {args.snr:g}, {args.trials} trials, {B.size} points")
    print(f"{'param':>10} {'mean rel err':>13} {'rms rel err':>12} {'max |rel err|':>14} {'pull std':>9}")
    for k in truth:
        e = np.array(errs[k])
        print(f"{k:>10} {e.mean():13.2e} {np.sqrt(np.mean(e**2)):12.2e} {np.max(np.abs(e)):14.3e} "
              f"{np.std(pulls[k], ddof=1):9.2f}")
    print(f"all parameters within 5%: {int(within.sum())}/{args.trials}")


if __name__ == "__main__":
    main()
