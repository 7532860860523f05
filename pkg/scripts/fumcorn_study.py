"""Monte Carlo study of the estimator on the FUMCorn-style synthetic design.

Reports bias, empirical standard deviation, mean standard error and Wald
coverage for every coefficient.
"""

import argparse
import time

import numpy as np
from scipy import stats

from zabs import fit
from zabs.errors import ZabsError
from zabs.synthetic import FUMCORN


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=200)
    ap.add_argument("--n", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--level", type=float, default=0.95)
    args = ap.parse_args(argv)

    z = stats.norm.ppf(0.5 + args.level / 2)
    est, ses, failures = [], [], 0
    start = time.perf_counter()
    for rep in range(args.reps):
        data = FUMCORN.simulate(args.n, np.random.default_rng([args.seed, rep]))
        try:
            res = fit(FUMCORN.model, data)
        except ZabsError:
            failures += 1
            continue
        est.append(res.theta)
        ses.append(res.se)
    est, ses = np.array(est), np.array(ses)
    cover = np.mean(np.abs(est - FUMCORN.theta) <= z * ses, axis=0)
    names = fit(FUMCORN.model, FUMCORN.simulate(args.n, np.random.default_rng(0))).names

    print(f"{len(est)} fits, {failures} failures, {time.perf_counter() - start:.1f}s")
    print(f"{'parameter':<16}{'true':>9}{'bias':>10}{'sd':>9}{'mean se':>9}{'cover':>7}")
    for k, name in enumerate(names):
        print(
            f"{name:<16}{FUMCORN.theta[k]:>9.3f}{est[:, k].mean() - FUMCORN.theta[k]:>10.4f}"
            f"{est[:, k].std(ddof=1):>9.4f}{ses[:, k].mean():>9.4f}{cover[k]:>7.3f}"
        )


if __name__ == "__main__":
    main()
