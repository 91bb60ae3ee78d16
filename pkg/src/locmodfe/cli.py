"""Command line entry point ``locmodfe``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import driver


def build_parser():
    p = argparse.ArgumentParser(
        prog="locmodfe",
        description="Locally modified finite elements for 2D interface problems.")
    p.add_argument("--test-case", type=int, choices=(1, 2), help="1: refinement study, 2: interface sweep")
    p.add_argument("--levels", help="refinement levels a..b (example 1)")
    p.add_argument("--level", dest="sweep_level", type=int, help="mesh level of the sweep (example 2)")
    p.add_argument("--basis", choices=("standard", "hierarchical", "both"))
    p.add_argument("--solvers", help="comma separated subset of cg,dpcg,ssor")
    p.add_argument("--stride", type=int, help="sweep stride in k")
    p.add_argument("--n-sweep", type=int, help="number of interface positions N")
    p.add_argument("--full-sweep", action="store_true", help="stride 1 over all N positions")
    p.add_argument("--kappa1", type=float)
    p.add_argument("--kappa2", type=float)
    p.add_argument("--omega", type=float, help="SSOR relaxation parameter")
    p.add_argument("--tol", type=float, help="absolute residual tolerance")
    p.add_argument("--out", help="output directory")
    p.add_argument("--vtk-every", type=int, help="write VTK every n-th level or sweep point (0: never)")
    p.add_argument("--flux-jump", action="store_const", const=True, default=None,
                   help="add the interface flux jump term to the right hand side")
    p.add_argument("--export-matrices", action="store_const", const=True, default=None,
                   help="write system matrices in MatrixMarket format (example 1)")
    p.add_argument("--workers", type=int, help="worker processes for the sweep")
    p.add_argument("--param-file", help="flat key = value parameter file")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cli = {k: v for k, v in vars(args).items()
           if k not in ("param_file", "verbose", "full_sweep") and v is not None}
    if args.full_sweep:
        cli["stride"] = 1
    try:
        file_params = driver.read_param_file(args.param_file) if args.param_file else {}
        config = driver.merge_config(file_params, driver.normalize_params(cli))
        result = driver.run(config)
    except (ValueError, OSError) as exc:
        print(f"locmodfe: error: {exc}", file=sys.stderr)
        return 2
    if config.test_case == 1:
        for r in result:
            print(f"level {r['level']} {r['basis']:12s} {r['solver']:5s} its {r['iterations']:6d} "
                  f"L2 {r['l2_error']:.3e} H1 {r['h1_error']:.3e}")
    else:
        rows, _ = result
        print(f"{len(rows)} sweep rows written to {config.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
