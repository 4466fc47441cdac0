"""Command-line shim that solves an MPS file with HiGHS (``highspy``).

Usage: ``python -m mgsched.milp.highs_runner MODEL.mps OUT.sol [--gap G]``.
Writes the ``name value`` solution layout understood by the bridge.
"""
import argparse
import sys


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="highs_runner")
    ap.add_argument("mps")
    ap.add_argument("sol")
    ap.add_argument("--gap", type=float, default=1e-9)
    ap.add_argument("--time-limit", type=float, default=None)
    args = ap.parse_args(argv)

    import highspy

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("mip_rel_gap", args.gap)
    h.setOptionValue("mip_feasibility_tolerance", 1e-9)
    h.setOptionValue("primal_feasibility_tolerance", 1e-9)
    if args.time_limit:
        h.setOptionValue("time_limit", args.time_limit)
    if h.readModel(args.mps) != highspy.HighsStatus.kOk:
        print(f"cannot read {args.mps}", file=sys.stderr)
        return 1
    h.run()
    status = h.getModelStatus()
    names = h.getLp().col_names_
    words = {
        highspy.HighsModelStatus.kOptimal: "optimal",
        highspy.HighsModelStatus.kInfeasible: "infeasible",
        highspy.HighsModelStatus.kUnbounded: "unbounded",
        highspy.HighsModelStatus.kUnboundedOrInfeasible: "infeasible",
        highspy.HighsModelStatus.kTimeLimit: "time_limit",
    }
    word = words.get(status, "node_limit")
    with open(args.sol, "w") as fh:
        fh.write(f"status {word}\n")
        if word in ("optimal", "time_limit", "node_limit"):
            info = h.getInfo()
            fh.write(f"objective {info.objective_function_value!r}\n")
            for name, val in zip(names, h.getSolution().col_value):
                fh.write(f"{name} {val!r}\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
