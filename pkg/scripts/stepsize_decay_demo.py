"""Watch the linesearch cope with a drift that is not Lipschitz at its root.

The signed-sqrt instance with c = 0 has its solution exactly where the
operator's slope blows up, so accepted stepsizes keep shrinking while every
individual linesearch stays finite. Prints a decimated table of iterate
norm, accepted stepsize, and trial count for the forward block.

    python scripts/stepsize_decay_demo.py
"""

import numpy as np

import projsplit as ps


def main():
    spec, _ = ps.build("signed_sqrt", {"dim": 4, "c": 0.0})
    cfg = ps.EngineConfig(max_iters=10000, tol_primal=1e-12, tol_dual=1e-12)
    trace = ps.run(spec, cfg)

    print(f"status: {trace.status} after {trace.iterations} iterations")
    print(f"{'iter':>6} {'||z||':>12} {'rho_hat':>12} {'trials':>7}")
    marks = {1, 2, 5, 10, 30, 100, 300, 1000, 3000, 10000}
    norm_z = None
    for record in trace.records:
        if record.iteration in marks or record.iteration == trace.iterations:
            print(f"{record.iteration:>6} {record.max_primal_residual:>12.3e} "
                  f"{record.stepsizes[0]:>12.3e} {record.backtracks[0]:>7}")
    final = trace.final_point.z
    print(f"final ||z|| = {np.linalg.norm(final.entries):.3e}")
    worst = max(max(r.backtracks) for r in trace.records)
    print(f"worst linesearch trial count: {worst} (cap {cfg.max_backtracks})")


if __name__ == "__main__":
    main()
