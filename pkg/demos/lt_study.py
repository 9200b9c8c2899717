"""Temporal length-scale study at a single site observing MTCO and MTWA.

Prints, for each L_t, the analysed monthly temperatures, the roughness of
the series and the diagonal of the resolution matrix for January and July.

    python3 demos/lt_study.py
"""
import numpy as np

from palaeovar.diagnostics import lt_study
from palaeovar.synthetic import LT_MTCO, LT_MTWA, lt_problem

MONTHS = "J F M A M J J A S O N D".split()


def main():
    entries = lt_study(lt_problem(), [0.1, 1.0, 2.0])
    print(f"observations: MTCO {LT_MTCO:+.1f} C, MTWA {LT_MTWA:+.1f} C\n")
    print("month  " + "  ".join(f"{m:>6}" for m in MONTHS))
    print("prior  " + "  ".join(f"{v:6.2f}" for v in entries[0].prior_monthly))
    for e in entries:
        print(f"L_t={e.L_t:<3g}" + "  ".join(f"{v:6.2f}" for v in e.analysis_monthly))
    print()
    for e in entries:
        d = np.diag(e.resolution)
        print(f"L_t={e.L_t:<4g} roughness {e.roughness:8.2f}   N_jan {d[1]:.3f}   N_jul {d[7]:.3f}   "
              f"|N - I|_F {e.closeness:.3f}")


if __name__ == "__main__":
    main()
