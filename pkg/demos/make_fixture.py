"""
Regenerate the bundled 5-cell / 2-site fixture.

The fixture is small enough to read by eye: a 1 x 5 strip of 2-degree cells
between 36 and 38 N, two ensemble members and two pollen-style sites whose
values are anomalies relative to a smooth modern climate.  Run from the
repository root:

    python3 demos/make_fixture.py
"""
from pathlib import Path

import numpy as np

from palaeovar.ingest import P_COLS, S_COLS, T_COLS, write_gridded

OUT = Path(__file__).resolve().parents[1] / "src" / "palaeovar" / "data" / "fixture"
PHASE = 2 * np.pi * np.arange(12) / 12

# Source lattice is a bit wider than the target strip, as a model grid would be.
lat1, lon1 = np.arange(34.0, 41.0, 2.0), np.arange(18.0, 33.0, 2.0)
LA, LO = [a.ravel() for a in np.meshgrid(lat1, lon1, indexing="ij")]


def modern_fields():
    T = 15.0 - 0.5 * (LA - 37.0)[:, None] + 0.1 * (LO - 25.0)[:, None] - 9.0 * np.cos(PHASE)[None, :]
    annual = 600.0 + 5.0 * (LO - 25.0) - 10.0 * (LA - 37.0)
    weights = (1.0 + 0.6 * np.cos(PHASE)) / 12.0            # wet winters
    P = annual[:, None] * weights[None, :]
    S = np.clip(0.4 + 0.15 * np.cos(PHASE)[None, :] + 0.005 * (LA - 37.0)[:, None], 0, 1)
    return T, P, S


def columns(T, P, S=None):
    cols = {n: T[:, k] for k, n in enumerate(T_COLS)}
    cols.update({n: P[:, k] for k, n in enumerate(P_COLS)})
    if S is not None:
        cols.update({n: S[:, k] for k, n in enumerate(S_COLS)})
    return cols


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    T0, P0, S0 = modern_fields()
    write_gridded(OUT / "modern.tsv", LA, LO, columns(T0, P0, S0))

    # Two members: different pre-industrial biases and different glacial anomalies.
    for name, bias, dT, p_ratio, dS in (("m1", 0.5, -6.0, 0.75, 0.05), ("m2", -0.3, -8.0, 0.65, 0.10)):
        T_pi, P_pi = T0 + bias, P0 * 1.05
        T_lgm = T_pi + dT - 0.1 * (LA - 37.0)[:, None]
        P_lgm = P_pi * p_ratio
        write_gridded(OUT / f"{name}_pi.tsv", LA, LO, columns(T_pi, P_pi, S0))
        write_gridded(OUT / f"{name}_lgm.tsv", LA, LO, columns(T_lgm, P_lgm, np.clip(S0 + dS, 0, 1)))

    (OUT / "sites.csv").write_text(
        "# Two synthetic sites; values are anomalies relative to the modern baseline.\n"
        "site_id,lat,lon,variable,anomaly_mean,anomaly_se,method\n"
        "SITE_A,37.2,22.5,MTCO,-10.0,2.0,pollen\n"
        "SITE_A,37.2,22.5,MTWA,-4.0,1.5,pollen\n"
        "SITE_A,37.2,22.5,MAP,-200.0,80.0,pollen\n"
        "SITE_B,36.5,27.1,MAT,-6.0,1.0,pollen\n"
        "SITE_B,36.5,27.1,GDD5,-800.0,300.0,pollen\n"
        "SITE_B,36.5,27.1,MI,-0.3,0.2,pollen\n",
        encoding="utf-8")

    (OUT / "config.yaml").write_text(
        "# 5-cell / 2-site fixture; input paths are relative to this file.\n"
        "region: {lat_min: 36.0, lat_max: 38.0, lon_min: 20.0, lon_max: 30.0, resolution: 2.0}\n"
        "inputs:\n"
        "  sites: sites.csv\n"
        "  sites_are_anomalies: true\n"
        "  modern: modern.tsv\n"
        "  members:\n"
        "    - {lgm: m1_lgm.tsv, pi: m1_pi.tsv}\n"
        "    - {lgm: m2_lgm.tsv, pi: m2_pi.tsv}\n"
        "covariance: {L_s: 400.0, L_t: 1.0}\n"
        "radiation: {model: constant, value: 100.0}\n"
        "seed: 0\n",
        encoding="utf-8")
    print(f"fixture written to {OUT}")


if __name__ == "__main__":
    main()
