"""Two different coefficient sets that the boundary cannot tell apart.

We build a random pair (A, q), push it through a gauge transform with a
potential Psi that vanishes together with its normal derivative on the lateral
boundary, and compare local DN responses for a few boundary probes.  The
coefficients differ by order 0.1, the DN data differ only at the level of the
discretisation error, and that level falls when the grid is refined.
"""

import numpy as np

from localdn import build_grid, dn_apply, face_patch_probe, gauge_transform, make_gauge, synth_pair


def dn_gap(nodes: int, nt: int) -> tuple:
    grid = build_grid(nodes, nt=nt)
    pair = synth_pair(grid, seed=1, amplitude=0.3)
    gauge = make_gauge(grid, seed=3, amplitude=0.1)
    other = gauge_transform(pair, gauge)
    num = den = 0.0
    for face in ("x1-", "x1+", "x2+", "x3+"):
        f = face_patch_probe(grid, face)
        r1, r2 = dn_apply(pair, f).output, dn_apply(other, f).output
        num += sum(np.linalg.norm(r1[k] - r2[k]) ** 2 for k in r1)
        den += sum(np.linalg.norm(r1[k]) ** 2 for k in r1)
    return float(np.sqrt(num / den)), float(np.abs(gauge.grad_psi).max())


if __name__ == "__main__":
    previous = None
    for nodes, nt in ((9, 8), (17, 16)):
        gap, grad_size = dn_gap(nodes, nt)
        note = "" if previous is None else f"  (ratio {previous / gap:.2f})"
        print(f"{nodes:3d}^3 grid, {nt:3d} steps: relative DN gap {gap:.2e}, "
              f"max |grad Psi| {grad_size:.3f}{note}")
        previous = gap
