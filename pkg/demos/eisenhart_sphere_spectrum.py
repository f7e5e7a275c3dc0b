"""E*E clusters on S^2 next to the derived and the published closed forms.

A single resolution is used here; the ``convergence`` CLI command adds the
Richardson extrapolation over three grids.
"""
import numpy as np

from projlab.geometry import build_round_sphere
from projlab.operators import eisenhart_E, normal_operator
from projlab.spectral import analytic_sphere_spectrum, clusters, derived_sphere_spectrum, exact_fraction, solve_smallest


def main(n_theta=32, k=40):
    grid = build_round_sphere(n_theta)
    P = normal_operator(eisenhart_E(grid))
    rep = solve_smallest(P.A, P.M, k)
    kc = rep.kernel_count
    derived = {lab: v for lab, v, _ in derived_sphere_spectrum(2, 4)}
    published = dict(analytic_sphere_spectrum("EstarE", 2, 4))
    print(f"kernel: {kc}")
    print(f"{'cluster':>10} {'mult':>4} {'branch':>8}")
    for mean, idx in clusters(rep.eigenvalues[kc:], rtol=0.05):
        if kc + idx[-1] == k - 1:
            break  # may be cut off by the end of the sample
        fr = np.mean([exact_fraction(grid, rep.eigenvectors[:, kc + i]) for i in idx])
        print(f"{mean:10.2f} {len(idx):4d} {'exact' if fr > 0.5 else 'coexact':>8}")
    print("derived:  ", {k: v for k, v in derived.items() if v > 0})
    print("published:", {k: v for k, v in published.items() if v > 0})


if __name__ == "__main__":
    main()
