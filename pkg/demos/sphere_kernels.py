"""Kernel dimensions of S*S and E*E on the round 2-sphere.

Expected: 6 for S*S and 8 for E*E, the latter made of 3 Killing forms
and 5 gradients of degree-2 harmonics.
"""
from projlab.geometry import build_round_sphere
from projlab.operators import eisenhart_E, normal_operator, sinjukov_S
from projlab.spectral import hodge_split, solve_smallest


def main(n_theta=48):
    grid = build_round_sphere(n_theta)
    for name, build, k in (("S*S", sinjukov_S, 16), ("E*E", eisenhart_E, 20)):
        rep = solve_smallest(*_pencil(build, grid), k)
        print(f"{name}: kernel {rep.kernel_count}, gap ratio {rep.gap_ratio:.0f}, flags {rep.flags}")
        print("  smallest:", " ".join(f"{v:.3g}" for v in rep.eigenvalues[:12]))
        if name == "E*E":
            split = hodge_split(grid, rep.eigenvectors[:, : rep.kernel_count])
            print(f"  Hodge split: {split['coexact']} coexact (Killing), {split['exact']} exact (gradient)")


def _pencil(build, grid):
    P = normal_operator(build(grid))
    return P.A, P.M


if __name__ == "__main__":
    main()
