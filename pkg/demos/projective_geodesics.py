"""Reconstruct a projectively equivalent metric on S^2 and test its geodesics.

phi = g + eps * psi with psi in the S*S kernel gives gbar; great circles of
g should be unparametrised geodesics of gbar up to discretisation error.
The first curve and its residual profile go to ``geodesic.csv``.
"""
from projlab.cli import geodesic_experiment
from projlab.geometry import build_round_sphere
from projlab.projective import geodesic_residual_profile


def main(epsilon=0.05, count=20):
    for n_theta in (24, 48):
        grid = build_round_sphere(n_theta)
        res, curves, rec = geodesic_experiment(grid, epsilon, 0, count)
        print(f"N_theta={n_theta}: max residual {res['max_residual']:.3e}, "
              f"h^2 = {grid.h ** 2:.3e}, kernel residual {rec.kernel_residual:.3e}, "
              f"rho range {res['reconstruction']['rho_range']}")
    curves[0].to_csv("geodesic.csv", geodesic_residual_profile(grid, rec, curves[0]))


if __name__ == "__main__":
    main()
