"""Assembled S*S and E*E on the flat 2-torus against the Fourier-symbol oracle."""
import numpy as np

from projlab.geometry import build_flat_torus
from projlab.operators import eisenhart_E, normal_operator, sinjukov_S
from projlab.spectral import solve_smallest, torus_fourier_spectrum


def main(N=32, k=12):
    grid = build_flat_torus(2, N)
    for tag, build in (("SstarS", sinjukov_S), ("EstarE", eisenhart_E)):
        P = normal_operator(build(grid))
        mu = solve_smallest(P.A, P.M, k).eigenvalues
        ref = torus_fourier_spectrum(2, N, 2 * np.pi, tag)[:k]
        print(f"{tag}: max relative deviation {np.abs(mu - ref).max() / ref.max():.2e}")
        for a, b in zip(mu, ref):
            print(f"  {a:14.8f} {b:14.8f}")


if __name__ == "__main__":
    main()
