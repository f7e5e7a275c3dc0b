"""Injectivity certificates for the principal symbols and the E*E symbol check."""
import numpy as np

from projlab.symbols import injectivity_certificate, sigma_EstarE_check


def main():
    for n in range(2, 9):
        s = injectivity_certificate("S", n, trials=100, seed=7)
        e = injectivity_certificate("E", n, trials=100, seed=7)
        dev = sigma_EstarE_check(n, np.eye(n)[0])
        print(f"n={n}: min sv S {s['min_singular_value']:.3f}, E {e['min_singular_value']:.3f}, "
              f"E*E symbol vs scalar claim {dev:.3f}")


if __name__ == "__main__":
    main()
