"""The bookkeeping behind the smoothing estimate, in numbers.

Prints the decay exponents for a few diffusion strengths, the gain factor
gamma of one sup-norm iteration step together with the integrability
threshold where the iteration starts to help, and a short ladder of
integrability exponents showing the divergence that upgrades l1 data to
bounded solutions.
"""
from nfpelab.analysis import (
    SmoothingParams,
    gamma_exponent,
    moser_sequence,
    p0_threshold,
    smoothing_exponents,
)


def main():
    print("decay of |u(t)|_inf <= C t^(-s) |u0|_1^q, one dimension:")
    for alpha in (1.0, 1.5, 2.0, 3.0):
        s, q = smoothing_exponents(1, alpha)
        print(f"  alpha = {alpha:4.1f}:  s = {s:.4f}, q = {q:.4f}")

    print("iteration gain gamma (d = 3, alpha = 2):")
    for p0 in (1.5, 2.0, 8.0 / 3.0):
        g = gamma_exponent(SmoothingParams(d=3, alpha=2.0, p0=p0))
        print(f"  p0 = {p0:.4f}:  gamma = {g:.6f}")
    print(f"  admissible cap: p0 < {p0_threshold(2.0, 3):.6f}")

    print("integrability ladder from p = 2 (d = 3, alpha = 2):")
    ladder = moser_sequence(SmoothingParams(d=3, alpha=2.0, p0=2.0), n_terms=4)
    print("  " + " -> ".join(f"{p:g}" for p in ladder))


if __name__ == "__main__":
    main()
