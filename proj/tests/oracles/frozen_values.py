"""Independent high-precision oracle for the frozen constants used in the C++ tests.

Run with: python3 tests/oracles/frozen_values.py
Everything here is evaluated with mpmath at 50 digits and shares no code with
the library.
"""
from itertools import product

import mpmath as mp

mp.mp.dps = 50


def opinion(e):
    k = len(e)
    s = sum(mp.mpf(x) + 1 for x in e)
    return [mp.mpf(x) / s for x in e], mp.mpf(k) / s


def conflict(b1, b2):
    return sum(b1[i] * b2[j] for i, j in product(range(len(b1)), repeat=2) if i != j)


def main():
    print("digamma:")
    for x in ["0.5", "1", "1.5", "2", "3.7", "10", "25.25", "100"]:
        print(f"  {{{x}, {mp.nstr(mp.digamma(mp.mpf(x)), 20)}}},")
    print("trigamma:")
    for x in ["0.5", "1", "1.5", "2", "3.7", "10", "25.25", "100"]:
        print(f"  {{{x}, {mp.nstr(mp.psi(1, mp.mpf(x)), 20)}}},")
    print("lgamma:")
    for x in ["0.001", "0.5", "1.5", "3.7", "10", "25.25", "100", "1000.5"]:
        print(f"  {{{x}, {mp.nstr(mp.loggamma(mp.mpf(x)), 20)}}},")

    b1, u1 = opinion([2, 1, 0])
    b2, u2 = opinion([0, 1, 2])
    c = conflict(b1, b2)
    print("pair C, u:", mp.nstr(c, 20), mp.nstr(u1 * u2 / (1 - c), 20))
    c = conflict(b1, b1)
    print("self C, u:", mp.nstr(c, 20), mp.nstr(u1 * u1 / (1 - c), 20))

    w = [mp.mpf(1), mp.mpf(0)]
    eta = mp.mpf(1)
    ex = [mp.e ** (x / eta) for x in w]
    fused = [(ex[0] * a + ex[1] * b) / sum(ex) for a, b in zip([4, 0], [0, 4])]
    print("fused:", [mp.nstr(v, 20) for v in fused])

    # KL(Dir([1,2]) || Dir([1,1])) by quadrature on the 1-simplex.
    kl = mp.quad(lambda p: 2 * (1 - p) * mp.log(2 * (1 - p)), [0, 1])
    print("kl quad:", mp.nstr(kl, 20), "closed:", mp.nstr(mp.log(2) - mp.mpf(1) / 2, 20))

    p1, p2 = [mp.mpf("0.8"), mp.mpf("0.2")], [mp.mpf("0.2"), mp.mpf("0.8")]
    pbar = [mp.mpf("0.5"), mp.mpf("0.5")]
    kl1 = sum(a * mp.log(a / b) for a, b in zip(p1, pbar))
    kl2 = sum(a * mp.log(a / b) for a, b in zip(p2, pbar))
    print("diversity:", mp.nstr(-(kl1 + kl2) / 2, 20))

    print("entropy [0.8,0.2]:", mp.nstr(-(p1[0] * mp.log(p1[0]) + p1[1] * mp.log(p1[1])), 20))
    print("nll e=[9,1] c=0:", mp.nstr(mp.log(mp.mpf(12) / 10), 20))
    print("n_1:", mp.nstr(1000 * mp.mpf(100) ** (-mp.mpf(1) / 9), 20))
    print("counts:", [int(mp.nint(1000 * mp.mpf(100) ** (-mp.mpf(k) / 9))) for k in range(10)])
    print("softplus(0):", mp.nstr(mp.log(2), 20))


if __name__ == "__main__":
    main()
