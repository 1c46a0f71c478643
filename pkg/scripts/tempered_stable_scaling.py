"""Small-jump second moment of the Gauss-tempered stable measure against the untempered
closed form ``r^(2-alpha) W / (2-alpha)`` at ``r = sqrt(eps) |ln eps|``.

Usage::

    python3 scripts/tempered_stable_scaling.py
"""

import math

from levyexit import GaussTemperedStable


def main():
    nu = GaussTemperedStable(alpha=0.5, gamma=1.0)
    print("eps, r, |ln eps| M2(r), |ln eps| bound(r), relative gap, gamma r^2 (2-alpha) / (2 (4-alpha))")
    for k in range(1, 9):
        eps = 10.0 ** -k
        L = abs(math.log(eps))
        r = math.sqrt(eps) * L
        m2, bound = L * nu.second_moment_below(r), L * nu.second_moment_bound(r)
        # leading term of the tempering correction
        lead = nu.gamma * r * r * (2 - nu.alpha) / (2 * (4 - nu.alpha))
        print(f"{eps:.0e}, {r:.5f}, {m2:.6e}, {bound:.6e}, {abs(m2 - bound) / bound:.3e}, {lead:.3e}")


if __name__ == "__main__":
    main()
