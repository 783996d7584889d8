"""Modified Bessel functions of the second kind, integer orders 0, 1, 2.

Power series for z <= 2, Steed's continued fraction (CF2) for z > 2;
higher orders come from the upward recurrence, which is stable for K.
"""

from __future__ import annotations

import math

EULER_GAMMA = 0.57721566490153286061
_SWITCH = 2.0
_EPS = 1e-16
_MAXIT = 10_000


def _k01_series(z: float) -> tuple[float, float]:
    """K0 and K1 by their ascending series (A&S 9.6.11/9.6.13)."""
    y = 0.25 * z * z
    lnh = math.log(0.5 * z)

    # term_k = y^k / (k!)^2 ; harmonic number H_k
    term = 1.0
    harm = 0.0
    i0 = 1.0
    k0_tail = 0.0
    # second series for K1 uses y^k / (k! (k+1)!) and psi(k+1) + psi(k+2)
    term1 = 1.0
    i1 = 1.0
    k1_tail = -2.0 * EULER_GAMMA + 1.0  # psi(1) + psi(2)
    k = 0
    while True:
        k += 1
        term *= y / (k * k)
        harm += 1.0 / k
        i0 += term
        k0_tail += term * harm
        term1 *= y / (k * (k + 1))
        i1 += term1
        psi_sum = -2.0 * EULER_GAMMA + 2.0 * harm + 1.0 / (k + 1)
        k1_tail += term1 * psi_sum
        if term < _EPS * i0 and term1 < _EPS * i1:
            break
    k0 = -(lnh + EULER_GAMMA) * i0 + k0_tail
    i1 *= 0.5 * z
    k1 = 1.0 / z + lnh * i1 - 0.25 * z * k1_tail
    return k0, k1


def _k01_steed(z: float) -> tuple[float, float]:
    """K0 and K1 by Steed's method on the CF2 continued fraction."""
    b = 2.0 * (1.0 + z)
    d = 1.0 / b
    h = delh = d
    q1, q2 = 0.0, 1.0
    a1 = 0.25
    q = c = a1
    a = -a1
    s = 1.0 + q * delh
    for i in range(1, _MAXIT):
        a -= 2 * i
        c = -a * c / (i + 1.0)
        qnew = (q1 - b * q2) / a
        q1, q2 = q2, qnew
        q += c * qnew
        b += 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h += delh
        dels = q * delh
        s += dels
        if abs(dels / s) < _EPS:
            break
    else:
        raise ArithmeticError(f"CF2 failed to converge at z={z}")
    h *= a1
    k0 = math.sqrt(math.pi / (2.0 * z)) * math.exp(-z) / s
    k1 = k0 * (z + 0.5 - h) / z
    return k0, k1


def k0_k1(z: float) -> tuple[float, float]:
    if z <= 0:
        raise ValueError(f"K_nu(z) requires z > 0, got {z}")
    return _k01_series(z) if z <= _SWITCH else _k01_steed(z)


def kn(n: int, z: float) -> float:
    """K_n(z) for integer n >= 0 and z > 0."""
    n = abs(int(n))
    k0, k1 = k0_k1(z)
    if n == 0:
        return k0
    km, k = k0, k1
    for j in range(1, n):
        km, k = k, km + (2.0 * j / z) * k
    return k


def k1(z: float) -> float:
    return kn(1, z)


def k2(z: float) -> float:
    return kn(2, z)
