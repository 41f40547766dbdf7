"""Special functions and alternating power sums.

Harmonic and Dirichlet partial sums, digamma/trigamma (and higher polygamma)
for real positive arguments, the Riemann zeta function on the real line, and
the asymptotic expansion of the alternating power sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EULER_GAMMA = 0.57721566490153286061

# B_2, B_4, ..., B_20
_BERNOULLI_EVEN = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
)

# partial sums are summed exactly below this length
EXACT_SUM_LIMIT = 10**6


def _powers(n: int, a: float) -> np.ndarray:
    k = np.arange(1, n + 1, dtype=float)
    return k ** (-a)


def harmonic_partial(n: int, a: float) -> float:
    """Generalized harmonic number ``sum_{k=1}^n k^{-a}`` by direct summation."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    # smallest terms first
    return math.fsum(_powers(n, a)[::-1])


def dirichlet_partial(n: int, a: float) -> float:
    """Alternating partial sum ``sum_{k=1}^n (-1)^(k-1) k^{-a}``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    terms = _powers(n, a)
    terms[1::2] *= -1.0
    return math.fsum(terms[::-1])


def _polygamma_asymptotic(m: int, x: np.ndarray) -> np.ndarray:
    inv = 1.0 / x
    inv2 = inv * inv
    if m == 0:
        out = np.log(x) - 0.5 * inv
        p = inv2.copy()
        for k, b in enumerate(_BERNOULLI_EVEN, start=1):
            out -= b / (2 * k) * p
            p = p * inv2
        return out
    sign = -1.0 if m % 2 == 0 else 1.0
    out = math.factorial(m - 1) * inv**m + math.factorial(m) * 0.5 * inv ** (m + 1)
    p = inv ** (m + 2)
    for k, b in enumerate(_BERNOULLI_EVEN, start=1):
        coef = b * math.factorial(2 * k + m - 1) / math.factorial(2 * k)
        out = out + coef * p
        p = p * inv2
    return sign * out


def polygamma(m: int, x):
    """Polygamma function ``psi^(m)(x)`` for real ``x > 0``.

    Arguments below the asymptotic threshold are shifted upward with the
    recurrence ``psi^(m)(x) = psi^(m)(x+1) - (-1)^m m! / x^(m+1)`` and then
    evaluated with the Bernoulli asymptotic series. Accepts scalars or arrays.
    """
    if m < 0 or int(m) != m:
        raise ValueError(f"order m must be a non-negative integer, got {m}")
    m = int(m)
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise ValueError("polygamma is only defined here for x > 0")
    threshold = 10.0 + m
    xs = arr.copy()
    correction = np.zeros_like(xs)
    sign = -1.0 if m % 2 else 1.0  # (-1)^m
    mfact = math.factorial(m)
    while True:
        low = xs < threshold
        if not np.any(low):
            break
        correction[low] -= sign * mfact / xs[low] ** (m + 1)
        xs[low] += 1.0
    out = _polygamma_asymptotic(m, xs) + correction
    if np.ndim(x) == 0:
        return float(out)
    return out


def digamma(x):
    return polygamma(0, x)


def trigamma(x):
    return polygamma(1, x)


def _zeta_euler_maclaurin(s: float, n_head: int = 24) -> float:
    head = math.fsum((np.arange(1, n_head, dtype=float) ** (-s))[::-1])
    nf = float(n_head)
    tail = nf ** (1.0 - s) / (s - 1.0) + 0.5 * nf ** (-s)
    rising = s  # s (s+1) ... (s+2j-2)
    for j, b in enumerate(_BERNOULLI_EVEN, start=1):
        tail += b / math.factorial(2 * j) * rising * nf ** (-s - 2 * j + 1)
        rising *= (s + 2 * j - 1) * (s + 2 * j)
    return head + tail


def zeta(s: float) -> float:
    """Riemann zeta function for real ``s != 1`` (analytic continuation for s < 1).

    Negative arguments go through the functional equation
    ``zeta(s) = 2^s pi^(s-1) sin(pi s / 2) Gamma(1-s) zeta(1-s)``.
    """
    s = float(s)
    if s == 1.0:
        raise ValueError("zeta has a pole at s = 1")
    if s == 0.0:
        return -0.5
    if s < 0 and s == round(s) and int(s) % 2 == 0:
        return 0.0  # trivial zeros
    if s <= -1.0:
        return (
            2.0**s
            * math.pi ** (s - 1.0)
            * math.sin(math.pi * s / 2.0)
            * math.gamma(1.0 - s)
            * _zeta_euler_maclaurin(1.0 - s)
        )
    return _zeta_euler_maclaurin(s)


@dataclass(frozen=True)
class AltSumAsymptotics:
    """Coefficients of ``sum_{k<=n} (-1)^k k^p ~ (-1)^n [a n^p + b n^(p-1)] + C1``."""

    leading_coefficient: float
    subleading_coefficient: float
    constant_C1: float
    power_p: float

    @classmethod
    def for_power(cls, p: float) -> "AltSumAsymptotics":
        return cls(0.5, p / 4.0, alternating_power_sum_constant(p), float(p))

    def evaluate(self, n: int) -> float:
        sgn = -1.0 if n % 2 else 1.0
        p = self.power_p
        return (
            sgn * (self.leading_coefficient * n**p + self.subleading_coefficient * n ** (p - 1))
            + self.constant_C1
        )


def alternating_power_sum_constant(p: float) -> float:
    """Constant term C1 of the alternating power sum expansion.

    For p = -1 this is the limit of ``(2^(p+1) - 1) zeta(-p)``, i.e. -ln 2.
    """
    if p == -1:
        return -math.log(2.0)
    return (2.0 ** (p + 1) - 1.0) * zeta(-p)


def alternating_power_sum(n: int, p: float, mode: str = "exact") -> float:
    """``sum_{k=1}^n (-1)^k k^p``.

    ``mode`` is ``"exact"`` (direct summation), ``"asymptotic"`` (Euler-type
    expansion, error O(n^(p-3))) or ``"auto"`` (exact below ``EXACT_SUM_LIMIT``).
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if mode == "auto":
        mode = "exact" if n < EXACT_SUM_LIMIT else "asymptotic"
    if mode == "asymptotic":
        return AltSumAsymptotics.for_power(p).evaluate(n)
    if mode != "exact":
        raise ValueError(f"unknown mode {mode!r}")
    k = np.arange(1, n + 1, dtype=float)
    terms = k**p
    terms[0::2] *= -1.0
    return math.fsum(terms)


def alternating_double_sum(l: int, p: float) -> float:
    """``sum_{n=1}^l sum_{k=1}^n (-1)^k k^p`` by direct summation."""
    k = np.arange(1, l + 1, dtype=float)
    terms = k**p
    terms[0::2] *= -1.0
    inner = np.cumsum(terms)
    return math.fsum(inner)


def alternating_double_sum_constant(p: float, l_fit: int = 20000) -> float:
    """Fitted constant C2 of the double alternating sum.

    No closed form is available; C2 is estimated as the average of the exact
    double sum minus its known growing terms at two consecutive lengths, which
    cancels the leading oscillating remainder.
    """
    c1 = alternating_power_sum_constant(p)

    def rest(l: int) -> float:
        sgn = -1.0 if l % 2 else 1.0
        return alternating_double_sum(l, p) - sgn / 4.0 * (l**p + p * l ** (p - 1)) - c1 * l

    return 0.5 * (rest(l_fit) + rest(l_fit + 1))
