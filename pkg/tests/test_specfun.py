import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from fracspin.specfun import (
    EULER_GAMMA,
    AltSumAsymptotics,
    alternating_double_sum,
    alternating_double_sum_constant,
    alternating_power_sum,
    alternating_power_sum_constant,
    dirichlet_partial,
    harmonic_partial,
    polygamma,
    zeta,
)


def test_harmonic_examples():
    assert harmonic_partial(1, 2) == 1.0
    assert harmonic_partial(4, 2) == pytest.approx(1 + 1 / 4 + 1 / 9 + 1 / 16, rel=1e-15)
    assert harmonic_partial(4, 2) == pytest.approx(1.4236111111111112, rel=1e-15)


def test_harmonic_euler_maclaurin():
    n = 5000
    approx = math.log(n) + EULER_GAMMA + 1 / (2 * n) - 1 / (12 * n**2)
    assert abs(harmonic_partial(n, 1) - approx) < 1e-14 * 10 + 1 / (120 * n**4)


def test_dirichlet_examples():
    assert dirichlet_partial(2, 1) == 0.5
    assert dirichlet_partial(200000, 2) == pytest.approx(math.pi**2 / 12, abs=1e-10)


@given(st.integers(1, 2000), st.floats(-2.0, 3.0))
def test_dirichlet_harmonic_identity(half, a):
    n = 2 * half
    lhs = dirichlet_partial(n, a)
    rhs = harmonic_partial(n, a) - 2 ** (1 - a) * harmonic_partial(half, a)
    scale = harmonic_partial(n, a)
    assert abs(lhs - rhs) <= 1e-13 * scale + 1e-15


@given(st.integers(1, 3000))
def test_odd_denominator_identity(half):
    n = 2 * half
    odd = np.arange(1, n, 2, dtype=float)
    expected = 2 * math.fsum(odd**-2.0)
    assert harmonic_partial(n, 2) + dirichlet_partial(n, 2) == pytest.approx(expected, rel=1e-14)


def test_polygamma_examples():
    assert polygamma(1, 1.0) == pytest.approx(math.pi**2 / 6, rel=1e-13)
    assert polygamma(1, 0.5) == pytest.approx(math.pi**2 / 2, rel=1e-13)
    assert polygamma(0, 1.0) == pytest.approx(-EULER_GAMMA, rel=1e-13)


@settings(max_examples=200)
@given(st.floats(1e-3, 1e4), st.integers(0, 3))
def test_polygamma_against_scipy(x, m):
    ours = polygamma(m, x)
    ref = float(special.polygamma(m, x))
    assert abs(ours - ref) <= 1e-12 * abs(ref) + 1e-14


def test_polygamma_vectorized():
    x = np.linspace(0.1, 50, 17)
    np.testing.assert_allclose(polygamma(0, x), special.digamma(x), rtol=1e-12)


@given(st.floats(0.5, 100.0))
def test_trigamma_recurrence(x):
    assert polygamma(1, x) - polygamma(1, x + 1) == pytest.approx(1 / x**2, rel=1e-11)


def test_polygamma_domain():
    with pytest.raises(ValueError):
        polygamma(1, 0.0)
    with pytest.raises(ValueError):
        polygamma(0, -2.5)
    with pytest.raises(ValueError):
        polygamma(-1, 1.0)


@pytest.mark.parametrize("s", [-3.5, -2.0, -1.0, -0.5, 0.0, 0.5, 1.5, 2.0, 4.0])
def test_zeta_against_scipy(s):
    ref = {-2.0: 0.0, -1.0: -1 / 12, 0.0: -0.5}.get(s)
    if ref is None:
        ref = float(special.zeta(s, 1)) if s > 1 else None
    if ref is None:
        # values on the critical strip and negative non-integers, frozen from mpmath
        ref = {-3.5: 0.00444101133547943, -0.5: -0.207886224977355, 0.5: -1.46035450880959}[s]
    assert zeta(s) == pytest.approx(ref, rel=1e-12, abs=1e-15)


def test_zeta_pole():
    with pytest.raises(ValueError):
        zeta(1.0)


def test_alternating_sum_examples():
    assert alternating_power_sum(5, 0) == -1
    assert alternating_power_sum(4, 1) == 2
    assert alternating_power_sum(4, 1, mode="asymptotic") == pytest.approx(2.0, abs=1e-14)


def test_alternating_constant_examples():
    # sign follows the continuation (2^(p+1) - 1) zeta(-p) -> -ln 2 as p -> -1
    assert alternating_power_sum_constant(-1) == pytest.approx(-math.log(2), rel=1e-15)
    assert alternating_power_sum_constant(-2) == pytest.approx(-math.pi**2 / 12, rel=1e-12)
    assert alternating_power_sum_constant(0) == -0.5


def test_constant_continuous_at_minus_one():
    eps = 1e-6
    near = 0.5 * (alternating_power_sum_constant(-1 + eps) + alternating_power_sum_constant(-1 - eps))
    assert near == pytest.approx(alternating_power_sum_constant(-1), abs=1e-9)


def test_constant_is_limit_of_partial_sums():
    # for p < 0 the oscillating part vanishes
    assert alternating_power_sum(10**6, -1) == pytest.approx(-math.log(2), abs=1e-6)


def test_asymptotics_record():
    rec = AltSumAsymptotics.for_power(0.5)
    assert rec.leading_coefficient == 0.5
    assert rec.subleading_coefficient == 0.125
    assert rec.constant_C1 == alternating_power_sum_constant(0.5)


@settings(max_examples=150)
@given(st.sampled_from([-2.5, -1.0, -0.5, 0.0, 0.5, 1.0]), st.integers(20, 10**4))
def test_alternating_sum_error_order(p, n):
    exact = alternating_power_sum(n, p)
    asym = alternating_power_sum(n, p, mode="asymptotic")
    # K fitted over n in [20, 1e4]; floor covers rounding of the exact sum
    K = 1.0
    floor = 1e-13 * max(1.0, n**p)
    assert abs(exact - asym) <= K * n ** (p - 3) + floor


def test_auto_mode_matches_exact():
    assert alternating_power_sum(999, 0.5, mode="auto") == alternating_power_sum(999, 0.5)


def test_double_sum_constant_p0():
    # sum_{n<=l} S_n = -ceil(l/2), which fixes C2 = -1/4
    assert alternating_double_sum(10, 0) == -5
    assert alternating_double_sum_constant(0.0, l_fit=2000) == pytest.approx(-0.25, abs=1e-12)


def test_invalid_n():
    with pytest.raises(ValueError):
        harmonic_partial(0, 1)
    with pytest.raises(ValueError):
        alternating_power_sum(0, 1)
