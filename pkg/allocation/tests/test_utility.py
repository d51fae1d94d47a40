"""
Unit tests for the utility families.

Reference values come from extended-precision evaluation of the textbook
formulas with mpmath.
"""

import math

import mpmath
import numpy as np
from django.test import SimpleTestCase

from allocation.exceptions import InvalidParameterError, RateDomainError
from allocation.utility import (
    LogarithmicUtility,
    SigmoidUtility,
    derive_constants,
    evaluate,
    log_utility,
    log_utility_slope,
    utility_from_parameters,
)

mpmath.mp.dps = 50


def mp_sigmoid(a, b, r):
    """U(r) = c (1 / (1 + e^(-a(r-b))) - d) with c, d from their definitions."""
    a, b, r = mpmath.mpf(a), mpmath.mpf(b), mpmath.mpf(r)
    eab = mpmath.exp(a * b)
    c = (1 + eab) / eab
    d = 1 / (1 + eab)
    return c * (1 / (1 + mpmath.exp(-a * (r - b))) - d)


def mp_log(k, r_max, r):
    k, r_max, r = mpmath.mpf(k), mpmath.mpf(r_max), mpmath.mpf(r)
    return mpmath.log(1 + k * r) / mpmath.log(1 + k * r_max)


def random_specs(count=100, seed=7):
    """Specs drawn from a in [0.5, 5], b in [5, 20], k in [0.5, 20], r_max in [50, 200]."""
    rng = np.random.default_rng(seed)
    specs = []
    for _ in range(count // 2):
        specs.append(SigmoidUtility(a=rng.uniform(0.5, 5), b=rng.uniform(5, 20)))
        specs.append(LogarithmicUtility(k=rng.uniform(0.5, 20), r_max=rng.uniform(50, 200)))
    return specs


class DeriveConstantsTest(SimpleTestCase):
    """Test cases for the sigmoid normalizer and offset."""

    def test_table_values(self):
        """Test (a=3, b=10) against extended precision."""
        c, d = derive_constants(3, 10)
        eab = mpmath.exp(30)
        self.assertAlmostEqual(c, float((1 + eab) / eab), places=15)
        self.assertAlmostEqual(d / float(1 / (1 + eab)), 1.0, places=12)
        self.assertAlmostEqual((c - 1) / 9.36e-14, 1.0, places=2)

    def test_ln2_gives_exact_thirds(self):
        """Test e^(ab) = 2 gives d = 1/3 and c = 3/2."""
        c, d = derive_constants(1, math.log(2))
        self.assertAlmostEqual(c, 1.5, places=14)
        self.assertAlmostEqual(d, 1 / 3, places=14)

    def test_identity_holds(self):
        """Test c * (1 - d) == 1 for a*b up to 30."""
        for a, b in [(0.5, 0.1), (1, 1), (3, 10), (5, 6), (1, 30)]:
            c, d = derive_constants(a, b)
            self.assertAlmostEqual(c * (1 - d), 1.0, delta=1e-12)

    def test_large_product_does_not_overflow(self):
        """Test a*b far beyond 700 falls back to the asymptotic forms."""
        c, d = derive_constants(10, 500)
        self.assertEqual(c, 1.0)
        self.assertTrue(0.0 < d < 1e-300)
        self.assertFalse(math.isnan(c) or math.isnan(d))

    def test_offset_stays_positive_past_underflow(self):
        """Test d keeps the smallest positive float once e^(-ab) underflows."""
        _, d = derive_constants(1, 800)
        self.assertEqual(d, 5e-324)
        self.assertGreater(derive_constants(1, 700)[1], 5e-324)

    def test_invalid_inputs(self):
        """Test non-positive and non-finite parameters are rejected."""
        for a, b in [(0, 1), (-1, 1), (1, 0), (math.inf, 1), (1, math.nan), ('x', 1)]:
            with self.assertRaises(InvalidParameterError):
                derive_constants(a, b)

    def test_constructor_rejects_bad_parameters(self):
        """Test the utility classes validate their own parameters."""
        with self.assertRaises(InvalidParameterError):
            SigmoidUtility(a=-3, b=10)
        with self.assertRaises(InvalidParameterError):
            LogarithmicUtility(k=1, r_max=0)


class EvaluateTest(SimpleTestCase):
    """Test cases for utility evaluation."""

    def test_zero_rate(self):
        """Test U(0) = 0 for both families."""
        self.assertEqual(evaluate(SigmoidUtility(3, 10), 0.0), 0.0)
        self.assertEqual(evaluate(LogarithmicUtility(1.1, 100), 0.0), 0.0)

    def test_sigmoid_inflection(self):
        """Test U(b) = c (1/2 - d) = 1/2 for a steep sigmoid."""
        spec = SigmoidUtility(3, 10)
        self.assertAlmostEqual(evaluate(spec, 10.0), 0.5, delta=1e-12)
        self.assertAlmostEqual(evaluate(spec, 10.0), spec.c * (0.5 - spec.d), delta=1e-15)

    def test_log_normalized_at_r_max(self):
        """Test U(r_max) = 1."""
        self.assertAlmostEqual(evaluate(LogarithmicUtility(1.1, 100), 100.0), 1.0, places=14)

    def test_log_mid_value(self):
        """Test Logarithmic(k=3, r_max=100) at r=10 equals log(31)/log(301)."""
        value = evaluate(LogarithmicUtility(3, 100), 10.0)
        self.assertAlmostEqual(value, float(mp_log(3, 100, 10)), places=14)
        self.assertAlmostEqual(value, math.log(31) / math.log(301), places=14)

    def test_matches_textbook_formula(self):
        """Test the stable sigmoid form against the c, d formula at extended precision."""
        for a, b in [(3, 10), (1, 10.6), (0.5, 20), (3, 17.9)]:
            spec = SigmoidUtility(a, b)
            for r in [1e-6, 0.3, b / 2, b, 1.5 * b, 4 * b]:
                expected = float(mp_sigmoid(a, b, r))
                self.assertAlmostEqual(evaluate(spec, r) / expected, 1.0, delta=1e-12)

    def test_sigmoid_bounds(self):
        """Test 0 <= U <= 1 (saturating in floating point) and |U(b) - 1/2| <= 2 e^(-ab)."""
        for spec in random_specs()[::2]:
            rates = np.linspace(0, 10 * spec.b, 500)
            values = evaluate(spec, rates)
            self.assertTrue(np.all(values >= 0))
            self.assertTrue(np.all(values <= 1))
            self.assertLessEqual(abs(evaluate(spec, spec.b) - 0.5), 2 * math.exp(-spec.a * spec.b) + 1e-15)

    def test_strictly_increasing(self):
        """Test U is strictly increasing for every random spec."""
        for spec in random_specs():
            upper = spec.b + 5 / spec.a if spec.kind == 'sigmoid' else 2 * spec.r_max
            rates = np.linspace(0, upper, 400)
            self.assertTrue(np.all(np.diff(evaluate(spec, rates)) > 0), spec)

    def test_log_may_exceed_one(self):
        """Test values above r_max are not clamped."""
        self.assertGreater(evaluate(LogarithmicUtility(1, 100), 200.0), 1.0)

    def test_array_and_scalar(self):
        """Test arrays come back as arrays and scalars as floats."""
        spec = LogarithmicUtility(1, 100)
        self.assertIsInstance(evaluate(spec, 5), float)
        self.assertEqual(evaluate(spec, np.array([1.0, 2.0, 3.0])).shape, (3,))

    def test_negative_rate(self):
        """Test negative or non-finite rates are rejected."""
        spec = SigmoidUtility(3, 10)
        for r in [-1e-9, math.nan, math.inf]:
            with self.assertRaises(RateDomainError):
                evaluate(spec, r)


class LogUtilityTest(SimpleTestCase):
    """Test cases for log-utilities and their slopes."""

    def test_log_at_r_max(self):
        """Test log U(r_max) = 0."""
        self.assertAlmostEqual(log_utility(LogarithmicUtility(1, 100), 100.0), 0.0, places=14)

    def test_sigmoid_inflection(self):
        """Test log U(b) = ln(1/2)."""
        self.assertAlmostEqual(log_utility(SigmoidUtility(3, 10), 10.0), math.log(0.5), delta=1e-12)

    def test_sigmoid_saturated(self):
        """Test log U far above b keeps full relative precision."""
        expected = float(mpmath.log(mp_sigmoid(1, 5, 20)))
        value = log_utility(SigmoidUtility(1, 5), 20.0)
        self.assertAlmostEqual(value / expected, 1.0, delta=1e-9)
        self.assertAlmostEqual(value, -3.06e-7, delta=5e-9)

    def test_zero_rate_rejected(self):
        """Test log U(0) is outside the domain."""
        with self.assertRaises(RateDomainError):
            log_utility(SigmoidUtility(3, 10), 0.0)
        with self.assertRaises(RateDomainError):
            log_utility_slope(LogarithmicUtility(1, 100), 0.0)

    def test_log_concavity(self):
        """Test second differences of log U are at most 1e-9 on a 1% grid."""
        for spec in random_specs():
            eps = 0.01 * spec.rate_scale
            grid = eps * np.arange(1, 500)
            second = np.diff(log_utility(spec, grid), 2)
            self.assertLessEqual(second.max(), 1e-9, spec)

    def test_slope_closed_forms(self):
        """Test the slope at the worked examples."""
        self.assertAlmostEqual(log_utility_slope(LogarithmicUtility(1, 100), math.e - 1), 1 / math.e, places=14)
        self.assertAlmostEqual(log_utility_slope(LogarithmicUtility(1, 7), math.e - 1), 1 / math.e, places=14)
        self.assertAlmostEqual(log_utility_slope(SigmoidUtility(3, 10), 10.0), 1.5, delta=1e-12)

    def test_slope_matches_textbook_form(self):
        """Test the slope against a S (1 - S) / (S - d)."""
        spec = SigmoidUtility(1, 10.6)
        for r in [0.5, 5.0, 10.6, 20.0]:
            S = 1 / (1 + math.exp(-(r - 10.6)))
            expected = S * (1 - S) / (S - spec.d)
            self.assertAlmostEqual(log_utility_slope(spec, r) / expected, 1.0, delta=1e-9)

    def test_slope_matches_finite_differences(self):
        """Test the slope against central differences at 100 random points per spec."""
        rng = np.random.default_rng(11)
        h = 1e-6
        for spec in random_specs(20):
            if spec.kind == 'sigmoid':
                rates = rng.uniform(0.05 * spec.b, spec.b + 5 / spec.a, size=100)
            else:
                rates = rng.uniform(0.05, 1.5, size=100) * spec.r_max
            numeric = (log_utility(spec, rates + h) - log_utility(spec, rates - h)) / (2 * h)
            analytic = log_utility_slope(spec, rates)
            np.testing.assert_allclose(analytic, numeric, rtol=1e-5)

    def test_slope_positive_and_decreasing(self):
        """Test the slope is strictly positive and strictly decreasing."""
        for spec in random_specs():
            rates = np.linspace(0.01, 3, 300) * spec.rate_scale
            slopes = log_utility_slope(spec, rates)
            self.assertTrue(np.all(slopes > 0))
            self.assertTrue(np.all(np.diff(slopes) < 0))


class UtilityFromParametersTest(SimpleTestCase):
    """Test cases for building utilities from scenario parameters."""

    def test_round_trip(self):
        """Test parameters() feeds back into utility_from_parameters."""
        for spec in [SigmoidUtility(3, 10.3), LogarithmicUtility(1.2, 100)]:
            self.assertEqual(utility_from_parameters(**spec.parameters()), spec)

    def test_unknown_kind(self):
        """Test an unknown kind is rejected."""
        with self.assertRaises(InvalidParameterError):
            utility_from_parameters('exponential', a=1)
