import io
import math
from decimal import Decimal, localcontext

import numpy as np
from django.core.management import CommandError, call_command
from django.test import SimpleTestCase

from episodes.services import Episode
from spikes.services import Event, EventSequence

from .services import (
    AutoThreshold,
    InvalidProbabilityError,
    SignificanceParams,
    SignificanceParamsError,
    auto_threshold,
    chebyshev_threshold,
    episode_threshold,
    evaluate,
    expected_frequency,
    frequency_moments,
    frequency_variance,
    occurrence_prob,
    simulate_counting_model,
    window_sum,
)


def recurrence_oracle(L, T, p):
    """F and G - F^2 from the plain recurrences in 40-digit decimal arithmetic."""
    with localcontext() as ctx:
        ctx.prec = 40
        p = Decimal(repr(p))
        F = [Decimal(0)] * (L + 1)
        G = [Decimal(0)] * (L + 1)
        for x in range(T, L + 1):
            F[x] = (1 - p) * F[x - 1] + p * (1 + F[x - T])
            G[x] = (1 - p) * G[x - 1] + p * (1 + G[x - T] + 2 * F[x - T])
        return float(F[L]), float(G[L] - F[L] ** 2)


def steady_sequence(length_ticks, per_type_count, num_types, delta_t=0.001):
    step = length_ticks // per_type_count
    events = [Event(i * step, t) for t in range(num_types) for i in range(per_type_count)]
    return EventSequence.from_events(events, delta_t, length_ticks, num_types)


def params(**overrides):
    values = dict(L=1000, T=5, n=2, rho=5.0, delta_t=0.001, epsilon=0.05)
    values.update(overrides)
    return SignificanceParams(**values)


class OccurrenceProbTests(SimpleTestCase):

    def test_single_source_single_tick(self):
        self.assertAlmostEqual(occurrence_prob(params(n=1, T=1, rho=20.0)), 0.02)

    def test_pair_with_expiry_two(self):
        q = 0.005
        self.assertAlmostEqual(occurrence_prob(params(n=2, T=2)), 3 * q * q)

    def test_window_sum_telescopes(self):
        for n in range(1, 7):
            for T in range(1, 21):
                self.assertEqual(window_sum(n, T), T ** n - (T - 1) ** n)

    def test_heterogeneous_rates_use_product(self):
        p = occurrence_prob(params(n=2, T=3, rho=(5.0, 10.0)))
        self.assertAlmostEqual(p, 0.005 * 0.01 * 5)

    def test_per_tick_probability_above_one(self):
        with self.assertRaises(InvalidProbabilityError):
            occurrence_prob(params(rho=2000.0))

    def test_dense_rates_saturate_at_one(self):
        self.assertEqual(occurrence_prob(params(n=2, T=20, rho=500.0)), 1.0)

    def test_invalid_params(self):
        with self.assertRaises(SignificanceParamsError):
            params(T=0)
        with self.assertRaises(SignificanceParamsError):
            params(epsilon=1.0)
        with self.assertRaises(SignificanceParamsError):
            params(n=3, rho=(1.0, 2.0))

    def test_anchored_tuples_monte_carlo(self):
        # expected number of anchored occurrence tuples per tick for two independent trains
        q, T, samples = 0.05, 3, 1_000_000
        rng = np.random.default_rng(7)
        x1 = (rng.random(samples * T) < q).astype(np.int64).reshape(samples, T)
        x2 = (rng.random(samples * T) < q).astype(np.int64).reshape(samples, T)
        anchored = x1[:, 0] * x2.sum(axis=1) + x2[:, 0] * x1.sum(axis=1) - x1[:, 0] * x2[:, 0]
        expected = occurrence_prob(params(n=2, T=T, rho=q / 0.001))
        standard_error = anchored.std() / math.sqrt(samples)
        self.assertLess(abs(anchored.mean() - expected), 3 * standard_error)


class RecurrenceTests(SimpleTestCase):

    def test_boundary_is_exactly_zero(self):
        for T in range(2, 12):
            for L in range(T):
                self.assertEqual(expected_frequency(L, T, 0.3), 0.0)
                self.assertEqual(frequency_variance(L, T, 0.3), 0.0)

    def test_length_equal_to_expiry(self):
        for T in (1, 3, 8):
            self.assertAlmostEqual(expected_frequency(T, T, 0.2), 0.2)
            self.assertAlmostEqual(frequency_variance(T, T, 0.2), 0.2 * 0.8)

    def test_unit_expiry_closed_forms(self):
        for p in (1e-4, 1e-3, 1e-2):
            for L in (1, 10, 137, 1000, 10_000):
                F = expected_frequency(L, 1, p)
                V = frequency_variance(L, 1, p)
                self.assertLess(abs(F - L * p) / (L * p), 1e-9)
                self.assertLess(abs(V - L * p * (1 - p)) / (L * p * (1 - p)), 1e-9)

    def test_matches_plain_recurrence(self):
        for L, T, p in [(50, 3, 0.1), (997, 7, 0.02), (2000, 10, 0.001), (5000, 5, 0.3)]:
            F, V = recurrence_oracle(L, T, p)
            self.assertLess(abs(expected_frequency(L, T, p) - F), 1e-8 * F)
            self.assertLess(abs(frequency_variance(L, T, p) - V), 1e-7 * V)

    def test_monotone_and_bounded(self):
        for T in range(1, 11):
            for p in (1e-4, 1e-3, 1e-2, 1e-1):
                previous = 0.0
                for L in range(0, 2001, 50):
                    F = expected_frequency(L, T, p)
                    self.assertGreaterEqual(F, previous - 1e-12)
                    self.assertLessEqual(F, L * p + 1e-9)
                    self.assertLessEqual(F, L // T + 1)
                    previous = F
                self.assertLessEqual(expected_frequency(2000, T, p / 2), expected_frequency(2000, T, p))

    def test_vectorised_moments_agree(self):
        probabilities = np.array([0.01, 0.002, 0.01, 0.0])
        F, V = frequency_moments(800, 4, probabilities)
        for i, p in enumerate(probabilities):
            self.assertAlmostEqual(F[i], expected_frequency(800, 4, p))
            self.assertAlmostEqual(V[i], frequency_variance(800, 4, p))

    def test_counting_model_monte_carlo(self):
        L, T, p, runs = 1000, 5, 0.01, 10_000
        counts = simulate_counting_model(L, T, p, runs, np.random.default_rng(11))
        F = expected_frequency(L, T, p)
        V = frequency_variance(L, T, p)
        self.assertLess(abs(counts.mean() - F), 3 * math.sqrt(V / runs))
        self.assertLess(abs(counts.var() - V) / V, 0.10)


class ChebyshevTests(SimpleTestCase):

    def test_multipliers(self):
        self.assertEqual(chebyshev_threshold(0, 0, 0.04)[0], 5)
        self.assertEqual(chebyshev_threshold(0, 0, 1 / 9)[0], 3)
        self.assertEqual(chebyshev_threshold(0, 0, 0.05)[0], 5)
        self.assertEqual(chebyshev_threshold(0, 0, 0.5)[0], 2)

    def test_threshold_value(self):
        k, threshold = chebyshev_threshold(10.0, 4.0, 0.04)
        self.assertEqual(threshold, 10.0 + 5 * 2.0)

    def test_evaluate_closed_form_case(self):
        result = evaluate(params(L=1000, T=1, n=1, rho=5.0, epsilon=0.04))
        self.assertAlmostEqual(result.p, 0.005)
        self.assertAlmostEqual(result.F, 5.0)
        self.assertAlmostEqual(result.V, 4.975)
        self.assertEqual(result.k, 5)
        self.assertAlmostEqual(result.threshold, 5.0 + 5 * math.sqrt(4.975))
        self.assertEqual(result.min_count, 17)

    def test_short_data_ignores_dense_rates(self):
        for epsilon in (0.01, 0.05, 0.5):
            result = evaluate(params(L=4, T=5, n=3, rho=400.0, epsilon=epsilon))
            self.assertEqual((result.F, result.V, result.threshold, result.min_count), (0.0, 0.0, 0.0, 0))
            self.assertEqual(result.p, 1.0)

    def test_saturated_probability_counts_one_occurrence_per_window(self):
        result = evaluate(params(L=100, T=5, n=2, rho=500.0))
        self.assertAlmostEqual(result.F, 20.0)
        self.assertAlmostEqual(result.V, 0.0, places=6)


class AutoThresholdTests(SimpleTestCase):

    def test_silent_data_gives_zero(self):
        seq = EventSequence.from_events([], 0.001, length_ticks=1000, num_types=3)
        self.assertEqual(auto_threshold(seq, 2, 5, 0.05), 0)

    def test_short_data_gives_zero(self):
        seq = steady_sequence(4, 2, 2)
        self.assertEqual(auto_threshold(seq, 2, 5, 0.05), 0)

    def test_twenty_neuron_regime(self):
        seq = steady_sequence(50_000, 250, 3)
        F, V = recurrence_oracle(50_000, 5, 0.005 ** 3 * 61)
        expected = math.ceil(F + 5 * math.sqrt(V))
        self.assertEqual(expected, 4)
        self.assertEqual(auto_threshold(seq, 3, 5, 0.05), expected)

    def test_episode_threshold_uses_constituent_rates(self):
        seq = steady_sequence(50_000, 250, 3)
        self.assertEqual(episode_threshold(seq, Episode((0, 1, 2)), 5, 0.05), 4)

    def test_policy_modes(self):
        seq = steady_sequence(50_000, 250, 4)
        candidates = [Episode((0, 1)), Episode((2, 3))]
        product = AutoThreshold(seq, 5, 0.05).level_thresholds(2, candidates)
        mean = AutoThreshold(seq, 5, 0.05, rate_mode='mean').level_thresholds(2, candidates)
        self.assertEqual(product, mean)
        self.assertEqual(product[candidates[0]], auto_threshold(seq, 2, 5, 0.05))

    def test_singletons_pass_unless_gated(self):
        seq = steady_sequence(50_000, 250, 4)
        singletons = [Episode((t,)) for t in range(4)]
        open_level = AutoThreshold(seq, 5, 0.05).level_thresholds(1, singletons)
        self.assertEqual(set(open_level.values()), {1})
        gated = AutoThreshold(seq, 5, 0.05, gate_singletons=True).level_thresholds(1, singletons)
        # a source firing at its own estimated rate never clears the gate
        self.assertTrue(all(threshold > 250 for threshold in gated.values()))


class ThresholdCommandTests(SimpleTestCase):

    def threshold(self, *args):
        out = io.StringIO()
        call_command('threshold', *[str(a) for a in args], stdout=out)
        header, row = out.getvalue().splitlines()
        return dict(zip(header.split('\t'), row.split('\t')))

    def test_closed_form_case(self):
        row = self.threshold('--L', 1000, '--T', 1, '--n', 1, '--rho', 5, '--delta-t', 0.001, '--epsilon', 0.04)
        self.assertAlmostEqual(float(row['p']), 0.005)
        self.assertAlmostEqual(float(row['F']), 5.0)
        self.assertAlmostEqual(float(row['V']), 4.975)
        self.assertEqual(row['k'], '5')
        self.assertEqual(row['min_count'], '17')

    def test_short_data(self):
        row = self.threshold('--L', 10, '--T', 20, '--n', 2, '--rho', 5, '--epsilon', 0.05)
        self.assertEqual(float(row['F']), 0.0)
        self.assertEqual(float(row['V']), 0.0)
        self.assertEqual(float(row['threshold']), 0.0)

    def test_short_data_with_dense_rates(self):
        row = self.threshold('--L', 10, '--T', 20, '--n', 2, '--rho', 500, '--delta-t', 0.001)
        self.assertEqual(float(row['p']), 1.0)
        self.assertEqual((float(row['F']), float(row['V']), float(row['threshold'])), (0.0, 0.0, 0.0))

    def test_per_constituent_rates(self):
        row = self.threshold('--L', 5000, '--T', 3, '--n', 2, '--rho', 5, 10)
        self.assertEqual(row['rho'], '5,10')
        self.assertAlmostEqual(float(row['p']), 0.005 * 0.01 * 5)

    def test_invalid_probability_exits_with_usage_code(self):
        with self.assertRaises(CommandError) as raised:
            self.threshold('--L', 1000, '--T', 5, '--n', 2, '--rho', 2000)
        self.assertEqual(raised.exception.returncode, 2)
