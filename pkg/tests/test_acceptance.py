"""Acceptance suite: eight end-to-end checks of the library's guarantees.

Each test is one release gate and prints a single PASS line with its
measured numbers (visible with -s, or in the -v result column):

  1. the classic two-point counterexample has exactly the ask roots 9/5, 3
  2. the logistic contraction certificate K = C/scale holds pointwise
  3. every simulated trade executes at the post-trade posterior mean
  4. pooled per-trade profit is statistically zero on both sides, and a
     deliberately shifted ask is detected
  5. the engine belief path agrees with the independent split-step filter
  6. frozen-quote trade counts follow the predicted Poisson law
  7. every logged belief stays on the simplex and inside the quotes
  8. the local-uniqueness constants match closed-form arithmetic

The simulation batches behind 3, 4, and 5 are shared module fixtures; check
7 sweeps all of them. Seeds are fixed once and never tuned per assertion.
"""

import math
import time

import numpy as np
import pytest

from gmsim.core import Belief, GeneratorMatrix, Quote, StateGrid
from gmsim.engine import MarketModel, Outcome, SimConfig, simulate_paths
from gmsim.equilibrium import (
    contraction_constants,
    find_fixed_points,
    mean_given_buy,
)
from gmsim.noise import Logistic, TwoPointDiscrete, check_gm_condition
from gmsim.verification import (
    OracleFilterConfig,
    compare_filters,
    consistency_check,
    intensity_test,
    oracle_filter,
    zero_profit_test,
)

LOGISTIC = Logistic(2.0)


def two_state_model(lam=4.0):
    return MarketModel(
        grid=StateGrid([0.0, 1.0]),
        generator=GeneratorMatrix([[0.0, 0.5], [0.8, 0.0]]),
        arrival_rate=lam,
        noise=LOGISTIC,
        initial_belief=Belief([0.5, 0.5]),
    )


THREE_STATE = MarketModel(
    grid=StateGrid([0.0, 0.5, 1.0]),
    generator=GeneratorMatrix(
        [[-0.7, 0.4, 0.3], [0.3, -0.6, 0.3], [0.2, 0.5, -0.7]]
    ),
    arrival_rate=5.0,
    noise=LOGISTIC,
    initial_belief=Belief([0.4, 0.2, 0.4]),
)

FOUR_STATE = MarketModel(
    grid=StateGrid([0.0, 1 / 3, 2 / 3, 1.0]),
    generator=GeneratorMatrix(
        [
            [0.0, 0.4, 0.1, 0.1],
            [0.3, 0.0, 0.2, 0.1],
            [0.1, 0.2, 0.0, 0.3],
            [0.1, 0.1, 0.4, 0.0],
        ]
    ),
    arrival_rate=5.0,
    noise=LOGISTIC,
    initial_belief=Belief([0.25, 0.25, 0.25, 0.25]),
)


@pytest.fixture(scope="module")
def identity_batch():
    """100 paths over 2-, 3-, and 4-state markets at lam=5, T=10."""
    cfg = SimConfig(ode_step=0.02)
    batches = []
    t0 = time.monotonic()
    for model, n in ((two_state_model(lam=5.0), 34), (THREE_STATE, 33),
                     (FOUR_STATE, 33)):
        batches.append((model, simulate_paths(model, 10.0, cfg, seed=11, n_paths=n)))
    return batches, time.monotonic() - t0


@pytest.fixture(scope="module")
def pooled_batch():
    """10,000 paths of the 2-state market, circa 1.1e5 trades."""
    t0 = time.monotonic()
    records = simulate_paths(
        two_state_model(), 3.0, SimConfig(ode_step=0.02), seed=0, n_paths=10_000
    )
    return records, time.monotonic() - t0


@pytest.fixture(scope="module")
def filter_run():
    """One densely sampled 3-state path plus the oracle at three step sizes."""
    h = 1e-3
    t0 = time.monotonic()
    record = simulate_paths(
        THREE_STATE, 2.0, SimConfig(ode_step=h, sample_dt=h / 4),
        seed=2024, n_paths=1,
    )[0]
    oracle = {
        step: oracle_filter(record, THREE_STATE, OracleFilterConfig(h=step))
        for step in (h, h / 2, h / 4)
    }
    return record, oracle, time.monotonic() - t0


def test_static_counterexample_has_exactly_two_ask_roots():
    """Grid {1,3}, belief (3/4,1/4), two-point noise: roots are 9/5 and 3."""
    t0 = time.monotonic()
    roots = find_fixed_points(
        Belief([0.75, 0.25]), StateGrid([1.0, 3.0]), TwoPointDiscrete(1.0, 0.5)
    )
    elapsed = time.monotonic() - t0
    assert len(roots) == 2
    assert abs(roots[0] - 9.0 / 5.0) <= 1e-10
    assert abs(roots[1] - 3.0) <= 1e-10
    assert elapsed < 1.0
    print(f"PASS: ask roots {roots[0]:.12f}, {roots[1]:.12f} in {elapsed:.3f}s")


def test_logistic_contraction_certificate_holds_pointwise():
    """K = C/scale, and the buy map contracts at modulus K on 1000 triples."""
    t0 = time.monotonic()
    for scale, width in ((2.0, 1.0), (3.0, 1.0), (1.5, 1.0), (4.0, 2.0)):
        report = check_gm_condition(Logistic(scale), width)
        assert abs(report.K - width / scale) <= 1e-6
    grid = StateGrid([0.0, 1.0])
    k = check_gm_condition(LOGISTIC, grid.width).K
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        belief = Belief(rng.random(2) + 1e-3)
        s, t = rng.uniform(grid.x_min, grid.x_max, size=2)
        gs = mean_given_buy(s, belief, grid, LOGISTIC)
        gt = mean_given_buy(t, belief, grid, LOGISTIC)
        assert abs(gs - gt) <= (k + 1e-9) * abs(s - t)
        if s != t:
            worst = max(worst, abs(gs - gt) / abs(s - t))
    elapsed = time.monotonic() - t0
    assert elapsed < 5.0
    print(f"PASS: K={k:.6f}, worst observed ratio {worst:.6f} in {elapsed:.2f}s")


def test_trades_execute_at_post_trade_posterior_mean(identity_batch):
    """On 100 paths, |price - post-jump mean| <= 1e-8 at every trade."""
    batches, sim_elapsed = identity_batch
    t0 = time.monotonic()
    n_paths = 0
    n_trades = 0
    worst = 0.0
    for model, records in batches:
        xs = model.grid.values
        n_paths += len(records)
        for record in records:
            for e in record.events:
                if e.outcome is Outcome.BUY:
                    gap = abs(float(e.belief_after @ xs) - e.ask)
                elif e.outcome is Outcome.SELL:
                    gap = abs(float(e.belief_after @ xs) - e.bid)
                else:
                    continue
                n_trades += 1
                worst = max(worst, gap)
                assert gap <= 1e-8
    elapsed = sim_elapsed + time.monotonic() - t0
    assert n_paths == 100
    assert n_trades > 1000
    assert elapsed < 60.0
    print(f"PASS: {n_trades} trades on {n_paths} paths, "
          f"max |price - mean| = {worst:.2e} in {elapsed:.1f}s")


def test_pooled_profit_is_zero_and_shifted_ask_is_caught(pooled_batch):
    """Side-separated profit z-scores within 3; +5% ask shift gives z > 3."""
    records, sim_elapsed = pooled_batch
    t0 = time.monotonic()
    report = zero_profit_test(records)
    assert report.n_paths == 10_000
    assert report.n_buys + report.n_sells >= 100_000
    assert abs(report.z_buy) <= 3.0
    assert abs(report.z_sell) <= 3.0
    assert report.passed

    shifted = simulate_paths(
        two_state_model(), 3.0,
        SimConfig(ode_step=0.02, perturb_ask=0.05),
        seed=1, n_paths=2_000,
    )
    control = zero_profit_test(shifted)
    assert control.z_buy > 3.0
    assert not control.passed
    elapsed = sim_elapsed + time.monotonic() - t0
    assert elapsed < 600.0
    print(f"PASS: {report.n_buys + report.n_sells} trades, "
          f"z_buy={report.z_buy:+.2f}, z_sell={report.z_sell:+.2f}; "
          f"control z_buy={control.z_buy:+.2f} in {elapsed:.0f}s")


def test_engine_belief_path_matches_split_step_oracle(filter_run):
    """Max L1 gap <= 0.01 at h=1e-3, and the oracle self-converges at
    first order (halving h shrinks its own gap by about half)."""
    record, oracle, sim_elapsed = filter_run
    t0 = time.monotonic()
    h = 1e-3
    times_h, beliefs_h = oracle[h]
    agreement = compare_filters(
        record.sample_times, record.sample_beliefs, times_h, beliefs_h
    )
    assert agreement.max_l1 <= 0.01

    coarse = compare_filters(*oracle[h], *oracle[h / 2]).max_l1
    fine = compare_filters(*oracle[h / 2], *oracle[h / 4]).max_l1
    assert fine > 0.0
    ratio = coarse / fine
    assert 1.5 <= ratio <= 2.5
    elapsed = sim_elapsed + time.monotonic() - t0
    assert elapsed < 60.0
    print(f"PASS: max L1 = {agreement.max_l1:.2e} over {agreement.n_matched} "
          f"points, self-convergence ratio {ratio:.2f} in {elapsed:.1f}s")


def test_frozen_quote_trade_counts_follow_poisson_law():
    """Chi-square at alpha=0.01 for three (quote, state) pairs, including
    the ask = x symmetry point where the buy probability is exactly 1/2."""
    t0 = time.monotonic()
    model = two_state_model(lam=10.0)
    pairs = [
        (Quote(ask=0.0, bid=0.0), 0.0),
        (Quote(ask=1.25, bid=0.75), 1.0),
        (Quote(ask=0.5, bid=-0.25), 0.0),
    ]
    horizon = 30.0
    p_values = []
    for k, (quote, x) in enumerate(pairs):
        report = intensity_test(
            model, quote, x, horizon, n_trials=150, seed=100 + k
        )
        assert report.passed, (quote, x, report)
        p_values += [report.buy.p_value, report.sell.p_value]
        if k == 0:
            assert report.buy.expected_rate == 10.0 * 0.5 * horizon
            assert report.sell.expected_rate == 10.0 * 0.5 * horizon
    elapsed = time.monotonic() - t0
    assert elapsed < 60.0
    print(f"PASS: 3 pairs, min p-value {min(p_values):.3f} in {elapsed:.1f}s")


def test_all_logged_beliefs_stay_on_simplex_inside_quotes(
    identity_batch, pooled_batch, filter_run
):
    """Across every acceptance run: |sum(pi) - 1| <= 1e-9, components
    >= -1e-12 before clamping, and bid <= mean <= ask on sampled rows."""
    batches, _ = identity_batch
    pooled, _ = pooled_batch
    record, _, _ = filter_run

    groups = [(model.grid, records) for model, records in batches]
    groups.append((two_state_model().grid, pooled))
    groups.append((THREE_STATE.grid, [record]))

    n_beliefs = 0
    worst_sum = 0.0
    for grid, records in groups:
        report = consistency_check(records, grid)
        assert report.max_sum_error <= 1e-9
        assert report.min_component >= -1e-12
        assert report.ordering_violations == 0
        for rec in records:
            for e in rec.events:
                for belief in (e.belief_before, e.belief_after):
                    n_beliefs += 1
                    err = abs(float(belief.sum()) - 1.0)
                    worst_sum = max(worst_sum, err)
                    assert err <= 1e-9
                    assert float(belief.min()) >= -1e-12
    assert n_beliefs > 200_000
    print(f"PASS: {n_beliefs} logged beliefs, max |sum - 1| = {worst_sum:.2e}")


def test_uniqueness_constants_match_closed_form():
    """2-state grid {0,1}, logistic scale 2, lam=1: L, M, K1, t* to 1e-9."""
    constants = contraction_constants(StateGrid([0.0, 1.0]), LOGISTIC, 1.0)
    phi_c = 1.0 / (1.0 + math.exp(0.5))
    expected_l = 2.0 * 1.0 / phi_c**2
    expected_m = 1.0 / 8.0
    expected_k1 = 12.0 * expected_l * 2 * 1.0 * expected_m
    expected_t = (1.0 - 0.5) / (2.0 * expected_k1)
    assert abs(constants.K - 0.5) <= 1e-9
    assert abs(constants.M - expected_m) <= 1e-9
    assert abs(constants.L - expected_l) <= 1e-9
    assert abs(constants.K1 - expected_k1) <= 1e-9
    assert abs(constants.t_star - expected_t) <= 1e-9
    print(f"PASS: L={constants.L:.9f}, M={constants.M}, "
          f"K1={constants.K1:.9f}, t*={constants.t_star:.9f}")
