"""Tests for the event-driven market simulator."""

import math

import numpy as np
import pytest

from gmsim.beliefs import SimplexDiagnostics
from gmsim.core import Belief, GeneratorMatrix, Quote, StateGrid
from gmsim.engine import (
    MarketModel,
    Outcome,
    SimConfig,
    buy_intensity,
    decide_trade,
    path_streams,
    sample_arrival_times,
    sample_value_path,
    sell_intensity,
    simulate_gmps_path,
    simulate_paths,
    value_at,
)
from gmsim.equilibrium import solve_ask, solve_bid
from gmsim.errors import ConfigError
from gmsim.noise import Gaussian, Logistic, NoiseTraderMix

from oracles import expm_reference, ks_statistic

GRID = StateGrid([0.0, 1.0])
Q = GeneratorMatrix([[-0.5, 0.5], [0.8, -0.8]])
NOISE = Logistic(2.0)
PRIOR = Belief([0.5, 0.5])
MODEL = MarketModel(
    grid=GRID, generator=Q, arrival_rate=4.0, noise=NOISE, initial_belief=PRIOR
)


# --------------------------------------------------------------------------
# Value chain


def test_value_path_holding_times_match_rates():
    rng = np.random.default_rng(7)
    times, states = sample_value_path(Q, PRIOR, 4000.0, rng)
    sojourns = {0: [], 1: []}
    for i in range(len(times) - 1):
        sojourns[int(states[i])].append(times[i + 1] - times[i])
    for state, rate in ((0, 0.5), (1, 0.8)):
        hold = np.array(sojourns[state])
        assert len(hold) > 300
        mean = hold.mean()
        se = hold.std(ddof=1) / math.sqrt(len(hold))
        assert abs(mean - 1.0 / rate) < 3.0 * se


def test_value_path_initial_state_follows_prior():
    belief = Belief([0.3, 0.7])
    hits = 0
    n = 4000
    for i in range(n):
        rng = np.random.default_rng(10_000 + i)
        _, states = sample_value_path(Q, belief, 0.01, rng)
        hits += int(states[0] == 0)
    p_hat = hits / n
    se = math.sqrt(0.3 * 0.7 / n)
    assert abs(p_hat - 0.3) < 3.0 * se


def test_value_path_is_right_continuous():
    rng = np.random.default_rng(3)
    times, states = sample_value_path(Q, PRIOR, 50.0, rng)
    assert times[0] == 0.0
    assert len(times) > 2
    for k in range(1, len(times)):
        t_jump = float(times[k])
        assert value_at(times, states, t_jump) == states[k]
        assert value_at(times, states, t_jump - 1e-12) == states[k - 1]
    assert value_at(times, states, 50.0) == states[-1]
    # consecutive states always differ: the chain has no self-jumps
    assert np.all(np.diff(states) != 0)


def test_value_path_absorbing_state_stays_put():
    q = GeneratorMatrix([[0.0, 0.0], [1.0, -1.0]])
    rng = np.random.default_rng(4)
    times, states = sample_value_path(q, Belief([1.0, 0.0]), 100.0, rng)
    assert len(times) == 1 and states[0] == 0


# --------------------------------------------------------------------------
# Arrivals


def test_arrival_counts_are_poisson_mean():
    lam, horizon, n = 3.0, 2.0, 3000
    counts = np.array(
        [
            len(sample_arrival_times(lam, horizon, np.random.default_rng(500 + i)))
            for i in range(n)
        ]
    )
    mean = counts.mean()
    se = counts.std(ddof=1) / math.sqrt(n)
    assert abs(mean - lam * horizon) < 3.0 * se


def test_arrival_gaps_are_exponential():
    rng = np.random.default_rng(21)
    arr = sample_arrival_times(2.0, 5000.0, rng)
    gaps = np.diff(np.concatenate([[0.0], arr]))
    u = np.sort(1.0 - np.exp(-2.0 * gaps))
    d = ks_statistic(u, u)  # uniform cdf is the identity
    assert d < 1.63 / math.sqrt(len(u))


def test_arrivals_sorted_inside_horizon():
    arr = sample_arrival_times(6.0, 3.0, np.random.default_rng(9))
    assert np.all(np.diff(arr) > 0)
    assert arr[0] > 0.0 and arr[-1] < 3.0


def test_zero_rate_means_no_arrivals():
    arr = sample_arrival_times(0.0, 10.0, np.random.default_rng(1))
    assert len(arr) == 0


# --------------------------------------------------------------------------
# Trade decision and intensities


def test_decide_trade_boundaries():
    quote = Quote(ask=0.6, bid=0.4)
    assert decide_trade(0.6, quote) is Outcome.BUY
    assert decide_trade(0.61, quote) is Outcome.BUY
    assert decide_trade(0.4, quote) is Outcome.SELL
    assert decide_trade(0.39, quote) is Outcome.SELL
    assert decide_trade(0.5, quote) is Outcome.NO_TRADE
    assert decide_trade(math.inf, quote) is Outcome.BUY
    assert decide_trade(-math.inf, quote) is Outcome.SELL


def test_degenerate_quote_buy_precedence():
    quote = Quote(ask=0.5, bid=0.5)
    assert decide_trade(0.5, quote) is Outcome.BUY
    assert decide_trade(0.49, quote) is Outcome.SELL


def test_intensities_match_noise_tails():
    quote = Quote(ask=0.7, bid=0.3)
    lam = 4.0
    assert buy_intensity(quote, 1.0, lam, NOISE) == pytest.approx(
        lam * NOISE.survival(-0.3), rel=1e-15
    )
    assert sell_intensity(quote, 1.0, lam, NOISE) == pytest.approx(
        lam * NOISE.cdf(-0.7), rel=1e-15
    )
    # intensities add up: buy + sell + no-trade rate = lam
    x = 0.25
    no_trade = lam * (NOISE.cdf(quote.ask - x) - NOISE.cdf(quote.bid - x))
    total = buy_intensity(quote, x, lam, NOISE) + sell_intensity(quote, x, lam, NOISE)
    assert total + no_trade == pytest.approx(lam, rel=1e-12)


# --------------------------------------------------------------------------
# Whole paths


def test_paths_are_deterministic_per_seed():
    cfg = SimConfig(ode_step=0.01, sample_dt=0.2)
    a = simulate_gmps_path(MODEL, 3.0, cfg, seed=42, offset=5)
    b = simulate_gmps_path(MODEL, 3.0, cfg, seed=42, offset=5)
    assert np.array_equal(a.value_times, b.value_times)
    assert np.array_equal(a.sample_asks, b.sample_asks)
    assert np.array_equal(a.sample_beliefs, b.sample_beliefs)
    assert len(a.events) == len(b.events)
    for ea, eb in zip(a.events, b.events):
        assert ea.t == eb.t and ea.eps == eb.eps and ea.profit == eb.profit
        assert ea.outcome is eb.outcome
        assert np.array_equal(ea.belief_after, eb.belief_after)


def test_different_offsets_give_different_paths():
    a = simulate_gmps_path(MODEL, 3.0, SimConfig(ode_step=0.02), seed=42, offset=0)
    b = simulate_gmps_path(MODEL, 3.0, SimConfig(ode_step=0.02), seed=42, offset=1)
    assert len(a.events) != len(b.events) or a.events[0].t != b.events[0].t


def test_streams_are_reproducible():
    r1 = path_streams(7, 3)
    r2 = path_streams(7, 3)
    for a, b in zip(r1, r2):
        assert np.array_equal(a.random(4), b.random(4))


def test_silent_market_reduces_to_state_equation():
    """With no arrivals the belief must follow the plain forward equation."""
    q = GeneratorMatrix([[-0.7, 0.4, 0.3], [0.2, -0.5, 0.3], [0.1, 0.4, -0.5]])
    grid = StateGrid([0.0, 0.5, 1.0])
    prior = Belief([0.5, 0.3, 0.2])
    model = MarketModel(
        grid=grid, generator=q, arrival_rate=0.0, noise=Logistic(4.0),
        initial_belief=prior,
    )
    rec = simulate_gmps_path(
        model, 1.0, SimConfig(ode_step=1e-3, sample_dt=0.5), seed=0
    )
    assert len(rec.events) == 0
    expected = prior.probs @ expm_reference(q.rates * 1.0)
    np.testing.assert_allclose(rec.sample_beliefs[-1], expected, atol=1e-8)


def test_uninformative_noise_keeps_quotes_at_prior_mean():
    model = MarketModel(
        grid=GRID,
        generator=GeneratorMatrix.zero(2),
        arrival_rate=3.0,
        noise=NoiseTraderMix(0.75),
        initial_belief=Belief([0.25, 0.75]),
    )
    rec = simulate_gmps_path(model, 4.0, SimConfig(force=True, ode_step=0.05), seed=8)
    assert len(rec.events) > 0
    mean = 0.75
    for e in rec.events:
        assert e.ask == pytest.approx(mean, abs=1e-10)
        assert e.bid == pytest.approx(mean, abs=1e-10)
        assert e.outcome is not Outcome.NO_TRADE  # valuations are +-inf
        np.testing.assert_allclose(e.belief_after, e.belief_before, atol=1e-12)
    buys = sum(e.outcome is Outcome.BUY for e in rec.events)
    assert buys + sum(e.outcome is Outcome.SELL for e in rec.events) == len(rec.events)


def test_static_noise_without_force_is_refused():
    model = MarketModel(
        grid=GRID,
        generator=GeneratorMatrix.zero(2),
        arrival_rate=3.0,
        noise=NoiseTraderMix(0.75),
        initial_belief=PRIOR,
    )
    from gmsim.errors import ConditionFailed

    with pytest.raises(ConditionFailed):
        simulate_gmps_path(model, 1.0, SimConfig(), seed=0)


def test_event_asks_are_predictable_from_prior_belief():
    """The posted ask at any arrival is the zero-profit price of the belief
    held just before it."""
    rec = simulate_gmps_path(MODEL, 3.0, SimConfig(ode_step=5e-3), seed=13)
    assert len(rec.events) >= 5
    for e in rec.events:
        belief = Belief(e.belief_before)
        assert e.ask == pytest.approx(
            solve_ask(belief, GRID, NOISE), abs=1e-9
        )
        assert e.bid == pytest.approx(
            solve_bid(belief, GRID, NOISE), abs=1e-9
        )


def test_traded_quote_equals_posterior_mean():
    rec = simulate_gmps_path(MODEL, 5.0, SimConfig(ode_step=5e-3), seed=29)
    buys = [e for e in rec.events if e.outcome is Outcome.BUY]
    sells = [e for e in rec.events if e.outcome is Outcome.SELL]
    assert buys and sells
    for e in buys:
        assert float(e.belief_after @ GRID.values) == pytest.approx(e.ask, abs=1e-9)
    for e in sells:
        assert float(e.belief_after @ GRID.values) == pytest.approx(e.bid, abs=1e-9)


def test_no_trade_leaves_belief_unchanged():
    rec = simulate_gmps_path(
        MODEL, 20.0, SimConfig(ode_step=0.01), seed=3
    )
    skipped = [e for e in rec.events if e.outcome is Outcome.NO_TRADE]
    assert skipped, "expected at least one no-trade arrival at this seed"
    for e in skipped:
        np.testing.assert_array_equal(e.belief_after, e.belief_before)
        assert e.profit == 0.0


def test_profit_bookkeeping_is_exact():
    rec = simulate_gmps_path(MODEL, 6.0, SimConfig(ode_step=0.01), seed=17)
    buy_sum = 0.0
    sell_sum = 0.0
    for e in rec.events:
        if e.outcome is Outcome.BUY:
            assert e.profit == e.ask - e.x
            buy_sum += e.profit
        elif e.outcome is Outcome.SELL:
            assert e.profit == e.bid - e.x
            sell_sum += e.profit
    assert rec.buy_profit == buy_sum
    assert rec.sell_profit == sell_sum
    assert rec.n_buys == sum(e.outcome is Outcome.BUY for e in rec.events)
    assert rec.n_sells == sum(e.outcome is Outcome.SELL for e in rec.events)
    assert np.sum(rec.trade_profits(Outcome.BUY)) == pytest.approx(buy_sum)


def test_event_valuation_consistent_with_outcome():
    rec = simulate_gmps_path(MODEL, 6.0, SimConfig(ode_step=0.01), seed=23)
    for e in rec.events:
        v = e.x + e.eps
        if e.outcome is Outcome.BUY:
            assert v >= e.ask
        elif e.outcome is Outcome.SELL:
            assert v <= e.bid
        else:
            assert e.bid < v < e.ask


def test_sample_grid_covers_run_and_respects_quotes():
    cfg = SimConfig(ode_step=0.01, sample_dt=0.125)
    rec = simulate_gmps_path(MODEL, 2.0, cfg, seed=11)
    t = rec.sample_times
    assert t[0] == 0.0 and t[-1] == 2.0
    assert np.all(np.diff(t) > 0)
    grid_times = np.arange(0, 17) * 0.125
    assert np.all(np.isin(grid_times, t))
    for e in rec.events:
        assert np.any(np.isclose(t, e.t, rtol=0, atol=1e-12))
    means = rec.sample_beliefs @ GRID.values
    assert np.all(rec.sample_bids <= means + 1e-9)
    assert np.all(means <= rec.sample_asks + 1e-9)
    row_sums = rec.sample_beliefs.sum(axis=1)
    np.testing.assert_allclose(row_sums, 1.0, atol=1e-9)


def test_sampled_values_follow_the_chain():
    cfg = SimConfig(ode_step=0.02, sample_dt=0.25)
    rec = simulate_gmps_path(MODEL, 3.0, cfg, seed=37)
    for t, x in zip(rec.sample_times, rec.sample_values):
        idx = value_at(rec.value_times, rec.value_states, float(t))
        assert x == GRID.values[idx]


def test_perturbed_ask_sits_above_the_fixed_point():
    """The perturbed run still quotes predictably: every posted ask is the
    zero-profit price of the pre-trade belief plus the flat shift."""
    base = simulate_gmps_path(MODEL, 3.0, SimConfig(ode_step=0.02), seed=51)
    bumped = simulate_gmps_path(
        MODEL, 3.0, SimConfig(ode_step=0.02, perturb_ask=0.05), seed=51
    )
    assert base.events and bumped.events
    # the randomness is shared, so the arrival clock matches exactly
    assert base.events[0].t == bumped.events[0].t
    shift = 0.05 * GRID.width
    for e in bumped.events:
        belief = Belief(e.belief_before)
        assert e.ask == pytest.approx(
            solve_ask(belief, GRID, NOISE) + shift, abs=1e-9
        )
        assert e.bid == pytest.approx(solve_bid(belief, GRID, NOISE), abs=1e-9)
    assert bumped.events[0].ask > base.events[0].ask + 0.9 * shift


def test_simplex_diagnostics_stay_tight_over_batch():
    recs = simulate_paths(MODEL, 3.0, SimConfig(ode_step=0.02), seed=5, n_paths=10)
    merged = SimplexDiagnostics()
    for r in recs:
        merged.merge(r.diagnostics)
    assert merged.max_sum_error <= 1e-9
    assert merged.min_component >= -1e-12


def test_batch_offsets_are_sequential():
    recs = simulate_paths(MODEL, 1.0, SimConfig(ode_step=0.05), seed=2, n_paths=3)
    assert [r.offset for r in recs] == [0, 1, 2]
    solo = simulate_gmps_path(MODEL, 1.0, SimConfig(ode_step=0.05), seed=2, offset=1)
    assert np.array_equal(recs[1].value_times, solo.value_times)


def test_invalid_model_and_config_arguments():
    with pytest.raises(ConfigError, match="generator"):
        MarketModel(
            grid=GRID, generator=GeneratorMatrix.zero(3), arrival_rate=1.0,
            noise=NOISE, initial_belief=PRIOR,
        )
    with pytest.raises(ConfigError, match="belief"):
        MarketModel(
            grid=GRID, generator=Q, arrival_rate=1.0, noise=NOISE,
            initial_belief=Belief([0.2, 0.3, 0.5]),
        )
    with pytest.raises(ConfigError, match="arrival"):
        MarketModel(
            grid=GRID, generator=Q, arrival_rate=-1.0, noise=NOISE,
            initial_belief=PRIOR,
        )
    with pytest.raises(ConfigError, match="ode_step"):
        SimConfig(ode_step=0.0)
    with pytest.raises(ConfigError, match="sample_dt"):
        SimConfig(sample_dt=-0.1)
    with pytest.raises(ConfigError, match="horizon"):
        simulate_gmps_path(MODEL, 0.0, SimConfig(), seed=0)


def test_gaussian_noise_runs_end_to_end():
    model = MarketModel(
        grid=StateGrid([0.0, 0.5, 1.0]),
        generator=GeneratorMatrix(
            [[-0.6, 0.4, 0.2], [0.3, -0.6, 0.3], [0.2, 0.4, -0.6]]
        ),
        arrival_rate=5.0,
        noise=Gaussian(1.5),
        initial_belief=Belief([1 / 3, 1 / 3, 1 / 3]),
    )
    rec = simulate_gmps_path(model, 2.0, SimConfig(ode_step=0.01), seed=77)
    assert rec.n_trades > 0
    for e in rec.events:
        if e.outcome is Outcome.BUY:
            mean_after = float(e.belief_after @ model.grid.values)
            assert mean_after == pytest.approx(e.ask, abs=1e-9)
