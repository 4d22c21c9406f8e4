"""Market maker's belief dynamics.

The belief pi_t = P[X_t = x_i | trades so far] moves in two ways. A trade is
a Bayes update: a buy at the ask reweights by Phi(ask - x_i), a sell at the
bid by Psi(bid - x_i). Between trades the belief drifts continuously, both
because the hidden chain moves (forward Kolmogorov term) and because not
trading is itself informative (the lambda term):

    dpi_i/dt = -lam * pi_i * a_i + lam * pi_i * sum_j pi_j a_j
               + sum_j pi_j q(j, i),
    a_i = Psi(bid - x_i) + Phi(ask - x_i),

where the quotes are the zero-profit fixed points at the current belief.
integrate_between_events advances that ODE with classical fixed-step RK4,
re-solving both fixed points at every stage evaluation (warm-started from
the previous stage). After each full step, negative roundoff is clamped and
the vector renormalized; the pre-clamp deviations are tracked so a caller
can prove they stayed at roundoff scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import Belief, GeneratorMatrix, Quote, StateGrid
from .equilibrium import (
    DEFAULT_TOL,
    FALLBACK_MAX_ITER,
    _certified_max_iter,
    _fixed_point,
    _mean_given_buy,
    _mean_given_sell,
    _solver_gate,
)
from .errors import ConfigError, ZeroBuyProbability, ZeroSellProbability
from .noise import NoiseModel

DEFAULT_ODE_STEP = 1e-3


@dataclass(frozen=True)
class FilterState:
    """Belief at a point in time, with the zero-profit quotes solved for it."""

    belief: Belief
    time: float
    ask: float
    bid: float

    @property
    def quote(self) -> Quote:
        return Quote(ask=self.ask, bid=self.bid)


@dataclass
class SimplexDiagnostics:
    """Worst pre-clamp excursions seen while integrating: how far the raw
    RK4 output strayed from the simplex before the clamp/renormalize."""

    max_sum_error: float = 0.0
    min_component: float = 0.0

    def absorb(self, sum_error: float, min_component: float) -> None:
        if sum_error > self.max_sum_error:
            self.max_sum_error = sum_error
        if min_component < self.min_component:
            self.min_component = min_component

    def merge(self, other: "SimplexDiagnostics") -> None:
        self.absorb(other.max_sum_error, other.min_component)


# --------------------------------------------------------------------------
# Raw kernels on plain sequences (hot path; no validation)


def _jump_raw(probs, price, xs, noise, buy):
    weights = []
    total = 0.0
    if buy:
        for x, p in zip(xs, probs):
            w = p * noise.survival(price - x)
            weights.append(w)
            total += w
    else:
        for x, p in zip(xs, probs):
            w = p * noise.cdf(price - x)
            weights.append(w)
            total += w
    if total <= 0.0:
        if buy:
            raise ZeroBuyProbability(f"buy at {price} has zero probability")
        raise ZeroSellProbability(f"sell at {price} has zero probability")
    return [w / total for w in weights]


def _drift_raw(probs, ask, bid, lam, q_cols, xs, noise):
    n = len(probs)
    if lam > 0.0:
        a = [noise.cdf(bid - x) + noise.survival(ask - x) for x in xs]
        a_bar = 0.0
        for p, ai in zip(probs, a):
            a_bar += p * ai
    out = [0.0] * n
    for i in range(n):
        kol = 0.0
        col = q_cols[i]
        for j in range(n):
            pj = probs[j]
            if pj != 0.0:
                kol += pj * col[j]
        if lam > 0.0:
            out[i] = lam * probs[i] * (a_bar - a[i]) + kol
        else:
            out[i] = kol
    return out


def _solve_raw(probs, xs, noise, start, buy, tol, max_iter):
    if buy:
        price, _ = _fixed_point(
            lambda s: _mean_given_buy(s, xs, probs, noise), start, tol, max_iter
        )
    else:
        price, _ = _fixed_point(
            lambda s: _mean_given_sell(s, xs, probs, noise), start, tol, max_iter
        )
    return price


def _integrate_raw(
    probs, dt, lam, q_cols, xs, noise, ask, bid, ode_step, fp_tol, max_iter, diag,
    ask_shift=0.0,
):
    """Advance the filter ODE by dt. probs is consumed and a new list is
    returned along with the fixed-point quotes at the terminal belief.
    ask/bid must be the fixed points at the initial belief. ask_shift is
    added to the ask inside the drift only (a maker posting off-equilibrium
    asks still conditions on the prices actually quoted); the solved and
    returned quotes stay unshifted."""
    if dt <= 0.0:
        return probs, ask, bid
    n_steps = max(1, math.ceil(dt / ode_step))
    h = dt / n_steps
    n = len(probs)
    p = probs
    informative = lam > 0.0  # with lam = 0 the quotes never enter the drift
    for _ in range(n_steps):
        k1 = _drift_raw(p, ask + ask_shift, bid, lam, q_cols, xs, noise)

        stage = [p[i] + 0.5 * h * k1[i] for i in range(n)]
        if informative:
            ask = _solve_raw(stage, xs, noise, ask, True, fp_tol, max_iter)
            bid = _solve_raw(stage, xs, noise, bid, False, fp_tol, max_iter)
        k2 = _drift_raw(stage, ask + ask_shift, bid, lam, q_cols, xs, noise)

        stage = [p[i] + 0.5 * h * k2[i] for i in range(n)]
        if informative:
            ask = _solve_raw(stage, xs, noise, ask, True, fp_tol, max_iter)
            bid = _solve_raw(stage, xs, noise, bid, False, fp_tol, max_iter)
        k3 = _drift_raw(stage, ask + ask_shift, bid, lam, q_cols, xs, noise)

        stage = [p[i] + h * k3[i] for i in range(n)]
        if informative:
            ask = _solve_raw(stage, xs, noise, ask, True, fp_tol, max_iter)
            bid = _solve_raw(stage, xs, noise, bid, False, fp_tol, max_iter)
        k4 = _drift_raw(stage, ask + ask_shift, bid, lam, q_cols, xs, noise)

        sixth = h / 6.0
        p = [
            p[i] + sixth * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i])
            for i in range(n)
        ]

        total = 0.0
        low = p[0]
        for v in p:
            total += v
            if v < low:
                low = v
        diag.absorb(abs(total - 1.0), low)
        if low < 0.0:
            p = [v if v > 0.0 else 0.0 for v in p]
            total = sum(p)
        p = [v / total for v in p]

        if informative:
            ask = _solve_raw(p, xs, noise, ask, True, fp_tol, max_iter)
            bid = _solve_raw(p, xs, noise, bid, False, fp_tol, max_iter)
    if not informative:
        ask = _solve_raw(p, xs, noise, ask, True, fp_tol, max_iter)
        bid = _solve_raw(p, xs, noise, bid, False, fp_tol, max_iter)
    return p, ask, bid


def _q_columns(q: GeneratorMatrix, n: int):
    rates = q.rates
    return tuple(tuple(float(rates[j, i]) for j in range(n)) for i in range(n))


# --------------------------------------------------------------------------
# Public API


def buy_jump(belief: Belief, ask: float, grid: StateGrid, noise: NoiseModel) -> Belief:
    """Posterior after observing a buy at the ask."""
    return Belief(_jump_raw(belief.probs, ask, grid.values, noise, True))


def sell_jump(belief: Belief, bid: float, grid: StateGrid, noise: NoiseModel) -> Belief:
    """Posterior after observing a sell at the bid."""
    return Belief(_jump_raw(belief.probs, bid, grid.values, noise, False))


def belief_drift(
    belief: Belief,
    quote: Quote,
    lam: float,
    q: GeneratorMatrix,
    grid: StateGrid,
    noise: NoiseModel,
) -> list[float]:
    """Right-hand side of the no-trade filter ODE at the given quotes."""
    if q.n != belief.n or grid.n != belief.n:
        raise ConfigError("belief, grid and generator sizes disagree")
    if not (lam >= 0.0 and math.isfinite(lam)):
        raise ConfigError("arrival rate must be nonnegative and finite")
    q_cols = _q_columns(q, belief.n)
    return _drift_raw(
        [float(v) for v in belief.probs],
        float(quote.ask),
        float(quote.bid),
        lam,
        q_cols,
        tuple(float(v) for v in grid.values),
        noise,
    )


def make_filter_state(
    belief: Belief,
    grid: StateGrid,
    noise: NoiseModel,
    time: float = 0.0,
    fp_tol: float = DEFAULT_TOL,
    force: bool = False,
) -> FilterState:
    """Solve both quotes for a belief and bundle them as a FilterState."""
    k_value = _solver_gate(noise, grid, force)
    max_iter = (
        FALLBACK_MAX_ITER
        if k_value is None
        else _certified_max_iter(k_value, grid.width, fp_tol)
    )
    xs = tuple(float(v) for v in grid.values)
    probs = [float(v) for v in belief.probs]
    mean = belief.mean(grid)
    ask = _solve_raw(probs, xs, noise, mean, True, fp_tol, max_iter)
    bid = _solve_raw(probs, xs, noise, mean, False, fp_tol, max_iter)
    return FilterState(belief=belief, time=time, ask=ask, bid=bid)


def integrate_between_events(
    state: FilterState,
    dt: float,
    lam: float,
    q: GeneratorMatrix,
    grid: StateGrid,
    noise: NoiseModel,
    ode_step: float = DEFAULT_ODE_STEP,
    fp_tol: float = DEFAULT_TOL,
    force: bool = False,
    diagnostics: SimplexDiagnostics | None = None,
) -> FilterState:
    """Advance a FilterState through dt units of trade-free time.

    Steps are fixed at ode_step (the final partial step is shorter); both
    fixed points are re-solved at every RK4 stage, warm-started from the
    previous stage, and the returned state carries the quotes at the
    terminal belief. Pass a SimplexDiagnostics to accumulate the pre-clamp
    simplex deviations across calls.
    """
    if not (dt >= 0.0 and math.isfinite(dt)):
        raise ConfigError("dt must be nonnegative and finite")
    if dt == 0.0:
        return state
    if not (ode_step > 0.0 and math.isfinite(ode_step)):
        raise ConfigError("ode_step must be positive and finite")
    if q.n != state.belief.n or grid.n != state.belief.n:
        raise ConfigError("belief, grid and generator sizes disagree")
    if not (lam >= 0.0 and math.isfinite(lam)):
        raise ConfigError("arrival rate must be nonnegative and finite")
    k_value = _solver_gate(noise, grid, force)
    max_iter = (
        FALLBACK_MAX_ITER
        if k_value is None
        else _certified_max_iter(k_value, grid.width, fp_tol)
    )
    diag = diagnostics if diagnostics is not None else SimplexDiagnostics()
    probs, ask, bid = _integrate_raw(
        [float(v) for v in state.belief.probs],
        dt,
        lam,
        _q_columns(q, state.belief.n),
        tuple(float(v) for v in grid.values),
        noise,
        float(state.ask),
        float(state.bid),
        ode_step,
        fp_tol,
        max_iter,
        diag,
    )
    return FilterState(belief=Belief(probs), time=state.time + dt, ask=ask, bid=bid)
