"""Static zero-profit prices for one belief.

Given a belief pi over the value grid and a price s, the posted side earns
zero in expectation exactly when s equals the value conditioned on the trade
happening:

    ask side:  g(s, pi) = sum_i x_i pi_i Phi(s - x_i) / sum_i pi_i Phi(s - x_i)
    bid side:  h(s, pi) = sum_i x_i pi_i Psi(s - x_i) / sum_i pi_i Psi(s - x_i)

The ask is a fixed point s = g(s, pi) and the bid a fixed point of h. Under
the admissibility condition (check_gm_condition, K < 1) both maps contract
with modulus K on [x_1, x_n], so plain fixed-point iteration from the prior
mean converges and the fixed points are unique. Without the condition there
may be several fixed points or none in the interior; find_fixed_points lists
whatever a scan of s - g(s, pi) finds, which is the honest answer for
families like the two-point lattice.

Prices live in [x_1, x_n]; outside, conditioning can be vacuous and the
sums raise ZeroBuyProbability / ZeroSellProbability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import Belief, ContractionConstants, StateGrid
from .errors import (
    ConditionFailed,
    ConfigError,
    NoConvergence,
    ZeroBuyProbability,
    ZeroSellProbability,
)
from .noise import NoiseModel, check_gm_condition

DEFAULT_TOL = 1e-12
# Iteration ceiling when no contraction certificate is available (forced
# static-only runs); certified solves derive a ceiling from K instead.
FALLBACK_MAX_ITER = 500


# --------------------------------------------------------------------------
# Scalar kernels. The simulator calls these thousands of times per path with
# 2-10 states, where a plain loop beats array dispatch by a wide margin.


def _buy_sums(s, xs, probs, noise):
    num = 0.0
    den = 0.0
    for x, p in zip(xs, probs):
        if p != 0.0:
            w = p * noise.survival(s - x)
            num += w * x
            den += w
    return num, den


def _sell_sums(s, xs, probs, noise):
    num = 0.0
    den = 0.0
    for x, p in zip(xs, probs):
        if p != 0.0:
            w = p * noise.cdf(s - x)
            num += w * x
            den += w
    return num, den


def _mean_given_buy(s, xs, probs, noise):
    num, den = _buy_sums(s, xs, probs, noise)
    if den <= 0.0:
        raise ZeroBuyProbability(f"no buy mass at price {s}")
    return num / den

def _mean_given_sell(s, xs, probs, noise):
    num, den = _sell_sums(s, xs, probs, noise)
    if den <= 0.0:
        raise ZeroSellProbability(f"no sell mass at price {s}")
    return num / den


def _fixed_point(eval_one, start, tol, max_iter):
    """Iterate s <- eval_one(s) until successive values agree within tol.

    Returns (price, iterations). Under a contraction with modulus K the
    returned price satisfies |eval_one(price) - price| <= K * tol <= tol.
    """
    s = start
    for i in range(1, max_iter + 1):
        s_next = eval_one(s)
        if abs(s_next - s) <= tol:
            return s_next, i
        s = s_next
    raise NoConvergence(
        f"fixed-point iteration still moving after {max_iter} steps; "
        "a violated admissibility precondition is the usual cause"
    )


def _certified_max_iter(k_value, width, tol):
    """Steps until K^n * C falls below tol, plus slack for roundoff."""
    if not 0.0 < k_value < 1.0:
        return FALLBACK_MAX_ITER
    if width <= tol:
        return 10
    return int(math.ceil(math.log(tol / width) / math.log(k_value))) + 20


def _solver_gate(noise, grid, force):
    """Shared admission check for the Picard solvers. Returns the certified
    contraction modulus K, or None when iterating on force alone."""
    if noise.static_only:
        if not force:
            raise ConditionFailed(
                f"{type(noise).__name__} is static-only; the fixed point may "
                "not be unique. Pass force=True to iterate anyway."
            )
        return None
    report = check_gm_condition(noise, grid.width)
    if not report.passes:
        if not force:
            raise ConditionFailed(
                f"admissibility condition fails (K = {report.K:.6g} >= 1); "
                "pass force=True to iterate anyway"
            )
        return None
    return report.K


# --------------------------------------------------------------------------
# Public evaluation


def mean_given_buy(s: float, belief: Belief, grid: StateGrid, noise: NoiseModel) -> float:
    """g(s, pi): expected value given a customer buys at price s."""
    return float(_mean_given_buy(s, grid.values, belief.probs, noise))


def mean_given_sell(s: float, belief: Belief, grid: StateGrid, noise: NoiseModel) -> float:
    """h(s, pi): expected value given a customer sells at price s."""
    return float(_mean_given_sell(s, grid.values, belief.probs, noise))


def solve_ask(
    belief: Belief,
    grid: StateGrid,
    noise: NoiseModel,
    tol: float = DEFAULT_TOL,
    start: float | None = None,
    force: bool = False,
) -> float:
    """Zero-profit ask G(pi): the fixed point of s = g(s, pi).

    Iterates from the prior mean (or `start`, e.g. a warm quote) until
    successive iterates agree within tol. Refuses static-only families and
    failed admissibility checks unless force=True.
    """
    price, _ = _solve_side(True, belief, grid, noise, tol, start, force)
    return price


def solve_bid(
    belief: Belief,
    grid: StateGrid,
    noise: NoiseModel,
    tol: float = DEFAULT_TOL,
    start: float | None = None,
    force: bool = False,
) -> float:
    """Zero-profit bid H(pi): the fixed point of s = h(s, pi)."""
    price, _ = _solve_side(False, belief, grid, noise, tol, start, force)
    return price


def _solve_side(buy_side, belief, grid, noise, tol, start, force):
    if not (tol > 0.0 and math.isfinite(tol)):
        raise ConfigError("tol must be positive and finite")
    k_value = _solver_gate(noise, grid, force)
    if k_value is None:
        max_iter = FALLBACK_MAX_ITER
    else:
        max_iter = _certified_max_iter(k_value, grid.width, tol)
    if start is None:
        start = belief.mean(grid)
    xs = tuple(float(v) for v in grid.values)
    probs = [float(v) for v in belief.probs]
    if buy_side:
        eval_one = lambda s: _mean_given_buy(s, xs, probs, noise)
    else:
        eval_one = lambda s: _mean_given_sell(s, xs, probs, noise)
    return _fixed_point(eval_one, start, tol, max_iter)


@dataclass(frozen=True)
class StaticQuotes:
    """Both zero-profit prices for one belief, with solver effort."""

    ask: float
    bid: float
    ask_iterations: int
    bid_iterations: int

    @property
    def spread(self) -> float:
        return self.ask - self.bid


def solve_static_quotes(
    belief: Belief,
    grid: StateGrid,
    noise: NoiseModel,
    tol: float = DEFAULT_TOL,
    force: bool = False,
) -> StaticQuotes:
    ask, ask_iters = _solve_side(True, belief, grid, noise, tol, None, force)
    bid, bid_iters = _solve_side(False, belief, grid, noise, tol, None, force)
    return StaticQuotes(ask=ask, bid=bid, ask_iterations=ask_iters, bid_iterations=bid_iters)


# --------------------------------------------------------------------------
# Root listing


def find_fixed_points(
    belief: Belief,
    grid: StateGrid,
    noise: NoiseModel,
    buy_side: bool = True,
    scan_points: int = 20_001,
    tol: float = 1e-10,
) -> list[float]:
    """All fixed points of s = g(s, pi) (or h) found by scanning [x_1, x_n].

    Works for any family, including static-only ones where the map is
    discontinuous and several fixed points (or none) can coexist. Sign
    changes of the residual r(s) = s - g(s, pi) are refined by bisection;
    a refined point is accepted only if the residual actually vanishes
    there, which discards jump discontinuities of r.
    """
    xs = tuple(float(v) for v in grid.values)
    probs = [float(v) for v in belief.probs]
    if buy_side:
        eval_one = lambda s: _mean_given_buy(s, xs, probs, noise)
    else:
        eval_one = lambda s: _mean_given_sell(s, xs, probs, noise)

    def residual(s):
        try:
            return s - eval_one(s)
        except (ZeroBuyProbability, ZeroSellProbability):
            return math.nan

    lo, hi = grid.x_min, grid.x_max
    step = (hi - lo) / (scan_points - 1)
    scale = max(1.0, abs(lo), abs(hi))
    roots: list[float] = []

    def push(candidate):
        for r in roots:
            if abs(r - candidate) <= max(10 * tol, 1e-9 * scale):
                return
        roots.append(candidate)

    prev_s = lo
    prev_r = residual(lo)
    if prev_r == 0.0:
        push(lo)
    for i in range(1, scan_points):
        s = lo + i * step if i < scan_points - 1 else hi
        r = residual(s)
        if r == 0.0:
            push(s)
        elif not (math.isnan(r) or math.isnan(prev_r)) and prev_r * r < 0.0:
            a, b = prev_s, s
            ra = prev_r
            while b - a > 1e-3 * tol:
                mid = 0.5 * (a + b)
                rm = residual(mid)
                if rm == 0.0:
                    a = b = mid
                    break
                if ra * rm < 0.0:
                    b = mid
                else:
                    a, ra = mid, rm
            candidate = 0.5 * (a + b)
            # A jump discontinuity of r bisects to a point with a finite
            # residual; a genuine root leaves essentially none.
            if abs(residual(candidate)) <= 100.0 * (1e-3 * tol) * scale + 1e-13:
                push(candidate)
        prev_s, prev_r = s, r
    return sorted(roots)


# --------------------------------------------------------------------------
# Uniqueness constants


def contraction_constants(grid: StateGrid, noise: NoiseModel, lam: float) -> ContractionConstants:
    """Constants of the local-uniqueness estimate for quote paths.

    K is the contraction modulus of the price maps, L the Lipschitz constant
    of the static prices in the belief (L = 2 * max|x| / Phi(C)^2), M the
    density peak, K1 = 12 * L * n * lam * M the drift-mismatch rate, and any
    two solutions of the filter/quote system started together agree on
    [0, t_star] with t_star = (1 - K) / (2 * K1).
    """
    if not (lam >= 0.0 and math.isfinite(lam)):
        raise ConfigError("arrival rate must be nonnegative and finite")
    report = check_gm_condition(noise, grid.width)
    if not report.passes:
        raise ConditionFailed(
            f"admissibility condition fails (K = {report.K:.6g}); the "
            "uniqueness constants are not defined"
        )
    x_abs = max(abs(grid.x_min), abs(grid.x_max))
    big_l = 2.0 * x_abs / report.phi_at_c**2
    k_one = 12.0 * big_l * grid.n * lam * report.M
    t_star = math.inf if k_one == 0.0 else (1.0 - report.K) / (2.0 * k_one)
    return ContractionConstants(K=report.K, L=big_l, M=report.M, K1=k_one, t_star=t_star)
