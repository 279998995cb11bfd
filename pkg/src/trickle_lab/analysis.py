"""Closed-form and numerical results for the star network.

With ``k_max`` unbounded, only the hub keeps adapting ``k`` while the leaves
settle at ``k = 1``. The hub's ``k`` then follows a Markov chain. For
``alpha = 1`` the finite chain on states ``{0, ..., n}`` is solved directly.
For general ``alpha`` the ``n -> inf`` limit of ``k/n`` is a chain on
``[0, alpha]`` with an atom at ``alpha``. The atom probability ``p_alpha``
is the chance that the hub is suppressed in a given interval.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import Polynomial

SERIES_TOL = 1e-15
SERIES_MAX_TERMS = 200
DEPTH_FLOOR = 12
DEPTH_CAP = 5000
DENSITY_SUPPORT_TOL = 1e-12


# -- finite-n chain, alpha = 1 ----------------------------------------------


def star_transition_matrix(n: int) -> np.ndarray:
    """Transition matrix of the hub's ``k`` for a star with ``n`` leaves and alpha = 1.

    States 0 and 1 both mean ``k = 1`` (zero or one message heard last
    interval); state ``m >= 2`` means ``k = m``. The hub's position among the
    ``n + 1`` timers is uniform, so from ``k = m`` it broadcasts after ``j < m``
    leaves with probability ``1/(n+1)`` each (next state ``j``), and is
    otherwise suppressed and hears all ``n`` leaves (next state ``n``).
    """
    if n < 1:
        raise ValueError("star needs at least one leaf")
    size = n + 1
    P = np.zeros((size, size))
    step = 1.0 / size
    for m in range(size):
        fire = max(m, 1)
        P[m, :fire] = step
        P[m, n] += 1.0 - fire * step
    return P


def steady_state(P: np.ndarray, residual_tol: float = 1e-10) -> np.ndarray:
    """Stationary vector of an irreducible chain by a dense linear solve.

    One balance equation of ``q (P - I) = 0`` is replaced by ``sum(q) = 1``.
    """
    P = np.asarray(P, dtype=float)
    size = P.shape[0]
    if P.shape != (size, size):
        raise ValueError("transition matrix must be square")
    A = P.T - np.eye(size)
    A[-1, :] = 1.0
    b = np.zeros(size)
    b[-1] = 1.0
    try:
        q = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"stationary system is singular: {exc}") from exc
    residual = float(np.max(np.abs(q @ P - q)))
    if residual > residual_tol or abs(q.sum() - 1.0) > 1e-12:
        raise np.linalg.LinAlgError(f"stationary solve did not converge (residual {residual:.3e})")
    return q


@dataclass(frozen=True)
class MarkovStarResult:
    n: int
    alpha: float
    q: np.ndarray

    @property
    def p_suppress(self) -> float:
        return float(self.q[self.n])

    @property
    def p_broadcast_central(self) -> float:
        return 1.0 - self.p_suppress


def star_markov(n: int) -> MarkovStarResult:
    return MarkovStarResult(n=n, alpha=1.0, q=steady_state(star_transition_matrix(n)))


# -- asymptotic chain ---------------------------------------------------------


def p_alpha_series(alpha: float, tol: float = SERIES_TOL) -> float:
    """Hub suppression probability as ``n -> inf``: ``1 / sum_i alpha^(i(i+1)/2) / i!``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha!r}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    total = 1.0
    term = 1.0
    for i in range(1, SERIES_MAX_TERMS):
        term *= alpha**i / i
        total += term
        if term < tol * total:
            break
    return 1.0 / total


def p_star_alpha(alpha: float) -> float:
    """Asymptotic broadcast probability of a leaf, ``(1 - p_alpha) / alpha``."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")
    return (1.0 - p_alpha_series(alpha)) / alpha


@dataclass(frozen=True)
class AsymptoticStar:
    alpha: float
    p_alpha: float
    p_star_alpha: float
    series_terms_used: int


def series_terms(alpha: float, tol: float = SERIES_TOL) -> int:
    total, term = 1.0, 1.0
    for i in range(1, SERIES_MAX_TERMS):
        term *= alpha**i / i
        total += term
        if term < tol * total:
            return i + 1
    return SERIES_MAX_TERMS


def asymptotic_star(alpha: float) -> AsymptoticStar:
    return AsymptoticStar(
        alpha=alpha,
        p_alpha=p_alpha_series(alpha),
        p_star_alpha=p_star_alpha(alpha),
        series_terms_used=series_terms(alpha),
    )


def kernel_step(x: float, alpha: float, rng: random.Random) -> float:
    """One step of the limiting chain.

    With probability ``x`` move uniformly into ``[0, alpha * x]``; otherwise
    jump to the atom ``alpha``.
    """
    if rng.random() < x:
        return alpha * x * rng.random()
    return alpha


@dataclass(frozen=True)
class MonteCarloEstimate:
    estimate: float
    stderr: float
    steps: int
    cycles: int


def kernel_chain_monte_carlo(alpha: float, steps: int, rng: random.Random) -> MonteCarloEstimate:
    """Long-run fraction of steps spent at the atom, started at the atom.

    The standard error comes from the regenerative structure. Visits to the
    atom split the path into i.i.d. cycles, and ``p = 1 / E[cycle length]``.
    """
    if steps < 100_000:
        raise ValueError("kernel_chain_monte_carlo needs at least 1e5 steps")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")
    draw = rng.random
    x = alpha
    at_atom = 0
    lengths: list[int] = []
    since = 0
    for _ in range(steps):
        since += 1
        if draw() < x:
            x = alpha * x * draw()
        else:
            x = alpha
            at_atom += 1
            lengths.append(since)
            since = 0
    cycles = np.asarray(lengths, dtype=float)
    mean_len = cycles.mean()
    stderr = float(cycles.std(ddof=1) / math.sqrt(cycles.size) / mean_len**2) if cycles.size > 1 else float("nan")
    return MonteCarloEstimate(estimate=at_atom / steps, stderr=stderr, steps=steps, cycles=int(cycles.size))


def return_time_tail(alpha: float, i: int) -> float:
    """``P[T > i] = alpha^(i(i+1)/2) / i!`` for the first return time to the atom."""
    if i < 0:
        raise ValueError("i must be non-negative")
    if i == 0:
        return 1.0
    if alpha == 0.0:
        return 0.0
    return math.exp(i * (i + 1) / 2 * math.log(alpha) - math.lgamma(i + 1))


def transient_density(alpha: float, i: int, x: float) -> float:
    """Density of the chain after ``i`` steps from the atom, given no return yet."""
    if i < 1:
        raise ValueError("i must be >= 1")
    top = alpha ** (i + 1)
    if x < 0.0 or x > top:
        return 0.0
    return i / top * (1.0 - x / top) ** (i - 1)


@lru_cache(maxsize=64)
def _density_branches(alpha: float, depth: int) -> tuple[Polynomial, ...]:
    """Branch ``i`` of the stationary density on ``[alpha^(i+1), alpha^i)``.

    Each branch is a polynomial in the scaled variable ``s = x / alpha^i``, and
    satisfies ``P_i(s) = P_{i-1}(alpha) + alpha^(i-2) * int_s^1 P_{i-1}``.
    Integration is exact.
    """
    p = p_alpha_series(alpha)
    branches = [Polynomial([0.0]), Polynomial([0.0]), Polynomial([p / alpha])]
    for i in range(3, depth + 1):
        prev = branches[i - 1]
        anti = prev.integ()
        branch = prev(alpha) + alpha ** (i - 2) * (anti(1.0) - anti)
        # coefficients below double precision relative to the constant term carry no information
        coef = branch.coef.copy()
        coef[np.abs(coef) < 1e-18 * abs(coef[0])] = 0.0
        branches.append(Polynomial(np.trim_zeros(coef, "b") if coef.any() else coef[:1]))
    return tuple(branches)


def density_depth(alpha: float) -> int:
    """Branches needed before ``alpha^(depth+1)`` drops below 1e-12 (at least 12)."""
    if alpha >= 1.0:
        return DEPTH_FLOOR
    needed = math.ceil(math.log(DENSITY_SUPPORT_TOL) / math.log(alpha))
    return min(max(DEPTH_FLOOR, needed), DEPTH_CAP)


def stationary_density(alpha: float, x: float, depth: int | None = None) -> float:
    """Continuous part of the limiting chain's stationary law at ``x`` in ``[0, alpha)``.

    For ``alpha = 1`` this is ``exp(-x)``. Below ``alpha^(depth+1)`` the
    deepest computed branch is extended by its value at its lower end; the
    default depth makes that region shorter than 1e-12.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")
    if not 0.0 <= x < alpha:
        raise ValueError(f"x must lie in [0, alpha); the atom at alpha is p_alpha, got {x!r}")
    if alpha == 1.0:
        return math.exp(-x)
    if x == 0.0:
        return 1.0 / alpha
    if depth is None:
        depth = density_depth(alpha)
    depth = max(depth, 2)
    branches = _density_branches(alpha, depth)
    i = int(math.floor(math.log(x) / math.log(alpha)))
    # guard against rounding at branch edges
    while alpha ** (i + 1) > x:
        i += 1
    while i > 1 and alpha**i <= x:
        i -= 1
    if i > depth:
        return float(branches[depth](alpha))
    return float(branches[i](x / alpha**i))


# -- fixed-k estimates -----------------------------------------------------------


def fixed_k_probability_estimate(k: int, neighbours: int) -> float:
    """Rough broadcast probability ``min(1, k/(N+1))`` of a node with ``N`` neighbours."""
    if k < 1 or neighbours < 0:
        raise ValueError("need k >= 1 and N >= 0")
    return min(1.0, k / (neighbours + 1))


@dataclass(frozen=True)
class FixedStarPrediction:
    central: float
    leaf: float
    mean_broadcasts: float


def fixed_k_star_predictions(n: int, k: int) -> FixedStarPrediction:
    """Synchronized star, fixed ``k < n + 1``."""
    if not 1 <= k < n + 1:
        raise ValueError(f"need 1 <= k < n + 1, got k={k}, n={n}")
    central = k / (n + 1)
    if k == 1:
        return FixedStarPrediction(central, n / (n + 1), (n * n + 1) / (n + 1))
    return FixedStarPrediction(central, 1.0, central + n)


def p_alpha_table(alphas) -> list[tuple[float, float, float]]:
    """Rows ``(alpha, p_alpha, p_star_alpha)``."""
    return [(float(a), p_alpha_series(a), p_star_alpha(a)) for a in alphas]
