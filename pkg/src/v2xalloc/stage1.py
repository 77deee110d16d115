"""Inter-subregion allocator: density utility and its closed-form maximizer.

The utility of giving share ``eps`` to a subregion with density ``kappa`` is

    exp(-(kappa - kappa_jam/2)^2 / c1) * ln(1 + c2 * eps)

The Gaussian factor peaks where the macroscopic flow peaks (half the jam
density); the log factor gives diminishing returns in the share. Maximizing
the sum over the probability simplex is a concave problem whose KKT system
has a water-filling solution: shares are positive exactly for the subregions
whose weight exceeds the active Lagrange level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mobility import TdiVector

N_SUBREGIONS = 4


@dataclass(frozen=True)
class UtilityParams:
    c1: float
    c2: float
    kappa_jam: float

    def __post_init__(self):
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("c1 and c2 must be positive")


@dataclass(frozen=True)
class ShareVector:
    """Stage-one output: simplex shares, active count, and the dual level."""

    epsilon: np.ndarray
    active_count: int
    multiplier: float

    def __post_init__(self):
        arr = np.asarray(self.epsilon, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "epsilon", arr)


def gaussian_weight(kappa: float | np.ndarray, params: UtilityParams):
    """The density weight ``exp(-(kappa - kjam/2)^2 / c1)``."""
    centered = np.asarray(kappa, dtype=float) - params.kappa_jam / 2.0
    return np.exp(-(centered**2) / params.c1)


def utility(kappa: float, epsilon: float, params: UtilityParams) -> float:
    """Delay utility of one subregion; natural log keeps the KKT system exact."""
    return float(gaussian_weight(kappa, params) * np.log1p(params.c2 * epsilon))


def utility_sum(kappa: np.ndarray, epsilon: np.ndarray,
                params: UtilityParams) -> float:
    weights = gaussian_weight(kappa, params)
    return float(np.sum(weights * np.log1p(params.c2 * np.asarray(epsilon))))


def lagrange_threshold(kappa: float | np.ndarray, params: UtilityParams):
    """Dual level at which a subregion's share hits zero: ``c2 * weight``."""
    return params.c2 * gaussian_weight(kappa, params)


def omega_candidate(sorted_weights: np.ndarray, m: int,
                    params: UtilityParams) -> float:
    """Dual level if exactly the ``m`` largest-weight subregions are active.

    ``sorted_weights`` must hold the Gaussian weights in descending order;
    the candidate is ``sum of the first m weights / (1 + m/c2)``, which is
    the unique level making the active shares sum to one.
    """
    if not 1 <= m <= len(sorted_weights):
        raise ValueError("m must index into the sorted weights")
    return float(np.sum(sorted_weights[:m]) / (1.0 + m / params.c2))


def allocate_shares(tdi: TdiVector, params: UtilityParams) -> ShareVector:
    """Closed-form simplex maximizer of the summed delay utility.

    Thresholds are sorted descending (ties broken by subregion id for
    determinism) and the active set grows while each candidate dual level
    stays below the next threshold. Shares follow the water-filling formula
    and are renormalized so they sum to one exactly up to rounding; equal
    densities therefore come out as an exact quarter each.
    """
    weights = gaussian_weight(tdi.kappa, params)
    order = np.lexsort((np.arange(N_SUBREGIONS), -weights))
    sorted_w = weights[order]

    if sorted_w[0] <= 0.0:
        # All weights underflowed to zero: the objective is identically zero
        # and any simplex point is optimal. Return the symmetric one.
        return ShareVector(
            epsilon=np.full(N_SUBREGIONS, 1.0 / N_SUBREGIONS),
            active_count=N_SUBREGIONS,
            multiplier=0.0,
        )

    active = 0
    omega = np.inf
    for m in range(1, N_SUBREGIONS + 1):
        candidate = omega_candidate(sorted_w, m, params)
        if candidate < lagrange_threshold_from_weight(sorted_w[m - 1], params):
            active = m
            omega = candidate
        else:
            break

    raw = np.maximum(0.0, (1.0 / params.c2)
                     * ((params.c2 / omega) * weights - 1.0))
    total = raw.sum()
    return ShareVector(epsilon=raw / total, active_count=active,
                       multiplier=float(omega))


def lagrange_threshold_from_weight(weight: float, params: UtilityParams) -> float:
    return params.c2 * weight


def rb_budgets(shares: ShareVector, total_rbs: int,
               mode: str = "largest_remainder") -> np.ndarray:
    """Integer RB budgets per subregion from the stage-one shares.

    ``strict_floor`` floors each share and discards the leftovers;
    ``largest_remainder`` (default) hands the floored-away RBs to the
    subregions with the largest fractional remainders, ties broken by id.
    """
    exact = shares.epsilon * total_rbs
    floors = np.floor(exact).astype(int)
    if mode == "strict_floor":
        return floors
    if mode != "largest_remainder":
        raise ValueError(f"unknown leftover mode {mode!r}")
    leftover = total_rbs - int(floors.sum())
    if leftover > 0:
        remainders = exact - floors
        order = np.lexsort((np.arange(len(exact)), -remainders))
        floors[order[:leftover]] += 1
    return floors
