"""Link-quality metrics: combining SINR, per-user rates, rewards, fitness.

Association matrices, power vectors and phase vectors are plain numpy
arrays; the feasibility rules live in the validators here.

Association feasibility (K x M binary matrix L):
  * every entry is 0/1,
  * every column sums to exactly 1 (an AP serves exactly one UE),
  * every row sums to >= 1 (every UE is served).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .channel import effective_channels

TWO_PI = 2.0 * np.pi


def association_feasible(assoc: np.ndarray) -> bool:
    a = np.asarray(assoc)
    if a.ndim != 2:
        return False
    if not np.logical_or(a == 0, a == 1).all():
        return False
    return bool((a.sum(axis=0) == 1).all() and (a.sum(axis=1) >= 1).all())


def assert_association_feasible(assoc: np.ndarray) -> None:
    if not association_feasible(assoc):
        raise ValueError("infeasible association matrix "
                         "(entries 0/1, column sums == 1, row sums >= 1)")


def assert_phases_valid(phi: np.ndarray) -> None:
    p = np.asarray(phi, dtype=float)
    if p.size and (np.any(p < 0.0) or np.any(p >= TWO_PI)):
        raise ValueError("phases must lie in [0, 2*pi)")


@dataclass
class RateReport:
    sinr: np.ndarray        # (K,)
    rate: np.ndarray        # (K,) bit/s/Hz
    sum_rate: float
    violators: list[int]    # UEs with rate < r_min

    @property
    def n_violations(self) -> int:
        return len(self.violators)


def sinr(assoc: np.ndarray, p: np.ndarray, phi: np.ndarray,
         f_channels, est_channels, noise_w: float,
         validate: bool = True) -> np.ndarray:
    """Per-user combining SINR.

    ``f_channels`` supplies the channels each AP actually receives over
    (the physical truth, or the stored estimates for the twin reading);
    ``est_channels`` supplies the conjugate matched filters.  Both just
    need a ``.links()`` view.  ``validate=False`` skips the input checks
    for callers that validated the association at install time.
    """
    p = np.asarray(p, dtype=float)
    if validate:
        assert_association_feasible(assoc)
        assert_phases_valid(phi)
        if np.any(p < 0.0):
            raise ValueError("powers must be >= 0")
    phi = np.asarray(phi, dtype=float)
    fhat = effective_channels(*est_channels.links(), phi)
    if f_channels is est_channels:
        f = fhat
    else:
        f = effective_channels(*f_channels.links(), phi)
    if assoc.shape != (f.shape[1], f.shape[0]) or p.shape[0] != f.shape[1]:
        raise ValueError("inconsistent shapes between association, powers and channels")
    return backend.kernels().uplink_sinr(
        np.ascontiguousarray(assoc, dtype=np.float64), p, f, fhat, float(noise_w))


def rate_report(assoc, p, phi, f_channels, est_channels, noise_w: float,
                r_min: float, validate: bool = True) -> RateReport:
    alpha = sinr(assoc, p, phi, f_channels, est_channels, noise_w,
                 validate=validate)
    rate = np.log2(1.0 + alpha)
    violators = [int(k) for k in np.flatnonzero(rate < r_min)]
    return RateReport(sinr=alpha, rate=rate, sum_rate=float(rate.sum()),
                      violators=violators)


def pcrb_reward(report: RateReport, penalty_violation: float) -> float:
    """Sum-rate when every UE meets its minimum rate, else count * penalty."""
    if penalty_violation >= 0.0:
        raise ValueError("penalty_violation must be negative")
    k_c = report.n_violations
    if k_c == 0:
        return report.sum_rate
    return k_c * penalty_violation


def aua_fitness(assoc_candidate: np.ndarray, p, phi, env,
                penalty_unserved: float) -> float:
    """Association fitness under the twin reading of the environment.

    Sum-rate when all minimum rates hold, else (number of violating UEs)
    times the negative penalty.  Candidates must already be feasible;
    swarm callers rectify first.
    """
    if penalty_unserved >= 0.0:
        raise ValueError("penalty_unserved must be negative")
    assert_association_feasible(assoc_candidate)
    report = rate_report(assoc_candidate, p, phi, env.estimates, env.estimates,
                         env.noise_w, env.r_min, validate=False)
    k_u = report.n_violations
    if k_u == 0:
        return report.sum_rate
    return k_u * penalty_unserved
