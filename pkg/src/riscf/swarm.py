"""Association solvers: position-adaptive binary PSO, the plain BPSO
baseline, and a brute-force oracle for small instances.

A candidate association is a K x M binary matrix; feasibility means every
column has exactly one 1 (each AP serves one UE) and every row has at
least one (every UE is served).  The position-adaptive update keeps every
particle feasible by construction: per-column argmax over the velocities,
followed by the infeasible-row rectification that moves a 1 out of a
multi-1 row into each empty row.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .metrics import association_feasible, aua_fitness


@dataclass
class SwarmHyper:
    particles: int = 200
    iters: int = 80
    c1: float = 2.0
    c2: float = 2.0
    omega: float = 0.5
    v_min: float = -10.0
    v_max: float = 10.0
    penalty_unserved: float = -3.0

    @classmethod
    def from_config(cls, config: SystemConfig) -> "SwarmHyper":
        return cls(particles=config.swarm_particles, iters=config.swarm_iters,
                   c1=config.swarm_c1, c2=config.swarm_c2,
                   omega=config.swarm_omega, v_min=config.swarm_vmin,
                   v_max=config.swarm_vmax,
                   penalty_unserved=config.penalty_unserved)


@dataclass
class Swarm:
    x: np.ndarray          # (I, K, M) int8 positions
    v: np.ndarray          # (I, K, M) velocities
    pbest: np.ndarray      # (I, K, M) int8
    pbest_fit: np.ndarray  # (I,)
    gbest: np.ndarray      # (K, M) int8
    gbest_fit: float


def velocity_update(v: np.ndarray, x: np.ndarray, pbest: np.ndarray,
                    gbest: np.ndarray, hyper: SwarmHyper,
                    rng: np.random.Generator) -> np.ndarray:
    """Inertia plus randomly weighted pulls toward local and global bests,
    clamped to [v_min, v_max].  One fresh uniform pair per element."""
    if not (v.shape == x.shape == pbest.shape == gbest.shape):
        raise ValueError("velocity_update: shape mismatch")
    u1 = rng.random(v.shape)
    u2 = rng.random(v.shape)
    new_v = (hyper.omega * v
             + hyper.c1 * u1 * (pbest - x)
             + hyper.c2 * u2 * (gbest - x))
    return np.clip(new_v, hyper.v_min, hyper.v_max)


def position_update(velocities: np.ndarray) -> np.ndarray:
    """Per column, set the single row with maximal velocity (ties: lowest
    row index); satisfies the one-UE-per-AP constraints by construction."""
    v = np.asarray(velocities, dtype=float)
    x = np.zeros(v.shape, dtype=np.int8)
    winners = np.argmax(v, axis=0)
    x[winners, np.arange(v.shape[1])] = 1
    return x


def rectify_infeasible_rows(x: np.ndarray, velocities: np.ndarray) -> np.ndarray:
    """Repair all-zero rows without ever creating a new one.

    Rows are processed in ascending index order.  Within a row, candidate
    columns are visited by descending velocity (ties: lower column index);
    the column's 1 moves here only if its donor row keeps at least one 1.
    With K <= M a legal donor always exists.
    """
    x = np.array(x, dtype=np.int8, copy=True)
    k_, m_ = x.shape
    if m_ < k_:
        raise ValueError("cannot cover all rows when M < K")
    row_counts = x.sum(axis=1)
    for row in np.flatnonzero(row_counts == 0):
        order = np.argsort(-velocities[row], kind="stable")
        for col in order:
            donor = int(np.argmax(x[:, col]))
            if row_counts[donor] >= 2:
                x[donor, col] = 0
                x[row, col] = 1
                row_counts[donor] -= 1
                row_counts[row] += 1
                break
        else:
            raise AssertionError("no legal donor found; impossible for K <= M")
    return x


def _init_swarm(env, p, phi, hyper: SwarmHyper, rng: np.random.Generator,
                warm_gbest) -> Swarm:
    k_, m_ = env.config.K, env.config.M
    v = rng.uniform(hyper.v_min, hyper.v_max, size=(hyper.particles, k_, m_))
    x = np.empty((hyper.particles, k_, m_), dtype=np.int8)
    fit = np.empty(hyper.particles)
    if warm_gbest is not None:
        gbest = np.array(warm_gbest[0], dtype=np.int8, copy=True)
        gbest_fit = float(warm_gbest[1])
    else:
        gbest, gbest_fit = None, -np.inf
    for i in range(hyper.particles):
        x[i] = rectify_infeasible_rows(position_update(v[i]), v[i])
        fit[i] = aua_fitness(x[i], p, phi, env, hyper.penalty_unserved)
        if fit[i] > gbest_fit:
            gbest, gbest_fit = x[i].copy(), float(fit[i])
    return Swarm(x=x, v=v, pbest=x.copy(), pbest_fit=fit.copy(),
                 gbest=gbest, gbest_fit=gbest_fit)


def solve_aua(env, p, phi, hyper: SwarmHyper, rng: np.random.Generator,
              warm_gbest=None, callback=None):
    """Run the position-adaptive swarm; returns (association, fitness).

    ``warm_gbest`` seeds the global best with (matrix, fitness) carried
    over from the previous epoch.  ``callback(iteration, swarm)`` fires
    after initialization (iteration 0) and after each iteration; tests use
    it to audit per-iteration feasibility.
    """
    swarm = _init_swarm(env, p, phi, hyper, rng, warm_gbest)
    if callback is not None:
        callback(0, swarm)
    for it in range(1, hyper.iters + 1):
        for i in range(hyper.particles):
            swarm.v[i] = velocity_update(swarm.v[i], swarm.x[i], swarm.pbest[i],
                                         swarm.gbest, hyper, rng)
            swarm.x[i] = rectify_infeasible_rows(position_update(swarm.v[i]),
                                                 swarm.v[i])
            fit = aua_fitness(swarm.x[i], p, phi, env, hyper.penalty_unserved)
            if fit > swarm.pbest_fit[i]:
                swarm.pbest[i] = swarm.x[i]
                swarm.pbest_fit[i] = fit
            if swarm.pbest_fit[i] > swarm.gbest_fit:
                swarm.gbest = swarm.pbest[i].copy()
                swarm.gbest_fit = float(swarm.pbest_fit[i])
        if callback is not None:
            callback(it, swarm)
    return swarm.gbest.copy(), swarm.gbest_fit


def _sigmoid(v):
    return 1.0 / (1.0 + np.exp(-v))


def _structural_violations(x: np.ndarray) -> int:
    return int((x.sum(axis=1) == 0).sum() + (x.sum(axis=0) != 1).sum())


def _repair(x: np.ndarray) -> np.ndarray:
    """Project an arbitrary binary matrix onto the feasible set, using the
    matrix itself as the velocity ranking."""
    proxy = x.astype(float)
    return rectify_infeasible_rows(position_update(proxy), proxy)


def bpso_baseline(env, p, phi, hyper: SwarmHyper, rng: np.random.Generator,
                  warm_gbest=None, callback=None):
    """Plain BPSO: sigmoid-probabilistic bits, no per-iteration repair.

    Candidates violating the coverage/one-per-AP constraints take the
    penalty branch (violation count times the negative penalty) instead of
    being rectified; the final answer is repaired once so the return
    contract matches solve_aua.
    """
    k_, m_ = env.config.K, env.config.M

    def fitness(x):
        bad = _structural_violations(x)
        if bad:
            return bad * hyper.penalty_unserved
        return aua_fitness(x, p, phi, env, hyper.penalty_unserved)

    v = rng.uniform(hyper.v_min, hyper.v_max, size=(hyper.particles, k_, m_))
    x = (rng.random((hyper.particles, k_, m_)) < _sigmoid(v)).astype(np.int8)
    fit = np.array([fitness(x[i]) for i in range(hyper.particles)])
    pbest, pbest_fit = x.copy(), fit.copy()
    if warm_gbest is not None:
        gbest = np.array(warm_gbest[0], dtype=np.int8, copy=True)
        gbest_fit = float(warm_gbest[1])
    else:
        best0 = int(np.argmax(pbest_fit))
        gbest, gbest_fit = pbest[best0].copy(), float(pbest_fit[best0])
    if callback is not None:
        callback(0, Swarm(x, v, pbest, pbest_fit, gbest, gbest_fit))
    for it in range(1, hyper.iters + 1):
        for i in range(hyper.particles):
            v[i] = velocity_update(v[i], x[i], pbest[i], gbest, hyper, rng)
            x[i] = (rng.random((k_, m_)) < _sigmoid(v[i])).astype(np.int8)
            f = fitness(x[i])
            if f > pbest_fit[i]:
                pbest[i] = x[i]
                pbest_fit[i] = f
            if pbest_fit[i] > gbest_fit:
                gbest, gbest_fit = pbest[i].copy(), float(pbest_fit[i])
        if callback is not None:
            callback(it, Swarm(x, v, pbest, pbest_fit, gbest, gbest_fit))
    if not association_feasible(gbest):
        gbest = _repair(gbest)
        gbest_fit = aua_fitness(gbest, p, phi, env, hyper.penalty_unserved)
    return gbest.copy(), float(gbest_fit)


def brute_force_aua(env, p, phi, penalty_unserved: float = -3.0):
    """Exhaustive oracle: enumerate every column assignment, keep the best
    feasible matrix (ties: lexicographically smallest, row-major)."""
    k_, m_ = env.config.K, env.config.M
    if k_ * m_ > 20:
        raise ValueError("brute force guarded to K*M <= 20")
    best, best_fit = None, -np.inf
    for cols in itertools.product(range(k_), repeat=m_):
        x = np.zeros((k_, m_), dtype=np.int8)
        x[list(cols), np.arange(m_)] = 1
        if (x.sum(axis=1) == 0).any():
            continue
        fit = aua_fitness(x, p, phi, env, penalty_unserved)
        if fit > best_fit or (fit == best_fit
                              and tuple(x.ravel()) < tuple(best.ravel())):
            best, best_fit = x, fit
    return best, float(best_fit)
