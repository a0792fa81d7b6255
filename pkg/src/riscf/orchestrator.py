"""Epoch loop: association solve, agent training against the twin, scheduled
physical deployments, and the baseline methods.

Methods
-------
proposed     position-adaptive swarm association + two twin-critic agents
pabpso_ddpg  same association, single-critic (ddpg) agents
bpso_td3     plain-BPSO association, twin-critic agents
pcrb_out     swarm association, ONE agent emitting powers and phases jointly
allout       one agent emitting powers, phases, and the association
iees         implicit enumeration over associations + 6-level coordinate search
random       uniform feasible association, uniform powers/phases (the floor)

Every method shares the channel realizations of a given seed: the
environment stream is consumed identically regardless of method, so paired
seeds compare methods on the same world.
"""

from __future__ import annotations

import itertools
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .agents import AgentHyper, StateNormalizer, Td3Agent, map_actions
from .config import SystemConfig
from .metrics import rate_report
from .nets import ReplayBuffer
from .swarm import (SwarmHyper, bpso_baseline, position_update,
                    rectify_infeasible_rows, solve_aua)
from .twin import AgentState, TwinEnvironment

METHODS = ("proposed", "pabpso_ddpg", "bpso_td3", "pcrb_out", "allout",
           "iees", "random")

_STREAMS = ("env", "swarm", "agent0", "agent1", "buffer", "policy")


def rng_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent named generators; the env stream is consumed identically
    by every method so realizations pair across methods per seed."""
    children = np.random.SeedSequence(seed).spawn(len(_STREAMS))
    return {name: np.random.default_rng(ss) for name, ss in zip(_STREAMS, children)}


def default_association(k: int, m: int) -> np.ndarray:
    """Deterministic feasible matrix: column argmax over zeros, rectified."""
    zeros = np.zeros((k, m))
    return rectify_infeasible_rows(position_update(zeros), zeros)


def association_from_scores(scores: np.ndarray, k: int, m: int) -> np.ndarray:
    """Continuous scores (length K*M, row-major) to a feasible matrix via the
    swarm's per-column argmax + rectification."""
    grid = np.asarray(scores, dtype=float).reshape(k, m)
    return rectify_infeasible_rows(position_update(grid), grid)


@dataclass
class EpochRecord:
    epoch: int
    assoc: np.ndarray
    aua_fitness: float
    aua_warm_fitness: float | None
    r_opt: float
    p_opt: np.ndarray
    phi_opt: np.ndarray
    assoc_opt: np.ndarray
    episode_rewards: list[float]
    twin_steps: int
    physical_steps: int
    physical_reward: float | None
    physical_sum_rate: float | None
    wall_time_s: float


@dataclass
class StepRow:
    epoch: int
    episode: int
    step: int
    reward_twin: float
    sum_rate: float
    violations: int


@dataclass
class RunResult:
    method: str
    seed: int
    config: SystemConfig
    records: list[EpochRecord] = field(default_factory=list)
    steps: list[StepRow] = field(default_factory=list)

    @property
    def final_physical_sum_rate(self) -> float:
        return self.records[-1].physical_sum_rate

    @property
    def final_physical_reward(self) -> float:
        return self.records[-1].physical_reward


# ---------------------------------------------------------------------------
# learning methods

_AUA_SOLVERS = {"proposed": solve_aua, "pabpso_ddpg": solve_aua,
                "pcrb_out": solve_aua, "bpso_td3": bpso_baseline,
                "allout": None}


def _build_agents(method: str, config: SystemConfig, state_dim: int,
                  streams) -> list[tuple[Td3Agent, slice]]:
    k, bn, km = config.K, config.n_phases, config.K * config.M
    variant = "ddpg" if method == "pabpso_ddpg" else "td3"
    hyper = AgentHyper.from_config(config, variant=variant)
    if method in ("proposed", "pabpso_ddpg", "bpso_td3"):
        agents = [(Td3Agent(state_dim, k, hyper, streams["agent0"]), slice(0, k))]
        if bn > 0:
            agents.append((Td3Agent(state_dim, bn, hyper, streams["agent1"]),
                           slice(k, k + bn)))
        return agents
    if method == "pcrb_out":
        return [(Td3Agent(state_dim, k + bn, hyper, streams["agent0"]),
                 slice(0, k + bn))]
    if method == "allout":
        return [(Td3Agent(state_dim, k + bn + km, hyper, streams["agent0"]),
                 slice(0, k + bn + km))]
    raise ValueError(f"unknown learning method {method!r}")


def _run_learning(method: str, config: SystemConfig, seed: int,
                  env: TwinEnvironment | None = None) -> RunResult:
    streams = rng_streams(seed)
    if env is None:
        env = TwinEnvironment.from_config(config, streams["env"])
    k, bn = config.K, config.n_phases
    state_dim = 2 * k + bn
    agents = _build_agents(method, config, state_dim, streams)
    agent_rngs = [streams["agent0"], streams["agent1"]][:len(agents)]
    joint_dim = sum(a.action_dim for a, _ in agents)
    buffer = ReplayBuffer(config.buffer_capacity, state_dim, joint_dim,
                          streams["buffer"])
    normalizer = StateNormalizer(config.p_max_w, enabled=config.normalize_state)
    swarm_hyper = SwarmHyper.from_config(config)
    aua_solver = _AUA_SOLVERS[method]

    p0 = np.full(k, config.p_max_w / 2.0)
    phi0 = np.full(bn, np.pi)
    result = RunResult(method=method, seed=seed, config=config)
    p_aua, phi_aua = p0, phi0
    prev_assoc, prev_assoc_opt, prev_r_opt = None, None, None
    global_step = 0

    for z in range(1, config.epochs + 1):
        tic = time.monotonic()
        warm_fit = None
        if aua_solver is not None:
            warm = None if z == 1 else (prev_assoc, prev_r_opt)
            warm_fit = None if z == 1 else prev_r_opt
            assoc, fit = aua_solver(env, p_aua, phi_aua, swarm_hyper,
                                    streams["swarm"], warm_gbest=warm)
        else:
            assoc = default_association(k, config.M) if z == 1 else prev_assoc_opt
            fit = float("nan")
        env.sync_epoch(z, assoc)

        report0 = env.evaluate(p0, phi0)
        init_state = AgentState(alpha=report0.sinr.copy(), p=p0.copy(),
                                phi=phi0.copy())
        r_opt, p_opt, phi_opt = -np.inf, p0, phi0
        assoc_opt = np.array(assoc, copy=True)
        episode_rewards: list[float] = []

        for episode in range(1, config.episodes + 1):
            s = normalizer(init_state)
            ep_total = 0.0
            for step in range(1, config.steps + 1):
                global_step += 1
                parts = [agent.act(s, True, rng)
                         for (agent, _), rng in zip(agents, agent_rngs)]
                joint = np.concatenate(parts)
                p, phi = map_actions(joint[:k], joint[k:k + bn], config.p_max_w)
                if method == "allout":
                    env.set_association(association_from_scores(
                        joint[k + bn:], k, config.M))
                out = env.twin_step(p, phi)
                if out.reward > r_opt:
                    r_opt = out.reward
                    p_opt, phi_opt = p, phi
                    assoc_opt = env.assoc.copy()
                s2 = normalizer(out.next_state)
                buffer.push(s, joint, out.reward, s2)
                if buffer.size >= config.batch_size:
                    bs, ba, br, bs2 = buffer.sample(config.batch_size)
                    for (agent, sl), rng in zip(agents, agent_rngs):
                        agent.update((bs, ba[:, sl], br, bs2), global_step, rng)
                result.steps.append(StepRow(z, episode, step, out.reward,
                                            out.report.sum_rate,
                                            out.report.n_violations))
                ep_total += out.reward
                s = s2
            episode_rewards.append(ep_total)
            for agent, _ in agents:
                agent.decay_exploration()

        phys_reward, phys_sum = _end_of_epoch_interaction(
            env, z, config, p_opt, phi_opt, assoc_opt)
        result.records.append(EpochRecord(
            epoch=z, assoc=np.array(assoc, copy=True), aua_fitness=float(fit),
            aua_warm_fitness=warm_fit, r_opt=float(r_opt), p_opt=p_opt,
            phi_opt=phi_opt, assoc_opt=assoc_opt,
            episode_rewards=episode_rewards, twin_steps=env.twin_steps,
            physical_steps=env.physical_steps, physical_reward=phys_reward,
            physical_sum_rate=phys_sum, wall_time_s=time.monotonic() - tic))
        prev_assoc, prev_assoc_opt, prev_r_opt = assoc, assoc_opt, r_opt
        p_aua, phi_aua = p_opt, phi_opt
    return result


def _end_of_epoch_interaction(env: TwinEnvironment, epoch: int,
                              config: SystemConfig, p_opt, phi_opt, assoc_opt):
    """Deploy the epoch's best tuple physically when the schedule fires; the
    last epoch is always measured once so every run reports a physical
    result."""
    env.set_association(assoc_opt)
    out = env.end_epoch_interaction(epoch, p_opt, phi_opt,
                                    force=(epoch == config.epochs))
    if out is None:
        return None, None
    return out.reward, out.report.sum_rate


# ---------------------------------------------------------------------------
# search baselines

def _feasible_associations(k: int, m: int):
    """Implicit enumeration: branch over columns, prune branches that cannot
    cover the remaining rows."""
    assign = np.full(m, -1, dtype=int)
    covered = np.zeros(k, dtype=bool)

    def rec(col):
        missing = k - int(covered.sum())
        if m - col < missing:
            return
        if col == m:
            yield assign.copy()
            return
        for row in range(k):
            assign[col] = row
            was = covered[row]
            covered[row] = True
            yield from rec(col + 1)
            covered[row] = was
        assign[col] = -1

    for cols in rec(0):
        x = np.zeros((k, m), dtype=np.int8)
        x[cols, np.arange(m)] = 1
        yield x


def _run_iees(config: SystemConfig, seed: int,
              env: TwinEnvironment | None = None) -> RunResult:
    """Enumerated association + cyclic coordinate search on 6-level grids,
    evaluated against the twin's stored estimates."""
    if config.K * config.M > 20:
        raise ValueError("iees enumeration guarded to K*M <= 20")
    streams = rng_streams(seed)
    if env is None:
        env = TwinEnvironment.from_config(config, streams["env"])
    k, bn = config.K, config.n_phases
    p_levels = np.linspace(0.0, config.p_max_w, 6)
    phi_levels = np.arange(6) * (np.pi / 3.0)

    def dt_sum_rate(assoc, p_idx, phi_idx) -> float:
        rep = rate_report(assoc, p_levels[p_idx], phi_levels[phi_idx],
                          env.estimates, env.estimates, env.noise_w, env.r_min)
        return rep.sum_rate

    def coordinate_search(assoc, p_idx, phi_idx):
        p_idx, phi_idx = p_idx.copy(), phi_idx.copy()
        best = dt_sum_rate(assoc, p_idx, phi_idx)
        improved = True
        while improved:
            improved = False
            for which, i in itertools.chain((("p", i) for i in range(k)),
                                            (("f", i) for i in range(bn))):
                arr = p_idx if which == "p" else phi_idx
                keep = arr[i]
                for lvl in range(6):
                    if lvl == keep:
                        continue
                    arr[i] = lvl
                    val = dt_sum_rate(assoc, p_idx, phi_idx)
                    if val > best:
                        best = val
                        keep = lvl
                        improved = True
                arr[i] = keep
        return best, p_idx, phi_idx

    result = RunResult(method="iees", seed=seed, config=config)
    carry_p = np.full(k, 2, dtype=int)
    carry_phi = np.full(bn, 2, dtype=int)
    prev_assoc = default_association(k, config.M)
    for z in range(1, config.epochs + 1):
        tic = time.monotonic()
        env.sync_epoch(z, prev_assoc)
        best = (-np.inf, None, None, None)
        for assoc in _feasible_associations(k, config.M):
            val, p_idx, phi_idx = coordinate_search(assoc, carry_p, carry_phi)
            if val > best[0]:
                best = (val, assoc, p_idx, phi_idx)
        _, assoc, p_idx, phi_idx = best
        p, phi = p_levels[p_idx], phi_levels[phi_idx]
        env.set_association(assoc)
        out = env.twin_step(p, phi)
        phys_reward, phys_sum = _end_of_epoch_interaction(
            env, z, config, p, phi, assoc)
        result.steps.append(StepRow(z, 1, 1, out.reward, out.report.sum_rate,
                                    out.report.n_violations))
        result.records.append(EpochRecord(
            epoch=z, assoc=assoc, aua_fitness=float(best[0]),
            aua_warm_fitness=None, r_opt=float(out.reward), p_opt=p,
            phi_opt=phi, assoc_opt=assoc, episode_rewards=[float(out.reward)],
            twin_steps=env.twin_steps, physical_steps=env.physical_steps,
            physical_reward=phys_reward, physical_sum_rate=phys_sum,
            wall_time_s=time.monotonic() - tic))
        carry_p, carry_phi = p_idx, phi_idx
        prev_assoc = assoc
    return result


def _random_feasible(k: int, m: int, rng: np.random.Generator) -> np.ndarray:
    for _ in range(10_000):
        cols = rng.integers(0, k, size=m)
        x = np.zeros((k, m), dtype=np.int8)
        x[cols, np.arange(m)] = 1
        if (x.sum(axis=1) >= 1).all():
            return x
    grid = rng.random((k, m))
    return rectify_infeasible_rows(position_update(grid), grid)


def _run_random(config: SystemConfig, seed: int,
                env: TwinEnvironment | None = None) -> RunResult:
    """Uniform feasible association, uniform powers and phases, per step."""
    streams = rng_streams(seed)
    if env is None:
        env = TwinEnvironment.from_config(config, streams["env"])
    rng = streams["policy"]
    k, bn = config.K, config.n_phases
    result = RunResult(method="random", seed=seed, config=config)
    for z in range(1, config.epochs + 1):
        tic = time.monotonic()
        env.sync_epoch(z, _random_feasible(k, config.M, rng))
        r_opt, p_opt, phi_opt = -np.inf, None, None
        assoc_opt = env.assoc.copy()
        episode_rewards = []
        for episode in range(1, config.episodes + 1):
            ep_total = 0.0
            for step in range(1, config.steps + 1):
                env.set_association(_random_feasible(k, config.M, rng))
                p = rng.uniform(0.0, config.p_max_w, size=k)
                phi = rng.uniform(0.0, 2.0 * np.pi, size=bn)
                out = env.twin_step(p, phi)
                if out.reward > r_opt:
                    r_opt, p_opt, phi_opt = out.reward, p, phi
                    assoc_opt = env.assoc.copy()
                result.steps.append(StepRow(z, episode, step, out.reward,
                                            out.report.sum_rate,
                                            out.report.n_violations))
                ep_total += out.reward
            episode_rewards.append(ep_total)
        phys_reward, phys_sum = _end_of_epoch_interaction(
            env, z, config, p_opt, phi_opt, assoc_opt)
        result.records.append(EpochRecord(
            epoch=z, assoc=env.assoc.copy(), aua_fitness=float("nan"),
            aua_warm_fitness=None, r_opt=float(r_opt), p_opt=p_opt,
            phi_opt=phi_opt, assoc_opt=assoc_opt,
            episode_rewards=episode_rewards, twin_steps=env.twin_steps,
            physical_steps=env.physical_steps, physical_reward=phys_reward,
            physical_sum_rate=phys_sum, wall_time_s=time.monotonic() - tic))
    return result


# ---------------------------------------------------------------------------
# entry points

def run_experiment(method: str, config: SystemConfig, seed: int | None = None,
                   env: TwinEnvironment | None = None) -> RunResult:
    """One full run of one method on one seed.

    ``env`` replays a prebuilt world (snapshot restore); by default the
    world is generated from the seed's environment stream.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; have {METHODS}")
    config.validate()
    seed = config.seed if seed is None else seed
    # The run is dominated by small matmuls; a threaded BLAS loses badly
    # to serial execution there, so pin it for the duration.
    with threadpool_limits(limits=1, user_api="blas"):
        if method == "iees":
            result = _run_iees(config, seed, env=env)
        elif method == "random":
            result = _run_random(config, seed, env=env)
        else:
            result = _run_learning(method, config, seed, env=env)
    _check_finite(result)
    return result


def _check_finite(result: RunResult) -> None:
    for rec in result.records:
        if not np.isfinite(rec.r_opt):
            raise FloatingPointError(
                f"non-finite best reward in epoch {rec.epoch} "
                f"({result.method}, seed {result.seed})")


def _run_job(job) -> RunResult:
    method, config, seed = job
    return run_experiment(method, config, seed)


def run_many(jobs, workers: int = 1) -> list[RunResult]:
    """Run (method, config, seed) jobs, optionally across processes; the
    output order always matches the input order."""
    jobs = list(jobs)
    if workers <= 1:
        return [_run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_job, jobs))


def run_sweep(param: str, values, methods, base_config: SystemConfig, seeds,
              workers: int = 1) -> list[RunResult]:
    """Vary one config field over values for each method and seed."""
    jobs = [(method, base_config.replace(**{param: value}), seed)
            for value in values for method in methods for seed in seeds]
    return run_many(jobs, workers=workers)


def median_final_sum_rate(results, method: str | None = None,
                          where=None) -> float:
    picked = [r.final_physical_sum_rate for r in results
              if (method is None or r.method == method)
              and (where is None or where(r))]
    if not picked:
        raise ValueError("no matching runs")
    return float(np.median(picked))
