"""Twin environment: stored channel estimates replayed as the training world.

The environment keeps two channel sets: the hidden physical truth, and the
estimates recorded at the last physical interaction.  Twin steps price an
action against the estimates only; physical steps (at most one per epoch)
price it against the truth.  Between epochs the scattered part of the truth
drifts; the estimates follow only when the interaction schedule fires, so a
rarely-synced twin gradually goes stale.

Epoch timeline, with n = sync_interval (0 disables interactions):

* ``sync_epoch(z, assoc)`` - installs the epoch association, resets the
  interaction counters, and for z >= 2 lets the scattered part of the
  truth drift.
* training: twin steps only.
* ``end_epoch_interaction(z, p, phi)`` - when ``z % n == 0``: one physical
  step pricing the epoch's best action, and the measurement taken during
  that interaction refreshes the stored estimates (so epoch z+1 trains on
  a picture of epoch z's world).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import serialization
from .channel import (ChannelEstimates, ChannelRealization, NetworkTopology,
                      generate_topology, mmse_estimate, resample_small_scale,
                      sample_channels)
from .config import SystemConfig
from .metrics import RateReport, assert_association_feasible, pcrb_reward, rate_report


@dataclass
class AgentState:
    """Step state observed by the agents: previous SINRs, powers, phases."""

    alpha: np.ndarray  # (K,)
    p: np.ndarray      # (K,)
    phi: np.ndarray    # (B*N,)

    def vector(self) -> np.ndarray:
        return np.concatenate([self.alpha, self.p, self.phi]).astype(np.float64)

    @property
    def dim(self) -> int:
        return self.alpha.shape[0] + self.p.shape[0] + self.phi.shape[0]


@dataclass
class StepOutcome:
    reward: float
    next_state: AgentState
    report: RateReport
    mode: str  # "twin" | "physical"


class TwinEnvironment:
    """One training run's twin.  Callers serialize steps; the environment
    owns the randomness of the physical world (drift, pilot noise)."""

    def __init__(self, config: SystemConfig, topology: NetworkTopology,
                 truth: ChannelRealization, estimates: ChannelEstimates,
                 rng: np.random.Generator):
        config.validate()
        self.config = config
        self.topology = topology
        self.truth = truth
        self.estimates = estimates
        self.rng = rng
        self.assoc: np.ndarray | None = None
        self.noise_w = config.noise_power_w()
        self.r_min = config.r_min_bps
        self.sync_interval = config.sync_interval
        self.epoch = 0
        self.twin_steps = 0          # per-epoch counters
        self.physical_steps = 0
        self.total_twin_steps = 0
        self.total_physical_steps = 0
        self.estimate_refreshes = 0

    @classmethod
    def from_config(cls, config: SystemConfig, rng: np.random.Generator
                    ) -> "TwinEnvironment":
        """Generate topology, truth, and the initial measurement in one go."""
        topology = generate_topology(config, rng)
        truth = sample_channels(topology, config, rng)
        estimates = mmse_estimate(truth, config, rng)
        return cls(config, topology, truth, estimates, rng)

    # ------------------------------------------------------------------
    def interaction_fires(self, epoch: int) -> bool:
        return self.sync_interval > 0 and epoch % self.sync_interval == 0

    def evaluate(self, p, phi, physical: bool = False) -> RateReport:
        """Rate report without touching the interaction counters."""
        if self.assoc is None:
            raise RuntimeError("association not initialized; call sync_epoch first")
        f_source = self.truth if physical else self.estimates
        # association feasibility is enforced at install time
        return rate_report(self.assoc, p, phi, f_source, self.estimates,
                           self.noise_w, self.r_min, validate=False)

    def _step(self, p, phi, physical: bool) -> StepOutcome:
        report = self.evaluate(p, phi, physical=physical)
        reward = pcrb_reward(report, self.config.penalty_violation)
        nxt = AgentState(alpha=report.sinr.copy(),
                         p=np.array(p, dtype=float, copy=True),
                         phi=np.array(phi, dtype=float, copy=True))
        return StepOutcome(reward=reward, next_state=nxt, report=report,
                           mode="physical" if physical else "twin")

    def twin_step(self, p, phi) -> StepOutcome:
        out = self._step(p, phi, physical=False)
        self.twin_steps += 1
        self.total_twin_steps += 1
        return out

    def physical_step(self, p, phi) -> StepOutcome:
        out = self._step(p, phi, physical=True)
        self.physical_steps += 1
        self.total_physical_steps += 1
        return out

    # ------------------------------------------------------------------
    def refresh_estimates(self) -> None:
        """Fold a fresh measurement of the current truth into the store."""
        self.estimates = mmse_estimate(self.truth, self.config, self.rng)
        self.estimate_refreshes += 1

    def sync_epoch(self, epoch: int, new_assoc: np.ndarray) -> "TwinEnvironment":
        """Enter an epoch: install its association and roll the world forward.

        The stored estimates persist here; they only move when an
        interaction's measurement folds them in (end_epoch_interaction), so
        a never-synced twin replays its initial picture forever.
        """
        assert_association_feasible(new_assoc)
        if epoch >= 2:
            self.truth = resample_small_scale(self.truth, self.config, self.rng)
        self.assoc = np.array(new_assoc, dtype=np.int8, copy=True)
        self.epoch = epoch
        self.twin_steps = 0
        self.physical_steps = 0
        return self

    def end_epoch_interaction(self, epoch: int, p, phi,
                              force: bool = False) -> StepOutcome | None:
        """Scheduled end-of-epoch physical interaction.

        When the schedule fires at ``epoch``: one physical step pricing
        (p, phi) under the current association, followed by a fresh
        measurement of the truth into the estimate store.  ``force`` runs
        the physical step alone (the final-epoch deployment of a run whose
        schedule never fires).  Returns the outcome, or None if idle.
        """
        fires = self.interaction_fires(epoch)
        if not fires and not force:
            return None
        out = self.physical_step(p, phi)
        if fires:
            if self.config.resample_positions_on_sync:
                self.topology = generate_topology(self.config, self.rng)
                self.truth = sample_channels(self.topology, self.config, self.rng)
            self.refresh_estimates()
        return out

    def set_association(self, assoc: np.ndarray) -> None:
        """Swap the association mid-epoch (used by the all-in-one baseline)."""
        assert_association_feasible(assoc)
        self.assoc = np.array(assoc, dtype=np.int8, copy=True)


# ---------------------------------------------------------------------------
# snapshot persistence

def save_snapshot(env: TwinEnvironment, path, extra_meta: dict | None = None) -> None:
    """Write a bit-exact, resumable picture of the environment."""
    meta = {"kind": "twin-snapshot", "saved_at": time.strftime("%Y-%m-%dT%H:%M:%S")}
    for key, value in env.config.to_dict().items():
        meta[f"config.{key}"] = value
    state = env.rng.bit_generator.state
    meta["rng.bit_generator"] = state["bit_generator"]
    meta["rng.state"] = state["state"]["state"]
    meta["rng.inc"] = state["state"]["inc"]
    meta["rng.has_uint32"] = state["has_uint32"]
    meta["rng.uinteger"] = state["uinteger"]
    meta["env.epoch"] = env.epoch
    if extra_meta:
        meta.update(extra_meta)
    arrays = {
        "ue_pos": env.topology.ue_pos,
        "ap_pos": env.topology.ap_pos,
        "ris_pos": env.topology.ris_pos,
        "truth.h_direct": env.truth.h_direct,
        "truth.h_cascaded": env.truth.h_cascaded,
        "truth.beta_direct": env.truth.beta_direct,
        "truth.beta_cascaded": env.truth.beta_cascaded,
        "truth.los_direct": env.truth.los_direct,
        "truth.los_cascaded": env.truth.los_cascaded,
        "truth.nlos_direct": env.truth.nlos_direct,
        "truth.nlos_cascaded": env.truth.nlos_cascaded,
        "estimates.hhat_direct": env.estimates.hhat_direct,
        "estimates.hhat_cascaded": env.estimates.hhat_cascaded,
    }
    if env.assoc is not None:
        arrays["assoc"] = env.assoc
    serialization.save_archive(path, meta, arrays)


def load_snapshot(path) -> tuple[TwinEnvironment, dict]:
    """Rebuild an environment (exact arrays, exact rng state) from a snapshot.

    Returns (environment, leftover metadata) where the leftover holds any
    extra keys the writer attached (e.g. the run method).
    """
    meta, arrays = serialization.load_archive(path)
    if meta.get("kind") != "twin-snapshot":
        raise ValueError(f"{path}: not a twin snapshot")
    config = SystemConfig.from_dict({
        key[len("config."):]: value for key, value in meta.items()
        if key.startswith("config.")
    })
    if meta["rng.bit_generator"] != "PCG64":
        raise ValueError("snapshot uses an unsupported bit generator")
    rng = np.random.default_rng(0)
    rng.bit_generator.state = {
        "bit_generator": "PCG64",
        "state": {"state": meta["rng.state"], "inc": meta["rng.inc"]},
        "has_uint32": meta["rng.has_uint32"],
        "uinteger": meta["rng.uinteger"],
    }
    topology = NetworkTopology(ue_pos=arrays["ue_pos"], ap_pos=arrays["ap_pos"],
                               ris_pos=arrays["ris_pos"])
    truth = ChannelRealization(
        h_direct=arrays["truth.h_direct"], h_cascaded=arrays["truth.h_cascaded"],
        beta_direct=arrays["truth.beta_direct"],
        beta_cascaded=arrays["truth.beta_cascaded"],
        los_direct=arrays["truth.los_direct"],
        los_cascaded=arrays["truth.los_cascaded"],
        nlos_direct=arrays["truth.nlos_direct"],
        nlos_cascaded=arrays["truth.nlos_cascaded"],
    )
    estimates = ChannelEstimates(hhat_direct=arrays["estimates.hhat_direct"],
                                 hhat_cascaded=arrays["estimates.hhat_cascaded"])
    env = TwinEnvironment(config, topology, truth, estimates, rng)
    env.epoch = meta.get("env.epoch", 0)
    if "assoc" in arrays:
        env.assoc = arrays["assoc"].astype(np.int8)
    leftover = {key: value for key, value in meta.items()
                if not key.startswith(("config.", "rng.", "env."))
                and key not in ("kind", "saved_at")}
    return env, leftover
