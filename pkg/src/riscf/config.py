"""Scenario and algorithm configuration.

A single flat :class:`SystemConfig` carries everything a run needs:
network geometry, radio parameters, the swarm hyper-parameters of the
association solver, the actor-critic hyper-parameters of the power/phase
agents, and the epoch-loop shape.  Two presets are provided:

* ``desk_config()`` - small instance that exercises every code path and
  finishes a full run in well under a minute,
* ``paper_config()`` - the full-scale settings.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

_C_LIGHT = 299_792_458.0


@dataclass
class SystemConfig:
    # network geometry
    K: int = 3                      # user terminals
    M: int = 4                      # access points
    B: int = 2                      # reflecting panels
    N: int = 5                      # elements per panel (0 disables the panels)
    radius_m: float = 100.0
    h_ap_m: float = 15.0
    h_ue_m: float = 1.5
    h_ris_m: float = 20.0

    # radio
    fc_hz: float = 1.9e9
    bw_hz: float = 20e6
    noise_psd_dbm_hz: float = -106.0
    # When True the dBm figure above is read as the *total* noise power
    # instead of a per-Hz density.  The density reading over 20 MHz gives
    # -33 dBm of noise, which drowns every link; both readings are exposed.
    noise_dbm_is_total: bool = False
    sigma_sh_db: float = 8.0        # log-normal shadowing std beyond d1
    p_max_w: float = 0.4
    r_min_bps: float = 0.2          # minimum rate, bit/s/Hz
    p_pilot_w: float = 0.1
    rician_k_direct: float = 1.0
    rician_k_ris: float = 10.0
    d0_m: float = 10.0              # path-loss breakpoints
    d1_m: float = 50.0
    coherence_symbols: int = 200    # recorded only; not used in any formula
    pilot_symbols: int = 8          # recorded only
    seed: int = 0

    # association swarm
    swarm_particles: int = 200      # I
    swarm_iters: int = 80           # L
    swarm_c1: float = 2.0
    swarm_c2: float = 2.0
    swarm_omega: float = 0.5
    swarm_vmin: float = -10.0
    swarm_vmax: float = 10.0
    penalty_unserved: float = -3.0  # A_u

    # power/phase agents
    hidden_units: int = 128
    hidden_layers: int = 2
    learning_rate: float = 5e-5
    gamma: float = 0.997
    soft_update: float = 0.001      # chi
    actor_delay: int = 5            # T_A
    buffer_capacity: int = 40_000   # C_r
    batch_size: int = 128           # C_B
    penalty_violation: float = -3.0  # A_c
    explore_prob: float = 0.9
    explore_sigma: float = 0.1
    explore_decay: float = 0.999    # per episode
    smooth_sigma: float = 0.5       # target-action noise std
    smooth_clip: float = 1.0        # target-action noise clip
    normalize_state: bool = True    # False = feed raw state ("unprocessed")

    # epoch loop
    epochs: int = 18                # Z
    episodes: int = 200             # Y
    steps: int = 200                # T
    sync_interval: int = 1          # physical interaction every n epochs; 0 = never
    resample_positions_on_sync: bool = False

    # ---------------------------------------------------------------

    def validate(self) -> None:
        """Raise ValueError on any out-of-range field."""
        if self.K < 1 or self.M < 1 or self.B < 1:
            raise ValueError("K, M and B must be >= 1")
        if self.N < 0:
            raise ValueError("N must be >= 0")
        if self.K > self.M:
            raise ValueError(f"K={self.K} exceeds M={self.M}; each AP serves one UE")
        for name in ("radius_m", "fc_hz", "bw_hz", "p_max_w", "p_pilot_w", "r_min_bps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.rician_k_direct < 0 or self.rician_k_ris < 0:
            raise ValueError("Rician factors must be >= 0")
        if not 0 < self.d0_m < self.d1_m:
            raise ValueError("need 0 < d0_m < d1_m")
        if self.sigma_sh_db < 0:
            raise ValueError("sigma_sh_db must be >= 0")
        for name in ("swarm_particles", "swarm_iters", "epochs", "episodes",
                     "steps", "hidden_units", "hidden_layers", "actor_delay"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.swarm_vmin >= self.swarm_vmax:
            raise ValueError("need swarm_vmin < swarm_vmax")
        if self.penalty_unserved >= 0 or self.penalty_violation >= 0:
            raise ValueError("penalty factors must be negative")
        if self.batch_size < 1 or self.batch_size > self.buffer_capacity:
            raise ValueError("need 1 <= batch_size <= buffer_capacity")
        if not 0.0 <= self.explore_prob <= 1.0:
            raise ValueError("explore_prob must lie in [0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 <= self.soft_update <= 1.0:
            raise ValueError("soft_update must lie in [0, 1]")
        if self.sync_interval < 0:
            raise ValueError("sync_interval must be >= 0 (0 = never)")

    @property
    def wavelength_m(self) -> float:
        return _C_LIGHT / self.fc_hz

    @property
    def n_phases(self) -> int:
        return self.B * self.N

    def noise_power_w(self) -> float:
        """Noise power at each AP in watts, per the configured reading."""
        if self.noise_dbm_is_total:
            dbm = self.noise_psd_dbm_hz
        else:
            dbm = self.noise_psd_dbm_hz + 10.0 * math.log10(self.bw_hz)
        return 10.0 ** ((dbm - 30.0) / 10.0)

    def replace(self, **changes) -> "SystemConfig":
        cfg = dataclasses.replace(self, **changes)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SystemConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def field_types(cls) -> dict[str, type]:
        return {f.name: f.type for f in dataclasses.fields(cls)}


def desk_config(**overrides) -> SystemConfig:
    """Small preset: every code path, full run in tens of seconds."""
    base = dict(
        K=3, M=4, B=2, N=5,
        epochs=6, episodes=40, steps=50,
        swarm_particles=50, swarm_iters=20,
        learning_rate=1e-3,
        noise_dbm_is_total=True,
    )
    base.update(overrides)
    cfg = SystemConfig(**base)
    cfg.validate()
    return cfg


def paper_config(**overrides) -> SystemConfig:
    """Full-scale preset (Z=18, Y=200, T=200, I=200, L=80)."""
    base = dict(noise_dbm_is_total=True)
    base.update(overrides)
    cfg = SystemConfig(**base)
    cfg.validate()
    return cfg


PRESETS = {"desk": desk_config, "paper": paper_config}
