"""Network geometry, path loss, Rician channels, and per-link MMSE estimates.

Model summary
-------------
* UEs and APs are uniform in a disk of radius ``radius_m``; the B reflecting
  panels sit at the midpoints of B equal segments of the 45-degree diagonal
  chord, at their own height.
* Large-scale gain follows the three-slope COST-Hata model (flat below d0,
  20 dB/decade to d1, 35 dB/decade plus log-normal shadowing beyond d1).
* Every end-to-end link is Rician with factor kappa: a deterministic
  geometry-phased component of power G*kappa/(1+kappa) plus a CN(0, beta)
  scattered component with beta = G/(1+kappa).  Direct links use the AP-UE
  distance; reflected per-element links use the total AP-element-UE path
  length for the phase and the AP-panel-UE path length for the gain.
* Estimation: K orthogonal unit pilots, per-link MMSE.  Estimation noises
  are independent across links (no pilot contamination).

All functions are pure given an explicit numpy Generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import backend
from .config import SystemConfig

MIN_HORIZONTAL_M = 1.0  # 2-D distance clamp against the path-loss singularity


@dataclass
class NetworkTopology:
    ue_pos: np.ndarray   # (K, 3) meters
    ap_pos: np.ndarray   # (M, 3)
    ris_pos: np.ndarray  # (B, 3)


@dataclass
class ChannelRealization:
    """True end-to-end channels plus the pieces they are built from.

    ``h = los + sqrt(beta) * nlos`` holds entrywise; cascaded beta is shared
    by the N elements of a panel, so beta_cascaded is (M, B, K) while the
    per-element tensors are (M, B, N, K).
    """

    h_direct: np.ndarray        # (M, K) complex
    h_cascaded: np.ndarray      # (M, B, N, K) complex
    beta_direct: np.ndarray     # (M, K)
    beta_cascaded: np.ndarray   # (M, B, K)
    los_direct: np.ndarray      # (M, K) complex
    los_cascaded: np.ndarray    # (M, B, N, K) complex
    nlos_direct: np.ndarray     # (M, K) complex, CN(0,1)
    nlos_cascaded: np.ndarray   # (M, B, N, K) complex, CN(0,1)

    def links(self) -> tuple[np.ndarray, np.ndarray]:
        """(direct (M,K), cascaded flattened to (M, B*N, K))."""
        m, b, n, k = self.h_cascaded.shape
        return self.h_direct, self.h_cascaded.reshape(m, b * n, k)


@dataclass
class ChannelEstimates:
    hhat_direct: np.ndarray     # (M, K) complex
    hhat_cascaded: np.ndarray   # (M, B, N, K) complex

    def links(self) -> tuple[np.ndarray, np.ndarray]:
        m, b, n, k = self.hhat_cascaded.shape
        return self.hhat_direct, self.hhat_cascaded.reshape(m, b * n, k)


# ---------------------------------------------------------------------------
# geometry

def generate_topology(config: SystemConfig, rng: np.random.Generator) -> NetworkTopology:
    """Draw UE/AP positions uniformly in the disk; place panels on the chord."""
    config.validate()

    def disk_points(count, height):
        r = config.radius_m * np.sqrt(rng.random(count))
        ang = 2.0 * np.pi * rng.random(count)
        return np.column_stack([r * np.cos(ang), r * np.sin(ang),
                                np.full(count, height)])

    ue = disk_points(config.K, config.h_ue_m)
    ap = disk_points(config.M, config.h_ap_m)

    # Midpoints of B equal segments of the 45-degree diameter: offsets
    # (2i - 1 - B)/B * radius along (1,1)/sqrt(2), i = 1..B.  B=1 sits at
    # the center; endpoints are never used.
    i = np.arange(1, config.B + 1)
    t = (2.0 * i - 1.0 - config.B) / config.B * config.radius_m
    u = 1.0 / math.sqrt(2.0)
    ris = np.column_stack([t * u, t * u, np.full(config.B, config.h_ris_m)])
    return NetworkTopology(ue_pos=ue, ap_pos=ap, ris_pos=ris)


def ris_element_offsets(config: SystemConfig) -> np.ndarray:
    """(N, 3) element offsets of one panel: half-wavelength grid spanning the
    horizontal direction orthogonal to the chord and the vertical axis."""
    n = config.N
    if n == 0:
        return np.zeros((0, 3))
    cols = math.ceil(math.sqrt(n))
    step = config.wavelength_m / 2.0
    tangent = np.array([1.0, -1.0, 0.0]) / math.sqrt(2.0)
    vertical = np.array([0.0, 0.0, 1.0])
    idx = np.arange(n)
    row, col = idx // cols, idx % cols
    rows = math.ceil(n / cols)
    off_c = (col - (cols - 1) / 2.0) * step
    off_r = (row - (rows - 1) / 2.0) * step
    return off_c[:, None] * tangent[None, :] + off_r[:, None] * vertical[None, :]


def link_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """3-D distance with the horizontal part clamped to MIN_HORIZONTAL_M.

    a, b: (..., 3) broadcastable point arrays.
    """
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    horiz = np.maximum(np.hypot(d[..., 0], d[..., 1]), MIN_HORIZONTAL_M)
    return np.sqrt(horiz ** 2 + d[..., 2] ** 2)


# ---------------------------------------------------------------------------
# path loss

def _cost_hata_offset_db(config: SystemConfig) -> float:
    f_mhz = config.fc_hz / 1e6
    lf = math.log10(f_mhz)
    return (46.3 + 33.9 * lf - 13.82 * math.log10(config.h_ap_m)
            - (1.1 * lf - 0.7) * config.h_ue_m + (1.56 * lf - 0.8))


def path_loss(d_m, config: SystemConfig, rng: np.random.Generator):
    """Linear power gain of the three-slope COST-Hata model.

    Flat below d0, 20 dB/decade between d0 and d1, 35 dB/decade plus
    log-normal shadowing (sigma_sh_db) beyond d1; continuous at both
    breakpoints.  Accepts scalars or arrays; one shadowing draw per entry.
    """
    d = np.asarray(d_m, dtype=float)
    if np.any(d <= 0.0):
        raise ValueError("path_loss needs d_m > 0")
    big_l = _cost_hata_offset_db(config)
    d_km = d / 1000.0
    d0_km = config.d0_m / 1000.0
    d1_km = config.d1_m / 1000.0
    mid_const = -big_l - 15.0 * math.log10(d1_km)
    near = mid_const - 20.0 * math.log10(d0_km)
    mid = mid_const - 20.0 * np.log10(np.maximum(d_km, 1e-300))
    far = -big_l - 35.0 * np.log10(np.maximum(d_km, 1e-300))
    gain_db = np.where(d <= config.d0_m, near,
                       np.where(d <= config.d1_m, mid, far))
    if config.sigma_sh_db > 0.0:
        shadow = rng.normal(0.0, config.sigma_sh_db, size=d.shape)
        gain_db = gain_db + np.where(d > config.d1_m, shadow, 0.0)
    out = 10.0 ** (gain_db / 10.0)
    return float(out) if np.isscalar(d_m) else out


# ---------------------------------------------------------------------------
# channel sampling

def _complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def _rician_split(gain, kappa):
    """(los magnitude, scattered variance beta) for gain G and factor kappa."""
    gain = np.asarray(gain, dtype=float)
    los_mag = np.sqrt(gain * kappa / (1.0 + kappa))
    beta = gain / (1.0 + kappa)
    return los_mag, beta


def sample_channels(topology: NetworkTopology, config: SystemConfig,
                    rng: np.random.Generator) -> ChannelRealization:
    """Draw one realization of all direct and per-element reflected links.

    Reflected links reuse the large-scale gain of the total reflected path
    (AP-panel-UE distance through the path-loss model), split by the panel
    Rician factor; their deterministic phases follow the exact per-element
    path lengths.
    """
    lam = config.wavelength_m
    m_, k_, b_, n_ = config.M, config.K, config.B, config.N

    # direct links
    d_direct = link_distance(topology.ap_pos[:, None, :], topology.ue_pos[None, :, :])
    g_direct = path_loss(d_direct, config, rng)
    los_mag_d, beta_direct = _rician_split(g_direct, config.rician_k_direct)
    los_direct = los_mag_d * np.exp(-2j * np.pi * d_direct / lam)
    nlos_direct = _complex_normal(rng, (m_, k_))
    h_direct = los_direct + np.sqrt(beta_direct) * nlos_direct

    # reflected links
    d_ap_ris = link_distance(topology.ap_pos[:, None, :], topology.ris_pos[None, :, :])
    d_ris_ue = link_distance(topology.ris_pos[:, None, :], topology.ue_pos[None, :, :])
    d_total = d_ap_ris[:, :, None] + d_ris_ue[None, :, :]          # (M, B, K)
    g_casc = path_loss(d_total, config, rng)
    los_mag_c, beta_cascaded = _rician_split(g_casc, config.rician_k_ris)

    offsets = ris_element_offsets(config)                          # (N, 3)
    elem = topology.ris_pos[:, None, :] + offsets[None, :, :]      # (B, N, 3)
    d_ap_elem = link_distance(topology.ap_pos[:, None, None, :], elem[None, :, :, :])
    d_elem_ue = link_distance(elem[:, :, None, :], topology.ue_pos[None, None, :, :])
    path_len = d_ap_elem[:, :, :, None] + d_elem_ue[None, :, :, :]  # (M, B, N, K)
    los_cascaded = (los_mag_c[:, :, None, :]
                    * np.exp(-2j * np.pi * path_len / lam))
    nlos_cascaded = _complex_normal(rng, (m_, b_, n_, k_))
    h_cascaded = los_cascaded + np.sqrt(beta_cascaded)[:, :, None, :] * nlos_cascaded

    return ChannelRealization(
        h_direct=h_direct, h_cascaded=h_cascaded,
        beta_direct=beta_direct, beta_cascaded=beta_cascaded,
        los_direct=los_direct, los_cascaded=los_cascaded,
        nlos_direct=nlos_direct, nlos_cascaded=nlos_cascaded,
    )


def resample_small_scale(real: ChannelRealization, config: SystemConfig,
                         rng: np.random.Generator) -> ChannelRealization:
    """Fresh scattered components on unchanged geometry (epoch-to-epoch drift).

    Large-scale gains and deterministic components persist; only the CN(0,1)
    parts are redrawn.
    """
    nlos_direct = _complex_normal(rng, real.nlos_direct.shape)
    nlos_cascaded = _complex_normal(rng, real.nlos_cascaded.shape)
    return ChannelRealization(
        h_direct=real.los_direct + np.sqrt(real.beta_direct) * nlos_direct,
        h_cascaded=(real.los_cascaded
                    + np.sqrt(real.beta_cascaded)[:, :, None, :] * nlos_cascaded),
        beta_direct=real.beta_direct, beta_cascaded=real.beta_cascaded,
        los_direct=real.los_direct, los_cascaded=real.los_cascaded,
        nlos_direct=nlos_direct, nlos_cascaded=nlos_cascaded,
    )


# ---------------------------------------------------------------------------
# estimation

def mmse_estimate(real: ChannelRealization, config: SystemConfig,
                  rng: np.random.Generator) -> ChannelEstimates:
    """Per-link MMSE estimates from orthogonal unit pilots.

    hhat = los + sqrt(p) beta / (p beta + s2) * (sqrt(p beta) nlos + u),
    with u ~ CN(0, s2) drawn fresh per link and s2 the AP noise power.
    """
    if config.p_pilot_w <= 0.0:
        raise ValueError("p_pilot_w must be > 0")
    s2 = config.noise_power_w()
    pp = config.p_pilot_w

    coef_d = math.sqrt(pp) * real.beta_direct / (pp * real.beta_direct + s2)
    obs_d = (np.sqrt(pp * real.beta_direct) * real.nlos_direct
             + math.sqrt(s2) * _complex_normal(rng, real.nlos_direct.shape))
    hhat_direct = real.los_direct + coef_d * obs_d

    beta_c = real.beta_cascaded[:, :, None, :]
    coef_c = math.sqrt(pp) * beta_c / (pp * beta_c + s2)
    obs_c = (np.sqrt(pp * beta_c) * real.nlos_cascaded
             + math.sqrt(s2) * _complex_normal(rng, real.nlos_cascaded.shape))
    hhat_cascaded = real.los_cascaded + coef_c * obs_c

    return ChannelEstimates(hhat_direct=hhat_direct, hhat_cascaded=hhat_cascaded)


# ---------------------------------------------------------------------------
# end-to-end assembly

def effective_channel(h_direct: complex, h_cascaded_row: np.ndarray,
                      phases: np.ndarray) -> complex:
    """Single-link end-to-end channel h + sum_c casc[c] e^{j phi_c}.

    Serves true channels and estimates alike; raises on a length mismatch.
    """
    row = np.asarray(h_cascaded_row).ravel()
    phi = np.asarray(phases, dtype=float).ravel()
    if row.shape != phi.shape:
        raise ValueError(f"cascaded row has {row.shape[0]} entries, "
                         f"phases has {phi.shape[0]}")
    return complex(h_direct + np.sum(row * np.exp(1j * phi)))


def effective_channels(direct: np.ndarray, cascaded_flat: np.ndarray,
                       phases: np.ndarray) -> np.ndarray:
    """(M, K) end-to-end channels from flattened (M, B*N, K) reflected links."""
    if cascaded_flat.shape[1] != phases.shape[0]:
        raise ValueError("phase vector length does not match cascaded links")
    return backend.kernels().effective_channels(
        np.ascontiguousarray(direct, dtype=np.complex128),
        np.ascontiguousarray(cascaded_flat, dtype=np.complex128),
        np.ascontiguousarray(phases, dtype=np.float64),
    )
