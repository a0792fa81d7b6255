"""Built-in quick checks behind `riscf validate`.

Each check pits a library routine against an independent scalar
transcription or a closed-form limit.  These are smoke-level versions of
the full test suite, runnable from an installed package in a few seconds.
"""

from __future__ import annotations

import itertools

import numpy as np

from . import backend
from .channel import effective_channels, mmse_estimate, sample_channels, generate_topology
from .config import desk_config
from .metrics import rate_report
from .nets import Mlp
from .orchestrator import run_experiment
from .swarm import brute_force_aua, position_update, rectify_infeasible_rows, solve_aua, SwarmHyper
from .twin import TwinEnvironment
from .orchestrator import rng_streams


def _check_effective_channels():
    rng = np.random.default_rng(7)
    m, c, k = 3, 4, 2
    direct = rng.normal(size=(m, k)) + 1j * rng.normal(size=(m, k))
    casc = rng.normal(size=(m, c, k)) + 1j * rng.normal(size=(m, c, k))
    phases = rng.uniform(0, 2 * np.pi, size=c)
    got = effective_channels(direct, casc, phases)
    worst = 0.0
    for mi in range(m):
        for ki in range(k):
            want = direct[mi, ki]
            for ci in range(c):
                want += casc[mi, ci, ki] * np.exp(1j * phases[ci])
            worst = max(worst, abs(got[mi, ki] - want))
    return worst < 1e-12, f"max abs error {worst:.2e}"


def _check_sinr_transcription():
    rng = np.random.default_rng(11)
    cfg = desk_config(seed=3)
    streams = rng_streams(3)
    env = TwinEnvironment.from_config(cfg, streams["env"])
    assoc = np.array([[1, 0, 0, 1], [0, 1, 0, 0], [0, 0, 1, 0]], dtype=np.int8)
    p = rng.uniform(0, cfg.p_max_w, size=cfg.K)
    phi = rng.uniform(0, 2 * np.pi, size=cfg.n_phases)
    rep = rate_report(assoc, p, phi, env.truth, env.estimates, env.noise_w,
                      cfg.r_min_bps)
    fd, fc = env.truth.links()
    ed, ec = env.estimates.links()
    w = np.exp(1j * phi)
    worst = 0.0
    for k in range(cfg.K):
        f = {m: fd[m, kk] + sum(fc[m, c, kk] * w[c] for c in range(cfg.n_phases))
             for m in range(cfg.M) for kk in [k]}
        fhat = {m: ed[m, k] + sum(ec[m, c, k] * w[c] for c in range(cfg.n_phases))
                for m in range(cfg.M)}
        sig = abs(sum(assoc[k, m] * np.conj(fhat[m]) * f[m]
                      for m in range(cfg.M))) ** 2 * p[k]
        noise = env.noise_w * sum(assoc[k, m] * abs(fhat[m]) ** 2
                                  for m in range(cfg.M))
        interf = 0.0
        for kp in range(cfg.K):
            if kp == k:
                continue
            cross = sum(assoc[k, m] * np.conj(fhat[m])
                        * (fd[m, kp] + sum(fc[m, c, kp] * w[c]
                                           for c in range(cfg.n_phases)))
                        for m in range(cfg.M))
            interf += p[kp] * abs(cross) ** 2
        alpha = sig / (noise + interf)
        worst = max(worst, abs(alpha - rep.sinr[k]) / abs(alpha))
    return worst < 1e-9, f"max rel error {worst:.2e}"


def _check_gradients():
    rng = np.random.default_rng(5)
    net = Mlp([4, 8, 3], out_act="tanh", rng=rng)
    x = rng.normal(size=4)
    up = rng.normal(size=3)
    dws, dbs, dx = net.gradients(x, up)
    h = 1e-6
    worst = 0.0

    def value():
        return float(net.forward(x) @ up)

    for w, dw in zip(net.ws, dws):
        flat, grad = w.reshape(-1), np.asarray(dw).reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up_v = value()
            flat[i] = keep - h
            dn_v = value()
            flat[i] = keep
            fd = (up_v - dn_v) / (2 * h)
            worst = max(worst, abs(fd - grad[i]) / max(1e-8, abs(grad[i])))
    return worst < 1e-4, f"max rel error {worst:.2e}"


def _check_adam():
    from .nets import Adam

    net = Mlp([1, 1])
    net.ws[0][:] = 0.5
    net.bs[0][:] = 0.0
    opt = Adam(net, lr=0.01)
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    m = v = 0.0
    w_ref = 0.5
    ok = True
    for t in range(1, 11):
        g = 0.3 * w_ref
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w_ref -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
        opt.step(net, [np.array([[0.3 * net.ws[0][0, 0]]])], [np.zeros(1)])
        ok = ok and abs(net.ws[0][0, 0] - w_ref) < 1e-12
    return ok, "10-step scalar trace matches"


def _check_rectification():
    for bits in itertools.product([0, 1], repeat=9):
        x = np.array(bits, dtype=np.int8).reshape(3, 3)
        if not (x.sum(axis=0) == 1).all():
            continue
        v = np.arange(9, dtype=float).reshape(3, 3)
        fixed = rectify_infeasible_rows(x, v)
        if not ((fixed.sum(axis=0) == 1).all() and (fixed.sum(axis=1) >= 1).all()):
            return False, f"infeasible output for {bits}"
    return True, "all 3x3 column-feasible inputs repaired"


def _check_swarm_oracle():
    cfg = desk_config(K=2, M=3, B=1, N=2, swarm_particles=30, swarm_iters=15,
                      seed=12)
    streams = rng_streams(12)
    env = TwinEnvironment.from_config(cfg, streams["env"])
    env.sync_epoch(1, np.array([[1, 1, 0], [0, 0, 1]], dtype=np.int8))
    p = np.full(cfg.K, cfg.p_max_w / 2)
    phi = np.full(cfg.n_phases, np.pi)
    best, best_fit = brute_force_aua(env, p, phi, cfg.penalty_unserved)
    got, got_fit = solve_aua(env, p, phi, SwarmHyper.from_config(cfg),
                             streams["swarm"])
    ok = np.array_equal(got, best) and abs(got_fit - best_fit) < 1e-9
    return ok, f"swarm fitness {got_fit:.6f} vs brute force {best_fit:.6f}"


def _check_mmse_limits():
    cfg = desk_config(sigma_sh_db=0.0, seed=4)
    rng = np.random.default_rng(4)
    topo = generate_topology(cfg, rng)
    real = sample_channels(topo, cfg, rng)
    tiny = cfg.replace(noise_psd_dbm_hz=-300.0, noise_dbm_is_total=True)
    est = mmse_estimate(real, tiny, np.random.default_rng(1))
    err = np.abs(est.hhat_direct - real.h_direct).max()
    scale = np.abs(real.h_direct).max()
    ok1 = err < 1e-9 * scale
    cold = cfg.replace(p_pilot_w=1e-300)
    est0 = mmse_estimate(real, cold, np.random.default_rng(1))
    ok2 = np.array_equal(est0.hhat_direct, real.los_direct)
    return ok1 and ok2, "noiseless recovers truth; zero pilot collapses to mean"


def _check_determinism():
    cfg = desk_config(epochs=1, episodes=2, steps=5, swarm_particles=8,
                      swarm_iters=3, batch_size=16, seed=9)
    a = run_experiment("proposed", cfg, 9)
    b = run_experiment("proposed", cfg, 9)
    same = all(x.reward_twin == y.reward_twin
               for x, y in zip(a.steps, b.steps))
    return same, "identical step rewards across two runs"


CHECKS = [
    ("effective-channel transcription", _check_effective_channels),
    ("combining-SINR transcription", _check_sinr_transcription),
    ("finite-difference gradients", _check_gradients),
    ("optimizer scalar trace", _check_adam),
    ("rectification feasibility", _check_rectification),
    ("swarm vs brute force", _check_swarm_oracle),
    ("MMSE limits", _check_mmse_limits),
    ("run determinism", _check_determinism),
]


def run_all(verbose: bool = False):
    results = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashed check is a failed check
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append((name, ok, detail))
        if verbose:
            print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return results
