import math

import numpy as np
import pytest

from conftest import feasible_assoc, make_env
from riscf.channel import ChannelEstimates, generate_topology, mmse_estimate, sample_channels
from riscf.config import desk_config
from riscf.metrics import (RateReport, aua_fitness, assert_association_feasible,
                           association_feasible, pcrb_reward, rate_report, sinr)
from riscf.orchestrator import rng_streams
from riscf.twin import TwinEnvironment


def _estimates_from_truth(real) -> ChannelEstimates:
    return ChannelEstimates(hhat_direct=real.h_direct.copy(),
                            hhat_cascaded=real.h_cascaded.copy())


def _sinr_oracle(assoc, p, phi, f_ch, e_ch, noise_w):
    """Independent term-by-term transcription of the combining SINR."""
    fd, fc = f_ch.links()
    ed, ec = e_ch.links()
    w = np.exp(1j * np.asarray(phi))
    m_, k_ = fd.shape

    def eff(d, c, mm, kk):
        return d[mm, kk] + sum(c[mm, q, kk] * w[q] for q in range(len(w)))

    out = np.zeros(k_)
    for k in range(k_):
        fhat = [eff(ed, ec, m, k) for m in range(m_)]
        sig = abs(sum(assoc[k, m] * np.conj(fhat[m]) * eff(fd, fc, m, k)
                      for m in range(m_))) ** 2 * p[k]
        noise = noise_w * sum(assoc[k, m] * abs(fhat[m]) ** 2 for m in range(m_))
        interf = 0.0
        for kp in range(k_):
            if kp == k:
                continue
            cross = sum(assoc[k, m] * np.conj(fhat[m]) * eff(fd, fc, m, kp)
                        for m in range(m_))
            interf += p[kp] * abs(cross) ** 2
        out[k] = sig / (noise + interf)
    return out


# ---------------------------------------------------------------------------
# feasibility

def test_association_feasibility_rules():
    assert association_feasible(np.array([[1, 0], [0, 1]]))
    assert association_feasible(np.array([[1, 1, 0], [0, 0, 1]]))
    assert not association_feasible(np.array([[1, 0], [1, 0]]))  # empty column
    assert not association_feasible(np.array([[1, 1], [0, 0]]))  # unserved row
    assert not association_feasible(np.array([[2, 0], [0, 1]]))  # non-binary
    with pytest.raises(ValueError):
        assert_association_feasible(np.array([[0, 0], [1, 1]]))


# ---------------------------------------------------------------------------
# sinr

def test_single_user_matched_filter():
    env = make_env(K=1, M=1, B=1, N=2)
    est = _estimates_from_truth(env.truth)
    p = np.array([0.2])
    phi = np.array([0.3, 1.1])
    alpha = sinr(np.array([[1]]), p, phi, est, est, env.noise_w)
    f = est.links()[0][0, 0] + (est.links()[1][0, :, 0] * np.exp(1j * phi)).sum()
    assert alpha[0] == pytest.approx(0.2 * abs(f) ** 2 / env.noise_w, rel=1e-12)


def test_twin_equals_physical_for_perfect_estimates():
    env = make_env(seed=2)
    est = _estimates_from_truth(env.truth)
    assoc = feasible_assoc(env.config.K, env.config.M)
    p = np.full(env.config.K, 0.1)
    phi = np.linspace(0, 6.0, env.config.n_phases)
    a_phys = sinr(assoc, p, phi, env.truth, est, env.noise_w)
    a_twin = sinr(assoc, p, phi, est, est, env.noise_w)
    assert np.allclose(a_phys, a_twin, rtol=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_matches_transcription_oracle(seed, each_backend):
    rng = np.random.default_rng(seed)
    k_, m_ = 2, 2
    cfg = desk_config(K=k_, M=m_, B=1, N=3, seed=seed)
    env = TwinEnvironment.from_config(cfg, rng_streams(seed)["env"])
    assoc = feasible_assoc(k_, m_)
    p = rng.uniform(0.01, cfg.p_max_w, size=k_)
    phi = rng.uniform(0, 2 * np.pi, size=cfg.n_phases)
    got = sinr(assoc, p, phi, env.truth, env.estimates, env.noise_w)
    want = _sinr_oracle(assoc, p, phi, env.truth, env.estimates, env.noise_w)
    assert np.allclose(got, want, rtol=1e-9)


def test_sinr_rejects_bad_inputs():
    env = make_env()
    est = env.estimates
    k_, m_ = env.config.K, env.config.M
    good_phi = np.zeros(env.config.n_phases)
    with pytest.raises(ValueError):
        sinr(np.zeros((k_, m_), dtype=int), np.ones(k_), good_phi, est, est, 1e-9)
    with pytest.raises(ValueError):
        sinr(feasible_assoc(k_, m_), -np.ones(k_), good_phi, est, est, 1e-9)
    with pytest.raises(ValueError):
        sinr(feasible_assoc(k_, m_), np.ones(k_), good_phi + 7.0, est, est, 1e-9)


def test_per_ap_phase_rotation_invariance():
    # rotating every channel seen at one AP (true and estimated together)
    # leaves all combining products, hence the SINR, unchanged
    env = make_env(seed=5)
    est = env.estimates
    assoc = feasible_assoc(env.config.K, env.config.M)
    p = np.full(env.config.K, 0.2)
    phi = np.zeros(env.config.n_phases)
    base = sinr(assoc, p, phi, env.truth, est, env.noise_w)
    rot = np.exp(1j * np.linspace(0.1, 2.9, env.config.M))
    truth_rot = _estimates_from_truth(env.truth)
    truth_rot.hhat_direct *= rot[:, None]
    truth_rot.hhat_cascaded *= rot[:, None, None, None]
    est_rot = ChannelEstimates(hhat_direct=est.hhat_direct * rot[:, None],
                               hhat_cascaded=est.hhat_cascaded * rot[:, None, None, None])
    rotated = sinr(assoc, p, phi, truth_rot, est_rot, env.noise_w)
    assert np.allclose(rotated, base, rtol=1e-10)


def test_power_scaling_single_user():
    env = make_env(K=1, M=2, seed=3)
    assoc = np.array([[1, 1]])
    phi = np.zeros(env.config.n_phases)
    a1 = sinr(assoc, np.array([0.1]), phi, env.truth, env.estimates, env.noise_w)
    a3 = sinr(assoc, np.array([0.3]), phi, env.truth, env.estimates, env.noise_w)
    assert a3[0] == pytest.approx(3.0 * a1[0], rel=1e-12)


def test_twin_physical_gap_shrinks_with_pilot_power():
    gaps = {1e-3: [], 1.0: []}
    for seed in range(100):
        cfg = desk_config(seed=seed, K=2, M=2, B=1, N=2)
        rng = np.random.default_rng(seed)
        topo = generate_topology(cfg, rng)
        real = sample_channels(topo, cfg, rng)
        assoc = feasible_assoc(2, 2)
        p = np.full(2, cfg.p_max_w / 2)
        phi = np.zeros(cfg.n_phases)
        for pilot in gaps:
            est = mmse_estimate(real, cfg.replace(p_pilot_w=pilot),
                                np.random.default_rng(seed + 1))
            a_dt = sinr(assoc, p, phi, est, est, cfg.noise_power_w())
            a_ph = sinr(assoc, p, phi, real, est, cfg.noise_power_w())
            gaps[pilot].append(np.abs(a_dt - a_ph).mean())
    assert np.mean(gaps[1.0]) < np.mean(gaps[1e-3])


# ---------------------------------------------------------------------------
# rates and rewards

def _report_from_sinr(alpha, r_min):
    rate = np.log2(1 + np.asarray(alpha, dtype=float))
    return RateReport(sinr=np.asarray(alpha, dtype=float), rate=rate,
                      sum_rate=float(rate.sum()),
                      violators=[int(i) for i in np.flatnonzero(rate < r_min)])


def test_rate_arithmetic():
    rep = _report_from_sinr([1.0, 3.0], r_min=0.2)
    assert np.allclose(rep.rate, [1.0, 2.0])
    assert rep.sum_rate == pytest.approx(3.0)
    assert rep.violators == []


def test_zero_sinr_violates_any_requirement():
    rep = _report_from_sinr([0.0, 0.0], r_min=0.05)
    assert np.allclose(rep.rate, 0.0)
    assert rep.violators == [0, 1]


def test_report_matches_oracle_composition(each_backend):
    cfg = desk_config(K=3, M=4, B=2, N=5, seed=6)
    env = TwinEnvironment.from_config(cfg, rng_streams(6)["env"])
    rng = np.random.default_rng(6)
    assoc = feasible_assoc(3, 4)
    p = rng.uniform(0, cfg.p_max_w, 3)
    phi = rng.uniform(0, 2 * np.pi, 10)
    rep = rate_report(assoc, p, phi, env.truth, env.estimates, env.noise_w,
                      cfg.r_min_bps)
    want = _sinr_oracle(assoc, p, phi, env.truth, env.estimates, env.noise_w)
    assert np.allclose(rep.sinr, want, rtol=1e-9)
    assert rep.sum_rate == pytest.approx(np.log2(1 + want).sum(), rel=1e-9)


def test_reward_branches():
    ok = _report_from_sinr([10.0, 20.0], r_min=0.2)
    assert pcrb_reward(ok, -3.0) == pytest.approx(ok.sum_rate)
    two_bad = _report_from_sinr([0.0, 0.0, 9.0], r_min=0.2)
    assert pcrb_reward(two_bad, -3.0) == pytest.approx(-6.0)
    all_bad = _report_from_sinr([0.0] * 4, r_min=0.2)
    assert pcrb_reward(all_bad, -3.0) == pytest.approx(4 * -3.0)
    with pytest.raises(ValueError):
        pcrb_reward(ok, 1.0)


def test_reward_monotone_in_violations():
    worse = pcrb_reward(_report_from_sinr([0, 0, 0], 0.2), -3.0)
    better = pcrb_reward(_report_from_sinr([0, 0, 9], 0.2), -3.0)
    assert better > worse


# ---------------------------------------------------------------------------
# association fitness

def test_forced_association_single_pair():
    env = make_env(K=1, M=1, B=1, N=2, seed=8)
    env.sync_epoch(1, np.array([[1]], dtype=np.int8))
    p = np.array([env.config.p_max_w])
    phi = np.zeros(2)
    fit = aua_fitness(np.array([[1]]), p, phi, env, -3.0)
    rep = env.evaluate(p, phi)
    assert fit == pytest.approx(rep.sum_rate if not rep.violators else -3.0)


def test_single_violator_takes_penalty():
    env = make_env(K=2, M=2, B=1, N=0, seed=1)
    assoc = feasible_assoc(2, 2)
    # one user transmitting, the silent one cannot meet any positive rate floor
    fit = aua_fitness(assoc, np.array([0.2, 0.0]), np.zeros(0), env, -3.0)
    assert fit == pytest.approx(-3.0)


def test_fitness_of_all_feasible_candidates():
    env = make_env(K=2, M=3, B=1, N=2, seed=4)
    rng = np.random.default_rng(4)
    p = rng.uniform(0.01, env.config.p_max_w, 2)
    phi = rng.uniform(0, 2 * np.pi, 2)
    count = 0
    for c0 in range(2):
        for c1 in range(2):
            for c2 in range(2):
                x = np.zeros((2, 3), dtype=np.int8)
                x[[c0, c1, c2], np.arange(3)] = 1
                if not association_feasible(x):
                    continue
                count += 1
                got = aua_fitness(x, p, phi, env, -3.0)
                alpha = _sinr_oracle(x, p, phi, env.estimates, env.estimates,
                                     env.noise_w)
                rate = np.log2(1 + alpha)
                bad = int((rate < env.r_min).sum())
                want = rate.sum() if bad == 0 else bad * -3.0
                assert got == pytest.approx(want, rel=1e-9)
    assert count == 6


def test_fitness_rejects_infeasible_candidate():
    env = make_env()
    with pytest.raises(ValueError):
        aua_fitness(np.zeros((env.config.K, env.config.M), dtype=int),
                    np.ones(env.config.K), np.zeros(env.config.n_phases),
                    env, -3.0)
