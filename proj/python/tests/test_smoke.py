import math

import numpy as np
import pytest

import airbeam as ab


def desk_config():
    cfg = ab.SystemConfig()
    cfg.validate()
    return cfg


def test_channel_shapes_and_determinism():
    cfg = desk_config()
    H = ab.gen_channel(cfg, 5)
    assert len(H) == cfg.K
    assert H[0].shape == (cfg.M, cfg.Nc)
    assert H[0].dtype == np.complex128
    again = ab.gen_channel(cfg, 5)
    assert all(np.array_equal(a, b) for a, b in zip(H, again))
    assert len(ab.test_pool(cfg, 3, 1)) == 3


def test_array_response_is_unit_modulus():
    a = ab.array_response(0.3, -0.2, 4, 4)
    assert a.shape == (16,)
    assert np.allclose(np.abs(a), 1.0, atol=1e-12)


def test_zf_matches_single_user_closed_form():
    cfg = desk_config()
    cfg.K = 1
    H = ab.gen_channel(cfg, 2)
    F = ab.zf_fully_digital(H, cfg.Pt)
    s2 = cfg.sigma2()
    h = H[0]
    expect = np.mean(np.log2(1 + cfg.Pt * np.sum(np.abs(h) ** 2, axis=0) / (cfg.Nc * s2)))
    assert ab.sum_rate(H, F, s2) == pytest.approx(expect, rel=1e-12)


def test_hybrids_respect_constraints_and_zf_dominates():
    cfg = desk_config()
    s2 = cfg.sigma2()
    for seed in range(5):
        H = ab.gen_channel(cfg, seed)
        zf = ab.sum_rate(H, ab.zf_fully_digital(H, cfg.Pt), s2)
        F_RF, F_BB = ab.pca_hb(H, cfg.Pt)
        assert np.allclose(np.abs(F_RF), 1.0, atol=1e-12)
        F = [F_RF @ fb for fb in F_BB]
        assert all(np.linalg.norm(f) <= math.sqrt(cfg.Pt / cfg.Nc) + 1e-12 for f in F)
        assert ab.sum_rate(H, F, s2) <= zf


def test_sw_omp_on_grid_single_path():
    cfg = desk_config()
    rng = np.random.default_rng(0)
    X = ab.fdd_pilot_matrix(rng.uniform(0, 2 * np.pi, (cfg.Q, cfg.M)), cfg.Pt, cfg.Nc)
    theta = -np.pi / 2 + np.pi * 5.5 / 16
    phi = -np.pi / 2 + np.pi * 9.5 / 16
    a = ab.array_response(theta, phi, cfg.Ny, cfg.Nz)
    H = np.outer(a, np.ones(cfg.Nc)) * (0.7 - 0.2j)
    H_hat, support = ab.sw_omp(X @ H, X, cfg, grid=16, max_paths=1)
    assert len(support) == 1
    assert np.linalg.norm(H_hat - H) / np.linalg.norm(H) < 1e-6


def test_lloyd_max_uniform():
    levels = ab.lloyd_max(list((np.arange(4000) + 0.5) / 4000), 1)
    assert levels == pytest.approx([0.25, 0.75], abs=1e-3)


def test_quantize_phase_grid():
    q = ab.quantize_phase(1.0, 2)
    assert min(abs(q - k * np.pi / 2) for k in range(4)) < 1e-12


def test_experiment_roundtrip(tmp_path):
    text = f"""
seed: 2
system: {{Ny: 2, Nz: 2, Nc: 4, K: 2, Q: 2, B: 10}}
train: {{epochs: 1, batch_size: 32}}
dataset: {{train: 64, val: 32, test: 32}}
network: {{conv_c1: 4, conv_c2: 8}}
schemes: [proposed_fdd, zf_bound]
baselines: {{grid_azimuth: 8, grid_zenith: 8, lloyd_training: 50}}
eval: {{realizations: 16}}
output: {{checkpoint_dir: {tmp_path / 'ck'}}}
"""
    cfg = ab.ExperimentConfig.parse(text)
    rows = ab.run_experiment(cfg, workers=1)
    assert [r["scheme"] for r in rows] == ["proposed_fdd", "zf_bound"]
    assert all(r["sum_rate_bps_hz"] >= 0 and r["n_realizations"] == 16 for r in rows)
    again = ab.run_experiment(cfg, eval_only=True)
    assert again[0]["sum_rate_bps_hz"] == rows[0]["sum_rate_bps_hz"]
    with pytest.raises(ab.MissingCheckpoint):
        ab.run_experiment(cfg, eval_only=True, checkpoint=str(tmp_path / "none"))


def test_invalid_config_raises():
    with pytest.raises(ab.ConfigError, match="system.B"):
        ab.ExperimentConfig.parse("system: {B: 0}\nschemes: [zf_bound]\n")
