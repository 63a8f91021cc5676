import math

import numpy as np
import pytest

import wgnn


def test_dataset_shapes_and_determinism():
    a = wgnn.generate_dataset(k=3, n=5, count=4, seed=9)
    b = wgnn.generate_dataset(k=3, n=5, count=4, seed=9)
    assert len(a) == 4
    assert a.header.k_users == 3
    for ha, hb in zip(a.channels, b.channels):
        assert ha.shape == (3, 5)
        assert ha.dtype == np.complex128
        np.testing.assert_array_equal(ha, hb)


def test_baselines_and_utility():
    H = wgnn.generate_dataset(k=4, n=8, count=1, seed=1).channels[0]
    W = wgnn.mrt(H, 10.0)
    assert W.shape == (8, 4)
    assert np.linalg.norm(W) ** 2 == pytest.approx(10.0)

    Z = wgnn.zero_forcing(H, 10.0)
    G = H @ Z
    assert np.max(np.abs(G - np.diag(np.diag(G)))) < 1e-8

    r = wgnn.wmmse_srm(H, p=10.0)
    assert r.objective >= wgnn.utility(H, W) - 1e-9
    assert all(b >= a - 1e-9 for a, b in zip(r.trace, r.trace[1:]))
    assert sum(wgnn.user_rates(H, r.W)) == pytest.approx(r.objective)


def test_single_user_closed_form():
    H = wgnn.generate_dataset(k=1, n=6, count=1, seed=3).channels[0]
    expect = math.log2(1.0 + 10.0 * np.linalg.norm(H) ** 2)
    assert wgnn.wmmse_srm(H, p=10.0).objective == pytest.approx(expect, abs=1e-6)


def test_power_activation_projects():
    W = np.full((4, 2), 3.0 + 1.0j)
    V = wgnn.power_activation(W, 2.0)
    assert np.linalg.norm(V) ** 2 == pytest.approx(2.0)
    small = 0.01 * W
    np.testing.assert_allclose(wgnn.power_activation(small, 2.0), small)


def test_model_forward_any_k_and_equivariance():
    cfg = wgnn.ModelConfig.preset("resgat")
    cfg.hidden_dim = 16
    cfg.readout_hidden = 16
    cfg.heads = 2
    ck = wgnn.init_model(cfg, k=4, n=8, seed=2)
    for k in (2, 4, 7):
        H = wgnn.generate_dataset(k=k, n=8, count=1, seed=k).channels[0]
        W = ck.forward(H, 10.0)
        assert W.shape == (8, k)
        assert np.linalg.norm(W) ** 2 <= 10.0 * (1 + 1e-9)

    H = wgnn.generate_dataset(k=4, n=8, count=1, seed=5).channels[0]
    perm = [2, 0, 3, 1]
    np.testing.assert_allclose(ck.forward(H[perm, :]), ck.forward(H)[:, perm], atol=1e-9)


def test_mlp_rejects_other_sizes():
    ck = wgnn.init_model(wgnn.ModelConfig.preset("mlp"), k=4, n=8)
    H = wgnn.generate_dataset(k=5, n=8, count=1).channels[0]
    with pytest.raises(ValueError):
        ck.forward(H)


def test_train_and_checkpoint_round_trip(tmp_path):
    cfg = wgnn.ModelConfig.preset("gcn")
    cfg.hidden_dim = 8
    cfg.readout_hidden = 8
    cfg.depth = 1
    channels = wgnn.generate_dataset(k=3, n=4, count=40, seed=4).channels
    ck, val = wgnn.train(cfg, channels, epochs=2, batch_size=16)
    assert len(val) == 2
    path = tmp_path / "m.json"
    ck.save(path)
    back = wgnn.load_checkpoint(path)
    assert back.parameter_count == ck.parameter_count
    np.testing.assert_array_equal(back.forward(channels[0]), ck.forward(channels[0]))


def test_metrics():
    assert wgnn.optimality([0.9, 1.8, 2.7], [True] * 3, [1, 2, 3]) == pytest.approx(90.0)
    assert wgnn.optimality([1.0], [False], [1.0]) is None
    assert wgnn.stability([1, 1, 1, 0.85], [True] * 4, [1, 1, 1, 1], 10.0) == 75.0
    assert wgnn.feasibility_rate([1, 11, 2, 3], 10.0) == 75.0
    with pytest.raises(ValueError):
        wgnn.optimality([1.0], [True, True], [1.0])


def test_format_error(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("not json\n")
    with pytest.raises(wgnn.FormatError):
        wgnn.read_dataset(bad)
