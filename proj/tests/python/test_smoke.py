import numpy as np
import pytest

import unfold


def small_net(seed=0, layers=3, n=16, m=4, N=32, lam=0.05):
    setup = unfold.gaussian_measurement(m, n, seed)
    W = unfold.xavier_init(N, n, seed)
    cfg = unfold.NetworkConfig(setup, W, unfold.Hyper(rho=1.0, lambda_=lam, layers=layers))
    return setup, cfg, unfold.Network(cfg)


def test_soft_threshold():
    out = unfold.soft_threshold(np.array([3.0, -0.5, 0.2, -2.0]), 1.0)
    np.testing.assert_array_equal(out, [2.0, 0.0, 0.0, -1.0])


def test_decoder_matches_admm_recursion():
    setup, cfg, net = small_net(layers=4)
    y = np.random.default_rng(1).standard_normal(4)
    traj = unfold.admm_u_trajectory(y, cfg, 4)
    u = unfold.intermediate_decode(y.reshape(-1, 1), cfg, 4)[:, 0]
    np.testing.assert_allclose(u, traj[-1], atol=1e-12)
    np.testing.assert_allclose(net.decode(y.reshape(-1, 1)), unfold.final_decode(y.reshape(-1, 1), cfg, 4))


def test_fgsm_budget_and_gradient_shape():
    setup, cfg, net = small_net()
    rng = np.random.default_rng(2)
    Y = rng.standard_normal((4, 10))
    X = rng.standard_normal((16, 10)) / 4
    D = unfold.fgsm_l2(net, Y, X, 0.3)
    np.testing.assert_allclose(np.linalg.norm(D, axis=0), 0.3, rtol=1e-12)
    assert unfold.grad_input(Y, X, net).shape == (4, 10)
    dW, dtheta = unfold.grad_param(Y, X, net)
    assert dW.shape == (32, 16) and dtheta == 0.0
    assert unfold.adversarial_mse(net, Y, X, 0.3) >= unfold.adversarial_mse(net, Y, X, 0.0) * 0.5


def test_training_and_checkpoint(tmp_path):
    setup, cfg, _ = small_net()
    train = unfold.synth_sparse_dataset(setup, 200, seed=3)
    test = unfold.synth_sparse_dataset(setup, 50, seed=3, split="test")
    tc = unfold.TrainConfig()
    tc.epochs, tc.batch_size, tc.lr, tc.epsilon = 3, 50, 1e-3, 0.05
    best, history, _ = unfold.train(train.X, train.Y, test.X, test.Y, cfg, tc)
    assert history and all(abs(r.adv_ege - abs(r.adv_test_mse - r.adv_train_mse)) == 0 for r in history)
    path = str(tmp_path / "model.unfd")
    best.save(path)
    back = unfold.TrainedModel.load(path)
    np.testing.assert_array_equal(back.config.W, best.config.W)
    rows = unfold.evaluate(back, test.X, test.Y, [0.0, 0.1])
    assert rows[0].adv_test_mse == rows[0].clean_test_mse


def test_bounds_and_errors():
    t = unfold.TheoryInputs()
    t.alpha, t.beta, t.normA, t.normAtA = 2.0, 3.0, 1.0, 1.0
    t.normYF, t.s, t.N, t.n, t.m, t.L, t.epsilon = 5.0, 100, 64, 16, 4, 3, 0.1
    b = unfold.generalization_bound(t)
    assert b["bound"] > 0 and b["arc"] > 0
    assert unfold.lipschitz_log(t) == pytest.approx(b["lip_log"])
    assert "growth_ratio" in unfold.growth_csv(t, layers=[2, 3, 4]).splitlines()[0]
    t.rho = 2.0
    with pytest.raises(unfold.GammaUndefined):
        unfold.gamma(t)
    with pytest.raises(unfold.InvalidArgument):
        unfold.Network(unfold.NetworkConfig(unfold.gaussian_measurement(4, 16, 0), np.eye(8, 16)))
    with pytest.raises(unfold.ShapeError):
        unfold.Network(unfold.NetworkConfig(unfold.gaussian_measurement(4, 16, 0), np.eye(32, 12)))


def test_cli_in_process():
    rc, out, err = unfold.cli(["no-such-command"])
    assert rc == 1
    rc, out, err = unfold.cli(["gradcheck", "--set", "n=8", "--set", "m=2", "--set", "N=16"])
    assert rc == 0, err
