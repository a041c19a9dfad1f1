import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trigame.dynamics import ScheduleConfig
from trigame.mlp import Mlp, sigmoid, softmax
from trigame.squidgan import (MixtureSpec, NonFiniteGradientError, SquidGAN, TrainingLog, _bce, _cce,
                              default_networks, evaluate, losses, objective_gradients,
                              objective_weights, one_hot, read_samples_csv, sample_noise, sample_real,
                              train_step, write_samples_csv)

K = 3


def small_nets(seed, k=K, noise_dim=2, hidden=(4,)):
    rng = np.random.default_rng(seed)
    d = Mlp((2 + k, *hidden, 1), output="sigmoid", rng=rng)
    c = Mlp((2, *hidden, k), output="softmax", rng=rng)
    g = Mlp((noise_dim + k, *hidden, 2), rng=rng)
    return d, c, g


def small_batches(seed, n=3, k=K, noise_dim=2):
    rng = np.random.default_rng(seed + 100)
    return (rng.normal(size=(n, 2)), rng.integers(k, size=n)), sample_noise(k, n, noise_dim, rng)


def max_fd_error(d, c, g, real, noise, player, literal=False, h=1e-5):
    """Largest relative error between analytic and central-difference gradients."""
    w = np.array(objective_weights(player, literal), float)
    grads = objective_gradients(d, c, g, real, noise, player, literal)
    nets = {"d": d, "c": c, "g": g}
    worst = 0.0
    for name, net in nets.items():
        flat = net.flat()
        analytic = np.concatenate([x.ravel() for x in grads[name]])
        numeric = np.empty_like(flat)
        for i in range(flat.size):
            vals = []
            for s in (1, -1):
                f = flat.copy()
                f[i] += s * h
                probe = net.copy()
                probe.set_flat(f)
                trial = dict(nets, **{name: probe})
                vals.append(w @ np.array(losses(trial["d"], trial["c"], trial["g"], real, noise).terms))
            numeric[i] = (vals[0] - vals[1]) / (2 * h)
        scale = max(np.max(np.abs(numeric)), 1e-6)
        worst = max(worst, float(np.max(np.abs(analytic - numeric)) / scale))
    return worst


@pytest.mark.parametrize("output", ["identity", "sigmoid", "softmax"])
def test_mlp_backward_matches_finite_differences(output):
    rng = np.random.default_rng(0)
    net = Mlp((3, 5, 4, 2 if output != "sigmoid" else 1), output=output, rng=rng)
    x = rng.normal(size=(4, 3))
    upstream = rng.normal(size=(4, net.sizes[-1]))
    out, cache = net.forward(x)
    grads, gin = net.backward(cache, upstream)
    flat, h = net.flat(), 1e-6
    analytic = np.concatenate([g.ravel() for g in grads])
    for i in range(0, flat.size, 3):
        f = flat.copy()
        f[i] += h
        up = net.copy()
        up.set_flat(f)
        f[i] -= 2 * h
        down = net.copy()
        down.set_flat(f)
        num = np.sum(upstream * (up(x) - down(x))) / (2 * h)
        assert analytic[i] == pytest.approx(num, rel=1e-5, abs=1e-8)
    num_in = np.zeros_like(x)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            e = np.zeros_like(x)
            e[i, j] = h
            num_in[i, j] = np.sum(upstream * (net(x + e) - net(x - e))) / (2 * h)
    np.testing.assert_allclose(gin, num_in, rtol=1e-5, atol=1e-8)


@given(st.lists(st.floats(-500, 500), min_size=2, max_size=8))
def test_softmax_sums_to_one(z):
    p = softmax(np.array([z]))
    assert abs(p.sum() - 1.0) <= 1e-12 and np.all(p >= 0)


def test_sigmoid_extremes_are_finite():
    s = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert s.tolist() == [0.0, 0.5, 1.0]
    assert np.all(np.isfinite(_bce(s, 1.0))) and np.all(_bce(s, 1.0) <= -np.log(1e-7) + 1e-9)


def test_mlp_validation_and_serialization():
    with pytest.raises(ValueError):
        Mlp((3,))
    with pytest.raises(ValueError):
        Mlp((2, 2), output="cubic")
    with pytest.raises(ValueError):
        Mlp((2, 3), params=[np.full((2, 3), np.inf), np.zeros(3)])
    net = Mlp((2, 4, 3), output="softmax", rng=np.random.default_rng(1))
    assert Mlp.from_dict(net.to_dict()) == net
    with pytest.raises(ValueError):
        net.forward(np.ones((2, 5)))


def test_sample_real_preconditions_and_determinism():
    mix = MixtureSpec.default(seed=4)
    with pytest.raises(ValueError):
        sample_real(mix, 0)
    a, b = sample_real(mix, 50), sample_real(mix, 50)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_sample_real_class_frequencies():
    _, y = sample_real(MixtureSpec.default(), 60_000)
    freq = np.bincount(y, minlength=6) / len(y)
    assert np.all(np.abs(freq - 1 / 6) <= 0.02)


def test_sample_real_concentrates_at_means():
    sigma = 1e-3
    mix = MixtureSpec.default(var=sigma ** 2)
    X, y = sample_real(mix, 60_000)
    pts = X[y == 2][:10_000]
    assert len(pts) == 10_000
    assert np.all(np.abs(pts.mean(axis=0) - mix.means[2]) <= 4 * sigma / np.sqrt(len(pts)))


def test_mixture_validation():
    with pytest.raises(ValueError):
        MixtureSpec(np.zeros((2, 2)), np.array([np.eye(2), -np.eye(2)]))
    with pytest.raises(ValueError):
        MixtureSpec(np.zeros((1, 2)), np.array([[[1.0, 0.5], [0.0, 1.0]]]))


def test_sample_noise_distribution():
    z, y = sample_noise(6, 60_000, 8, np.random.default_rng(0))
    assert z.shape == (60_000, 8)
    assert np.all(np.abs(z.mean(axis=0)) < 0.02) and np.all(np.abs(z.var(axis=0) - 1) < 0.03)
    assert np.all(np.abs(np.bincount(y) / len(y) - 1 / 6) <= 0.02)
    with pytest.raises(ValueError):
        sample_noise(6, 0)


def test_half_discriminator_gives_ln2_terms():
    d, c, g = small_nets(0)
    d.params = [np.zeros_like(p) for p in d.params]
    t = losses(d, c, g, *small_batches(0)).terms
    assert t[0] == pytest.approx(np.log(2), abs=1e-12)
    assert t[1] == pytest.approx(np.log(2), abs=1e-12)
    assert t[2] == pytest.approx(np.log(2), abs=1e-12)


def test_exact_one_hot_has_zero_cce():
    E = one_hot(np.array([0, 2, 1]), 3)
    assert np.all(_cce(E, E) <= 1e-6)


def test_loss_decomposition():
    d, c, g = small_nets(1)
    real, noise = small_batches(1, n=5)
    res = losses(d, c, g, real, noise)
    x, y = real
    p_real = d(np.hstack([x, one_hot(y, K)]))
    xg = g(np.hstack([noise[0], one_hot(noise[1], K)]))
    p_fake = d(np.hstack([xg, c(xg)]))
    l_real = np.mean(_bce(p_real, 0.0))
    l_fake = np.mean(_bce(p_fake, 1.0))
    assert res.l_d == pytest.approx(l_real + l_fake, abs=1e-14)
    assert res.u_c == pytest.approx(res.terms[4] + res.terms[3] + res.terms[1], abs=1e-14)
    assert res.u_g == pytest.approx(res.terms[2] + res.terms[3], abs=1e-14)


def test_losses_reject_bad_shapes():
    d, c, g = small_nets(2)
    real, noise = small_batches(2)
    with pytest.raises(ValueError):
        losses(d, c, g, (real[0][:0], real[1][:0]), noise)
    with pytest.raises(ValueError):
        losses(c, d, g, real, noise)


@pytest.mark.parametrize("player", ["d", "c", "g"])
@pytest.mark.parametrize("literal", [False, True])
def test_gradients_match_finite_differences(player, literal):
    d, c, g = small_nets(3)
    assert max_fd_error(d, c, g, *small_batches(3), player, literal) < 1e-4


def test_zero_learning_rate_leaves_parameters():
    d, c, g = small_nets(4)
    cfg = ScheduleConfig(beta=(0.3, -0.2, 0.9))
    nd, nc, ng = train_step(d, c, g, cfg, small_batches(4), eta=0.0)
    for old, new in ((d, nd), (c, nc), (g, ng)):
        assert all(np.array_equal(a, b) for a, b in zip(old.params, new.params))


@pytest.mark.parametrize("order", ["simultaneous", "alternating", "maximizer_first"])
def test_zero_momentum_step_is_plain_gradient_step(order):
    d, c, g = small_nets(5)
    real, noise = small_batches(5)
    eta = 0.05
    nd, nc, ng = train_step(d, c, g, ScheduleConfig(order=order, eta=eta), (real, noise))
    # momentum-free reference with the same update order
    nets = {"d": d, "c": c, "g": g}
    stages = {"simultaneous": [("d", "c", "g")], "alternating": [("d",), ("c",), ("g",)],
              "maximizer_first": [("d",), ("c", "g")]}[order]
    for stage in stages:
        new = {}
        for name in stage:
            grads = objective_gradients(nets["d"], nets["c"], nets["g"], real, noise, name)[name]
            ref = nets[name].copy()
            ref.params = [p - eta * gr for p, gr in zip(nets[name].params, grads)]
            new[name] = ref
        nets.update(new)
    for ref, got in ((nets["d"], nd), (nets["c"], nc), (nets["g"], ng)):
        assert all(np.array_equal(a, b) for a, b in zip(ref.params, got.params))


def test_momentum_uses_previous_change():
    d, c, g = small_nets(6)
    batches = small_batches(6)
    cfg = ScheduleConfig(eta=0.01, beta=(0.5, 0.5, 0.5))
    d1, c1, g1 = train_step(d, c, g, cfg, batches)
    d2, _, _ = train_step(d1, c1, g1, cfg, batches, eta=0.0)
    for p0, p1, p2 in zip(d.params, d1.params, d2.params):
        np.testing.assert_array_equal(p2, p1 + 0.5 * (p1 - p0))


def test_non_finite_gradient_names_player():
    d, c, g = small_nets(7)
    (x, y), noise = small_batches(7)
    with pytest.raises(NonFiniteGradientError) as info:
        train_step(d, c, g, ScheduleConfig(), ((x * np.nan, y), noise))
    assert info.value.player == "d"


def test_evaluate_ideal_generator():
    mix = MixtureSpec.default()
    k = mix.k
    g = Mlp((8 + k, 2), rng=np.random.default_rng(0))
    g.params = [np.vstack([np.zeros((8, 2)), mix.means]), np.zeros(2)]
    _, c, _ = default_networks()
    res = evaluate(g, c, mix, 50)
    assert res["class_match_rate"] == 1.0 and res["mean_mahalanobis"] == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        evaluate(g, c, mix, 0)


def test_untrained_generator_is_at_chance():
    mix = MixtureSpec.default()
    rates = []
    for seed in range(20):
        _, c, g = default_networks(rng=np.random.default_rng(seed))
        rates.append(evaluate(g, c, mix, 200, np.random.default_rng(seed))["class_match_rate"])
    assert abs(np.mean(rates) - 1 / 6) < 0.03


def test_estimator_fit_is_deterministic_and_learns():
    mix = MixtureSpec.default()
    X, y = sample_real(mix, 5000, np.random.default_rng(0))
    a = SquidGAN(n_iter=1500, log_every=500).fit(X, y, mixture=mix)
    b = SquidGAN(n_iter=1500, log_every=500).fit(X, y, mixture=mix)
    assert a.generator_ == b.generator_ and a.log_.rows == b.log_.rows
    assert [r[0] for r in a.log_.rows] == [0, 500, 1000, 1500]
    assert a.score(X, y) > 0.9
    assert np.array_equal(a.sample([0, 5, 5]), b.sample([0, 5, 5]))
    assert a.get_params()["n_iter"] == 1500


def test_estimator_label_handling_and_checkpoint(tmp_path):
    mix = MixtureSpec.default(k=3)
    X, y = sample_real(mix, 600, np.random.default_rng(1))
    labels = np.array(["a", "b", "c"])[y]
    est = SquidGAN(n_iter=20, log_every=0).fit(X, labels)
    assert set(est.predict(X[:10])) <= {"a", "b", "c"}
    with pytest.raises(ValueError):
        est.sample(["z"])
    path = tmp_path / "ckpt.json"
    est.save(path)
    back = SquidGAN.load(path)
    assert back.generator_ == est.generator_
    assert np.array_equal(back.predict(X), est.predict(X))
    with pytest.raises(ValueError):
        SquidGAN().fit(X, np.zeros(len(X)))


def test_log_and_samples_csv_round_trip(tmp_path):
    log = TrainingLog([(0, 1.5, 2.25, 0.1 + 0.2, 1 / 3), (10, 1e-300, -2.0, 3.0, 0.5)])
    log.write_csv(tmp_path / "log.csv")
    assert TrainingLog.read_csv(tmp_path / "log.csv").rows == log.rows
    labels = np.array([0, 1, 5])
    pts = np.array([[0.1, -0.2], [1 / 3, 2 / 3], [1e-17, 5.0]])
    write_samples_csv(labels, pts, tmp_path / "s.csv")
    lab2, pts2 = read_samples_csv(tmp_path / "s.csv")
    assert np.array_equal(lab2, labels) and np.array_equal(pts2, pts)
