import numpy as np
import pytest

from freewaylab import mlp


def small_net(rng, sizes=(12, 8, 6, 5)):
    return mlp.init_params(rng, layer_sizes=sizes)


def finite_difference_grads(params, state, action, target, h=1e-4):
    """Central differences of 0.5*(target - Q(s,a))^2 over every parameter."""
    def loss():
        q = mlp.forward(params, state)
        return 0.5 * (target - q[action]) ** 2

    grad_w = [np.zeros_like(w) for w in params.weights]
    grad_b = [np.zeros_like(b) for b in params.biases]
    for arr, grad in list(zip(params.weights, grad_w)) + \
            list(zip(params.biases, grad_b)):
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = loss()
            flat[j] = orig - h
            down = loss()
            flat[j] = orig
            gflat[j] = (up - down) / (2 * h)
    return grad_w, grad_b


def sample_safe_triple(rng, params, margin=1e-2):
    """Random (state, action, target) with pre-activations away from the
    ReLU kink, so finite differences are trustworthy."""
    n_in = params.weights[0].shape[0]
    n_out = params.weights[-1].shape[1]
    for _ in range(200):
        state = rng.uniform(0.0, 25.0, size=n_in)
        pre, _ = mlp._forward_cached(params, state)
        if all(np.abs(z).min() > margin for z in pre[:-1]):
            action = int(rng.integers(0, n_out))
            target = float(rng.normal(scale=5.0))
            return state, action, target
    raise AssertionError("could not sample a kink-free state")


def test_zero_params_give_zero_outputs():
    params = mlp.MlpParams(
        weights=[np.zeros((480, 256)), np.zeros((256, 128)), np.zeros((128, 7))],
        biases=[np.zeros(256), np.zeros(128), np.zeros(7)])
    q = mlp.forward(params, np.arange(480, dtype=float))
    assert np.array_equal(q, np.zeros(7))


def test_zero_hidden_weights_output_equals_bias():
    rng = np.random.default_rng(0)
    params = mlp.init_params(rng)
    for w in params.weights:
        w[:] = 0.0
    params.biases[-1][:] = np.arange(7, dtype=float)
    q = mlp.forward(params, rng.uniform(0, 25, size=480))
    assert np.array_equal(q, np.arange(7, dtype=float))


def test_forward_deterministic_under_seed():
    q1 = mlp.forward(mlp.init_params(np.random.default_rng(5)),
                     np.full(480, 3.0))
    q2 = mlp.forward(mlp.init_params(np.random.default_rng(5)),
                     np.full(480, 3.0))
    assert np.array_equal(q1, q2)


def test_forward_rejects_bad_shape():
    params = mlp.init_params(np.random.default_rng(0))
    with pytest.raises(ValueError):
        mlp.forward(params, np.zeros(479))


def test_backward_zero_residual_zero_gradient():
    rng = np.random.default_rng(1)
    params = small_net(rng)
    state = rng.uniform(0, 25, size=12)
    q = mlp.forward(params, state)
    grad_w, grad_b = mlp.backward(params, state, 2, float(q[2]))
    assert all(np.all(g == 0) for g in grad_w)
    assert all(np.all(g == 0) for g in grad_b)


def test_backward_matches_finite_differences_every_entry():
    rng = np.random.default_rng(2)
    for trial in range(10):
        params = small_net(rng)
        state, action, target = sample_safe_triple(rng, params)
        grad_w, grad_b = mlp.backward(params, state, action, target)
        fd_w, fd_b = finite_difference_grads(params, state, action, target)
        for g, fd in list(zip(grad_w, fd_w)) + list(zip(grad_b, fd_b)):
            denom = np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-6)
            assert np.max(np.abs(g - fd) / denom) < 1e-4


def test_backward_full_architecture_sampled_entries():
    rng = np.random.default_rng(3)
    params = mlp.init_params(rng)
    state, action, target = sample_safe_triple(rng, params)
    grad_w, grad_b = mlp.backward(params, state, action, target)
    h = 1e-4

    def loss():
        q = mlp.forward(params, state)
        return 0.5 * (target - q[action]) ** 2

    for li, arr in enumerate(params.weights):
        flat = arr.reshape(-1)
        gflat = grad_w[li].reshape(-1)
        for j in rng.choice(flat.size, size=25, replace=False):
            orig = flat[j]
            flat[j] = orig + h
            up = loss()
            flat[j] = orig - h
            down = loss()
            flat[j] = orig
            fd = (up - down) / (2 * h)
            denom = max(abs(gflat[j]), abs(fd), 1e-6)
            assert abs(gflat[j] - fd) / denom < 1e-4


def test_gradient_of_unselected_outputs_is_zero():
    rng = np.random.default_rng(4)
    params = small_net(rng)
    state = rng.uniform(0, 25, size=12)
    grad_w, grad_b = mlp.backward(params, state, 1, 10.0)
    out_w = grad_w[-1]
    for col in range(out_w.shape[1]):
        if col != 1:
            assert np.all(out_w[:, col] == 0)
            assert grad_b[-1][col] == 0


def test_adam_zero_gradient_keeps_params():
    rng = np.random.default_rng(5)
    params = small_net(rng)
    opt = mlp.init_adam(params)
    before = [w.copy() for w in params.weights]
    zeros = ([np.zeros_like(w) for w in params.weights],
             [np.zeros_like(b) for b in params.biases])
    mlp.adam_step(params, zeros, opt)
    assert opt.step == 1
    for b, w in zip(before, params.weights):
        assert np.array_equal(b, w)


def test_adam_descends_on_positive_gradient():
    rng = np.random.default_rng(6)
    params = small_net(rng)
    opt = mlp.init_adam(params)
    target = params.weights[0][0, 0]
    grads = ([np.zeros_like(w) for w in params.weights],
             [np.zeros_like(b) for b in params.biases])
    grads[0][0][0, 0] = 1.0
    mlp.adam_step(params, grads, opt)
    assert params.weights[0][0, 0] < target


def test_adam_decreases_loss_on_fixed_batch():
    rng = np.random.default_rng(7)
    params = small_net(rng)
    opt = mlp.init_adam(params, lr=0.003)
    states = rng.uniform(0, 25, size=(32, 12))
    actions = rng.integers(0, 5, size=32)
    targets = rng.normal(size=32)
    first = None
    last = None
    for i in range(100):
        gw, gb, loss = mlp.backward_batch(params, states, actions, targets)
        if first is None:
            first = loss
        mlp.adam_step(params, (gw, gb), opt)
        last = loss
    assert last < first


def test_copy_params_independent():
    rng = np.random.default_rng(8)
    params = small_net(rng)
    clone = mlp.copy_params(params)
    for a, b in zip(params.weights, clone.weights):
        assert np.array_equal(a, b)
    assert clone.layer_sizes == params.layer_sizes
    grads = ([np.ones_like(w) for w in params.weights],
             [np.ones_like(b) for b in params.biases])
    mlp.adam_step(params, grads, mlp.init_adam(params))
    assert not np.array_equal(params.weights[0], clone.weights[0])


def test_checkpoint_roundtrip_bit_exact():
    rng = np.random.default_rng(9)
    params = mlp.init_params(rng)
    opt = mlp.init_adam(params)
    grads = mlp.backward(params, rng.uniform(0, 25, size=480), 3, 1.25)
    mlp.adam_step(params, grads, opt)
    meta = {"gradient_steps": 17, "config_sha": "abc123"}
    blob = mlp.save_checkpoint(params, opt, meta)
    params2, opt2, meta2 = mlp.load_checkpoint(blob)
    assert meta2 == meta
    assert opt2.step == opt.step and opt2.lr == opt.lr
    for a, b in zip(params.weights + params.biases,
                    params2.weights + params2.biases):
        assert np.array_equal(a, b)
    for a, b in zip(opt.m_w + opt.v_w, opt2.m_w + opt2.v_w):
        assert np.array_equal(a, b)


def test_checkpoint_corrupted_header_rejected():
    rng = np.random.default_rng(10)
    params = mlp.init_params(rng)
    blob = bytearray(mlp.save_checkpoint(params, mlp.init_adam(params), {}))
    with pytest.raises(ValueError):
        mlp.load_checkpoint(b"NOTMAGIC" + bytes(blob[8:]))
    blob[12:20] = b"garbage!"
    with pytest.raises(ValueError):
        mlp.load_checkpoint(bytes(blob))


def test_checkpoint_shape_mismatch_rejected():
    rng = np.random.default_rng(11)
    params = mlp.init_params(rng)
    blob = mlp.save_checkpoint(params, mlp.init_adam(params), {})
    # Corrupt the declared layer sizes inside the JSON header.
    bad = blob.replace(b'"layer_sizes": [480, 256, 128, 7]',
                       b'"layer_sizes": [480, 256, 128, 9]')
    assert bad != blob
    with pytest.raises(ValueError):
        mlp.load_checkpoint(bad)


def test_checkpoint_truncated_rejected():
    rng = np.random.default_rng(12)
    params = mlp.init_params(rng)
    blob = mlp.save_checkpoint(params, mlp.init_adam(params), {})
    with pytest.raises(ValueError):
        mlp.load_checkpoint(blob[:len(blob) // 2])
