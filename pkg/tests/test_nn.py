import numpy as np
import pytest

from hflsim.nn import MLP
from hflsim.rng import stream


def _fd_grad(net: MLP, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of sum(net(x)) w.r.t. the flat params."""
    flat = net.get_flat()
    out = np.empty_like(flat)
    for i in range(flat.size):
        up = flat.copy(); up[i] += eps
        dn = flat.copy(); dn[i] -= eps
        net.set_flat(up)
        fu = float(np.sum(net.forward(x)))
        net.set_flat(dn)
        fd = float(np.sum(net.forward(x)))
        out[i] = (fu - fd) / (2 * eps)
    net.set_flat(flat)
    return out


def _flatten_grads(net: MLP, gw, gb) -> np.ndarray:
    parts = []
    for w, b in zip(gw, gb):
        parts.append(np.asarray(w).ravel())
        parts.append(np.asarray(b).ravel())
    return np.concatenate(parts)


def test_shapes_and_param_count():
    net = MLP((3, 8, 8, 1), gen=stream(1, "nn"))
    x = np.zeros((5, 3))
    assert net.forward(x).shape == (5, 1)
    assert net.n_params == 3 * 8 + 8 + 8 * 8 + 8 + 8 * 1 + 1


def test_rejects_bad_constructor_args():
    with pytest.raises(ValueError):
        MLP((4,))
    with pytest.raises(ValueError):
        MLP((4, 1), out_act="softmax")


def test_backward_matches_finite_differences_linear():
    net = MLP((3, 6, 2), out_act="linear", gen=stream(2, "nn"))
    x = stream(3, "nn", "x").normal(size=(7, 3))
    out, cache = net.forward_cache(x)
    gw, gb, _ = net.backward(cache, np.ones_like(out))
    analytic = _flatten_grads(net, gw, gb)
    numeric = _fd_grad(net, x)
    assert np.max(np.abs(analytic - numeric)) < 1e-4


def test_backward_matches_finite_differences_sigmoid():
    net = MLP((2, 5, 1), out_act="sigmoid", gen=stream(4, "nn"))
    x = stream(5, "nn", "x").normal(size=(6, 2))
    out, cache = net.forward_cache(x)
    gw, gb, _ = net.backward(cache, np.ones_like(out))
    analytic = _flatten_grads(net, gw, gb)
    numeric = _fd_grad(net, x)
    assert np.max(np.abs(analytic - numeric)) < 1e-4


def test_input_gradient():
    # d sum(net(x)) / dx checked against finite differences
    net = MLP((3, 4, 1), gen=stream(6, "nn"))
    x = stream(7, "nn", "x").normal(size=(2, 3))
    out, cache = net.forward_cache(x)
    _, _, dx = net.backward(cache, np.ones_like(out))
    eps = 1e-6
    num = np.empty_like(x)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            up = x.copy(); up[i, j] += eps
            dn = x.copy(); dn[i, j] -= eps
            num[i, j] = (np.sum(net.forward(up)) - np.sum(net.forward(dn))) / (2 * eps)
    assert np.max(np.abs(dx - num)) < 1e-4


def test_sigmoid_output_bounded():
    net = MLP((2, 4, 1), out_act="sigmoid", gen=stream(8, "nn"))
    x = stream(9, "nn", "x").normal(size=(50, 2)) * 10
    y = net.forward(x)
    assert np.all(y > 0) and np.all(y < 1)


def test_get_set_flat_roundtrip():
    net = MLP((3, 5, 2), gen=stream(10, "nn"))
    flat = net.get_flat()
    assert flat.size == net.n_params
    net2 = MLP((3, 5, 2))
    net2.set_flat(flat)
    x = stream(11, "nn", "x").normal(size=(4, 3))
    assert np.array_equal(net.forward(x), net2.forward(x))
    with pytest.raises(ValueError):
        net2.set_flat(flat[:-1])


def test_clone_is_independent():
    net = MLP((2, 3, 1), gen=stream(12, "nn"))
    cp = net.clone()
    x = np.ones((1, 2))
    before = net.forward(x).copy()
    cp.weights[0][:] += 1.0
    assert np.array_equal(net.forward(x), before)
    assert not np.array_equal(cp.forward(x), before)


def test_sgd_step_descends():
    # minimize mean squared output with gradient steps
    net = MLP((2, 6, 1), gen=stream(13, "nn"))
    x = stream(14, "nn", "x").normal(size=(16, 2))
    def msq():
        return float(np.mean(net.forward(x) ** 2))
    v0 = msq()
    for _ in range(50):
        out, cache = net.forward_cache(x)
        gw, gb, _ = net.backward(cache, 2 * out / out.shape[0])
        net.sgd_step(gw, gb, 0.05)
    assert msq() < v0
