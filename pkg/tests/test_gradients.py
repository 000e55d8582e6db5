import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beamcodebook.codebook import PhaseCodebook, argmax_onehot, combine, softmax_probs
from beamcodebook.gradients import (
    GradientSet,
    OptimizerState,
    SplitComplex,
    apply_update,
    backprop_selfsup,
    backprop_supervised,
    cross_entropy_loss,
    grad_power_wrt_z,
    grad_z_wrt_theta,
    mse_loss,
    selfsup_batch_gradient,
    supervised_batch_gradient,
)

STEP = 1e-6


def rand_c(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def fd_grad(f, theta, step=STEP):
    """Central finite differences of a scalar function of the phase matrix."""
    g = np.zeros_like(theta)
    for idx in np.ndindex(theta.shape):
        tp, tm = theta.copy(), theta.copy()
        tp[idx] += step
        tm[idx] -= step
        g[idx] = (f(tp) - f(tm)) / (2 * step)
    return g


# independent loss evaluations used as finite-difference targets

def sup_loss(theta, H, p):
    Z = np.atleast_2d(H) @ (np.exp(1j * theta.T) / np.sqrt(theta.shape[1])).conj()
    return np.mean((np.max(np.abs(Z) ** 2, axis=1) - p) ** 2)


def ce_loss(theta, H, labels):
    Z = np.atleast_2d(H) @ (np.exp(1j * theta.T) / np.sqrt(theta.shape[1])).conj()
    Q = np.abs(Z) ** 2
    Q = Q - Q.max(axis=1, keepdims=True)
    logs = Q - np.log(np.exp(Q).sum(axis=1, keepdims=True))
    return -np.mean(logs[np.arange(len(labels)), labels])


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12)


# ---- dq/dz

def test_power_jacobian_closed_form():
    np.testing.assert_allclose(grad_power_wrt_z([1 + 1j]), [[2, 2]])


def test_power_jacobian_zero():
    np.testing.assert_array_equal(grad_power_wrt_z(np.zeros(3)), 0.0)


def test_power_jacobian_fd():
    rng = np.random.default_rng(0)
    z = rand_c(rng, 3)
    x = np.concatenate([z.real, z.imag])
    jac = grad_power_wrt_z(z)
    for k in range(6):
        xp, xm = x.copy(), x.copy()
        xp[k] += STEP
        xm[k] -= STEP
        qp = xp[:3] ** 2 + xp[3:] ** 2
        qm = xm[:3] ** 2 + xm[3:] ** 2
        np.testing.assert_allclose(jac[:, k], (qp - qm) / (2 * STEP), atol=1e-6)


# ---- dz/dtheta

def test_phase_jacobian_single_antenna():
    # z = exp(-j theta) h: at theta=0, h=1 the imaginary part moves with slope -1
    jac = grad_z_wrt_theta(np.array([0.0]), np.array([1.0 + 0j]))
    assert jac[0, 0] == pytest.approx(0.0, abs=1e-15)
    assert jac[1, 0] == pytest.approx(-1.0)
    z = lambda t: np.exp(-1j * t) * 1.0
    assert (z(STEP).imag - z(-STEP).imag) / (2 * STEP) == pytest.approx(-1.0)


def test_phase_jacobian_zero_channel():
    np.testing.assert_array_equal(grad_z_wrt_theta(np.ones(4), np.zeros(4), 1, 3), 0.0)


def test_phase_jacobian_fd():
    rng = np.random.default_rng(1)
    N, M, n = 3, 4, 1
    theta = rng.uniform(0, 2 * np.pi, (N, M))
    h = rand_c(rng, M)
    jac = grad_z_wrt_theta(theta[n], h, n, N)
    for m in range(M):
        tp, tm = theta.copy(), theta.copy()
        tp[n, m] += STEP
        tm[n, m] -= STEP
        zp = combine(PhaseCodebook(tp), h)
        zm = combine(PhaseCodebook(tm), h)
        d = (zp - zm) / (2 * STEP)
        np.testing.assert_allclose(jac[:N, m], d.real, atol=1e-6)
        np.testing.assert_allclose(jac[N:, m], d.imag, atol=1e-6)


# ---- losses

def test_mse_values():
    assert mse_loss([1.5, 2.0], [1.5, 2.0]) == 0.0
    assert mse_loss([0.0], [2.0]) == 4.0
    assert mse_loss([1.0, 3.0], [0.0, 0.0]) == 5.0
    with pytest.raises(ValueError):
        mse_loss([], [])


def test_cross_entropy_values():
    assert cross_entropy_loss(np.full(4, 0.25), [0, 0, 1, 0]) == pytest.approx(np.log(4))
    assert cross_entropy_loss([0.9, 0.1], [0, 1]) == pytest.approx(-np.log(0.1))
    eps = 1e-12
    assert cross_entropy_loss([1 - 3 * eps, eps, eps, eps], [1, 0, 0, 0]) == pytest.approx(0.0, abs=1e-9)
    # clamp keeps a hard zero finite
    assert np.isfinite(cross_entropy_loss([1.0, 0.0], [0, 1]))


# ---- supervised backprop

def test_supervised_zero_at_target():
    rng = np.random.default_rng(2)
    cb = PhaseCodebook.random(3, 4, rng)
    h = rand_c(rng, 4)
    g = np.max(np.abs(combine(cb, h)) ** 2)
    np.testing.assert_array_equal(backprop_supervised(cb, h, g).d_theta, 0.0)


def test_supervised_only_winner_row():
    rng = np.random.default_rng(3)
    theta = np.zeros((2, 4))
    theta[1] = rng.uniform(0, 2 * np.pi, 4)
    h = np.ones(4, complex)  # beam 0 is matched and wins
    grads = backprop_supervised(PhaseCodebook(theta), h, 10.0).d_theta
    np.testing.assert_array_equal(grads[1], 0.0)


def test_supervised_fd_m4_n3():
    rng = np.random.default_rng(4)
    theta = rng.uniform(0, 2 * np.pi, (3, 4))
    h = rand_c(rng, 4)
    p = 3.0
    analytic = backprop_supervised(PhaseCodebook(theta), h, p).d_theta
    numeric = fd_grad(lambda t: sup_loss(t, h, p), theta)
    assert rel_err(analytic, numeric) < 1e-5


def test_supervised_batch_matches_per_sample_route():
    rng = np.random.default_rng(5)
    cb = PhaseCodebook.random(4, 6, rng)
    H = rand_c(rng, 7, 6)
    p = rng.uniform(0, 5, 7)
    loss, grads, g = supervised_batch_gradient(cb, H, p)
    per_sample = sum(backprop_supervised(cb, H[b], p[b], batch_size=7).d_theta for b in range(7))
    np.testing.assert_allclose(grads.d_theta, per_sample, atol=1e-12)
    assert loss == pytest.approx(sup_loss(cb.phases, H, p))


# ---- self-supervised backprop

def test_selfsup_converged_cluster_is_flat():
    z = np.array([60.0, 0.0, 0.0], dtype=complex) ** 0.5  # q = [60, 0, 0]
    s = softmax_probs(np.abs(z) ** 2)
    c = argmax_onehot(np.abs(z) ** 2)
    rng = np.random.default_rng(6)
    cb = PhaseCodebook.random(3, 4, rng)
    grads = backprop_selfsup(cb, z, rand_c(rng, 4), c).d_theta
    bound = np.max(np.abs(s - c)) * 2 * np.max(np.abs(z)) * 4 * 10  # generous chain bound
    assert np.max(np.abs(grads)) <= bound
    assert np.max(np.abs(grads)) < 1e-20


def test_selfsup_single_beam_is_degenerate():
    rng = np.random.default_rng(7)
    cb = PhaseCodebook.random(1, 4, rng)
    h = rand_c(rng, 4)
    loss, grads, labels = selfsup_batch_gradient(cb, combine(cb, h)[None, :], h[None, :])
    assert loss == 0.0 and labels.tolist() == [0]
    np.testing.assert_array_equal(grads.d_theta, 0.0)
    z = combine(cb, h)
    np.testing.assert_array_equal(backprop_selfsup(cb, z, h, [1.0]).d_theta, 0.0)


def test_selfsup_fd_with_true_channel():
    rng = np.random.default_rng(8)
    theta = rng.uniform(0, 2 * np.pi, (3, 4))
    h = 0.6 * rand_c(rng, 4)
    cb = PhaseCodebook(theta)
    z = combine(cb, h)
    c = argmax_onehot(np.abs(z) ** 2)
    analytic = backprop_selfsup(cb, z, h, c).d_theta
    numeric = fd_grad(lambda t: ce_loss(t, h, [int(np.argmax(c))]), theta)
    assert rel_err(analytic, numeric) < 1e-5


def test_selfsup_batch_matches_per_sample_route():
    rng = np.random.default_rng(9)
    cb = PhaseCodebook.random(3, 5, rng)
    H = rand_c(rng, 6, 5)
    Z = combine(cb, H)
    loss, grads, labels = selfsup_batch_gradient(cb, Z, H)
    per_sample = sum(
        backprop_selfsup(cb, Z[b], H[b], argmax_onehot(np.abs(Z[b]) ** 2), batch_size=6).d_theta
        for b in range(6)
    )
    np.testing.assert_allclose(grads.d_theta, per_sample, atol=1e-12)
    assert loss == pytest.approx(ce_loss(cb.phases, H, labels))


# ---- gradient properties

@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 8), st.integers(0, 2**31))
def test_supervised_grad_has_at_most_one_row(N, M, seed):
    rng = np.random.default_rng(seed)
    cb = PhaseCodebook.random(N, M, rng)
    d = backprop_supervised(cb, rand_c(rng, M), rng.uniform(0, 4)).d_theta
    assert np.count_nonzero(np.any(d != 0, axis=1)) <= 1


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 8), st.integers(0, 2**31))
def test_gradients_periodic_in_phase(N, M, seed):
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0, 2 * np.pi, (N, M))
    H = rand_c(rng, 3, M)
    p = rng.uniform(0, 4, 3)
    shifted = theta + 2 * np.pi * rng.integers(-2, 3, theta.shape)
    a = supervised_batch_gradient(PhaseCodebook(theta), H, p)[1].d_theta
    b = supervised_batch_gradient(PhaseCodebook(shifted), H, p)[1].d_theta
    np.testing.assert_allclose(a, b, atol=1e-9)
    cb, cbs = PhaseCodebook(theta), PhaseCodebook(shifted)
    a = selfsup_batch_gradient(cb, combine(cb, H), H)[1].d_theta
    b = selfsup_batch_gradient(cbs, combine(cbs, H), H)[1].d_theta
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_small_sgd_step_never_increases_sample_loss():
    rng = np.random.default_rng(10)
    for _ in range(100):
        N, M = rng.integers(1, 5), rng.integers(1, 9)
        cb = PhaseCodebook.random(N, M, rng)
        h = rand_c(rng, M)
        p = rng.uniform(0, 4)
        before = sup_loss(cb.phases, h, p)
        new, _ = apply_update(cb, backprop_supervised(cb, h, p), OptimizerState("sgd", 1e-4))
        assert sup_loss(new.phases, h, p) <= before + 1e-12


# ---- updates

def test_zero_gradient_leaves_codebook():
    cb = PhaseCodebook.random(2, 3, np.random.default_rng(11))
    for rule in ("sgd", "adam"):
        new, _ = apply_update(cb, GradientSet(np.zeros((2, 3))), OptimizerState(rule, 0.1))
        np.testing.assert_array_equal(new.phases, cb.phases)


def test_sgd_step():
    cb = PhaseCodebook(np.array([[0.5, 1.0]]))
    new, st_ = apply_update(cb, GradientSet(np.array([[1.0, 0.0]])), OptimizerState("sgd", 0.1))
    np.testing.assert_allclose(new.phases, [[0.4, 1.0]])
    assert st_.step == 1


def test_adam_two_steps_by_hand():
    g1 = np.array([[0.3, -2.0, 0.0]])
    g2 = np.array([[0.1, 1.0, 4.0]])
    theta = np.array([[1.0, 2.0, 3.0]])
    lr, b1, b2, eps = 0.05, 0.9, 0.999, 1e-8
    # step 1: m = (1-b1) g, v = (1-b2) g^2, bias-corrected ratio is g/|g|
    m = (1 - b1) * g1
    v = (1 - b2) * g1**2
    t1 = theta - lr * (m / (1 - b1)) / (np.sqrt(v / (1 - b2)) + eps)
    m = b1 * m + (1 - b1) * g2
    v = b2 * v + (1 - b2) * g2**2
    t2 = t1 - lr * (m / (1 - b1**2)) / (np.sqrt(v / (1 - b2**2)) + eps)

    state = OptimizerState("adam", lr)
    cb, state = apply_update(PhaseCodebook(theta), GradientSet(g1), state)
    np.testing.assert_allclose(cb.phases, t1, rtol=1e-14)
    np.testing.assert_allclose(cb.phases[0, :2], theta[0, :2] - lr * np.sign(g1[0, :2]), rtol=1e-6)
    cb, state = apply_update(cb, GradientSet(g2), state)
    np.testing.assert_allclose(cb.phases, t2, rtol=1e-14)
    assert state.step == 2


def test_update_shape_mismatch():
    with pytest.raises(ValueError):
        apply_update(PhaseCodebook(np.zeros((2, 2))), GradientSet(np.zeros((1, 2))), OptimizerState())


def test_nonfinite_gradient_rejected():
    with pytest.raises(FloatingPointError):
        GradientSet(np.array([[np.nan]]))


def test_split_complex_round_trip():
    x = rand_c(np.random.default_rng(12), 5)
    sc = SplitComplex.from_complex(x)
    np.testing.assert_array_equal(sc.to_complex(), x)
    assert sc.stacked().shape == (10,)
