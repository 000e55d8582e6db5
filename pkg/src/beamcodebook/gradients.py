"""Backpropagation through the phase-to-weight, combining and power layers.

The power ``q_n = |z_n|^2`` is not holomorphic in ``z_n``, so derivatives are
taken with respect to the real and imaginary parts as independent variables.
Jacobians over ``z`` use the stacked layout ``[z^r_1..z^r_N, z^im_1..z^im_N]``.

Two routes compute the same gradients:

* ``backprop_supervised`` / ``backprop_selfsup`` build the explicit per-sample
  Jacobians and multiply them out, one beam at a time.
* ``supervised_batch_gradient`` / ``selfsup_batch_gradient`` contract the
  same chain for a whole mini-batch with a few matrix products. Trainers use
  these.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .codebook import PhaseCodebook, argmax_onehot, combine, phases_to_weights, softmax_probs

LOG_CLAMP = 1e-12


@dataclass(frozen=True)
class SplitComplex:
    real_part: np.ndarray
    imag_part: np.ndarray

    def __post_init__(self):
        if np.shape(self.real_part) != np.shape(self.imag_part):
            raise ValueError("real and imaginary parts must share a shape")

    @classmethod
    def from_complex(cls, x) -> "SplitComplex":
        x = np.asarray(x, dtype=complex)
        return cls(x.real.copy(), x.imag.copy())

    def to_complex(self) -> np.ndarray:
        return self.real_part + 1j * self.imag_part

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.real_part, self.imag_part], axis=0)


@dataclass(frozen=True)
class GradientSet:
    d_theta: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.d_theta)):
            raise FloatingPointError("non-finite gradient")


def grad_power_wrt_z(z: np.ndarray) -> np.ndarray:
    """``N x 2N`` Jacobian of ``q = |z|^2`` w.r.t. ``[z^r, z^im]``."""
    z = np.asarray(z, dtype=complex).reshape(-1)
    n = z.size
    jac = np.zeros((n, 2 * n))
    idx = np.arange(n)
    jac[idx, idx] = 2 * z.real
    jac[idx, n + idx] = 2 * z.imag
    return jac


def grad_z_wrt_theta(
    theta_n: np.ndarray, h: np.ndarray, n: int = 0, num_beams: int = 1
) -> np.ndarray:
    """``2N x M`` Jacobian of ``[z^r, z^im]`` w.r.t. the phases of beam ``n``.

    Only rows ``n`` and ``N + n`` are non-zero because ``z_n`` depends on
    ``theta_n`` alone. With ``z_n = sum_m exp(-j*theta_nm) h_m / sqrt(M)``::

        dz^r_n/dtheta_nm  = (-h^r_m sin(theta_nm) + h^im_m cos(theta_nm)) / sqrt(M)
        dz^im_n/dtheta_nm = (-h^r_m cos(theta_nm) - h^im_m sin(theta_nm)) / sqrt(M)
    """
    theta_n = np.asarray(theta_n, dtype=float).reshape(-1)
    h = np.asarray(h, dtype=complex).reshape(-1)
    if theta_n.size != h.size:
        raise ValueError(f"phase vector ({theta_n.size}) and channel ({h.size}) differ")
    if not 0 <= n < num_beams:
        raise ValueError(f"beam index {n} outside 0..{num_beams - 1}")
    scale = 1.0 / np.sqrt(h.size)
    c, s = np.cos(theta_n), np.sin(theta_n)
    jac = np.zeros((2 * num_beams, h.size))
    jac[n] = scale * (-h.real * s + h.imag * c)
    jac[num_beams + n] = scale * (-h.real * c - h.imag * s)
    return jac


def mse_loss(best_powers, targets) -> float:
    g = np.asarray(best_powers, dtype=float).reshape(-1)
    p = np.asarray(targets, dtype=float).reshape(-1)
    if g.size == 0:
        raise ValueError("empty batch")
    if g.shape != p.shape:
        raise ValueError("gains and targets differ in length")
    return float(np.mean((g - p) ** 2))


def cross_entropy_loss(s, c) -> float:
    """``-sum c log s`` with ``s`` clamped to ``[1e-12, 1]`` inside the log."""
    s = np.asarray(s, dtype=float)
    c = np.asarray(c, dtype=float)
    if s.shape != c.shape:
        raise ValueError("probabilities and label differ in shape")
    return float(-np.sum(c * np.log(np.clip(s, LOG_CLAMP, 1.0))))


def _chain(codebook: PhaseCodebook, z: np.ndarray, h: np.ndarray, dl_dq: np.ndarray) -> np.ndarray:
    """Multiply ``dL/dq . dq/dz . dz/dtheta_n`` for every beam ``n``."""
    N = codebook.num_beams
    dq_dz = grad_power_wrt_z(z)
    d_theta = np.zeros(codebook.phases.shape)
    for n in range(N):
        if dl_dq[n] == 0.0:
            continue
        dz_dtheta = grad_z_wrt_theta(codebook.phases[n], h, n, N)
        d_theta[n] = dl_dq @ dq_dz @ dz_dtheta
    return d_theta


def backprop_supervised(
    codebook: PhaseCodebook, h: np.ndarray, target_p: float, batch_size: int = 1
) -> GradientSet:
    """Gradient of one sample's share of the batch MSE.

    The max-pool passes the whole error to the winning beam (lowest index on
    ties); ``dL/dg = 2 (g - p) / B``.
    """
    h = np.asarray(h, dtype=complex)
    z = combine(codebook, h)
    q = np.abs(z) ** 2
    dg_dq = argmax_onehot(q)
    g = float(q @ dg_dq)
    dl_dq = 2.0 * (g - target_p) / batch_size * dg_dq
    return GradientSet(_chain(codebook, z, h, dl_dq))


def backprop_selfsup(
    codebook: PhaseCodebook,
    z_observed: np.ndarray,
    h_estimate: np.ndarray,
    c: np.ndarray,
    batch_size: int = 1,
) -> GradientSet:
    """Cross-entropy gradient from a sweep register and a channel estimate.

    ``dL/ds = -c/s`` and the softmax Jacobian ``diag(s) - s s^T`` collapse to
    ``dL/dq = s - c``. The estimate stands in for the channel in ``dz/dtheta``.
    """
    z = np.asarray(z_observed, dtype=complex)
    s = softmax_probs(np.abs(z) ** 2)
    dl_dq = (s - np.asarray(c, dtype=float)) / batch_size
    return GradientSet(_chain(codebook, z, np.asarray(h_estimate, dtype=complex), dl_dq))


def _theta_grad(W: np.ndarray, Z: np.ndarray, H: np.ndarray, dl_dq: np.ndarray) -> np.ndarray:
    # dq_bn/dtheta_nm = 2 Im(conj(z_bn) conj(w_mn) h_bm)
    A = (dl_dq * Z.conj()).T @ H  # (N, M)
    return 2.0 * np.imag(W.T.conj() * A)


def supervised_batch_gradient(codebook: PhaseCodebook, H: np.ndarray, targets: np.ndarray):
    """Batch MSE, its gradient over the phases, and the per-sample best gains."""
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    B = H.shape[0]
    W = phases_to_weights(codebook)
    Z = H @ W.conj()
    Q = np.abs(Z) ** 2
    win = np.argmax(Q, axis=1)
    g = Q[np.arange(B), win]
    dl_dq = np.zeros_like(Q)
    dl_dq[np.arange(B), win] = 2.0 * (g - targets) / B
    return mse_loss(g, targets), GradientSet(_theta_grad(W, Z, H, dl_dq)), g


def selfsup_batch_gradient(codebook: PhaseCodebook, Z: np.ndarray, H_est: np.ndarray):
    """Batch cross-entropy, its gradient, and the self-generated labels."""
    Z = np.atleast_2d(np.asarray(Z, dtype=complex))
    B = Z.shape[0]
    Q = np.abs(Z) ** 2
    shifted = Q - Q.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    S = np.exp(shifted - log_norm)
    labels = np.argmax(Q, axis=1)
    C = np.zeros_like(Q)
    C[np.arange(B), labels] = 1.0
    log_s = np.maximum((shifted - log_norm)[np.arange(B), labels], np.log(LOG_CLAMP))
    loss = float(-np.mean(log_s))
    W = phases_to_weights(codebook)
    grad = _theta_grad(W, Z, np.atleast_2d(H_est), (S - C) / B)
    return loss, GradientSet(grad), labels


class UpdateRule(str, Enum):
    SGD = "sgd"
    ADAM = "adam"


@dataclass(frozen=True)
class OptimizerState:
    rule: UpdateRule = UpdateRule.ADAM
    learning_rate: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    first_moment: np.ndarray | None = field(default=None, repr=False)
    second_moment: np.ndarray | None = field(default=None, repr=False)
    step: int = 0

    def __post_init__(self):
        object.__setattr__(self, "rule", UpdateRule(self.rule))
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")


def apply_update(
    codebook: PhaseCodebook, grads: GradientSet, state: OptimizerState
) -> tuple[PhaseCodebook, OptimizerState]:
    """One descent step; returns the new codebook and optimizer state."""
    g = grads.d_theta
    if g.shape != codebook.phases.shape:
        raise ValueError(f"gradient shape {g.shape} != codebook shape {codebook.phases.shape}")
    if state.rule is UpdateRule.SGD:
        return PhaseCodebook(codebook.phases - state.learning_rate * g), replace(state, step=state.step + 1)

    m = np.zeros_like(g) if state.first_moment is None else state.first_moment
    v = np.zeros_like(g) if state.second_moment is None else state.second_moment
    t = state.step + 1
    m = state.beta1 * m + (1 - state.beta1) * g
    v = state.beta2 * v + (1 - state.beta2) * g**2
    m_hat = m / (1 - state.beta1**t)
    v_hat = v / (1 - state.beta2**t)
    phases = codebook.phases - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return PhaseCodebook(phases), replace(state, first_moment=m, second_moment=v, step=t)
