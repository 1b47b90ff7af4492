"""Learning per-iteration C2PO parameters through the unrolled iterations.

The forward pass mirrors :func:`c2po_precode` but records what the reverse
pass needs. Gradients are propagated by hand. A complex gradient ``g`` of
the real loss means ``dC/dRe + 1j * dC/dIm``; with that convention a linear
map ``y = M x`` pulls back as ``g_x = M^H g_y``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .channel import SystemConfig, TrainingSet
from .errors import ArgumentError, NumericError, TrainingDivergedError
from .precoder import PrecoderParams, adjoint_apply, build_A, gram_apply, prox_clip, quantize

log = logging.getLogger(__name__)

BYPASS = "bypass"
STRAIGHT_THROUGH = "straight-through"


def _matvec(M, v):
    return np.matmul(M, v[..., None])[..., 0]


def _sq_norm(v):
    return np.sum(v.real**2 + v.imag**2, axis=-1)


def receiver_scale(H, x, s):
    """Least-squares receive scaling ``(Hx)^H s / ||Hx||^2``.

    Raises:
        NumericError: if ``Hx = 0``.
    """
    y = _matvec(np.asarray(H), np.asarray(x))
    return _beta(y, np.asarray(s))


def _beta(y, s):
    q = _sq_norm(y)
    if np.any(q == 0):
        raise NumericError("degenerate receive scaling: Hx = 0")
    return np.sum(np.conj(y) * s, axis=-1) / q


@dataclass
class UnfoldedTape:
    """Forward-pass record for a batch of samples (leading axis K)."""

    H: np.ndarray
    s: np.ndarray
    A: np.ndarray
    tau: np.ndarray
    rho: np.ndarray
    mode: str
    pre_prox: list = field(default_factory=list)  # z_t = x_{t-1} - tau_t G x_{t-1}
    gram: list = field(default_factory=list)  # G x_{t-1}
    post_prox: list = field(default_factory=list)
    clip_re: list = field(default_factory=list)  # True where the real part was clipped
    clip_im: list = field(default_factory=list)
    x_final: np.ndarray = None
    x_sent: np.ndarray = None
    beta: np.ndarray = None
    s_hat: np.ndarray = None

    @property
    def depth(self) -> int:
        return len(self.pre_prox)


def forward(H, s, params: PrecoderParams, cfg: SystemConfig, mode: str = STRAIGHT_THROUGH):
    """Per-sample loss ``||s - s_hat||^2`` and the tape for :func:`backward`.

    ``H`` may be ``(U, B)`` or a batch ``(K, U, B)`` (with ``s`` matching).
    In bypass mode the final iterate is transmitted unquantized.
    """
    if mode not in (BYPASS, STRAIGHT_THROUGH):
        raise ArgumentError(f"unknown quantizer mode {mode!r}")
    if params.t_max != cfg.t_max:
        raise ArgumentError(f"params have t_max={params.t_max}, config expects {cfg.t_max}")
    H = np.asarray(H, dtype=np.complex128)
    s = np.asarray(s, dtype=np.complex128)
    xi = cfg.level
    A = build_A(H, s)
    tape = UnfoldedTape(H, s, A, params.tau.copy(), params.rho.copy(), mode)
    x = adjoint_apply(H, s)
    for tau, rho in zip(params.tau, params.rho):
        w = gram_apply(A, x)
        z = x - tau * w
        x = prox_clip(z, rho, xi)
        tape.gram.append(w)
        tape.pre_prox.append(z)
        tape.post_prox.append(x)
        tape.clip_re.append(np.abs(rho * z.real) >= xi)
        tape.clip_im.append(np.abs(rho * z.imag) >= xi)
    tape.x_final = x
    tape.x_sent = quantize(x, xi) if mode == STRAIGHT_THROUGH else x
    y = _matvec(H, tape.x_sent)
    tape.beta = _beta(y, s)
    tape.s_hat = tape.beta[..., None] * y
    loss = _sq_norm(s - tape.s_hat)
    return loss, tape


def backward(tape: UnfoldedTape, params: PrecoderParams, cfg: SystemConfig):
    """Exact gradients of each sample's loss w.r.t. ``tau[t]`` and ``rho[t]``.

    Clipped components pass no gradient; pass-through components carry the
    factor ``rho``. The quantizer, when present, is treated as the identity.

    Returns:
        ``(d_tau, d_rho)`` shaped like the batch plus a trailing ``t_max`` axis.
    """
    if not (np.array_equal(tape.tau, params.tau) and np.array_equal(tape.rho, params.rho)):
        raise ArgumentError("tape was recorded with different parameters")
    if tape.depth != cfg.t_max:
        raise ArgumentError(f"tape depth {tape.depth} does not match t_max={cfg.t_max}")
    batch = tape.s.shape[:-1]
    d_tau = np.zeros(batch + (cfg.t_max,))
    d_rho = np.zeros(batch + (cfg.t_max,))

    # C = ||s - beta y||^2 with beta = y^H s / ||y||^2  =>  g_y = -2 conj(beta) (s - s_hat)
    g = -2.0 * np.conj(tape.beta)[..., None] * (tape.s - tape.s_hat)
    g = adjoint_apply(tape.H, g)
    for t in reversed(range(cfg.t_max)):
        z = tape.pre_prox[t]
        pass_re = ~tape.clip_re[t]
        pass_im = ~tape.clip_im[t]
        g_re = np.where(pass_re, g.real, 0.0)
        g_im = np.where(pass_im, g.imag, 0.0)
        d_rho[..., t] = np.sum(g_re * z.real + g_im * z.imag, axis=-1)
        g_z = params.rho[t] * (g_re + 1j * g_im)
        d_tau[..., t] = -np.sum((np.conj(g_z) * tape.gram[t]).real, axis=-1)
        g = g_z - params.tau[t] * gram_apply(tape.A, g_z)
    return d_tau, d_rho


def batch_loss_and_grad(H, s, params, cfg, mode=STRAIGHT_THROUGH):
    """Mean loss over the batch and the gradient of that mean."""
    loss, tape = forward(H, s, params, cfg, mode)
    d_tau, d_rho = backward(tape, params, cfg)
    if loss.ndim == 0:
        return float(loss), d_tau, d_rho
    return float(np.mean(loss)), d_tau.mean(axis=0), d_rho.mean(axis=0)


@dataclass(frozen=True)
class TrainHyper:
    """Full-batch training settings.

    With ``log_tau`` (the default) the optimizer works on ``log(tau)``, so
    ``lr_tau`` is a relative step and step sizes stay positive; otherwise it
    moves ``tau`` directly. The rate at epoch ``e`` is ``lr * lr_decay**e``.
    Training stops once the mean cost over the last ``window`` epochs changes
    by less than ``tol`` relative to the window before.
    """

    lr_tau: float = 0.2
    lr_rho: float = 0.05
    lr_decay: float = 0.99
    max_epochs: int = 1000
    tol: float = 1e-4
    window: int = 20
    quantizer: str = STRAIGHT_THROUGH
    optimizer: str = "adam"
    log_tau: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr_tau < 0 or self.lr_rho < 0:
            raise ArgumentError("learning rates must be non-negative")
        if not 0 < self.lr_decay <= 1:
            raise ArgumentError("lr_decay must lie in (0, 1]")
        if self.window < 2:
            raise ArgumentError("stability window must be at least 2")
        if self.max_epochs < 1:
            raise ArgumentError("max_epochs must be positive")
        if self.quantizer not in (BYPASS, STRAIGHT_THROUGH):
            raise ArgumentError(f"unknown quantizer mode {self.quantizer!r}")
        if self.optimizer not in ("adam", "gd"):
            raise ArgumentError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainResult:
    params: PrecoderParams
    history: list
    converged: bool
    epochs: int


def _stable(history, window, tol):
    if len(history) < 2 * window:
        return False
    prev = np.mean(history[-2 * window:-window])
    cur = np.mean(history[-window:])
    return abs(prev - cur) <= tol * abs(prev)


def train(ts: TrainingSet, cfg: SystemConfig, hyper: TrainHyper, init: PrecoderParams,
          rng=None) -> TrainResult:
    """Minimize the mean loss over the whole training set.

    The loop records the cost before every update; it ends when the mean cost
    of the last ``window`` epochs moves by less than ``tol`` (relative) from
    the window before, or after ``max_epochs`` updates. ``rng`` is accepted
    for interface symmetry; full-batch descent uses no randomness.

    Raises:
        TrainingDivergedError: the cost or parameters became non-finite, or
            a step size left the positive axis. Carries the last good params.
    """
    if len(ts) == 0:
        raise ArgumentError("empty training set")
    if init.t_max != cfg.t_max:
        raise ArgumentError(f"init has t_max={init.t_max}, config expects {cfg.t_max}")
    H, s = ts.channels, ts.symbols
    T = cfg.t_max
    tau, rho = init.tau.copy(), init.rho.copy()
    lr = np.concatenate([np.full(T, hyper.lr_tau), np.full(T, hyper.lr_rho)])
    m = np.zeros(2 * T)
    v = np.zeros(2 * T)
    history = []
    meta = dict(init.metadata)
    meta.update(recipe=str(ts.recipe), target_norm=ts.target_norm, train_seed=ts.seed,
                train_stream=ts.stream_id, K=len(ts), quantizer=hyper.quantizer,
                optimizer=hyper.optimizer)
    last_good = init.copy()
    converged = False
    for epoch in range(hyper.max_epochs):
        params = PrecoderParams(tau, rho, meta)
        cost, d_tau, d_rho = batch_loss_and_grad(H, s, params, cfg, hyper.quantizer)
        if not np.isfinite(cost):
            raise TrainingDivergedError(last_good, epoch)
        last_good = params.copy()
        history.append(cost)
        if _stable(history, hyper.window, hyper.tol):
            converged = True
            break
        if hyper.log_tau:
            d_tau = d_tau * tau
        grad = np.concatenate([d_tau, d_rho])
        step = lr * hyper.lr_decay**epoch
        if hyper.optimizer == "adam":
            m = hyper.beta1 * m + (1 - hyper.beta1) * grad
            v = hyper.beta2 * v + (1 - hyper.beta2) * grad**2
            m_hat = m / (1 - hyper.beta1 ** (epoch + 1))
            v_hat = v / (1 - hyper.beta2 ** (epoch + 1))
            delta = step * m_hat / (np.sqrt(v_hat) + hyper.eps)
        else:
            delta = step * grad
        tau = tau * np.exp(-delta[:T]) if hyper.log_tau else tau - delta[:T]
        rho = rho - delta[T:]
        if not (np.all(np.isfinite(tau)) and np.all(np.isfinite(rho))) or np.any(tau <= 0):
            raise TrainingDivergedError(last_good, epoch + 1)

    final = last_good
    final.metadata = dict(meta, epochs=len(history), converged=converged,
                          final_cost=history[-1])
    for msg in final.violations():
        log.warning("learned parameter outside the nominal range: %s", msg)
    if final.violations():
        final.metadata["violations"] = final.violations()
    return TrainResult(final, history, converged, len(history))
