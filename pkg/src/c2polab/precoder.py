"""C2PO 1-bit precoder with per-iteration step sizes and clipping scales.

All functions broadcast over leading batch axes: ``H`` is ``(..., U, B)``,
``s`` is ``(..., U)`` and ``x`` is ``(..., B)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import SystemConfig
from .errors import ArgumentError
from .numerics import spectral_norm

# Repo defaults for untrained runs: step size 1/N_ref^2 sits inside the
# H-based convergence region for typical 8x128 Rayleigh channels.
BASELINE_NORM = 14.5
BASELINE_RHO = 1.05


def _matvec(M, v):
    return np.matmul(M, v[..., None])[..., 0]


def _sq_norm(v, axis=-1):
    return np.sum(v.real**2 + v.imag**2, axis=axis)


def _check_symbols(s):
    if np.any(_sq_norm(s) == 0):
        raise ArgumentError("symbol vector must be nonzero")


def build_A(H: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Project the rows of ``H`` onto the orthogonal complement of ``s``.

    Returns ``(I - s s^H / ||s||^2) H`` computed as ``H - s (s^H H) / ||s||^2``.
    """
    H = np.asarray(H)
    s = np.asarray(s)
    if H.shape[-2] != s.shape[-1]:
        raise ArgumentError(f"H has {H.shape[-2]} rows but s has length {s.shape[-1]}")
    _check_symbols(s)
    sH = np.matmul(np.conj(s)[..., None, :], H)  # (..., 1, B)
    return H - s[..., :, None] * (sH / _sq_norm(s)[..., None, None])


def optimal_alpha(H, s, x):
    """Least-squares precoding factor ``s^H H x / ||s||^2``."""
    s = np.asarray(s)
    _check_symbols(s)
    Hx = _matvec(np.asarray(H), np.asarray(x))
    return np.sum(np.conj(s) * Hx, axis=-1) / _sq_norm(s)


def prox_clip(x: np.ndarray, rho, xi: float) -> np.ndarray:
    """Scale by ``rho`` and clip real and imaginary parts to ``[-xi, xi]``."""
    x = np.asarray(x)
    rho = np.asarray(rho)[..., None] if np.ndim(rho) else rho
    return np.clip(rho * x.real, -xi, xi) + 1j * np.clip(rho * x.imag, -xi, xi)


def gram_apply(A, x):
    """``A^H A x`` as two rectangular products."""
    Ax = np.matmul(A, x[..., None])
    # conj(A^T conj(v)) avoids materializing A^H
    return np.conj(np.matmul(np.swapaxes(A, -1, -2), np.conj(Ax)))[..., 0]


def adjoint_apply(M, v):
    """``M^H v`` without forming ``M^H``."""
    return np.conj(np.matmul(np.swapaxes(M, -1, -2), np.conj(v)[..., None]))[..., 0]


def c2po_step(x, A, tau, rho, xi):
    """One gradient step on ``||Ax||^2 / 2`` followed by the clipping prox."""
    tau = np.asarray(tau)[..., None] if np.ndim(tau) else tau
    return prox_clip(x - tau * gram_apply(A, x), rho, xi)


def quantize(x, level: float) -> np.ndarray:
    """Map each entry to the nearest corner ``level * (+-1 +- 1j)``; sign(0) = +1."""
    x = np.asarray(x)
    re = np.where(x.real >= 0, level, -level)
    im = np.where(x.imag >= 0, level, -level)
    return re + 1j * im


def delta_from(tau, rho):
    """Regularization weight implied by ``rho = 1 / (1 - tau * delta)``."""
    return (1.0 - 1.0 / np.asarray(rho, dtype=float)) / np.asarray(tau, dtype=float)


def objective_value(A, x, delta, xi=None):
    """``||Ax||^2 / 2 - delta ||x||^2 / 2``.

    When ``xi`` is given, points outside the box ``|Re|, |Im| <= xi`` get
    ``+inf`` (the box indicator is active) instead of raising.
    """
    x = np.asarray(x)
    val = 0.5 * _sq_norm(_matvec(A, x)) - 0.5 * np.asarray(delta) * _sq_norm(x)
    if xi is not None:
        slack = xi * (1 + 1e-12)
        outside = np.any((np.abs(x.real) > slack) | (np.abs(x.imag) > slack), axis=-1)
        val = np.where(outside, np.inf, val)
    return val if np.ndim(val) else float(val)


def convergence_margin(tau: float, delta: float, M, mode: str = "A"):
    """Check the step-size condition ``tau < ||M||_2^{-2}`` and ``tau * delta < 1``.

    With ``mode="A"`` ``M`` is the projected matrix A; with ``mode="H"`` it is
    the channel itself, which gives the stricter sufficient condition since
    ``||A||_2 <= ||H||_2``.

    Returns:
        ``(satisfied, margin)`` where ``margin = 1 - tau * ||M||_2^2``.
    """
    if mode not in ("A", "H"):
        raise ArgumentError(f"mode must be 'A' or 'H', got {mode!r}")
    if not tau > 0:
        raise ArgumentError(f"tau must be positive, got {tau}")
    margin = 1.0 - tau * spectral_norm(M) ** 2
    return bool(margin > 0 and tau * delta < 1), float(margin)


@dataclass
class PrecoderParams:
    """Per-iteration step sizes ``tau[t]`` and clipping scales ``rho[t]``.

    ``rho < 1`` is representable (training does not clamp it) but shows up
    in :meth:`violations`.
    """

    tau: np.ndarray
    rho: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tau = np.array(self.tau, dtype=float).reshape(-1)
        self.rho = np.array(self.rho, dtype=float).reshape(-1)
        if self.tau.shape != self.rho.shape:
            raise ArgumentError(f"tau and rho lengths differ: {self.tau.size} vs {self.rho.size}")
        if not (np.all(np.isfinite(self.tau)) and np.all(np.isfinite(self.rho))):
            raise ArgumentError("parameters must be finite")
        if np.any(self.tau <= 0):
            raise ArgumentError("all tau must be positive")

    @property
    def t_max(self) -> int:
        return self.tau.size

    @property
    def delta(self) -> np.ndarray:
        return delta_from(self.tau, self.rho)

    def violations(self) -> list[str]:
        return [f"rho[{t}] = {r:.6g} < 1" for t, r in enumerate(self.rho) if r < 1]

    @classmethod
    def baseline(cls, t_max: int, norm_ref: float = BASELINE_NORM, rho: float = BASELINE_RHO):
        return cls(np.full(t_max, 1.0 / norm_ref**2), np.full(t_max, rho), {"source": "baseline"})

    def copy(self) -> "PrecoderParams":
        return PrecoderParams(self.tau.copy(), self.rho.copy(), dict(self.metadata))


@dataclass
class C2poTrace:
    """Iterates ``x[0] .. x[t_max]`` (stacked on axis 0) and their objective values.

    The objective of iterate ``t >= 1`` uses the regularization weight implied
    by the step that produced it; ``x[0]`` uses the first step's.
    """

    iterates: np.ndarray
    objectives: np.ndarray


def c2po_precode(H, s, params: PrecoderParams, cfg: SystemConfig, keep_trace: bool = False):
    """Run C2PO from ``x0 = H^H s`` and quantize to the 1-bit alphabet.

    Returns:
        ``x_q`` or, with ``keep_trace``, the tuple ``(x_q, trace)``.
    """
    H = np.asarray(H, dtype=np.complex128)
    s = np.asarray(s, dtype=np.complex128)
    if params.t_max != cfg.t_max:
        raise ArgumentError(f"params have t_max={params.t_max}, config expects {cfg.t_max}")
    if H.shape[-2:] != (cfg.users, cfg.antennas) or s.shape[-1] != cfg.users:
        raise ArgumentError(
            f"shape mismatch: H {H.shape[-2:]}, s ({s.shape[-1]},), "
            f"config U={cfg.users}, B={cfg.antennas}"
        )
    xi = cfg.level
    A = build_A(H, s)
    x = adjoint_apply(H, s)
    iterates = [x]
    for tau, rho in zip(params.tau, params.rho):
        x = c2po_step(x, A, tau, rho, xi)
        if keep_trace:
            iterates.append(x)
    x_q = quantize(x, xi)
    if not keep_trace:
        return x_q
    deltas = params.delta
    objectives = [objective_value(A, iterates[0], deltas[0] if deltas.size else 0.0, xi)]
    objectives += [objective_value(A, xt, d, xi) for xt, d in zip(iterates[1:], deltas)]
    return x_q, C2poTrace(np.stack(iterates), np.stack(objectives))


PARAMS_FORMAT = "c2polab-params"
PARAMS_VERSION = 1


def save_params(params: PrecoderParams, path) -> None:
    """Write params as JSON; floats are emitted with 17 significant digits."""
    doc = {
        "format": PARAMS_FORMAT,
        "version": PARAMS_VERSION,
        "t_max": params.t_max,
        "tau": [float(format(v, ".17g")) for v in params.tau],
        "rho": [float(format(v, ".17g")) for v in params.rho],
        "metadata": params.metadata,
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_params(path) -> PrecoderParams:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != PARAMS_FORMAT:
        raise ArgumentError(f"{path} is not a precoder-params file")
    if doc.get("version") != PARAMS_VERSION:
        raise ArgumentError(f"{path}: unsupported params version {doc.get('version')}")
    params = PrecoderParams(doc["tau"], doc["rho"], doc.get("metadata", {}))
    if params.t_max != doc["t_max"]:
        raise ArgumentError(f"{path}: t_max field disagrees with schedule length")
    return params
