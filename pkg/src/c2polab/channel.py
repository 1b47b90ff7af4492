"""Rayleigh channels, symbol vectors and norm-tuned training sets.

Three training-set recipes are supported:

* ``DF``  raw i.i.d. CN(0, 1) channel draws;
* ``NT1`` every draw uniformly rescaled so its spectral norm equals ``N``;
* ``NT2`` largest singular value set to ``N`` and the remaining ones
  rescaled so the Frobenius norm is unchanged, redrawing whenever the
  second singular value ends up above ``N``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArgumentError, GenerationStalledError, PreconditionError
from .numerics import RngStream, as_rng, check_finite, frobenius_norm, spectral_norm, svd

_QAM16_LEVELS = np.array([-3.0, -1.0, 1.0, 3.0]) / np.sqrt(10.0)
_QPSK_LEVELS = np.array([-1.0, 1.0]) / np.sqrt(2.0)


def _grid(levels):
    # index = i_re * len(levels) + i_im
    return (levels[:, None] + 1j * levels[None, :]).ravel()


CONSTELLATIONS = {
    "QPSK": _grid(_QPSK_LEVELS),
    "16QAM": _grid(_QAM16_LEVELS),
}


def constellation(modulation: str) -> np.ndarray:
    """Unit-average-energy constellation in its fixed index order.

    Point ``k`` has real level ``k // m`` and imaginary level ``k % m``
    (levels ascending, ``m`` levels per axis).
    """
    try:
        return CONSTELLATIONS[modulation]
    except KeyError:
        raise ArgumentError(f"unknown modulation {modulation!r}; use one of {sorted(CONSTELLATIONS)}") from None


@dataclass(frozen=True)
class SystemConfig:
    """Downlink scenario: ``users`` single-antenna terminals, ``antennas`` BS antennas.

    ``power`` is the instantaneous transmit power P; the 1-bit per-component
    level (also the clipping bound of the precoder) follows as sqrt(P / 2B).
    """

    users: int = 8
    antennas: int = 128
    power: float = 1.0
    modulation: str = "16QAM"
    t_max: int = 7

    def __post_init__(self):
        if int(self.users) != self.users or self.users < 1:
            raise ArgumentError(f"users must be a positive integer, got {self.users}")
        if int(self.antennas) != self.antennas or self.antennas < 1:
            raise ArgumentError(f"antennas must be a positive integer, got {self.antennas}")
        if self.users > self.antennas:
            raise ArgumentError(f"need users <= antennas, got U={self.users}, B={self.antennas}")
        if not (self.power > 0 and np.isfinite(self.power)):
            raise ArgumentError(f"power must be positive, got {self.power}")
        if int(self.t_max) != self.t_max or self.t_max < 0:
            raise ArgumentError(f"t_max must be a non-negative integer, got {self.t_max}")
        constellation(self.modulation)

    @property
    def level(self) -> float:
        return float(np.sqrt(self.power / (2 * self.antennas)))

    @property
    def constellation(self) -> np.ndarray:
        return constellation(self.modulation)

    def replace(self, **changes) -> "SystemConfig":
        return SystemConfig(**{**asdict(self), **changes})


def draw_rayleigh_channel(cfg: SystemConfig, rng, size=None) -> np.ndarray:
    """U x B channel(s) with i.i.d. CN(0, 1) entries; ``size`` prepends batch axes."""
    shape = () if size is None else tuple(np.atleast_1d(size))
    return as_rng(rng).standard_complex_normal((*shape, cfg.users, cfg.antennas))


def draw_symbol_indices(cfg: SystemConfig, rng, size=None) -> np.ndarray:
    shape = () if size is None else tuple(np.atleast_1d(size))
    return as_rng(rng).generator.integers(0, cfg.constellation.size, size=(*shape, cfg.users))


def draw_symbols(cfg: SystemConfig, rng, size=None) -> np.ndarray:
    """Length-U vector(s) drawn uniformly from the constellation."""
    return cfg.constellation[draw_symbol_indices(cfg, rng, size)]


def scale_to_norm(H_prime: np.ndarray, N: float) -> np.ndarray:
    """Rescale the singular values uniformly so the spectral norm becomes ``N``.

    Computed through the SVD, ``U (gamma Lambda') V^H`` with
    ``gamma = N / lambda'_1``; identical to ``(N / ||H'||_2) H'``.
    """
    H_prime = check_finite(np.asarray(H_prime, dtype=np.complex128), "channel")
    if not (N > 0 and np.isfinite(N)):
        raise ArgumentError(f"target norm must be positive, got {N}")
    dec = svd(H_prime)
    top = dec.singular_values[..., :1]
    if np.any(top == 0):
        raise ArgumentError("cannot scale a zero matrix to a target norm")
    return dec.reconstruct(dec.singular_values * (N / top))


def reshape_spectrum(H_prime: np.ndarray, N: float):
    """Set the largest singular value to ``N`` while keeping the Frobenius norm.

    The remaining singular values are scaled by a common factor ``gamma``
    chosen so that the sum of squared singular values is unchanged.

    Returns:
        The reshaped matrix, or ``None`` when the draw must be rejected:
        the rescaled second singular value exceeds ``N`` (so ``N`` would no
        longer be the spectral norm), or the input has rank one.

    Raises:
        PreconditionError: if ``||H'||_F^2 <= N^2``, where no real
            ``gamma`` exists.
    """
    H_prime = check_finite(np.asarray(H_prime, dtype=np.complex128), "channel")
    if H_prime.ndim != 2:
        raise ArgumentError(f"expected a single matrix, got shape {H_prime.shape}")
    if not (N > 0 and np.isfinite(N)):
        raise ArgumentError(f"target norm must be positive, got {N}")
    dec = svd(H_prime)
    lam = dec.singular_values
    energy = float(np.sum(lam**2))
    if energy <= N**2:
        raise PreconditionError(f"squared Frobenius norm {energy:.6g} must exceed N^2 = {N**2:.6g}")
    tail = float(np.sum(lam[1:] ** 2))
    if tail == 0.0:
        return None
    gamma = np.sqrt((energy - N**2) / tail)
    if gamma * lam[1] > N:
        return None
    new = gamma * lam
    new[0] = N
    return dec.reconstruct(new)


@dataclass(frozen=True)
class Recipe:
    """How training channels are produced: ``DF``, ``NT1`` or ``NT2``."""

    kind: str = "DF"
    target_norm: float | None = None

    def __post_init__(self):
        if self.kind not in ("DF", "NT1", "NT2"):
            raise ArgumentError(f"unknown recipe kind {self.kind!r}")
        if self.kind == "DF" and self.target_norm is not None:
            raise ArgumentError("DF recipe takes no target norm")
        if self.kind != "DF" and not (self.target_norm is not None and self.target_norm > 0):
            raise ArgumentError(f"{self.kind} recipe needs a positive target norm")

    def __str__(self):
        return self.kind if self.kind == "DF" else f"{self.kind}({self.target_norm:g})"

    @classmethod
    def parse(cls, text: str) -> "Recipe":
        """Parse ``"DF"``, ``"NT1(14.5)"`` or ``"NT2:14.5"``."""
        t = text.strip().upper().replace(":", "(").rstrip(")")
        kind, _, norm = t.partition("(")
        return cls(kind, float(norm) if norm else None)


@dataclass
class TrainingSet:
    """K training pairs stacked as ``channels`` (K, U, B) and ``symbols`` (K, U)."""

    cfg: SystemConfig
    recipe: Recipe
    channels: np.ndarray
    symbols: np.ndarray
    seed: int
    stream_id: int = 0
    attempts: int = 0
    # Frobenius norm of each pre-transform draw (equals the output's for DF/NT2).
    source_fro_norms: np.ndarray = field(default=None, repr=False)

    def __len__(self):
        return self.channels.shape[0]

    @property
    def target_norm(self):
        return self.recipe.target_norm

    @property
    def rejection_rate(self) -> float:
        return 1.0 - len(self) / self.attempts if self.attempts else 0.0

    def samples(self):
        return list(zip(self.channels, self.symbols))


# Stream layout below the caller's RngStream: (kind, sample index[, attempt]).
_CHANNEL_STREAM = 0
_SYMBOL_STREAM = 1


def generate_training_set(
    cfg: SystemConfig,
    recipe: Recipe,
    K: int,
    rng,
    attempt_budget: int = 100_000,
    max_rejection_rate: float = 0.999,
) -> TrainingSet:
    """Generate ``K`` (channel, symbol-vector) pairs following ``recipe``.

    Sample ``k`` draws from substreams indexed by ``k`` only, so the set does
    not depend on evaluation order. For NT2 the ``a``-th attempt of sample
    ``k`` uses substream ``(channel, k, a)``.

    Raises:
        GenerationStalledError: NT2 generation has used ``attempt_budget``
            attempts with a rejection rate above ``max_rejection_rate``.
    """
    if int(K) != K or K < 1:
        raise ArgumentError(f"K must be a positive integer, got {K}")
    rng = as_rng(rng)
    symbols = np.stack([draw_symbols(cfg, rng.substream(_SYMBOL_STREAM, k)) for k in range(K)])

    if recipe.kind in ("DF", "NT1"):
        raw = np.stack([draw_rayleigh_channel(cfg, rng.substream(_CHANNEL_STREAM, k)) for k in range(K)])
        fro = frobenius_norm(raw)
        channels = raw if recipe.kind == "DF" else scale_to_norm(raw, recipe.target_norm)
        attempts = K
    else:
        N = recipe.target_norm
        channels = np.empty((K, cfg.users, cfg.antennas), dtype=np.complex128)
        fro = np.empty(K)
        attempts = 0
        for k in range(K):
            a = 0
            while True:
                raw = draw_rayleigh_channel(cfg, rng.substream(_CHANNEL_STREAM, k, a))
                a += 1
                attempts += 1
                try:
                    out = reshape_spectrum(raw, N)
                except PreconditionError:
                    out = None
                if out is not None:
                    break
                if attempts >= attempt_budget and (attempts - k) / attempts > max_rejection_rate:
                    raise GenerationStalledError(N, attempts, k)
            channels[k] = out
            fro[k] = frobenius_norm(raw)
    return TrainingSet(cfg, recipe, channels, symbols, seed=rng.seed, stream_id=rng.stream_id,
                       attempts=attempts, source_fro_norms=fro)


FORMAT_NAME = "c2polab-trainingset"
FORMAT_VERSION = 1


def save_training_set(ts: TrainingSet, path) -> None:
    """Write ``ts`` as an ``.npz`` archive.

    Layout (version 1): ``header`` holds a JSON document with ``format``,
    ``version``, ``cfg``, ``recipe``, ``target_norm``, ``seed``,
    ``stream_id``, ``K`` and ``attempts``; ``H_real``/``H_imag`` are
    (K, U, B) float64, ``s_real``/``s_imag`` are (K, U) float64 and
    ``source_fro_norms`` is (K,) float64. Values round-trip bit-exactly.
    """
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "cfg": asdict(ts.cfg),
        "recipe": ts.recipe.kind,
        "target_norm": ts.recipe.target_norm,
        "seed": ts.seed,
        "stream_id": ts.stream_id,
        "K": len(ts),
        "attempts": ts.attempts,
    }
    with open(path, "wb") as fh:
        np.savez(
            fh,
            header=np.array(json.dumps(header, sort_keys=True)),
            H_real=np.ascontiguousarray(ts.channels.real),
            H_imag=np.ascontiguousarray(ts.channels.imag),
            s_real=np.ascontiguousarray(ts.symbols.real),
            s_imag=np.ascontiguousarray(ts.symbols.imag),
            source_fro_norms=np.asarray(ts.source_fro_norms, dtype=np.float64),
        )


def load_training_set(path) -> TrainingSet:
    path = Path(path)
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("format") != FORMAT_NAME:
            raise ArgumentError(f"{path} is not a training-set file")
        if header.get("version") != FORMAT_VERSION:
            raise ArgumentError(f"{path}: unsupported training-set version {header.get('version')}")
        H = data["H_real"] + 1j * data["H_imag"]
        s = data["s_real"] + 1j * data["s_imag"]
        fro = data["source_fro_norms"]
    cfg = SystemConfig(**header["cfg"])
    return TrainingSet(
        cfg,
        Recipe(header["recipe"], header["target_norm"]),
        H,
        s,
        seed=header["seed"],
        stream_id=header["stream_id"],
        attempts=header["attempts"],
        source_fro_norms=fro,
    )


def norm_summary(ts: TrainingSet) -> dict:
    norms = spectral_norm(ts.channels)
    return {
        "K": len(ts),
        "recipe": str(ts.recipe),
        "norm_min": float(np.min(norms)),
        "norm_median": float(np.median(norms)),
        "norm_max": float(np.max(norms)),
        "rejection_rate": ts.rejection_rate,
    }
