"""Monte-Carlo link simulation: error floor, SER curves and norm sweeps.

Trials run in fixed-size chunks. Chunk ``c`` draws its channels and symbols
from substream ``(CHANNEL, c)`` of the caller's stream and its noise for SNR
point ``i`` from ``(NOISE, i, c)``; results are therefore independent of the
worker count, and every SNR point of a sweep sees the same channels.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial

import numpy as np

from .channel import Recipe, SystemConfig, constellation, draw_rayleigh_channel, draw_symbol_indices, generate_training_set
from .errors import ArgumentError, C2poLabError
from .numerics import RngStream, as_rng
from .precoder import PrecoderParams, c2po_precode
from .trainer import TrainHyper, _beta, train

CHANNEL = 0
NOISE = 1
TRAINING = 2
DEFAULT_CHUNK = 2000


def demodulate(y_hat: np.ndarray, modulation: str) -> np.ndarray:
    """Nearest-point decisions; ties go to the lowest constellation index."""
    points = constellation(modulation)
    y_hat = np.asarray(y_hat)
    d = np.abs(y_hat[..., None] - points) ** 2
    return np.argmin(d, axis=-1)


def awgn(y: np.ndarray, noise_variance: float, rng) -> np.ndarray:
    """Add i.i.d. CN(0, noise_variance) noise."""
    if noise_variance < 0:
        raise ArgumentError(f"noise variance must be non-negative, got {noise_variance}")
    y = np.asarray(y)
    if noise_variance == 0:
        return y.copy()
    return y + np.sqrt(noise_variance) * as_rng(rng).standard_complex_normal(y.shape)


def wilson_interval(errors: int, total: int, z: float = 1.959963984540054):
    """Wilson score interval for a binomial proportion (95% by default)."""
    if total == 0:
        return 0.0, 1.0
    p = errors / total
    denom = 1 + z**2 / total
    center = (p + z**2 / (2 * total)) / denom
    spread = z * math.sqrt(p * (1 - p) / total + z**2 / (4 * total**2)) / denom
    return max(0.0, min(center - spread, p)), min(1.0, max(center + spread, p))


@dataclass(frozen=True)
class LinkStats:
    symbols_sent: int
    symbol_errors: int
    trials: int = 0

    def __post_init__(self):
        if not 0 <= self.symbol_errors <= self.symbols_sent:
            raise ArgumentError(f"invalid counts: {self.symbol_errors} errors of {self.symbols_sent}")

    @property
    def ser(self) -> float:
        return self.symbol_errors / self.symbols_sent if self.symbols_sent else 0.0

    @property
    def interval(self):
        return wilson_interval(self.symbol_errors, self.symbols_sent)

    def __add__(self, other):
        return LinkStats(self.symbols_sent + other.symbols_sent,
                         self.symbol_errors + other.symbol_errors,
                         self.trials + other.trials)


def _c2po_precoder(params, H, s, cfg):
    return c2po_precode(H, s, params, cfg)


def _c2po(params):
    return partial(_c2po_precoder, params)


def _chunk_errors(task):
    """Error counts of one chunk for each noise variance (``0`` = noiseless)."""
    precoder, cfg, seed, stream_id, path, chunk, n, noise_vars = task
    base = RngStream(seed, stream_id, path)
    crng = base.substream(CHANNEL, chunk)
    H = draw_rayleigh_channel(cfg, crng, size=n)
    idx = draw_symbol_indices(cfg, crng, size=n)
    s = cfg.constellation[idx]
    x = precoder(H, s, cfg)
    y = np.matmul(H, x[..., None])[..., 0]
    beta = _beta(y, s)[..., None]
    counts = []
    for i, nv in enumerate(noise_vars):
        r = awgn(y, nv, base.substream(NOISE, i, chunk))
        counts.append(int(np.count_nonzero(demodulate(beta * r, cfg.modulation) != idx)))
    return counts


def _run(precoder, cfg, rng, trials, noise_vars, chunk_size, workers, min_errors=None):
    """Sum per-chunk counts in chunk order; optionally stop early.

    With ``min_errors`` the run ends after the first chunk at which the
    (first) error count reaches ``min_errors``, so the trial count is a
    function of the seed only.
    """
    if trials < 1:
        raise ArgumentError("need at least one trial")
    rng = as_rng(rng)
    n_chunks = -(-trials // chunk_size)
    sizes = [min(chunk_size, trials - c * chunk_size) for c in range(n_chunks)]
    tasks = [(precoder, cfg, rng.seed, rng.stream_id, rng.path, c, sizes[c], noise_vars)
             for c in range(n_chunks)]
    totals = np.zeros(len(noise_vars), dtype=np.int64)
    done = 0
    step = max(1, workers)
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        for start in range(0, n_chunks, step):
            batch = tasks[start:start + step]
            results = list(pool.map(_chunk_errors, batch)) if pool else [_chunk_errors(t) for t in batch]
            for t, counts in zip(batch, results):
                totals += counts
                done += t[6]
                if min_errors is not None and totals[0] >= min_errors:
                    return totals, done
    finally:
        if pool:
            pool.shutdown()
    return totals, done


def error_floor(params: PrecoderParams, cfg: SystemConfig, trials: int, rng,
                min_errors: int | None = 100, chunk_size: int = DEFAULT_CHUNK,
                workers: int = 1, precoder=None) -> LinkStats:
    """Noiseless symbol-error rate of C2PO with ``params`` on fresh Rayleigh channels.

    Runs until ``min_errors`` errors are seen (checked per chunk) or
    ``trials`` trials are spent. ``precoder(H, s, cfg) -> x`` replaces C2PO
    when given (used for harness checks).
    """
    precoder = precoder or _c2po(params)
    totals, done = _run(precoder, cfg, rng, trials, (0.0,), chunk_size, workers, min_errors)
    return LinkStats(done * cfg.users, int(totals[0]), done)


@dataclass
class SweepResult:
    axis_name: str
    axis: list
    stats: list
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.axis) != len(self.stats):
            raise ArgumentError("one stats record per axis value required")
        if any(b <= a for a, b in zip(self.axis, self.axis[1:])):
            raise ArgumentError("sweep axis must be strictly increasing")

    def rows(self):
        for value, st in zip(self.axis, self.stats):
            lo, hi = st.interval
            yield value, st.trials, st.symbols_sent, st.symbol_errors, st.ser, lo, hi


TABLE_VERSION = 1
TABLE_COLUMNS = ("axis", "trials", "symbols_sent", "symbol_errors", "ser", "ci_low", "ci_high")


def format_table(result: SweepResult) -> str:
    """Comma-separated table with ``#`` header lines.

    Header: ``# c2polab-table v1``, ``# axis: <name>``, ``# meta: <json>``;
    then the column row ``TABLE_COLUMNS`` with ``axis`` renamed to the axis
    name, then one row per axis value.
    """
    lines = [
        f"# c2polab-table v{TABLE_VERSION}",
        f"# axis: {result.axis_name}",
        f"# meta: {json.dumps(result.metadata, sort_keys=True, default=str)}",
        ",".join((result.axis_name,) + TABLE_COLUMNS[1:]),
    ]
    for value, trials, sent, errs, ser, lo, hi in result.rows():
        lines.append(f"{value!r},{trials},{sent},{errs},{ser:.17g},{lo:.17g},{hi:.17g}")
    return "\n".join(lines) + "\n"


def parse_table(text: str) -> SweepResult:
    meta, axis_name, rows = {}, None, []
    header_seen = False
    for line in text.splitlines():
        if line.startswith("# axis:"):
            axis_name = line.split(":", 1)[1].strip()
        elif line.startswith("# meta:"):
            meta = json.loads(line.split(":", 1)[1])
        elif line.startswith("#") or not line.strip():
            continue
        elif not header_seen:
            header_seen = True
        else:
            rows.append(line.split(","))
    axis = [float(r[0]) for r in rows]
    stats = [LinkStats(int(r[2]), int(r[3]), int(r[1])) for r in rows]
    return SweepResult(axis_name, axis, stats, meta)


def noise_variance_for(snr_db: float, cfg: SystemConfig) -> float:
    """Per-entry noise variance at normalized transmit power ``snr_db``."""
    return cfg.power * 10.0 ** (-snr_db / 10.0)


def simulate_ser(params: PrecoderParams, cfg: SystemConfig, snr_db_list, trials_per_point: int,
                 rng, chunk_size: int = DEFAULT_CHUNK, workers: int = 1, precoder=None) -> SweepResult:
    """SER at each SNR point; all points share the same channels and symbols.

    The receiver scales with the noiseless least-squares factor, then
    demodulates. An SNR of ``inf`` gives the noiseless case.
    """
    snr = [float(v) for v in snr_db_list]
    if not snr:
        raise ArgumentError("empty SNR list")
    order = np.argsort(snr)
    snr = [snr[i] for i in order]
    noise_vars = tuple(noise_variance_for(v, cfg) for v in snr)
    precoder = precoder or _c2po(params)
    totals, done = _run(precoder, cfg, rng, trials_per_point, noise_vars, chunk_size, workers)
    rng = as_rng(rng)
    stats = [LinkStats(done * cfg.users, int(c), done) for c in totals]
    meta = {"kind": "ser", "cfg": asdict(cfg), "seed": rng.seed, "stream_id": rng.stream_id,
            "trials_per_point": trials_per_point, "chunk_size": chunk_size,
            "params": _params_meta(params)}
    return SweepResult("snr_db", snr, stats, meta)


def _params_meta(params):
    if params is None:
        return None
    return {"tau": params.tau.tolist(), "rho": params.rho.tolist(), "metadata": params.metadata}


def norm_sweep(cfg: SystemConfig, norms, recipe_kind: str, K: int, hyper: TrainHyper, trials: int,
               rng, init: PrecoderParams | None = None, min_errors: int | None = 100,
               chunk_size: int = DEFAULT_CHUNK, workers: int = 1, return_params: bool = False):
    """Error floor of parameters trained on ``recipe_kind(N)`` for each ``N``.

    Every ``N`` reuses the same raw training draws and the same test
    channels, so differences between points come from the target norm alone.
    """
    norms = sorted(float(n) for n in norms)
    if not norms:
        raise ArgumentError("empty norm list")
    if recipe_kind not in ("NT1", "NT2"):
        raise ArgumentError(f"norm sweep needs NT1 or NT2, got {recipe_kind!r}")
    rng = as_rng(rng)
    init = init or PrecoderParams.baseline(cfg.t_max)
    stats, learned = [], []
    for N in norms:
        try:
            ts = generate_training_set(cfg, Recipe(recipe_kind, N), K, rng.substream(TRAINING))
            res = train(ts, cfg, hyper, init)
            st = error_floor(res.params, cfg, trials, rng.substream(CHANNEL), min_errors,
                             chunk_size, workers)
        except C2poLabError as exc:
            raise _annotate(exc, N)
        stats.append(st)
        learned.append(res.params)
    meta = {"kind": "norm-sweep", "recipe": recipe_kind, "K": K, "cfg": asdict(cfg),
            "hyper": asdict(hyper), "seed": rng.seed, "stream_id": rng.stream_id,
            "trials": trials, "min_errors": min_errors,
            "params": [_params_meta(p) for p in learned]}
    result = SweepResult("target_norm", norms, stats, meta)
    return (result, learned) if return_params else result


def _annotate(exc, N):
    exc.args = (f"[N={N:g}] {exc.args[0] if exc.args else ''}",) + exc.args[1:]
    exc.target_norm = N
    return exc
