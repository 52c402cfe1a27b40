"""Correlation power analysis against the AES-128 first-round S-box.

For one target byte, a hypothesis matrix models the leakage of every key
guess; Pearson correlation of each guess column against each trace sample
column yields a 256 x window surface. Guesses are ranked by their maximum
absolute correlation over time.

The engine makes a single pass over the trace matrix, accumulating
anchored sums (values are offset by the first row before accumulation,
which removes mean-induced cancellation) with Kahan compensation.
Zero-variance columns are flagged and scored 0 rather than producing NaNs:
counter-pattern plaintexts routinely create (near-)constant hypothesis
columns, and a silent NaN would corrupt the ranking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from satrace import aes

MODEL_HW = "hw_of_sbox_out"
MODEL_HD = "hd_sboxin_to_sboxout"
MODEL_BIT = "bit_of_sbox_out"

_SBOX = np.array(aes.SBOX, dtype=np.uint8)
_HW = np.array(aes.HAMMING_WEIGHT, dtype=np.uint8)

_CHUNK = 512

# default significance level for per-cycle winners, in units of the null
# correlation scale 1/sqrt(n); 5.5 keeps noise cells out even when maxing
# over a few hundred thousand surface cells
_PEAK_SIGMAS = 5.5


def build_hypotheses(plaintexts, byte_index: int, model: str = MODEL_HW,
                     bit: int = 0) -> np.ndarray:
    """Model leakage for every key guess: an (n, 256) float matrix."""
    pts = np.asarray(plaintexts, dtype=np.uint8)
    if pts.ndim != 2 or pts.shape[1] != 16:
        raise ValueError(f"plaintexts must have shape (n, 16), got {pts.shape}")
    if not 0 <= byte_index < 16:
        raise ValueError(f"byte_index must be in 0..15, got {byte_index}")
    sbox_in = pts[:, byte_index, None] ^ np.arange(256, dtype=np.uint8)[None, :]
    sbox_out = _SBOX[sbox_in]
    if model == MODEL_HW:
        values = _HW[sbox_out]
    elif model == MODEL_HD:
        values = _HW[sbox_in ^ sbox_out]
    elif model == MODEL_BIT:
        if not 0 <= bit < 8:
            raise ValueError(f"bit must be in 0..7, got {bit}")
        values = (sbox_out >> bit) & 1
    else:
        raise ValueError(f"unknown model {model!r}")
    return values.astype(np.float64)


def pearson(h, t) -> float | None:
    """Pearson coefficient of two columns, or None when either is constant.

    Single-pass accumulation with exact (fsum) summation, anchored at the
    first element for numerical stability. Requires n >= 2.
    """
    h = np.asarray(h, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if h.ndim != 1 or t.ndim != 1 or h.shape != t.shape:
        raise ValueError(f"columns must be 1-D and equal length, got {h.shape} vs {t.shape}")
    n = h.size
    if n < 2:
        raise ValueError("pearson requires at least 2 samples")
    dh = h - h[0]
    dt = t - t[0]
    sh = math.fsum(dh)
    st = math.fsum(dt)
    shh = math.fsum(dh * dh)
    stt = math.fsum(dt * dt)
    sht = math.fsum(dh * dt)
    var_h = n * shh - sh * sh
    var_t = n * stt - st * st
    if var_h <= 0 or var_t <= 0:
        return None
    rho = (n * sht - sh * st) / math.sqrt(var_h * var_t)
    return min(1.0, max(-1.0, rho))


@dataclass(frozen=True)
class CorrelationSurface:
    rho: np.ndarray        # (256, width) float64; 0.0 where undefined
    undefined: np.ndarray  # (256, width) bool, True for zero-variance cells
    window: tuple[int, int]


def _kahan_add(total, comp, term):
    y = term - comp
    t = total + y
    comp[...] = (t - total) - y
    total[...] = t


def correlate(traces, hypotheses, window: tuple[int, int] | None = None) -> CorrelationSurface:
    """Correlation surface of every guess column against every sample column.

    Reads the trace matrix once, in row chunks, with Kahan-compensated
    accumulators; the reduction order is fixed, so results are bit-identical
    across runs.
    """
    traces = np.asarray(traces)
    hyp = np.asarray(hypotheses, dtype=np.float64)
    if traces.ndim != 2 or hyp.ndim != 2:
        raise ValueError("traces and hypotheses must be 2-D")
    n, n_samples = traces.shape
    if hyp.shape != (n, 256):
        raise ValueError(
            f"hypothesis shape {hyp.shape} does not match ({n}, 256)")
    if n < 2:
        raise ValueError("correlation requires at least 2 traces")
    if window is None:
        window = (0, n_samples)
    t0, t1 = window
    if not 0 <= t0 < t1 <= n_samples:
        raise ValueError(f"window {window} outside trace length {n_samples}")
    width = t1 - t0

    anchor_t = traces[0, t0:t1].astype(np.float64)
    anchor_h = hyp[0]

    sum_t = np.zeros(width)
    sum_tt = np.zeros(width)
    sum_h = np.zeros(256)
    sum_hh = np.zeros(256)
    sum_ht = np.zeros((256, width))
    comps = [np.zeros_like(a) for a in (sum_t, sum_tt, sum_h, sum_hh, sum_ht)]

    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        tc = traces[lo:hi, t0:t1].astype(np.float64) - anchor_t
        hc = hyp[lo:hi] - anchor_h
        _kahan_add(sum_t, comps[0], tc.sum(axis=0))
        _kahan_add(sum_tt, comps[1], (tc * tc).sum(axis=0))
        _kahan_add(sum_h, comps[2], hc.sum(axis=0))
        _kahan_add(sum_hh, comps[3], (hc * hc).sum(axis=0))
        _kahan_add(sum_ht, comps[4], hc.T @ tc)

    var_h = np.maximum(n * sum_hh - sum_h ** 2, 0.0)
    var_t = np.maximum(n * sum_tt - sum_t ** 2, 0.0)
    undefined = (var_h <= 0)[:, None] | (var_t <= 0)[None, :]
    num = n * sum_ht - np.outer(sum_h, sum_t)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = num / np.sqrt(np.outer(var_h, var_t))
    rho[undefined] = 0.0
    np.clip(rho, -1.0, 1.0, out=rho)
    return CorrelationSurface(rho=rho, undefined=undefined, window=(t0, t1))


@dataclass(frozen=True)
class Peak:
    """A per-cycle winner: the guess with the largest |rho| at one sample."""

    sample: int
    guess: int
    rho: float


@dataclass(frozen=True)
class CpaByteResult:
    byte_index: int
    best_guess: int
    best_sample: int
    best_rho: float
    scores: np.ndarray    # (256,) max-over-time |rho| per guess
    ranking: np.ndarray   # (256,) guesses sorted by descending score
    max_curve: np.ndarray  # (width,) max-over-guesses |rho| per sample
    window: tuple[int, int] = (0, 0)
    peaks: tuple[Peak, ...] = ()
    true_byte: int | None = None
    true_rank: int | None = None

    @property
    def recovered_values(self) -> tuple[int, ...]:
        """Distinct guesses winning a significant per-cycle peak."""
        return tuple(sorted({p.guess for p in self.peaks}))


def rank_and_report(surface: CorrelationSurface, *, byte_index: int = 0,
                    true_byte: int | None = None,
                    peak_threshold: float | None = None) -> CpaByteResult:
    """Rank guesses by max-over-time |rho|; ties break toward smaller guess."""
    magnitude = np.abs(surface.rho)
    scores = magnitude.max(axis=1)
    ranking = np.lexsort((np.arange(256), -scores))
    best_guess = int(ranking[0])
    local = int(np.argmax(magnitude[best_guess]))
    max_curve = magnitude.max(axis=0)

    peaks = []
    if peak_threshold is not None:
        for t in np.nonzero(max_curve >= peak_threshold)[0]:
            g = int(np.argmax(magnitude[:, t]))
            peaks.append(Peak(sample=surface.window[0] + int(t), guess=g,
                              rho=float(surface.rho[g, t])))

    true_rank = None
    if true_byte is not None:
        true_rank = int(np.nonzero(ranking == true_byte)[0][0])

    return CpaByteResult(
        byte_index=byte_index,
        best_guess=best_guess,
        best_sample=surface.window[0] + local,
        best_rho=float(surface.rho[best_guess, local]),
        scores=scores,
        ranking=ranking,
        max_curve=max_curve,
        window=surface.window,
        peaks=tuple(peaks),
        true_byte=true_byte,
        true_rank=true_rank,
    )


def default_peak_threshold(n_traces: int) -> float:
    """Significance level for per-cycle winners given the trace count."""
    return _PEAK_SIGMAS / math.sqrt(n_traces)


def attack(traces, plaintexts, byte_indices=None, *, model: str = MODEL_HW,
           bit: int = 0, window: tuple[int, int] | None = None,
           known_key: bytes | None = None,
           peak_threshold: float | None = None) -> list[CpaByteResult]:
    """Run CPA for the requested byte indices and return ranked results."""
    traces = np.asarray(traces)
    if byte_indices is None:
        byte_indices = range(16)
    if peak_threshold is None:
        peak_threshold = default_peak_threshold(traces.shape[0])
    results = []
    for i in byte_indices:
        hyp = build_hypotheses(plaintexts, i, model, bit)
        surface = correlate(traces, hyp, window)
        results.append(rank_and_report(
            surface,
            byte_index=i,
            true_byte=known_key[i] if known_key is not None else None,
            peak_threshold=peak_threshold,
        ))
    return results
