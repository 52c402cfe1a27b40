"""Synthetic leaky AES-128 target.

Runs AES over a plaintext set and emits per-cycle switching-activity
traces in which each state byte leaks once per operation (at
``leak_cycle_offset + byte_index``), on top of seeded Gaussian noise and
Poisson ambient activity. The same execution can be rendered as a VCD file
whose register transitions realize the sample counts as literal bit flips,
so the parser/extractor path can be exercised end to end and must
reproduce the simulated trace matrix exactly.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from satrace import aes

MODE_STRUCTURED = "structured"
MODE_UNIFORM = "uniform_random"

LEAK_HW = "hw_of_sbox_out"
LEAK_HD = "hd_sboxin_to_sboxout"

_SBOX = np.array(aes.SBOX, dtype=np.uint8)
_HW = np.array(aes.HAMMING_WEIGHT, dtype=np.uint8)

_STATE_WIDTH = 128

# id codes used in emitted VCD files
_ID_CLK = "!"
_ID_STATE = '"'
_ID_NOISE = "%"


@dataclass(frozen=True)
class PlaintextSpec:
    mode: str = MODE_STRUCTURED
    count: int = 3000
    seed: int = 0
    counter_range: tuple[int, int] = (0, 3000)

    def __post_init__(self):
        if self.mode not in (MODE_STRUCTURED, MODE_UNIFORM):
            raise ValueError(f"unknown plaintext mode {self.mode!r}")
        if self.count < 1:
            raise ValueError("count must be >= 1")
        start, stop = self.counter_range
        if self.mode == MODE_STRUCTURED:
            if not (0 <= start < stop <= 0x10000):
                raise ValueError(f"counter_range {self.counter_range} must lie in [0, 65536]")
            if self.count > stop - start:
                raise ValueError(
                    f"count {self.count} exceeds the counter range span {stop - start}")


@dataclass(frozen=True)
class LeakConfig:
    leak_model: str = LEAK_HW
    cycles_per_op: int = 150
    leak_cycle_offset: int = 10
    noise_sigma: float = 0.0
    ambient_activity: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.leak_model not in (LEAK_HW, LEAK_HD):
            raise ValueError(f"unknown leak model {self.leak_model!r}")
        if self.leak_cycle_offset < 0:
            raise ValueError("leak_cycle_offset must be >= 0")
        if self.cycles_per_op < 16 + self.leak_cycle_offset:
            raise ValueError(
                f"cycles_per_op must be >= 16 + leak_cycle_offset"
                f" ({16 + self.leak_cycle_offset}), got {self.cycles_per_op}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.ambient_activity < 0:
            raise ValueError("ambient_activity must be >= 0")


@dataclass(frozen=True)
class SimulationResult:
    traces: np.ndarray       # (n, cycles_per_op) u64 activity counts
    ciphertexts: np.ndarray  # (n, 16) u8


def structured_plaintext(counter: int) -> bytes:
    """128-bit block of eight identical big-endian 16-bit counter copies."""
    if not 0 <= counter <= 0xFFFF:
        raise ValueError(f"counter {counter} does not fit 16 bits")
    return bytes((counter >> 8, counter & 0xFF)) * 8


def gen_plaintexts(spec: PlaintextSpec) -> np.ndarray:
    """Generate the plaintext matrix (count x 16, u8) for a spec."""
    if spec.mode == MODE_UNIFORM:
        rng = np.random.default_rng(spec.seed)
        return rng.integers(0, 256, size=(spec.count, 16), dtype=np.uint8)
    start = spec.counter_range[0]
    counters = np.arange(start, start + spec.count, dtype=np.uint16)
    out = np.empty((spec.count, 16), dtype=np.uint8)
    out[:, 0::2] = (counters >> 8).astype(np.uint8)[:, None]
    out[:, 1::2] = (counters & 0xFF).astype(np.uint8)[:, None]
    return out


def leak_values(plaintexts, key: bytes, model: str = LEAK_HW) -> np.ndarray:
    """Ground-truth leak per (trace, byte index): the modeled S-box leakage."""
    pts = np.asarray(plaintexts, dtype=np.uint8)
    key_arr = np.frombuffer(bytes(key), dtype=np.uint8)
    sbox_in = pts ^ key_arr[None, :]
    sbox_out = _SBOX[sbox_in]
    if model == LEAK_HW:
        return _HW[sbox_out]
    if model == LEAK_HD:
        return _HW[sbox_in ^ sbox_out]
    raise ValueError(f"unknown leak model {model!r}")


def _check_inputs(plaintexts, key):
    pts = np.asarray(plaintexts, dtype=np.uint8)
    if pts.ndim != 2 or pts.shape[1] != 16:
        raise ValueError(f"plaintexts must have shape (n, 16), got {pts.shape}")
    if len(key) != 16:
        raise ValueError(f"key must be 16 bytes, got {len(key)}")
    return pts


def _sample_matrix(pts: np.ndarray, key: bytes, cfg: LeakConfig) -> np.ndarray:
    """The exact per-cycle activity counts: shared by simulate and write_vcd."""
    n = pts.shape[0]
    cycles = cfg.cycles_per_op
    offset = cfg.leak_cycle_offset
    leaks = leak_values(pts, key, cfg.leak_model)
    noisy = cfg.ambient_activity > 0 or cfg.noise_sigma > 0
    traces = np.zeros((n, cycles), dtype=np.uint64)
    for j in range(n):
        row = np.zeros(cycles, dtype=np.float64)
        if noisy:
            # one RNG stream per row so rows can be produced independently
            rng = np.random.default_rng((cfg.seed, j))
            if cfg.ambient_activity > 0:
                row += rng.poisson(cfg.ambient_activity, cycles)
            if cfg.noise_sigma > 0:
                row += rng.normal(0.0, cfg.noise_sigma, cycles)
        row[offset:offset + 16] += leaks[j]
        traces[j] = np.maximum(np.rint(row), 0.0).astype(np.uint64)
    return traces


def simulate(plaintexts, key: bytes, cfg: LeakConfig) -> SimulationResult:
    """Run the leaky target over a plaintext set; deterministic per seed."""
    pts = _check_inputs(plaintexts, key)
    traces = _sample_matrix(pts, key, cfg)
    cts = aes.encrypt_blocks((bytes(row) for row in pts), bytes(key))
    if cts:
        ciphertexts = np.frombuffer(b"".join(cts), dtype=np.uint8).reshape(-1, 16).copy()
    else:
        ciphertexts = np.empty((0, 16), dtype=np.uint8)
    return SimulationResult(traces=traces, ciphertexts=ciphertexts)


def _flip_mask(nbits: int, width: int, offset: int) -> tuple[int, int]:
    """A mask with ``nbits`` set, rotated to ``offset``; returns next offset."""
    mask = ((1 << nbits) - 1) << offset
    mask = (mask | (mask >> width)) & ((1 << width) - 1)
    return mask, (offset + nbits) % width


def write_vcd(plaintexts, key: bytes, cfg: LeakConfig, path) -> None:
    """Render the simulated execution as a VCD file.

    One clock (rising edges at odd times), a 128-bit state register and a
    wide noise register. Each cycle's sample count is realized as that many
    actual bit flips (the state register takes up to 128, the noise
    register any excess), so extraction with the hd metric reproduces
    :func:`simulate` exactly for the same seed.
    """
    pts = _check_inputs(plaintexts, key)
    flat = _sample_matrix(pts, key, cfg).reshape(-1)
    total = int(flat.size)
    if total:
        overflow = int(max(0, int(flat.max()) - _STATE_WIDTH))
        noise_width = max(64, overflow)

    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="ascii") as fh:
            w = fh.write
            w("$version satrace synthetic target $end\n")
            w("$timescale 1ns $end\n")
            w("$scope module top $end\n")
            w(f"$var wire 1 {_ID_CLK} clk $end\n")
            if total:
                w(f"$var reg {_STATE_WIDTH} {_ID_STATE} state $end\n")
                w(f"$var reg {noise_width} {_ID_NOISE} noise $end\n")
            w("$upscope $end\n")
            w("$enddefinitions $end\n")
            w(f"#0\n$dumpvars\n0{_ID_CLK}\n")
            if total:
                w(f"b0 {_ID_STATE}\nb0 {_ID_NOISE}\n")
            w("$end\n")
            w(f"#1\n1{_ID_CLK}\n")
            state_val = noise_val = 0
            state_off = noise_off = 0
            for m in range(total):
                count = int(flat[m])
                t = 2 * m + 2
                parts = [f"#{t}\n0{_ID_CLK}\n"]
                state_flips = min(count, _STATE_WIDTH)
                if state_flips:
                    mask, state_off = _flip_mask(state_flips, _STATE_WIDTH, state_off)
                    state_val ^= mask
                    parts.append(f"b{state_val:b} {_ID_STATE}\n")
                if count > state_flips:
                    mask, noise_off = _flip_mask(count - state_flips, noise_width, noise_off)
                    noise_val ^= mask
                    parts.append(f"b{noise_val:b} {_ID_NOISE}\n")
                parts.append(f"#{t + 1}\n1{_ID_CLK}\n")
                w("".join(parts))
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise
