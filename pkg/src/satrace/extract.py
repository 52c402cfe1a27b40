"""Fold streaming VCD value changes into per-clock-cycle switching activity.

A cycle is delimited by the configured clock edge. Activity on the edge
timestep belongs to the cycle being closed, so sample ``k`` covers
everything after edge ``k`` up to and including edge ``k+1``. Activity
before the first edge is discarded. The selected clock signal itself is
never counted: it is the timebase, not a measured net.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fnmatch import fnmatchcase
from pathlib import Path

import numpy as np

from satrace.vcd import SignalState, VcdHeader, VcdParser

log = logging.getLogger(__name__)

XZ_ZERO_FLIP = "count_as_zero_flip"
XZ_COUNT_FLIP = "count_as_flip"

_EDGES = {"rising": ((0, 0), (1, 0)), "falling": ((1, 0), (0, 0))}

# effectively "to end of stream"; real cycle counts are nowhere near this
UNBOUNDED = 1 << 62


class ExtractionError(ValueError):
    """Raised for unusable clock selectors, windows, or signal references."""


@dataclass(frozen=True)
class PowerConstants:
    """Load capacitance (F), supply voltage (V) and clock frequency (Hz)."""

    c_load: float
    v_dd: float
    freq: float

    def __post_init__(self):
        for name in ("c_load", "v_dd", "freq"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass
class CycleActivity:
    """Per-cycle totals: bit flips (hd) and set bits at cycle end (hw)."""

    cycle_index: int = 0
    hd_total: int = 0
    hw_total: int = 0


@dataclass(frozen=True)
class ExtractionConfig:
    clock: str                      # hierarchical name, id code, or glob
    edge: str = "rising"
    window: tuple[int, int] = (0, 10000)
    metric: str = "hd"
    include: tuple[str, ...] = ()   # hier-name globs; empty means all
    exclude: tuple[str, ...] = ()
    xz_policy: str = XZ_ZERO_FLIP

    def __post_init__(self):
        if self.edge not in _EDGES:
            raise ValueError(f"edge must be rising or falling, got {self.edge!r}")
        if self.metric not in ("hd", "hw"):
            raise ValueError(f"metric must be hd or hw, got {self.metric!r}")
        if self.xz_policy not in (XZ_ZERO_FLIP, XZ_COUNT_FLIP):
            raise ValueError(f"unknown xz_policy {self.xz_policy!r}")
        start, end = self.window
        if start < 0 or start >= end:
            raise ValueError(f"window must satisfy 0 <= start < end, got {self.window}")


def scale_to_power(activity: CycleActivity, constants: PowerConstants) -> float:
    """Dynamic power in watts for one cycle: flips * C * V^2 * f."""
    return activity.hd_total * constants.c_load * constants.v_dd ** 2 * constants.freq


def hamming_distance(old_value, old_xz, new_value, new_xz, mask, policy=XZ_ZERO_FLIP):
    """Bit flips between two 4-state values under the given X/Z policy.

    ``count_as_zero_flip`` counts only transitions between two known bits;
    ``count_as_flip`` counts any bit whose 4-state symbol changed.
    """
    if policy == XZ_ZERO_FLIP:
        diff = (old_value ^ new_value) & ~(old_xz | new_xz) & mask
    else:
        diff = ((old_value ^ new_value) | (old_xz ^ new_xz)) & mask
    return diff.bit_count()


def hamming_weight(value, xz, mask):
    """Set bits of a 4-state value; X and Z bits contribute 0."""
    return (value & ~xz & mask).bit_count()


def resolve_clock(header: VcdHeader, selector: str) -> int:
    """Resolve a clock selector to exactly one width-1 signal index."""
    signals = header.signals
    matches = [s for s in signals if s.id_code == selector]
    if not matches:
        matches = [s for s in signals if selector in s.names]
    if not matches:
        matches = [s for s in signals
                   if any(fnmatchcase(n, selector) for n in s.names)]
    if not matches:
        raise ExtractionError(f"no signal matches clock selector {selector!r}")
    if len(matches) > 1:
        names = ", ".join(s.hier_name for s in matches)
        raise ExtractionError(
            f"clock selector {selector!r} is ambiguous; matches: {names}")
    decl = matches[0]
    if decl.width != 1:
        raise ExtractionError(
            f"clock signal {decl.hier_name!r} has width {decl.width}, must be 1")
    return decl.index


def _measured_mask(header: VcdHeader, config: ExtractionConfig, clock_index: int):
    mask = []
    for s in header.signals:
        ok = not config.include or any(
            fnmatchcase(n, pat) for n in s.names for pat in config.include)
        if ok and config.exclude and any(
                fnmatchcase(n, pat) for n in s.names for pat in config.exclude):
            ok = False
        mask.append(ok and s.index != clock_index)
    return mask


class CycleFolder:
    """Accumulates TimestepBatches into a window-clipped activity trace."""

    def __init__(self, header: VcdHeader, config: ExtractionConfig):
        self.config = config
        self.clock_index = resolve_clock(header, config.clock)
        self.state = SignalState(s.width for s in header.signals)
        self._measured = _measured_mask(header, config, self.clock_index)
        self._edge_from, self._edge_to = _EDGES[config.edge]
        self._zero_flip = config.xz_policy == XZ_ZERO_FLIP
        self._hd = 0
        self._hw = 0   # running set-bit total over measured signals
        self.edges_seen = 0
        self.samples: list[int] = []
        self.done = False

    @property
    def cycle_activity(self) -> CycleActivity:
        """Totals accumulated so far for the cycle currently open."""
        return CycleActivity(max(self.edges_seen - 1, 0), self._hd, self._hw)

    def feed(self, batch) -> None:
        if self.done:
            return
        state = self.state
        masks = state.masks
        measured = self._measured
        zero_flip = self._zero_flip
        clock = self.clock_index
        hd = self._hd
        hw = self._hw
        edge_fired = False

        for index, value, xz in batch.changes:
            old_value, old_xz = state.install(index, value, xz)
            if index == clock:
                if (old_value, old_xz) == self._edge_from and \
                        (value, xz) == self._edge_to:
                    edge_fired = True
                continue
            if not measured[index]:
                continue
            mask = masks[index]
            hw += (value & ~xz & mask).bit_count() - \
                (old_value & ~old_xz & mask).bit_count()
            if zero_flip:
                diff = (old_value ^ value) & ~(old_xz | xz) & mask
            else:
                diff = ((old_value ^ value) | (old_xz ^ xz)) & mask
            hd += diff.bit_count()

        self._hd = hd
        self._hw = hw
        if edge_fired:
            self._close_cycle()

    def _close_cycle(self):
        start, end = self.config.window
        if self.edges_seen > 0:
            cycle = self.edges_seen - 1
            if start <= cycle < end:
                self.samples.append(self._hd if self.config.metric == "hd" else self._hw)
            elif cycle >= end:
                self.done = True
        self.edges_seen += 1
        self._hd = 0

    def finish(self) -> np.ndarray:
        if self.edges_seen == 0:
            raise ExtractionError("no clock edges found for the selected clock")
        if not self.samples:
            log.warning(
                "window [%d, %d) collected no samples (%d complete cycles)",
                *self.config.window, max(self.edges_seen - 1, 0))
        return np.asarray(self.samples, dtype=np.uint64)


def extract_trace(source, config: ExtractionConfig) -> np.ndarray:
    """Stream one VCD and return its per-cycle activity trace (u64 counts).

    ``source`` may be a path, an open text stream, or a ``VcdParser``.
    """
    if isinstance(source, VcdParser):
        return _extract(source, config)
    if isinstance(source, (str, Path)):
        with VcdParser(source) as parser:
            return _extract(parser, config)
    return _extract(VcdParser(source), config)


def _extract(parser: VcdParser, config: ExtractionConfig) -> np.ndarray:
    folder = CycleFolder(parser.parse_header(), config)
    while (batch := parser.next_timestep()) is not None:
        folder.feed(batch)
        if folder.done:
            break
    return folder.finish()
