"""Streaming parser for IEEE-1364 Value Change Dump (VCD) text.

The parser reads the declaration header, then yields one ``TimestepBatch``
per ``#<time>`` section without ever buffering more than the current line,
so memory stays proportional to the number of declared signals.

Four-state values are packed into two integer bitplanes per signal:

* ``value`` bit i: the 0/1 level of bit i (Z is stored as 1, X as 0)
* ``xz`` bit i: set when bit i is X or Z

With that encoding Hamming distance and weight reduce to XOR/AND plus
``int.bit_count()``, which is what the extraction hot path needs.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path

log = logging.getLogger(__name__)

# identifier codes are strings over printable ASCII '!'..'~' (33..126),
# decoded as bijective base-94 integers for dense O(1) lookup
_ID_FIRST = 33
_ID_BASE = 94

# matched against the last hierarchical name component, case-insensitively
DEFAULT_CLOCK_PATTERN = r"(?:^|_)(clk|clock)(?:_|\d|$)"

_HEADER_SKIP = frozenset({"$date", "$version", "$comment"})
_BODY_DIRECTIVES = frozenset({"$dumpvars", "$dumpall", "$dumpon", "$dumpoff"})

# scalar value character -> (value bit, xz bit)
_SCALAR_BITS = {
    "0": (0, 0), "1": (1, 0),
    "x": (0, 1), "X": (0, 1),
    "z": (1, 1), "Z": (1, 1),
}


class VcdError(Exception):
    """Base class for VCD parsing failures."""


class VcdParseError(VcdError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class TruncatedHeaderError(VcdError):
    """The stream ended before ``$enddefinitions`` was seen."""


def decode_id(code: str) -> int:
    """Decode an identifier code to its bijective base-94 integer (>= 1)."""
    n = 0
    for ch in code:
        o = ord(ch)
        if not _ID_FIRST <= o <= 126:
            raise ValueError(f"invalid identifier character {ch!r}")
        n = n * _ID_BASE + (o - _ID_FIRST + 1)
    if n == 0:
        raise ValueError("empty identifier code")
    return n


def encode_id(n: int) -> str:
    """Inverse of :func:`decode_id`; produces the code for integer n >= 1."""
    if n < 1:
        raise ValueError("identifier integers start at 1")
    out = []
    while n:
        n, rem = divmod(n - 1, _ID_BASE)
        out.append(chr(_ID_FIRST + rem))
    return "".join(reversed(out))


@dataclass(frozen=True)
class SignalDecl:
    """One declared signal; duplicate id codes alias onto a single entry."""

    index: int
    id_code: str
    width: int
    hier_name: str
    kind: str  # wire | reg | other
    aliases: tuple[str, ...] = ()

    @property
    def names(self) -> tuple[str, ...]:
        return (self.hier_name, *self.aliases)


@dataclass(frozen=True)
class VcdHeader:
    signals: tuple[SignalDecl, ...]
    timescale: str | None
    clock_candidates: tuple[int, ...]  # indices of width-1 clock-named signals


@dataclass
class TimestepBatch:
    """All value changes of one ``#<time>`` section.

    ``changes`` holds (signal index, value bits, xz bits) triples, at most
    one per signal (the last write in a section wins).
    """

    time: int
    changes: list[tuple[int, int, int]]


class SignalState:
    """Current 4-state value of every signal, initialized to all-X."""

    def __init__(self, widths):
        self.widths = list(widths)
        self.masks = [(1 << w) - 1 for w in self.widths]
        self.values = [0] * len(self.widths)
        self.xz = list(self.masks)

    def get(self, index):
        return self.values[index], self.xz[index]

    def install(self, index, value, xz):
        """Set a signal's value, returning the previous (value, xz) pair."""
        old = (self.values[index], self.xz[index])
        self.values[index] = value
        self.xz[index] = xz
        return old


def four_state_to_str(value: int, xz: int, width: int) -> str:
    """Render a bitplane pair as a bit string, MSB first (e.g. ``xxz1``)."""
    out = []
    for i in range(width - 1, -1, -1):
        v = (value >> i) & 1
        if (xz >> i) & 1:
            out.append("z" if v else "x")
        else:
            out.append("1" if v else "0")
    return "".join(out)


class VcdParser:
    """Single-pass VCD reader; one consumer per instance.

    ``source`` may be a file path or an open text stream (e.g. stdin).
    """

    def __init__(self, source, *, clock_pattern: str = DEFAULT_CLOCK_PATTERN):
        if isinstance(source, (str, Path)):
            self._stream = open(source, "r", encoding="utf-8", errors="replace")
            self._owns_stream = True
        else:
            self._stream = source
            self._owns_stream = False
        self._clock_re = re.compile(clock_pattern, re.IGNORECASE)
        self._line = 0
        self._tokens = self._token_stream()
        self._header: VcdHeader | None = None
        self._signals: list[SignalDecl] = []
        self._widths: list[int] = []
        self._index_of: dict[int, int] = {}
        self._batches = None
        self.skipped_changes = 0  # real/string value changes are not supported

    # -- lifecycle ---------------------------------------------------------

    def close(self):
        if self._owns_stream:
            self._stream.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _token_stream(self):
        for lineno, line in enumerate(self._stream, start=1):
            self._line = lineno
            for tok in line.split():
                yield tok

    # -- header ------------------------------------------------------------

    def parse_header(self) -> VcdHeader:
        """Consume declarations up to ``$enddefinitions``; idempotent."""
        if self._header is not None:
            return self._header

        tokens = self._tokens
        scope: list[str] = []
        builders: dict[int, dict] = {}  # id int -> {width, kind, names}
        order: list[int] = []
        timescale = None

        def expect_end(cmd):
            for tok in tokens:
                if tok == "$end":
                    return
            raise TruncatedHeaderError(f"{cmd} not terminated by $end")

        done = False
        for tok in tokens:
            if tok in _HEADER_SKIP:
                expect_end(tok)
            elif tok == "$timescale":
                parts = []
                for t in tokens:
                    if t == "$end":
                        break
                    parts.append(t)
                else:
                    raise TruncatedHeaderError("$timescale not terminated by $end")
                timescale = "".join(parts)
            elif tok == "$scope":
                try:
                    next(tokens)  # scope type
                    scope.append(next(tokens))
                except StopIteration:
                    raise TruncatedHeaderError("$scope truncated") from None
                expect_end("$scope")
            elif tok == "$upscope":
                if not scope:
                    raise VcdParseError("$upscope without matching $scope", self._line)
                scope.pop()
                expect_end("$upscope")
            elif tok == "$var":
                self._parse_var(tokens, scope, builders, order)
            elif tok == "$enddefinitions":
                expect_end("$enddefinitions")
                done = True
                break
            else:
                raise VcdParseError(f"unexpected token {tok!r} in declarations", self._line)
        if not done:
            raise TruncatedHeaderError("stream ended before $enddefinitions")

        signals = []
        for index, key in enumerate(order):
            b = builders[key]
            self._index_of[key] = index
            signals.append(SignalDecl(
                index=index,
                id_code=b["code"],
                width=b["width"],
                hier_name=b["names"][0],
                kind=b["kind"],
                aliases=tuple(b["names"][1:]),
            ))
            self._widths.append(b["width"])

        candidates = tuple(
            s.index for s in signals
            if s.width == 1 and any(
                self._clock_re.search(name.rsplit(".", 1)[-1]) for name in s.names
            )
        )
        self._signals = signals
        self._header = VcdHeader(tuple(signals), timescale, candidates)
        return self._header

    def _parse_var(self, tokens, scope, builders, order):
        line = self._line
        try:
            kind_tok = next(tokens)
            width_tok = next(tokens)
            code = next(tokens)
            name = next(tokens)
        except StopIteration:
            raise TruncatedHeaderError("$var truncated") from None
        # optional bit-select token(s) before $end are redundant with width
        for tok in tokens:
            if tok == "$end":
                break
        else:
            raise TruncatedHeaderError("$var not terminated by $end")

        try:
            width = int(width_tok)
        except ValueError:
            raise VcdParseError(f"bad $var width {width_tok!r}", line) from None
        if width < 1:
            raise VcdParseError(f"$var width must be >= 1, got {width}", line)
        try:
            key = decode_id(code)
        except ValueError as exc:
            raise VcdParseError(f"bad identifier code {code!r}: {exc}", line) from None

        kind = kind_tok.lower()
        if kind not in ("wire", "reg"):
            kind = "other"
        hier = ".".join((*scope, name))

        entry = builders.get(key)
        if entry is None:
            builders[key] = {"code": code, "width": width, "kind": kind, "names": [hier]}
            order.append(key)
        else:
            if entry["width"] != width:
                raise VcdParseError(
                    f"identifier {code!r} redeclared with width {width}"
                    f" (previously {entry['width']})", line)
            if hier not in entry["names"]:
                entry["names"].append(hier)

    @property
    def header(self) -> VcdHeader:
        return self.parse_header()

    # -- value-change sections ----------------------------------------------

    def next_timestep(self) -> TimestepBatch | None:
        """Return the next batch of changes, or None at end of stream."""
        if self._batches is None:
            self.parse_header()
            self._batches = self._iter_batches()
        return next(self._batches, None)

    def __iter__(self):
        while (batch := self.next_timestep()) is not None:
            yield batch

    def _lookup(self, code):
        try:
            key = decode_id(code)
        except ValueError:
            raise VcdParseError(f"malformed identifier code {code!r}", self._line) from None
        index = self._index_of.get(key)
        if index is None:
            raise VcdParseError(f"unknown identifier code {code!r}", self._line)
        return index

    def _decode_vector(self, bits, width):
        if not bits:
            raise VcdParseError("empty vector literal", self._line)
        if len(bits) > width:
            raise VcdParseError(
                f"vector literal {len(bits)} bits wide exceeds declared width {width}",
                self._line)
        if not bits.strip("01"):  # pure two-state fast path
            return int(bits, 2), 0
        value = xz = 0
        for ch in bits:
            try:
                vb, xb = _SCALAR_BITS[ch]
            except KeyError:
                raise VcdParseError(f"invalid vector character {ch!r}", self._line) from None
            value = (value << 1) | vb
            xz = (xz << 1) | xb
        pad = width - len(bits)
        if pad:
            top = bits[0]
            if top in "xX":
                xz |= ((1 << pad) - 1) << len(bits)
            elif top in "zZ":
                ext = ((1 << pad) - 1) << len(bits)
                xz |= ext
                value |= ext
        return value, xz

    def _iter_batches(self):
        tokens = self._tokens
        widths = self._widths
        time = None
        changes: dict[int, tuple[int, int]] = {}

        for tok in tokens:
            c0 = tok[0]
            if c0 == "#":
                try:
                    t = int(tok[1:])
                except ValueError:
                    raise VcdParseError(f"bad timestamp {tok!r}", self._line) from None
                if time is None:
                    time = t
                elif t > time:
                    yield TimestepBatch(time, [(i, v, x) for i, (v, x) in changes.items()])
                    changes = {}
                    time = t
                elif t < time:
                    raise VcdParseError(
                        f"non-monotonic timestamp #{t} after #{time}", self._line)
                # t == time: continuation of the current section
            elif c0 in "01xXzZ":
                if len(tok) < 2:
                    raise VcdParseError(f"scalar change {tok!r} missing identifier", self._line)
                index = self._lookup(tok[1:])
                width = widths[index]
                vb, xb = _SCALAR_BITS[c0]
                if width == 1:
                    changes[index] = (vb, xb)
                else:
                    changes[index] = self._decode_vector(c0, width)
                if time is None:
                    time = 0
            elif c0 in "bB":
                code = next(tokens, None)
                if code is None:
                    raise VcdParseError("vector change missing identifier", self._line)
                index = self._lookup(code)
                changes[index] = self._decode_vector(tok[1:], widths[index])
                if time is None:
                    time = 0
            elif c0 in "rRsS":
                code = next(tokens, None)
                if code is None:
                    raise VcdParseError("value change missing identifier", self._line)
                self._lookup(code)
                self.skipped_changes += 1
            elif tok == "$end" or tok in _BODY_DIRECTIVES:
                continue
            elif tok == "$comment":
                for t in tokens:
                    if t == "$end":
                        break
            else:
                raise VcdParseError(
                    f"unexpected token {tok!r} in value-change section", self._line)

        if time is not None:
            yield TimestepBatch(time, [(i, v, x) for i, (v, x) in changes.items()])
        if self.skipped_changes:
            log.warning("skipped %d real/string value changes", self.skipped_changes)
