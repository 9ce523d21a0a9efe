"""Binned count tables, masks, read binning, and call outputs.

Count Table format: tab-separated, UTF-8, one window per line, 0-based
half-open coordinates, header ``chrom start end <name1> ... <nameR>``.
Files written by this package may start with one ``#`` metadata line,
which the reader skips.
"""

from dataclasses import dataclass
import re

import numpy as np

from .errors import DomainError, TrackFormatError

_INT = re.compile(r"^[0-9]+$")


@dataclass(eq=False)
class CountMatrix:
    """``n`` windows by ``r`` profiles of non-negative integer counts."""

    chroms: np.ndarray
    starts: np.ndarray
    ends: np.ndarray
    counts: np.ndarray
    names: tuple
    window_size: int

    def __post_init__(self):
        self.chroms = np.asarray(self.chroms, dtype=str)
        self.starts = np.asarray(self.starts, dtype=np.int64)
        self.ends = np.asarray(self.ends, dtype=np.int64)
        self.counts = np.asarray(self.counts, dtype=np.int64).reshape(len(self.starts), -1)
        self.names = tuple(self.names)
        if len(self.names) != self.counts.shape[1]:
            raise DomainError("one name per profile column is required")
        if not (len(self.chroms) == len(self.starts) == len(self.ends)):
            raise DomainError("window coordinate arrays differ in length")

    @property
    def n(self):
        return self.counts.shape[0]

    @property
    def r(self):
        return self.counts.shape[1]

    @property
    def blocks(self):
        """``(start, stop)`` index ranges of contiguous windows on one chromosome."""
        if self.n == 0:
            return []
        cut = np.flatnonzero(
            (self.chroms[1:] != self.chroms[:-1]) | (self.starts[1:] != self.ends[:-1])
        ) + 1
        edges = np.concatenate(([0], cut, [self.n]))
        return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]

    def windows(self):
        return list(zip(self.chroms.tolist(), self.starts.tolist(), self.ends.tolist()))

    def select(self, columns):
        """Keep the given profile columns (names or indices), in that order."""
        idx = [self.names.index(c) if isinstance(c, str) else int(c) for c in columns]
        return CountMatrix(
            self.chroms, self.starts, self.ends, self.counts[:, idx],
            [self.names[i] for i in idx], self.window_size,
        )

    def subset(self, keep):
        """Keep the windows where the boolean array ``keep`` is true."""
        keep = np.asarray(keep, dtype=bool)
        return CountMatrix(
            self.chroms[keep], self.starts[keep], self.ends[keep], self.counts[keep],
            self.names, self.window_size,
        )

    def same_windows(self, other):
        """Index of the first window that differs from ``other``, or ``None``."""
        n = min(self.n, other.n)
        diff = (
            (self.chroms[:n] != other.chroms[:n])
            | (self.starts[:n] != other.starts[:n])
            | (self.ends[:n] != other.ends[:n])
        )
        hits = np.flatnonzero(diff)
        if hits.size:
            return int(hits[0])
        if self.n != other.n:
            return n
        return None

    def describe(self, k):
        return f"{self.chroms[k]}:{self.starts[k]}-{self.ends[k]}" if k < self.n else "nothing"


def binning_mismatch(control, profiles):
    """Message naming the first window where two tables disagree, or ``None``."""
    bad = control.same_windows(profiles)
    if bad is None:
        return None
    return (
        f"control and profiles are binned differently at window #{bad + 1}: "
        f"control has {control.describe(bad)}, profiles have {profiles.describe(bad)}"
    )


def _lines(path):
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, raw in enumerate(fh, 1):
            if raw.endswith("\r\n"):
                raise TrackFormatError("CRLF line endings are not allowed", path, lineno)
            yield lineno, raw.rstrip("\n")


def _parse_int(token, what, path, lineno):
    if not _INT.match(token):
        raise TrackFormatError(f"{what} must be a non-negative integer, got {token!r}", path, lineno)
    return int(token)


def read_count_table(path, expected_profiles=None):
    """Parse and validate a Count Table file."""
    header = None
    chroms, starts, ends, rows, linenos = [], [], [], [], []
    finished = set()
    lineno = 0
    for lineno, line in _lines(path):
        if header is None:
            if lineno == 1 and line.startswith("#"):
                continue
            header = line.split("\t")
            if len(header) < 4 or header[:3] != ["chrom", "start", "end"]:
                raise TrackFormatError("header must be 'chrom start end <names...>'", path, lineno)
            continue
        fields = line.split("\t")
        if len(fields) != len(header):
            raise TrackFormatError(
                f"expected {len(header)} columns, found {len(fields)}", path, lineno
            )
        chrom = fields[0]
        if not chrom:
            raise TrackFormatError("empty chromosome name", path, lineno)
        start = _parse_int(fields[1], "start", path, lineno)
        end = _parse_int(fields[2], "end", path, lineno)
        if end <= start:
            raise TrackFormatError("window end must exceed start", path, lineno)
        if chroms and chrom == chroms[-1] and start < ends[-1]:
            raise TrackFormatError("windows are unsorted or overlapping", path, lineno)
        if chroms and chrom != chroms[-1]:
            finished.add(chroms[-1])
            if chrom in finished:
                raise TrackFormatError(f"chromosome {chrom} is not contiguous", path, lineno)
        rows.append([_parse_int(t, "count", path, lineno) for t in fields[3:]])
        chroms.append(chrom)
        starts.append(start)
        ends.append(end)
        linenos.append(lineno)
    if header is None:
        raise TrackFormatError("missing header line", path, lineno or None)
    if not rows:
        raise TrackFormatError("no windows", path, lineno)
    names = header[3:]
    if expected_profiles is not None and len(names) != expected_profiles:
        raise TrackFormatError(f"expected {expected_profiles} profile columns, found {len(names)}", path)
    starts_a, ends_a = np.array(starts), np.array(ends)
    chroms_a = np.array(chroms, dtype=str)
    width = ends_a - starts_a
    window_size = int(width.max())
    last_of_chrom = np.append(chroms_a[1:] != chroms_a[:-1], True)
    bad = np.flatnonzero((width != window_size) & ~last_of_chrom)
    if bad.size:
        raise TrackFormatError(
            f"window width {int(width[bad[0]])} differs from {window_size}", path, linenos[bad[0]]
        )
    return CountMatrix(chroms_a, starts_a, ends_a, np.array(rows, dtype=np.int64), names, window_size)


def _header_line(header):
    return "" if header is None else "# " + header.replace("\n", " ") + "\n"


def write_count_table(counts, path, header=None):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_header_line(header))
        fh.write("\t".join(("chrom", "start", "end") + counts.names) + "\n")
        for chrom, s, e, row in zip(counts.chroms, counts.starts, counts.ends, counts.counts):
            fh.write(f"{chrom}\t{s}\t{e}\t" + "\t".join(map(str, row.tolist())) + "\n")


def read_mask(path):
    """Read a ``chrom start end`` mask; returns a list of intervals."""
    out = []
    for lineno, line in _lines(path):
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) < 3:
            raise TrackFormatError("mask lines need chrom, start, end", path, lineno)
        if fields[:3] == ["chrom", "start", "end"]:
            continue
        start = _parse_int(fields[1], "start", path, lineno)
        end = _parse_int(fields[2], "end", path, lineno)
        if end <= start:
            raise TrackFormatError("mask end must exceed start", path, lineno)
        out.append((fields[0], start, end))
    return out


def mask_windows(counts, intervals):
    """Boolean array, true for windows overlapping any mask interval."""
    hit = np.zeros(counts.n, dtype=bool)
    for chrom, s, e in intervals:
        hit |= (counts.chroms == chrom) & (counts.starts < e) & (counts.ends > s)
    return hit


def apply_mask(counts, intervals):
    """Drop masked windows; gaps left behind split the HMM blocks."""
    return counts.subset(~mask_windows(counts, intervals))


def bin_reads(read_positions, window_size, chrom_sizes):
    """Count reads per window.

    ``read_positions`` maps a profile name to an iterable of ``(chrom, pos)``
    pairs (a plain sequence of such iterables is named ``profile1...``).
    Windows tile ``[0, size)`` of every chromosome in ``chrom_sizes`` order;
    the last one may be short.
    """
    if window_size < 1:
        raise DomainError("window_size must be positive")
    if not isinstance(read_positions, dict):
        read_positions = {f"profile{i + 1}": v for i, v in enumerate(read_positions)}
    order = list(chrom_sizes)
    nwin = np.array([-(-int(chrom_sizes[c]) // window_size) for c in order], dtype=np.int64)
    offset = dict(zip(order, np.concatenate(([0], np.cumsum(nwin)[:-1])).tolist()))
    total = int(nwin.sum())
    cols = []
    for name, reads in read_positions.items():
        idx = []
        for chrom, pos in reads:
            if chrom not in offset:
                raise DomainError(f"unknown chromosome {chrom!r} in profile {name}")
            if not 0 <= pos < chrom_sizes[chrom]:
                raise DomainError(f"position {pos} outside {chrom} (size {chrom_sizes[chrom]})")
            idx.append(offset[chrom] + pos // window_size)
        cols.append(np.bincount(np.asarray(idx, dtype=np.int64), minlength=total))
    chroms, starts, ends = [], [], []
    for c, k in zip(order, nwin.tolist()):
        s = np.arange(k, dtype=np.int64) * window_size
        chroms.extend([c] * k)
        starts.append(s)
        ends.append(np.minimum(s + window_size, int(chrom_sizes[c])))
    return CountMatrix(
        chroms,
        np.concatenate(starts) if starts else [],
        np.concatenate(ends) if ends else [],
        np.column_stack(cols) if cols else np.zeros((total, 0)),
        list(read_positions),
        window_size,
    )


def present_runs(chroms, starts, ends, mask):
    """Merge adjacent present windows into ``(chrom, start, end)`` regions."""
    runs = []
    for c, s, e, on in zip(chroms, starts, ends, mask):
        if not on:
            continue
        if runs and runs[-1][0] == c and runs[-1][2] == s:
            runs[-1][2] = int(e)
        else:
            runs.append([str(c), int(s), int(e)])
    return [tuple(r) for r in runs]


def write_calls(result, counts, bed_path, table_path, header=None):
    """Write merged present regions (BED3) and the per-window call table.

    The table lists ``chrom start end state posterior`` with 1-based states
    and the target-state posterior to 6 decimals.
    """
    with open(bed_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_header_line(header))
        for c, s, e in present_runs(counts.chroms, counts.starts, counts.ends, result.present_mask):
            fh.write(f"{c}\t{s}\t{e}\n")
    with open(table_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_header_line(header))
        fh.write("chrom\tstart\tend\tstate\tposterior\n")
        for c, s, e, st, pp in zip(
            counts.chroms, counts.starts, counts.ends, result.path.states, result.target_posterior
        ):
            fh.write(f"{c}\t{s}\t{e}\t{int(st) + 1}\t{pp:.6f}\n")


@dataclass(eq=False)
class CallTable:
    chroms: np.ndarray
    starts: np.ndarray
    ends: np.ndarray
    states: np.ndarray
    posteriors: np.ndarray


def read_calls(path):
    """Read a per-window call table; states come back 0-based."""
    rows = []
    header_seen = False
    for lineno, line in _lines(path):
        if lineno == 1 and line.startswith("#"):
            continue
        if not header_seen:
            if line != "chrom\tstart\tend\tstate\tposterior":
                raise TrackFormatError("bad call table header", path, lineno)
            header_seen = True
            continue
        f = line.split("\t")
        if len(f) != 5:
            raise TrackFormatError("expected 5 columns", path, lineno)
        try:
            post = float(f[4])
        except ValueError:
            raise TrackFormatError(f"bad posterior {f[4]!r}", path, lineno) from None
        rows.append((f[0], _parse_int(f[1], "start", path, lineno), _parse_int(f[2], "end", path, lineno),
                     _parse_int(f[3], "state", path, lineno) - 1, post))
    if not header_seen:
        raise TrackFormatError("missing header", path)
    cols = list(zip(*rows)) if rows else [[], [], [], [], []]
    return CallTable(
        np.array(cols[0], dtype=str), np.array(cols[1], dtype=np.int64), np.array(cols[2], dtype=np.int64),
        np.array(cols[3], dtype=np.int64), np.array(cols[4], dtype=float),
    )


def read_bed(path):
    out = []
    for lineno, line in _lines(path):
        if lineno == 1 and line.startswith("#"):
            continue
        f = line.split("\t")
        if len(f) < 3:
            raise TrackFormatError("BED lines need 3 columns", path, lineno)
        out.append((f[0], int(f[1]), int(f[2])))
    return out


def write_call_table(calls, path, header=None):
    """Write a ``CallTable`` back out in the same format ``read_calls`` accepts."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_header_line(header))
        fh.write("chrom\tstart\tend\tstate\tposterior\n")
        for c, s, e, st, pp in zip(calls.chroms, calls.starts, calls.ends, calls.states, calls.posteriors):
            fh.write(f"{c}\t{s}\t{e}\t{int(st) + 1}\t{pp:.6f}\n")
