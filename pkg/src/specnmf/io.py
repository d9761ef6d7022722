"""Spectrum types and their text formats.

Three formats are supported:

* SPE-style text (``$SPEC_ID``, ``$MEAS_TIM``, ``$DATA``, ``$MCA_CAL`` blocks),
  one spectrum per file. Unknown ``$`` blocks are skipped.
* CSV sets with header ``label,detector,live_time,c0,...,c{m-1}``. A
  multi-label cell joins labels with ``+``.
* A JSON-lines container: one header object, then one object per spectrum.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import ParseError, UnsupportedVersionError, ValidationError

__all__ = [
    "EnergyCalibration",
    "Spectrum",
    "SpectraSet",
    "parse_spe",
    "parse_csv_set",
    "write_set",
    "read_set",
    "format_float",
    "LABEL_SEPARATOR",
    "SET_FORMAT_VERSION",
]

LABEL_SEPARATOR = "+"
SET_FORMAT_VERSION = "1"


def format_float(x) -> str:
    """Decimal text with 17 significant digits; parses back bit-identically."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class EnergyCalibration:
    """Quadratic channel-to-energy map ``E(c) = a0 + a1*c + a2*c**2`` (keV)."""

    a0: float = 0.0
    a1: float = 1.0
    a2: float = 0.0

    def __post_init__(self):
        for name in ("a0", "a1", "a2"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValidationError(f"calibration coefficient {name} is not finite")
            object.__setattr__(self, name, value)

    def energy(self, channel):
        c = np.asarray(channel, dtype=float)
        return self.a0 + self.a1 * c + self.a2 * c * c

    def edges(self, channel_count: int) -> np.ndarray:
        """Bin edges; channel ``c`` spans ``[E(c - 1/2), E(c + 1/2)]``."""
        return self.energy(np.arange(channel_count + 1) - 0.5)

    def centers(self, channel_count: int) -> np.ndarray:
        return self.energy(np.arange(channel_count))

    def is_increasing(self, channel_count: int) -> bool:
        e = self.edges(channel_count)
        return bool(np.all(np.diff(e) > 0))

    def to_dict(self):
        return {"a0": self.a0, "a1": self.a1, "a2": self.a2}


IDENTITY_CALIBRATION = EnergyCalibration()


@dataclass(eq=False)
class Spectrum:
    """Channel counts of one measurement plus its labels and calibration.

    ``weights`` optionally holds ground-truth mixing fractions per label
    (known for synthetic data only).
    """

    counts: np.ndarray
    labels: frozenset
    detector_id: str = "unknown"
    calibration: EnergyCalibration = IDENTITY_CALIBRATION
    live_time_seconds: float | None = None
    weights: dict | None = None

    def __post_init__(self):
        counts = np.array(self.counts, dtype=float)
        if counts.ndim != 1 or counts.size == 0:
            raise ValidationError("counts must be a non-empty 1-D vector")
        if not np.all(np.isfinite(counts)):
            raise ValidationError("counts must be finite")
        if np.any(counts < 0):
            raise ValidationError(f"negative count in channel {int(np.argmax(counts < 0))}")
        counts.setflags(write=False)
        self.counts = counts
        if isinstance(self.labels, str):
            self.labels = split_labels(self.labels)
        labels = frozenset(str(x) for x in self.labels)
        if not labels or any(not x or LABEL_SEPARATOR in x for x in labels):
            raise ValidationError(f"invalid label set {sorted(labels)!r}")
        self.labels = labels
        self.detector_id = str(self.detector_id)
        if not self.calibration.is_increasing(counts.size):
            raise ValidationError("energy calibration is not strictly increasing over the channel range")
        if self.live_time_seconds is not None:
            lt = float(self.live_time_seconds)
            if not (math.isfinite(lt) and lt > 0):
                raise ValidationError("live time must be a positive number")
            self.live_time_seconds = lt
        if self.weights is not None:
            weights = {str(k): float(v) for k, v in self.weights.items()}
            if any(not math.isfinite(v) or v < 0 for v in weights.values()):
                raise ValidationError("weights must be finite and non-negative")
            self.weights = weights

    @property
    def channel_count(self) -> int:
        return self.counts.size

    @property
    def label_string(self) -> str:
        return LABEL_SEPARATOR.join(sorted(self.labels))

    @property
    def total_counts(self) -> float:
        return float(self.counts.sum())

    def replace(self, **changes) -> "Spectrum":
        fields = dict(
            counts=self.counts,
            labels=self.labels,
            detector_id=self.detector_id,
            calibration=self.calibration,
            live_time_seconds=self.live_time_seconds,
            weights=self.weights,
        )
        fields.update(changes)
        return Spectrum(**fields)

    def __eq__(self, other):
        if not isinstance(other, Spectrum):
            return NotImplemented
        return (
            np.array_equal(self.counts, other.counts)
            and self.labels == other.labels
            and self.detector_id == other.detector_id
            and self.calibration == other.calibration
            and self.live_time_seconds == other.live_time_seconds
            and self.weights == other.weights
        )

    __hash__ = None


def split_labels(text: str) -> frozenset:
    return frozenset(part.strip() for part in text.split(LABEL_SEPARATOR))


@dataclass(eq=False)
class SpectraSet:
    """Equally binned, labeled spectra: the rows of the data matrix."""

    spectra: list = field(default_factory=list)
    channel_count: int | None = None
    calibration: EnergyCalibration = IDENTITY_CALIBRATION

    def __post_init__(self):
        self.spectra = list(self.spectra)
        if self.channel_count is None:
            if not self.spectra:
                raise ValidationError("channel_count is required for an empty set")
            self.channel_count = self.spectra[0].channel_count
        self.channel_count = int(self.channel_count)
        if self.channel_count < 1:
            raise ValidationError("channel_count must be positive")
        for i, s in enumerate(self.spectra):
            if s.channel_count != self.channel_count:
                raise ValidationError(
                    f"spectrum {i} has {s.channel_count} channels, set has {self.channel_count}"
                )
            if s.calibration != self.calibration:
                raise ValidationError(f"spectrum {i} calibration differs from the set calibration")

    def __len__(self):
        return len(self.spectra)

    def __iter__(self) -> Iterator[Spectrum]:
        return iter(self.spectra)

    def __getitem__(self, index):
        return self.spectra[index]

    def __eq__(self, other):
        if not isinstance(other, SpectraSet):
            return NotImplemented
        return (
            self.channel_count == other.channel_count
            and self.calibration == other.calibration
            and self.spectra == other.spectra
        )

    __hash__ = None

    @property
    def matrix(self) -> np.ndarray:
        """Counts as an ``(n, m)`` array."""
        if not self.spectra:
            return np.zeros((0, self.channel_count))
        return np.vstack([s.counts for s in self.spectra])

    def with_spectra(self, spectra: Iterable[Spectrum]) -> "SpectraSet":
        return SpectraSet(list(spectra), self.channel_count, self.calibration)

    def label_sets(self) -> list:
        """Distinct label sets in first-appearance order."""
        seen = {}
        for s in self.spectra:
            seen.setdefault(s.labels, None)
        return list(seen)


# --- SPE -----------------------------------------------------------------


def _spe_blocks(text):
    """Yield ``(name, header_line_number, [(line_number, line), ...])``."""
    name, start, body = None, 0, []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("$"):
            if name is not None:
                yield name, start, body
            name, start, body = line.rstrip(":").upper(), lineno, []
        elif name is not None and line:
            body.append((lineno, line))
    if name is not None:
        yield name, start, body


def _floats(tokens, lineno, what):
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise ParseError(f"non-numeric value in {what}", f"line {lineno}") from None


def parse_spe(text: str, detector_id: str = "unknown") -> Spectrum:
    """Parse one spectrum from SPE-style text.

    ``$DATA`` holds ``first last`` on its first line followed by
    ``last - first + 1`` counts (any whitespace layout). ``$MCA_CAL`` holds the
    coefficient count then the coefficients, lowest order first; a trailing
    unit token such as ``keV`` is tolerated. ``$SPEC_ID`` gives the labels,
    joined with ``+``.
    """
    blocks = {}
    for name, start, body in _spe_blocks(text):
        blocks.setdefault(name, (start, body))
    if "$DATA" not in blocks:
        raise ParseError("missing $DATA block", "line 1")

    start, body = blocks["$DATA"]
    if not body:
        raise ParseError("$DATA block has no channel range", f"line {start}")
    lineno, header = body[0]
    rng = header.split()
    if len(rng) != 2:
        raise ParseError("$DATA range must be 'first last'", f"line {lineno}")
    try:
        first, last = int(rng[0]), int(rng[1])
    except ValueError:
        raise ParseError("$DATA range is not integer", f"line {lineno}") from None
    expected = last - first + 1
    if expected < 1:
        raise ParseError("$DATA range is empty", f"line {lineno}")
    counts = []
    for lineno, line in body[1:]:
        values = _floats(line.split(), lineno, "$DATA")
        for v in values:
            if not math.isfinite(v) or v < 0:
                raise ParseError(f"invalid count {v!r}", f"line {lineno}")
        counts.extend(values)
    if len(counts) != expected:
        raise ParseError(
            f"$DATA declares {expected} channels but holds {len(counts)} values", f"line {start}"
        )

    calibration = IDENTITY_CALIBRATION
    if "$MCA_CAL" in blocks:
        start, body = blocks["$MCA_CAL"]
        if len(body) < 2:
            raise ParseError("$MCA_CAL needs a coefficient count and coefficients", f"line {start}")
        lineno, n_line = body[0]
        try:
            n_coef = int(n_line.split()[0])
        except ValueError:
            raise ParseError("$MCA_CAL coefficient count is not an integer", f"line {lineno}") from None
        if n_coef not in (2, 3):
            raise ParseError("$MCA_CAL must have 2 or 3 coefficients", f"line {lineno}")
        lineno, coef_line = body[1]
        tokens = coef_line.split()
        if len(tokens) < n_coef:
            raise ParseError(f"$MCA_CAL expects {n_coef} coefficients", f"line {lineno}")
        coefs = _floats(tokens[:n_coef], lineno, "$MCA_CAL")
        try:
            calibration = EnergyCalibration(*coefs)
        except ValidationError as exc:
            raise ParseError(str(exc), f"line {lineno}") from None

    live_time = None
    if "$MEAS_TIM" in blocks:
        start, body = blocks["$MEAS_TIM"]
        if body:
            lineno, line = body[0]
            live_time = _floats(line.split()[:1], lineno, "$MEAS_TIM")[0]

    labels = frozenset({"unlabeled"})
    if "$SPEC_ID" in blocks and blocks["$SPEC_ID"][1]:
        labels = split_labels(blocks["$SPEC_ID"][1][0][1])

    try:
        return Spectrum(counts, labels, detector_id, calibration, live_time)
    except ValidationError as exc:
        raise ParseError(str(exc), f"line {blocks['$DATA'][0]}") from None


def format_spe(spectrum: Spectrum) -> str:
    """Render a spectrum as SPE-style text readable by :func:`parse_spe`."""
    cal = spectrum.calibration
    lines = ["$SPEC_ID:", spectrum.label_string]
    if spectrum.live_time_seconds is not None:
        lt = format_float(spectrum.live_time_seconds)
        lines += ["$MEAS_TIM:", f"{lt} {lt}"]
    lines += ["$DATA:", f"0 {spectrum.channel_count - 1}"]
    lines += [format_float(c) for c in spectrum.counts]
    lines += ["$MCA_CAL:", "3", " ".join(format_float(a) for a in (cal.a0, cal.a1, cal.a2)) + " keV"]
    return "\n".join(lines) + "\n"


# --- CSV -----------------------------------------------------------------


def parse_csv_set(file, calibration: EnergyCalibration = IDENTITY_CALIBRATION) -> SpectraSet:
    """Read a CSV set. ``file`` is a path or an open text stream.

    Row numbers in errors count data rows from 1.
    """
    if isinstance(file, (str, Path)):
        with open(file, newline="") as fh:
            return parse_csv_set(fh, calibration)
    reader = csv.reader(file)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("empty CSV", "header") from None
    if header[:3] != ["label", "detector", "live_time"]:
        raise ParseError("header must start with label,detector,live_time", "header")
    channels = header[3:]
    if not channels or channels != [f"c{i}" for i in range(len(channels))]:
        raise ParseError("channel columns must be c0..c{m-1}", "header")
    m = len(channels)

    spectra = []
    for row_number, row in enumerate(reader, start=1):
        where = f"row {row_number}"
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != m + 3:
            raise ParseError(f"expected {m} counts, found {len(row) - 3}", where)
        label, detector, live_time = (c.strip() for c in row[:3])
        if not label:
            raise ParseError("empty label", where)
        try:
            counts = [float(c) for c in row[3:]]
            lt = float(live_time) if live_time else None
        except ValueError:
            raise ParseError("non-numeric value", where) from None
        try:
            spectra.append(Spectrum(counts, split_labels(label), detector, calibration, lt))
        except ValidationError as exc:
            raise ParseError(str(exc), where) from None
    return SpectraSet(spectra, m, calibration)


def format_csv_set(spectra: SpectraSet) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["label", "detector", "live_time"] + [f"c{i}" for i in range(spectra.channel_count)])
    for s in spectra:
        lt = "" if s.live_time_seconds is None else format_float(s.live_time_seconds)
        writer.writerow([s.label_string, s.detector_id, lt] + [format_float(c) for c in s.counts])
    return out.getvalue()


# --- JSON-lines container --------------------------------------------------


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _number_list(values) -> str:
    return "[" + ",".join(format_float(v) for v in values) + "]"


def set_to_text(spectra: SpectraSet) -> str:
    header = {
        "format": "spectra-set",
        "version": SET_FORMAT_VERSION,
        "channel_count": spectra.channel_count,
        "calibration": {k: format_float(v) for k, v in spectra.calibration.to_dict().items()},
        "count": len(spectra),
    }
    lines = [_dumps(header)]
    for s in spectra:
        meta = {
            "labels": sorted(s.labels),
            "detector": s.detector_id,
            "live_time": None if s.live_time_seconds is None else format_float(s.live_time_seconds),
            "weights": None
            if s.weights is None
            else {k: format_float(v) for k, v in sorted(s.weights.items())},
        }
        # counts are spliced in verbatim to keep the 17-digit rendering
        lines.append(_dumps(meta)[:-1] + ',"counts":' + _number_list(s.counts) + "}")
    return "\n".join(lines) + "\n"


def write_set(spectra: SpectraSet, path) -> None:
    Path(path).write_text(set_to_text(spectra))


def _opt_float(value):
    return None if value is None else float(value)


def set_from_text(text: str) -> SpectraSet:
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty file", "line 1")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad header: {exc.msg}", "line 1") from None
    if not isinstance(header, dict) or "version" not in header:
        raise ParseError("header lacks a version field", "line 1")
    if header["version"] != SET_FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported set version {header['version']!r}", "line 1")
    try:
        m = int(header["channel_count"])
        cal = EnergyCalibration(**{k: float(v) for k, v in header["calibration"].items()})
        count = int(header["count"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad header: {exc}", "line 1") from None

    body = [(i, line) for i, line in enumerate(lines[1:], start=2) if line.strip()]
    if len(body) != count:
        raise ParseError(f"header announces {count} spectra, file holds {len(body)} (truncated?)")
    spectra = []
    for lineno, line in body:
        where = f"line {lineno}"
        try:
            rec = json.loads(line)
            spectra.append(
                Spectrum(
                    counts=rec["counts"],
                    labels=frozenset(rec["labels"]),
                    detector_id=rec["detector"],
                    calibration=cal,
                    live_time_seconds=_opt_float(rec.get("live_time")),
                    weights=None
                    if rec.get("weights") is None
                    else {k: float(v) for k, v in rec["weights"].items()},
                )
            )
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad record: {exc.msg}", where) from None
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad record: {exc}", where) from None
    try:
        return SpectraSet(spectra, m, cal)
    except ValidationError as exc:
        raise ParseError(str(exc)) from None


def read_set(path) -> SpectraSet:
    return set_from_text(Path(path).read_text())
