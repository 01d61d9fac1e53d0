"""Minimal EDF / EDF+ reader and writer.

Layout: a 256-byte ASCII main header, then 256 bytes of per-signal header
fields (stored field-major), then data records. Each record holds, for every
signal in turn, ``n_samples_per_record`` 16-bit little-endian two's-complement
integers. Physical value = (digital - dig_min) * gain + phys_min with
gain = (phys_max - phys_min) / (dig_max - dig_min).
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field

import numpy as np

ANNOTATION_LABEL = "EDF Annotations"

_SIGNAL_FIELDS = [
    ("label", 16),
    ("transducer", 80),
    ("units", 8),
    ("physical_min", 8),
    ("physical_max", 8),
    ("digital_min", 8),
    ("digital_max", 8),
    ("prefiltering", 80),
    ("n_samples", 8),
    ("reserved", 32),
]


class EDFError(Exception):
    pass


class MissingChannel(EDFError):
    def __init__(self, channel, available, path=None):
        self.channel = channel
        self.available = list(available)
        super().__init__(f"channel {channel!r} not in {path or 'file'}; available: {self.available}")


class HeaderMismatch(EDFError):
    pass


class TruncatedFile(EDFError):
    pass


@dataclass
class SignalHeader:
    label: str
    transducer: str = ""
    units: str = ""
    physical_min: float = -1.0
    physical_max: float = 1.0
    digital_min: int = -32768
    digital_max: int = 32767
    prefiltering: str = ""
    n_samples: int = 0

    @property
    def gain(self) -> float:
        return (self.physical_max - self.physical_min) / (self.digital_max - self.digital_min)


@dataclass
class EDFHeader:
    patient: str
    recording: str
    startdate: str
    starttime: str
    header_bytes: int
    reserved: str
    n_records: int
    record_duration: float
    signals: list = field(default_factory=list)

    @property
    def is_edf_plus(self) -> bool:
        return self.reserved.startswith("EDF+")

    @property
    def labels(self) -> list:
        return [s.label for s in self.signals]

    def sample_rate(self, index: int) -> float:
        return self.signals[index].n_samples / self.record_duration

    @property
    def record_samples(self) -> int:
        return sum(s.n_samples for s in self.signals)


def _field(raw: bytes, what: str) -> str:
    return raw.decode("ascii", errors="replace").strip()


def _number(text: str, what: str, path) -> float:
    try:
        return float(text)
    except ValueError:
        raise HeaderMismatch(f"{path}: header field {what} is not numeric: {text!r}") from None


def read_header(f, path=None) -> EDFHeader:
    main = f.read(256)
    if len(main) < 256:
        raise TruncatedFile(f"{path}: file shorter than the 256-byte EDF header")
    if main[:8].strip() != b"0":
        raise HeaderMismatch(f"{path}: not an EDF file (version field {main[:8]!r})")
    n_signals = int(_number(_field(main[252:256], "ns"), "ns", path))
    hdr = EDFHeader(
        patient=_field(main[8:88], "patient"),
        recording=_field(main[88:168], "recording"),
        startdate=_field(main[168:176], "startdate"),
        starttime=_field(main[176:184], "starttime"),
        header_bytes=int(_number(_field(main[184:192], "bytes"), "header bytes", path)),
        reserved=_field(main[192:236], "reserved"),
        n_records=int(_number(_field(main[236:244], "records"), "n_records", path)),
        record_duration=_number(_field(main[244:252], "duration"), "record duration", path),
    )
    if hdr.header_bytes != 256 * (1 + n_signals):
        raise HeaderMismatch(
            f"{path}: header size {hdr.header_bytes} does not match {n_signals} signals"
        )
    raw = f.read(256 * n_signals)
    if len(raw) < 256 * n_signals:
        raise TruncatedFile(f"{path}: signal headers truncated")
    values = {}
    offset = 0
    for name, width in _SIGNAL_FIELDS:
        values[name] = [
            _field(raw[offset + i * width: offset + (i + 1) * width], name)
            for i in range(n_signals)
        ]
        offset += width * n_signals
    for i in range(n_signals):
        sig = SignalHeader(
            label=values["label"][i],
            transducer=values["transducer"][i],
            units=values["units"][i],
            physical_min=_number(values["physical_min"][i], "physical_min", path),
            physical_max=_number(values["physical_max"][i], "physical_max", path),
            digital_min=int(_number(values["digital_min"][i], "digital_min", path)),
            digital_max=int(_number(values["digital_max"][i], "digital_max", path)),
            prefiltering=values["prefiltering"][i],
            n_samples=int(_number(values["n_samples"][i], "n_samples", path)),
        )
        if sig.digital_max <= sig.digital_min:
            raise HeaderMismatch(f"{path}: signal {sig.label!r} has an empty digital range")
        hdr.signals.append(sig)
    return hdr


class EDFReader:
    """Reads an EDF/EDF+ file fully into memory on construction."""

    def __init__(self, path):
        self.path = os.fspath(path)
        with open(self.path, "rb") as f:
            self.header = read_header(f, self.path)
            body = f.read()
        hdr = self.header
        rec_bytes = 2 * hdr.record_samples
        if rec_bytes == 0:
            raise HeaderMismatch(f"{self.path}: zero samples per record")
        n_complete = len(body) // rec_bytes
        if hdr.n_records < 0:
            hdr.n_records = n_complete
        if n_complete < hdr.n_records:
            raise TruncatedFile(
                f"{self.path}: header declares {hdr.n_records} records but only "
                f"{n_complete} complete records are present"
            )
        if len(body) > hdr.n_records * rec_bytes:
            raise HeaderMismatch(
                f"{self.path}: {len(body) - hdr.n_records * rec_bytes} bytes of sample data "
                f"beyond the {hdr.n_records} records declared in the header"
            )
        data = np.frombuffer(body[: hdr.n_records * rec_bytes], dtype="<i2")
        self._records = data.reshape(hdr.n_records, hdr.record_samples)

    def channel_index(self, channel: str) -> int:
        labels = self.header.labels
        if channel in labels:
            return labels.index(channel)
        folded = [lab.lower() for lab in labels]
        if channel.lower() in folded:
            return folded.index(channel.lower())
        raise MissingChannel(channel, labels, self.path)

    def _slice(self, index: int) -> np.ndarray:
        start = sum(s.n_samples for s in self.header.signals[:index])
        stop = start + self.header.signals[index].n_samples
        return self._records[:, start:stop].reshape(-1)

    def digital(self, channel) -> np.ndarray:
        index = channel if isinstance(channel, int) else self.channel_index(channel)
        return self._slice(index).astype(np.int16)

    def physical(self, channel) -> np.ndarray:
        index = channel if isinstance(channel, int) else self.channel_index(channel)
        sig = self.header.signals[index]
        dig = self._slice(index).astype(np.float64)
        return (dig - sig.digital_min) * sig.gain + sig.physical_min

    def sample_rate(self, channel) -> float:
        index = channel if isinstance(channel, int) else self.channel_index(channel)
        return self.header.sample_rate(index)

    def annotations(self) -> list:
        """All (onset_s, duration_s, text) entries from every 'EDF Annotations' signal."""
        out = []
        for i, sig in enumerate(self.header.signals):
            if sig.label != ANNOTATION_LABEL:
                continue
            raw = self._slice(i).astype("<i2").tobytes()
            for rec in range(self.header.n_records):
                chunk = raw[rec * 2 * sig.n_samples:(rec + 1) * 2 * sig.n_samples]
                out.extend(parse_tal(chunk))
        # drop the per-record timekeeping entries (no text)
        return [a for a in out if a[2]]


_TAL = re.compile(
    rb"(?P<onset>[+\-]\d+(?:\.\d*)?)"
    rb"(?:\x15(?P<duration>\d+(?:\.\d*)?))?"
    rb"(?P<texts>(?:\x14[^\x00]*?)*)\x14\x00"
)


def parse_tal(raw: bytes) -> list:
    """Parse EDF+ time-stamped annotation lists into (onset, duration, text) tuples."""
    out = []
    for m in _TAL.finditer(raw):
        onset = float(m.group("onset"))
        duration = float(m.group("duration")) if m.group("duration") else 0.0
        texts = [t.decode("utf-8", errors="replace") for t in m.group("texts").split(b"\x14") if t]
        if not texts:
            out.append((onset, duration, ""))
        for t in texts:
            out.append((onset, duration, t))
    return out


def _pad(text, width) -> bytes:
    b = str(text).encode("ascii")
    if len(b) > width:
        b = str(text)[:width].encode("ascii")
    return b.ljust(width)


def _fmt_num(x) -> str:
    s = f"{x:g}" if isinstance(x, float) else str(x)
    if len(s) > 8:
        s = f"{x:.6g}"[:8]
    return s


def write_edf(path, signals: dict, sample_rates: dict, record_duration: float = 1.0,
              physical_range: dict | None = None, annotations=None,
              patient="X", recording="X", n_records: int | None = None):
    """Write ordinary signals (and optionally an EDF+ annotation channel).

    ``signals`` maps label -> physical-valued 1-D array. Every signal must
    span a whole number of records. Values are quantized to 16 bits over
    ``physical_range[label]`` (default: the signal's own min/max).
    An annotation-only file (a hypnogram) needs ``n_records`` or defaults to one record.
    """
    physical_range = physical_range or {}
    headers, digital = [], []
    for label, values in signals.items():
        values = np.asarray(values, dtype=np.float64)
        per_rec = sample_rates[label] * record_duration
        if abs(per_rec - round(per_rec)) > 1e-9:
            raise ValueError(f"{label}: rate x record duration must be integral")
        per_rec = int(round(per_rec))
        if len(values) % per_rec:
            raise ValueError(f"{label}: length {len(values)} is not a whole number of records")
        recs = len(values) // per_rec
        if n_records is None:
            n_records = recs
        elif recs != n_records:
            raise ValueError("all signals must cover the same number of records")
        lo, hi = physical_range.get(label, (float(values.min()), float(values.max())))
        if hi <= lo:
            hi = lo + 1.0
        sig = SignalHeader(label=label, units="uV", physical_min=lo, physical_max=hi,
                           digital_min=-32768, digital_max=32767, n_samples=per_rec)
        dig = np.round((values - lo) / sig.gain + sig.digital_min)
        digital.append(np.clip(dig, -32768, 32767).astype("<i2").reshape(recs, per_rec))
        headers.append(sig)
    if n_records is None:
        if annotations is None:
            raise ValueError("no signals given")
        n_records = 1
    if annotations is not None:
        tal_blocks = _tal_records(annotations, n_records, record_duration)
        width = max(len(b) for b in tal_blocks)
        width += width % 2
        per_rec = width // 2
        buf = np.zeros((n_records, per_rec), dtype="<i2")
        for r, block in enumerate(tal_blocks):
            buf[r] = np.frombuffer(block.ljust(width, b"\x00"), dtype="<i2")
        headers.append(SignalHeader(label=ANNOTATION_LABEL, physical_min=-1, physical_max=1,
                                    digital_min=-32768, digital_max=32767, n_samples=per_rec))
        digital.append(buf)
    ns = len(headers)
    main = b"".join([
        _pad("0", 8), _pad(patient, 80), _pad(recording, 80), _pad("01.01.00", 8),
        _pad("00.00.00", 8), _pad(256 * (1 + ns), 8),
        _pad("EDF+C" if annotations is not None else "", 44), _pad(n_records, 8),
        _pad(_fmt_num(float(record_duration)), 8), _pad(ns, 4),
    ])
    sig_hdr = b""
    for name, width in _SIGNAL_FIELDS:
        for h in headers:
            value = "" if name == "reserved" else getattr(h, name)
            if isinstance(value, float):
                value = _fmt_num(value)
            sig_hdr += _pad(value, width)
    body = np.concatenate(digital, axis=1).astype("<i2").tobytes()
    with open(path, "wb") as f:
        f.write(main)
        f.write(sig_hdr)
        f.write(body)


def _tal_records(annotations, n_records, record_duration) -> list:
    blocks = []
    for r in range(n_records):
        onset = r * record_duration
        blocks.append(f"+{onset:g}\x14\x14\x00".encode())
    # all real annotations go in the first record's block
    extra = b"".join(
        f"+{onset:g}\x15{duration:g}\x14{text}\x14\x00".encode()
        for onset, duration, text in annotations
    )
    blocks[0] += extra
    return blocks
