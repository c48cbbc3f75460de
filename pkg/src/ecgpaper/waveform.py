"""ECG waveform records: the 12-lead CSV interchange format and validation.

A record on disk is `<id>.csv` (12 columns, header row of lead names, one
sample per row, millivolts) plus a JSON sidecar `<id>.json` holding
`{"id": ..., "fs": ..., "units": "mV", "labels": "MI;STTC"}`.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadHeader, IoFailure, LengthMismatch, MissingLead, NonFiniteSample

LEAD_NAMES = ("I", "II", "III", "aVR", "aVL", "aVF",
              "V1", "V2", "V3", "V4", "V5", "V6")
LABEL_NAMES = ("MI", "AF", "HYP", "CD", "STTC")

MIN_WINDOW_S = 2.5  # shortest admissible lead duration: one panel window


@dataclass(frozen=True)
class DiagnosisVector:
    """Five binary diagnosis flags in fixed order MI, AF, HYP, CD, STTC."""

    mi: int = 0
    af: int = 0
    hyp: int = 0
    cd: int = 0
    sttc: int = 0

    def __post_init__(self):
        for name, v in zip(LABEL_NAMES, self.as_tuple()):
            if v not in (0, 1):
                raise ValueError(f"flag {name} must be 0 or 1, got {v!r}")

    def as_tuple(self) -> tuple[int, int, int, int, int]:
        return (self.mi, self.af, self.hyp, self.cd, self.sttc)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=np.int64)

    def to_string(self) -> str:
        """Semicolon-joined positive category names; empty string when none."""
        return ";".join(n for n, v in zip(LABEL_NAMES, self.as_tuple()) if v)

    @classmethod
    def from_string(cls, text: str) -> "DiagnosisVector":
        flags = dict.fromkeys(LABEL_NAMES, 0)
        for token in text.split(";"):
            token = token.strip()
            if not token:
                continue
            if token not in flags:
                raise ValueError(f"unknown diagnosis label {token!r}")
            flags[token] = 1
        return cls(*(flags[n] for n in LABEL_NAMES))

    @classmethod
    def from_flags(cls, flags) -> "DiagnosisVector":
        vals = tuple(int(v) for v in flags)
        if len(vals) != 5:
            raise ValueError("expected 5 flags")
        return cls(*vals)


@dataclass
class EcgRecord:
    """A 12-lead waveform record with sampling rate and diagnosis labels."""

    id: str
    fs: int
    leads: dict[str, np.ndarray]  # lead name -> mV series, standard order
    labels: DiagnosisVector = field(default_factory=DiagnosisVector)

    @property
    def n_samples(self) -> int:
        return len(next(iter(self.leads.values())))

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.fs

    def lead_matrix(self) -> np.ndarray:
        """(n_samples, 12) matrix in standard lead order."""
        return np.stack([self.leads[n] for n in LEAD_NAMES], axis=1)


@dataclass(frozen=True)
class Violation:
    """One invariant violation found by validate_record."""

    rule: str
    lead: str | None = None
    index: int | None = None

    def __str__(self) -> str:
        details = []
        if self.lead is not None:
            details.append(f"lead={self.lead}")
        if self.index is not None:
            details.append(f"index={self.index}")
        return f"{self.rule}({', '.join(details)})" if details else self.rule


def validate_record(rec: EcgRecord) -> list[Violation]:
    """Report every invariant violation; empty list means the record is valid."""
    out: list[Violation] = []
    if rec.fs <= 0:
        out.append(Violation("NonPositiveFs"))
    missing = [n for n in LEAD_NAMES if n not in rec.leads]
    out.extend(Violation("MissingLead", lead=n) for n in missing)
    extra = [n for n in rec.leads if n not in LEAD_NAMES]
    out.extend(Violation("UnknownLead", lead=n) for n in extra)
    if missing or extra:
        return out

    lengths = {n: len(rec.leads[n]) for n in LEAD_NAMES}
    if len(set(lengths.values())) > 1:
        out.append(Violation("LengthMismatch"))
    n = lengths["I"]
    if rec.fs > 0 and n < MIN_WINDOW_S * rec.fs:
        out.append(Violation("TooFewSamples"))
    for name in LEAD_NAMES:
        bad = np.flatnonzero(~np.isfinite(rec.leads[name]))
        if bad.size:
            out.append(Violation("NonFiniteSample", lead=name, index=int(bad[0])))
    return out


def parse_record(
    data: bytes,
    fs_hint: int | None = None,
    sidecar: dict | None = None,
) -> EcgRecord:
    """Parse the documented waveform CSV into a validated EcgRecord.

    Sample values are preserved exactly as parsed; no resampling or filtering.
    `sidecar` supplies id/fs/labels; `fs_hint` is used when the sidecar has no
    fs. Raises on any invariant violation instead of returning a broken record.
    """
    sidecar = sidecar or {}
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise BadHeader(f"waveform CSV is not UTF-8: {e}") from e

    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise BadHeader("empty waveform CSV") from None
    header = [h.strip() for h in header]
    if len(set(header)) != len(header):
        raise BadHeader(f"duplicate columns in header: {header}")
    unknown = [h for h in header if h not in LEAD_NAMES]
    if unknown:
        raise BadHeader(f"unknown columns: {unknown}")
    for name in LEAD_NAMES:
        if name not in header:
            raise MissingLead(name)

    rows: list[list[str]] = []
    for idx, row in enumerate(reader):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise LengthMismatch(f"row {idx + 1} has {len(row)} cells, expected {len(header)}")
        rows.append(row)
    if not rows:
        raise BadHeader("waveform CSV has a header but no samples")

    cols = np.empty((len(rows), 12), dtype=np.float64)
    order = [header.index(n) for n in LEAD_NAMES]
    for i, row in enumerate(rows):
        for j, src in enumerate(order):
            cell = row[src].strip()
            try:
                cols[i, j] = float(cell)
            except ValueError:
                raise NonFiniteSample(LEAD_NAMES[j], i) from None

    for j, name in enumerate(LEAD_NAMES):
        bad = np.flatnonzero(~np.isfinite(cols[:, j]))
        if bad.size:
            raise NonFiniteSample(name, int(bad[0]))

    fs = int(sidecar.get("fs", fs_hint or 0))
    if fs <= 0:
        raise BadHeader("sampling rate missing: provide a sidecar fs or fs_hint")
    units = sidecar.get("units", "mV")
    if units != "mV":
        raise BadHeader(f"amplitudes must be in mV, sidecar says {units!r}")

    rec = EcgRecord(
        id=str(sidecar.get("id", "")),
        fs=fs,
        leads={n: cols[:, j].copy() for j, n in enumerate(LEAD_NAMES)},
        labels=DiagnosisVector.from_string(str(sidecar.get("labels", ""))),
    )
    if rec.n_samples < MIN_WINDOW_S * fs:
        raise LengthMismatch(
            f"record holds {rec.duration_s:.2f} s, needs >= {MIN_WINDOW_S} s"
        )
    return rec


def load_record(csv_path: str | Path, fs_hint: int | None = None) -> EcgRecord:
    """Read `<id>.csv` plus its `<id>.json` sidecar from disk."""
    csv_path = Path(csv_path)
    sidecar_path = csv_path.with_suffix(".json")
    try:
        data = csv_path.read_bytes()
    except OSError as e:
        raise IoFailure(f"cannot read {csv_path}: {e}") from e
    sidecar = None
    if sidecar_path.exists():
        try:
            sidecar = json.loads(sidecar_path.read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise IoFailure(f"cannot read sidecar {sidecar_path}: {e}") from e
    rec = parse_record(data, fs_hint=fs_hint, sidecar=sidecar)
    if not rec.id:
        rec.id = csv_path.stem
    return rec


def save_record(rec: EcgRecord, csv_path: str | Path) -> None:
    """Write a record as CSV + JSON sidecar (the documented interchange)."""
    csv_path = Path(csv_path)
    mat = rec.lead_matrix()
    lines = [",".join(LEAD_NAMES)]
    for row in mat:
        lines.append(",".join(repr(float(v)) for v in row))
    try:
        csv_path.write_text("\n".join(lines) + "\n", "utf-8")
        csv_path.with_suffix(".json").write_text(
            json.dumps(
                {"id": rec.id, "fs": rec.fs, "units": "mV",
                 "labels": rec.labels.to_string()},
                indent=2,
            ),
            "utf-8",
        )
    except OSError as e:
        raise IoFailure(f"cannot write {csv_path}: {e}") from e
