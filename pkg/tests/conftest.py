"""Shared builders for waveform records and rendered pages."""
from __future__ import annotations

import numpy as np
import pytest

from ecgpaper import DiagnosisVector, EcgRecord, GridConfig, render_record
from ecgpaper.waveform import LEAD_NAMES


def make_record(
    record_id: str = "rec",
    fs: int = 100,
    duration_s: float = 4.0,
    value: float = 0.0,
    labels: DiagnosisVector = DiagnosisVector(),
) -> EcgRecord:
    """Record whose every lead is the same constant value."""
    n = int(round(fs * duration_s))
    return EcgRecord(
        id=record_id,
        fs=fs,
        leads={name: np.full(n, value, dtype=np.float64) for name in LEAD_NAMES},
        labels=labels,
    )


@pytest.fixture(scope="session")
def small_cfg() -> GridConfig:
    return GridConfig(px_per_mm=4)


@pytest.fixture(scope="session")
def small_page(small_cfg):
    """A small rendered page reused by read-only tests."""
    return render_record(make_record(duration_s=4.0), small_cfg)


def ink_mask(pixels: np.ndarray, threshold: int = 90) -> np.ndarray:
    """Pixels dark enough to be trace ink rather than paper or grid."""
    return (pixels <= threshold).all(axis=2)
