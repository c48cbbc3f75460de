"""Synthetic 12-lead waveform generator for demos and toy experiments.

Not a physiological simulator: it produces plausible-looking P-QRS-T shapes
whose morphology shifts with each diagnosis label, so a image classifier has
a real (if easy) signal to learn. Deterministic per seed.
"""
from __future__ import annotations

import numpy as np

from .waveform import LEAD_NAMES, DiagnosisVector, EcgRecord

# rough per-lead projection of the synthetic dipole; values in mV multipliers
LEAD_GAIN = {
    "I": 0.7, "II": 1.0, "III": 0.45, "aVR": -0.85, "aVL": 0.3, "aVF": 0.75,
    "V1": -0.45, "V2": 0.65, "V3": 0.95, "V4": 1.1, "V5": 1.0, "V6": 0.85,
}


def _bump(t: np.ndarray, centre: float, width: float, height: float) -> np.ndarray:
    return height * np.exp(-0.5 * ((t - centre) / width) ** 2)


def _beat(t: np.ndarray, labels: DiagnosisVector, rng: np.random.Generator) -> np.ndarray:
    """One beat on t in [0, 1), normalised to ~1 mV R peak before lead gain."""
    qrs_w = 0.018 * (2.2 if labels.cd else 1.0)
    r_h = 1.0 * (1.7 if labels.hyp else 1.0)
    t_h = 0.28 * (-0.8 if labels.sttc else 1.0)

    wave = np.zeros_like(t)
    if not labels.af:
        wave += _bump(t, 0.16, 0.025, 0.12)          # P
    wave += _bump(t, 0.30, qrs_w, -0.16 * r_h)       # Q
    wave += _bump(t, 0.33, qrs_w, r_h)               # R
    wave += _bump(t, 0.36, qrs_w * 1.2, -0.24 * r_h)  # S
    wave += _bump(t, 0.55, 0.045, t_h)               # T
    if labels.mi:
        # ST elevation: plateau between S and T
        st = np.clip((t - 0.38) / 0.02, 0, 1) * np.clip((0.50 - t) / 0.02, 0, 1)
        wave += 0.22 * np.minimum(st, 1.0)
    if labels.sttc:
        st = np.clip((t - 0.38) / 0.02, 0, 1) * np.clip((0.50 - t) / 0.02, 0, 1)
        wave -= 0.12 * np.minimum(st, 1.0)
    return wave


def synth_record(
    record_id: str,
    seed: int,
    labels: DiagnosisVector = DiagnosisVector(),
    fs: int = 200,
    duration_s: float = 10.0,
) -> EcgRecord:
    """Generate a 12-lead record whose shape encodes the given labels."""
    rng = np.random.default_rng(seed)
    n = int(round(fs * duration_s))
    tt = np.arange(n) / fs

    rate_hz = rng.uniform(1.0, 1.4)  # 60-84 bpm
    beat_s = 1.0 / rate_hz
    jitter_frac = 0.18 if labels.af else 0.02

    starts = []
    t0 = -rng.uniform(0.0, beat_s)
    while t0 < duration_s:
        starts.append(t0)
        t0 += beat_s * (1.0 + rng.uniform(-jitter_frac, jitter_frac))

    base = np.zeros(n)
    for s in starts:
        inside = (tt >= s) & (tt < s + beat_s)
        local = (tt[inside] - s) / beat_s
        base[inside] += _beat(local, labels, rng)

    wander = 0.05 * np.sin(2 * np.pi * 0.25 * tt + rng.uniform(0, 2 * np.pi))
    fib = 0.04 * np.sin(2 * np.pi * 5.8 * tt + rng.uniform(0, 2 * np.pi)) if labels.af else 0.0

    leads = {}
    for name in LEAD_NAMES:
        noise = rng.normal(0.0, 0.012, size=n)
        leads[name] = LEAD_GAIN[name] * base + wander + fib + noise
    return EcgRecord(id=record_id, fs=fs, leads=leads, labels=labels)


def random_labels(rng: np.random.Generator) -> DiagnosisVector:
    """Multilabel draw with prevalences loosely matching a clinical mix."""
    rates = (0.25, 0.10, 0.14, 0.20, 0.24)
    flags = tuple(int(rng.random() < r) for r in rates)
    return DiagnosisVector(*flags)
