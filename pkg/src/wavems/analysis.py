"""Frequency responses of the learned time-domain filters.

Each front-end branch holds a bank of 1-D filters; their zero-padded DFT
magnitudes, sorted by the frequency of the response peak, make the learned
filterbank visible (most filters turn band-pass after training). Pure
functions over immutable weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import Model


@dataclass
class ResponseMatrix:
    branch_id: int
    values: np.ndarray        # (num_filters, nfft//2 + 1), row max 1 (or all-zero)
    central_freqs: np.ndarray  # Hz per row, non-decreasing
    bin_freqs: np.ndarray      # Hz per column
    filter_order: np.ndarray   # original filter index per row


def filter_response(weights: np.ndarray, nfft: int = 2048,
                    sample_rate: int = 44100) -> np.ndarray:
    """Magnitude of the DFT of a filter zero-padded to ``nfft``.

    Returns bins 0..nfft/2; bin b sits at b * sample_rate / nfft Hz.
    """
    weights = np.asarray(weights, dtype=np.float64).ravel()
    if nfft < len(weights):
        raise ValueError(f"nfft {nfft} < filter length {len(weights)}")
    return np.abs(np.fft.rfft(weights, n=nfft))


def central_frequency(magnitude: np.ndarray, sample_rate: int = 44100,
                      nfft: int = 2048) -> float:
    """Frequency of the maximum-magnitude bin (lowest bin on ties).

    An all-zero response maps to 0 Hz.
    """
    magnitude = np.asarray(magnitude)
    if magnitude.size == 0:
        raise ValueError("empty magnitude array")
    if not magnitude.any():
        return 0.0
    return int(np.argmax(magnitude)) * sample_rate / nfft


def spectral_centroid(magnitude: np.ndarray, sample_rate: int = 44100,
                      nfft: int = 2048) -> float:
    """Magnitude-weighted mean frequency; secondary summary of a response."""
    magnitude = np.asarray(magnitude, dtype=np.float64)
    total = magnitude.sum()
    if total == 0.0:
        return 0.0
    freqs = np.arange(magnitude.size) * sample_rate / nfft
    return float((freqs * magnitude).sum() / total)


def response_matrix(model: Model, branch_id: int, nfft: int = 2048) -> ResponseMatrix:
    """Sorted, per-row max-normalized response matrix for one branch.

    ``branch_id`` is 1-based. Rows are ordered by ascending central
    frequency; the sort is stable, so equal peaks keep filter-index order.
    """
    n_branches = len(model.config.branches)
    if not 1 <= branch_id <= n_branches:
        raise ValueError(f"branch_id must be in 1..{n_branches}, got {branch_id}")
    sr = model.config.sample_rate
    weights = model.param(f"branch{branch_id}.conv.weight").value.data

    rows = []
    centers = []
    for f in range(weights.shape[0]):
        mag = filter_response(weights[f, 0], nfft=nfft, sample_rate=sr)
        centers.append(central_frequency(mag, sample_rate=sr, nfft=nfft))
        peak = mag.max()
        rows.append(mag / peak if peak > 0 else mag)

    centers = np.array(centers)
    order = np.argsort(centers, kind="stable")
    return ResponseMatrix(
        branch_id=branch_id,
        values=np.stack([rows[i] for i in order]),
        central_freqs=centers[order],
        bin_freqs=np.arange(nfft // 2 + 1) * sr / nfft,
        filter_order=order,
    )


def response_csv(matrix: ResponseMatrix) -> str:
    header = "central_freq_hz," + ",".join(f"{f:.6g}" for f in matrix.bin_freqs)
    lines = [header]
    for center, row in zip(matrix.central_freqs, matrix.values):
        lines.append(f"{center:.6g}," + ",".join(f"{v:.6g}" for v in row))
    return "\n".join(lines) + "\n"


def response_pgm(matrix: ResponseMatrix) -> bytes:
    """8-bit binary PGM: one row per filter, value = round(255 * magnitude)."""
    h, w = matrix.values.shape
    pixels = np.clip(np.round(matrix.values * 255.0), 0, 255).astype(np.uint8)
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def export_response_matrix(matrix: ResponseMatrix, out_dir: str | Path) -> list[Path]:
    """Write branch<N>_response.csv and .pgm; returns the written paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"branch{matrix.branch_id}_response.csv"
        pgm_path = out / f"branch{matrix.branch_id}_response.pgm"
        csv_path.write_text(response_csv(matrix), encoding="ascii")
        pgm_path.write_bytes(response_pgm(matrix))
    except OSError as exc:
        raise OSError(f"cannot write filter responses under {out}: {exc}") from exc
    return [csv_path, pgm_path]


def export_all_branches(model: Model, out_dir: str | Path,
                        nfft: int = 2048) -> list[Path]:
    paths = []
    for branch_id in range(1, len(model.config.branches) + 1):
        paths.extend(export_response_matrix(response_matrix(model, branch_id, nfft), out_dir))
    return paths
