"""Feature-matrix rearrangement: slice along time, pad, flatten, recombine, cap.

With D coefficients and slice length N', element ``(d, t)`` of the MFCC
matrix lands at index ``(t // N') * D * N' + (t % N') * D + d`` of the
slice-major flattened result (right padding).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mfcc import FeatureMatrix


@dataclass(frozen=True)
class RearrangeConfig:
    slice_len: int = 150
    pad_side: str = "right"
    pad_value: float = 0.0
    recombine_axis: str = "y"
    max_dim: int = 2100

    def validate(self) -> None:
        if self.slice_len < 1:
            raise ValueError("slice_len must be >= 1")
        if self.max_dim < 1:
            raise ValueError("max_dim must be >= 1")
        if self.pad_side not in ("left", "right"):
            raise ValueError(f"pad_side must be 'left' or 'right', got {self.pad_side!r}")
        if self.recombine_axis not in ("x", "y"):
            raise ValueError(f"recombine_axis must be 'x' or 'y', got {self.recombine_axis!r}")


@dataclass(frozen=True)
class RearrangedMatrix:
    values: np.ndarray  # m x (D*N') for axis y, 1 x (m*D*N') for axis x
    m: int
    source_dims: tuple[int, int]


@dataclass(frozen=True)
class CappedVector:
    values: np.ndarray
    original_len: int


def n_slices(N: int, slice_len: int) -> int:
    return math.ceil(N / slice_len)


def slice_matrix(M: FeatureMatrix | np.ndarray, slice_len: int) -> list[np.ndarray]:
    values = M.values if isinstance(M, FeatureMatrix) else np.asarray(M)
    if slice_len < 1:
        raise ValueError("slice_len must be >= 1")
    N = values.shape[1]
    return [values[:, i : i + slice_len] for i in range(0, N, slice_len)]


def pad_slice(s: np.ndarray, slice_len: int, side: str = "right", value: float = 0.0) -> np.ndarray:
    D, n = s.shape
    if n > slice_len:
        raise ValueError(f"slice has {n} columns, wider than slice_len {slice_len}")
    if n == slice_len:
        return s
    fill = np.full((D, slice_len - n), value, dtype=np.float64)
    return np.hstack([s, fill] if side == "right" else [fill, s])


def flatten_slice(ps: np.ndarray) -> np.ndarray:
    """Time-major flattening: frame 0's coefficients, then frame 1's, ..."""
    return ps.T.reshape(-1)


def recombine(fs: list[np.ndarray], axis: str = "y", source_dims: tuple[int, int] = (0, 0)) -> RearrangedMatrix:
    if not fs:
        raise ValueError("nothing to recombine")
    lengths = {f.size for f in fs}
    if len(lengths) != 1:
        raise ValueError(f"flattened slices have mixed lengths {sorted(lengths)}")
    stacked = np.stack(fs)
    values = stacked if axis == "y" else stacked.reshape(1, -1)
    return RearrangedMatrix(values, len(fs), source_dims)


def cap_vector(Mp: RearrangedMatrix, max_dim: int, pad_value: float = 0.0) -> CappedVector:
    if max_dim < 1:
        raise ValueError("max_dim must be >= 1")
    flat = Mp.values.reshape(-1)
    out = np.full(max_dim, pad_value, dtype=np.float64)
    k = min(max_dim, flat.size)
    out[:k] = flat[:k]
    return CappedVector(out, flat.size)


def rearrange_matrix(M: FeatureMatrix, config: RearrangeConfig) -> RearrangedMatrix:
    slices = slice_matrix(M, config.slice_len)
    padded = [pad_slice(s, config.slice_len, config.pad_side, config.pad_value) for s in slices]
    return recombine([flatten_slice(p) for p in padded], config.recombine_axis, (M.D, M.N))


def rearrange_pipeline(M: FeatureMatrix, config: RearrangeConfig) -> CappedVector:
    config.validate()
    return cap_vector(rearrange_matrix(M, config), config.max_dim, config.pad_value)
