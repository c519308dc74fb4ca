"""Dense tubal-matrix algebra.

A tubal matrix is a real order-3 array of shape (n, p, l): an n-by-p matrix
whose entries are length-l tubes. Multiplication is defined through the
block-circulant embedding of the tubes and is computed slice-wise in the DFT
domain along the third axis. All operations here are pure functions on
float64 arrays; the brute-force block-circulant routines exist as a testing
oracle only.
"""

from __future__ import annotations

import struct
from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatch, FileFormatError, ImaginaryResidue

_TT_MAGIC = b"TTEN"
_TT_VERSION = 1

# The dense block-circulant embedding is quadratic in l and only meant for
# cross-checking small instances.
BCIRC_MAX_ENTRIES = 4_000_000

# Relative ceiling on the imaginary part an inverse tube DFT may discard.
IMAG_RESIDUE_TOL = 1e-8


def as_tensor(x, name: str = "tensor") -> np.ndarray:
    """Validate and return a tubal matrix as a float64 array of shape (n, p, l)."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 3:
        raise DimensionMismatch(f"{name} must be a 3-way array, got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise DimensionMismatch(f"{name} has an empty axis: shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def _num_independent_slices(l: int) -> int:
    # DFT slices of a real tensor beyond this index mirror the earlier ones.
    return l // 2 + 1


def _is_self_conjugate(k: int, l: int) -> bool:
    return k == 0 or (l % 2 == 0 and k == l // 2)


def _fill_conjugate(blocks: np.ndarray) -> np.ndarray:
    """Complete DFT slices h..l-1 in place as conjugates of their mirrors."""
    l = blocks.shape[2]
    for k in range(_num_independent_slices(l), l):
        blocks[:, :, k] = np.conj(blocks[:, :, l - k])
    return blocks


def to_fourier(x) -> np.ndarray:
    """DFT of every tube; returns the complex frontal slices as an (n, p, l) array."""
    return np.fft.fft(as_tensor(x), axis=2)


def from_fourier(blocks) -> np.ndarray:
    """Inverse tube DFT back to a real tubal matrix.

    Raises ImaginaryResidue when the imaginary part left by the inverse
    transform exceeds IMAG_RESIDUE_TOL relative to the result's magnitude,
    which signals frontal slices that were not conjugate-symmetric.
    """
    blocks = np.asarray(blocks, dtype=np.complex128)
    if blocks.ndim != 3:
        raise DimensionMismatch(f"expected 3-way slice stack, got shape {blocks.shape}")
    spatial = np.fft.ifft(blocks, axis=2)
    scale = max(1.0, float(np.abs(spatial.real).max(initial=0.0)))
    residue = float(np.abs(spatial.imag).max(initial=0.0))
    if residue > IMAG_RESIDUE_TOL * scale:
        raise ImaginaryResidue(
            f"imaginary residue {residue:.3e} exceeds {IMAG_RESIDUE_TOL:.0e} * {scale:.3e}"
        )
    return np.ascontiguousarray(spatial.real)


def t_product(x, y) -> np.ndarray:
    """Tubal matrix product, computed slice-wise in the DFT domain.

    Only the first l//2 + 1 slice products are formed; the remaining slices
    are conjugate mirrors because both operands are real.
    """
    x = as_tensor(x, "left operand")
    y = as_tensor(y, "right operand")
    n, p, l = x.shape
    p2, r, l2 = y.shape
    if p != p2 or l != l2:
        raise DimensionMismatch(f"cannot multiply {x.shape} by {y.shape}")
    xh = np.fft.fft(x, axis=2)
    yh = np.fft.fft(y, axis=2)
    zh = np.empty((n, r, l), dtype=np.complex128)
    for k in range(_num_independent_slices(l)):
        if _is_self_conjugate(k, l):
            zh[:, :, k] = xh[:, :, k].real @ yh[:, :, k].real
        else:
            zh[:, :, k] = xh[:, :, k] @ yh[:, :, k]
    _fill_conjugate(zh)
    return from_fourier(zh)


def t_transpose(x) -> np.ndarray:
    """Transpose each frontal slice and reverse the order of slices 2..l."""
    x = as_tensor(x)
    flipped = x.transpose(1, 0, 2)
    return np.ascontiguousarray(
        np.concatenate([flipped[:, :, :1], flipped[:, :, :0:-1]], axis=2)
    )


def identity(n: int, l: int) -> np.ndarray:
    """Identity tubal matrix: unit first frontal slice, zeros elsewhere."""
    if n < 1 or l < 1:
        raise ValueError("identity needs n >= 1 and l >= 1")
    out = np.zeros((n, n, l))
    out[:, :, 0] = np.eye(n)
    return out


def f_diag(v) -> np.ndarray:
    """Place the tubes of a tubal vector (n, 1, l) on the diagonal of an (n, n, l) tensor."""
    v = as_tensor(v, "tubal vector")
    n, one, l = v.shape
    if one != 1:
        raise DimensionMismatch(f"expected an (n, 1, l) tubal vector, got {v.shape}")
    out = np.zeros((n, n, l))
    idx = np.arange(n)
    out[idx, idx, :] = v[:, 0, :]
    return out


def fro_norm(x) -> float:
    """Entrywise Frobenius norm."""
    return float(np.linalg.norm(as_tensor(x)))


def fourier_singular_values(x) -> np.ndarray:
    """Per-slice singular values of the DFT slices, as a (min(n, p), l) array.

    Column k holds the nonincreasing singular values of slice k; mirrored
    slices share values with their conjugates, so only half are computed.
    """
    x = as_tensor(x)
    n, p, l = x.shape
    xh = np.fft.fft(x, axis=2)
    sv = np.empty((min(n, p), l))
    for k in range(_num_independent_slices(l)):
        a = xh[:, :, k].real if _is_self_conjugate(k, l) else xh[:, :, k]
        sv[:, k] = np.linalg.svd(a, compute_uv=False)
    for k in range(_num_independent_slices(l), l):
        sv[:, k] = sv[:, l - k]
    return sv


def default_rank_tol(shape, smax: float) -> float:
    """Default threshold below which a singular value counts as zero."""
    n, p = shape[0], shape[1]
    return np.finfo(np.float64).eps * max(n, p) * smax


class ThinTSVD(NamedTuple):
    """Thin tubal SVD factors: x = u * s * t_transpose(v) with tubal rank `rank`.

    `slice_singular_values` keeps the per-DFT-slice singular values of the
    retained factors as a (rank, l) array for rank and conditioning checks.
    """

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray
    rank: int
    slice_singular_values: np.ndarray


def thin_t_svd(x, tol: float | None = None) -> ThinTSVD:
    """Thin tubal SVD via one matrix SVD per independent DFT slice."""
    x = as_tensor(x)
    n, p, l = x.shape
    m = min(n, p)
    xh = np.fft.fft(x, axis=2)
    uh = np.empty((n, m, l), dtype=np.complex128)
    vh = np.empty((p, m, l), dtype=np.complex128)
    sv = np.empty((m, l))
    for k in range(_num_independent_slices(l)):
        a = xh[:, :, k].real if _is_self_conjugate(k, l) else xh[:, :, k]
        u, s, vt = np.linalg.svd(a, full_matrices=False)
        uh[:, :, k] = u
        sv[:, k] = s
        vh[:, :, k] = vt.conj().T
    for k in range(_num_independent_slices(l), l):
        uh[:, :, k] = np.conj(uh[:, :, l - k])
        vh[:, :, k] = np.conj(vh[:, :, l - k])
        sv[:, k] = sv[:, l - k]
    if tol is None:
        tol = default_rank_tol((n, p), float(sv.max(initial=0.0)))
    rank = int(np.count_nonzero(sv.max(axis=1) > tol))
    sv = sv[:rank, :]
    sh = np.zeros((rank, rank, l), dtype=np.complex128)
    idx = np.arange(rank)
    sh[idx, idx, :] = sv
    return ThinTSVD(
        u=from_fourier(uh[:, :rank, :]),
        s=from_fourier(sh),
        v=from_fourier(vh[:, :rank, :]),
        rank=rank,
        slice_singular_values=sv,
    )


def tubal_rank(x, tol: float | None = None) -> int:
    """Number of singular tubes whose largest slice value exceeds `tol`."""
    if tol is not None and tol < 0:
        raise ValueError("tolerance must be nonnegative")
    sv = fourier_singular_values(x)
    if tol is None:
        tol = default_rank_tol(np.asarray(x).shape, float(sv.max(initial=0.0)))
    return int(np.count_nonzero(sv.max(axis=1) > tol))


def t_pinv(x) -> np.ndarray:
    """Moore-Penrose inverse, taken slice-wise in the DFT domain."""
    x = as_tensor(x)
    n, p, l = x.shape
    yh = np.empty((p, n, l), dtype=np.complex128)
    xh = np.fft.fft(x, axis=2)
    for k in range(_num_independent_slices(l)):
        a = xh[:, :, k].real if _is_self_conjugate(k, l) else xh[:, :, k]
        yh[:, :, k] = np.linalg.pinv(a)
    _fill_conjugate(yh)
    return from_fourier(yh)


def extremal_singular_values(x) -> tuple[float, float, float]:
    """(smallest, largest, condition number) over all DFT-slice singular values.

    These coincide with the extremal singular values of the dense
    block-circulant embedding. The condition number is inf when the smallest
    value is zero.
    """
    sv = fourier_singular_values(x)
    smin = float(sv.min())
    smax = float(sv.max())
    kappa = smax / smin if smin > 0.0 else float("inf")
    return smin, smax, kappa


# -- block-circulant oracle (testing only) ----------------------------------


def unfold(x) -> np.ndarray:
    """Stack the frontal slices vertically into an (n*l, p) matrix."""
    x = as_tensor(x)
    n, p, l = x.shape
    return x.transpose(2, 0, 1).reshape(n * l, p)


def fold(mat, n: int, l: int) -> np.ndarray:
    """Inverse of unfold for an (n*l, p) matrix."""
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != n * l:
        raise DimensionMismatch(f"cannot fold shape {mat.shape} into ({n}, ., {l})")
    return np.ascontiguousarray(mat.reshape(l, n, mat.shape[1]).transpose(1, 2, 0))


def bcirc(x) -> np.ndarray:
    """Dense block-circulant embedding of shape (n*l, p*l).

    Block column c holds the frontal slices cyclically shifted down by c.
    Guarded against large instances; this is a brute-force testing oracle.
    """
    x = as_tensor(x)
    n, p, l = x.shape
    if n * l * p * l > BCIRC_MAX_ENTRIES:
        raise ValueError(
            f"block-circulant embedding would hold {n * l * p * l} entries "
            f"(limit {BCIRC_MAX_ENTRIES}); this oracle is for small instances"
        )
    out = np.empty((n * l, p * l))
    for c in range(l):
        for r in range(l):
            out[r * n : (r + 1) * n, c * p : (c + 1) * p] = x[:, :, (r - c) % l]
    return out


def bcirc_product(x, y) -> np.ndarray:
    """Brute-force t-product through the dense block-circulant embedding."""
    y = as_tensor(y, "right operand")
    return fold(bcirc(x) @ unfold(y), x.shape[0], x.shape[2])


# -- binary tensor file format ----------------------------------------------


def write_tensor(x, path) -> None:
    """Write a tubal matrix in the .tt binary format.

    Layout: magic "TTEN", u32 LE version, n/p/l as u64 LE, then n*p*l float64
    LE values ordered slice-major with columns varying before rows reversed,
    i.e. index order k (slowest), j, i (fastest).
    """
    x = as_tensor(x)
    n, p, l = x.shape
    with open(path, "wb") as fh:
        fh.write(_TT_MAGIC)
        fh.write(struct.pack("<I", _TT_VERSION))
        fh.write(struct.pack("<QQQ", n, p, l))
        fh.write(x.astype("<f8").ravel(order="F").tobytes())


def read_tensor(path) -> np.ndarray:
    """Read a tubal matrix from the .tt binary format."""
    with open(path, "rb") as fh:
        payload = fh.read()
    header = struct.calcsize("<4sIQQQ")
    if len(payload) < header:
        raise FileFormatError(f"{path}: truncated header")
    magic, version, n, p, l = struct.unpack_from("<4sIQQQ", payload)
    if magic != _TT_MAGIC:
        raise FileFormatError(f"{path}: bad magic {magic!r}")
    if version != _TT_VERSION:
        raise FileFormatError(f"{path}: unsupported version {version}")
    data = np.frombuffer(payload, dtype="<f8", offset=header)
    if data.size != n * p * l:
        raise FileFormatError(
            f"{path}: expected {n * p * l} values, found {data.size}"
        )
    arr = np.ascontiguousarray(data.reshape((n, p, l), order="F"))
    try:
        return as_tensor(arr, name=str(path))
    except ValueError as exc:
        raise FileFormatError(str(exc)) from exc
