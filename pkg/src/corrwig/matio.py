"""Binary matrix persistence.

Real matrices: an 8-byte little-endian unsigned dimension header followed by
N*N little-endian float64 values in row-major order.  Complex Hermitian
matrices: the same header followed by N*N row-major complex128 values
(interleaved float64 re/im pairs).  The reader distinguishes the two layouts
by file size.
"""

from __future__ import annotations

import numpy as np

_HEADER = np.dtype("<u8")


def matrix_to_bytes(m) -> bytes:
    m = np.asarray(m)
    n = m.shape[0]
    if m.shape != (n, n):
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    header = np.array([n], dtype=_HEADER).tobytes()
    if np.iscomplexobj(m):
        body = np.ascontiguousarray(m, dtype="<c16").tobytes()
    else:
        body = np.ascontiguousarray(m, dtype="<f8").tobytes()
    return header + body


def matrix_from_bytes(buf) -> np.ndarray:
    n = int(np.frombuffer(buf[:8], dtype=_HEADER)[0])
    body = buf[8:]
    if len(body) == 8 * n * n:
        return np.frombuffer(body, dtype="<f8").reshape(n, n).copy()
    if len(body) == 16 * n * n:
        return np.frombuffer(body, dtype="<c16").reshape(n, n).copy()
    raise ValueError(f"byte length {len(buf)} inconsistent with dimension {n}")


def write_matrix(path, m):
    with open(path, "wb") as fh:
        fh.write(matrix_to_bytes(m))


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return matrix_from_bytes(fh.read())
