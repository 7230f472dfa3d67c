"""Dense complex tensors with labelled legs.

Every tensor in the package carries an ordered tuple of string labels, one per
leg.  Contractions pair legs by label, grouping of legs into matrices uses
row-major index fusion (leftmost leg most significant).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class DenseTensor:
    """Immutable complex array whose legs are addressed by label."""

    data: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        data = np.array(self.data, dtype=np.complex128)
        labels = tuple(self.labels)
        if data.ndim != len(labels):
            raise ValueError(f"{len(labels)} labels for a rank-{data.ndim} tensor")
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate leg labels {labels}")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "labels", labels)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def dim(self, label: str) -> int:
        return self.data.shape[self.axis(label)]

    def axis(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown leg label {label!r}; legs are {self.labels}") from None

    def conj(self) -> DenseTensor:
        return DenseTensor(self.data.conj(), self.labels)

    def relabel(self, mapping: dict[str, str]) -> DenseTensor:
        return DenseTensor(self.data, tuple(mapping.get(lab, lab) for lab in self.labels))

    def transpose(self, labels: Sequence[str]) -> DenseTensor:
        if sorted(labels) != sorted(self.labels):
            raise ValueError(f"transpose labels {tuple(labels)} do not match {self.labels}")
        return DenseTensor(self.data.transpose([self.axis(lab) for lab in labels]), tuple(labels))

    def __add__(self, other: DenseTensor) -> DenseTensor:
        other = other.transpose(self.labels)
        return DenseTensor(self.data + other.data, self.labels)

    def __mul__(self, scalar: complex) -> DenseTensor:
        return DenseTensor(self.data * scalar, self.labels)

    __rmul__ = __mul__


def contract(a: DenseTensor, legs_a: Sequence[str], b: DenseTensor, legs_b: Sequence[str]) -> DenseTensor:
    """Sum over paired legs ``legs_a[k] <-> legs_b[k]``.

    The result keeps the remaining legs of ``a`` followed by those of ``b`` in
    their original order.  Remaining labels must not collide.
    """
    if len(legs_a) != len(legs_b):
        raise ValueError("pairing lists have different lengths")
    if len(set(legs_a)) != len(legs_a) or len(set(legs_b)) != len(legs_b):
        raise ValueError("a label is repeated within a pairing list")
    axes_a = [a.axis(lab) for lab in legs_a]
    axes_b = [b.axis(lab) for lab in legs_b]
    for la, lb, xa, xb in zip(legs_a, legs_b, axes_a, axes_b):
        if a.shape[xa] != b.shape[xb]:
            raise ValueError(f"dimension mismatch pairing {la!r} ({a.shape[xa]}) with {lb!r} ({b.shape[xb]})")
    rest = [lab for lab in a.labels if lab not in legs_a] + [lab for lab in b.labels if lab not in legs_b]
    if len(set(rest)) != len(rest):
        raise ValueError(f"open legs collide after contraction: {rest}")
    return DenseTensor(np.tensordot(a.data, b.data, axes=(axes_a, axes_b)), tuple(rest))


def outer(a: DenseTensor, b: DenseTensor) -> DenseTensor:
    return contract(a, [], b, [])


def trace_pairs(t: DenseTensor, pairs: Iterable[tuple[str, str]]) -> DenseTensor:
    """Trace out each (ket, bra) label pair of ``t``."""
    out = t
    for ket, bra in pairs:
        i, j = out.axis(ket), out.axis(bra)
        labels = tuple(lab for lab in out.labels if lab not in (ket, bra))
        out = DenseTensor(np.trace(out.data, axis1=i, axis2=j), labels)
    return out


def flatten(t: DenseTensor, row_legs: Sequence[str], col_legs: Sequence[str]) -> np.ndarray:
    """Group legs into a matrix with row-major index fusion."""
    legs = list(row_legs) + list(col_legs)
    if sorted(legs) != sorted(t.labels):
        raise ValueError(f"legs {legs} must be exactly {t.labels}")
    tt = t.transpose(legs)
    nrow = int(np.prod([t.dim(lab) for lab in row_legs], dtype=int))
    return tt.data.reshape(nrow, -1).copy()


def unflatten(
    m: np.ndarray,
    row_legs: Sequence[tuple[str, int]],
    col_legs: Sequence[tuple[str, int]],
) -> DenseTensor:
    """Inverse of :func:`flatten`; legs are given as ``(label, dim)`` pairs."""
    legs = list(row_legs) + list(col_legs)
    shape = tuple(dim for _, dim in legs)
    m = np.asarray(m)
    if m.size != int(np.prod(shape, dtype=int)):
        raise ValueError(f"matrix of size {m.size} cannot take leg shape {shape}")
    return DenseTensor(m.reshape(shape), tuple(lab for lab, _ in legs))


def singular_values(m: np.ndarray) -> np.ndarray:
    """Singular values in descending order (LAPACK gesdd, deterministic)."""
    m = np.asarray(m, dtype=np.complex128)
    if m.ndim != 2:
        raise ValueError("singular_values expects a matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError("non-finite matrix entries")
    return np.linalg.svd(m, compute_uv=False)


def check_isometry(v: np.ndarray, tol: float = DEFAULT_TOL) -> tuple[bool, float]:
    """Return ``(V^dagger V == 1 within tol, max entry deviation)``."""
    v = np.asarray(v, dtype=np.complex128)
    rows, cols = v.shape
    if rows < cols:
        raise ValueError(f"a {rows}x{cols} matrix cannot be an isometry")
    dev = float(np.max(np.abs(v.conj().T @ v - np.eye(cols)))) if cols else 0.0
    return dev <= tol, dev


def tensor_to_record(t: DenseTensor) -> dict:
    """Structured-text form ``{leg_labels, shape, data}`` with ``[re, im]`` pairs."""
    flat = t.data.reshape(-1)
    return {
        "leg_labels": list(t.labels),
        "shape": list(t.shape),
        "data": [[float(z.real), float(z.imag)] for z in flat],
    }


def tensor_from_record(rec: dict) -> DenseTensor:
    shape = tuple(int(s) for s in rec["shape"])
    pairs = np.asarray(rec["data"], dtype=float).reshape(-1, 2)
    if pairs.shape[0] != int(np.prod(shape, dtype=int)):
        raise ValueError("entry count does not match shape")
    data = (pairs[:, 0] + 1j * pairs[:, 1]).reshape(shape)
    return DenseTensor(data, tuple(rec["leg_labels"]))


def haar_isometry(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random ``rows x cols`` isometry via QR with phase correction."""
    z = (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def haar_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    return haar_isometry(n, n, rng)
