"""Quantum channels induced by site isometries and their depolarizing split.

Tracing the physical leg of a site isometry V gives the CPTP map
rho -> sum_i V^i rho V^i^dagger on the ancilla pair.  For injective sites the
map contains a depolarizing component of weight eta = dim_out * delta^2, which
:func:`depolarizing_split` extracts explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .site import SiteTensor
from .tensor_core import DEFAULT_TOL, singular_values

# eigenvalues of 1 - eta*M within this slack below zero are rounding noise
PSD_SLACK = 1e-10


@dataclass(frozen=True)
class QuantumChannel:
    """Kraus representation ``rho -> sum_k K_k rho K_k^dagger``.

    ``trace_scale`` is 1 for CPTP maps.  The non-depolarizing part of a split
    is stored unnormalized and carries ``trace_scale = 1 - eta``.
    """

    dim_in: int
    dim_out: int
    kraus: tuple[np.ndarray, ...]
    trace_scale: float = 1.0
    tol: float = DEFAULT_TOL

    def __post_init__(self) -> None:
        ks = tuple(np.asarray(k, dtype=np.complex128) for k in self.kraus)
        if not ks:
            raise ValueError("a channel needs at least one Kraus operator")
        for k in ks:
            if k.shape != (self.dim_out, self.dim_in):
                raise ValueError(f"Kraus operator of shape {k.shape}, expected {(self.dim_out, self.dim_in)}")
            k.flags.writeable = False
        object.__setattr__(self, "kraus", ks)
        dev = np.max(np.abs(self.kraus_sum() - self.trace_scale * np.eye(self.dim_in)))
        if dev > self.tol:
            raise ValueError(f"sum K^dag K deviates from {self.trace_scale}*identity by {dev:.3e}")

    @classmethod
    def from_stack(cls, stack: np.ndarray, trace_scale: float = 1.0, tol: float = DEFAULT_TOL) -> QuantumChannel:
        stack = np.asarray(stack)
        return cls(stack.shape[2], stack.shape[1], tuple(stack), trace_scale, tol)

    def stack(self) -> np.ndarray:
        return np.stack(self.kraus)

    def kraus_sum(self) -> np.ndarray:
        s = self.stack()
        return np.einsum("kab,kac->bc", s.conj(), s)

    def normalized(self) -> QuantumChannel:
        if self.trace_scale <= 0:
            raise ValueError("cannot normalize a channel with zero trace scale")
        c = 1.0 / np.sqrt(self.trace_scale)
        return QuantumChannel(self.dim_in, self.dim_out, tuple(c * k for k in self.kraus), 1.0, self.tol)


def apply(c: QuantumChannel, rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.shape != (c.dim_in, c.dim_in):
        raise ValueError(f"state of shape {rho.shape} for a channel on dimension {c.dim_in}")
    s = c.stack()
    return np.einsum("kab,bc,kdc->ad", s, rho, s.conj())


def choi(c: QuantumChannel) -> np.ndarray:
    """Choi matrix sum_ij |i><j| (x) E(|i><j|), input factor first."""
    s = c.stack()
    # vec_k[(i, a)] = K_k[a, i]
    vecs = s.transpose(0, 2, 1).reshape(len(c.kraus), -1)
    return vecs.T @ vecs.conj()


def choi_partial_trace_output(j: np.ndarray, dim_in: int, dim_out: int) -> np.ndarray:
    return np.trace(j.reshape(dim_in, dim_out, dim_in, dim_out), axis1=1, axis2=3)


def depolarizing_channel(dim: int, dim_out: int | None = None) -> QuantumChannel:
    """rho -> Tr(rho) * identity / dim_out."""
    if dim < 1:
        raise ValueError("dimension must be positive")
    dout = dim if dim_out is None else dim_out
    ks = []
    for a in range(dout):
        for b in range(dim):
            k = np.zeros((dout, dim), dtype=np.complex128)
            k[a, b] = 1 / np.sqrt(dout)
            ks.append(k)
    return QuantumChannel(dim, dout, tuple(ks))


def unitary_channel(u: np.ndarray) -> QuantumChannel:
    u = np.asarray(u, dtype=np.complex128)
    return QuantumChannel(u.shape[1], u.shape[0], (u,))


def kraus_from_choi(j: np.ndarray, dim_in: int, dim_out: int, cutoff: float = 0.0) -> np.ndarray:
    """Canonical (Hilbert-Schmidt orthogonal) Kraus operators from a Choi matrix.

    Returns a stack of shape (r, dim_out, dim_in), eigenvalues in descending order.
    """
    w, v = np.linalg.eigh(j)
    order = np.argsort(-w, kind="stable")
    w, v = w[order], v[:, order]
    keep = w > cutoff
    w, v = np.clip(w[keep], 0, None), v[:, keep]
    ks = (v * np.sqrt(w)).T.reshape(-1, dim_in, dim_out).transpose(0, 2, 1)
    return ks


def channel_from_isometry(v: SiteTensor) -> QuantumChannel:
    """Trace the physical leg: Kraus operators are the d slices V^i."""
    return QuantumChannel.from_stack(v.kraus(), tol=max(v.tol, DEFAULT_TOL))


@dataclass(frozen=True)
class InjectivityReport:
    delta: float
    eta: float
    sigma_max: float
    sigma_min: float
    bond_dim: int
    d: int
    dim_in: int
    dim_out: int

    def to_record(self) -> dict:
        return {
            "delta": self.delta,
            "eta": self.eta,
            "sigma_min": self.sigma_min,
            "sigma_max": self.sigma_max,
            "D": self.bond_dim,
            "d": self.d,
        }


def injectivity_delta(p: SiteTensor) -> InjectivityReport:
    """Smallest singular value of the PEPS map P (virtual -> physical).

    With fewer physical than virtual dimensions P has a kernel and the site
    is reported as non-injective (delta = 0).
    """
    pm = p.peps_matrix()
    sv = singular_values(pm)
    n_virtual = pm.shape[1]
    sigma_max = float(sv[0])
    if pm.shape[0] < n_virtual:
        sigma_min = 0.0
    else:
        sigma_min = float(sv[n_virtual - 1])
    delta = sigma_min
    return InjectivityReport(
        delta=delta,
        eta=delta**2 * p.dim_out,
        sigma_max=sigma_max,
        sigma_min=sigma_min,
        bond_dim=max(p.dims),
        d=p.d,
        dim_in=p.dim_in,
        dim_out=p.dim_out,
    )


@dataclass(frozen=True)
class DepolarizingSplit:
    """Phi = e1 + eta * depolarizing, with e1 carrying trace scale 1 - eta."""

    eta: float
    e1: QuantumChannel
    original: QuantumChannel

    def normalized_e1(self) -> QuantumChannel:
        return self.e1.normalized()

    def reconstruction_error(self) -> float:
        dep = depolarizing_channel(self.original.dim_in, self.original.dim_out)
        rebuilt = choi(self.e1) + self.eta * choi(dep)
        return float(np.max(np.abs(rebuilt - choi(self.original))))


def _sorted_eigh(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Descending eigenpairs; ties broken lexicographically on phase-fixed vectors."""
    w, q = np.linalg.eigh(a)
    for k in range(q.shape[1]):
        col = q[:, k]
        piv = int(np.argmax(np.abs(col) > 1e-12))
        q[:, k] = col * (abs(col[piv]) / col[piv])
    keys = [(-round(float(w[k]), 12), *[(round(z.real, 12), round(z.imag, 12)) for z in q[:, k]]) for k in range(len(w))]
    order = sorted(range(len(w)), key=lambda k: keys[k])
    return w[order], q[:, order]


def max_eta(p: SiteTensor) -> float:
    return injectivity_delta(p).eta


def depolarizing_split(p: SiteTensor, eta: float | None = None, tol: float = 1e-9) -> DepolarizingSplit:
    """Split the site channel into a depolarizing part of weight ``eta`` and the rest.

    Uses M = P^+dag P^+ / dim_out on the physical space, so that
    Tr_P[M V rho V^dag] = Tr(rho) * identity / dim_out.  The remainder has
    Kraus operators K_i = sqrt(lambda_i) <i|U V where 1 - eta*M = U^dag Lambda U.
    ``eta`` defaults to the largest admissible value dim_out * delta^2.
    """
    rep = injectivity_delta(p)
    if rep.delta <= 0:
        raise ValueError("site is not injective (delta = 0)")
    if eta is None:
        eta = rep.eta
    if eta < 0 or eta > rep.eta + tol:
        raise ValueError(f"eta={eta} outside the admissible range [0, {rep.eta}]")
    eta = float(min(eta, 1.0))
    pm = p.peps_matrix()
    pinv = np.linalg.pinv(pm)
    m = pinv.conj().T @ pinv / p.dim_out
    a = np.eye(p.d) - eta * m
    a = (a + a.conj().T) / 2
    lam, q = _sorted_eigh(a)
    if lam.min() < -PSD_SLACK:
        raise ValueError(f"1 - eta*M is not positive semidefinite (min eigenvalue {lam.min():.3e})")
    lam = np.clip(lam, 0.0, None)
    u = q.conj().T
    vk = p.kraus()
    ks = np.sqrt(lam)[:, None, None] * np.einsum("ij,jab->iab", u, vk)
    original = channel_from_isometry(p)
    e1 = QuantumChannel.from_stack(ks, trace_scale=1.0 - eta, tol=tol)
    return DepolarizingSplit(eta=eta, e1=e1, original=original)
