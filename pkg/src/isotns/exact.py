"""Brute-force contraction of isoTNS lattices.

Two engines live here.  :func:`full_state` applies every site isometry to a
global statevector and is limited by the total physical dimension.  The
density-matrix sweep behind :func:`reduced_density_matrix` only touches the
past light cone of the requested sites and keeps the ancilla legs crossing
the current anti-diagonal, tracing physical legs and dead bonds as soon as
they appear.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .lattice import IsoTnsLattice, Site

STATE_CAP = 2**20
FRONTIER_CAP = 2**12


class CapExceededError(RuntimeError):
    """A dense intermediate would exceed its configured size cap."""


@dataclass(frozen=True)
class StateVector:
    """Amplitudes over the physical legs, sites in causal order (first site most significant)."""

    sites: tuple[Site, ...]
    dims: tuple[int, ...]
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        amps = np.asarray(self.amplitudes, dtype=np.complex128).reshape(-1)
        if amps.size != int(np.prod(self.dims, dtype=np.int64)):
            raise ValueError("amplitude count does not match site dimensions")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1) > 1e-8:
            raise ValueError(f"state has squared norm {norm}")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n_qudits(self) -> int:
        return len(self.sites)

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.dims)


@dataclass(frozen=True)
class Observable:
    """Hermitian operator on the physical leg of ``site``.

    ``factors`` selects physical factors (indices into ``phys_dims``) the
    operator acts on; ``None`` means the whole leg.
    """

    site: Site
    matrix: np.ndarray
    factors: tuple[int, ...] | None = field(default=None)

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("observable must be a square matrix")
        if np.max(np.abs(m - m.conj().T), initial=0.0) > 1e-10:
            raise ValueError("observable is not Hermitian")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "site", tuple(self.site))
        if self.factors is not None:
            object.__setattr__(self, "factors", tuple(int(f) for f in self.factors))

    def norm(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvalsh(self.matrix))))


def full_state(lat: IsoTnsLattice, cap: int = STATE_CAP) -> StateVector:
    order = lat.causal_order()
    total = int(np.prod([lat[s].d for s in order], dtype=np.int64))
    if total > cap:
        raise CapExceededError(f"physical dimension {total} exceeds the statevector cap {cap}")
    psi = np.ones((), dtype=np.complex128)
    labels: list = []
    for x, y in order:
        site = lat[(x, y)]
        arr = site.array
        dl, dd, dr, du = site.dims
        ins, axes = [], []
        if dl > 1:
            ins.append(labels.index(("h", x, y)))
            axes.append(1)
        if dd > 1:
            ins.append(labels.index(("v", x, y)))
            axes.append(2)
        a = arr[:, :, :, :, :]
        if dl == 1:
            a = a[:, :1]
        if dd == 1:
            a = a[:, :, :1]
        psi = np.tensordot(psi, a, axes=(ins, axes))
        labels = [lab for i, lab in enumerate(labels) if i not in ins]
        # remaining axes of a: p, [l], [d] (dim 1 if not contracted), r, u
        rest = ["p"] + (["l1"] if dl == 1 else []) + (["d1"] if dd == 1 else []) + ["r", "u"]
        new = labels + [("p", x, y) if r == "p" else r for r in rest]
        # drop dimension-1 axes that belong to boundary bonds
        squeeze = [i for i, lab in enumerate(new) if lab in ("l1", "d1") or (lab == "r" and dr == 1) or (lab == "u" and du == 1)]
        psi = psi.reshape([s for i, s in enumerate(psi.shape) if i not in squeeze])
        new = [lab for i, lab in enumerate(new) if i not in squeeze]
        labels = [("h", x + 1, y) if lab == "r" else ("v", x, y + 1) if lab == "u" else lab for lab in new]
        if psi.size > cap * 16:
            raise CapExceededError(f"intermediate of size {psi.size} exceeds the statevector cap")
    if any(lab[0] != "p" for lab in labels):
        raise ValueError("open bonds remain after contracting the lattice")
    return StateVector(tuple(order), tuple(lat[s].d for s in order), psi.reshape(-1))


def _past_cone(lat: IsoTnsLattice, targets: Sequence[Site]) -> set[Site]:
    cone = set()
    for m, n in targets:
        if not (0 <= m < lat.nx and 0 <= n < lat.ny):
            raise ValueError(f"site {(m, n)} is outside the {lat.nx}x{lat.ny} lattice")
        cone.update((k, j) for k in range(m + 1) for j in range(n + 1))
    return cone


class Frontier:
    """Density matrix over labelled slots, stored as a 2k-index array (kets then bras)."""

    def __init__(self, cap: int) -> None:
        self.labels: list = []
        self.dims: list[int] = []
        self.rho = np.ones((), dtype=np.complex128)
        self.cap = cap

    def _k(self) -> int:
        return len(self.labels)

    def pop(self, labels: Sequence) -> np.ndarray:
        """Move the given slots to the front, returning rho as (din, rest, din, rest)."""
        idx = [self.labels.index(lab) for lab in labels]
        k = self._k()
        rest = [i for i in range(k) if i not in idx]
        perm = idx + rest + [k + i for i in idx] + [k + i for i in rest]
        r = self.rho.transpose(perm)
        din = int(np.prod([self.dims[i] for i in idx], dtype=np.int64))
        drest = int(np.prod([self.dims[i] for i in rest], dtype=np.int64))
        self.labels = [self.labels[i] for i in rest]
        self.dims = [self.dims[i] for i in rest]
        return r.reshape(din, drest, din, drest)

    def push(self, block: np.ndarray, labels: Sequence, dims: Sequence[int]) -> None:
        """Inverse of :meth:`pop`: ``block`` is (dnew, rest, dnew, rest)."""
        k_old = self._k()
        shape = list(dims) + self.dims
        r = block.reshape(shape + shape)
        n_new = len(dims)
        k = n_new + k_old
        # put the new slots after the existing ones
        perm = list(range(n_new, k)) + list(range(n_new)) + [k + i for i in range(n_new, k)] + [k + i for i in range(n_new)]
        self.rho = r.transpose(perm)
        self.labels = self.labels + list(labels)
        self.dims = self.dims + list(dims)
        size = int(np.prod(self.dims, dtype=np.int64))
        if size > self.cap:
            raise CapExceededError(f"frontier dimension {size} exceeds the cap {self.cap}")

    def add_mixed(self, label, dim: int) -> None:
        """Tensor in a maximally mixed slot."""
        block = np.einsum("ab,xy->axby", np.eye(dim) / dim, self.rho.reshape(self.size(), self.size()))
        self.push(block, [label], [dim])

    def size(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))

    def trace_out(self, labels: Sequence) -> None:
        if not labels:
            return
        r = self.pop(labels)
        self.rho = np.einsum("aiaj->ij", r).reshape(self.dims + self.dims) if self.dims else np.einsum("aiaj->", r)

    def matrix(self, labels: Sequence) -> np.ndarray:
        r = self.pop(labels)
        if self.dims:
            raise ValueError("frontier still holds untraced slots")
        return r[:, 0, :, 0]


def evolve_density(
    lat: IsoTnsLattice,
    keep: Sequence[tuple[Site, int | None]],
    project: Mapping[Site, np.ndarray] | None = None,
    cap: int = FRONTIER_CAP,
) -> np.ndarray:
    """Unnormalized density matrix of selected physical factors.

    ``keep`` lists (site, factor) pairs in output order; factor ``None`` keeps
    the whole physical leg.  ``project`` maps sites to kets on a leading
    block of their physical factors; those factors are projected (not traced),
    so the trace of the result is the postselection probability.
    """
    project = dict(project or {})
    targets = [s for s, _ in keep] + list(project)
    if not targets:
        return np.ones((1, 1), dtype=np.complex128)
    cone = _past_cone(lat, targets)
    fr = Frontier(cap)
    kept_labels = []
    for s, f in keep:
        lab = ("p", s, f)
        if lab in kept_labels:
            raise ValueError(f"physical factor {f} of site {s} requested twice")
        kept_labels.append(lab)
    for x, y in lat.causal_order():
        if (x, y) not in cone:
            continue
        site = lat[(x, y)]
        dl, dd, dr, du = site.dims
        in_labels = ([("h", x, y)] if dl > 1 else []) + ([("v", x, y)] if dd > 1 else [])
        block = fr.pop(in_labels)
        v = site.matrix()  # (d*dr*du) x (dl*dd)
        block = np.einsum("ai,ixjy,bj->axby", v, block, v.conj(), optimize=True)
        pd = list(site.phys_dims)
        p_labels: list = [("p", (x, y), i) for i in range(len(pd))]
        out_labels = p_labels + [("h", x + 1, y), ("v", x, y + 1)]
        out_dims = pd + [dr, du]
        fr.push(block, out_labels, out_dims)
        drop: list = []
        if (x, y) in project:
            ket = np.asarray(project[(x, y)], dtype=np.complex128).reshape(-1)
            n_f, acc = 0, 1
            while acc < ket.size and n_f < len(pd):
                acc *= pd[n_f]
                n_f += 1
            if acc != ket.size:
                raise ValueError(f"postselection ket of size {ket.size} does not match a prefix of {pd}")
            sub = fr.pop(p_labels[:n_f])
            sub = np.einsum("a,axby,b->xy", ket.conj(), sub, ket)
            fr.rho = sub.reshape(fr.dims + fr.dims)
        else:
            n_f = 0
        wanted = {lab[2] for lab in kept_labels if lab[1] == (x, y)}
        if n_f and (None in wanted or any(f < n_f for f in wanted)):
            raise ValueError(f"site {(x, y)} keeps physical factors that are also postselected")
        if None in wanted:
            if len(pd) > 1:
                merged = fr.pop(p_labels)
                fr.push(merged, [("p", (x, y), None)], [site.d])
            else:
                fr.labels[fr.labels.index(p_labels[0])] = ("p", (x, y), None)
        else:
            for i in range(n_f, len(pd)):
                if i not in wanted:
                    drop.append(p_labels[i])
        if dr == 1 or (x + 1, y) not in cone:
            drop.append(("h", x + 1, y))
        if du == 1 or (x, y + 1) not in cone:
            drop.append(("v", x, y + 1))
        fr.trace_out(drop)
    return fr.matrix(kept_labels)


def reduced_density_matrix(
    lat: IsoTnsLattice,
    keep: Sequence[tuple[Site, int | None]],
    cap: int = FRONTIER_CAP,
) -> np.ndarray:
    return evolve_density(lat, keep, None, cap)


def _embed_operator(lat: IsoTnsLattice, obs: Observable) -> tuple[list[tuple[Site, int | None]], np.ndarray]:
    if obs.factors is None:
        keep = [(obs.site, None)]
    else:
        keep = [(obs.site, f) for f in obs.factors]
    return keep, obs.matrix


def expectation_exact(lat: IsoTnsLattice, obs: Observable, cap: int = FRONTIER_CAP) -> float:
    keep, op = _embed_operator(lat, obs)
    rho = reduced_density_matrix(lat, keep, cap)
    if rho.shape != op.shape:
        raise ValueError(f"observable of shape {op.shape} on a leg of dimension {rho.shape[0]}")
    return float(np.trace(rho @ op).real)


def expectation_from_state(state: StateVector, obs: Observable) -> float:
    """<psi|O|psi> with O on the whole physical leg of ``obs.site``."""
    if obs.factors is not None:
        raise ValueError("statevector evaluation needs an observable on the whole leg")
    k = state.sites.index(obs.site)
    psi = state.tensor()
    opsi = np.moveaxis(np.tensordot(obs.matrix, psi, axes=([1], [k])), 0, k)
    return float(np.vdot(psi, opsi).real)


def born_distribution(lat: IsoTnsLattice, cap: int = STATE_CAP) -> np.ndarray:
    """Computational-basis probabilities, one axis per site in causal order."""
    state = full_state(lat, cap)
    return (np.abs(state.tensor()) ** 2).real


def postselected_expectation(
    lat: IsoTnsLattice,
    postselect: Mapping[Site, np.ndarray],
    obs: Observable,
    cap: int = FRONTIER_CAP,
    min_prob: float = 1e-12,
) -> float:
    """Expectation in the state renormalized after projecting ``postselect``.

    Each ket acts on a leading block of its site's physical factors; the
    observable addresses factors not covered by a ket.
    """
    keep, op = _embed_operator(lat, obs)
    rho = evolve_density(lat, keep, postselect, cap)
    prob = float(np.trace(rho).real)
    if prob <= min_prob:
        raise ValueError(f"postselection probability {prob:.3e} is too small")
    return float(np.trace(rho @ op).real / prob)


def postselection_probability(lat: IsoTnsLattice, postselect: Mapping[Site, np.ndarray], cap: int = FRONTIER_CAP) -> float:
    return float(np.trace(evolve_density(lat, [], postselect, cap)).real) if postselect else 1.0


def mps_expectation(tensors: Sequence[np.ndarray], n: int, op: np.ndarray) -> float:
    """<O_n> for an MPS built from isometries ``V[p, right, left]``.

    The first tensor has left dimension 1 (it is a state) and the last has
    right dimension 1.  The ancilla state is evolved through the channels of
    sites 0..n-1 and the value is Tr[V rho V^dag (O (x) 1)].
    """
    if not 0 <= n < len(tensors):
        raise ValueError("site index out of range")
    ts = [np.asarray(t, dtype=np.complex128) for t in tensors]
    if ts[0].shape[2] != 1 or ts[-1].shape[1] != 1:
        raise ValueError("boundary ancillas must have dimension 1")
    for a, b in zip(ts, ts[1:]):
        if a.shape[1] != b.shape[2]:
            raise ValueError("inconsistent ancilla dimensions between neighbouring tensors")
    rho = np.ones((1, 1), dtype=np.complex128)
    for t in ts[:n]:
        rho = np.einsum("pab,bc,pdc->ad", t, rho, t.conj())
    t = ts[n]
    out = np.einsum("pab,bc,qdc->paqd", t, rho, t.conj())
    return float(np.einsum("paqa,qp->", out, np.asarray(op)).real)


def mps_state(tensors: Sequence[np.ndarray]) -> np.ndarray:
    """Dense MPS amplitudes, first site most significant."""
    psi = np.ones((1, 1), dtype=np.complex128)  # (phys, ancilla)
    for t in tensors:
        t = np.asarray(t, dtype=np.complex128)
        psi = np.einsum("xb,pab->xpa", psi, t).reshape(-1, t.shape[1])
    return psi[:, 0]
