"""Lattices of site isometries and the circuit-embedding tensor family.

Geometry.  Site (x, y) with 0 <= x < nx, 0 <= y < ny receives the horizontal
ancilla from (x-1, y) on its left-in leg and the vertical ancilla from
(x, y-1) on its down-in leg, and emits them towards (x+1, y) and (x, y+1).
Bonds on the lattice boundary have dimension 1.  Sites on the anti-diagonal
t = x + y form one time step; within it the ancilla wires sit at spatial
positions x - y +/- 1/2, so consecutive anti-diagonals act as the two layers
of a brickwork circuit.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .channels import choi, kraus_from_choi, QuantumChannel
from .site import LEGS, SiteTensor, adapt_to_bonds
from .tensor_core import (
    DEFAULT_TOL,
    DenseTensor,
    haar_isometry,
    haar_unitary,
    tensor_from_record,
    tensor_to_record,
)

Site = tuple[int, int]

I2 = np.eye(2, dtype=np.complex128)
X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
H = np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2)
SWAP = np.eye(4, dtype=np.complex128)[[0, 2, 1, 3]]
CNOT = np.eye(4, dtype=np.complex128)[[0, 1, 3, 2]]
PAULIS = (I2, X, Y, Z)


def two_qubit_paulis() -> list[np.ndarray]:
    """sigma_0 .. sigma_15 = P_a (x) P_b, lexicographic in (a, b) over (1, X, Y, Z)."""
    return [np.kron(a, b) for a, b in itertools.product(PAULIS, PAULIS)]


def _require_unitary(u: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    u = np.asarray(u, dtype=np.complex128)
    if u.shape != (4, 4):
        raise ValueError(f"expected a 4x4 two-qubit unitary, got shape {u.shape}")
    dev = np.max(np.abs(u.conj().T @ u - np.eye(4)))
    if dev > tol:
        raise ValueError(f"matrix is not unitary (deviation {dev:.3e})")
    return u


# ---------------------------------------------------------------------------
# circuit-embedding tensors (D = 2, d = 4)


def gate_tensor(u: np.ndarray) -> SiteTensor:
    """|00>_P (x) U_V with U mapping (left-in, down-in) to (right-out, up-out)."""
    u = _require_unitary(u)
    kraus = np.zeros((4, 4, 4), dtype=np.complex128)
    kraus[0] = u
    return SiteTensor.from_kraus(kraus, (2, 2, 2, 2), "gate", (2, 2))


def routing_tensor(dl: int = 2, dd: int = 2, dr: int = 2, du: int = 2) -> SiteTensor:
    """Wire-routing tensor with two physical qubits.

    The left-in wire continues on up-out and the down-in wire on right-out
    (spatially the ancillas stay put).  A wire whose outgoing leg is trivial
    is moved into its physical qubit; a wire whose incoming leg is trivial
    starts in |0>.  Physical qubits not receiving a wire are |0>.
    """
    for dim in (dl, dd, dr, du):
        if dim not in (1, 2):
            raise ValueError("routing tensors use bond dimensions 1 or 2")
    arr = np.zeros((4, dl, dd, dr, du), dtype=np.complex128)
    for a in range(2):
        for b in range(2):
            if a >= dl or b >= dd:
                continue
            # wire A: left-in -> up-out or physical qubit 0
            pa, ua = (0, a) if du == 2 else (a, 0)
            pb, rb = (0, b) if dr == 2 else (b, 0)
            arr[2 * pa + pb, a, b, rb, ua] = 1.0
    if dl == 2 and du == 2 and dd == 2 and dr == 2:
        role = "identity"
    elif dr == 1 and du == 1 and dl == 2 and dd == 2:
        role = "swap"
    else:
        role = "routing"
    return SiteTensor(DenseTensor(arr, LEGS), role, (2, 2))


def identity_tensor() -> SiteTensor:
    """|00>_P (x) SWAP_V."""
    return routing_tensor(2, 2, 2, 2)


def swap_tensor() -> SiteTensor:
    """Moves both incoming ancillas into the physical qubits; outgoing legs have dimension 1."""
    return routing_tensor(2, 2, 1, 1)


# ---------------------------------------------------------------------------
# injective perturbations


def stinespring_site(
    kraus: Sequence[np.ndarray],
    dims: tuple[int, int, int, int] = (2, 2, 2, 2),
    require_injective: bool = False,
    phys_dims: tuple[int, ...] = (),
) -> SiteTensor:
    """V = sum_i A^i (x) |i> for a trace-preserving Kraus set."""
    stack = np.stack([np.asarray(k, dtype=np.complex128) for k in kraus])
    dl, dd, dr, du = dims
    if stack.shape[1:] != (dr * du, dl * dd):
        raise ValueError(f"Kraus operators of shape {stack.shape[1:]} do not fit bond dims {dims}")
    dev = np.max(np.abs(np.einsum("kab,kac->bc", stack.conj(), stack) - np.eye(dl * dd)))
    if dev > DEFAULT_TOL:
        raise ValueError(f"Kraus set is not trace preserving (deviation {dev:.3e})")
    if require_injective:
        rank = np.linalg.matrix_rank(stack.reshape(len(stack), -1), tol=1e-10)
        if rank < dl * dd * dr * du:
            raise ValueError("Kraus operators are not linearly independent")
    return SiteTensor.from_kraus(stack, dims, "stinespring", phys_dims)


def depolarized_unitary_kraus(u: np.ndarray, p: float) -> list[np.ndarray]:
    """Kraus set of rho -> (1-p) U rho U^dag + p Tr(rho) 1/4.

    A^{a,a} = g U + c |a><a| U and A^{a,b} = c |a><b| U with c = sqrt(p/k),
    k = 4.  The coefficient g solves k g^2 + 2 c g = 1 - p, which is what
    trace preservation requires.
    """
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    u = _require_unitary(u)
    k = 4
    c = np.sqrt(p / k)
    g = (-c + np.sqrt(c * c + k * (1 - p))) / k
    out = []
    for a in range(k):
        for b in range(k):
            e = np.zeros((k, k), dtype=np.complex128)
            e[a, b] = 1
            op = c * e @ u
            if a == b:
                op = op + g * u
            out.append(op)
    return out


def restart_basis() -> list[np.ndarray]:
    """Orthonormal basis of 2x2 matrices: Paulis / sqrt(2), identity first."""
    return [s / np.sqrt(2) for s in PAULIS]


def depolarized_restart_kraus(p: float) -> list[np.ndarray]:
    """Kraus set of rho -> (1-p)|0><0| (x) Tr_1(rho) + p Tr(rho) 1/4 on two qubits.

    Operators c(a1, b) |a1><a2| (x) s_b with s_b an orthonormal matrix basis
    (s_0 = 1/sqrt(2)), k = 2 levels per qubit.  c = sqrt(p/k^2) except for
    a1 = 0, b = 0, which also carries the reset branch.  They are mutually
    Hilbert-Schmidt orthogonal.
    """
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    k = 2
    basis = restart_basis()
    out = []
    for a1 in range(k):
        for a2 in range(k):
            for b in range(k * k):
                if a1 == 0 and b == 0:
                    coeff = np.sqrt(k * (1 - p) + p / k**2)
                else:
                    coeff = np.sqrt(p / k**2)
                e = np.zeros((k, k), dtype=np.complex128)
                e[a1, a2] = 1
                out.append(coeff * np.kron(e, basis[b]))
    return out


RESTART_LEVELS = 2


# ---------------------------------------------------------------------------
# W isometry and the MIPT family


def w_kraus(delta: float) -> np.ndarray:
    """K_ij as an array indexed [i, j, out, in]."""
    if delta < 0 or delta**2 > 0.5 + 1e-15:
        raise ValueError("need 0 <= delta and delta^2 <= 1/2")
    a = np.sqrt(max(0.5 - delta**2, 0.0))
    k = np.zeros((2, 2, 2, 2), dtype=np.complex128)
    k[0, 0] = a * I2 + 1j * delta * np.diag([0, 1])
    k[1, 1] = a * I2 + 1j * delta * np.diag([1, 0])
    k[0, 1, 1, 0] = 1j * delta
    k[1, 0, 0, 1] = 1j * delta
    return k


def w_isometry(delta: float) -> DenseTensor:
    """W = sum_ij |ij> K_ij: one ancilla qubit to two physical qubits plus the ancilla."""
    return DenseTensor(w_kraus(delta), ("i", "j", "out", "in"))


def perturbed_gate_tensor(u: np.ndarray, delta: float) -> SiteTensor:
    """(W (x) W) U: each outgoing ancilla passes through a W.

    Physical register order (i_r, j_r, i_u, j_u): the first pair belongs to the
    right-out ancilla, the second to the up-out ancilla.  The PEPS map has
    smallest singular value delta^2.
    """
    u = _require_unitary(u)
    k = w_kraus(delta)
    # V[i, j, m, n, r, w, l, d] = K_ij[r, r'] K_mn[w, w'] U[(r', w'), (l, d)]
    u4 = u.reshape(2, 2, 2, 2)
    v = np.einsum("ijra,mnwb,abcd->ijmnrwcd", k, k, u4)
    kraus = v.reshape(16, 4, 4)
    return SiteTensor.from_kraus(kraus, (2, 2, 2, 2), "w_perturbed", (2, 2, 2, 2))


def postselect_gate_projector(u: np.ndarray) -> SiteTensor:
    """P^k = U sigma_k / 4: postselecting k = 0 applies U to the ancillas."""
    u = _require_unitary(u)
    kraus = np.stack([u @ s / 4 for s in two_qubit_paulis()])
    return SiteTensor.from_kraus(kraus, (2, 2, 2, 2), "postselect", (16,))


def maximally_injective_swap_projector() -> SiteTensor:
    """P^k = |k0 k1><k2 k3| / 2 with k = (k0, k1, k2, k3) in row-major order."""
    kraus = np.zeros((16, 4, 4), dtype=np.complex128)
    for k in range(16):
        kraus[k, k >> 2, k & 3] = 0.5
    return SiteTensor.from_kraus(kraus, (2, 2, 2, 2), "postselect", (2, 2, 2, 2))


def pad_physical(site: SiteTensor, n_qubits: int = 2) -> SiteTensor:
    """V -> V (x) |0>^{n}: extra physical qubits prepared in |0>."""
    arr = site.array
    extra = 2**n_qubits
    out = np.zeros((arr.shape[0] * extra,) + arr.shape[1:], dtype=np.complex128)
    out[::extra] = arr
    return SiteTensor(DenseTensor(out, LEGS), site.role, site.phys_dims + (2,) * n_qubits)


# ---------------------------------------------------------------------------
# lattice


@dataclass(frozen=True)
class IsoTnsLattice:
    """nx x ny grid of site isometries; ``sites[x][y]`` is site (x, y).

    ``readout`` optionally maps circuit qubits to (site, physical factor)
    for lattices produced by :func:`embed_brickwork`.
    """

    nx: int
    ny: int
    sites: tuple[tuple[SiteTensor, ...], ...]
    readout: tuple[tuple[Site, int], ...] = field(default=())

    def __post_init__(self) -> None:
        sites = tuple(tuple(col) for col in self.sites)
        object.__setattr__(self, "sites", sites)
        if len(sites) != self.nx or any(len(col) != self.ny for col in sites):
            raise ValueError(f"site grid does not have shape {self.nx}x{self.ny}")
        for x, y in self.positions():
            dl, dd, dr, du = sites[x][y].dims
            if x == 0 and dl != 1 or y == 0 and dd != 1:
                raise ValueError(f"boundary input leg of site {(x, y)} must have dimension 1")
            if x == self.nx - 1 and dr != 1 or y == self.ny - 1 and du != 1:
                raise ValueError(f"boundary output leg of site {(x, y)} must have dimension 1")
            if x + 1 < self.nx and sites[x + 1][y].dims[0] != dr:
                raise ValueError(f"bond {(x, y)}->{(x + 1, y)} dimensions disagree")
            if y + 1 < self.ny and sites[x][y + 1].dims[1] != du:
                raise ValueError(f"bond {(x, y)}->{(x, y + 1)} dimensions disagree")

    def __getitem__(self, site: Site) -> SiteTensor:
        x, y = site
        return self.sites[x][y]

    def positions(self) -> Iterator[Site]:
        for x in range(self.nx):
            for y in range(self.ny):
                yield x, y

    def causal_order(self) -> list[Site]:
        """Anti-diagonals t = x + y in increasing order, increasing x within each."""
        return [
            (x, t - x)
            for t in range(self.nx + self.ny - 1)
            for x in range(max(0, t - self.ny + 1), min(t, self.nx - 1) + 1)
        ]

    @property
    def n_sites(self) -> int:
        return self.nx * self.ny

    def physical_dims(self) -> list[int]:
        return [self[s].d for s in self.causal_order()]

    def to_record(self) -> dict:
        return {
            "nx": self.nx,
            "ny": self.ny,
            "sites": [
                {
                    "site": [x, y],
                    "role": self[(x, y)].role,
                    "phys_dims": list(self[(x, y)].phys_dims),
                    "tensor": tensor_to_record(self[(x, y)].tensor),
                }
                for x, y in self.positions()
            ],
            "readout": [[list(s), k] for s, k in self.readout],
        }

    @classmethod
    def from_record(cls, rec: dict) -> IsoTnsLattice:
        nx, ny = int(rec["nx"]), int(rec["ny"])
        grid: list[list[SiteTensor | None]] = [[None] * ny for _ in range(nx)]
        for entry in rec["sites"]:
            x, y = entry["site"]
            grid[x][y] = SiteTensor(tensor_from_record(entry["tensor"]), entry["role"], tuple(entry["phys_dims"]))
        readout = tuple((tuple(s), int(k)) for s, k in rec.get("readout", []))
        return cls(nx, ny, tuple(tuple(col) for col in grid), readout)  # type: ignore[arg-type]


def bond_dims(nx: int, ny: int, x: int, y: int, D: int = 2) -> tuple[int, int, int, int]:
    """(left, down, right, up) dims of site (x, y) with D inside and 1 on the boundary."""
    return (
        D if x > 0 else 1,
        D if y > 0 else 1,
        D if x < nx - 1 else 1,
        D if y < ny - 1 else 1,
    )


def uniform_lattice(nx: int, ny: int, site: SiteTensor) -> IsoTnsLattice:
    """Every site is ``site``, adapted to the boundary."""
    grid = [[adapt_to_bonds(site, bond_dims(nx, ny, x, y, site.dims[0])) for y in range(ny)] for x in range(nx)]
    return IsoTnsLattice(nx, ny, tuple(tuple(c) for c in grid))


def random_site(dims: tuple[int, int, int, int], d: int, rng: np.random.Generator) -> SiteTensor:
    """Haar-random isometry from (l, d) to (p, r, u)."""
    dl, dd, dr, du = dims
    v = haar_isometry(d * dr * du, dl * dd, rng)
    arr = v.reshape(d, dr, du, dl, dd).transpose(0, 3, 4, 1, 2)
    return SiteTensor(DenseTensor(arr, LEGS), "custom")


def random_lattice(nx: int, ny: int, rng: np.random.Generator, D: int = 2, d: int = 2) -> IsoTnsLattice:
    """Haar-random site isometries with physical dimension ``d`` (doubled where too small)."""
    grid = []
    for x in range(nx):
        col = []
        for y in range(ny):
            dims = bond_dims(nx, ny, x, y, D)
            dphys = d
            while dphys * dims[2] * dims[3] < dims[0] * dims[1]:
                dphys *= 2
            col.append(random_site(dims, dphys, rng))
        grid.append(tuple(col))
    return IsoTnsLattice(nx, ny, tuple(grid))


def depolarized_site(dims: tuple[int, int, int, int], p: float, rng: np.random.Generator) -> SiteTensor:
    """Stinespring site of (1-p) Phi_0 + p * depolarizing for a Haar-random channel Phi_0.

    Interior sites (all bonds 2) use the depolarized-unitary Kraus set with a
    Haar unitary; boundary sites dilate a random isometric channel through its
    canonical Kraus operators.  Either way delta = sqrt(p / dim_out) and the
    admissible depolarizing rate equals p.
    """
    dl, dd, dr, du = dims
    if dims == (2, 2, 2, 2):
        return stinespring_site(depolarized_unitary_kraus(haar_unitary(4, rng), p), dims)
    din, dout = dl * dd, dr * du
    env = -(-din // dout)
    y = haar_isometry(dout * env, din, rng).reshape(dout, env, din)
    phi0 = QuantumChannel(din, dout, tuple(y[:, e, :] for e in range(env)))
    j = (1 - p) * choi(phi0) + p * np.eye(din * dout) / dout
    ks = kraus_from_choi(j, din, dout)
    return stinespring_site(list(ks), dims)


def depolarized_lattice(nx: int, ny: int, p: float, rng: np.random.Generator) -> IsoTnsLattice:
    """Strongly injective D = 2 lattice: every site channel has depolarizing rate p."""
    grid = [[depolarized_site(bond_dims(nx, ny, x, y), p, rng) for y in range(ny)] for x in range(nx)]
    return IsoTnsLattice(nx, ny, tuple(tuple(c) for c in grid))


def w_lattice(
    nx: int,
    ny: int,
    delta: float,
    rng: np.random.Generator | None = None,
    unitaries: dict[Site, np.ndarray] | None = None,
) -> IsoTnsLattice:
    """Lattice of W-perturbed gate tensors (Haar-random gates unless given).

    Boundary-adapted sites append the dumped ancilla as an extra physical
    qubit after the four W registers.
    """
    grid = []
    for x in range(nx):
        col = []
        for y in range(ny):
            if unitaries is not None and (x, y) in unitaries:
                u = unitaries[(x, y)]
            elif rng is not None:
                u = haar_unitary(4, rng)
            else:
                u = np.eye(4)
            col.append(adapt_to_bonds(perturbed_gate_tensor(u, delta), bond_dims(nx, ny, x, y)))
        grid.append(tuple(col))
    return IsoTnsLattice(nx, ny, tuple(grid))


# ---------------------------------------------------------------------------
# brickwork circuits


@dataclass(frozen=True)
class BrickworkCircuit:
    """Layers of nearest-neighbour two-qubit gates ``(q, U)`` acting on (q, q+1).

    Gates of layer t start on qubits with q = t + offset (mod 2).  Qubit 0 is
    the most significant factor of every 4x4 unitary and of the state vector.
    """

    n_qubits: int
    layers: tuple[tuple[tuple[int, np.ndarray], ...], ...]
    offset: int = 0

    def __post_init__(self) -> None:
        if self.n_qubits < 2 or self.n_qubits % 2:
            raise ValueError("n_qubits must be a positive even integer")
        layers = tuple(tuple((int(q), _require_unitary(u)) for q, u in layer) for layer in self.layers)
        object.__setattr__(self, "layers", layers)
        for t, layer in enumerate(layers):
            used: set[int] = set()
            for q, _ in layer:
                if not 0 <= q < self.n_qubits - 1:
                    raise ValueError(f"gate on ({q}, {q + 1}) is outside the register")
                if (q - t - self.offset) % 2:
                    raise ValueError(f"gate on ({q}, {q + 1}) breaks the brickwork pattern of layer {t}")
                if q in used or q + 1 in used:
                    raise ValueError(f"overlapping gates in layer {t}")
                used.update((q, q + 1))

    @property
    def depth(self) -> int:
        return len(self.layers)

    def statevector(self) -> np.ndarray:
        """Direct simulation from |0...0>."""
        n = self.n_qubits
        psi = np.zeros((2,) * n, dtype=np.complex128)
        psi[(0,) * n] = 1
        for layer in self.layers:
            for q, u in layer:
                psi = np.tensordot(u.reshape(2, 2, 2, 2), psi, axes=([2, 3], [q, q + 1]))
                psi = np.moveaxis(psi, [0, 1], [q, q + 1])
        return psi.reshape(-1)

    def to_record(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "offset": self.offset,
            "layers": [
                [{"pair": [q, q + 1], "unitary": [[[z.real, z.imag] for z in row] for row in u]} for q, u in layer]
                for layer in self.layers
            ],
        }

    @classmethod
    def from_record(cls, rec: dict) -> BrickworkCircuit:
        layers = []
        for layer in rec["layers"]:
            gates = []
            for g in layer:
                q0, q1 = g["pair"]
                if q1 != q0 + 1:
                    raise ValueError(f"gate pair {g['pair']} is not nearest-neighbour")
                u = np.asarray(g["unitary"], dtype=float)
                if u.shape != (4, 4, 2):
                    raise ValueError("unitary entries must be a 4x4 array of [re, im] pairs")
                gates.append((q0, u[..., 0] + 1j * u[..., 1]))
            layers.append(tuple(gates))
        return cls(int(rec["n_qubits"]), tuple(layers), int(rec.get("offset", 0)))


def random_brickwork(n_qubits: int, depth: int, rng: np.random.Generator, offset: int = 0) -> BrickworkCircuit:
    layers = []
    for t in range(depth):
        start = (t + offset) % 2
        layers.append(tuple((q, haar_unitary(4, rng)) for q in range(start, n_qubits - 1, 2)))
    return BrickworkCircuit(n_qubits, tuple(layers), offset)


def bell_circuit() -> BrickworkCircuit:
    return BrickworkCircuit(2, (((0, CNOT @ np.kron(H, I2)),),))


def _layout(circuit: BrickworkCircuit, shift: int, t0: int) -> tuple[int, dict[int, Site], dict[Site, np.ndarray]] | None:
    """Sites used by gates and swaps for wire offset c = shift + 1/2 and first diagonal t0.

    The swap diagonal is t0 + depth + 1, so it has the parity of the last gate
    layer and each last-layer pair ends up on a single swap site.
    """
    t_swap = t0 + circuit.depth + 1
    gates: dict[Site, np.ndarray] = {}
    for t, layer in enumerate(circuit.layers):
        diag = t0 + t
        for q, u in layer:
            s = q + shift + 1
            if abs(s) > diag or (diag - s) % 2:
                return None
            gates[((diag + s) // 2, (diag - s) // 2)] = SWAP @ u
    swaps: dict[int, Site] = {}
    for q in range(circuit.n_qubits):
        # wire q sits at q + shift + 1/2; its swap site is the neighbour of matching parity
        s = q + shift if (q + shift - t_swap) % 2 == 0 else q + shift + 1
        if abs(s) > t_swap:
            return None
        swaps[q] = ((t_swap + s) // 2, (t_swap - s) // 2)
    extent = max(max(site) for site in list(gates) + list(swaps.values())) + 1
    return extent, swaps, gates


def embed_brickwork(circuit: BrickworkCircuit, size: int | None = None, t0: int | None = None) -> IsoTnsLattice:
    """Embed a brickwork circuit in a square lattice of gate/routing/swap tensors.

    Qubit q lives on the wire at spatial position q + c (c half-integer).
    Layer t sits on anti-diagonal t0 + t, and the swap tensors that move the
    output into the physical legs fill anti-diagonal t0 + depth + 1.  ``t0``
    and ``c`` are chosen to give the smallest square lattice unless ``t0`` is
    given (``t0 = 1`` places layer t on anti-diagonal t + 1).  Wires that have not
    met a gate yet are |0>, so gates may touch the incoming boundary.  The
    returned lattice carries ``readout`` mapping qubit q to (swap site,
    physical qubit).
    """
    n = circuit.n_qubits
    best = None
    starts = range(0, 2 * n + 2) if t0 is None else [t0]
    for start in starts:
        for shift in range(-n - start, start + 1):
            lay = _layout(circuit, shift, start)
            if lay is not None and (best is None or lay[0] < best[0][0]):
                best = (lay, shift, start)
    if best is None:
        raise ValueError("circuit cannot be placed on the diagonal layout")
    (extent, swap_sites, gate_at), shift, t0 = best
    t_swap = t0 + circuit.depth + 1
    n_side = extent
    if size is not None:
        if size < n_side:
            raise ValueError(f"circuit needs a {n_side}x{n_side} lattice, got size {size}")
        n_side = size
    grid: list[list[SiteTensor]] = []
    for x in range(n_side):
        col = []
        for y in range(n_side):
            t = x + y
            dl = 2 if x > 0 and t - 1 < t_swap else 1
            dd = 2 if y > 0 and t - 1 < t_swap else 1
            dr = 2 if x < n_side - 1 and t < t_swap else 1
            du = 2 if y < n_side - 1 and t < t_swap else 1
            if (x, y) in gate_at:
                col.append(adapt_to_bonds(gate_tensor(gate_at[(x, y)]), (dl, dd, dr, du)))
            else:
                col.append(routing_tensor(dl, dd, dr, du))
        grid.append(col)
    readout = []
    for q in range(n):
        x, y = swap_sites[q]
        # physical qubit 0 holds the left-in wire at s - 1/2, qubit 1 the wire at s + 1/2
        readout.append(((x, y), 0 if q + shift + 1 == x - y else 1))
    return IsoTnsLattice(n_side, n_side, tuple(tuple(c) for c in grid), tuple(readout))
