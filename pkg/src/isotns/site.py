"""Site isometries of an isoTNS and their PEPS-projector view."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor_core import DEFAULT_TOL, DenseTensor, check_isometry, flatten

# physical, left-in, down-in, right-out, up-out
LEGS = ("p", "l", "d", "r", "u")
ROLES = frozenset({"gate", "swap", "identity", "routing", "stinespring", "w_perturbed", "postselect", "custom"})


class NotIsometricError(ValueError):
    pass


@dataclass(frozen=True)
class SiteTensor:
    """Isometry from (left-in, down-in) to (physical, right-out, up-out).

    ``phys_dims`` records how the physical leg factorizes into smaller
    registers (e.g. four qubits for ``d = 16``); it does not change the data.
    """

    tensor: DenseTensor
    role: str = "custom"
    phys_dims: tuple[int, ...] = field(default=())
    tol: float = DEFAULT_TOL

    def __post_init__(self) -> None:
        t = self.tensor
        if sorted(t.labels) != sorted(LEGS):
            raise ValueError(f"site tensor legs must be {LEGS}, got {t.labels}")
        if t.labels != LEGS:
            object.__setattr__(self, "tensor", t.transpose(LEGS))
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        d = self.tensor.shape[0]
        pd = tuple(int(x) for x in self.phys_dims) or (d,)
        if int(np.prod(pd)) != d:
            raise ValueError(f"physical factors {pd} do not multiply to d={d}")
        object.__setattr__(self, "phys_dims", pd)
        ok, dev = check_isometry(self.matrix(), self.tol)
        if not ok:
            raise NotIsometricError(f"site tensor deviates from an isometry by {dev:.3e}")

    @classmethod
    def from_kraus(
        cls,
        kraus: np.ndarray,
        dims: tuple[int, int, int, int],
        role: str = "custom",
        phys_dims: tuple[int, ...] = (),
        tol: float = DEFAULT_TOL,
    ) -> SiteTensor:
        """Build from slices ``kraus[i]`` mapping (l, d) to (r, u), i.e. shape (d, dr*du, dl*dd)."""
        kraus = np.asarray(kraus, dtype=np.complex128)
        dl, dd, dr, du = dims
        arr = kraus.reshape(kraus.shape[0], dr, du, dl, dd).transpose(0, 3, 4, 1, 2)
        return cls(DenseTensor(arr, LEGS), role, phys_dims, tol)

    @property
    def array(self) -> np.ndarray:
        return self.tensor.data

    @property
    def d(self) -> int:
        return self.tensor.shape[0]

    @property
    def dims(self) -> tuple[int, int, int, int]:
        _, dl, dd, dr, du = self.tensor.shape
        return dl, dd, dr, du

    @property
    def dim_in(self) -> int:
        dl, dd, _, _ = self.dims
        return dl * dd

    @property
    def dim_out(self) -> int:
        _, _, dr, du = self.dims
        return dr * du

    def matrix(self) -> np.ndarray:
        """V as a (d*dr*du) x (dl*dd) matrix."""
        return flatten(self.tensor, ["p", "r", "u"], ["l", "d"])

    def peps_matrix(self) -> np.ndarray:
        """P as a d x (dl*dd*dr*du) matrix (virtual to physical)."""
        return flatten(self.tensor, ["p"], ["l", "d", "r", "u"])

    def kraus(self) -> np.ndarray:
        """Physical-index slices V^i, shape (d, dr*du, dl*dd)."""
        d, dl, dd, dr, du = self.tensor.shape
        return self.array.transpose(0, 3, 4, 1, 2).reshape(d, dr * du, dl * dd)


def adapt_to_bonds(site: SiteTensor, dims: tuple[int, int, int, int]) -> SiteTensor:
    """Fit a site to smaller bond dimensions at a lattice boundary.

    An input leg reduced to dimension 1 is fed the basis state |0>.  An output
    leg reduced to dimension 1 is moved into the physical leg, appended as a
    new physical factor, so the result stays an isometry.
    """
    dl, dd, dr, du = dims
    sl, sd, sr, su = site.dims
    for want, have in zip(dims, site.dims):
        if want not in (1, have):
            raise ValueError(f"cannot adapt bond of dimension {have} to {want}")
    arr = site.array[:, :dl, :dd, :, :]
    phys = list(site.phys_dims)
    # move (p, l, d, r, u) -> (p, [r], [u], l, d, r', u')
    moved = []
    if dr == 1 and sr > 1:
        moved.append(3)
        phys.append(sr)
    if du == 1 and su > 1:
        moved.append(4)
        phys.append(su)
    if moved:
        keep = [ax for ax in (1, 2, 3, 4) if ax not in moved]
        arr = arr.transpose([0, *moved, *keep])
        shape = arr.shape
        nphys = int(np.prod(shape[: 1 + len(moved)]))
        rest = list(shape[1 + len(moved):])
        arr = arr.reshape(nphys, *rest)
        for ax in sorted(moved):
            arr = np.expand_dims(arr, ax)
    return SiteTensor(DenseTensor(arr, LEGS), site.role, tuple(phys), site.tol)
