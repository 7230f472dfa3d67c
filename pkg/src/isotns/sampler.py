"""Sampling physical outcomes by monitored ancilla dynamics.

Sites are visited in causal order; each applies its isometry to the pure
ancilla frontier, the physical index is drawn from its Born marginal and the
frontier is projected onto the observed value.

For lattices of W-perturbed gates the sampler can also exploit resets.  A W
returns an unequal pair (01 or 10) with probability delta^2 whatever its
input, and then leaves its ancilla in a basis state.  The reset pattern is
therefore drawn first; it fixes which bonds carry only a classical bit, the
lattice falls apart into bond-percolation components, and each component is
simulated with its own small pure state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .exact import FRONTIER_CAP, CapExceededError
from .lattice import IsoTnsLattice, Site
from .rng import map_blocks, stream

# conditional probabilities below this are treated as impossible branches
PROB_FLOOR = 1e-14


@dataclass(frozen=True)
class TrajectoryRecord:
    """One sampled outcome, sites in causal order.

    ``probabilities[k]`` is the Born probability of outcome k given the
    outcomes before it, so their product is the joint probability.
    """

    outcome: tuple[int, ...]
    probabilities: tuple[float, ...]
    resets: tuple[tuple[Site, str], ...] = ()
    seed: int = 0
    index: int = 0
    accepted: bool = True

    @property
    def log_prob(self) -> float:
        return float(np.sum(np.log(self.probabilities))) if self.probabilities else 0.0

    def line(self) -> str:
        word = ".".join(str(o) for o in self.outcome) if self.accepted else "-"
        lp = f"{self.log_prob:.12e}" if self.accepted else "nan"
        return f"{word},{lp},{len(self.resets)},{int(self.accepted)}"


@dataclass(frozen=True)
class BondBreakMap:
    """Severed bonds and the components of the remaining bond graph."""

    nx: int
    ny: int
    severed: frozenset[tuple[Site, Site]]
    labels: np.ndarray = field(repr=False)

    @property
    def components(self) -> list[frozenset[Site]]:
        out: dict[int, set[Site]] = {}
        for x in range(self.nx):
            for y in range(self.ny):
                out.setdefault(int(self.labels[x, y]), set()).add((x, y))
        return [frozenset(out[k]) for k in sorted(out)]

    @property
    def max_component(self) -> int:
        return int(np.bincount(self.labels.ravel()).max())


def _components(flags: np.ndarray) -> np.ndarray:
    """Component label per site; ``flags[x, y, 0/1]`` severs the right/up bond of (x, y)."""
    nx, ny = flags.shape[:2]
    idx = np.arange(nx * ny).reshape(nx, ny)
    rows, cols = [], []
    keep_r = ~flags[:-1, :, 0]
    rows.append(idx[:-1][keep_r])
    cols.append(idx[1:][keep_r])
    keep_u = ~flags[:, :-1, 1]
    rows.append(idx[:, :-1][keep_u])
    cols.append(idx[:, 1:][keep_u])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    graph = coo_matrix((np.ones(r.size), (r, c)), shape=(nx * ny, nx * ny))
    _, labels = connected_components(graph, directed=False)
    return labels.reshape(nx, ny)


def bond_break_map(flags: np.ndarray) -> BondBreakMap:
    nx, ny = flags.shape[:2]
    severed = set()
    for x in range(nx):
        for y in range(ny):
            if x + 1 < nx and flags[x, y, 0]:
                severed.add(((x, y), (x + 1, y)))
            if y + 1 < ny and flags[x, y, 1]:
                severed.add(((x, y), (x, y + 1)))
    return BondBreakMap(nx, ny, frozenset(severed), _components(flags))


def _choose(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw per row of ``probs`` (rows need not be normalized)."""
    p = np.where(probs < PROB_FLOOR, 0.0, probs)
    cdf = np.cumsum(p, axis=1)
    cdf /= cdf[:, -1:]
    k = (cdf < u[:, None]).sum(axis=1)
    return np.minimum(k, p.shape[1] - 1)


def sample_exact_arrays(
    lat: IsoTnsLattice, n_samples: int, seed: int, threads: int = 1, cap: int = FRONTIER_CAP
) -> tuple[np.ndarray, np.ndarray]:
    """Outcomes (n, n_sites) and conditional probabilities (n, n_sites), causal order."""
    order = lat.causal_order()

    def run(block: int, start: int, stop: int):
        rng = stream(seed, "sample", block)
        b = stop - start
        psi = np.ones((b,), dtype=np.complex128)
        labels: list = []
        outs = np.zeros((b, len(order)), dtype=np.int64)
        probs = np.zeros((b, len(order)))
        for k, (x, y) in enumerate(order):
            site = lat[(x, y)]
            dl, dd, dr, du = site.dims
            ins = ([("h", x, y)] if dl > 1 else []) + ([("v", x, y)] if dd > 1 else [])
            pos = [1 + labels.index(lab) for lab in ins]
            rest = [i for i in range(1, psi.ndim) if i not in pos]
            psi = psi.transpose([0] + pos + rest)
            din = site.dim_in
            rest_shape = psi.shape[1 + len(pos):]
            psi = psi.reshape(b, din, -1)
            labels = [labels[i - 1] for i in rest]
            amp = np.einsum("ai,bir->bar", site.matrix(), psi).reshape(b, site.d, dr * du * psi.shape[2])
            pk = np.einsum("bar,bar->ba", amp, amp.conj()).real
            pick = _choose(pk, rng.random(b))
            p_sel = pk[np.arange(b), pick]
            outs[:, k] = pick
            probs[:, k] = p_sel
            psi = amp[np.arange(b), pick] / np.sqrt(p_sel)[:, None]
            psi = psi.reshape((b, dr, du) + rest_shape)
            new = [("h", x + 1, y), ("v", x, y + 1)]
            keep = [i for i, d in enumerate((dr, du)) if d > 1]
            psi = psi.reshape((b,) + tuple((dr, du)[i] for i in keep) + rest_shape)
            labels = [new[i] for i in keep] + labels
            if psi[0].size > cap:
                raise CapExceededError(f"frontier dimension {psi[0].size} exceeds the cap {cap}")
        return outs, probs

    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    parts = map_blocks(run, n_samples, threads)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def sample_exact(
    lat: IsoTnsLattice, seed: int, n_samples: int = 1, threads: int = 1, cap: int = FRONTIER_CAP
) -> list[TrajectoryRecord]:
    outs, probs = sample_exact_arrays(lat, n_samples, seed, threads, cap)
    return [
        TrajectoryRecord(tuple(int(v) for v in o), tuple(float(v) for v in p), (), seed, i)
        for i, (o, p) in enumerate(zip(outs, probs))
    ]


# ---------------------------------------------------------------------------
# reset-accelerated sampling


def _reset_probability(site, leg: int) -> float:
    """Probability of an unequal pair on the W of ``leg`` (0 = right, 1 = up), checked input independent."""
    pd = site.phys_dims
    if site.role != "w_perturbed" or len(pd) < 4 or pd[:4] != (2, 2, 2, 2):
        raise ValueError("reset sampling needs W-perturbed gate tensors")
    k = site.kraus().reshape((2, 2, 2, 2, -1) + (site.dim_out, site.dim_in))
    i, j = (0, 1) if leg == 0 else (2, 3)
    k = np.moveaxis(k, (i, j), (0, 1))
    unequal = np.concatenate([k[0, 1].reshape(-1, site.dim_out, site.dim_in), k[1, 0].reshape(-1, site.dim_out, site.dim_in)])
    m = np.einsum("kab,kac->bc", unequal.conj(), unequal)
    p = float(m[0, 0].real)
    if np.max(np.abs(m - p * np.eye(site.dim_in))) > 1e-10:
        raise ValueError("reset probability depends on the ancilla state")
    return p


def _outcome_masks(site) -> tuple[np.ndarray, np.ndarray]:
    """Boolean masks over the physical index marking unequal pairs on the right and up W."""
    pd = site.phys_dims
    idx = np.array(np.unravel_index(np.arange(site.d), pd))
    return idx[0] != idx[1], idx[2] != idx[3]


def draw_reset_flags(nx: int, ny: int, delta: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """flags[s, x, y, leg]: the W on the right (leg 0) or up (leg 1) output of (x, y) resets."""
    if not 0 <= delta**2 <= 0.5 + 1e-15:
        raise ValueError("need delta^2 in [0, 1/2]")
    return rng.random((n, nx, ny, 2)) < delta**2


def _simulate_components(lat: IsoTnsLattice, flags: np.ndarray, rng: np.random.Generator, cap: int):
    """One trajectory given its reset pattern; returns (outcomes, probabilities, max factorization error)."""
    order = lat.causal_order()
    comps = _components(flags)
    states: dict[int, tuple[list, np.ndarray]] = {}
    bits: dict = {}
    outs, probs = [], []
    fact_err = 0.0
    for x, y in order:
        site = lat[(x, y)]
        dl, dd, dr, du = site.dims
        cid = int(comps[x, y])
        labels, psi = states.get(cid, ([], np.ones((), dtype=np.complex128)))
        # feed classical bits arriving over severed bonds
        for lab, dim in ((("h", x, y), dl), (("v", x, y), dd)):
            if dim > 1 and lab in bits:
                e = np.zeros(dim)
                e[bits.pop(lab)] = 1
                psi = np.multiply.outer(psi, e)
                labels = labels + [lab]
        ins = ([("h", x, y)] if dl > 1 else []) + ([("v", x, y)] if dd > 1 else [])
        pos = [labels.index(lab) for lab in ins]
        rest = [i for i in range(len(labels)) if i not in pos]
        psi = psi.transpose(pos + rest)
        rest_shape = psi.shape[len(pos):]
        labels = [labels[i] for i in rest]
        amp = (site.matrix() @ psi.reshape(site.dim_in, -1)).reshape(site.d, -1)
        pk = np.einsum("ar,ar->a", amp, amp.conj()).real
        mask_r, mask_u = _outcome_masks(site)
        allowed = (mask_r == flags[x, y, 0]) & (mask_u == flags[x, y, 1])
        pick = int(_choose(np.where(allowed, pk, 0.0)[None, :], rng.random(1))[0])
        p_sel = float(pk[pick])
        outs.append(pick)
        probs.append(p_sel)
        psi = (amp[pick] / np.sqrt(p_sel)).reshape((dr, du) + rest_shape)
        new_labels = [("h", x + 1, y), ("v", x, y + 1)]
        for leg, dim in ((0, dr), (1, du)):
            if dim > 1 and flags[x, y, leg]:
                # the W left this ancilla in a basis state: move it out as a classical bit
                axis = leg
                w = np.sqrt(np.sum(np.abs(np.moveaxis(psi, axis, 0)) ** 2, axis=tuple(range(1, psi.ndim))))
                bit = int(np.argmax(w))
                fact_err = max(fact_err, float(1 - w[bit] ** 2))
                slab = np.take(psi, bit, axis=axis)
                psi = np.expand_dims(slab / np.linalg.norm(slab), axis)
                bits[new_labels[leg]] = bit
        # drop dimension-1 and severed legs
        drop_axes = []
        kept_labels = []
        for leg, dim in ((0, dr), (1, du)):
            if dim == 1 or flags[x, y, leg]:
                drop_axes.append(leg)
            else:
                kept_labels.append(new_labels[leg])
        psi = psi.reshape(tuple(s for i, s in enumerate(psi.shape) if i not in drop_axes))
        labels = kept_labels + labels
        if psi.size > cap:
            raise CapExceededError(f"component frontier dimension {psi.size} exceeds the cap {cap}")
        states[cid] = (labels, psi)
    return outs, probs, fact_err


def sample_with_resets(
    lat: IsoTnsLattice,
    delta: float,
    s_th: int,
    seed: int,
    n_samples: int = 1,
    threads: int = 1,
    cap: int = FRONTIER_CAP,
) -> list[TrajectoryRecord]:
    """Reset-accelerated sampling; samples with a component larger than ``s_th`` sites are rejected."""
    if s_th < 1:
        raise ValueError("s_th must be at least 1")
    for s in lat.positions():
        for leg in (0, 1):
            p = _reset_probability(lat[s], leg)
            if abs(p - delta**2) > 1e-9:
                raise ValueError(f"site {s} resets with probability {p:.6g}, not delta^2 = {delta**2:.6g}")

    def run(block: int, start: int, stop: int):
        flags_all = draw_reset_flags(lat.nx, lat.ny, delta, stop - start, stream(seed, "resets", block))
        rng = stream(seed, "reset-outcomes", block)
        recs = []
        for i, flags in enumerate(flags_all):
            resets = tuple(((x, y), "ru"[leg]) for x, y, leg in zip(*np.nonzero(flags)))
            resets = tuple(((int(s[0]), int(s[1])), leg) for s, leg in resets)
            if np.bincount(_components(flags).ravel()).max() > s_th:
                recs.append(TrajectoryRecord((), (), resets, seed, start + i, False))
                continue
            outs, probs, _ = _simulate_components(lat, flags, rng, cap)
            recs.append(TrajectoryRecord(tuple(outs), tuple(probs), resets, seed, start + i, True))
        return recs

    return [r for part in map_blocks(run, n_samples, threads) for r in part]


@dataclass(frozen=True)
class RejectionRow:
    delta: float
    s_th: int
    rejection_fraction: float
    mean_max_component: float
    max_component: int


def default_s_th(n_sites: int, c: float = 4.0) -> int:
    """s_th = c log N, rounded down."""
    return max(1, int(np.floor(c * np.log(n_sites))))


def rejection_curve(
    dims: tuple[int, int],
    delta_grid,
    n_samples: int,
    seed: int,
    s_th: int | None = None,
    threads: int = 1,
) -> list[RejectionRow]:
    """Rejection statistics of the reset sampler.

    Whether a sample is rejected depends only on its reset pattern, which is
    independent of the gates, so no quantum state is simulated here.
    """
    nx, ny = dims
    th = default_s_th(nx * ny) if s_th is None else s_th
    rows = []
    for k, delta in enumerate(delta_grid):

        def run(block: int, start: int, stop: int, k=k, delta=delta):
            flags = draw_reset_flags(nx, ny, delta, stop - start, stream(seed, f"curve/{k}", block))
            return [int(np.bincount(_components(f).ravel()).max()) for f in flags]

        sizes = np.array([s for part in map_blocks(run, n_samples, threads) for s in part])
        rows.append(RejectionRow(float(delta), th, float(np.mean(sizes > th)), float(sizes.mean()), int(sizes.max())))
    return rows
