"""Percolation Monte Carlo for local expectation values of injective isoTNS.

Each site channel is written as (1 - eta) E1 + eta * depolarizing.  Drawing
the branch independently per site turns the sum over branches into site
percolation: a depolarized (empty) site forgets its input and emits the
maximally mixed state, so only the occupied cluster attached to the
observable site needs to be contracted.  The observable site itself always
keeps its full isometry, so its own draw is ignored and it is always part of
the cluster.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .channels import DepolarizingSplit, channel_from_isometry, depolarizing_split, injectivity_delta
from .exact import FRONTIER_CAP, CapExceededError, Frontier, Observable
from .lattice import IsoTnsLattice, Site
from .rng import BLOCK, map_blocks, stream

NEIGHBOURS = ((1, 0), (-1, 0), (0, 1), (0, -1))


@dataclass(frozen=True)
class OccupancyMap:
    """``occupied[x, y]`` is True where the E1 branch was drawn."""

    occupied: np.ndarray
    seed: int | None = None

    def __post_init__(self) -> None:
        occ = np.array(self.occupied, dtype=bool)
        if occ.ndim != 2:
            raise ValueError("occupancy map must be two dimensional")
        occ.flags.writeable = False
        object.__setattr__(self, "occupied", occ)

    @property
    def shape(self) -> tuple[int, int]:
        return self.occupied.shape  # type: ignore[return-value]


@dataclass(frozen=True)
class Cluster:
    sites: frozenset[Site]
    root: Site

    @property
    def size(self) -> int:
        return len(self.sites)

    @property
    def bounding_box(self) -> tuple[int, int, int, int] | None:
        """(xmin, ymin, xmax, ymax), or None for an empty cluster."""
        if not self.sites:
            return None
        xs = [s[0] for s in self.sites]
        ys = [s[1] for s in self.sites]
        return min(xs), min(ys), max(xs), max(ys)

    @property
    def frontier_width(self) -> int:
        """Upper bound on ancilla legs alive while sweeping the cluster: two per site on the widest diagonal."""
        if not self.sites:
            return 0
        return 2 * max(Counter(x + y for x, y in self.sites).values())


@dataclass(frozen=True)
class EstimateResult:
    mean: float
    standard_error: float
    n_samples: int
    n_accepted: int
    n_rejected_size: int
    n_rejected_frontier: int
    s_th: int | None
    eta: float
    seed: int
    cluster_size_histogram: dict[int, int] = field(default_factory=dict)

    @property
    def max_cluster(self) -> int:
        return max(self.cluster_size_histogram, default=0)

    def to_record(self) -> dict:
        return {
            "mean": self.mean,
            "standard_error": self.standard_error,
            "n_samples": self.n_samples,
            "n_accepted": self.n_accepted,
            "n_rejected_size": self.n_rejected_size,
            "n_rejected_frontier": self.n_rejected_frontier,
            "s_th": self.s_th,
            "eta": self.eta,
            "seed": self.seed,
            "cluster_size_histogram": {str(k): v for k, v in sorted(self.cluster_size_histogram.items())},
        }


class AllRejectedError(RuntimeError):
    pass


def assign_occupancy(dims: tuple[int, int], eta: float, seed: int, block: int = 0) -> OccupancyMap:
    """Each site independently empty with probability ``eta``."""
    if not 0 <= eta <= 1:
        raise ValueError("eta must lie in [0, 1]")
    u = stream(seed, "occupancy", block).random(dims)
    return OccupancyMap(u >= eta, seed)


def _in_cone(site: Site, root: Site) -> bool:
    return 0 <= site[0] <= root[0] and 0 <= site[1] <= root[1]


def find_cluster(occ: OccupancyMap, site: Site) -> Cluster:
    """Occupied 4-neighbour component of ``site`` inside its past light cone."""
    m, n = site
    nx, ny = occ.shape
    if not (0 <= m < nx and 0 <= n < ny):
        raise ValueError(f"site {site} outside the {nx}x{ny} map")
    grid = occ.occupied
    if not grid[m, n]:
        return Cluster(frozenset(), (m, n))
    seen = {(m, n)}
    queue = deque([(m, n)])
    while queue:
        x, y = queue.popleft()
        for dx, dy in NEIGHBOURS:
            nb = (x + dx, y + dy)
            if nb not in seen and _in_cone(nb, (m, n)) and grid[nb]:
                seen.add(nb)
                queue.append(nb)
    return Cluster(frozenset(seen), (m, n))


def root_cluster(occ: OccupancyMap, site: Site) -> Cluster:
    """Cluster used by the estimator: the observable site counts as occupied."""
    grid = np.array(occ.occupied)
    grid[site] = True
    return find_cluster(OccupancyMap(grid, occ.seed), site)


def site_splits(lat: IsoTnsLattice, eta: float, sites: Iterable[Site]) -> dict[Site, DepolarizingSplit]:
    out = {}
    for s in sites:
        rep = injectivity_delta(lat[s])
        if eta > rep.eta + 1e-12:
            raise ValueError(f"site {s} admits depolarizing rate at most {rep.eta:.6g} < eta = {eta}")
        out[s] = depolarizing_split(lat[s], eta)
    return out


def _observable_legs(lat: IsoTnsLattice, obs: Observable) -> list:
    site = lat[obs.site]
    if obs.factors is None:
        return [None]
    for f in obs.factors:
        if not 0 <= f < len(site.phys_dims):
            raise ValueError(f"physical factor {f} does not exist at site {obs.site}")
    return list(obs.factors)


def contract_cluster(
    lat: IsoTnsLattice,
    splits: dict[Site, DepolarizingSplit],
    cluster: Cluster,
    obs: Observable,
    frontier_cap: int = FRONTIER_CAP,
) -> float:
    """Conditional expectation of ``obs`` given that exactly ``cluster`` is occupied.

    Cluster sites other than the observable site apply their normalized E1
    channel; ancillas arriving from outside the cluster are maximally mixed
    and ancillas leaving it are traced.  Raises :class:`CapExceededError` when
    the frontier grows beyond ``frontier_cap``.
    """
    root = obs.site
    members = set(cluster.sites) | {root}
    for s in members:
        if not _in_cone(s, root):
            raise ValueError(f"cluster site {s} lies outside the past light cone of {root}")
    fr = Frontier(frontier_cap)
    for x, y in sorted(members, key=lambda s: (s[0] + s[1], s[0])):
        site = lat[(x, y)]
        dl, dd, dr, du = site.dims
        ins = []
        for lab, dim, src in ((("h", x, y), dl, (x - 1, y)), (("v", x, y), dd, (x, y - 1))):
            if dim == 1:
                continue
            if src not in members:
                fr.add_mixed(lab, dim)
            ins.append(lab)
        block = fr.pop(ins)
        if (x, y) == root:
            v = site.matrix()
            block = np.einsum("ai,ixjy,bj->axby", v, block, v.conj(), optimize=True)
            pd = list(site.phys_dims)
            p_labels = [("p", i) for i in range(len(pd))]
            fr.push(block, p_labels + ["r", "u"], pd + [dr, du])
            fr.trace_out(["r", "u"])
            wanted = _observable_legs(lat, obs)
            if wanted == [None]:
                rho = fr.matrix(p_labels)
            else:
                fr.trace_out([p for i, p in enumerate(p_labels) if i not in wanted])
                rho = fr.matrix([p_labels[i] for i in wanted])
            if rho.shape != obs.matrix.shape:
                raise ValueError(f"observable of shape {obs.matrix.shape} on a leg of dimension {rho.shape[0]}")
            return float(np.trace(rho @ obs.matrix).real)
        ks = splits[(x, y)].normalized_e1().stack()
        block = np.einsum("kai,ixjy,kbj->axby", ks, block, ks.conj(), optimize=True)
        fr.push(block, [("h", x + 1, y), ("v", x, y + 1)], [dr, du])
        drop = []
        if dr == 1 or (x + 1, y) not in members:
            drop.append(("h", x + 1, y))
        if du == 1 or (x, y + 1) not in members:
            drop.append(("v", x, y + 1))
        fr.trace_out(drop)
    raise AssertionError("observable site was not reached")


def _check_eta(lat: IsoTnsLattice, root: Site, eta: float) -> list[Site]:
    if not 0 <= eta <= 1:
        raise ValueError("eta must lie in [0, 1]")
    cone = [(x, y) for x in range(root[0] + 1) for y in range(root[1] + 1) if (x, y) != root]
    if eta == 0:
        return cone
    for s in cone:
        rep = injectivity_delta(lat[s])
        if eta > rep.eta + 1e-12:
            raise ValueError(f"site {s} admits depolarizing rate at most {rep.eta:.6g} < eta = {eta}")
    return cone


def _split(site, eta: float) -> DepolarizingSplit:
    """depolarizing_split, except that eta = 0 needs no injectivity: E1 is the site channel itself."""
    if eta == 0:
        ch = channel_from_isometry(site)
        return DepolarizingSplit(0.0, ch, ch)
    return depolarizing_split(site, eta)


class ClusterEvaluator:
    """Memoized contract_cluster for one lattice, observable and eta."""

    def __init__(self, lat: IsoTnsLattice, obs: Observable, eta: float, frontier_cap: int = FRONTIER_CAP) -> None:
        self.lat, self.obs, self.eta, self.cap = lat, obs, eta, frontier_cap
        self.cone = _check_eta(lat, obs.site, eta)
        self.splits: dict[Site, DepolarizingSplit] = {}
        self.cache: dict[frozenset, float | None] = {}

    def __call__(self, cluster: Cluster) -> float | None:
        """Value of the cluster, or None when the frontier cap is hit."""
        key = cluster.sites | {self.obs.site}
        if key not in self.cache:
            for s in key:
                if s != self.obs.site and s not in self.splits:
                    self.splits[s] = _split(self.lat[s], self.eta)
            try:
                self.cache[key] = contract_cluster(self.lat, self.splits, cluster, self.obs, self.cap)
            except CapExceededError:
                self.cache[key] = None
        return self.cache[key]


def exhaustive_average(lat: IsoTnsLattice, obs: Observable, eta: float) -> float:
    """sum over occupancy patterns of the light cone of Prob(pattern) * cluster value."""
    ev = ClusterEvaluator(lat, obs, eta, frontier_cap=2**20)
    cone = ev.cone
    total = 0.0
    grid = np.zeros((lat.nx, lat.ny), dtype=bool)
    for bits in range(2 ** len(cone)):
        grid[:] = False
        n_occ = 0
        for i, s in enumerate(cone):
            if bits >> i & 1:
                grid[s] = True
                n_occ += 1
        prob = (1 - eta) ** n_occ * eta ** (len(cone) - n_occ)
        if prob == 0:
            continue
        value = ev(root_cluster(OccupancyMap(grid), obs.site))
        assert value is not None
        total += prob * value
    return total


def estimate(
    lat: IsoTnsLattice,
    obs: Observable,
    eta: float,
    s_th: int | None,
    n_samples: int,
    seed: int,
    frontier_cap: int = FRONTIER_CAP,
    threads: int = 1,
) -> EstimateResult:
    """Monte Carlo estimate of <O>, keeping samples whose cluster has at most ``s_th`` sites.

    ``s_th = None`` disables the size cutoff.  Results are a deterministic
    function of the arguments other than ``threads``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    if s_th is not None and s_th < 1:
        raise ValueError("s_th must be at least 1")
    ev = ClusterEvaluator(lat, obs, eta, frontier_cap)
    root = obs.site
    mx, my = root[0] + 1, root[1] + 1

    def run(block: int, start: int, stop: int):
        rng = stream(seed, "estimate", block)
        draws = rng.random((stop - start, mx, my)) >= eta
        sizes, values, rejected_frontier = [], [], 0
        for occ in draws:
            occ[root] = True
            cl = find_cluster(OccupancyMap(occ), root)
            sizes.append(cl.size)
            if s_th is not None and cl.size > s_th:
                continue
            v = ev(cl)
            if v is None:
                rejected_frontier += 1
                continue
            values.append(v)
        return sizes, values, rejected_frontier

    # the evaluator cache is filled from one thread at a time per key; values are deterministic
    parts = map_blocks(run, n_samples, threads)
    sizes = [s for p in parts for s in p[0]]
    values = np.array([v for p in parts for v in p[1]])
    n_front = sum(p[2] for p in parts)
    n_size = sum(1 for s in sizes if s_th is not None and s > s_th)
    if values.size == 0:
        raise AllRejectedError(f"all {n_samples} samples rejected (size {n_size}, frontier {n_front})")
    mean = float(values.mean())
    se = float(values.std(ddof=1) / np.sqrt(values.size)) if values.size > 1 else 0.0
    return EstimateResult(
        mean=mean,
        standard_error=se,
        n_samples=n_samples,
        n_accepted=int(values.size),
        n_rejected_size=n_size,
        n_rejected_frontier=n_front,
        s_th=s_th,
        eta=float(eta),
        seed=seed,
        cluster_size_histogram=dict(sorted(Counter(sizes).items())),
    )


@dataclass(frozen=True)
class SurveyRow:
    eta: float
    histogram: dict[int, int]
    percolation_fraction: float
    mean_size: float
    tail_slope: float

    def tail(self) -> tuple[np.ndarray, np.ndarray]:
        """(s, Prob(S >= s)) over the observed sizes."""
        n = sum(self.histogram.values())
        s_max = max(self.histogram)
        counts = np.zeros(s_max + 2)
        for s, c in self.histogram.items():
            counts[s] += c
        surv = counts[::-1].cumsum()[::-1] / n
        return np.arange(s_max + 2), surv


def tail_slope(histogram: dict[int, int], s_range: tuple[int, int] = (5, 25)) -> float:
    """Least-squares slope of ln Prob(S >= s) over ``s_range`` (nan without support)."""
    n = sum(histogram.values())
    lo, hi = s_range
    s = np.arange(lo, hi + 1)
    surv = np.array([sum(c for k, c in histogram.items() if k >= v) for v in s]) / n
    ok = surv > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(s[ok], np.log(surv[ok]), 1)[0])


def _cluster_sizes(occ: np.ndarray, root: Site) -> tuple[int, bool]:
    """Size of the root cluster and whether it reaches the far (x=0 or y=0) boundary."""
    sub = occ[: root[0] + 1, : root[1] + 1].copy()
    sub[root] = True
    labels, _ = ndimage.label(sub)
    mask = labels == labels[root]
    return int(mask.sum()), bool(mask[0, :].any() or mask[:, 0].any())


def cluster_survey(
    dims: tuple[int, int],
    eta_grid: Sequence[float],
    n_samples: int,
    seed: int,
    site: Site | None = None,
    s_range: tuple[int, int] = (5, 25),
    threads: int = 1,
) -> list[SurveyRow]:
    """Empirical cluster statistics of the estimator's root cluster.

    The root defaults to the corner (nx-1, ny-1), whose light cone is the
    whole lattice; the percolation fraction counts clusters that reach the
    opposite edges x = 0 or y = 0.
    """
    nx, ny = dims
    root = site if site is not None else (nx - 1, ny - 1)
    rows = []
    for k, eta in enumerate(eta_grid):
        if not 0 <= eta <= 1:
            raise ValueError("eta must lie in [0, 1]")

        def run(block: int, start: int, stop: int, k=k, eta=eta):
            rng = stream(seed, f"survey/{k}", block)
            out = []
            for occ in rng.random((stop - start, nx, ny)) >= eta:
                out.append(_cluster_sizes(occ, root))
            return out

        res = [r for part in map_blocks(run, n_samples, threads) for r in part]
        hist = dict(sorted(Counter(s for s, _ in res).items()))
        rows.append(
            SurveyRow(
                eta=float(eta),
                histogram=hist,
                percolation_fraction=sum(t for _, t in res) / n_samples,
                mean_size=float(np.mean([s for s, _ in res])),
                tail_slope=tail_slope(hist, s_range),
            )
        )
    return rows


__all__ = [
    "BLOCK",
    "Cluster",
    "ClusterEvaluator",
    "EstimateResult",
    "OccupancyMap",
    "assign_occupancy",
    "cluster_survey",
    "contract_cluster",
    "estimate",
    "exhaustive_average",
    "find_cluster",
    "root_cluster",
    "site_splits",
    "tail_slope",
]
