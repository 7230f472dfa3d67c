"""Command-line experiment runner.

Usage: ``isotns {verify,expect,sample,scan,embed} --config cfg.json [--seed N]
[--out PATH] [--exact] [--threads N]``.  Configs are JSON objects; see the
README for the accepted keys.  Tables are written as CSV, reports as JSON.
Exit codes: 0 success, 2 config error, 3 invariant failure, 4 cap exceeded.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import lattice as L
from .channels import depolarizing_split, injectivity_delta
from .exact import CapExceededError, Observable, expectation_exact
from .percolation import AllRejectedError, cluster_survey, estimate
from .rng import stream
from .sampler import rejection_curve, sample_exact, sample_with_resets
from .tensor_core import check_isometry

CONFIG_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT, EXIT_CAP = 0, 2, 3, 4

FAMILIES = ("identity", "random", "depolarized", "w", "postselect_gate", "swap_projector", "embed")


class ConfigError(ValueError):
    pass


def _req(cfg: dict, key: str, kind=None):
    if key not in cfg or cfg[key] is None:
        raise ConfigError(f"missing required key {key!r}")
    val = cfg[key]
    if kind is not None and not isinstance(val, kind):
        raise ConfigError(f"key {key!r} has the wrong type")
    return val


def _number(cfg: dict, key: str, lo: float, hi: float, default=None) -> float:
    val = cfg.get(key, default)
    if val is None:
        raise ConfigError(f"missing required key {key!r}")
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not lo <= val <= hi:
        raise ConfigError(f"{key!r} must be a number in [{lo}, {hi}]")
    return float(val)


def _int(cfg: dict, key: str, lo: int, default=None) -> int:
    val = cfg.get(key, default)
    if isinstance(val, bool) or not isinstance(val, int) or val < lo:
        raise ConfigError(f"{key!r} must be an integer >= {lo}")
    return val


def _complex_matrix(rows) -> np.ndarray:
    try:
        arr = np.asarray(rows, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError("matrices are lists of rows of [re, im] pairs") from exc
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ConfigError("matrices are lists of rows of [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def load_circuit(path: str) -> L.BrickworkCircuit:
    try:
        rec = json.loads(Path(path).read_text())
        return L.BrickworkCircuit.from_record(rec)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed circuit file {path}: {exc}") from exc


def validate_lattice(spec: dict, base: Path) -> None:
    if not isinstance(spec, dict):
        raise ConfigError("'lattice' must be an object")
    fam = _req(spec, "family", str)
    if fam not in FAMILIES:
        raise ConfigError(f"unknown lattice family {fam!r}; choose from {FAMILIES}")
    if fam == "embed":
        _req(spec, "circuit", str)
        return
    _int(spec, "nx", 1)
    _int(spec, "ny", 1)
    if fam == "depolarized":
        _number(spec, "p", 1e-12, 1 - 1e-12)
    if fam == "w":
        _number(spec, "delta", 0.0, math.sqrt(0.5))
    if fam == "random":
        _int(spec, "d", 1, 2)


def build_lattice(spec: dict, seed: int, base: Path) -> L.IsoTnsLattice:
    fam = spec["family"]
    rng = stream(int(spec.get("lattice_seed", seed)), "lattice")
    if fam == "embed":
        path = spec["circuit"]
        circ = load_circuit(str(base / path) if not Path(path).is_absolute() else path)
        try:
            return L.embed_brickwork(circ, spec.get("size"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    nx, ny = spec["nx"], spec["ny"]
    if fam == "identity":
        return L.uniform_lattice(nx, ny, L.identity_tensor())
    if fam == "random":
        return L.random_lattice(nx, ny, rng, d=spec.get("d", 2))
    if fam == "depolarized":
        return L.depolarized_lattice(nx, ny, spec["p"], rng)
    if fam == "w":
        return L.w_lattice(nx, ny, spec["delta"], rng)
    if fam == "postselect_gate":
        return L.uniform_lattice(nx, ny, L.postselect_gate_projector(L.haar_unitary(4, rng)))
    return L.uniform_lattice(nx, ny, L.maximally_injective_swap_projector())


PAULI = {"i": L.I2, "x": L.X, "y": L.Y, "z": L.Z}


def build_observable(spec: dict, lat: L.IsoTnsLattice) -> Observable:
    if not isinstance(spec, dict):
        raise ConfigError("'observable' must be an object")
    site = tuple(_req(spec, "site", list))
    if len(site) != 2 or not (0 <= site[0] < lat.nx and 0 <= site[1] < lat.ny):
        raise ConfigError(f"observable site {list(site)} is outside the lattice")
    factors = spec.get("factors")
    if "pauli" in spec:
        word = str(spec["pauli"]).lower()
        if not word or any(c not in PAULI for c in word):
            raise ConfigError("'pauli' must be a word over i, x, y, z")
        m = np.ones((1, 1))
        for c in word:
            m = np.kron(m, PAULI[c])
        if factors is None and 2 ** len(word) != lat[site].d:
            factors = list(range(len(word)))
    else:
        m = _complex_matrix(_req(spec, "matrix"))
    try:
        return Observable(site, m, None if factors is None else tuple(factors))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def run_verify(cfg: dict, args, base: Path) -> tuple[str, int]:
    validate_lattice(cfg.get("lattice"), base)
    lat = build_lattice(cfg["lattice"], cfg["seed"], base)
    sites, ok = [], True
    for s in lat.positions():
        site = lat[s]
        good, dev = check_isometry(site.matrix())
        rep = injectivity_delta(site)
        err = None
        if rep.delta > 0:
            err = depolarizing_split(site).reconstruction_error()
            ok &= err <= 1e-9
        ok &= good
        rec = {"site": list(s), "role": site.role, "isometry_deviation": dev, "split_error": err}
        rec.update(rep.to_record())
        sites.append(rec)
    interior = [r for r in sites if r["D"] > 1 and 0 < r["site"][0] < lat.nx - 1 and 0 < r["site"][1] < lat.ny - 1]
    report = {
        "version": CONFIG_VERSION,
        "nx": lat.nx,
        "ny": lat.ny,
        "min_delta": min(r["delta"] for r in sites),
        "interior_delta": min((r["delta"] for r in interior), default=None),
        "max_isometry_deviation": max(r["isometry_deviation"] for r in sites),
        "max_split_error": max((r["split_error"] for r in sites if r["split_error"] is not None), default=None),
        "ok": bool(ok),
        "sites": sites,
    }
    return _dump(report), EXIT_OK if ok else EXIT_INVARIANT


def _validate_mc(cfg: dict) -> None:
    _number(cfg, "eta", 0.0, 1.0)
    if cfg.get("s_th") is not None:
        _int(cfg, "s_th", 1)
    _int(cfg, "n_samples", 1)


def run_expect(cfg: dict, args, base: Path) -> tuple[str, int]:
    validate_lattice(cfg.get("lattice"), base)
    _validate_mc(cfg)
    lat = build_lattice(cfg["lattice"], cfg["seed"], base)
    obs = build_observable(cfg.get("observable"), lat)
    try:
        res = estimate(lat, obs, cfg["eta"], cfg.get("s_th"), cfg["n_samples"], cfg["seed"], threads=args.threads)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    exact = expectation_exact(lat, obs, cap=2**16) if args.exact else None
    out = io.StringIO()
    out.write("estimate,exact,abs_diff,stderr,n_accepted,n_rejected_size,n_rejected_frontier,max_cluster\n")
    ex = "" if exact is None else repr(exact)
    diff = "" if exact is None else repr(abs(res.mean - exact))
    out.write(
        f"{res.mean!r},{ex},{diff},{res.standard_error!r},{res.n_accepted},"
        f"{res.n_rejected_size},{res.n_rejected_frontier},{res.max_cluster}\n"
    )
    return out.getvalue(), EXIT_OK


def run_sample(cfg: dict, args, base: Path) -> tuple[str, int]:
    validate_lattice(cfg.get("lattice"), base)
    n = _int(cfg, "n_samples", 1)
    mode = cfg.get("sampler", "exact")
    if mode not in ("exact", "resets"):
        raise ConfigError("'sampler' must be 'exact' or 'resets'")
    if mode == "resets":
        if cfg["lattice"]["family"] != "w":
            raise ConfigError("the reset sampler needs a 'w' lattice")
        s_th = _int(cfg, "s_th", 1)
    lat = build_lattice(cfg["lattice"], cfg["seed"], base)
    if mode == "exact":
        recs = sample_exact(lat, cfg["seed"], n, args.threads)
    else:
        recs = sample_with_resets(lat, cfg["lattice"]["delta"], s_th, cfg["seed"], n, args.threads)
    out = io.StringIO()
    out.write("outcome,log_prob,resets,accepted\n")
    for r in recs:
        out.write(r.line() + "\n")
    return out.getvalue(), EXIT_OK


def _grid(cfg: dict, key: str, hi: float) -> list[float]:
    g = _req(cfg, key, list)
    if not g or any(isinstance(v, bool) or not isinstance(v, (int, float)) or not 0 <= v <= hi for v in g):
        raise ConfigError(f"{key!r} must be a nonempty list of numbers in [0, {hi}]")
    return [float(v) for v in g]


def run_scan(cfg: dict, args, base: Path) -> tuple[str, int]:
    mode = cfg.get("mode", "estimate" if "lattice" in cfg else "survey")
    out = io.StringIO()
    if mode == "estimate":
        validate_lattice(cfg.get("lattice"), base)
        grid = _grid(cfg, "eta_grid", 1.0)
        _int(cfg, "n_samples", 1)
        if cfg.get("s_th") is not None:
            _int(cfg, "s_th", 1)
        lat = build_lattice(cfg["lattice"], cfg["seed"], base)
        obs = build_observable(cfg.get("observable"), lat)
        out.write("eta,mean,stderr,n_accepted,n_rejected_size,n_rejected_frontier,max_cluster\n")
        for eta in grid:
            try:
                r = estimate(lat, obs, eta, cfg.get("s_th"), cfg["n_samples"], cfg["seed"], threads=args.threads)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
            out.write(
                f"{eta!r},{r.mean!r},{r.standard_error!r},{r.n_accepted},"
                f"{r.n_rejected_size},{r.n_rejected_frontier},{r.max_cluster}\n"
            )
    elif mode == "survey":
        dims = _req(cfg, "dims", list)
        grid = _grid(cfg, "eta_grid", 1.0)
        n = _int(cfg, "n_samples", 1)
        if len(dims) != 2 or any(not isinstance(d, int) or d < 1 for d in dims):
            raise ConfigError("'dims' must be two positive integers")
        rows = cluster_survey(tuple(dims), grid, n, cfg["seed"], threads=args.threads)
        out.write("eta,mean_size,percolation_fraction,tail_slope,max_cluster\n")
        for r in rows:
            out.write(f"{r.eta!r},{r.mean_size!r},{r.percolation_fraction!r},{r.tail_slope!r},{max(r.histogram)}\n")
    elif mode == "resets":
        dims = _req(cfg, "dims", list)
        grid = _grid(cfg, "delta_grid", math.sqrt(0.5))
        n = _int(cfg, "n_samples", 1)
        s_th = cfg.get("s_th")
        if s_th is not None:
            _int(cfg, "s_th", 1)
        rows = rejection_curve(tuple(dims), grid, n, cfg["seed"], s_th, threads=args.threads)
        out.write("delta,s_th,rejection_fraction,mean_max_component,max_component\n")
        for r in rows:
            out.write(f"{r.delta!r},{r.s_th},{r.rejection_fraction!r},{r.mean_max_component!r},{r.max_component}\n")
    else:
        raise ConfigError("'mode' must be 'estimate', 'survey' or 'resets'")
    return out.getvalue(), EXIT_OK


def run_embed(cfg: dict, args, base: Path) -> tuple[str, int]:
    path = _req(cfg, "circuit", str)
    circ = load_circuit(str(base / path) if not Path(path).is_absolute() else path)
    try:
        lat = L.embed_brickwork(circ, cfg.get("size"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return _dump(lat.to_record()), EXIT_OK


COMMANDS = {"verify": run_verify, "expect": run_expect, "sample": run_sample, "scan": run_scan, "embed": run_embed}


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="isotns", description="isoTNS channel-circuit experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON config file")
        s.add_argument("--seed", type=int, help="overrides the config seed")
        s.add_argument("--out", help="output path (default: stdout)")
        s.add_argument("--exact", action="store_true", help="compare against the exact contraction")
        s.add_argument("--threads", type=int, default=1)
    return p


def load_config(path: str, seed: int | None) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if cfg.get("version", CONFIG_VERSION) != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {cfg.get('version')}")
    if seed is not None:
        cfg["seed"] = seed
    s = cfg.get("seed")
    if isinstance(s, bool) or not isinstance(s, int) or not 0 <= s < 2**64:
        raise ConfigError("a seed (unsigned 64-bit integer) is required")
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be positive")
        cfg = load_config(args.config, args.seed)
        text, code = COMMANDS[args.command](cfg, args, Path(args.config).resolve().parent)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapExceededError as exc:
        print(f"cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    except AllRejectedError as exc:
        print(f"estimator failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
