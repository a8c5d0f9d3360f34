"""Command-line front end: one binary, six subcommands.

``resolvent``, ``evolve``, ``oracle``, ``rate``, ``particles`` and
``verify`` share a YAML config schema (``spec_version: 1``) and write
deterministic artifacts into the chosen output directory, plus a
``manifest.json`` recording the config hash, package version and wall
time.  Everything except the manifest is byte-identical across reruns
with the same config and seed, regardless of ``--threads``.

Float columns in CSV files are printed with 17 significant digits so
that parsing them back reproduces the binary values exactly.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .analysis import fit_decay_rate, smoothing_exponents
from .diagnostics import SUITE_NAMES, report_as_dict, run_suite
from .grid_field import Field, GridSpec, load_field, save_field
from .measures import MeasureSpec, evolve_measure, mollify
from .oracles import barenblatt, heat_kernel
from .particles import SdeConfig, simulate
from .profiles import RegularizedProfile, make_profile
from .resolvent import ResolventConfig, solve_resolvent
from .semigroup import EvolveConfig, Trajectory, evolve

_SPEC_VERSION = 1


def _fmt(x: float) -> str:
    """Round-trip-safe decimal rendering (17 significant digits)."""
    return f"{float(x):.17g}"


class ConfigError(ValueError):
    """All validation failures of a config file, not only the first."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        lines = "\n".join(f"  - {v}" for v in self.violations)
        super().__init__(f"invalid configuration:\n{lines}")


@dataclass(frozen=True)
class RunConfig:
    """A parsed and validated config file.

    Blocks that the file does not contain are None; each subcommand
    checks that the pieces it needs are present before computing.
    ``sha256`` is the hash of the raw file bytes and ties artifacts back
    to the exact config text that produced them.
    """

    sha256: str
    spec_version: int
    seed: int
    grid: GridSpec | None
    profile: RegularizedProfile | None
    initial_kind: str | None
    initial: dict | None
    measure: MeasureSpec | None
    eps_ladder: tuple[float, ...] | None
    evolve_cfg: EvolveConfig | None
    lam: float | None
    resolvent_cfg: ResolventConfig
    sde_cfg: SdeConfig | None
    n_particles: int | None
    snapshots: bool


def shipped_configs() -> dict[str, Path]:
    """Name -> path for the config files installed with the package."""
    root = resources.files("nfpelab") / "configs"
    out = {}
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".yaml"):
            out[entry.name[:-5]] = Path(str(entry))
    return out


def _want(block: dict, key: str, kinds, bad: list[str], ctx: str, default=None):
    """Fetch block[key], recording a violation when the type is wrong."""
    if key not in block:
        return default
    v = block[key]
    if isinstance(v, bool) and bool not in (kinds if isinstance(kinds, tuple) else (kinds,)):
        bad.append(f"{ctx}.{key}: expected a number, got a boolean")
        return default
    if not isinstance(v, kinds):
        bad.append(f"{ctx}.{key}: expected {kinds}, got {type(v).__name__} {v!r}")
        return default
    return v


def _reject_extras(block: dict, allowed: set[str], bad: list[str], ctx: str) -> None:
    for k in block:
        if k not in allowed:
            bad.append(f"{ctx}: unknown key {k!r}")


def _parse_grid(block, bad: list[str]) -> GridSpec | None:
    if block is None:
        return None
    if not isinstance(block, dict):
        bad.append("grid: must be a mapping with keys d, n, L")
        return None
    _reject_extras(block, {"d", "n", "L"}, bad, "grid")
    d = _want(block, "d", int, bad, "grid")
    n = _want(block, "n", int, bad, "grid")
    L = _want(block, "L", (int, float), bad, "grid")
    if d is None or n is None or L is None:
        bad.append("grid: requires all of d, n, L")
        return None
    try:
        return GridSpec(d=d, n=n, L=float(L))
    except ValueError as e:
        bad.append(f"grid: {e}")
        return None


def _parse_profile(block, reg_block, d: int, bad: list[str]) -> RegularizedProfile | None:
    if block is None:
        return None
    if not isinstance(block, dict):
        bad.append("profile: must be a mapping with keys beta, b, D")
        return None
    _reject_extras(block, {"beta", "b", "D"}, bad, "profile")
    beta = block.get("beta") or {}
    bb = block.get("b") or {}
    dd = block.get("D") or {}
    for name, sub in (("beta", beta), ("b", bb), ("D", dd)):
        if not isinstance(sub, dict):
            bad.append(f"profile.{name}: must be a mapping")
            return None
    _reject_extras(beta, {"kind", "m", "a"}, bad, "profile.beta")
    _reject_extras(bb, {"kind", "value"}, bad, "profile.b")
    _reject_extras(dd, {"kind", "vector", "inner", "outer"}, bad, "profile.D")

    kwargs = {
        "beta_kind": beta.get("kind", "porous_medium"),
        "m": float(_want(beta, "m", (int, float), bad, "profile.beta", 2.0)),
        "a": float(_want(beta, "a", (int, float), bad, "profile.beta", 1.0)),
        "b_kind": bb.get("kind", "constant"),
        "b_value": float(_want(bb, "value", (int, float), bad, "profile.b", 1.0)),
        "D_kind": dd.get("kind", "zero"),
        "d": d,
    }
    vec = dd.get("vector")
    if vec is not None:
        if not (isinstance(vec, list) and all(isinstance(v, (int, float)) for v in vec)):
            bad.append("profile.D.vector: must be a list of numbers")
        else:
            kwargs["D_vector"] = tuple(float(v) for v in vec)
    if "inner" in dd:
        kwargs["ramp_inner"] = float(_want(dd, "inner", (int, float), bad, "profile.D", 1.0))
    if "outer" in dd:
        kwargs["ramp_outer"] = float(_want(dd, "outer", (int, float), bad, "profile.D", 2.0))

    eps = 0.0
    force_cutoff = False
    if reg_block is not None:
        if not isinstance(reg_block, dict):
            bad.append("regularization: must be a mapping")
        else:
            _reject_extras(reg_block, {"eps", "force_cutoff"}, bad, "regularization")
            eps = float(_want(reg_block, "eps", (int, float), bad, "regularization", 0.0))
            force_cutoff = bool(reg_block.get("force_cutoff", False))
            if eps < 0:
                bad.append(f"regularization.eps: must be >= 0, got {eps}")
                eps = 0.0
    if force_cutoff and eps == 0.0:
        bad.append("regularization.force_cutoff needs eps > 0 (the cutoff radius is 1/eps)")

    try:
        base = make_profile(**kwargs)
    except (ValueError, TypeError) as e:
        bad.append(f"profile: {e}")
        return None
    bad.extend(f"profile: {p}" for p in base.check_hypotheses())
    try:
        return RegularizedProfile(base, eps)
    except ValueError as e:
        bad.append(f"regularization: {e}")
        return None


def _parse_initial(block, grid: GridSpec | None, bad: list[str]):
    """Returns (kind, payload, measure, eps_ladder)."""
    if block is None:
        return None, None, None, None
    if not isinstance(block, dict):
        bad.append("initial: must be a mapping with a 'kind' key")
        return None, None, None, None
    kind = block.get("kind")
    if kind not in ("gaussian", "barenblatt", "field", "measure"):
        bad.append(
            f"initial.kind: must be one of gaussian, barenblatt, field, measure; got {kind!r}"
        )
        return None, None, None, None

    if kind == "gaussian":
        _reject_extras(block, {"kind", "center", "width", "mass"}, bad, "initial")
        width = float(_want(block, "width", (int, float), bad, "initial", 0.5))
        mass = float(_want(block, "mass", (int, float), bad, "initial", 1.0))
        center = block.get("center", 0.0)
        if isinstance(center, (int, float)) and not isinstance(center, bool):
            center = [float(center)] * (grid.d if grid else 1)
        if not (isinstance(center, list) and all(isinstance(c, (int, float)) for c in center)):
            bad.append("initial.center: must be a number or list of numbers")
            center = [0.0]
        if width <= 0:
            bad.append(f"initial.width: must be positive, got {width}")
        if grid is not None and len(center) != grid.d:
            bad.append(f"initial.center: needs {grid.d} components, got {len(center)}")
        return kind, {"center": [float(c) for c in center], "width": width, "mass": mass}, None, None

    if kind == "barenblatt":
        _reject_extras(block, {"kind", "t0", "mass"}, bad, "initial")
        t0 = float(_want(block, "t0", (int, float), bad, "initial", 0.1))
        mass = float(_want(block, "mass", (int, float), bad, "initial", 1.0))
        if t0 <= 0:
            bad.append(f"initial.t0: must be positive, got {t0}")
        if mass <= 0:
            bad.append(f"initial.mass: must be positive, got {mass}")
        return kind, {"t0": t0, "mass": mass}, None, None

    if kind == "field":
        _reject_extras(block, {"kind", "path"}, bad, "initial")
        path = block.get("path")
        if not isinstance(path, str) or not Path(path).is_file():
            bad.append(f"initial.path: file not found: {path!r}")
            return kind, None, None, None
        fld = load_field(path)
        if grid is not None and (fld.grid.d, fld.grid.n, fld.grid.L) != (grid.d, grid.n, grid.L):
            bad.append(
                f"initial.path: field grid (d={fld.grid.d}, n={fld.grid.n}, L={fld.grid.L}) "
                f"does not match the config grid"
            )
        return kind, {"field": fld}, None, None

    # measure
    _reject_extras(block, {"kind", "atoms", "density", "eps_list"}, bad, "initial")
    atoms = block.get("atoms") or []
    if not isinstance(atoms, list):
        bad.append("initial.atoms: must be a list of [x, w] pairs")
        atoms = []
    pairs = []
    for i, entry in enumerate(atoms):
        if not (isinstance(entry, list) and len(entry) == 2):
            bad.append(f"initial.atoms[{i}]: must be an [x, w] pair")
            continue
        x, w = entry
        if isinstance(x, (int, float)) and not isinstance(x, bool):
            x = [float(x)]
        if not (isinstance(x, list) and all(isinstance(c, (int, float)) for c in x)):
            bad.append(f"initial.atoms[{i}]: location must be a number or list")
            continue
        if not isinstance(w, (int, float)) or isinstance(w, bool):
            bad.append(f"initial.atoms[{i}]: weight must be a number")
            continue
        pairs.append((tuple(float(c) for c in x), float(w)))
    density = None
    if "density" in block:
        path = block.get("density")
        if not isinstance(path, str) or not Path(path).is_file():
            bad.append(f"initial.density: file not found: {path!r}")
        else:
            density = load_field(path)
            if grid is not None and (density.grid.d, density.grid.n, density.grid.L) != (
                grid.d,
                grid.n,
                grid.L,
            ):
                bad.append("initial.density: field grid does not match the config grid")
                density = None
    ladder = None
    if "eps_list" in block:
        raw = block.get("eps_list")
        if not (
            isinstance(raw, list)
            and raw
            and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in raw)
        ):
            bad.append("initial.eps_list: must be a non-empty list of numbers")
        else:
            ladder = tuple(float(v) for v in raw)
            if any(x <= y for x, y in zip(ladder, ladder[1:])) or ladder[-1] <= 0:
                bad.append("initial.eps_list: must be strictly decreasing and positive")
                ladder = None
    if not pairs and density is None:
        bad.append("initial: a measure needs atoms and/or a density")
        return kind, None, None, ladder
    try:
        mu = MeasureSpec.from_atoms(pairs, density=density)
    except ValueError as e:
        bad.append(f"initial: {e}")
        return kind, None, None, ladder
    return kind, {}, mu, ladder


def _parse_resolvent(block, bad: list[str]) -> tuple[float | None, ResolventConfig]:
    lam = None
    kwargs = {}
    if block is not None:
        if not isinstance(block, dict):
            bad.append("resolvent: must be a mapping")
            return None, ResolventConfig()
        _reject_extras(
            block, {"lambda", "newton_tol", "newton_max", "picard_fallback"}, bad, "resolvent"
        )
        if "lambda" in block:
            lam = float(_want(block, "lambda", (int, float), bad, "resolvent", 0.0))
            if lam <= 0:
                bad.append(f"resolvent.lambda: must be positive, got {lam}")
                lam = None
        if "newton_tol" in block:
            kwargs["newton_tol"] = float(
                _want(block, "newton_tol", (int, float), bad, "resolvent", 1e-13)
            )
        if "newton_max" in block:
            kwargs["newton_max_iter"] = _want(block, "newton_max", int, bad, "resolvent", 60)
        if "picard_fallback" in block:
            kwargs["use_picard_fallback"] = bool(block.get("picard_fallback", True))
    try:
        return lam, ResolventConfig(**kwargs)
    except (ValueError, TypeError) as e:
        bad.append(f"resolvent: {e}")
        return lam, ResolventConfig()


def _parse_time(block, rcfg: ResolventConfig, bad: list[str]) -> EvolveConfig | None:
    if block is None:
        return None
    if not isinstance(block, dict):
        bad.append("time: must be a mapping with keys T, dt")
        return None
    _reject_extras(block, {"T", "dt", "save_times", "save_every"}, bad, "time")
    T = _want(block, "T", (int, float), bad, "time")
    dt = _want(block, "dt", (int, float), bad, "time")
    if T is None or dt is None:
        bad.append("time: requires T and dt")
        return None
    save_times = None
    if "save_times" in block:
        raw = block.get("save_times")
        if not (
            isinstance(raw, list)
            and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in raw)
        ):
            bad.append("time.save_times: must be a list of numbers")
        else:
            save_times = tuple(float(v) for v in raw)
    save_every = _want(block, "save_every", int, bad, "time")
    try:
        return EvolveConfig(
            T=float(T), dt=float(dt), save_times=save_times, save_every=save_every, resolvent=rcfg
        )
    except ValueError as e:
        bad.append(f"time: {e}")
        return None


def _parse_particles(block, bad: list[str]) -> tuple[SdeConfig | None, int | None, bool]:
    if block is None:
        return None, None, False
    if not isinstance(block, dict):
        bad.append("particles: must be a mapping")
        return None, None, False
    _reject_extras(
        block,
        {"n", "dt", "T", "compare_times", "density_floor", "printed_prefactor", "snapshots"},
        bad,
        "particles",
    )
    n = _want(block, "n", int, bad, "particles")
    if n is None or n < 1:
        bad.append(f"particles.n: must be a positive integer, got {block.get('n')!r}")
        n = None
    dt = _want(block, "dt", (int, float), bad, "particles")
    T = _want(block, "T", (int, float), bad, "particles")
    raw = block.get("compare_times", [])
    compare = ()
    if not (
        isinstance(raw, list)
        and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in raw)
    ):
        bad.append("particles.compare_times: must be a list of numbers")
    else:
        compare = tuple(float(v) for v in raw)
    kwargs = {}
    if "density_floor" in block:
        kwargs["density_floor"] = float(
            _want(block, "density_floor", (int, float), bad, "particles", 1e-12)
        )
    if "printed_prefactor" in block:
        kwargs["printed_prefactor"] = bool(block.get("printed_prefactor", False))
    snapshots = bool(block.get("snapshots", False))
    if dt is None or T is None:
        bad.append("particles: requires dt and T")
        return None, n, snapshots
    try:
        cfg = SdeConfig(dt=float(dt), T=float(T), compare_times=compare, **kwargs)
    except ValueError as e:
        bad.append(f"particles: {e}")
        return None, n, snapshots
    return cfg, n, snapshots


def parse_config(path: str | Path) -> RunConfig:
    """Load and validate one YAML config, collecting every violation.

    Raises ConfigError carrying the full violation list; on success all
    blocks present in the file are materialized as library objects.
    """
    raw = Path(path).read_bytes()
    sha = hashlib.sha256(raw).hexdigest()
    try:
        doc = yaml.safe_load(raw)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        loc = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError([f"not parseable YAML{loc}: {getattr(e, 'problem', None) or e}"])
    if not isinstance(doc, dict):
        raise ConfigError(["config root must be a mapping"])

    bad: list[str] = []
    _reject_extras(
        doc,
        {"spec_version", "seed", "grid", "profile", "regularization", "initial", "time",
         "resolvent", "particles"},
        bad,
        "config",
    )
    if doc.get("spec_version") != _SPEC_VERSION:
        bad.append(f"spec_version: must be {_SPEC_VERSION}, got {doc.get('spec_version')!r}")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        bad.append(f"seed: must be a nonnegative integer, got {seed!r}")
        seed = 0

    grid = _parse_grid(doc.get("grid"), bad)
    profile = _parse_profile(
        doc.get("profile"), doc.get("regularization"), grid.d if grid else 1, bad
    )
    initial_kind, initial, measure, ladder = _parse_initial(doc.get("initial"), grid, bad)
    lam, rcfg = _parse_resolvent(doc.get("resolvent"), bad)
    evolve_cfg = _parse_time(doc.get("time"), rcfg, bad)
    sde_cfg, n_particles, snapshots = _parse_particles(doc.get("particles"), bad)

    if initial_kind == "barenblatt" and profile is not None:
        if profile.base.power_law is None:
            bad.append("initial.kind barenblatt: needs a power-law nonlinearity")
    if bad:
        raise ConfigError(bad)
    return RunConfig(
        sha256=sha,
        spec_version=_SPEC_VERSION,
        seed=seed,
        grid=grid,
        profile=profile,
        initial_kind=initial_kind,
        initial=initial,
        measure=measure,
        eps_ladder=ladder,
        evolve_cfg=evolve_cfg,
        lam=lam,
        resolvent_cfg=rcfg,
        sde_cfg=sde_cfg,
        n_particles=n_particles,
        snapshots=snapshots,
    )


def _require(rc: RunConfig, names: list[str], command: str) -> None:
    missing = [n for n in names if getattr(rc, n) is None]
    if missing:
        raise ConfigError([f"{command}: config must provide {n}" for n in missing])


def _initial_field(rc: RunConfig) -> Field:
    grid = rc.grid
    if rc.initial_kind == "gaussian":
        pts = grid.centers()
        c = np.asarray(rc.initial["center"])
        w = rc.initial["width"]
        vals = np.exp(-0.5 * np.sum(((pts - c) / w) ** 2, axis=1)).reshape(grid.shape)
        total = float(np.sum(vals)) * grid.cell_volume
        return Field(grid, vals * (rc.initial["mass"] / total))
    if rc.initial_kind == "barenblatt":
        base = rc.profile.base
        sol = barenblatt(d=grid.d, m=base.m, mass=rc.initial["mass"], a=base.a)
        return sol.sample_field(grid, rc.initial["t0"])
    if rc.initial_kind == "field":
        return rc.initial["field"]
    raise ConfigError([f"initial.kind {rc.initial_kind!r} is not a field datum here"])


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_manifest(out: Path, command: str, sha: str, wall: float) -> None:
    _write_json(
        out / "manifest.json",
        {
            "command": command,
            "config_sha256": sha,
            "package_version": __version__,
            "spec_version": _SPEC_VERSION,
            "wall_time_s": wall,
        },
    )


def _write_run_summary(out: Path, rc: RunConfig, cfg: EvolveConfig) -> None:
    # deterministic provenance (unlike the manifest, which carries timing):
    # enough for `rate` to recover the theory exponent and the source hash
    _write_json(
        out / "run_summary.json",
        {
            "L": rc.grid.L,
            "T": cfg.T,
            "alpha": rc.profile.base.alpha,
            "config_sha256": rc.sha256,
            "d": rc.grid.d,
            "dt": cfg.dt,
            "n": rc.grid.n,
        },
    )


def _write_diagnostics_csv(out: Path, traj: Trajectory) -> None:
    cols = ["t", "mass", "l1", "l2", "linf", "newton_iters"]
    diag = traj.diagnostics
    with open(out / "diagnostics.csv", "w", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(len(diag["t"])):
            row = [_fmt(diag[c][i]) for c in cols[:-1]]
            row.append(str(int(diag["newton_iters"][i])))
            fh.write(",".join(row) + "\n")


def _write_trajectory(out: Path, traj: Trajectory) -> None:
    with open(out / "fields_index.csv", "w", newline="\n") as fh:
        fh.write("index,t,path\n")
        for i, t in enumerate(traj.times):
            name = f"u_{i:04d}.nfb"
            save_field(traj.fields[i], str(out / name))
            fh.write(f"{i},{_fmt(t)},{name}\n")
    _write_diagnostics_csv(out, traj)


def cmd_resolvent(args) -> int:
    rc = parse_config(args.config)
    _require(rc, ["grid", "profile", "initial_kind", "lam"], "resolvent")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    f = _initial_field(rc)
    t0 = time.perf_counter()
    u, rep = solve_resolvent(f, rc.profile, rc.lam, rc.resolvent_cfg)
    wall = time.perf_counter() - t0
    save_field(u, str(out / "solution.nfb"))
    _write_json(
        out / "report.json",
        {
            "converged": rep.converged,
            "eps": rc.profile.eps,
            "final_residual": rep.residual_l1,
            "lambda": rc.lam,
            "mass_in": rep.mass_in,
            "mass_out": rep.mass_out,
            "newton_iters": rep.newton_iters,
            "picard_iters": rep.picard_iters,
            "used_fallback": rep.used_fallback,
        },
    )
    _write_manifest(out, "resolvent", rc.sha256, wall)
    print(f"resolvent: wrote {out / 'solution.nfb'} (residual {rep.residual_l1:.3e})")
    return 0


def cmd_evolve(args) -> int:
    rc = parse_config(args.config)
    _require(rc, ["grid", "profile", "evolve_cfg"], "evolve")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    if args.measure:
        if rc.measure is None:
            raise ConfigError(["evolve --measure: initial.kind must be 'measure'"])
        ladder = rc.eps_ladder or (4.0 * rc.grid.h,)
        ev = evolve_measure(
            rc.measure, rc.profile, list(ladder), rc.evolve_cfg,
            grid=rc.grid, threads=args.threads,
        )
        traj = ev.trajectory
        with open(out / "stability.csv", "w", newline="\n") as fh:
            fh.write("eps_coarse,eps_fine,t,l1_distance\n")
            for row in ev.stability:
                for t, dist in zip(row["times"], row["l1_distances"]):
                    fh.write(
                        f"{_fmt(row['eps_coarse'])},{_fmt(row['eps_fine'])},"
                        f"{_fmt(t)},{_fmt(dist)}\n"
                    )
    else:
        if rc.initial_kind in (None, "measure"):
            raise ConfigError(["evolve: needs a field initial datum (or pass --measure)"])
        traj = evolve(_initial_field(rc), rc.profile, rc.evolve_cfg)
    wall = time.perf_counter() - t0
    _write_trajectory(out, traj)
    _write_run_summary(out, rc, rc.evolve_cfg)
    _write_manifest(out, "evolve", rc.sha256, wall)
    print(f"evolve: {len(traj.times)} fields -> {out} ({wall:.2f}s)")
    return 0


def cmd_oracle(args) -> int:
    try:
        d_s, n_s, L_s = args.grid.split(",")
        grid = GridSpec(d=int(d_s), n=int(n_s), L=float(L_s))
    except ValueError as e:
        raise ConfigError([f"--grid: expected 'd,n,L', got {args.grid!r} ({e})"])
    if args.t <= 0:
        raise ConfigError([f"--t: must be positive, got {args.t}"])
    if args.kind == "barenblatt":
        sol = barenblatt(d=grid.d, m=args.m, mass=args.mass, a=args.a)
    elif args.kind == "heat":
        sol = heat_kernel(d=grid.d)
    else:
        raise ConfigError([f"--kind: unknown oracle {args.kind!r}"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    fld = sol.sample_field(grid, args.t)
    wall = time.perf_counter() - t0
    save_field(fld, str(out / "oracle.nfb"))
    arg_text = json.dumps(
        {"kind": args.kind, "grid": args.grid, "t": args.t, "m": args.m,
         "a": args.a, "mass": args.mass},
        sort_keys=True,
    )
    _write_manifest(out, "oracle", hashlib.sha256(arg_text.encode()).hexdigest(), wall)
    print(f"oracle: wrote {out / 'oracle.nfb'} (mass {fld.mass():.12f})")
    return 0


def cmd_rate(args) -> int:
    traj_dir = Path(args.traj)
    summary_path = traj_dir / "run_summary.json"
    diag_path = traj_dir / "diagnostics.csv"
    missing = [str(p) for p in (summary_path, diag_path) if not p.is_file()]
    if missing:
        raise ConfigError([f"rate: missing {p}" for p in missing])
    try:
        lo_s, hi_s = args.window.split(",")
        window = (float(lo_s), float(hi_s))
    except ValueError as e:
        raise ConfigError([f"--window: expected 'tmin,tmax', got {args.window!r} ({e})"])
    summary = json.loads(summary_path.read_text())
    rows = np.genfromtxt(diag_path, delimiter=",", names=True)
    grid = GridSpec(d=int(summary["d"]), n=int(summary["n"]), L=float(summary["L"]))
    carrier = Trajectory(
        grid=grid,
        dt=float(summary["dt"]),
        times=np.asarray([]),
        fields=[],
        diagnostics={"t": np.atleast_1d(rows["t"]), "linf": np.atleast_1d(rows["linf"])},
    )
    fit = fit_decay_rate(carrier, window)
    theory, _ = smoothing_exponents(int(summary["d"]), float(summary["alpha"]))
    payload = {
        "gap": abs(fit.slope + theory),
        "r2": fit.r_squared,
        "slope": fit.slope,
        "source_config_sha256": summary["config_sha256"],
        "theory_rate": theory,
        "window": [window[0], window[1]],
    }
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.json:
        Path(args.json).write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_particles(args) -> int:
    rc = parse_config(args.config)
    _require(rc, ["grid", "profile", "measure", "evolve_cfg", "sde_cfg", "n_particles"],
             "particles")
    seed = rc.seed if args.seed is None else args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ladder = rc.eps_ladder or (4.0 * rc.grid.h,)
    t0 = time.perf_counter()
    u0 = mollify(rc.measure, ladder[-1], rc.grid)
    pde_cfg = EvolveConfig(
        T=rc.evolve_cfg.T, dt=rc.evolve_cfg.dt, save_every=1, resolvent=rc.resolvent_cfg
    )
    traj = evolve(u0, rc.profile, pde_cfg)
    history, report = simulate(
        rc.measure, traj, rc.profile, rc.sde_cfg, rc.n_particles, seed
    )
    wall = time.perf_counter() - t0
    with open(out / "marginals.csv", "w", newline="\n") as fh:
        fh.write("t,l1_hist_distance,w1_distance,n_particles\n")
        for row in report:
            w1 = "" if row.w1_distance is None else _fmt(row.w1_distance)
            fh.write(f"{_fmt(row.t)},{_fmt(row.l1_hist_distance)},{w1},{row.n_particles}\n")
    if rc.snapshots:
        for i, ens in enumerate(history):
            np.save(out / f"positions_{i:04d}.npy", ens.positions)
    _write_diagnostics_csv(out, traj)
    _write_run_summary(out, rc, pde_cfg)
    _write_manifest(out, "particles", rc.sha256, wall)
    print(f"particles: {rc.n_particles} paths, {len(report)} comparisons -> {out}")
    return 0


def cmd_verify(args) -> int:
    names = list(SUITE_NAMES) if args.suite in (None, "all") else [args.suite]
    unknown = [n for n in names if n not in SUITE_NAMES]
    if unknown:
        raise ConfigError(
            [f"--suite: unknown suite {n!r}; choose from {', '.join(SUITE_NAMES)} or 'all'"
             for n in unknown]
        )
    reports = []
    all_passed = True
    for name in names:
        results = run_suite(name, threads=args.threads)
        rep = report_as_dict(name, results)
        reports.append(rep)
        all_passed &= rep["passed"]
        for c in rep["checks"]:
            status = "PASS" if c["passed"] else "FAIL"
            print(f"[{status}] {name}/{c['name']}: value {c['value']:.6g} "
                  f"vs bound {c['bound']:.6g} (slack {c['slack']:.2g})")
        print(f"{name}: {'all passed' if rep['passed'] else 'FAILURES PRESENT'}")
    if args.json:
        payload = reports[0] if len(reports) == 1 else {
            "passed": all_passed, "suites": reports,
        }
        Path(args.json).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return 0 if all_passed else 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="nfpelab",
        description="Nonlinear Fokker-Planck laboratory: implicit resolvent steps, "
        "mild-solution evolution, closed-form oracles, decay-rate fits, a particle "
        "harness, and the verification suites.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_res = sub.add_parser("resolvent", help="solve one implicit step u + lam*A(u) = f")
    p_res.add_argument("--config", required=True)
    p_res.add_argument("--out", required=True)
    p_res.add_argument("--threads", type=int, default=1)
    p_res.set_defaults(fn=cmd_resolvent)

    p_evo = sub.add_parser("evolve", help="run the implicit time stepper")
    p_evo.add_argument("--config", required=True)
    p_evo.add_argument("--out", required=True)
    p_evo.add_argument("--measure", action="store_true",
                       help="treat the initial datum as a measure and run the "
                            "mollification ladder")
    p_evo.add_argument("--threads", type=int, default=1)
    p_evo.set_defaults(fn=cmd_evolve)

    p_ora = sub.add_parser("oracle", help="sample a closed-form reference solution")
    p_ora.add_argument("--kind", required=True, choices=["barenblatt", "heat"])
    p_ora.add_argument("--grid", required=True, help="d,n,L")
    p_ora.add_argument("--t", type=float, required=True)
    p_ora.add_argument("--m", type=float, default=2.0)
    p_ora.add_argument("--a", type=float, default=1.0)
    p_ora.add_argument("--mass", type=float, default=1.0)
    p_ora.add_argument("--out", required=True)
    p_ora.set_defaults(fn=cmd_oracle)

    p_rate = sub.add_parser("rate", help="fit the sup-norm decay exponent of a run")
    p_rate.add_argument("--traj", required=True, help="output directory of an evolve run")
    p_rate.add_argument("--window", required=True, help="tmin,tmax")
    p_rate.add_argument("--json", help="also write the JSON result to this path")
    p_rate.set_defaults(fn=cmd_rate)

    p_par = sub.add_parser("particles", help="simulate the interacting-particle system")
    p_par.add_argument("--config", required=True)
    p_par.add_argument("--out", required=True)
    p_par.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
    p_par.add_argument("--threads", type=int, default=1)
    p_par.set_defaults(fn=cmd_particles)

    p_ver = sub.add_parser("verify", help="run a verification suite")
    p_ver.add_argument("--suite", default="all")
    p_ver.add_argument("--json", help="write the report to this path")
    p_ver.add_argument("--threads", type=int, default=1)
    p_ver.set_defaults(fn=cmd_verify)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(e, file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"{args.command}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
