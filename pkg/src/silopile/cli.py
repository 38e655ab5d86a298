"""Command line orchestration: simulate, verify, equilibrium, converge.

Exit codes: 0 success (and certification PASS), 1 certification FAIL,
2 configuration or runtime error.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, echo_config, parse_config
from .cones import ConeState, GridControl, Trajectory, escape_thresholds, run
from .fields import (
    boundary_measure_to_lines,
    equilibrium_field,
    eval_height_many,
    field_to_csv,
    height_field,
    path_measure_to_csv,
    rolling_measure,
    spill_measure,
)
from .geometry import ConvexDomain
from .regions import build_grid, partition
from .sources import POINT_LIST, SourceSet, discretize, make_sources
from .verify import (
    build_problem,
    certify,
    coarsen_problem,
    snapshot_heights,
    solve_dual,
    solve_primal,
)

MANIFEST_HEADER = "silopile-manifest-v1"


def resolve_sources(cfg: RunConfig, domain: ConvexDomain) -> SourceSet:
    """Point lists with n >= k pass through unchanged; otherwise discretize."""
    if cfg.source_kind == POINT_LIST and cfg.n_sources >= len(cfg.source_points):
        return make_sources(domain, cfg.source_points[:, :2], cfg.source_points[:, 2])
    return discretize(cfg.density, cfg.n_sources, domain)


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


# ---------------------------------------------------------------------------
# manifest


def write_manifest(
    path: Path,
    cfg: RunConfig,
    sources: SourceSet,
    traj: Trajectory,
    snapshot_files: list[tuple[str, str]],
    certificates: list[str],
    timings: dict[str, float],
) -> None:
    lines = [MANIFEST_HEADER, "[config]"]
    lines += echo_config(cfg)
    lines.append("[sources]")
    for j in range(sources.k):
        x, y = sources.locations[j]
        lines.append(f"{j} = {_fmt(x)} {_fmt(y)} {_fmt(sources.rates[j])}")
    lines.append("[freeze_events]")
    for j, t in traj.freeze_events:
        lines.append(f"{j} = {_fmt(t)}")
    lines.append("[snapshots]")
    for i, (t, state) in enumerate(zip(traj.snapshot_times, traj.states)):
        u_file, mu_file = snapshot_files[i]
        radii = ",".join(_fmt(r) for r in state.radii)
        frozen = ",".join("1" if f else "0" for f in state.frozen)
        lines.append(f"{i} = t={_fmt(t)} u={u_file} mu={mu_file} radii={radii} frozen={frozen}")
    lines.append("[certificates]")
    lines += certificates
    lines.append("[timings]")
    for key in sorted(timings):
        lines.append(f"{key} = {timings[key]:.3f}")
    path.write_text("\n".join(lines) + "\n")


def parse_manifest(path: Path) -> dict[str, list[str]]:
    text = path.read_text().splitlines()
    if not text or text[0] != MANIFEST_HEADER:
        raise ConfigError(f"{path}: not a {MANIFEST_HEADER} file")
    sections: dict[str, list[str]] = {}
    current = None
    for line in text[1:]:
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            sections[current] = []
        elif current is not None and line.strip():
            sections[current].append(line)
    return sections


def _config_from_echo(lines: list[str]) -> dict[str, str]:
    out = {}
    for line in lines:
        key, _, value = line.partition(" = ")
        out[key] = value
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: RunConfig, quiet: bool) -> int:
    t_start = time.perf_counter()
    domain = cfg.domain()
    sources = resolve_sources(cfg, domain)
    ctrl = GridControl(h=cfg.grid_h)
    traj = run(sources, domain, cfg.horizon, cfg.snapshot_times, ctrl)
    grid = build_grid(domain, cfg.grid_h)

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    snapshot_files = []
    nu_blocks = []
    for i, state in enumerate(traj.states):
        u_name = f"snap{i:03d}_u.csv"
        mu_name = f"snap{i:03d}_mu.csv"
        u = height_field(state, sources, grid)
        part = partition(grid, sources, state.radii)
        mu = rolling_measure(state, sources, part, domain, grid)
        nu = spill_measure(state, sources, domain)
        (out / u_name).write_text(field_to_csv(u))
        (out / mu_name).write_text(path_measure_to_csv(mu))
        nu_blocks.append(f"# snapshot {i} t={_fmt(traj.snapshot_times[i])}\n" + boundary_measure_to_lines(nu))
        snapshot_files.append((u_name, mu_name))
    (out / "nu.csv").write_text("".join(nu_blocks))

    timings = {"simulate_seconds": time.perf_counter() - t_start}
    write_manifest(out / "manifest.txt", cfg, sources, traj, snapshot_files, [], timings)
    if not quiet:
        print(f"simulate: {len(traj.states)} snapshots, {len(traj.freeze_events)} freezes -> {out}")
    return 0


def cmd_verify(manifest_path: Path, quiet: bool) -> int:
    t_start = time.perf_counter()
    sections = parse_manifest(manifest_path)
    echo = _config_from_echo(sections.get("config", []))
    out = manifest_path.parent

    vertices = np.array([[float(v) for v in pair.split()] for pair in echo["domain.vertices"].split(" ; ")])
    walls = np.array([float(w) for w in echo["domain.wall_values"].split()])
    domain = ConvexDomain(vertices, walls)
    src_rows = [line.partition(" = ")[2].split() for line in sections.get("sources", [])]
    locations = np.array([[float(r[0]), float(r[1])] for r in src_rows])
    rates = np.array([float(r[2]) for r in src_rows])
    sources = make_sources(domain, locations, rates)
    h = float(echo["grid.h"])
    spacing = float(echo["grid.boundary_spacing"])
    node_cap = int(echo.get("tolerances.dual_node_cap", "2000"))
    grid = build_grid(domain, h)
    thresholds = escape_thresholds(sources, domain)

    for _, u_file in _snapshot_fields(sections, "u"):
        if not (out / u_file).exists():
            raise ConfigError(f"missing snapshot file {u_file}")

    cert_lines = []
    all_pass = True
    for line in sections.get("snapshots", []):
        idx, _, rest = line.partition(" = ")
        fields = dict(part.split("=", 1) for part in rest.split())
        t = float(fields["t"])
        radii = np.array([float(r) for r in fields["radii"].split(",")])
        frozen = np.array([c == "1" for c in fields["frozen"].split(",")])
        state = ConeState(t, radii, frozen, thresholds)

        problem = build_problem(state, sources, domain, grid, spacing)
        sol = solve_primal(problem)
        report = certify(*snapshot_heights(state, sources, problem), sol, problem)
        coarse = coarsen_problem(problem, node_cap)
        dual = solve_dual(problem, node_cap)
        primal_coarse = solve_primal(coarse)
        lp_gap = abs(dual.value - primal_coarse.primal_value)
        status = "PASS" if report.passed else "FAIL"
        all_pass &= report.passed
        cert_lines.append(
            f"{idx} = t={_fmt(t)} primal={_fmt(sol.primal_value)} dual={_fmt(dual.value)} "
            f"lp_gap={_fmt(lp_gap)} pairing_gap={_fmt(report.duality_gap)} "
            f"ray_residual={_fmt(report.ray_residual)} wall_residual={_fmt(report.wall_residual)} "
            f"tolerance={_fmt(report.tolerance)} {status}"
        )
        if not quiet:
            print(f"snapshot {idx}: {status} (gap {report.duality_gap:.3e}, tol {report.tolerance:.3e})")

    summary = "PASS" if all_pass else "FAIL"
    report_text = "\n".join(
        ["silopile-certificates-v1", f"result = {summary}"] + cert_lines
    ) + "\n"
    (out / "certificates.txt").write_text(report_text)

    # refresh the manifest's certificate section, keeping timings quarantined
    timings = {"verify_seconds": time.perf_counter() - t_start}
    _splice_manifest(manifest_path, cert_lines, timings)
    if not quiet:
        print(f"verify: {summary}")
    return 0 if all_pass else 1


def _snapshot_fields(sections, key):
    for line in sections.get("snapshots", []):
        idx, _, rest = line.partition(" = ")
        fields = dict(part.split("=", 1) for part in rest.split())
        yield idx, fields[key]


def _splice_manifest(path: Path, cert_lines: list[str], extra_timings: dict[str, float]) -> None:
    lines = path.read_text().splitlines()
    out = []
    section = None
    timing_lines = []
    for line in lines:
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1]
            if section == "certificates":
                out.append(line)
                out.extend(cert_lines)
                continue
            if section == "timings":
                continue
        if section == "certificates" and not line.startswith("["):
            continue
        if section == "timings":
            if line.strip():
                timing_lines.append(line)
            continue
        out.append(line)
    out.append("[timings]")
    out.extend(timing_lines)
    for key in sorted(extra_timings):
        out.append(f"{key} = {extra_timings[key]:.3f}")
    path.write_text("\n".join(out) + "\n")


def cmd_equilibrium(cfg: RunConfig, quiet: bool) -> int:
    domain = cfg.domain()
    sources = resolve_sources(cfg, domain)
    thresholds = escape_thresholds(sources, domain)
    bound = float(np.sum(domain.area * thresholds / sources.rates))
    limit = 1.1 * bound
    horizon = min(cfg.horizon, limit)

    traj = run(sources, domain, horizon, [], GridControl(h=cfg.grid_h))
    final = traj.final_state
    if not final.frozen.all():
        if horizon < limit:
            raise RuntimeError(
                f"equilibrium unreachable within horizon {cfg.horizon:.6g}; "
                f"the rate bound allows freeze times up to {bound:.6g}"
            )
        raise RuntimeError(
            f"integration passed {limit:.6g} (110% of the rate bound {bound:.6g}) "
            "without full freeze"
        )

    grid = build_grid(domain, cfg.grid_h)
    sim = height_field(final, sources, grid)
    closed = equilibrium_field(sources, domain, grid)
    sup_diff = float(np.abs(sim.values - closed.values).max())

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "final_u.csv").write_text(field_to_csv(sim))
    (out / "equilibrium_u.csv").write_text(field_to_csv(closed))
    freeze = dict((j, t) for j, t in traj.freeze_events)
    lines = ["silopile-equilibrium-v1", f"sup_diff = {_fmt(sup_diff)}", f"rate_bound = {_fmt(bound)}"]
    for j in range(sources.k):
        t_j = freeze.get(j, float("nan"))
        lines.append(f"freeze {j} = t={_fmt(t_j)} threshold={_fmt(thresholds[j])}")
    (out / "equilibrium.txt").write_text("\n".join(lines) + "\n")
    if not quiet:
        print(f"equilibrium: sup diff {sup_diff:.3e} (grid h {cfg.grid_h:.6g}) -> {out}")
    return 0


def cmd_converge(cfg: RunConfig, quiet: bool) -> int:
    if len(cfg.n_list) == 0:
        raise ConfigError("[run]: converge requires n_list")
    if any(b <= a for a, b in zip(cfg.n_list, cfg.n_list[1:])):
        raise ConfigError("[run]: n_list must be strictly increasing")
    domain = cfg.domain()
    grid = build_grid(domain, cfg.grid_h)
    centers = grid.inside_centers()

    per_n = {}
    for n in cfg.n_list:
        sources = discretize(cfg.density, n, domain)
        traj = run(sources, domain, cfg.horizon, cfg.snapshot_times, GridControl(h=cfg.grid_h))
        per_n[n] = [eval_height_many(state, sources, centers) for state in traj.states]

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = ["time,n_from,n_to,sup_diff"]
    for si, t in enumerate(cfg.snapshot_times):
        for a, b in zip(cfg.n_list, cfg.n_list[1:]):
            sup = float(np.abs(per_n[b][si] - per_n[a][si]).max())
            rows.append(f"{_fmt(t)},{a},{b},{_fmt(sup)}")
            if not quiet:
                print(f"t={t:g}: sup|u_{b} - u_{a}| = {sup:.6g}")
    (out / "converge.csv").write_text("\n".join(rows) + "\n")
    return 0


# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="silopile", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "equilibrium", "converge"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--grid-h", type=float, default=None)
        p.add_argument("--quiet", action="store_true")
    pv = sub.add_parser("verify")
    pv.add_argument("--manifest", default=None)
    pv.add_argument("--config", default=None, help="config whose output directory holds the manifest")
    pv.add_argument("--out", default=None)
    pv.add_argument("--seed", type=int, default=None)
    pv.add_argument("--grid-h", type=float, default=None)
    pv.add_argument("--quiet", action="store_true")

    args = parser.parse_args(argv)
    try:
        if args.command == "verify":
            if args.manifest:
                manifest = Path(args.manifest)
            elif args.config:
                cfg = _load(args)
                manifest = Path(cfg.output_dir) / "manifest.txt"
            else:
                raise ConfigError("verify needs --manifest or --config")
            return cmd_verify(manifest, args.quiet)
        cfg = _load(args)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.quiet)
        if args.command == "equilibrium":
            return cmd_equilibrium(cfg, args.quiet)
        return cmd_converge(cfg, args.quiet)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _load(args) -> RunConfig:
    cfg = parse_config(args.config)
    if args.out is not None:
        cfg.output_dir = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "grid_h", None) is not None:
        cfg.grid_h = args.grid_h
    return cfg


if __name__ == "__main__":
    sys.exit(main())
