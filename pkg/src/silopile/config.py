"""Run configuration: plain-text sectioned key-value files.

One config describes one reproducible run: the domain polygon and wall
profile, the sources, the horizon and snapshot times, grid spacings and
the output directory.  Numbers are parsed by float() at full precision.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import ConvexDomain
from .sources import GAUSSIAN, POINT_LIST, UNIFORM_POLYGON, DensitySpec


class ConfigError(Exception):
    """Malformed run configuration; the message names section and key."""


@dataclass
class RunConfig:
    domain_vertices: np.ndarray
    wall_values: np.ndarray
    source_kind: str
    source_points: np.ndarray | None      # (k, 3) rows x y rate for point lists
    density: DensitySpec | None
    n_sources: int
    horizon: float
    snapshot_times: list[float]
    grid_h: float
    boundary_spacing: float
    output_dir: str
    seed: int = 0
    n_list: list[int] = field(default_factory=list)
    dual_node_cap: int = 2000

    def domain(self) -> ConvexDomain:
        return ConvexDomain(self.domain_vertices, self.wall_values)


def _rows(text: str, width: int, where: str) -> np.ndarray:
    rows = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split()
        if len(parts) != width:
            raise ConfigError(f"{where}: expected {width} numbers per entry, got {chunk!r}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    if not rows:
        raise ConfigError(f"{where}: empty list")
    return np.array(rows)


def _floats(text: str, where: str) -> list[float]:
    try:
        return [float(p) for p in text.split()]
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_config(path: str | Path) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")

    def get(section, key, fallback=None):
        if not cp.has_section(section):
            if fallback is None:
                raise ConfigError(f"missing section [{section}]")
            return fallback
        if not cp.has_option(section, key):
            if fallback is None:
                raise ConfigError(f"[{section}]: missing key {key!r}")
            return fallback
        return cp.get(section, key)

    vertices = _rows(get("domain", "vertices"), 2, "[domain] vertices")
    walls = np.array(_floats(get("domain", "wall_values"), "[domain] wall_values"))

    kind = get("sources", "kind").strip()
    source_points = None
    density = None
    n_sources = int(float(get("sources", "n", "0")))
    if kind == POINT_LIST:
        source_points = _rows(get("sources", "points"), 3, "[sources] points")
        if n_sources == 0:
            n_sources = len(source_points)
        density = DensitySpec(
            kind=POINT_LIST,
            total_mass=float(source_points[:, 2].sum()),
            points=source_points[:, :2].copy(),
            weights=source_points[:, 2].copy(),
        )
    elif kind == UNIFORM_POLYGON:
        poly = _rows(get("sources", "polygon"), 2, "[sources] polygon")
        density = DensitySpec(
            kind=UNIFORM_POLYGON,
            total_mass=float(get("sources", "total_mass")),
            polygon=poly,
        )
        if n_sources <= 0:
            raise ConfigError("[sources]: density kinds require n >= 1")
    elif kind == GAUSSIAN:
        center = _rows(get("sources", "center"), 2, "[sources] center")[0]
        density = DensitySpec(
            kind=GAUSSIAN,
            total_mass=float(get("sources", "total_mass")),
            center=center,
            sigma=float(get("sources", "sigma")),
            radius=float(get("sources", "radius")),
        )
        if n_sources <= 0:
            raise ConfigError("[sources]: density kinds require n >= 1")
    else:
        raise ConfigError(f"[sources]: unknown kind {kind!r}")

    horizon = float(get("run", "horizon"))
    snapshot_times = _floats(get("run", "snapshot_times", ""), "[run] snapshot_times")
    n_list = [int(x) for x in _floats(get("run", "n_list", ""), "[run] n_list")]

    grid_h = float(get("grid", "h"))
    boundary_spacing = float(get("grid", "boundary_spacing", str(grid_h)))
    if grid_h <= 0 or boundary_spacing <= 0:
        raise ConfigError("[grid]: spacings must be positive")
    if horizon <= 0:
        raise ConfigError("[run]: horizon must be positive")
    for t in snapshot_times:
        if not 0.0 <= t <= horizon:
            raise ConfigError(f"[run]: snapshot time {t} outside [0, horizon]")

    return RunConfig(
        domain_vertices=vertices,
        wall_values=walls,
        source_kind=kind,
        source_points=source_points,
        density=density,
        n_sources=n_sources,
        horizon=horizon,
        snapshot_times=snapshot_times,
        grid_h=grid_h,
        boundary_spacing=boundary_spacing,
        output_dir=get("output", "directory", "out"),
        seed=int(float(get("rng", "seed", "0"))),
        n_list=n_list,
        dual_node_cap=int(float(get("tolerances", "dual_node_cap", "2000"))),
    )


def echo_config(cfg: RunConfig) -> list[str]:
    """Canonical, fully resolved key=value listing (stable order)."""

    def fmt(x):
        return f"{float(x):.17g}"

    lines = [
        "domain.vertices = " + " ; ".join(f"{fmt(x)} {fmt(y)}" for x, y in cfg.domain_vertices),
        "domain.wall_values = " + " ".join(fmt(w) for w in cfg.wall_values),
        f"sources.kind = {cfg.source_kind}",
    ]
    if cfg.source_points is not None:
        lines.append(
            "sources.points = "
            + " ; ".join(f"{fmt(x)} {fmt(y)} {fmt(c)}" for x, y, c in cfg.source_points)
        )
    if cfg.density is not None and cfg.source_kind == UNIFORM_POLYGON:
        lines.append(
            "sources.polygon = "
            + " ; ".join(f"{fmt(x)} {fmt(y)}" for x, y in cfg.density.polygon)
        )
        lines.append(f"sources.total_mass = {fmt(cfg.density.total_mass)}")
    if cfg.density is not None and cfg.source_kind == GAUSSIAN:
        c = cfg.density.center
        lines.append(f"sources.center = {fmt(c[0])} {fmt(c[1])}")
        lines.append(f"sources.sigma = {fmt(cfg.density.sigma)}")
        lines.append(f"sources.radius = {fmt(cfg.density.radius)}")
        lines.append(f"sources.total_mass = {fmt(cfg.density.total_mass)}")
    lines += [
        f"sources.n = {cfg.n_sources}",
        f"run.horizon = {fmt(cfg.horizon)}",
        "run.snapshot_times = " + " ".join(fmt(t) for t in cfg.snapshot_times),
        "run.n_list = " + " ".join(str(n) for n in cfg.n_list),
        f"grid.h = {fmt(cfg.grid_h)}",
        f"grid.boundary_spacing = {fmt(cfg.boundary_spacing)}",
        f"output.directory = {cfg.output_dir}",
        f"rng.seed = {cfg.seed}",
        f"tolerances.dual_node_cap = {cfg.dual_node_cap}",
    ]
    return lines
