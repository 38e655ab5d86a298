"""Standing layer, growth rate, spill measure and rolling-layer measure.

The pile height is the upper envelope of cones of slope one; its time
derivative is piecewise constant on the feeding regions; spilled mass sits
in boundary atoms at the cheapest wall crossings; the rolling layer is the
line measure carried by the transport rays from deposition points back to
their sources, discretized onto the grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cones import ConeState
from .geometry import BoundaryPoint, ConvexDomain
from .regions import NONE_LABEL, Grid, Partition
from .sources import SourceSet


@dataclass(frozen=True)
class GridField:
    """Scalar samples at the inside cells of a grid (zero elsewhere)."""

    grid: Grid
    values: np.ndarray  # (ny, nx)


@dataclass(frozen=True)
class BoundaryMeasure:
    """Non-negative atoms on the boundary."""

    atoms: list[tuple[BoundaryPoint, float]]

    @property
    def total_mass(self) -> float:
        return float(sum(m for _, m in self.atoms))


@dataclass(frozen=True)
class PathMeasure:
    """Rolling-layer mass binned to grid cells.

    ``direction_mass`` carries the mass-weighted unit ray direction (toward
    the source) of every deposit, which the weak-form residual checks need.
    """

    grid: Grid
    density: np.ndarray        # (ny, nx), cell mass / h^2
    direction_mass: np.ndarray  # (ny, nx, 2)

    @property
    def total_mass(self) -> float:
        return float(self.density.sum() * self.grid.cell_area)


def eval_height(state: ConeState, sources: SourceSet, x) -> float:
    """Pile height max_j (r_j - |x - y_j|)+ at a single point, exact."""
    x = np.asarray(x, dtype=float)
    d = np.linalg.norm(sources.locations - x, axis=1)
    return float(max(np.max(state.radii - d), 0.0))


def eval_height_many(state: ConeState, sources: SourceSet, points) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    d = np.linalg.norm(points[:, None, :] - sources.locations[None, :, :], axis=2)
    return np.maximum((state.radii[None, :] - d).max(axis=1), 0.0)


def height_field(state: ConeState, sources: SourceSet, grid: Grid) -> GridField:
    values = np.zeros((grid.ny, grid.nx))
    centers = grid.inside_centers()
    values[grid.inside_mask] = eval_height_many(state, sources, centers)
    return GridField(grid=grid, values=values)


def equilibrium_height(sources: SourceSet, domain: ConvexDomain, x) -> float:
    """Stationary profile after every source froze: capped cones at escape cost."""
    x = np.asarray(x, dtype=float)
    thresholds = np.array([domain.escape_cost(y)[0] for y in sources.locations])
    d = np.linalg.norm(sources.locations - x, axis=1)
    return float(max(np.max(thresholds - d), 0.0))


def equilibrium_field(sources: SourceSet, domain: ConvexDomain, grid: Grid) -> GridField:
    thresholds = np.array([domain.escape_cost(y)[0] for y in sources.locations])
    state = ConeState(0.0, thresholds.copy(), np.ones(sources.k, dtype=bool), thresholds)
    return height_field(state, sources, grid)


def eval_growth_rate(state: ConeState, sources: SourceSet, areas, x) -> float:
    """Time derivative of the height: c_j/|A_j| on active regions, else zero."""
    x = np.asarray(x, dtype=float)
    areas = np.asarray(areas, dtype=float)
    d = np.linalg.norm(sources.locations - x, axis=1)
    vals = state.radii - d
    j = int(np.argmax(vals))
    if vals[j] <= 0.0 or state.frozen[j]:
        return 0.0
    return float(sources.rates[j] / areas[j])


def growth_rate_field(state: ConeState, sources: SourceSet, part: Partition) -> GridField:
    rates = np.zeros(sources.k + 1)
    active = ~state.frozen
    with np.errstate(divide="ignore", invalid="ignore"):
        per_source = np.where(active & (part.areas > 0.0), sources.rates / part.areas, 0.0)
    rates[: sources.k] = per_source
    values = np.where(part.labels == NONE_LABEL, 0.0, rates[part.labels])
    return GridField(grid=part.grid, values=values)


def spill_atom(domain: ConvexDomain, y) -> BoundaryPoint:
    """Canonical spill location: first minimizer of the escape cost."""
    _, minimizers = domain.escape_cost(y)
    return minimizers[0]


def spill_measure(state: ConeState, sources: SourceSet, domain: ConvexDomain) -> BoundaryMeasure:
    """One atom of mass c_j at the canonical wall crossing of each frozen source."""
    masses: dict[tuple[int, float], float] = {}
    points: dict[tuple[int, float], BoundaryPoint] = {}
    for j in np.nonzero(state.frozen)[0]:
        bp = spill_atom(domain, sources.locations[j])
        masses[bp.key] = masses.get(bp.key, 0.0) + float(sources.rates[j])
        points[bp.key] = bp
    return BoundaryMeasure(atoms=[(points[k], masses[k]) for k in sorted(masses)])


def rolling_measure(
    state: ConeState,
    sources: SourceSet,
    part: Partition,
    domain: ConvexDomain,
    grid: Grid,
) -> PathMeasure:
    """Discretized rolling layer.

    Every labeled cell (and every spill atom) is treated as a point mass
    shipping to its source; mass w * |x - y| is spread along the segment
    [x, y] in ceil(|x - y| / h) equal sub-deposits binned to grid cells.
    """
    mass = np.zeros((grid.ny, grid.nx))
    dir_mass = np.zeros((grid.ny, grid.nx, 2))
    centers = grid.cell_centers()

    for j in range(sources.k):
        if state.frozen[j] or part.areas[j] <= 0.0:
            continue
        sel = part.labels == j
        if not np.any(sel):
            continue
        starts = centers[sel]
        weights = np.full(len(starts), sources.rates[j] / part.areas[j] * grid.cell_area)
        _deposit_segments(grid, starts, sources.locations[j], weights, mass, dir_mass)

    for j in np.nonzero(state.frozen)[0]:
        bp = spill_atom(domain, sources.locations[j])
        _deposit_segments(
            grid,
            bp.position[None, :],
            sources.locations[j],
            np.array([float(sources.rates[j])]),
            mass,
            dir_mass,
        )

    density = mass / grid.cell_area
    return PathMeasure(grid=grid, density=density, direction_mass=dir_mass)


def _deposit_segments(grid, starts, target, weights, mass, dir_mass):
    diff = target[None, :] - starts
    lengths = np.linalg.norm(diff, axis=1)
    keep = lengths > 1e-15
    if not np.any(keep):
        return
    starts, diff, lengths, weights = starts[keep], diff[keep], lengths[keep], weights[keep]
    theta = diff / lengths[:, None]
    nsub = np.maximum(np.ceil(lengths / grid.h).astype(int), 1)
    total = int(nsub.sum())
    owner = np.repeat(np.arange(len(starts)), nsub)
    first = np.concatenate([[0], np.cumsum(nsub)[:-1]])
    k = np.arange(total) - np.repeat(first, nsub)
    s = (k + 0.5) / nsub[owner]
    pos = starts[owner] + s[:, None] * diff[owner]
    submass = (weights * lengths / nsub)[owner]
    rows, cols = grid.cell_index(pos)
    np.add.at(mass, (rows, cols), submass)
    np.add.at(dir_mass, (rows, cols, 0), submass * theta[owner, 0])
    np.add.at(dir_mass, (rows, cols, 1), submass * theta[owner, 1])


def field_to_csv(field: GridField) -> str:
    """Row-major table of the inside cells, 17 significant digits."""
    centers = field.grid.inside_centers()
    values = field.values[field.grid.inside_mask]
    lines = ["x,y,value"]
    for (x, y), v in zip(centers, values):
        lines.append(f"{x:.17g},{y:.17g},{v:.17g}")
    return "\n".join(lines) + "\n"


def field_from_csv(grid: Grid, text: str) -> GridField:
    rows = text.strip().splitlines()
    if rows[0] != "x,y,value":
        raise ValueError("missing x,y,value header")
    parsed = [line.split(",") for line in rows[1:]]
    vals = np.array([float(p[2]) for p in parsed])
    n_inside = int(grid.inside_mask.sum())
    if len(vals) != n_inside:
        raise ValueError(f"expected {n_inside} rows, found {len(vals)}")
    values = np.zeros((grid.ny, grid.nx))
    values[grid.inside_mask] = vals
    return GridField(grid=grid, values=values)


def path_measure_to_csv(mu: PathMeasure) -> str:
    return field_to_csv(GridField(grid=mu.grid, values=mu.density))


def boundary_measure_to_lines(nu: BoundaryMeasure) -> str:
    lines = ["edge_index,edge_parameter,mass"]
    for bp, m in nu.atoms:
        lines.append(f"{bp.edge_index},{bp.edge_parameter:.17g},{m:.17g}")
    return "\n".join(lines) + "\n"


def boundary_measure_from_lines(domain: ConvexDomain, text: str) -> BoundaryMeasure:
    rows = text.strip().splitlines()
    if rows[0] != "edge_index,edge_parameter,mass":
        raise ValueError("missing edge_index,edge_parameter,mass header")
    atoms = []
    for line in rows[1:]:
        e, s, m = line.split(",")
        atoms.append((domain.boundary_point(int(e), float(s)), float(m)))
    return BoundaryMeasure(atoms=atoms)
