"""Discrete boundary-taxed transport: primal plan, dual potential, certificates.

A snapshot is certified by solving the finite transportation problem that
ships the source rates onto the deposited growth (grid cells weighted by
the growth rate) and, for frozen sources, over the wall (boundary nodes
taxed by the wall height).  The primal is solved exactly by a network
simplex on the bipartite graph; the dual potential is found independently
by a linear program over node values with all-pairs Lipschitz constraints,
keeping the duality check non-circular.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .cones import ConeState
from .fields import eval_height_many, growth_rate_field
from .geometry import BoundaryPoint, ConvexDomain
from .regions import Grid, partition
from .sources import SourceSet
from .tolerances import LP_TOL

# Snapshot imbalance beyond this fraction of the supply is a hard error;
# anything smaller is absorbed by proportional demand rescaling.
MAX_IMBALANCE = 0.01

# Dual LP size cap: demand nodes are coarsened 4:1 until the node count
# (supplies + demands + boundary) drops below this.
DUAL_NODE_CAP = 2000


@dataclass(frozen=True)
class DiscreteProblem:
    """Supplies (sources), fixed interior demands, taxed boundary sinks."""

    supply_locations: np.ndarray   # (m, 2)
    supply_masses: np.ndarray      # (m,)
    demand_locations: np.ndarray   # (nd, 2)
    demand_masses: np.ndarray      # (nd,)
    boundary_points: tuple[BoundaryPoint, ...]
    boundary_walls: np.ndarray     # (nb,)
    spill_total: float
    h: float

    @property
    def boundary_positions(self) -> np.ndarray:
        if not self.boundary_points:
            return np.empty((0, 2))
        return np.array([b.position for b in self.boundary_points])

    @property
    def n_demand(self) -> int:
        return len(self.demand_masses)

    @property
    def n_boundary(self) -> int:
        return len(self.boundary_walls)


@dataclass(frozen=True)
class TransportSolution:
    plan_supply: np.ndarray    # (p,) supply index per plan entry
    plan_sink: np.ndarray      # (p,) sink index: demands first, then boundary
    plan_mass: np.ndarray      # (p,)
    spill: np.ndarray          # (nb,) mass over the wall per boundary node
    potential_supply: np.ndarray
    potential_sink: np.ndarray
    primal_value: float
    dual_value: float
    min_reduced_cost: float
    marginal_error: float


@dataclass(frozen=True)
class DualSolution:
    value: float
    v_supply: np.ndarray
    v_demand: np.ndarray
    v_boundary: np.ndarray
    problem: DiscreteProblem   # the (possibly coarsened) problem actually solved


@dataclass(frozen=True)
class CertificateReport:
    ray_residual: float        # max | |x-y| - (u(y) - u(x)) | over plan support
    wall_residual: float       # max | u(b) - g(b) | over spill-carrying nodes
    duality_gap: float         # | <rho, u> - primal_value |
    tolerance: float
    passed: bool


def build_problem(
    state: ConeState,
    sources: SourceSet,
    domain: ConvexDomain,
    grid: Grid,
    boundary_spacing: float,
) -> DiscreteProblem:
    """Assemble the snapshot's transportation problem.

    Interior demand is the discretized growth rate (cell mass = rate x h^2);
    the expected spill is the total rate of frozen sources.  A small
    quadrature imbalance is removed by rescaling the demand masses.
    """
    part = partition(grid, sources, state.radii)
    rate_field = growth_rate_field(state, sources, part)
    masses = rate_field.values[grid.inside_mask] * grid.cell_area
    centers = grid.inside_centers()
    keep = masses > 0.0
    demand_loc = centers[keep]
    demand_mass = masses[keep]

    supply_total = sources.total_rate
    expected_demand = float(sources.rates[~state.frozen].sum())
    got = float(demand_mass.sum())
    if abs(got - expected_demand) > MAX_IMBALANCE * supply_total:
        raise ValueError(
            f"snapshot mass imbalance {got - expected_demand:+.3e} exceeds "
            f"{MAX_IMBALANCE:.0%} of the supply {supply_total:.6g}"
        )
    if got > 0.0:
        demand_mass = demand_mass * (expected_demand / got)

    nodes = domain.boundary_nodes(boundary_spacing)
    walls = np.array([domain.wall_height(b) for b in nodes])
    spill_total = float(sources.rates[state.frozen].sum())
    return DiscreteProblem(
        supply_locations=sources.locations.copy(),
        supply_masses=sources.rates.copy(),
        demand_locations=demand_loc,
        demand_masses=demand_mass,
        boundary_points=tuple(nodes),
        boundary_walls=walls,
        spill_total=spill_total,
        h=grid.h,
    )


def transport_problem(supply_locations, supply_masses, demand_locations, demand_masses, h=0.0) -> DiscreteProblem:
    """Balanced two-marginal problem with the boundary disabled."""
    supply_masses = np.asarray(supply_masses, dtype=float)
    demand_masses = np.asarray(demand_masses, dtype=float)
    if abs(supply_masses.sum() - demand_masses.sum()) > LP_TOL * max(1.0, supply_masses.sum()):
        raise ValueError("marginals must balance when the boundary is disabled")
    return DiscreteProblem(
        supply_locations=np.atleast_2d(np.asarray(supply_locations, dtype=float)),
        supply_masses=supply_masses,
        demand_locations=np.atleast_2d(np.asarray(demand_locations, dtype=float)),
        demand_masses=demand_masses,
        boundary_points=(),
        boundary_walls=np.empty(0),
        spill_total=0.0,
        h=h,
    )


def _cost_matrix(p: DiscreteProblem) -> np.ndarray:
    """(m, nd + nb) shipping costs; boundary columns include the wall tax."""
    cols = []
    if p.n_demand:
        cols.append(
            np.linalg.norm(p.supply_locations[:, None, :] - p.demand_locations[None, :, :], axis=2)
        )
    if p.n_boundary:
        dist = np.linalg.norm(p.supply_locations[:, None, :] - p.boundary_positions[None, :, :], axis=2)
        cols.append(dist + p.boundary_walls[None, :])
    return np.hstack(cols) if cols else np.empty((len(p.supply_masses), 0))


def solve_primal(p: DiscreteProblem) -> TransportSolution:
    """Exact optimum of the transportation LP by network simplex.

    Boundary sinks have unlimited capacity; they are encoded by giving each
    boundary column a demand equal to the total spill and adding one dummy
    supply (at zero cost to boundary columns, prohibitive cost elsewhere)
    that absorbs the unused boundary capacity.
    """
    m = len(p.supply_masses)
    spill = p.spill_total
    use_boundary = p.n_boundary > 0 and spill > LP_TOL * max(1.0, float(p.supply_masses.sum()))

    cost = _cost_matrix(p)
    if not use_boundary:
        if p.n_demand == 0:
            raise ValueError("problem has neither interior demand nor spill")
        if spill > LP_TOL * max(1.0, float(p.supply_masses.sum())):
            raise ValueError("spill present but the problem has no boundary nodes")
        cost = cost[:, : p.n_demand]
        supplies = p.supply_masses.astype(float)
        demands = p.demand_masses.astype(float)
        flows, duals_u, duals_v, min_rc = _network_simplex(supplies, demands, cost)
        n_real_rows, n_real_cols = m, p.n_demand
    else:
        big = 10.0 * (1.0 + float(cost.max()))
        nb = p.n_boundary
        supplies = np.concatenate([p.supply_masses, [(nb - 1) * spill]])
        demands = np.concatenate([p.demand_masses, np.full(nb, spill)])
        dummy_row = np.concatenate([np.full(p.n_demand, big), np.zeros(nb)])
        cost = np.vstack([cost, dummy_row])
        flows, duals_u, duals_v, min_rc = _network_simplex(supplies, demands, cost)
        if np.any(flows[-1, : p.n_demand] > LP_TOL):
            raise RuntimeError("dummy supply leaked into interior demand")
        n_real_rows, n_real_cols = m, p.n_demand + p.n_boundary

    real_flows = flows[:n_real_rows, :n_real_cols]
    sup_idx, sink_idx = np.nonzero(real_flows > LP_TOL)
    plan_mass = real_flows[sup_idx, sink_idx]
    primal_value = float((real_flows * cost[:n_real_rows, :n_real_cols]).sum())
    dual_value = float(duals_u @ supplies + duals_v @ demands) if use_boundary else float(
        duals_u @ p.supply_masses + duals_v @ p.demand_masses
    )
    spill_mass = np.zeros(p.n_boundary)
    if use_boundary:
        spill_mass = real_flows[:, p.n_demand :].sum(axis=0)

    row_err = np.abs(real_flows.sum(axis=1) - p.supply_masses).max() if m else 0.0
    col_got = real_flows[:, : p.n_demand].sum(axis=0)
    col_err = np.abs(col_got - p.demand_masses).max() if p.n_demand else 0.0

    return TransportSolution(
        plan_supply=sup_idx,
        plan_sink=sink_idx,
        plan_mass=plan_mass,
        spill=spill_mass,
        potential_supply=duals_u[:m],
        potential_sink=duals_v[:n_real_cols],
        primal_value=primal_value,
        dual_value=dual_value,
        min_reduced_cost=float(min_rc),
        marginal_error=float(max(row_err, col_err)),
    )


def coarsen_problem(p: DiscreteProblem, node_cap: int = DUAL_NODE_CAP) -> DiscreteProblem:
    """Aggregate demand cells 4:1 (2x2 blocks) until the node count fits."""
    out = p
    scale = 2.0
    while len(out.supply_masses) + out.n_demand + out.n_boundary > node_cap:
        if out.n_demand <= 1:
            break
        block = scale * max(out.h, 1e-12)
        keys = np.floor(out.demand_locations / block).astype(np.int64)
        order = np.lexsort((keys[:, 0], keys[:, 1]))
        keys_sorted = keys[order]
        boundaries = np.nonzero(np.any(np.diff(keys_sorted, axis=0) != 0, axis=1))[0] + 1
        groups = np.split(order, boundaries)
        locs = np.array(
            [
                (out.demand_locations[g] * out.demand_masses[g, None]).sum(axis=0)
                / out.demand_masses[g].sum()
                for g in groups
            ]
        )
        masses = np.array([out.demand_masses[g].sum() for g in groups])
        out = replace(out, demand_locations=locs, demand_masses=masses)
        scale *= 2.0
    return out


def solve_dual(p: DiscreteProblem, node_cap: int = DUAL_NODE_CAP) -> DualSolution:
    """Maximize <rho, v> over 1-Lipschitz node values, walls boxing the boundary.

    Solved as a plain LP over the node values with all-pairs Lipschitz
    constraints, independently of the primal path.  Demand nodes are
    coarsened to respect the node cap.
    """
    pc = coarsen_problem(p, node_cap)
    m, nd, nb = len(pc.supply_masses), pc.n_demand, pc.n_boundary
    points = np.vstack([pc.supply_locations, pc.demand_locations.reshape(nd, 2), pc.boundary_positions])
    n = len(points)
    rho = np.concatenate([pc.supply_masses, -pc.demand_masses, np.zeros(nb)])

    iu, ju = np.triu_indices(n, k=1)
    dist = np.linalg.norm(points[iu] - points[ju], axis=1)
    npairs = len(iu)
    rows = np.repeat(np.arange(2 * npairs), 2)
    cols = np.empty(4 * npairs, dtype=np.int64)
    vals = np.empty(4 * npairs)
    cols[0::4], vals[0::4] = iu, 1.0
    cols[1::4], vals[1::4] = ju, -1.0
    cols[2::4], vals[2::4] = iu, -1.0
    cols[3::4], vals[3::4] = ju, 1.0
    a_ub = sp.csr_matrix((vals, (rows, cols)), shape=(2 * npairs, n))
    b_ub = np.repeat(dist, 2)
    bounds = [(None, None)] * (m + nd) + [(0.0, float(g)) for g in pc.boundary_walls]

    res = linprog(-rho, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"dual LP failed: {res.message}")
    v = res.x
    return DualSolution(
        value=float(-res.fun),
        v_supply=v[:m],
        v_demand=v[m : m + nd],
        v_boundary=v[m + nd :],
        problem=pc,
    )


def certify(
    u_supply: np.ndarray,
    u_demand: np.ndarray,
    u_boundary: np.ndarray,
    sol: TransportSolution,
    p: DiscreteProblem,
) -> CertificateReport:
    """Complementary-slackness and duality-gap check for a height candidate.

    On the plan's support the height must rise by exactly the distance
    toward the source; wall contact must hold where spill lands; and the
    pairing of the height with f - growth must reproduce the primal value.
    """
    u_sink = np.concatenate([u_demand, u_boundary])
    sink_pos = (
        np.vstack([p.demand_locations.reshape(p.n_demand, 2), p.boundary_positions])
        if p.n_demand or p.n_boundary
        else np.empty((0, 2))
    )
    ray = 0.0
    if len(sol.plan_mass):
        d = np.linalg.norm(p.supply_locations[sol.plan_supply] - sink_pos[sol.plan_sink], axis=1)
        ray = float(np.abs(d - (u_supply[sol.plan_supply] - u_sink[sol.plan_sink])).max())

    wall = 0.0
    carrying = sol.spill > LP_TOL
    if np.any(carrying):
        wall = float(np.abs(u_boundary[carrying] - p.boundary_walls[carrying]).max())

    pairing = float(p.supply_masses @ u_supply - p.demand_masses @ u_demand)
    gap = abs(pairing - sol.primal_value)

    tol = 1e-6 + 2.0 * p.h
    return CertificateReport(
        ray_residual=ray,
        wall_residual=wall,
        duality_gap=gap,
        tolerance=tol,
        passed=(ray <= tol and wall <= tol and gap <= tol),
    )


def snapshot_heights(state: ConeState, sources: SourceSet, p: DiscreteProblem):
    """Height samples at the problem's supply, demand and boundary nodes."""
    u_supply = eval_height_many(state, sources, p.supply_locations)
    u_demand = (
        eval_height_many(state, sources, p.demand_locations)
        if p.n_demand
        else np.empty(0)
    )
    u_boundary = (
        eval_height_many(state, sources, p.boundary_positions)
        if p.n_boundary
        else np.empty(0)
    )
    return u_supply, u_demand, u_boundary


def wasserstein(a_locations, a_masses, b_locations, b_masses) -> float:
    """Exact W1 between two balanced discrete measures (no boundary)."""
    p = transport_problem(a_locations, a_masses, b_locations, b_masses)
    return solve_primal(p).primal_value


def _network_simplex(supply, demand, cost, tol=LP_TOL):
    """Transportation simplex with a spanning-tree basis.

    Exploits the bipartite structure: at most m-1 demand columns are tree
    junctions, every other column hangs as a leaf under one supply row, so
    dual recomputation is O(m^2) plus one vectorized pass over the columns.
    Returns (flows, row duals, column duals, final minimum reduced cost).
    """
    solver = _TransportSimplex(supply, demand, cost, tol)
    solver.solve()
    u, v = solver.duals()
    min_rc = float((cost - u[:, None] - v[None, :]).min())
    return solver.flows, u, v, min_rc


class _TransportSimplex:
    """Primal network simplex specialised to dense transportation problems.

    Basis bookkeeping: ``col_rows[j]`` holds the basic rows of column j,
    ``col_row[j]`` one of them (the unique one for leaf columns), and
    ``row_junc[i]`` the junction columns (degree >= 2) touching row i.
    The core tree spanned by rows and junction columns has at most 2m - 1
    nodes, so every pivot costs O(m^2) plus one O(mn) reduced-cost scan.
    """

    def __init__(self, supply, demand, cost, tol=LP_TOL):
        self.supply = np.asarray(supply, dtype=float)
        self.demand = np.asarray(demand, dtype=float)
        self.cost = np.asarray(cost, dtype=float)
        self.m, self.n = self.cost.shape
        self.tol = tol
        total = self.supply.sum()
        if abs(total - self.demand.sum()) > tol * max(1.0, total):
            raise ValueError("unbalanced transportation problem")
        self.scale = max(1.0, float(np.abs(self.cost).max()))
        self.flows = np.zeros((self.m, self.n))
        self.col_rows: list[set[int]] = [set() for _ in range(self.n)]
        self.col_row = np.zeros(self.n, dtype=np.int64)
        self.row_junc: list[set[int]] = [set() for _ in range(self.m)]
        self._initial_basis()

    # -- construction -----------------------------------------------------

    def _initial_basis(self):
        """Northwest-corner start on greedily ordered columns.

        Columns are grouped by their cheapest supply row and, within a
        group, ordered by decreasing regret, so the initial tree is already
        close to the nearest-supply assignment.
        """
        m, n = self.m, self.n
        if m == 1:
            order = np.arange(n)
        else:
            nearest = np.argmin(self.cost, axis=0)
            part = np.partition(self.cost, 1, axis=0)
            regret = part[1] - part[0]
            order = np.lexsort((-regret, nearest))

        arcs: set[tuple[int, int]] = set()
        i = 0
        rem_s = self.supply.copy()
        for j in order:
            rem_d = float(self.demand[j])
            while True:
                take = min(rem_s[i], rem_d)
                self.flows[i, j] += take
                arcs.add((i, int(j)))
                rem_s[i] -= take
                rem_d -= take
                if rem_d <= 0.0 or i + 1 >= m:
                    break
                if rem_s[i] <= 0.0:
                    i += 1
        # rows never reached (trailing zero supplies) hang off their
        # cheapest column with a degenerate zero-flow arc
        for r in range(m):
            if not any(a[0] == r for a in arcs):
                arcs.add((r, int(np.argmin(self.cost[r]))))
        for r, j in arcs:
            self.col_rows[j].add(r)
        for j in range(n):
            if not self.col_rows[j]:
                # unreachable for a balanced problem, but keep the basis total
                self.col_rows[j].add(m - 1)
        self._rebuild_structure()

    def _rebuild_structure(self):
        for i in range(self.m):
            self.row_junc[i].clear()
        for j, rows in enumerate(self.col_rows):
            self.col_row[j] = next(iter(rows))
            if len(rows) > 1:
                for r in rows:
                    self.row_junc[r].add(j)

    # -- duals -------------------------------------------------------------

    def duals(self):
        """Node potentials with u[0] = 0, propagated over the basis tree."""
        m, n = self.m, self.n
        u = np.full(m, np.nan)
        v_junc: dict[int, float] = {}
        u[0] = 0.0
        stack = [0]
        while stack:
            r = stack.pop()
            for j in self.row_junc[r]:
                if j not in v_junc:
                    v_junc[j] = self.cost[r, j] - u[r]
                    for r2 in self.col_rows[j]:
                        if np.isnan(u[r2]):
                            u[r2] = self.cost[r2, j] - v_junc[j]
                            stack.append(r2)
        if np.isnan(u).any():
            raise RuntimeError("basis tree is not connected")
        # leaf columns hang under one row; the same formula is consistent
        # for junction columns because basic arcs satisfy u_i + v_j = c_ij
        v = self.cost[self.col_row, np.arange(n)] - u[self.col_row]
        return u, v

    # -- pivoting ----------------------------------------------------------

    def solve(self, max_iter=None):
        m, n = self.m, self.n
        if max_iter is None:
            max_iter = 400 * (m + n) + 5000
        mass_scale = max(1.0, float(self.supply.sum()))
        stall = 0
        bland = False
        for _ in range(max_iter):
            u, v = self.duals()
            reduced = self.cost - u[:, None] - v[None, :]
            if bland:
                cand = np.argwhere(reduced < -self.tol * self.scale)
                if len(cand) == 0:
                    return
                ei, ej = int(cand[0][0]), int(cand[0][1])
            else:
                flat = int(np.argmin(reduced))
                ei, ej = divmod(flat, n)
                if reduced[ei, ej] >= -self.tol * self.scale:
                    return
            theta = self._pivot(ei, ej)
            if theta <= 1e-14 * mass_scale:
                stall += 1
                if stall > m + n:
                    bland = True
            else:
                stall = 0
        raise RuntimeError("network simplex exceeded its iteration budget")

    def _core_path(self, ei: int, target: int):
        """Node path from row ei to ``target`` over rows and junction columns.

        ``target`` is a row id (< m) or a junction column id (m + j).
        """
        m = self.m
        if ei == target:
            return [ei]
        parent: dict[int, int] = {ei: -1}
        stack = [ei]
        while stack and target not in parent:
            node = stack.pop()
            if node < m:
                for j in self.row_junc[node]:
                    if m + j not in parent:
                        parent[m + j] = node
                        stack.append(m + j)
            else:
                for r in self.col_rows[node - m]:
                    if r not in parent:
                        parent[r] = node
                        stack.append(r)
        if target not in parent:
            raise RuntimeError("basis tree is not connected")
        nodes = [target]
        while parent[nodes[-1]] != -1:
            nodes.append(parent[nodes[-1]])
        nodes.reverse()
        return nodes

    def _pivot(self, ei: int, ej: int) -> float:
        m = self.m
        if len(self.col_rows[ej]) > 1:
            path = self._core_path(ei, m + ej)
        else:
            path = self._core_path(ei, int(self.col_row[ej]))
            path.append(m + ej)
        cells = []
        for a, b in zip(path, path[1:]):
            cells.append((a, b - m) if a < m else (b, a - m))
        minus = cells[0::2]
        plus = cells[1::2]
        theta = min(self.flows[i, j] for i, j in minus)
        leave = min((i, j) for i, j in minus if self.flows[i, j] <= theta)

        self.flows[ei, ej] += theta
        for i, j in plus:
            self.flows[i, j] += theta
        for i, j in minus:
            self.flows[i, j] -= theta
        self._add_arc(ei, ej)
        self._remove_arc(*leave)
        self.flows[leave] = 0.0
        return float(theta)

    def _add_arc(self, i: int, j: int):
        rows = self.col_rows[j]
        rows.add(i)
        deg = len(rows)
        if deg == 1:
            self.col_row[j] = i
        elif deg == 2:
            for r in rows:
                self.row_junc[r].add(j)
        else:
            self.row_junc[i].add(j)

    def _remove_arc(self, i: int, j: int):
        rows = self.col_rows[j]
        rows.discard(i)
        self.row_junc[i].discard(j)
        deg = len(rows)
        if deg == 0:
            raise RuntimeError("leaving arc would disconnect its column")
        if deg == 1:
            survivor = next(iter(rows))
            self.row_junc[survivor].discard(j)
            self.col_row[j] = survivor
        elif self.col_row[j] == i:
            self.col_row[j] = next(iter(rows))
