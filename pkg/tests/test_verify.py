import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from silopile.cones import GridControl, run
from silopile.fields import rolling_measure, spill_measure
from silopile.geometry import ConvexDomain
from silopile.regions import build_grid, partition
from silopile.sources import make_sources
from silopile.verify import (
    DiscreteProblem,
    build_problem,
    certify,
    coarsen_problem,
    snapshot_heights,
    solve_dual,
    solve_primal,
    transport_problem,
    wasserstein,
    _cost_matrix,
)


def linprog_oracle(p: DiscreteProblem) -> float:
    """Dense-LP value of the same problem via scipy's generic solver."""
    m = len(p.supply_masses)
    n = p.n_demand + p.n_boundary
    cost = _cost_matrix(p)
    a_eq, b_eq = [], []
    for i in range(m):
        row = np.zeros((m, n))
        row[i, :] = 1.0
        a_eq.append(row.ravel())
        b_eq.append(p.supply_masses[i])
    for j in range(p.n_demand):
        col = np.zeros((m, n))
        col[:, j] = 1.0
        a_eq.append(col.ravel())
        b_eq.append(p.demand_masses[j])
    res = linprog(cost.ravel(), A_eq=np.array(a_eq), b_eq=np.array(b_eq), method="highs")
    assert res.status == 0
    return float(res.fun)


def unit_square(g=0.0):
    return ConvexDomain([(0, 0), (1, 0), (1, 1), (0, 1)], [g] * 4)


def spill_problem(domain, y, mass=1.0, spacing=0.05):
    nodes = domain.boundary_nodes(spacing)
    return DiscreteProblem(
        supply_locations=np.atleast_2d(np.asarray(y, dtype=float)),
        supply_masses=np.array([mass]),
        demand_locations=np.empty((0, 2)),
        demand_masses=np.empty(0),
        boundary_points=tuple(nodes),
        boundary_walls=np.array([domain.wall_height(b) for b in nodes]),
        spill_total=mass,
        h=spacing,
    )


class TestSolvePrimal:
    def test_one_to_one(self):
        p = transport_problem([(0.0, 0.0)], [1.0], [(0.3, 0.0)], [1.0])
        sol = solve_primal(p)
        assert sol.primal_value == pytest.approx(0.3, abs=1e-12)
        assert len(sol.plan_mass) == 1
        assert sol.plan_mass[0] == pytest.approx(1.0)
        assert sol.min_reduced_cost >= -1e-9

    def test_all_mass_to_best_boundary(self):
        dom = ConvexDomain([(0, 0), (1, 0), (1, 1), (0, 1)], [0.3, 0.3, 2.0, 2.0])
        y = (0.4, 0.45)
        p = spill_problem(dom, y, spacing=0.01)
        sol = solve_primal(p)
        assert sol.spill.sum() == pytest.approx(1.0)
        target, _ = dom.escape_cost(y)
        assert sol.primal_value == pytest.approx(target, abs=0.01)
        assert sol.primal_value >= target - 1e-12  # node minimum cannot beat the true one

    def test_random_instances_match_dense_lp(self):
        rng = np.random.default_rng(17)
        for _ in range(12):
            m = int(rng.integers(2, 5))
            n = int(rng.integers(2, 6))
            sup = rng.random((m, 2))
            dem = rng.random((n, 2))
            sm = rng.random(m) + 0.1
            dm = rng.random(n) + 0.1
            dm *= sm.sum() / dm.sum()
            p = transport_problem(sup, sm, dem, dm)
            sol = solve_primal(p)
            assert sol.primal_value == pytest.approx(linprog_oracle(p), abs=1e-9)
            assert sol.marginal_error <= 1e-9
            assert sol.min_reduced_cost >= -1e-9

    def test_boundary_instances_match_dense_lp(self):
        rng = np.random.default_rng(23)
        dom = unit_square(0.25)
        nodes = dom.boundary_nodes(0.25)
        for _ in range(8):
            m = int(rng.integers(1, 4))
            n = int(rng.integers(1, 5))
            sm = rng.random(m) + 0.2
            dm = rng.random(n) + 0.1
            spill = rng.random() * sm.sum() * 0.5
            dm *= (sm.sum() - spill) / dm.sum()
            p = DiscreteProblem(
                supply_locations=rng.random((m, 2)) * 0.8 + 0.1,
                supply_masses=sm,
                demand_locations=rng.random((n, 2)) * 0.8 + 0.1,
                demand_masses=dm,
                boundary_points=tuple(nodes),
                boundary_walls=np.array([dom.wall_height(b) for b in nodes]),
                spill_total=spill,
                h=0.25,
            )
            sol = solve_primal(p)
            assert sol.primal_value == pytest.approx(linprog_oracle(p), abs=1e-9)
            assert sol.spill.sum() == pytest.approx(spill, abs=1e-9)

    def test_strong_duality_certificate(self):
        rng = np.random.default_rng(3)
        sup = rng.random((4, 2))
        dem = rng.random((6, 2))
        sm = rng.random(4) + 0.5
        dm = rng.random(6) + 0.5
        dm *= sm.sum() / dm.sum()
        sol = solve_primal(transport_problem(sup, sm, dem, dm))
        assert sol.dual_value == pytest.approx(sol.primal_value, abs=1e-8)


class TestSolveDual:
    def test_kantorovich_rubinstein(self):
        p = transport_problem([(0.1, 0.2)], [1.0], [(0.7, 0.6)], [1.0])
        d = solve_dual(p)
        dist = np.hypot(0.6, 0.4)
        assert d.value == pytest.approx(dist, abs=1e-8)
        assert d.v_supply[0] - d.v_demand[0] == pytest.approx(dist, abs=1e-8)

    def test_wall_spill_matches_primal(self):
        dom = ConvexDomain([(0, 0), (1, 0), (1, 1), (0, 1)], [0.3, 0.3, 2.0, 2.0])
        p = spill_problem(dom, (0.4, 0.45), spacing=0.05)
        d = solve_dual(p)
        sol = solve_primal(p)
        assert d.value == pytest.approx(sol.primal_value, abs=1e-8)

    def test_strong_duality_random(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            m = int(rng.integers(1, 4))
            n = int(rng.integers(1, 5))
            sm = rng.random(m) + 0.1
            dm = rng.random(n) + 0.1
            dm *= sm.sum() / dm.sum()
            p = transport_problem(rng.random((m, 2)), sm, rng.random((n, 2)), dm)
            assert solve_dual(p).value == pytest.approx(solve_primal(p).primal_value, abs=1e-8)

    def test_coarsening_caps_nodes(self):
        rng = np.random.default_rng(9)
        n = 600
        p = transport_problem(
            [(0.5, 0.5)], [1.0], rng.random((n, 2)), np.full(n, 1.0 / n), h=0.02
        )
        pc = coarsen_problem(p, node_cap=200)
        assert 1 + pc.n_demand + pc.n_boundary <= 200
        assert pc.demand_masses.sum() == pytest.approx(1.0)


class TestWasserstein:
    def test_matches_permutation_oracle(self):
        rng = np.random.default_rng(11)
        for n in (3, 5, 6):
            a = rng.random((n, 2))
            b = rng.random((n, 2))
            w = wasserstein(a, np.full(n, 1.0 / n), b, np.full(n, 1.0 / n))
            brute = min(
                sum(np.linalg.norm(a[i] - b[sigma[i]]) for i in range(n)) / n
                for sigma in itertools.permutations(range(n))
            )
            assert w == pytest.approx(brute, abs=1e-9)

    def test_rejects_unbalanced(self):
        with pytest.raises(ValueError):
            transport_problem([(0, 0)], [1.0], [(1, 1)], [0.5])


class TestSnapshotPipeline:
    def make_snapshot(self, t=0.25, h=1 / 32):
        dom = ConvexDomain([(0, 0), (1, 0), (1, 1), (0, 1)], [0.12, 0.3, 0.2, 0.25])
        s = make_sources(dom, [(0.3, 0.35), (0.7, 0.6)], [0.6, 0.8])
        traj = run(s, dom, t, [t], GridControl(h=h))
        return dom, s, traj.states[0], h

    def test_prefreeze_all_interior(self):
        dom, s, state, h = self.make_snapshot(t=0.05)
        grid = build_grid(dom, h)
        p = build_problem(state, s, dom, grid, boundary_spacing=h)
        assert p.n_boundary > 0
        assert p.spill_total == 0.0
        sol = solve_primal(p)
        assert sol.spill.sum() == 0.0
        assert sol.primal_value > 0.0

    def test_postfreeze_spills_frozen_rates(self):
        dom, s, state, h = self.make_snapshot(t=0.6)
        assert state.frozen.all()
        grid = build_grid(dom, h)
        p = build_problem(state, s, dom, grid, boundary_spacing=h)
        sol = solve_primal(p)
        assert sol.spill.sum() == pytest.approx(s.total_rate)

    def test_coarse_grid_rejected_for_imbalance(self):
        from silopile.cones import ConeState, escape_thresholds

        dom = unit_square(5.0)
        s = make_sources(dom, [(0.3, 0.35), (0.7, 0.6)], [0.6, 0.8])
        thresholds = escape_thresholds(s, dom)
        # radii too small for a 0.45 grid: their cells carry no demand mass
        state = ConeState(0.01, np.array([0.02, 0.02]), np.array([False, False]), thresholds)
        tiny_grid = build_grid(dom, 0.45)
        with pytest.raises(ValueError):
            build_problem(state, s, dom, tiny_grid, boundary_spacing=0.45)

    def test_certify_passes_midrun(self):
        for t in (0.08, 0.25):  # pre-freeze and fully frozen
            dom, s, state, h = self.make_snapshot(t=t)
            grid = build_grid(dom, h)
            p = build_problem(state, s, dom, grid, boundary_spacing=h)
            sol = solve_primal(p)
            report = certify(*snapshot_heights(state, s, p), sol, p)
            assert report.passed, (t, report)

    def test_certify_fails_on_perturbation(self):
        dom, s, state, h = self.make_snapshot(t=0.08)
        grid = build_grid(dom, h)
        p = build_problem(state, s, dom, grid, boundary_spacing=h)
        assert p.n_demand > 0
        sol = solve_primal(p)
        u_s, u_d, u_b = snapshot_heights(state, s, p)
        u_d = u_d.copy()
        u_d[0] += 0.1
        report = certify(u_s, u_d, u_b, sol, p)
        assert not report.passed
        assert max(report.ray_residual, report.duality_gap) >= 0.1 - 1e-9

    def test_exact_pair_zero_residuals(self):
        p = transport_problem([(0.2, 0.2)], [1.0], [(0.8, 0.6)], [1.0])
        sol = solve_primal(p)
        dist = np.hypot(0.6, 0.4)
        report = certify(np.array([dist]), np.array([0.0]), np.empty(0), sol, p)
        assert report.ray_residual == pytest.approx(0.0, abs=1e-12)
        assert report.duality_gap == pytest.approx(0.0, abs=1e-12)
        assert report.passed

    def test_spill_optimality(self):
        dom, s, state, h = self.make_snapshot(t=0.6)
        grid = build_grid(dom, h)
        p = build_problem(state, s, dom, grid, boundary_spacing=h)
        sol = solve_primal(p)
        pos = p.boundary_positions
        for idx in range(len(sol.plan_mass)):
            sink = sol.plan_sink[idx]
            if sink < p.n_demand:
                continue
            b = sink - p.n_demand
            y = p.supply_locations[sol.plan_supply[idx]]
            cost_b = p.boundary_walls[b] + np.linalg.norm(y - pos[b])
            all_costs = p.boundary_walls + np.linalg.norm(pos - y, axis=1)
            assert cost_b <= all_costs.min() + 1e-9

    def test_rolling_mass_matches_plan_cost(self):
        dom, s, state, h = self.make_snapshot(t=0.25)
        grid = build_grid(dom, h)
        part = partition(grid, s, state.radii)
        mu = rolling_measure(state, s, part, dom, grid)
        p = build_problem(state, s, dom, grid, boundary_spacing=h)
        sol = solve_primal(p)
        sink_pos = np.vstack([p.demand_locations, p.boundary_positions])
        dist = np.linalg.norm(
            p.supply_locations[sol.plan_supply] - sink_pos[sol.plan_sink], axis=1
        )
        plan_distance_cost = float((sol.plan_mass * dist).sum())
        assert abs(mu.total_mass - plan_distance_cost) <= 10 * h * s.total_rate * dom.diameter
