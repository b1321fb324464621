import numpy as np
import pytest

from ellipsafe.matcore import DimensionMismatch
from ellipsafe.sdp import (
    LmiBlock,
    SdpProblem,
    SdpSolution,
    Sense,
    SolverSettings,
    Status,
    VarLayout,
    evaluate_block,
    feasibility_report,
    max_violation,
    solve,
)

NSD = Sense.NEGATIVE_SEMIDEFINITE
PSD = Sense.POSITIVE_SEMIDEFINITE


def scalar_block(constant, coeffs, sense):
    """1x1 block: constant + sum coeff_k z_k, as plain floats."""
    return LmiBlock(
        np.array([[float(constant)]]),
        [(k, np.array([[float(v)]])) for k, v in coeffs],
        sense,
    )


def scalar_problem(objective, blocks, n=None):
    layout = VarLayout(n=len(objective) if n is None else n, m=0)
    # for pure scalar problems we treat the diagonal of Q as the variables;
    # callers must keep indices within the layout
    return SdpProblem(layout, objective, blocks)


class TestVarLayout:
    def test_round_trip(self):
        layout = VarLayout(n=3, m=2)
        rng = np.random.default_rng(0)
        q = rng.standard_normal((3, 3))
        q = q + q.T
        y = rng.standard_normal((2, 3))
        q2, y2 = layout.unpack(layout.pack(q, y))
        assert np.array_equal(q, q2)
        assert np.array_equal(y, y2)

    def test_index_map_is_bijection(self):
        layout = VarLayout(n=4, m=2)
        seen = set()
        for i in range(4):
            for j in range(i, 4):
                seen.add(layout.q_index(i, j))
        for r in range(2):
            for c in range(4):
                seen.add(layout.y_index(r, c))
        assert seen == set(range(layout.total))

    def test_q_index_symmetric_in_arguments(self):
        layout = VarLayout(n=5, m=0)
        assert layout.q_index(3, 1) == layout.q_index(1, 3)

    def test_trace_objective(self):
        layout = VarLayout(n=2, m=1)
        c = layout.trace_objective()
        q = np.array([[2.0, 5.0], [5.0, 3.0]])
        z = layout.pack(q, np.zeros((1, 2)))
        assert c @ z == pytest.approx(5.0)


class TestEvaluateBlock:
    def test_constant_only(self):
        block = LmiBlock(np.eye(2), [], PSD)
        value = evaluate_block(block, np.array([]))
        assert np.array_equal(value.mat, np.eye(2))

    def test_linearity(self):
        block = LmiBlock(np.zeros((2, 2)), [(0, np.eye(2))], PSD)
        value = evaluate_block(block, np.array([3.0]))
        assert np.array_equal(value.mat, 3.0 * np.eye(2))

    def test_missing_variable_raises(self):
        block = LmiBlock(np.zeros((2, 2)), [(4, np.eye(2))], PSD)
        with pytest.raises(DimensionMismatch):
            evaluate_block(block, np.zeros(2))

    def test_coefficients_symmetrized(self):
        block = LmiBlock(np.zeros((2, 2)), [(0, np.array([[0.0, 2.0], [0.0, 0.0]]))], PSD)
        value = evaluate_block(block, np.array([1.0]))
        assert value.mat[0, 1] == value.mat[1, 0] == 1.0


class TestSolveBasics:
    def test_scalar_lp_as_1x1_lmis(self):
        # maximize q s.t. q >= 0 and 1 - q >= 0  ->  q = 1
        problem = scalar_problem(
            [1.0],
            [scalar_block(0.0, [(0, 1.0)], PSD), scalar_block(1.0, [(0, -1.0)], PSD)],
        )
        sol = solve(problem)
        assert sol.status is Status.OPTIMAL
        assert sol.objective_value == pytest.approx(1.0, abs=1e-6)
        assert sol.duality_gap_estimate <= 1e-7

    def test_lyapunov_with_cap(self):
        # trace-max over -Q <= 0 (a = -identity decay with unit rate makes the
        # invariance part vacuous) with cap Q <= I: optimum Q = I, trace n
        for n in (2, 3):
            layout = VarLayout(n=n, m=0)
            coeffs_q = []
            cap_coeffs = []
            for i in range(n):
                for j in range(i, n):
                    basis = np.zeros((n, n))
                    basis[i, j] = basis[j, i] = 1.0
                    coeffs_q.append((layout.q_index(i, j), -basis))
                    cap_coeffs.append((layout.q_index(i, j), basis))
            blocks = [
                LmiBlock(np.zeros((n, n)), coeffs_q, NSD),  # -Q <= 0
                LmiBlock(-np.eye(n), cap_coeffs, NSD),  # Q - I <= 0
            ]
            sol = solve(SdpProblem(layout, layout.trace_objective(), blocks))
            assert sol.status is Status.OPTIMAL
            assert sol.objective_value == pytest.approx(float(n), abs=1e-6)

    def test_contradictory_scalars_infeasible(self):
        # q - 1 >= 0 and -q >= 0 cannot both hold
        problem = scalar_problem(
            [1.0],
            [scalar_block(-1.0, [(0, 1.0)], PSD), scalar_block(0.0, [(0, -1.0)], PSD)],
        )
        sol = solve(problem)
        assert sol.status is Status.INFEASIBLE

    def test_schur_coupling(self):
        # maximize y s.t. [[q, y], [y, 1]] >= 0, q <= 4, q >= 0  ->  y = 2
        layout = VarLayout(n=1, m=1)
        qi, yi = layout.q_index(0, 0), layout.y_index(0, 0)
        schur = LmiBlock(
            np.array([[0.0, 0.0], [0.0, 1.0]]),
            [
                (qi, np.array([[1.0, 0.0], [0.0, 0.0]])),
                (yi, np.array([[0.0, 0.5], [0.5, 0.0]]) * 2.0),
            ],
            PSD,
        )
        blocks = [
            schur,
            scalar_block(4.0, [(qi, -1.0)], PSD),
            scalar_block(0.0, [(qi, 1.0)], PSD),
        ]
        c = np.zeros(layout.total)
        c[yi] = 1.0
        sol = solve(SdpProblem(layout, c, blocks))
        assert sol.status is Status.OPTIMAL
        assert sol.objective_value == pytest.approx(2.0, abs=1e-6)


class TestSolverInvariants:
    def test_optimal_passes_feasibility_report(self):
        layout = VarLayout(n=2, m=0)
        cap = []
        psd = []
        for i in range(2):
            for j in range(i, 2):
                basis = np.zeros((2, 2))
                basis[i, j] = basis[j, i] = 1.0
                cap.append((layout.q_index(i, j), basis))
                psd.append((layout.q_index(i, j), basis))
        problem = SdpProblem(
            layout,
            layout.trace_objective(),
            [LmiBlock(np.zeros((2, 2)), psd, PSD), LmiBlock(-np.diag([2.0, 3.0]), cap, NSD)],
        )
        sol = solve(problem)
        assert sol.status is Status.OPTIMAL
        report = feasibility_report(problem, sol.z)
        assert all(e.eigenvalue <= 1e-8 if not e.violates else False for e in report) or all(
            not e.violates for e in report
        )
        assert max_violation(report) <= 1e-8

    def test_objective_monotone_in_bound_relaxation(self):
        # widening a scalar cap never decreases the optimum
        def best(cap):
            problem = scalar_problem(
                [1.0],
                [scalar_block(0.0, [(0, 1.0)], PSD), scalar_block(cap, [(0, -1.0)], PSD)],
            )
            return solve(problem).objective_value

        values = [best(c) for c in (0.5, 1.0, 2.0, 4.0)]
        assert all(b >= a - 1e-6 for a, b in zip(values, values[1:]))

    def test_deterministic_bitwise(self):
        layout = VarLayout(n=2, m=1)
        rng = np.random.default_rng(21)
        blocks = []
        basis_pairs = []
        for i in range(2):
            for j in range(i, 2):
                basis = np.zeros((2, 2))
                basis[i, j] = basis[j, i] = 1.0
                basis_pairs.append((layout.q_index(i, j), basis))
        blocks.append(LmiBlock(np.zeros((2, 2)), basis_pairs, PSD))
        blocks.append(LmiBlock(-2.0 * np.eye(2), basis_pairs, NSD))
        yc = np.zeros((2, 2))
        blocks.append(
            LmiBlock(
                np.array([[0.0, 0.0], [0.0, 1.0]]),
                [(layout.y_index(0, 0), np.array([[0.0, 1.0], [1.0, 0.0]]))]
                + [(layout.q_index(0, 0), np.array([[1.0, 0.0], [0.0, 0.0]]))],
                PSD,
            )
        )
        c = rng.standard_normal(layout.total)
        s1 = solve(SdpProblem(layout, c, blocks))
        s2 = solve(SdpProblem(layout, c, blocks))
        assert np.array_equal(s1.z, s2.z)
        assert s1.iterations == s2.iterations
        assert s1.objective_value == s2.objective_value

    def test_scalar_agrees_with_grid_brute_force(self):
        # maximize q s.t. 0.7 - 2q >= 0 and q + 0.1 >= 0
        problem = scalar_problem(
            [1.0],
            [scalar_block(0.7, [(0, -2.0)], PSD), scalar_block(0.1, [(0, 1.0)], PSD)],
        )
        sol = solve(problem)
        # two-stage grid refinement as an independent oracle
        grid = np.linspace(-1.0, 1.0, 20001)
        feas = grid[(0.7 - 2.0 * grid >= 0.0) & (grid + 0.1 >= 0.0)]
        coarse = feas[np.argmax(feas)]
        fine = np.linspace(coarse - 1e-4, coarse + 1e-4, 20001)
        feas = fine[(0.7 - 2.0 * fine >= 0.0) & (fine + 0.1 >= 0.0)]
        brute = feas[np.argmax(feas)]
        assert sol.objective_value == pytest.approx(brute, abs=1e-6)


class TestFeasibilityReport:
    def _input_style_block(self, n, u_max):
        # [[Q, y], [y^T, u^2]] >= 0 evaluated through the packed layout
        layout = VarLayout(n=n, m=1)
        coeffs = []
        for i in range(n):
            for j in range(i, n):
                basis = np.zeros((n + 1, n + 1))
                basis[i, j] = basis[j, i] = 1.0
                coeffs.append((layout.q_index(i, j), basis))
        for c in range(n):
            basis = np.zeros((n + 1, n + 1))
            basis[c, n] = basis[n, c] = 1.0
            coeffs.append((layout.y_index(0, c), basis))
        constant = np.zeros((n + 1, n + 1))
        constant[n, n] = u_max**2
        return layout, LmiBlock(constant, coeffs, PSD)

    def test_zero_point_is_boundary_feasible(self):
        layout, block = self._input_style_block(2, u_max=1.0)
        problem = SdpProblem(layout, np.zeros(layout.total), [block])
        report = feasibility_report(problem, np.zeros(layout.total))
        assert not report[0].violates
        assert report[0].eigenvalue == pytest.approx(0.0, abs=1e-12)

    def test_negative_q_violates_psd_block(self):
        layout = VarLayout(n=2, m=0)
        coeffs = []
        for i in range(2):
            for j in range(i, 2):
                basis = np.zeros((2, 2))
                basis[i, j] = basis[j, i] = 1.0
                coeffs.append((layout.q_index(i, j), basis))
        block = LmiBlock(np.zeros((2, 2)), coeffs, PSD)
        problem = SdpProblem(layout, np.zeros(layout.total), [block])
        z = layout.pack(-np.eye(2))
        report = feasibility_report(problem, z)
        assert report[0].violates
        assert report[0].eigenvalue == pytest.approx(-1.0, abs=1e-12)

    def test_length_mismatch(self):
        layout, block = self._input_style_block(2, u_max=1.0)
        problem = SdpProblem(layout, np.zeros(layout.total), [block])
        with pytest.raises(DimensionMismatch):
            feasibility_report(problem, np.zeros(2))
