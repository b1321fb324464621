"""Small dense semidefinite programs: affine LMI blocks over packed variables.

The decision vector packs a symmetric n x n matrix (upper triangle, row by
row) followed by a dense m x n rectangular matrix. Constraints are affine
symmetric-matrix functions of that vector, each required to live in the
positive- or negative-semidefinite cone, and the objective is linear.

The solver is a log-barrier interior-point method: an infeasible-start
Phase 1 minimizes a uniform slack s with every block shifted by s*I, then
barrier path-following maximizes the objective, with Newton steps solved by
dense factorization. Problems here have at most a few dozen scalar
variables, so no sparsity is exploited anywhere. Everything is
deterministic: fixed initialization, fixed sweep and backtracking orders, no
randomized pivoting; identical problems and settings reproduce bitwise
identical iterates. Problem values are immutable, so independent solves may
run concurrently.

The solver's inner loop uses LAPACK (via numpy) for factorizations; the
`feasibility_report` oracle instead uses this package's own Jacobi
eigensolver so that certification does not share code with the solver path
it checks.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .matcore import DimensionMismatch, SymMatrix, sym_eig

__all__ = [
    "BlockResidual",
    "LmiBlock",
    "SdpProblem",
    "SdpSolution",
    "Sense",
    "SolverSettings",
    "Status",
    "VarLayout",
    "evaluate_block",
    "feasibility_report",
    "max_violation",
    "solve",
]


class Sense(enum.Enum):
    """Which semidefinite cone an LMI block must lie in."""

    NEGATIVE_SEMIDEFINITE = "nsd"
    POSITIVE_SEMIDEFINITE = "psd"


@dataclass(frozen=True)
class VarLayout:
    """Index map for the packed decision vector (symmetric Q, rectangular Y).

    Q is n x n symmetric, stored as its upper triangle row by row
    (n(n+1)/2 scalars); Y is m x n dense, stored row-major after the Q part.
    The map is a bijection onto [0, total) and pack/unpack round-trip exactly.
    """

    n: int
    m: int

    def __post_init__(self):
        if self.n < 1 or self.m < 0:
            raise DimensionMismatch(f"invalid layout dimensions n={self.n}, m={self.m}")

    @property
    def num_sym(self) -> int:
        return self.n * (self.n + 1) // 2

    @property
    def total(self) -> int:
        return self.num_sym + self.m * self.n

    def q_index(self, i: int, j: int) -> int:
        """Packed index of Q[i, j] (order of i, j irrelevant)."""
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise DimensionMismatch(f"Q index ({i}, {j}) out of range for n={self.n}")
        if i > j:
            i, j = j, i
        return i * self.n - i * (i - 1) // 2 + (j - i)

    def y_index(self, r: int, c: int) -> int:
        """Packed index of Y[r, c]."""
        if not (0 <= r < self.m and 0 <= c < self.n):
            raise DimensionMismatch(f"Y index ({r}, {c}) out of range")
        return self.num_sym + r * self.n + c

    def pack(self, q, y=None) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.n, self.n):
            raise DimensionMismatch(f"Q has shape {q.shape}, expected {(self.n, self.n)}")
        z = np.empty(self.total)
        for i in range(self.n):
            for j in range(i, self.n):
                z[self.q_index(i, j)] = q[i, j]
        if self.m > 0:
            y = np.asarray(y, dtype=float)
            if y.shape != (self.m, self.n):
                raise DimensionMismatch(f"Y has shape {y.shape}, expected {(self.m, self.n)}")
            z[self.num_sym :] = y.ravel()
        elif y is not None and np.asarray(y).size:
            raise DimensionMismatch("layout has no Y variables")
        return z

    def unpack(self, z) -> tuple[np.ndarray, np.ndarray]:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.total,):
            raise DimensionMismatch(f"z has shape {z.shape}, expected {(self.total,)}")
        q = np.empty((self.n, self.n))
        for i in range(self.n):
            for j in range(i, self.n):
                q[i, j] = q[j, i] = z[self.q_index(i, j)]
        y = z[self.num_sym :].reshape(self.m, self.n).copy()
        return q, y

    def trace_objective(self) -> np.ndarray:
        """Linear functional equal to trace(Q): weight 1 on diagonal entries."""
        c = np.zeros(self.total)
        for i in range(self.n):
            c[self.q_index(i, i)] = 1.0
        return c


class LmiBlock:
    """Affine symmetric-matrix function M(z) = constant + sum_k z_k coeff_k.

    `coeffs` is a list of (variable index, symmetric coefficient matrix)
    pairs; every coefficient matrix must match the block dimension. The block
    is constrained to the cone given by `sense`.
    """

    __slots__ = ("dim", "constant", "coeffs", "sense")

    def __init__(self, constant, coeffs, sense: Sense) -> None:
        const = constant.mat if isinstance(constant, SymMatrix) else np.asarray(constant, float)
        if const.ndim != 2 or const.shape[0] != const.shape[1]:
            raise DimensionMismatch(f"block constant must be square, got {const.shape}")
        self.dim = const.shape[0]
        self.constant = 0.5 * (const + const.T)
        self.constant.flags.writeable = False
        self.sense = Sense(sense)
        packed = []
        for index, coeff in coeffs:
            mat = coeff.mat if isinstance(coeff, SymMatrix) else np.asarray(coeff, float)
            if mat.shape != (self.dim, self.dim):
                raise DimensionMismatch(
                    f"coefficient for variable {index} has shape {mat.shape}, "
                    f"expected {(self.dim, self.dim)}"
                )
            if index < 0:
                raise DimensionMismatch(f"negative variable index {index}")
            sym = 0.5 * (mat + mat.T)
            sym.flags.writeable = False
            packed.append((int(index), sym))
        self.coeffs = tuple(packed)

    def coeff_stack(self, num_vars: int) -> np.ndarray:
        """Dense (num_vars, dim, dim) stack of coefficients (zeros elsewhere)."""
        stack = np.zeros((num_vars, self.dim, self.dim))
        for index, mat in self.coeffs:
            if index >= num_vars:
                raise DimensionMismatch(
                    f"block references variable {index} but only {num_vars} exist"
                )
            stack[index] += mat
        return stack


def evaluate_block(block: LmiBlock, z) -> SymMatrix:
    """Evaluate constant + sum_k z_k coeff_k at z."""
    z = np.asarray(z, dtype=float)
    if z.ndim != 1:
        raise DimensionMismatch(f"z must be a vector, got shape {z.shape}")
    value = block.constant.copy()
    for index, mat in block.coeffs:
        if index >= z.shape[0]:
            raise DimensionMismatch(
                f"block references variable {index} but z has length {z.shape[0]}"
            )
        value += z[index] * mat
    return SymMatrix(value)


@dataclass(frozen=True)
class SdpProblem:
    """Maximize objective . z subject to every block lying in its cone."""

    layout: VarLayout
    objective: np.ndarray
    blocks: tuple[LmiBlock, ...]

    def __init__(self, layout: VarLayout, objective, blocks) -> None:
        objective = np.asarray(objective, dtype=float)
        if objective.shape != (layout.total,):
            raise DimensionMismatch(
                f"objective has shape {objective.shape}, expected {(layout.total,)}"
            )
        blocks = tuple(blocks)
        if not blocks:
            raise DimensionMismatch("problem must contain at least one block")
        for b, block in enumerate(blocks):
            for index, _ in block.coeffs:
                if index >= layout.total:
                    raise DimensionMismatch(
                        f"block {b} references variable {index}, layout has {layout.total}"
                    )
        objective = objective.copy()
        objective.flags.writeable = False
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "objective", objective)
        object.__setattr__(self, "blocks", blocks)


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITER = "max_iter"


@dataclass(frozen=True)
class SolverSettings:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-7
    max_iter: int = 200
    initial_scale: float = 1.0
    mu_factor: float = 0.2  # barrier parameter shrinks by this factor per stage


@dataclass(frozen=True)
class SdpSolution:
    z: np.ndarray
    objective_value: float
    status: Status
    max_block_violation: float
    duality_gap_estimate: float
    iterations: int
    message: str = ""


@dataclass(frozen=True)
class BlockResidual:
    """Critical eigenvalue of one block at a candidate point.

    For a negative-semidefinite block this is the maximum eigenvalue (must be
    <= 0); for a positive-semidefinite block the minimum (must be >= 0).
    """

    index: int
    eigenvalue: float
    violates: bool


def feasibility_report(problem: SdpProblem, z) -> list[BlockResidual]:
    """Critical eigenvalue of every block at z, via the Jacobi eigensolver.

    The violating entries are empty exactly when z is feasible at tolerance 0.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (problem.layout.total,):
        raise DimensionMismatch(
            f"z has shape {z.shape}, expected {(problem.layout.total,)}"
        )
    report = []
    for b, block in enumerate(problem.blocks):
        value = evaluate_block(block, z)
        eigvals, _ = sym_eig(value)
        if block.sense is Sense.NEGATIVE_SEMIDEFINITE:
            critical = float(eigvals[-1])
            violates = critical > 0.0
        else:
            critical = float(eigvals[0])
            violates = critical < 0.0
        report.append(BlockResidual(index=b, eigenvalue=critical, violates=violates))
    return report


def max_violation(report: list[BlockResidual]) -> float:
    """Largest signed violation across blocks; <= 0 means feasible.

    A violating block contributes the magnitude of its wrong-signed
    eigenvalue; a satisfied block contributes minus its margin to the cone
    boundary.
    """
    return max((abs(e.eigenvalue) if e.violates else -abs(e.eigenvalue)) for e in report)


# ---------------------------------------------------------------------------
# interior-point internals
# ---------------------------------------------------------------------------


class _Cones:
    """Sign-normalized, variable-scaled block data: every cone is M(zhat) >= 0."""

    def __init__(self, problem: SdpProblem, extra_slack: bool):
        num = problem.layout.total
        self.num_base = num
        self.num = num + (1 if extra_slack else 0)
        self.constants = []
        raw_stacks = []
        self.dims = []
        for block in problem.blocks:
            sign = -1.0 if block.sense is Sense.NEGATIVE_SEMIDEFINITE else 1.0
            self.constants.append(sign * block.constant)
            raw_stacks.append(sign * block.coeff_stack(num))
            self.dims.append(block.dim)
        self.nu = float(sum(self.dims))
        # per-variable scaling equalizes aggregate coefficient norms so the
        # Newton system stays well conditioned when B mixes unit scales
        norms = np.zeros(num)
        for stack in raw_stacks:
            norms += np.sum(stack * stack, axis=(1, 2))
        norms = np.sqrt(norms)
        scale = np.where(norms > 0.0, 1.0 / np.maximum(norms, 1e-300), 1.0)
        if extra_slack:
            slack_norm = math.sqrt(sum(d for d in self.dims))
            scale = np.append(scale, 1.0 / slack_norm)
        self.scale = scale
        self.stacks = []
        for stack, dim in zip(raw_stacks, self.dims):
            if extra_slack:
                full = np.zeros((self.num, dim, dim))
                full[:num] = stack
                full[num] = np.eye(dim)
            else:
                full = stack
            self.stacks.append(full * self.scale[:, None, None])
        # flattened views for BLAS-friendly gradient/Hessian assembly
        self.flat = [st.reshape(self.num, dim * dim) for st, dim in zip(self.stacks, self.dims)]

    def values(self, zhat: np.ndarray) -> list[np.ndarray]:
        return [
            c + np.tensordot(zhat, st, axes=([0], [0]))
            for c, st in zip(self.constants, self.stacks)
        ]

    def strictly_feasible(self, zhat: np.ndarray) -> bool:
        for value in self.values(zhat):
            try:
                np.linalg.cholesky(value)
            except np.linalg.LinAlgError:
                return False
        return True

    def barrier(self, zhat: np.ndarray) -> float:
        """-sum log det M_b(zhat); +inf outside the strict interior."""
        total = 0.0
        for value in self.values(zhat):
            try:
                chol = np.linalg.cholesky(value)
            except np.linalg.LinAlgError:
                return math.inf
            diag = np.diag(chol)
            if np.any(diag <= 0.0):
                return math.inf
            total -= 2.0 * float(np.sum(np.log(diag)))
        return total

    def barrier_grad_hess(self, zhat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        grad = np.zeros(self.num)
        hess = np.zeros((self.num, self.num))
        for value, stack, flat, dim in zip(
            self.values(zhat), self.stacks, self.flat, self.dims
        ):
            inv = np.linalg.inv(value)
            grad -= flat @ inv.reshape(dim * dim)
            w = np.einsum("ab,kbc->kac", inv, stack)
            wt = w.transpose(0, 2, 1).reshape(self.num, dim * dim)
            hess += wt @ w.reshape(self.num, dim * dim).T
        return grad, hess


def _newton_step(hess: np.ndarray, grad: np.ndarray) -> np.ndarray:
    jitter = 0.0
    for _ in range(6):
        try:
            step = np.linalg.solve(hess + jitter * np.eye(hess.shape[0]), -grad)
        except np.linalg.LinAlgError:
            step = None
        if step is not None and np.all(np.isfinite(step)):
            return step
        jitter = max(jitter * 100.0, 1e-12 * (1.0 + float(np.max(np.abs(np.diag(hess))))))
    raise np.linalg.LinAlgError("Newton system unsolvable")


class _IterationBudget(Exception):
    pass


class _State:
    def __init__(self, cones: _Cones, c_hat: np.ndarray, budget: int):
        self.cones = cones
        self.c_hat = c_hat
        self.budget = budget
        self.used = 0

    def center(self, zhat: np.ndarray, t: float, ctol: float = 1e-9) -> np.ndarray:
        """Damped Newton on f(z) = -t c.z - sum log det, to small decrement."""
        cones = self.cones
        while True:
            if self.used >= self.budget:
                raise _IterationBudget()
            grad_b, hess = cones.barrier_grad_hess(zhat)
            grad = -t * self.c_hat + grad_b
            step = _newton_step(hess, grad)
            decrement_sq = float(-grad @ step)
            if decrement_sq <= 2.0 * ctol:
                return zhat
            self.used += 1
            f0 = -t * float(self.c_hat @ zhat) + cones.barrier(zhat)
            slope = float(grad @ step)
            alpha = 1.0
            accepted = None
            for _ in range(80):
                trial = zhat + alpha * step
                f_trial = -t * float(self.c_hat @ trial) + cones.barrier(trial)
                if math.isfinite(f_trial) and f_trial <= f0 + 0.25 * alpha * slope:
                    accepted = trial
                    break
                alpha *= 0.5
            if accepted is None:
                return zhat  # stalled: cannot make progress at this scale
            zhat = accepted


def solve(problem: SdpProblem, settings: SolverSettings | None = None) -> SdpSolution:
    """Interior-point solve of the block-LMI program.

    On Status.OPTIMAL the returned point is primal feasible to feas_tol
    (strictly feasible in fact, since iterates never leave the interior) and
    the objective lies within gap_tol of the barrier-certified optimum.
    Status.INFEASIBLE means Phase 1 certified there is no strictly feasible
    point (the minimal uniform slack is nonnegative at tolerance feas_tol).
    Status.MAX_ITER returns the best iterate reached within the budget.
    """
    settings = settings or SolverSettings()
    num = problem.layout.total

    def finish(z_hat_base, cones_base, status, gap, used, message=""):
        z = cones_base.scale[:num] * z_hat_base[:num]
        objective_value = float(problem.objective @ z)
        report = feasibility_report(problem, z)
        violation = max_violation(report)
        return SdpSolution(
            z=z,
            objective_value=objective_value,
            status=status,
            max_block_violation=violation,
            duality_gap_estimate=gap,
            iterations=used,
            message=message,
        )

    base = _Cones(problem, extra_slack=False)
    zhat = np.zeros(num)
    used = 0

    if not base.strictly_feasible(zhat):
        # Phase 1: minimize uniform slack s with every block shifted by s*I
        aug = _Cones(problem, extra_slack=True)
        worst = 0.0
        for const in aug.constants:
            worst = max(worst, -float(np.min(np.linalg.eigvalsh(const))))
        s0 = worst + settings.initial_scale
        zaug = np.zeros(num + 1)
        zaug[num] = s0 / aug.scale[num]
        c_aug = np.zeros(num + 1)
        c_aug[num] = -aug.scale[num]  # maximize -s in raw units
        state = _State(aug, c_aug, settings.max_iter)
        t = 1.0
        feasible_point = None
        status_message = ""
        try:
            while True:
                zaug = state.center(zaug, t)
                s_raw = float(aug.scale[num] * zaug[num])
                if s_raw < 0.0 and base.strictly_feasible(zaug[:num]):
                    feasible_point = zaug[:num].copy()
                    break
                gap = aug.nu / t
                if s_raw - gap > -settings.feas_tol:
                    status_message = (
                        f"phase 1 slack converged to {s_raw:.3e} "
                        f"(lower bound {s_raw - gap:.3e}); no strict interior"
                    )
                    break
                t /= settings.mu_factor
        except _IterationBudget:
            return finish(
                zaug[:num], base, Status.MAX_ITER, math.nan, state.used,
                "iteration budget exhausted in phase 1",
            )
        used = state.used
        if feasible_point is None:
            solution = finish(
                zaug[:num], base, Status.INFEASIBLE, math.nan, used, status_message
            )
            return solution
        zhat = feasible_point

    # Phase 2: barrier path-following on the objective
    c_hat = problem.objective * base.scale
    state = _State(base, c_hat, settings.max_iter)
    state.used = used
    t = 1.0
    gap = base.nu / t
    try:
        while True:
            zhat = state.center(zhat, t)
            gap = base.nu / t
            if gap <= 0.5 * settings.gap_tol:
                return finish(zhat, base, Status.OPTIMAL, gap, state.used)
            t /= settings.mu_factor
    except _IterationBudget:
        return finish(
            zhat, base, Status.MAX_ITER, gap, state.used,
            "iteration budget exhausted in phase 2",
        )
