"""Box-constrained solves of the discrete plate problems.

The discrete two-sided obstacle problem is the quadratic program

    min  1/2 x' K x - b' x    subject to  lo_i <= x_i <= hi_i

over the essential-constrained dof space, where only value dofs of nodes in
the obstacle region are boxed.  A primal-dual active set iteration solves it
with exact nodewise feasibility and finite termination on nondegenerate
instances; multipliers are nonnegative on upper contact and nonpositive on
lower contact.  Inner linear systems use a sparse LU of the diagonally
scaled matrix followed by extended-precision iterative refinement, so the
fourth-order conditioning does not eat the certified residuals.
"""

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import LONG, DOF_VALUE, DofField, assemble_bilinear, assemble_load

__all__ = [
    "BoxConstraints",
    "VISolution",
    "SolverSettings",
    "PlateOperator",
    "SolverError",
    "IterationLimitError",
    "solve_linear",
    "solve_obstacle",
    "solve_reinforced",
    "solve_densityweighted",
    "kkt_report",
    "solution_to_json",
]


class SolverError(RuntimeError):
    pass


class IterationLimitError(SolverError):
    """Active-set loop hit its iteration budget; carries the last residual."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-9
    max_iterations: int = 200
    refine_steps: int = 2


DEFAULT_SETTINGS = SolverSettings()


# ---------------------------------------------------------------------------
# constraints
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoxConstraints:
    """Bounds on value dofs of the nodes selected by ``node_mask``.

    ``lower`` and ``upper`` are per-node arrays aligned with the flat node
    order; entries outside the mask are ignored.  Bounds must bracket zero
    (the rest state is always admissible); a node with lower == upper is
    pinned.
    """

    node_mask: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "node_mask", np.asarray(self.node_mask, dtype=bool))
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        m = self.node_mask
        if self.lower.shape != m.shape or self.upper.shape != m.shape:
            raise ValueError("bounds must align with the node mask")
        if np.any(self.lower[m] > 0.0) or np.any(self.upper[m] < 0.0):
            raise ValueError("obstacles must satisfy lower <= 0 <= upper")

    @classmethod
    def from_obstacle(cls, mesh, obstacle):
        """Nodewise bounds of an ObstacleSpec on its region of the mesh."""
        X, Y = mesh.node_coordinates()
        if obstacle.region == "long_edges":
            mask = np.isclose(np.abs(Y), mesh.half_width, rtol=0.0, atol=1e-12)
        else:
            mask = np.ones(mesh.n_nodes, dtype=bool)
        lower = np.where(mask, obstacle.lower_at(X, Y), -np.inf)
        upper = np.where(mask, obstacle.upper_at(X, Y), np.inf)
        return cls(mask, lower, upper)

    @classmethod
    def unbounded(cls, mesh):
        n = mesh.n_nodes
        return cls(np.zeros(n, dtype=bool), np.full(n, -np.inf), np.full(n, np.inf))


@dataclass
class VISolution:
    """Solution of a box-constrained solve plus optimality certificates."""

    field: DofField
    lower_contact: np.ndarray
    upper_contact: np.ndarray
    multipliers: np.ndarray
    kkt_residual: float
    iterations: int
    converged: bool = True

    @property
    def contact_free(self):
        return not (self.lower_contact.size or self.upper_contact.size)


# ---------------------------------------------------------------------------
# operator wrapper: essential reduction + refined solves
# ---------------------------------------------------------------------------

class PlateOperator:
    """An assembled bilinear form together with the essential constraints.

    Owns the reduction to free dofs, a cached factorization of the scaled
    free block, and extended-precision refinement of every solve.
    """

    def __init__(self, mesh, form):
        self.mesh = mesh
        self.form = form
        self.free = mesh.free_dof_mask()
        self.free_idx = np.flatnonzero(self.free)
        self._pos_of_dof = -np.ones(mesh.n_dofs, dtype=np.int64)
        self._pos_of_dof[self.free_idx] = np.arange(self.free_idx.size)
        csr = form.matrix
        self.k_free = csr[self.free_idx][:, self.free_idx].tocsc()
        self._scale = 1.0 / np.sqrt(self.k_free.diagonal())
        self._lu = None
        self._norm_estimate = float(np.abs(csr).sum(axis=1).max())

    @classmethod
    def build(cls, mesh, params, mask=None):
        """Operator of the base or stiffness-weighted energy."""
        full = assemble_bilinear(mesh, params)
        if mask is None or mask.is_degenerate:
            return cls(mesh, full)
        region = assemble_bilinear(mesh, params, region=mask)
        weighted = full.scaled(mask.alpha) + region.scaled(mask.beta - mask.alpha)
        return cls(mesh, weighted)

    def _factorized(self):
        if self._lu is None:
            s = sp.diags(self._scale)
            self._lu = spla.splu((s @ self.k_free @ s).tocsc())
        return self._lu

    def solve_free(self, rhs_full, refine_steps=2):
        """Solve on the free dofs with all box constraints inactive."""
        lu = self._factorized()
        s = self._scale
        b = rhs_full[self.free_idx]
        x = (s * lu.solve(s * b.astype(float))).astype(LONG)
        full = np.zeros(self.mesh.n_dofs, dtype=LONG)
        for _ in range(refine_steps):
            full[self.free_idx] = x
            r = (rhs_full - self.form.matvec_extended(full))[self.free_idx]
            x = x + (s * lu.solve(s * r.astype(float))).astype(LONG)
        full[self.free_idx] = x
        return full

    def solve_pinned(self, rhs_full, pinned_dofs, pinned_values, refine_steps=0):
        """Solve with some free dofs pinned to prescribed values.

        Returns the full dof vector in extended precision; essential dofs
        stay zero and pinned dofs carry exactly their prescribed values.
        """
        if pinned_dofs.size == 0:
            return self.solve_free(rhs_full, refine_steps=max(refine_steps, 2))
        pin_pos = self._pos_of_dof[pinned_dofs]
        if np.any(pin_pos < 0):
            raise SolverError("cannot pin an essentially constrained dof")
        keep = np.ones(self.free_idx.size, dtype=bool)
        keep[pin_pos] = False
        sub = np.flatnonzero(keep)
        k_sub = self.k_free[sub][:, sub].tocsc()
        s = 1.0 / np.sqrt(k_sub.diagonal())
        lu = spla.splu((sp.diags(s) @ k_sub @ sp.diags(s)).tocsc())

        full = np.zeros(self.mesh.n_dofs, dtype=LONG)
        full[pinned_dofs] = pinned_values.astype(LONG)
        r0 = (rhs_full - self.form.matvec_extended(full))[self.free_idx[sub]]
        x = (s * lu.solve(s * r0.astype(float))).astype(LONG)
        for _ in range(refine_steps):
            full[self.free_idx[sub]] = x
            r = (rhs_full - self.form.matvec_extended(full))[self.free_idx[sub]]
            x = x + (s * lu.solve(s * r.astype(float))).astype(LONG)
        full[self.free_idx[sub]] = x
        return full

    def residual_scale(self, rhs_full, x=None):
        """Backward-stable normalization |b| + |K| |x| for relative residuals."""
        scale = float(np.max(np.abs(rhs_full.astype(float))))
        if x is not None:
            scale += self._norm_estimate * float(
                np.max(np.abs(np.asarray(x, dtype=float))))
        return max(scale, 1e-300)


# ---------------------------------------------------------------------------
# solves
# ---------------------------------------------------------------------------

def solve_linear(operator, rhs, settings=DEFAULT_SETTINGS):
    """Unconstrained Galerkin solve; relative residual certified <= 1e-10."""
    x = operator.solve_free(rhs, refine_steps=max(settings.refine_steps, 2))
    r = (rhs - operator.form.matvec_extended(x))[operator.free_idx]
    rel = float(np.max(np.abs(r.astype(float)))) / operator.residual_scale(rhs, x)
    if not np.isfinite(rel) or rel > 1e-10:
        raise SolverError(f"linear solve residual {rel:.3e} above 1e-10; "
                          "operator may be singular")
    return DofField(operator.mesh, x.astype(float))


def _box_dof_arrays(operator, constraints):
    """Constrained value-dof indices with their bounds, essential dofs excluded."""
    mesh = operator.mesh
    nodes = np.flatnonzero(constraints.node_mask)
    dofs = 4 * nodes + DOF_VALUE
    ok = operator.free[dofs]
    nodes, dofs = nodes[ok], dofs[ok]
    return dofs, constraints.lower[nodes], constraints.upper[nodes]


def solve_obstacle(operator, rhs, constraints, settings=DEFAULT_SETTINGS,
                   warm_start=None):
    """Two-sided obstacle solve by a monotone primal active set iteration.

    Iterates stay feasible: each step solves the equality problem with the
    current contact set pinned to its bounds, moves along the resulting
    direction until the first blocking bound (adding every node that hits
    one), and at a contact-set optimum releases the single worst wrong-sign
    multiplier.  Energy descends monotonically, the loop terminates finitely,
    and a multiplier of exactly zero classifies its node inactive.  With no
    binding bound the result coincides with the unconstrained solve on the
    same data.
    """
    dofs, lo, hi = _box_dof_arrays(operator, constraints)
    if np.any(lo > hi):
        raise ValueError("infeasible box: lower bound above upper bound")

    n_c = dofs.size
    pinned_eq = lo == hi  # degenerate boxes pin the dof for good
    act_lo = pinned_eq.copy()
    act_hi = np.zeros(n_c, dtype=bool)
    x = np.zeros(operator.mesh.n_dofs, dtype=LONG)
    if warm_start is not None:
        start = warm_start.dofs.copy()
        start[~operator.free] = 0.0
        start[dofs] = np.clip(start[dofs], lo, hi)
        x = start.astype(LONG)
        vals = start[dofs]
        act_lo = (np.isfinite(lo) & (vals <= lo)) | pinned_eq
        act_hi = np.isfinite(hi) & (vals >= hi) & ~act_lo

    def subspace_solve(refine):
        pinned = np.concatenate([dofs[act_lo], dofs[act_hi]])
        pinned_vals = np.concatenate([lo[act_lo], hi[act_hi]])
        return operator.solve_pinned(rhs, pinned, pinned_vals, refine_steps=refine)

    last_residual = np.inf
    for it in range(1, settings.max_iterations + 1):
        x_star = subspace_solve(settings.refine_steps)
        inactive = ~(act_lo | act_hi)
        d = (x_star - x).astype(float)[dofs]
        vals = x.astype(float)[dofs]
        # largest feasible step along d over the inactive constrained dofs
        t = np.full(n_c, np.inf)
        up = inactive & (d > 0.0) & np.isfinite(hi)
        dn = inactive & (d < 0.0) & np.isfinite(lo)
        t[up] = (hi[up] - vals[up]) / d[up]
        t[dn] = (lo[dn] - vals[dn]) / d[dn]
        t = np.maximum(t, 0.0)
        alpha = min(1.0, float(t.min(initial=np.inf)))

        if alpha < 1.0:
            blocked = t <= alpha * (1.0 + 1e-12)
            x = x + LONG(alpha) * (x_star - x)
            new_hi = blocked & up
            new_lo = blocked & dn
            x[dofs[new_hi]] = hi[new_hi].astype(LONG)
            x[dofs[new_lo]] = lo[new_lo].astype(LONG)
            act_hi |= new_hi
            act_lo |= new_lo
            continue

        # contact-set optimum reached; check multiplier signs
        x = x_star
        resid = (rhs - operator.form.matvec_extended(x)).astype(float)
        lam = resid[dofs]
        wrong_hi = act_hi & ~pinned_eq & (lam < 0.0)
        wrong_lo = act_lo & ~pinned_eq & (lam > 0.0)
        last_residual = float(np.max(np.abs(
            np.concatenate([lam[wrong_hi], lam[wrong_lo], [0.0]])))
        ) / operator.residual_scale(rhs, x)
        if not (np.any(wrong_hi) or np.any(wrong_lo)):
            break
        # release the single worst offender, lowest node index on ties
        badness = np.where(wrong_hi | wrong_lo, np.abs(lam), -np.inf)
        k = int(np.argmax(badness))
        act_hi[k] = False
        act_lo[k] = False
    else:
        raise IterationLimitError(
            f"active set did not settle in {settings.max_iterations} iterations",
            last_residual)

    # final polish on the settled active set
    pinned = np.concatenate([dofs[act_lo], dofs[act_hi]])
    pinned_vals = np.concatenate([lo[act_lo], hi[act_hi]])
    x = operator.solve_pinned(rhs, pinned, pinned_vals,
                              refine_steps=max(settings.refine_steps, 2))
    resid = (rhs - operator.form.matvec_extended(x)).astype(float)
    lam = np.zeros(n_c)
    lam[act_lo | act_hi] = resid[dofs[act_lo | act_hi]]
    # degenerate pins report the side their multiplier points to
    swap = pinned_eq & act_lo & (lam > 0.0)
    act_hi |= swap
    act_lo &= ~swap
    # a multiplier of exactly zero on the active-set boundary means inactive
    act_lo &= lam != 0.0
    act_hi &= lam != 0.0

    field = DofField(operator.mesh, x.astype(float))
    nodes = dofs // 4
    multipliers = np.zeros(operator.mesh.n_nodes)
    multipliers[nodes] = lam
    mask_stat = np.ones(operator.free_idx.size, dtype=bool)
    mask_stat[operator._pos_of_dof[dofs[act_lo | act_hi]]] = False
    stat = (float(np.max(np.abs(resid[operator.free_idx][mask_stat])))
            / operator.residual_scale(rhs, x)) if np.any(mask_stat) else 0.0
    if stat > settings.tol:
        raise SolverError(f"stationarity residual {stat:.3e} above tol {settings.tol}")
    return VISolution(field=field,
                      lower_contact=np.sort(nodes[act_lo]),
                      upper_contact=np.sort(nodes[act_hi]),
                      multipliers=multipliers,
                      kkt_residual=stat,
                      iterations=it)


def solve_reinforced(mesh, params, mask, rhs, constraints,
                     settings=DEFAULT_SETTINGS, operator=None):
    """Obstacle solve with the stiffness-weighted form alpha*(.,.) + (b-a)*(.,.)_D."""
    op = operator if operator is not None else PlateOperator.build(mesh, params, mask=mask)
    return solve_obstacle(op, rhs, constraints, settings=settings)


def solve_densityweighted(operator, load, mask, constraints,
                          settings=DEFAULT_SETTINGS):
    """Obstacle solve with the load density multiplied by beta on D, alpha off D."""
    if load.density is None:
        raise ValueError("density-weighted solve needs a load with a density part")
    if load.point_masses:
        raise ValueError("density-weighted solve rejects point masses")
    rhs = assemble_load(operator.mesh, load, weight=mask)
    return solve_obstacle(operator, rhs, constraints, settings=settings)


def kkt_report(solution, operator, rhs, constraints):
    """Stationarity, complementarity and feasibility residuals of a solve."""
    dofs, lo, hi = _box_dof_arrays(operator, constraints)
    nodes = dofs // 4
    x = solution.field.dofs
    resid = rhs.astype(float) - operator.form.matrix @ x
    lam = solution.multipliers[nodes]
    contact = np.isin(nodes, solution.lower_contact) | np.isin(nodes, solution.upper_contact)
    scale = operator.residual_scale(rhs, x)

    stat_res = resid[operator.free_idx].copy()
    pos = operator._pos_of_dof[dofs[contact]]
    stat_res[pos] -= lam[contact]
    stationarity = float(np.max(np.abs(stat_res))) / scale if stat_res.size else 0.0

    vals = x[dofs]
    up_gap = np.where(np.isfinite(hi), hi - vals, np.inf)
    lo_gap = np.where(np.isfinite(lo), vals - lo, np.inf)
    feasibility = float(max(0.0, np.max(np.maximum(-up_gap, -lo_gap), initial=0.0)))
    comp_up = np.abs(np.maximum(lam, 0.0) * np.where(np.isfinite(hi), up_gap, 0.0))
    comp_lo = np.abs(np.minimum(lam, 0.0) * np.where(np.isfinite(lo), lo_gap, 0.0))
    complementarity = float(np.max(np.concatenate([comp_up, comp_lo]), initial=0.0)) / scale
    return {
        "stationarity": stationarity,
        "complementarity": complementarity,
        "feasibility": feasibility,
        "iterations": solution.iterations,
    }


def solution_to_json(solution, operator, rhs, constraints, path=None, extra=None):
    """JSON summary of a solve: contact sets, certificates, energy."""
    report = kkt_report(solution, operator, rhs, constraints)
    x = solution.field.dofs
    energy = 0.5 * float(x @ (operator.form.matrix @ x)) - float(rhs.astype(float) @ x)
    payload = {
        "contact_lower": [int(n) for n in solution.lower_contact],
        "contact_upper": [int(n) for n in solution.upper_contact],
        "kkt": report,
        "energy": energy,
        "sup_norm": solution.field.sup_norm(),
        "iterations": solution.iterations,
    }
    if extra:
        payload.update(extra)
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return payload
