"""Damped Newton solver for the nodewise eigenvalue-sum equation.

Solves ``F_m[discrete complex Hessian of u] = G(z, u)`` on ball grids with
Dirichlet boundary data and the periodic analogue ``F_m[chi + Hessian] =
G(z, u)`` on torus grids.  The Newton linearization at a node combines the
diagonal derivative formula of the operator, transported through the nodal
eigenbasis, with the finite-difference stencil weights; steps are damped by
halving until every node's Hessian keeps a strictly positive minimal m-fold
eigenvalue sum.  An optional homotopy interpolates from the exactly known
subsolution ``C(|z|^2 - r^2) + f`` to the target equation.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .errors import (
    ChiNotPositive,
    ConeEscape,
    DimensionMismatchError,
    IllPosedRHS,
    NewtonDiverged,
)
from .fm import fm_gradient_diagonal, geometric_mean_clamped
from .grids import (
    BALL,
    TORUS,
    GridDomain,
    GridFunction,
    MetricField,
    relative_lambda_stack,
    stencil,
)
from .hermitian import HermitianMatrix
from .multiindex import subset_sums

# exponent window for exponential right-hand sides; the upper clamp only
# affects transient Newton states, the lower one avoids spurious zero slopes
EXP_CLAMP_LO = -500.0
EXP_CLAMP_HI = 40.0


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-9
    max_iterations: int = 100
    t_steps: int = 8
    cone_floor: float = 1e-10
    damping_min_step: float = 2.0 ** -20
    initial: GridFunction = None
    subsolution_constant: float = None  # auto-doubled when None
    record_history: bool = False

    def to_json(self) -> dict:
        return {
            "tolerance": self.tolerance,
            "max_iterations": self.max_iterations,
            "t_steps": self.t_steps,
            "cone_floor": self.cone_floor,
            "damping_min_step": self.damping_min_step,
        }


@dataclass(frozen=True)
class RightHandSide:
    """Positive right-hand side G(z, t) increasing in t.

    ``evaluator(coords, t, flat_idx)`` returns (G, dG/dt) as arrays; ball
    solves require dG/dt strictly positive, torus solves may relax to
    non-negative by setting ``allow_flat_slope`` (caller supplies the
    well-posedness argument).
    """

    evaluator: callable
    reference: GridFunction = None
    beta: float = None
    allow_flat_slope: bool = False

    def __call__(self, coords, t, flat_idx, strict=True):
        G, dG = self.evaluator(coords, np.asarray(t, dtype=float), flat_idx)
        G = np.asarray(G, dtype=float)
        dG = np.asarray(dG, dtype=float)
        if not np.isfinite(G).all() or not np.isfinite(dG).all():
            raise IllPosedRHS("right-hand side returned non-finite values")
        if (G <= 0.0).any():
            raise IllPosedRHS("right-hand side must be strictly positive")
        if strict and not self.allow_flat_slope:
            if (dG <= 0.0).any():
                raise IllPosedRHS("right-hand side must be increasing in t")
        elif (dG < 0.0).any():
            raise IllPosedRHS("right-hand side slope must be non-negative")
        return G, dG

    @classmethod
    def scaled_exponential(cls, amplitude, shift) -> "RightHandSide":
        """G(z, t) = amplitude(z) * exp(t - shift(z)).

        ``amplitude`` and ``shift`` map coordinate arrays (K, 2n) to (K,).
        """

        def evaluator(coords, t, idx):
            a = np.asarray(amplitude(coords), dtype=float)
            e = np.exp(np.clip(t - np.asarray(shift(coords), dtype=float),
                               EXP_CLAMP_LO, EXP_CLAMP_HI))
            return a * e, a * e

        return cls(evaluator=evaluator)

    @classmethod
    def manufactured_quadratic(cls, m: int) -> "RightHandSide":
        """G(z, t) = m * exp(t - |z|^2); the squared norm solves the equation."""
        return cls.scaled_exponential(
            lambda c: np.full(c.shape[0], float(m)),
            lambda c: (c ** 2).sum(axis=-1),
        )

    @classmethod
    def penalized_distance(cls, beta: float, reference: GridFunction,
                           floor_scale: float = 1.0) -> "RightHandSide":
        """G(z, t) = exp(beta (t - f(z))) + floor_scale / (2 beta)."""
        if not beta > math.e:
            raise IllPosedRHS(f"penalty parameter must exceed e, got {beta}")
        ref_flat = reference.flat

        def evaluator(coords, t, idx):
            e = np.exp(np.clip(beta * (t - ref_flat[idx]),
                               EXP_CLAMP_LO, EXP_CLAMP_HI))
            return e + floor_scale / (2.0 * beta), beta * e

        return cls(evaluator=evaluator, reference=reference, beta=beta)

    @classmethod
    def penalized_corridor(cls, beta: float, reference: GridFunction,
                           corridor: GridFunction,
                           background_value: float) -> "RightHandSide":
        """G(z, t) = exp(beta (t - f(z))) * corridor(z) + background/(2 beta)."""
        if not beta > math.e:
            raise IllPosedRHS(f"penalty parameter must exceed e, got {beta}")
        if not background_value > 0:
            raise IllPosedRHS("background operator value must be positive")
        ref_flat = reference.flat
        cor_flat = corridor.flat
        if (cor_flat <= 0).any():
            raise IllPosedRHS("corridor field must be strictly positive")

        def evaluator(coords, t, idx):
            e = np.exp(np.clip(beta * (t - ref_flat[idx]),
                               EXP_CLAMP_LO, EXP_CLAMP_HI))
            c = cor_flat[idx]
            return e * c + background_value / (2.0 * beta), beta * e * c

        return cls(evaluator=evaluator, reference=reference, beta=beta)


@dataclass(frozen=True)
class SolveReport:
    solution: GridFunction
    iterations: int
    final_residual: float
    min_cone_margin: float
    max_principle_gap: float
    residual_history: tuple = ()

    def to_json(self) -> dict:
        return {
            "iterations": int(self.iterations),
            "final_residual": float(self.final_residual),
            "min_cone_margin": float(self.min_cone_margin),
            "max_principle_gap": (None if np.isnan(self.max_principle_gap)
                                  else float(self.max_principle_gap)),
        }


class _FmOperator:
    """Vectorized residual/Jacobian assembly over the evaluation nodes."""

    def __init__(self, domain: GridDomain, g: MetricField, m: int,
                 chi: HermitianMatrix = None):
        if g.domain != domain:
            raise DimensionMismatchError("metric field lives on a different grid")
        self.domain = domain
        self.g = g
        self.m = m
        self.n = domain.n
        self.chi = chi
        offsets, weights = stencil(domain.n)
        self.weights = weights / domain.spacing ** 2
        self.nodes = np.flatnonzero(domain.interior_mask)
        self.neighbors = domain.neighbor_indices(self.nodes)  # (S, K)
        self.coords = domain.coords[self.nodes]
        # unknowns: interior nodes (ball) or every node (torus)
        self.unknown_of_flat = np.full(domain.node_count, -1, dtype=np.int64)
        self.unknown_of_flat[self.nodes] = np.arange(self.nodes.size)
        self.Cinv = g.cholesky_inverse_at(self.nodes)  # (K, n, n)
        self.CinvH = np.conj(np.swapaxes(self.Cinv, -1, -2))
        self._chi_arr = None if chi is None else chi.entries

    # -- fields over the evaluation nodes ---------------------------------
    def hessians(self, u_flat: np.ndarray) -> np.ndarray:
        vals = u_flat[self.neighbors]  # (S, K)
        H = np.tensordot(vals.T, self.weights, axes=(1, 0))
        H = 0.5 * (H + np.conj(np.swapaxes(H, -1, -2)))
        if self._chi_arr is not None:
            H = H + self._chi_arr
        return H

    def eigensystem(self, u_flat: np.ndarray):
        H = self.hessians(u_flat)
        M = self.Cinv @ H @ self.CinvH
        M = 0.5 * (M + np.conj(np.swapaxes(M, -1, -2)))
        return np.linalg.eigh(M)

    def sigma(self, u_flat: np.ndarray) -> np.ndarray:
        H = self.hessians(u_flat)
        M = self.Cinv @ H @ self.CinvH
        M = 0.5 * (M + np.conj(np.swapaxes(M, -1, -2)))
        lam = np.linalg.eigvalsh(M)
        return subset_sums(lam, self.m)

    def min_margin(self, u_flat: np.ndarray) -> float:
        return float(self.sigma(u_flat).min())

    def fm_and_margin(self, u_flat: np.ndarray):
        sums = self.sigma(u_flat)
        margin = float(sums.min())
        if margin <= 0.0:
            return None, margin
        values = geometric_mean_clamped(sums)
        return values, margin

    def residual(self, u_flat, rhs: RightHandSide, homotopy=None):
        """F_m[u] - G(z, u) at the evaluation nodes; None if out of cone.

        ``homotopy = (t, base_field)`` blends the right-hand side as
        t*G + (1-t)*base_field.
        """
        fm, margin = self.fm_and_margin(u_flat)
        if fm is None:
            return None, margin
        t_vals = u_flat[self.nodes]
        G, _ = rhs(self.coords, t_vals, self.nodes,
                   strict=self.domain.kind == BALL)
        if homotopy is not None:
            t, base = homotopy
            G = t * G + (1.0 - t) * base
        return fm - G, margin

    def jacobian(self, u_flat, rhs: RightHandSide, homotopy=None):
        lam, V = self.eigensystem(u_flat)
        grad = fm_gradient_diagonal(lam, self.m)  # (K, n)
        B = self.CinvH @ V  # pencil eigenbasis columns
        M = np.einsum("kpi,ki,kqi->kpq", B, grad, np.conj(B))
        t_vals = u_flat[self.nodes]
        _, dG = rhs(self.coords, t_vals, self.nodes,
                    strict=self.domain.kind == BALL)
        if homotopy is not None:
            dG = homotopy[0] * dG
        K = self.nodes.size
        rows, cols, vals = [], [], []
        rowidx = np.arange(K)
        for s in range(self.weights.shape[0]):
            W = self.weights[s]
            entry = np.einsum("kpq,qp->k", M, W).real
            col_unknown = self.unknown_of_flat[self.neighbors[s]]
            if (self.neighbors[s] == self.nodes).all():
                entry = entry - dG
            valid = col_unknown >= 0
            rows.append(rowidx[valid])
            cols.append(col_unknown[valid])
            vals.append(entry[valid])
        J = scipy.sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(K, K),
        )
        return J.tocsr()


# direct factorization below this many unknowns; Krylov above (high-dimensional
# periodic stencils make direct fill-in prohibitive)
DIRECT_SOLVE_LIMIT = 8000


def _check_linear_residual(J, delta, r, denom):
    return float(np.abs(J @ delta + r).max()) <= 1e-10 * denom


def _linear_solve(J, r):
    denom = max(float(np.abs(r).max()), 1e-300)
    K = J.shape[0]
    if K <= DIRECT_SOLVE_LIMIT:
        delta = scipy.sparse.linalg.spsolve(J, -r)
        if _check_linear_residual(J, delta, r, denom):
            return delta
        # one step of iterative refinement before giving up
        delta = delta + scipy.sparse.linalg.spsolve(J, -(J @ delta + r))
        if _check_linear_residual(J, delta, r, denom):
            return delta
        raise NewtonDiverged("direct linear solve residual exceeds contract")
    diag = J.diagonal()
    if (diag != 0.0).all():
        jacobi = scipy.sparse.linalg.LinearOperator(J.shape, lambda x: x / diag)
        delta, info = scipy.sparse.linalg.bicgstab(
            J, -r, M=jacobi, rtol=1e-13, atol=1e-14 * denom, maxiter=1000
        )
        if info == 0 and _check_linear_residual(J, delta, r, denom):
            return delta
    ilu = scipy.sparse.linalg.spilu(J.tocsc(), drop_tol=1e-5, fill_factor=12.0)
    prec = scipy.sparse.linalg.LinearOperator(J.shape, ilu.solve)
    delta, info = scipy.sparse.linalg.bicgstab(
        J, -r, M=prec, rtol=1e-12, atol=1e-14 * denom, maxiter=400
    )
    if info == 0 and _check_linear_residual(J, delta, r, denom):
        return delta
    delta, info = scipy.sparse.linalg.gmres(
        J, -r, M=prec, rtol=1e-12, atol=1e-14 * denom, restart=80, maxiter=400
    )
    if info == 0 and _check_linear_residual(J, delta, r, denom):
        return delta
    raise NewtonDiverged("Krylov linear solve failed the residual contract")


def _newton(op: _FmOperator, rhs: RightHandSide, u0_flat: np.ndarray,
            cfg: SolverConfig, homotopy=None):
    u = u0_flat.copy()
    margin0 = op.min_margin(u)
    if margin0 <= cfg.cone_floor:
        raise ConeEscape(
            f"initial iterate has cone margin {margin0:.3e}, below the floor"
        )
    r, margin = op.residual(u, rhs, homotopy)
    rnorm = float(np.abs(r).max())
    history = [rnorm]
    for it in range(cfg.max_iterations):
        if rnorm <= cfg.tolerance:
            return u, it, rnorm, margin, history
        J = op.jacobian(u, rhs, homotopy)
        delta_unknown = _linear_solve(J, r)
        step = 1.0
        cone_blocked = True
        while step >= cfg.damping_min_step:
            trial = u.copy()
            trial[op.nodes] += step * delta_unknown
            m_trial = op.min_margin(trial)
            if m_trial > cfg.cone_floor:
                cone_blocked = False
                r_trial, _ = op.residual(trial, rhs, homotopy)
                r_trial_norm = float(np.abs(r_trial).max())
                if r_trial_norm < rnorm:
                    u, r, rnorm, margin = trial, r_trial, r_trial_norm, m_trial
                    break
            step *= 0.5
        else:
            if cone_blocked:
                raise ConeEscape(
                    "no damping step keeps the iterate strictly inside the cone"
                )
            raise NewtonDiverged(
                f"no damped step reduced the residual below {rnorm:.3e}"
            )
        history.append(rnorm)
    if rnorm <= cfg.tolerance:
        return u, cfg.max_iterations, rnorm, margin, history
    raise NewtonDiverged(
        f"residual {rnorm:.3e} above tolerance {cfg.tolerance:.1e} "
        f"after {cfg.max_iterations} iterations"
    )


def _max_principle_gap(domain: GridDomain, u_flat, f: GridFunction) -> float:
    if domain.kind != BALL:
        return float("nan")
    sup_boundary = float(f.flat[domain.boundary_mask].max())
    sup_interior = float(u_flat[domain.interior_mask].max())
    return sup_interior - sup_boundary


def subsolution_seed(f: GridFunction, g: MetricField, m: int,
                     C: float = None, cone_floor: float = 1e-10):
    """Seed C(|z|^2 - r^2) + f, doubling C until strictly in the cone."""
    domain = f.domain
    if domain.kind != BALL:
        raise DimensionMismatchError("the subsolution seed is a ball construction")
    op = _FmOperator(domain, g, m)
    bump = domain.norms_squared - domain.radius ** 2
    if C is not None:
        u = f.flat + C * bump
        if op.min_margin(u) <= max(cone_floor, 1e-10):
            raise ConeEscape(
                f"supplied subsolution constant {C} is not strictly admissible"
            )
        return GridFunction(domain, u), C
    C = 1.0
    while C < 2.0 ** 60:
        u = f.flat + C * bump
        if op.min_margin(u) > max(cone_floor * 10.0, 1e-8):
            return GridFunction(domain, u), C
        C *= 2.0
    raise ConeEscape("no doubling of the subsolution constant entered the cone")


def solve_dirichlet(f: GridFunction, rhs: RightHandSide, g: MetricField,
                    m: int, cfg: SolverConfig = SolverConfig()) -> SolveReport:
    """Solve the nodewise equation on a ball with boundary values from f."""
    domain = f.domain
    if domain.kind != BALL:
        raise DimensionMismatchError("solve_dirichlet expects a ball grid")
    op = _FmOperator(domain, g, m)
    if cfg.initial is not None:
        u0 = cfg.initial.flat.copy()
    else:
        seed, _ = subsolution_seed(f, g, m, cfg.subsolution_constant,
                                   cfg.cone_floor)
        u0 = seed.flat.copy()
    u0[domain.boundary_mask] = f.flat[domain.boundary_mask]
    u, iters, rnorm, margin, history = _newton(op, rhs, u0, cfg)
    sol = GridFunction(domain, np.where(domain.exterior_mask, 0.0, u))
    return SolveReport(
        solution=sol,
        iterations=iters,
        final_residual=rnorm,
        min_cone_margin=margin,
        max_principle_gap=_max_principle_gap(domain, u, f),
        residual_history=tuple(history) if cfg.record_history else (),
    )


def solve_torus(chi: HermitianMatrix, rhs: RightHandSide, g: MetricField,
                m: int, cfg: SolverConfig = SolverConfig()) -> SolveReport:
    """Solve the periodic equation for the chi-shifted Hessian."""
    domain = g.domain
    if domain.kind != TORUS:
        raise DimensionMismatchError("solve_torus expects a torus grid")
    if chi.dim != domain.n:
        raise DimensionMismatchError("background form dimension mismatch")
    # strict positivity of the background form (everywhere, for node metrics)
    probe_nodes = np.array([0]) if g.is_constant \
        else np.arange(domain.node_count)
    chi_lam = relative_lambda_stack(
        np.broadcast_to(chi.entries, (probe_nodes.size, chi.dim, chi.dim)),
        g, probe_nodes,
    )
    chi_margin = float(subset_sums(chi_lam, m).min())
    if chi_margin <= 0.0:
        raise ChiNotPositive(
            f"background form has minimal m-sum {chi_margin:.3e} <= 0"
        )
    op = _FmOperator(domain, g, m, chi=chi)
    if cfg.initial is not None:
        u0 = cfg.initial.flat.copy()
    elif rhs.reference is not None:
        u0 = np.full(domain.node_count, float(rhs.reference.flat.min()))
    else:
        u0 = np.zeros(domain.node_count)
    u, iters, rnorm, margin, history = _newton(op, rhs, u0, cfg)
    return SolveReport(
        solution=GridFunction(domain, u),
        iterations=iters,
        final_residual=rnorm,
        min_cone_margin=margin,
        max_principle_gap=float("nan"),
        residual_history=tuple(history) if cfg.record_history else (),
    )


def continuity_path(f: GridFunction, rhs: RightHandSide, g: MetricField,
                    m: int, cfg: SolverConfig = SolverConfig(),
                    t_steps: int = None) -> SolveReport:
    """Homotopy from the exact subsolution seed to the target equation.

    Solves the blend ``F_m = t G + (1 - t) F_m[seed]`` on a uniform t-grid,
    warm-starting each stage; the t = 0 stage is exact by construction and
    ``t_steps = 1`` degenerates to direct Newton from the seed.
    """
    domain = f.domain
    if domain.kind != BALL:
        raise DimensionMismatchError("continuity_path expects a ball grid")
    if t_steps is None:
        t_steps = cfg.t_steps
    if t_steps < 1:
        raise DimensionMismatchError("need at least one homotopy step")
    op = _FmOperator(domain, g, m)
    seed, C = subsolution_seed(f, g, m, cfg.subsolution_constant, cfg.cone_floor)
    u = seed.flat.copy()
    u[domain.boundary_mask] = f.flat[domain.boundary_mask]
    base, margin = op.fm_and_margin(u)
    iters_total = 0
    rnorm = 0.0
    history = []
    for t in np.linspace(0.0, 1.0, t_steps + 1)[1:]:
        try:
            u, iters, rnorm, margin, h = _newton(op, rhs, u, cfg,
                                                 homotopy=(float(t), base))
        except (NewtonDiverged, ConeEscape) as exc:
            exc.t_failed = float(t)
            exc.args = (f"{exc.args[0]} (homotopy stage t={t:.3f})",)
            raise
        iters_total += iters
        history.extend(h)
    sol = GridFunction(domain, np.where(domain.exterior_mask, 0.0, u))
    return SolveReport(
        solution=sol,
        iterations=iters_total,
        final_residual=rnorm,
        min_cone_margin=margin,
        max_principle_gap=_max_principle_gap(domain, u, f),
        residual_history=tuple(history) if cfg.record_history else (),
    )


def max_principle_check(report: SolveReport, f: GridFunction) -> float:
    """Sup over interior nodes of u minus the boundary sup of f.

    Non-positive (within 1e-8) certifies the discrete maximum principle.
    """
    domain = report.solution.domain
    if domain.kind != BALL:
        raise DimensionMismatchError("the maximum principle check needs a ball solve")
    return _max_principle_gap(domain, report.solution.flat, f)
