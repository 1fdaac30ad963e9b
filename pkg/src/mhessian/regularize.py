"""Monotone smooth approximation pipelines on ball and torus grids.

Both pipelines approximate an upper semi-continuous admissible target from
above by smooth strictly cone-interior iterates.  The ball pipeline solves
penalized Dirichlet problems against a decreasing sequence of smooth upper
approximants and shifts each solution by explicit correction terms; the
torus pipeline solves the periodic penalized equation against a corridor
field built from the clamped operator value of each approximant.  In both
cases a greedy index selection turns the corrected solutions into a
nodewise nonincreasing sequence squeezed onto the target.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ChiNotPositive,
    ConeEscape,
    DimensionMismatchError,
    DirichletFailure,
    NewtonDiverged,
    ScheduleExhausted,
    TargetNotAdmissible,
)
from .fm import fm_value
from .grids import BALL, TORUS, GridDomain, GridFunction, MetricField, \
    cone_field, fm_field
from .hermitian import HermitianMatrix
from .solver import RightHandSide, SolverConfig, solve_dirichlet, solve_torus, \
    subsolution_seed

# nodes at or below this value model negative infinity on the grid
NEG_INFINITY_FLOOR = -1e6
# admissibility tolerance for sampled cone membership of targets
TARGET_CONE_TOL = 1e-6
MONOTONE_TOL = 1e-12


@dataclass(frozen=True)
class ApproximationSchedule:
    """Smooth upper approximants with penalty parameters and constants."""

    f_sequence: tuple
    beta_schedule: tuple
    c_constants: tuple = None
    subsolution_constant: float = None
    radius: float = None

    def __post_init__(self):
        fs = tuple(self.f_sequence)
        betas = tuple(float(b) for b in self.beta_schedule)
        if len(fs) == 0 or len(fs) != len(betas):
            raise DimensionMismatchError(
                "need one penalty parameter per approximant"
            )
        for b in betas:
            if not b > math.e:
                raise DimensionMismatchError(
                    f"penalty parameters must exceed e, got {b}"
                )
        usable = ~fs[0].domain.exterior_mask
        for k, f in enumerate(fs):
            if float(f.flat[usable].max()) > -1.0 + 1e-9:
                raise DimensionMismatchError(
                    f"approximant {k} violates the sup <= -1 normalization"
                )
            if k > 0 and (fs[k].flat[usable]
                          > fs[k - 1].flat[usable] + MONOTONE_TOL).any():
                raise DimensionMismatchError(
                    f"approximant sequence increases at index {k}"
                )
        object.__setattr__(self, "f_sequence", fs)
        object.__setattr__(self, "beta_schedule", betas)

    def __len__(self):
        return len(self.f_sequence)

    @classmethod
    def geometric(cls, f_sequence, beta_start: float = 10.0,
                  growth: float = 2.0, radius: float = None,
                  subsolution_constant: float = None):
        betas = [beta_start * growth ** k for k in range(len(f_sequence))]
        return cls(f_sequence=tuple(f_sequence), beta_schedule=tuple(betas),
                   radius=radius, subsolution_constant=subsolution_constant)


@dataclass(frozen=True)
class RegularizationResult:
    """Monotone approximation run: iterates plus verification data."""

    u_sequence: tuple
    monotone_gap: float
    lower_gap: float
    sup_deviation: tuple
    indices: tuple
    cone_margins: tuple
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ConvergenceReport:
    monotone_gap: float
    lower_gap: float
    sup_deviations: tuple
    deviations_nonincreasing: bool
    passed: bool
    violation_node: tuple = None


def _inside(domain: GridDomain) -> np.ndarray:
    return ~domain.exterior_mask


def _smooth_pass(values: np.ndarray, domain: GridDomain) -> np.ndarray:
    """Average each node with its axis neighbors where the full axis star
    stays inside; other nodes keep their value."""
    v = values.reshape(domain.shape)
    acc = np.zeros_like(v)
    ok = np.ones(domain.shape, dtype=bool)
    inside = _inside(domain).reshape(domain.shape)
    pp = domain.points_per_axis
    for axis in range(2 * domain.n):
        if domain.kind == TORUS:
            acc += np.roll(v, 1, axis) + np.roll(v, -1, axis)
        else:
            up = np.roll(v, -1, axis)
            dn = np.roll(v, 1, axis)
            idx = np.arange(pp)
            shape = [1] * (2 * domain.n)
            shape[axis] = pp
            edge_lo = (idx == 0).reshape(shape)
            edge_hi = (idx == pp - 1).reshape(shape)
            ok &= ~edge_lo & ~edge_hi
            ok &= np.roll(inside, 1, axis) & np.roll(inside, -1, axis)
            acc += up + dn
    mean = 0.5 * v + 0.5 * acc / (4 * domain.n)
    return np.where(ok & inside, mean, v).ravel()


def _sup_convolve(values: np.ndarray, domain: GridDomain,
                  eps: float) -> np.ndarray:
    """Quadratic sup-convolution, separable across the 2n axes."""
    out = values.reshape(domain.shape).copy()
    x = domain.axis
    diff = np.abs(x[:, None] - x[None, :])
    if domain.kind == TORUS:
        diff = np.minimum(diff, 1.0 - diff)
    penalty = diff ** 2 / (2.0 * eps)
    for axis in range(2 * domain.n):
        arr = np.moveaxis(out, axis, -1)
        arr = np.max(arr[..., None, :] - penalty, axis=-1)
        out = np.moveaxis(arr, -1, axis)
    return out.ravel()


def upper_smooth_sequence(target: GridFunction, count: int,
                          eps_start: float = None,
                          smoothing_passes: int = 2,
                          clip_start: float = None,
                          gap_start: float = 0.5) -> list:
    """Nodewise nonincreasing smooth upper approximants of a sampled target.

    Built by quadratic sup-convolution with shrinking radius followed by a
    fixed number of grid smoothing passes and a shrinking strict offset.
    Nodes at or below the negative-infinity floor are clipped at a growing
    cutoff.  Both mechanisms are monotone, so the sequence decreases by
    construction; a final nodewise clamp guards rounding.
    """
    domain = target.domain
    inside = _inside(domain)
    finite_vals = target.flat[inside]
    real_vals = finite_vals[finite_vals > NEG_INFINITY_FLOOR]
    if real_vals.size == 0:
        raise TargetNotAdmissible("target is identically negative infinity")
    if eps_start is None:
        eps_start = (4.0 * domain.spacing) ** 2
    if clip_start is None:
        clip_start = 2.0 * max(1.0, float(np.abs(real_vals).max()))
    base = target.flat.copy()
    if domain.kind == BALL:
        base[~inside] = -1e18  # exterior never wins a sup-convolution
    out = []
    prev = None
    for j in range(count):
        clip = min(clip_start * 2.0 ** j, -NEG_INFINITY_FLOOR)
        eps = eps_start * 0.5 ** j
        vals = np.maximum(base, -clip)
        vals = _sup_convolve(vals, domain, eps)
        for _ in range(smoothing_passes):
            vals = _smooth_pass(vals, domain)
        defect = float(np.max((np.maximum(base, -clip) - vals)[inside],
                              initial=0.0))
        vals = vals + max(0.0, defect) + gap_start * 0.5 ** j
        if prev is not None:
            vals = np.minimum(vals, prev)  # rounding guard, usually inactive
        if domain.kind == BALL:
            vals[~inside] = vals[inside].max()
        out.append(GridFunction(domain, vals))
        prev = vals
    return out


def _check_target(target: GridFunction, g: MetricField, m: int,
                  chi: HermitianMatrix = None):
    domain = target.domain
    inside = _inside(domain)
    if float(target.flat[inside].max()) > -2.0 + 1e-9:
        raise TargetNotAdmissible("target violates the sup <= -2 normalization")
    rep = cone_field(target, g, m, chi=chi, tol=TARGET_CONE_TOL)
    if not rep.all_member:
        raise TargetNotAdmissible(
            f"target fails the sampled cone test (worst margin "
            f"{rep.min_margin:.3e})"
        )


def _check_dominates(schedule: ApproximationSchedule, target: GridFunction):
    inside = _inside(target.domain)
    for k, f in enumerate(schedule.f_sequence):
        if (f.flat[inside] < target.flat[inside] - MONOTONE_TOL).any():
            raise TargetNotAdmissible(
                f"approximant {k} drops below the target somewhere"
            )


def _bump_domination_constant(domain: GridDomain, g: MetricField, m: int) -> float:
    """Smallest doubling constant with C * F_m[Hessian of (|z|^2 - r^2)] >= 1."""
    bump = GridFunction(domain, domain.norms_squared - domain.radius ** 2)
    vals = fm_field(bump, g, m).flat[domain.interior_mask]
    if (vals <= 0.0).any():
        raise ConeEscape("the radial bump is not in the cone for this metric")
    C = 1.0
    while C * float(vals.min()) < 1.0:
        C *= 2.0
        if C > 2.0 ** 60:
            raise ConeEscape("no doubling constant satisfies the bump bound")
    return C


def _assemble(domain, target, solved, shifts, order, margins, diagnostics,
              floor=NEG_INFINITY_FLOOR):
    inside = _inside(domain)
    seq = []
    for j in order:
        seq.append(GridFunction(domain, solved[j].flat + shifts[j]))
    mono = -np.inf
    for a, b in zip(seq, seq[1:]):
        mono = max(mono, float((b.flat - a.flat)[inside].max()))
    lower = max(
        float((target.flat - u.flat)[inside].max()) for u in seq
    )
    finite = inside & (target.flat > floor)
    deviations = tuple(
        float(np.abs(u.flat - target.flat)[finite].max()) for u in seq
    )
    return RegularizationResult(
        u_sequence=tuple(seq),
        monotone_gap=mono if len(seq) > 1 else 0.0,
        lower_gap=lower,
        sup_deviation=deviations,
        indices=tuple(order),
        cone_margins=tuple(margins[j] for j in order),
        diagnostics=diagnostics,
    )


def local_regularize(u: GridFunction, g: MetricField, m: int,
                     schedule: ApproximationSchedule,
                     cfg: SolverConfig = SolverConfig(),
                     iterates: int = 3) -> RegularizationResult:
    """Decreasing smooth strictly cone-interior approximation on a ball.

    Solves the penalized Dirichlet problem for selected schedule indices,
    shifts each solution by its correction terms, and selects indices
    greedily so the shifted solutions decrease nodewise while staying above
    the target.
    """
    domain = u.domain
    if domain.kind != BALL:
        raise DimensionMismatchError("local regularization runs on a ball grid")
    _check_target(u, g, m)
    _check_dominates(schedule, u)
    r = schedule.radius if schedule.radius is not None else domain.radius
    C = schedule.subsolution_constant
    if C is None:
        C = _bump_domination_constant(domain, g, m)
    inside = _inside(domain)
    interior = domain.interior_mask

    solved, shifts, margins = {}, {}, {}
    upper_bound_gaps, lower_bound_gaps, c_consts, mp_gaps = {}, {}, {}, {}

    def solve_index(j):
        f_j = schedule.f_sequence[j]
        beta = schedule.beta_schedule[j]
        rhs = RightHandSide.penalized_distance(beta, f_j)
        try:
            report = solve_dirichlet(f_j, rhs, g, m, cfg)
        except (NewtonDiverged, ConeEscape) as exc:
            raise DirichletFailure(j, exc) from exc
        plus = np.maximum(fm_field(f_j, g, m).flat[interior], 0.0)
        c_j = max(float(plus.max()), math.e)
        sol = report.solution
        shift = 2.0 * C * r ** 2 / beta + math.log(2.0 * beta) / beta
        solved[j] = sol
        shifts[j] = shift
        margins[j] = report.min_cone_margin
        c_consts[j] = c_j
        mp_gaps[j] = report.max_principle_gap
        upper_bound_gaps[j] = float(
            (sol.flat - f_j.flat - math.log(c_j) / beta)[inside].max()
        )
        lower_bound_gaps[j] = float(
            (u.flat - sol.flat - C * r ** 2 / beta
             - math.log(2.0 * beta) / beta)[inside].max()
        )
        return c_j

    def envelope(j):
        f_j = schedule.f_sequence[j]
        beta = schedule.beta_schedule[j]
        plus = np.maximum(fm_field(f_j, g, m).flat[interior], 0.0)
        c_j = max(float(plus.max()), math.e)
        return f_j.flat + (2.0 * C * r ** 2 + math.log(c_j)
                           + math.log(2.0 * beta)) / beta

    order = [0]
    solve_index(0)
    current = solved[0].flat + shifts[0]
    while len(order) < iterates:
        chosen = None
        for j in range(order[-1] + 1, len(schedule)):
            if (envelope(j)[inside] <= current[inside] + MONOTONE_TOL).all():
                chosen = j
                break
        if chosen is None:
            raise ScheduleExhausted(
                f"no admissible index after {order[-1]} for iterate "
                f"{len(order) + 1}; extend the penalty schedule"
            )
        solve_index(chosen)
        order.append(chosen)
        current = solved[chosen].flat + shifts[chosen]

    diagnostics = {
        "upper_bound_gaps": {j: upper_bound_gaps[j] for j in order},
        "lower_bound_gaps": {j: lower_bound_gaps[j] for j in order},
        "c_constants": {j: c_consts[j] for j in order},
        "max_principle_gaps": {j: mp_gaps[j] for j in order},
        "subsolution_constant": C,
        "mode": "local",
    }
    return _assemble(domain, u, solved, shifts, order, margins, diagnostics)


def global_regularize(phi: GridFunction, chi: HermitianMatrix, g: MetricField,
                      m: int, schedule: ApproximationSchedule,
                      cfg: SolverConfig = SolverConfig(),
                      iterates: int = 3) -> RegularizationResult:
    """Decreasing approximation on the torus for a chi-shifted target."""
    domain = phi.domain
    if domain.kind != TORUS:
        raise DimensionMismatchError("global regularization runs on a torus grid")
    if not g.is_constant:
        raise DimensionMismatchError(
            "the torus pipeline supports constant-coefficient metrics only"
        )
    chi_margin = cone_field(
        GridFunction.constant(domain, 0.0), g, m, chi=chi
    ).min_margin
    if not chi_margin > 0:
        raise ChiNotPositive(
            f"background form has minimal m-sum {chi_margin:.3e} <= 0"
        )
    _check_target(phi, g, m, chi=chi)
    _check_dominates(schedule, phi)
    fm_chi = fm_value(chi, g.constant, m).value
    inside = _inside(domain)

    solved, shifts, margins = {}, {}, {}
    sandwich = {}
    c_consts = {}

    def beta_admissible(j):
        f_j = schedule.f_sequence[j]
        beta = schedule.beta_schedule[j]
        plus = np.maximum(fm_field(f_j, g, m, chi=chi).flat, 0.0)
        corridor = np.clip(
            _smooth_pass(plus + 0.75, domain), plus + 0.5, plus + 1.0
        )
        C_j = float(np.log(2.0 * corridor / fm_chi).max())
        needed = -float(f_j.flat.min()) + C_j
        return math.log(beta) > needed, corridor, C_j

    def solve_index(j):
        f_j = schedule.f_sequence[j]
        beta = schedule.beta_schedule[j]
        ok, corridor, C_j = beta_admissible(j)
        rhs = RightHandSide.penalized_corridor(
            beta, f_j, GridFunction(domain, corridor), fm_chi
        )
        try:
            report = solve_torus(chi, rhs, g, m, cfg)
        except (NewtonDiverged, ConeEscape) as exc:
            raise DirichletFailure(j, exc) from exc
        sol = report.solution
        shift = 2.0 * math.log(beta) / beta
        solved[j] = sol
        shifts[j] = shift
        margins[j] = report.min_cone_margin
        c_consts[j] = C_j
        scaled = (1.0 - 1.0 / beta) * phi.flat
        sandwich[j] = {
            "first_gap": float((scaled - phi.flat).min()),
            "middle_slack": float((sol.flat + shift - scaled).min()),
            "third_gap": float((sol.flat - f_j.flat).max()),
        }

    def envelope(j):
        beta = schedule.beta_schedule[j]
        return schedule.f_sequence[j].flat + 2.0 * math.log(beta) / beta

    first = None
    for j in range(len(schedule)):
        if beta_admissible(j)[0]:
            first = j
            break
    if first is None:
        raise ScheduleExhausted(
            "no penalty parameter is large enough for its approximant"
        )
    order = [first]
    solve_index(first)
    current = solved[first].flat + shifts[first]
    while len(order) < iterates:
        chosen = None
        for j in range(order[-1] + 1, len(schedule)):
            if not beta_admissible(j)[0]:
                continue
            if (envelope(j)[inside] <= current[inside] + MONOTONE_TOL).all():
                chosen = j
                break
        if chosen is None:
            raise ScheduleExhausted(
                f"no admissible index after {order[-1]} for iterate "
                f"{len(order) + 1}; extend the penalty schedule"
            )
        solve_index(chosen)
        order.append(chosen)
        current = solved[chosen].flat + shifts[chosen]

    diagnostics = {
        "sandwich": {j: sandwich[j] for j in order},
        "corridor_constants": {j: c_consts[j] for j in order},
        "mode": "global",
    }
    return _assemble(domain, phi, solved, shifts, order, margins, diagnostics)


def verify_monotone_convergence(result: RegularizationResult,
                                target: GridFunction,
                                convergence_target: float = None,
                                gap_tol: float = 1e-8) -> ConvergenceReport:
    """Check monotonicity, domination of the target, and shrinking deviation."""
    domain = target.domain
    inside = _inside(domain)
    seq = result.u_sequence
    mono = 0.0
    violation = None
    for a, b in zip(seq, seq[1:]):
        diff = (b.flat - a.flat)
        worst = float(diff[inside].max())
        if worst > mono:
            mono = worst
            if worst > gap_tol:
                flat = int(np.flatnonzero(inside & (diff >= worst - 1e-15))[0])
                violation = tuple(int(i) for i
                                  in np.unravel_index(flat, domain.shape))
    lower = max(float((target.flat - u.flat)[inside].max()) for u in seq)
    finite = inside & (target.flat > NEG_INFINITY_FLOOR)
    deviations = tuple(float(np.abs(u.flat - target.flat)[finite].max())
                       for u in seq)
    nonincreasing = all(b <= a + gap_tol
                        for a, b in zip(deviations, deviations[1:]))
    passed = mono <= gap_tol and lower <= gap_tol and nonincreasing
    if convergence_target is not None:
        passed = passed and deviations[-1] <= convergence_target
    return ConvergenceReport(
        monotone_gap=mono,
        lower_gap=lower,
        sup_deviations=deviations,
        deviations_nonincreasing=nonincreasing,
        passed=passed,
        violation_node=violation,
    )
