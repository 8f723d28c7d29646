"""Optimal single-letter rates.

The classical backward-channel rate and the quantum-classical rate are linear
programs over their feasibility polytopes (the mutual-information objectives
are affine once the constraints pin the source statistics); both reduce to a
dense two-phase simplex with Bland's anti-cycling rule.  The module also
provides the Blahut-Arimoto rate-distortion solver and the bridge check tying
the two formulations together.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, InfeasibleError, ValidationError
from .feasible import LinearFeasibility, classical_feasibility, quantum_feasibility
from .prob import Channel, JointPmf, Pmf, entropy, mutual_information, _entropy_of
from .quantum import (
    CqChannel,
    DensityOperator,
    SubsystemLayout,
    canonical_purification,
    partial_trace,
    quantum_cmi,
    von_neumann_entropy,
)

_LP_TOL = 1e-9

__all__ = [
    "LpResult",
    "RateResult",
    "DistortionSpec",
    "lp_solve",
    "rate_channel",
    "qc_rate",
    "purified_target",
    "blahut_arimoto",
    "distortion_matrix",
    "distortion_from_channel",
    "rd_bridge",
]


# ---------------------------------------------------------------------------
# dense simplex
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LpResult:
    status: str  # optimal | infeasible | unbounded
    x: np.ndarray | None
    value: float
    iterations: int


def _pivot(t: np.ndarray, rhs: np.ndarray, basis: list[int], row: int, col: int) -> None:
    piv = t[row, col]
    t[row] /= piv
    rhs[row] /= piv
    for r in range(t.shape[0]):
        if r != row and t[r, col] != 0.0:
            f = t[r, col]
            t[r] -= f * t[row]
            rhs[r] -= f * rhs[row]
    basis[row] = col


def _run_simplex(
    t: np.ndarray,
    rhs: np.ndarray,
    basis: list[int],
    cost: np.ndarray,
    n_allowed: int,
    tol: float,
    max_iter: int,
) -> tuple[str, int]:
    """Maximize cost@x on the current tableau with Bland's rule.

    Entering variable: the lowest-index column (among the first ``n_allowed``)
    with positive reduced cost; leaving variable: the minimum-ratio row,
    ties broken by the smallest basic-variable index.
    """
    it = 0
    while True:
        if it >= max_iter:
            raise ConvergenceError(f"simplex exceeded {max_iter} pivots")
        cb = cost[basis]
        entering = -1
        for j in range(n_allowed):
            rc = cost[j] - float(cb @ t[:, j])
            if rc > tol:
                entering = j
                break
        if entering < 0:
            return "optimal", it
        col = t[:, entering]
        row = -1
        best = np.inf
        for r in range(t.shape[0]):
            if col[r] > tol:
                ratio = rhs[r] / col[r]
                if ratio < best - 1e-12 or (
                    abs(ratio - best) <= 1e-12 and row >= 0 and basis[r] < basis[row]
                ):
                    best = ratio
                    row = r
        if row < 0:
            return "unbounded", it
        _pivot(t, rhs, basis, row, entering)
        it += 1


def _simplex_solve(
    a: np.ndarray, b: np.ndarray, c: np.ndarray, tol: float = _LP_TOL, max_iter: int = 100_000
) -> LpResult:
    """Two-phase dense simplex for max c@x subject to a x = b, x >= 0."""
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float).ravel()
    c = np.asarray(c, dtype=float)
    m, n = a.shape
    if c.shape != (n,):
        raise ValidationError("objective length must match the number of variables")

    for i in range(m):
        s = max(float(np.max(np.abs(a[i]))), abs(float(b[i])))
        if s > 0.0:
            a[i] /= s
            b[i] /= s
    flip = b < 0.0
    a[flip] *= -1.0
    b[flip] *= -1.0

    t = np.hstack([a, np.eye(m)])
    rhs = b.copy()
    basis = list(range(n, n + m))
    phase1_cost = np.concatenate([np.zeros(n), -np.ones(m)])
    status, it1 = _run_simplex(t, rhs, basis, phase1_cost, n + m, tol, max_iter)
    if status != "optimal":  # pragma: no cover - phase 1 is bounded by construction
        raise ConvergenceError("phase-1 simplex terminated abnormally")
    if float(phase1_cost[basis] @ rhs) < -1e-8:
        return LpResult("infeasible", None, float("nan"), it1)

    # drive artificials out of the basis; drop redundant rows
    keep_rows: list[int] = []
    for r in range(len(basis)):
        if basis[r] >= n:
            piv_col = -1
            for j in range(n):
                if abs(t[r, j]) > tol:
                    piv_col = j
                    break
            if piv_col >= 0:
                _pivot(t, rhs, basis, r, piv_col)
                keep_rows.append(r)
            # else: redundant row, drop it
        else:
            keep_rows.append(r)
    t = t[keep_rows]
    rhs = rhs[keep_rows]
    basis = [basis[r] for r in keep_rows]

    phase2_cost = np.concatenate([c, np.zeros(m)])
    status, it2 = _run_simplex(t, rhs, basis, phase2_cost, n, tol, max_iter)
    if status == "unbounded":
        return LpResult("unbounded", None, float("inf"), it1 + it2)
    x = np.zeros(n)
    for r, var in enumerate(basis):
        if var < n:
            x[var] = rhs[r]
    return LpResult("optimal", x, float(c @ x), it1 + it2)


def lp_solve(c, sys: LinearFeasibility, tol: float = _LP_TOL) -> LpResult:
    """Maximize c@x over the simplex-intersected equality system."""
    return _simplex_solve(sys.a, sys.b, np.asarray(c, dtype=float), tol=tol)


# ---------------------------------------------------------------------------
# rate functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateResult:
    """Optimal rate in bits with the optimizing distribution and diagnostics."""

    rate_bits: float
    optimizer: Pmf | None
    lp_status: str
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def feasible(self) -> bool:
        return self.lp_status == "optimal"


def _vertex_pmf(x: np.ndarray) -> Pmf:
    return Pmf.normalized(np.maximum(x, 0.0))


def rate_channel(p_x: Pmf, w: Channel) -> RateResult:
    """Minimum of I(source; reconstruction) over the feasibility polytope.

    With the source distribution pinned by the constraints the objective is
    H(p_x) - sum_y P_Y(y) H(W(.|y)), affine in P_Y, so the minimum is a vertex
    of the polytope found by the simplex; an empty polytope is reported as
    infeasible (the rate is undefined there).
    """
    sys = classical_feasibility(p_x, w)
    coeffs = np.asarray([_entropy_of(w.rows[y]) for y in range(w.n_inputs)])
    lp = lp_solve(coeffs, sys)
    if lp.status != "optimal":
        return RateResult(float("nan"), None, lp.status, {"iterations": lp.iterations})
    optimizer = _vertex_pmf(lp.x)
    rate = entropy(p_x) - lp.value
    rate = min(max(rate, 0.0), entropy(p_x))
    joint = JointPmf(
        (optimizer.probs[:, None] * w.rows).T, names=("X", "Y")
    )
    gap = abs(rate - mutual_information(joint))
    residual = float(np.max(np.abs(sys.a @ lp.x - sys.b)))
    return RateResult(
        float(rate),
        optimizer,
        "optimal",
        {"iterations": lp.iterations, "objective_gap": gap, "feasibility_residual": residual},
    )


def purified_target(
    rho_ab: DensityOperator,
    layout_ab: SubsystemLayout,
    a_label: str = "A",
    b_label: str = "B",
) -> tuple[DensityOperator, SubsystemLayout]:
    """Reduction of the canonical purification onto (reference, side info).

    Returns the target state and its (R, B) layout; the reference factor has
    the full dimension of ``rho_ab``.
    """
    d_a = layout_ab.dim_of(a_label)
    d_b = layout_ab.dim_of(b_label)
    if layout_ab.total_dim != rho_ab.dim:
        raise ValidationError("layout does not match the density operator dimension")
    psi = canonical_purification(rho_ab)
    pur_layout = SubsystemLayout((("R", rho_ab.dim), (a_label, d_a), (b_label, d_b)))
    target = partial_trace(psi.projector(), pur_layout, {"R", b_label})
    return target, SubsystemLayout((("R", rho_ab.dim), ("B", d_b)))


def qc_rate(
    rho_ab: DensityOperator,
    layout_ab: SubsystemLayout,
    w: CqChannel,
    a_label: str = "A",
    b_label: str = "B",
) -> RateResult:
    """Minimum conditional mutual information rate over the quantum polytope.

    On the feasible set the channel mixture is pinned to the purified target,
    so I(X;R|B) = sum_x P(x)[S(W_x^B) - S(W_x^RB)] + S(rho^RB) - S(rho^B) is
    affine in P_X; the simplex minimizes it and the result is cross-checked
    against the entropic conditional mutual information at the optimizer.
    """
    if w.layout is None:
        raise ValidationError("the CQ channel needs an explicit (R, B) layout")
    ch_layout = w.layout
    target, _ = purified_target(rho_ab, layout_ab, a_label, b_label)
    if ch_layout.total_dim != target.dim:
        raise ValidationError("channel layout does not match the purified target dimension")
    sys = quantum_feasibility(rho_ab, layout_ab, w, a_label, b_label)

    b_lbl = "B" if "B" in ch_layout.labels else ch_layout.labels[-1]
    coeffs = np.asarray(
        [
            von_neumann_entropy(partial_trace(s, ch_layout, {b_lbl}))
            - von_neumann_entropy(s)
            for s in w.states
        ]
    )
    const = von_neumann_entropy(target) - von_neumann_entropy(
        partial_trace(target, ch_layout, {b_lbl})
    )
    lp = lp_solve(-coeffs, sys)
    if lp.status != "optimal":
        return RateResult(float("nan"), None, lp.status, {"iterations": lp.iterations})
    optimizer = _vertex_pmf(lp.x)
    rate = const - lp.value
    cmi = quantum_cmi(optimizer, w, ch_layout, r_label=ch_layout.labels[0], b_label=b_lbl)
    if abs(rate - cmi) > 1e-8:
        raise ConvergenceError(
            f"affine objective ({rate}) and conditional mutual information ({cmi}) disagree"
        )
    if rate < -1e-9:
        raise ConvergenceError(f"negative quantum rate {rate}")
    return RateResult(
        float(max(rate, 0.0)),
        optimizer,
        "optimal",
        {"iterations": lp.iterations, "cmi_gap": abs(rate - cmi)},
    )


# ---------------------------------------------------------------------------
# rate-distortion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DistortionSpec:
    """Per-letter distortion matrix d[x, y] and a target level.

    Entries may be +inf (forbidden transitions, flagged); NaN and -inf are
    rejected.  Achievability of ``level`` depends on the source and is checked
    by the rate-distortion solver.
    """

    d: np.ndarray
    level: float

    def __post_init__(self) -> None:
        d = np.asarray(self.d, dtype=float)
        if d.ndim != 2:
            raise ValidationError("distortion matrix must be 2-dimensional")
        if np.any(np.isnan(d)) or np.any(d == -np.inf) or np.any(d < 0.0):
            raise ValidationError("distortion entries must be non-negative (or +inf)")
        if not np.isfinite(float(self.level)):
            raise ValidationError("distortion level must be finite")
        d = d.copy()
        d.flags.writeable = False
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "level", float(self.level))

    @property
    def infinite_cells(self) -> int:
        return int(np.sum(np.isinf(self.d)))


def _ba_slope(p: np.ndarray, d: np.ndarray, s: float, rate_tol: float, max_iter: int):
    """Blahut-Arimoto fixed point at slope s; returns (rate_bits, mean_distortion)."""
    n_x, n_y = d.shape
    with np.errstate(over="ignore"):
        a = np.exp2(np.where(np.isinf(d), -np.inf, -s * d))
    live_y = a[p > 0].sum(axis=0) > 0.0
    if not live_y.any():
        raise InfeasibleError("every reconstruction symbol is forbidden")
    r = np.where(live_y, 1.0 / live_y.sum(), 0.0)
    prev_rate = np.inf
    for _ in range(max_iter):
        z = a @ r
        if np.any((p > 0) & (z <= 0.0)):
            raise InfeasibleError("a source symbol has no allowed reconstruction")
        q = (a * r[None, :]) / np.where(z > 0, z, 1.0)[:, None]
        r_new = p @ q
        mask = (q > 0) & (r_new[None, :] > 0) & (p[:, None] > 0)
        rate = float(
            np.sum(np.where(mask, p[:, None] * q * np.log2(np.where(mask, q / r_new[None, :], 1.0)), 0.0))
        )
        r = r_new
        if abs(rate - prev_rate) < rate_tol:
            break
        prev_rate = rate
    else:
        raise ConvergenceError("Blahut-Arimoto inner loop did not converge")
    ed = float(np.sum(np.where(q > 0, p[:, None] * q * np.where(np.isinf(d), 0.0, d), 0.0)))
    return max(rate, 0.0), ed


def blahut_arimoto(
    p_x: Pmf,
    spec: DistortionSpec,
    level_tol: float = 1e-6,
    rate_tol: float = 1e-9,
    max_iter: int = 50_000,
) -> float:
    """Shannon rate-distortion function R(level) in bits by slope bisection.

    Alternating minimization over forward test channels at a fixed Lagrange
    slope, with bisection on the slope until the achieved mean distortion is
    within ``level_tol`` of the target.  The slope bracket starts at [0, 50]
    and expands geometrically.
    """
    p = p_x.probs
    d = spec.d
    if d.shape[0] != p.size:
        raise ValidationError("distortion rows must match the source alphabet")
    target = spec.level
    row_min = np.min(d, axis=1)
    if np.any(np.isinf(row_min[p > 0])):
        raise InfeasibleError("a source symbol has only forbidden reconstructions")
    d_min = float(np.sum(p * np.where(p > 0, row_min, 0.0)))
    col_mean = np.asarray(
        [float(np.sum(p * np.where(p > 0, d[:, y], 0.0))) for y in range(d.shape[1])]
    )
    d_max = float(np.min(col_mean))
    if target < d_min - 1e-12:
        raise ValidationError(
            f"distortion level {target} is below the minimum achievable {d_min}"
        )
    if target >= d_max - 1e-12:
        return 0.0

    lo, hi = 0.0, 50.0
    rate_hi, ed_hi = _ba_slope(p, d, hi, rate_tol, max_iter)
    while ed_hi > target + level_tol:
        hi *= 2.0
        if hi > 1e7:
            raise ConvergenceError("slope bracket expansion failed")
        rate_hi, ed_hi = _ba_slope(p, d, hi, rate_tol, max_iter)
    rate_lo, ed_lo = _ba_slope(p, d, lo, rate_tol, max_iter)

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        rate_mid, ed_mid = _ba_slope(p, d, mid, rate_tol, max_iter)
        if abs(ed_mid - target) <= level_tol:
            return rate_mid
        if ed_mid > target:
            lo, rate_lo, ed_lo = mid, rate_mid, ed_mid
        else:
            hi, rate_hi, ed_hi = mid, rate_mid, ed_mid
        if hi - lo < 1e-13:
            # R(D) is linear where the slope sticks; interpolate along it
            return float(rate_lo + mid * (ed_lo - target))
    raise ConvergenceError("slope bisection did not reach the distortion target")


def distortion_matrix(w: Channel, c: float, b) -> np.ndarray:
    """Distortion d[x, y] = -c log2 W(x|y) + b(x); zero channel cells give +inf."""
    if not (float(c) > 0.0):
        raise ValidationError("the scale c must be positive")
    b = np.asarray(b, dtype=float).ravel()
    if b.shape != (w.n_outputs,):
        raise ValidationError("b must assign one offset per source symbol")
    with np.errstate(divide="ignore"):
        logw = np.log2(w.rows)  # rows y, cols x
    return (-float(c) * logw.T) + b[:, None]


def distortion_from_channel(p_x: Pmf, w: Channel, c: float, b) -> DistortionSpec:
    """Distortion spec induced by the backward channel, with its natural level.

    The level is E[d] under (optimizer, W) where the optimizer minimizes the
    backward-channel rate for ``p_x``.
    """
    d = distortion_matrix(w, c, b)
    result = rate_channel(p_x, w)
    if not result.feasible:
        raise InfeasibleError("the reconstruction polytope is empty; no natural level exists")
    joint_xy = (result.optimizer.probs[:, None] * w.rows).T  # (x, y); zero where W is zero
    level = float(np.sum(np.where(joint_xy > 0, joint_xy * np.where(np.isinf(d), 0.0, d), 0.0)))
    return DistortionSpec(d, level)


def rd_bridge(p_x: Pmf, w: Channel, c: float, b, tol: float = 1e-4) -> dict:
    """Check that the backward-channel rate attains the rate-distortion function.

    Returns a report with the induced level D, both rates, their gap, and
    whether they agree within ``tol``.
    """
    spec = distortion_from_channel(p_x, w, c, b)
    chan_rate = rate_channel(p_x, w)
    rd_rate = blahut_arimoto(p_x, spec)
    gap = abs(rd_rate - chan_rate.rate_bits)
    return {
        "level": spec.level,
        "rd_rate_bits": rd_rate,
        "rate_channel_bits": chan_rate.rate_bits,
        "gap": gap,
        "equal": bool(gap <= tol),
        "tolerance": tol,
    }
