"""Inner bound for lossy coding with decoder side information.

Minimizes I(X;U) - I(U;Z) over auxiliary channel pairs (P_{U|X}, P_{Y|UZ})
whose induced joint reproduces the prescribed backward channel W_{X|YZ} as the
Bayes posterior of the source given (reconstruction, side information) and
satisfies the X-(Y,Z)-U chain.  The two construction chains Z-X-U and
X-(U,Z)-Y hold automatically because the joint is assembled as
P_XZ * P_{U|X} * P_{Y|UZ}.

The search is a penalized multi-restart local optimization (exponentiated
gradient on the channel rows with an increasing penalty weight), followed by a
structural polish: the decoder channel is rounded to a deterministic map and
the encoder channel is re-solved exactly on the resulting feasible slice.  The
returned value is an upper bound on the true inner-bound minimum.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import ValidationError
from .prob import Channel, JointPmf, _entropy_of
from .rates import _simplex_solve

_FEAS_TOL = 1e-6
_LOG_FLOOR = 1e-30

__all__ = [
    "WzSetup",
    "WzCandidate",
    "WzResult",
    "induced_joint",
    "posterior_residual",
    "rate_objective",
    "solve_inner_bound",
]


@dataclass(frozen=True)
class WzSetup:
    """Problem data: source/side-information joint, reconstruction alphabet,
    backward channel, and the auxiliary alphabet size.

    ``w`` maps (y, z) pairs, flattened row-major with y as the outer axis, to
    distributions over the source alphabet.
    """

    p_xz: JointPmf
    y_size: int
    w: Channel
    u_size: int = 0

    def __post_init__(self) -> None:
        if self.p_xz.table.ndim != 2:
            raise ValidationError("p_xz must be a 2-axis joint (source, side information)")
        kx, kz = self.p_xz.table.shape
        ky = int(self.y_size)
        if ky < 1:
            raise ValidationError("reconstruction alphabet must be non-empty")
        if self.w.n_inputs != ky * kz or self.w.n_outputs != kx:
            raise ValidationError(
                f"backward channel must be ({ky}*{kz}) x {kx}, got "
                f"{self.w.n_inputs} x {self.w.n_outputs}"
            )
        u = int(self.u_size) if self.u_size else kx * kz + 2
        if u < 1:
            raise ValidationError("u_size must be positive")
        object.__setattr__(self, "y_size", ky)
        object.__setattr__(self, "u_size", u)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        kx, kz = self.p_xz.table.shape
        return self.u_size, kx, self.y_size, kz

    def w_cube(self) -> np.ndarray:
        """Backward channel reshaped to [y, z, x]."""
        _, kx, ky, kz = self.shape
        return self.w.rows.reshape(ky, kz, kx)


def induced_joint(setup: WzSetup, p_u_given_x: Channel, p_y_given_uz: Channel) -> JointPmf:
    """Joint P(u,x,y,z) = P_XZ(x,z) P(u|x) P(y|u,z) over axes (U, X, Y, Z)."""
    ku, kx, ky, kz = setup.shape
    if p_u_given_x.rows.shape != (kx, ku):
        raise ValidationError(f"encoder channel must be {kx} x {ku}")
    if p_y_given_uz.rows.shape != (ku * kz, ky):
        raise ValidationError(f"decoder channel must be ({ku}*{kz}) x {ky}")
    b = p_y_given_uz.rows.reshape(ku, kz, ky)
    table = np.einsum("xz,xu,uzy->uxyz", setup.p_xz.table, p_u_given_x.rows, b)
    return JointPmf(table, names=("U", "X", "Y", "Z"))


def _residual_terms(table: np.ndarray, w_cube: np.ndarray) -> tuple[float, float]:
    p_xyz = table.sum(axis=0)
    p_yz = p_xyz.sum(axis=0)
    w_x = np.moveaxis(w_cube, 2, 0)  # [x, y, z]
    term1 = float(np.abs(p_xyz - p_yz[None, :, :] * w_x).sum())
    p_uyz = table.sum(axis=1)
    mask = p_yz > 0.0
    safe = np.where(mask, p_yz, 1.0)
    indep = p_uyz[:, None, :, :] * p_xyz[None, :, :, :] / safe[None, None, :, :]
    term2 = float((np.abs(table - indep) * mask[None, None, :, :]).sum())
    return term1, term2


def posterior_residual(cand: "WzCandidate", w: Channel) -> float:
    """Feasibility residual: posterior mismatch plus chain violation.

    Sums P(y,z)-weighted l1 gaps between the induced posterior of the source
    given (y, z) and the prescribed backward channel, plus the conditional
    dependence of (source, auxiliary) given (y, z); zero-mass (y, z) cells
    impose no constraint.  Zero iff the candidate is feasible.
    """
    ky = cand.p_y_given_uz.n_outputs
    kz = cand.induced.table.shape[3]
    kx = cand.induced.table.shape[1]
    if w.n_inputs != ky * kz or w.n_outputs != kx:
        raise ValidationError("backward channel shape does not match the candidate")
    t1, t2 = _residual_terms(cand.induced.table, w.rows.reshape(ky, kz, kx))
    return t1 + t2


def _objective_from_table(table: np.ndarray) -> float:
    p_xu = table.sum(axis=(2, 3)).T  # (x, u)
    p_uz = table.sum(axis=(1, 2))  # (u, z)
    p_x = p_xu.sum(axis=1)
    p_u = p_xu.sum(axis=0)
    p_z = p_uz.sum(axis=0)
    i_xu = _entropy_of(p_x) + _entropy_of(p_u) - _entropy_of(p_xu)
    i_uz = _entropy_of(p_u) + _entropy_of(p_z) - _entropy_of(p_uz)
    return float(i_xu - i_uz)


def rate_objective(cand: "WzCandidate") -> float:
    """I(X;U) - I(U;Z) in bits; may be negative for infeasible candidates."""
    return _objective_from_table(cand.induced.table)


@dataclass(frozen=True)
class WzCandidate:
    """Auxiliary channel pair with its induced joint, objective, and residual."""

    p_u_given_x: Channel
    p_y_given_uz: Channel
    induced: JointPmf
    objective_bits: float
    residual: float

    @classmethod
    def build(
        cls, setup: WzSetup, p_u_given_x: Channel, p_y_given_uz: Channel
    ) -> "WzCandidate":
        joint = induced_joint(setup, p_u_given_x, p_y_given_uz)
        t1, t2 = _residual_terms(joint.table, setup.w_cube())
        return cls(
            p_u_given_x=p_u_given_x,
            p_y_given_uz=p_y_given_uz,
            induced=joint,
            objective_bits=_objective_from_table(joint.table),
            residual=t1 + t2,
        )


@dataclass(frozen=True)
class WzResult:
    rate_bits: float
    candidate: WzCandidate | None
    residual: float
    feasible: bool
    feasible_restarts: int
    diagnostics: dict = field(default_factory=dict, compare=False)


# ---------------------------------------------------------------------------
# penalized local search
# ---------------------------------------------------------------------------


def _l_term(v: np.ndarray) -> np.ndarray:
    return np.log2(np.maximum(v, _LOG_FLOOR)) + 1.0 / np.log(2.0)


def _penalty_and_cell_grad(table, p_yz, w_x):
    """Squared-cell surrogate of the two residual groups and d/d(table)."""
    p_xyz = table.sum(axis=0)
    r1 = p_xyz - p_yz[None, :, :] * w_x
    p_uyz = table.sum(axis=1)
    c = table * p_yz[None, None, :, :] - p_uyz[:, None, :, :] * p_xyz[None, :, :, :]
    value = float((r1**2).sum() + (c**2).sum())
    g1 = 2.0 * r1 - 2.0 * np.einsum("ayz,ayz->yz", r1, w_x)[None, :, :]
    s_yz = np.einsum("uxyz,uxyz->yz", c, table)
    g2 = (
        2.0 * c * p_yz[None, None, :, :]
        + 2.0 * s_yz[None, None, :, :]
        - 2.0 * np.einsum("uayz,ayz->uyz", c, p_xyz)[:, None, :, :]
        - 2.0 * np.einsum("axyz,ayz->xyz", c, p_uyz)[None, :, :, :]
    )
    return value, g1[None, :, :, :] + g2


def _descent(setup, a, b, lam_schedule, iters, lr0, rng):
    m = setup.p_xz.table
    p_x = m.sum(axis=1)
    w_x = np.moveaxis(setup.w_cube(), 2, 0)
    for lam in lam_schedule:
        lr = lr0
        for _ in range(iters):
            table = np.einsum("xz,xu,uzy->uxyz", m, a, b)
            p_yz = table.sum(axis=(0, 1))
            _, g_cell = _penalty_and_cell_grad(table, p_yz, w_x)
            p_xu = p_x[:, None] * a
            p_uz = np.einsum("xz,xu->uz", m, a)
            grad_a = p_x[:, None] * _l_term(p_xu) - np.einsum("xz,uz->xu", m, _l_term(p_uz))
            grad_a = grad_a + lam * np.einsum("uxyz,xz,uzy->xu", g_cell, m, b)
            grad_b = lam * np.einsum("uxyz,xz,xu->uzy", g_cell, m, a)
            step_a = lr / (np.max(np.abs(grad_a)) + 1e-12)
            step_b = lr / (np.max(np.abs(grad_b)) + 1e-12)
            a = a * np.exp(np.clip(-step_a * grad_a, -50, 50))
            a /= a.sum(axis=1, keepdims=True)
            b = b * np.exp(np.clip(-step_b * grad_b, -50, 50))
            b /= b.sum(axis=2, keepdims=True)
            lr *= 0.97
    return a, b


# ---------------------------------------------------------------------------
# deterministic-decoder polish
# ---------------------------------------------------------------------------


def _column_direction(setup, u, assignment):
    """Encoder column direction forced by a deterministic decoder row, or None.

    With the decoder pinned to y = f(u, z), feasibility requires the posterior
    of the source given (u, z) to equal W(.|f(u,z), z) for every z; that fixes
    the encoder column up to scale when the per-z requirements are mutually
    consistent.
    """
    m = setup.p_xz.table
    kx, kz = m.shape
    w_cube = setup.w_cube()
    p_z = m.sum(axis=0)
    cur = None
    for z in range(kz):
        if p_z[z] == 0.0:
            continue
        wvec = w_cube[assignment[z], z]  # over x
        d = np.zeros(kx)
        for x in range(kx):
            if m[x, z] > 0.0:
                d[x] = wvec[x] / m[x, z]
            elif wvec[x] > 1e-12:
                return None  # posterior can never place mass here
        s = d.sum()
        if s <= 0.0:
            return None
        d /= s
        if cur is None:
            cur = d
        else:
            denom = float(cur @ cur)
            kappa = float(d @ cur) / denom if denom > 0 else 0.0
            if np.max(np.abs(d - kappa * cur)) > 1e-9:
                return None
    return cur


def _candidate_from_scales(setup, directions, valid, t, f_map):
    ku, kx, ky, kz = setup.shape
    a = np.zeros((kx, ku))
    for idx, u in enumerate(valid):
        a[:, u] = t[idx] * directions[u]
    p_x = setup.p_xz.table.sum(axis=1)
    sums = a.sum(axis=1)
    for x in range(kx):
        if p_x[x] == 0.0:
            a[x, :] = 1.0 / ku
        elif abs(sums[x] - 1.0) > 1e-6:
            return None
        else:
            a[x, :] /= a[x, :].sum()
    b = np.zeros((ku, kz, ky))
    for u in range(ku):
        for z in range(kz):
            b[u, z, f_map[u, z]] = 1.0
    return WzCandidate.build(
        setup, Channel(a), Channel(b.reshape(ku * kz, ky))
    )


def _polish(setup, b_rows, feas_tol):
    """Round the decoder to its modal map and re-solve the encoder exactly."""
    ku, kx, ky, kz = setup.shape
    m = setup.p_xz.table
    p_x = m.sum(axis=1)
    f_map = np.argmax(b_rows.reshape(ku, kz, ky), axis=2)
    directions = [ _column_direction(setup, u, f_map[u]) for u in range(ku) ]
    valid = [u for u in range(ku) if directions[u] is not None]
    if not valid:
        return []
    active_x = [x for x in range(kx) if p_x[x] > 0.0]
    v = np.asarray([[directions[u][x] for u in valid] for x in active_x])
    rhs = np.ones(len(active_x))

    candidates = []

    def try_scales(t):
        if t is None or np.any(t < -1e-10):
            return
        cand = _candidate_from_scales(setup, directions, valid, np.maximum(t, 0.0), f_map)
        if cand is not None and cand.residual <= feas_tol:
            candidates.append(cand)

    if kz == 1:
        # objective is linear in the scales: one exact LP
        weights = []
        for u in valid:
            pi = p_x * directions[u]
            s = pi.sum()
            weights.append(s * _entropy_of(pi / s) if s > 0 else 0.0)
        lp = _simplex_solve(v, rhs, np.asarray(weights))
        if lp.status == "optimal":
            try_scales(lp.x)
        return candidates

    # general side information: the objective is not linear in the scales, so
    # enumerate basic feasible scale vectors (vertices) and keep pairwise
    # midpoints as interior probes
    rank = int(np.linalg.matrix_rank(v, tol=1e-10))
    vertices = []
    for cols in combinations(range(len(valid)), min(rank, len(valid))):
        sub = v[:, cols]
        t_sub, *_ = np.linalg.lstsq(sub, rhs, rcond=None)
        if np.linalg.norm(sub @ t_sub - rhs) > 1e-8 or np.any(t_sub < -1e-10):
            continue
        t = np.zeros(len(valid))
        t[list(cols)] = np.maximum(t_sub, 0.0)
        vertices.append(t)
        try_scales(t)
    for i, j in combinations(range(len(vertices)), 2):
        try_scales(0.5 * (vertices[i] + vertices[j]))
    return candidates


def _random_rows(rng, shape, bias_onehot=False):
    rows = rng.gamma(1.0, 1.0, size=shape)
    rows /= rows.sum(axis=-1, keepdims=True)
    if bias_onehot:
        hot = rng.integers(shape[-1], size=shape[:-1])
        boost = np.zeros(shape)
        np.put_along_axis(boost, hot[..., None], 6.0, axis=-1)
        rows = rows + boost
        rows /= rows.sum(axis=-1, keepdims=True)
    return rows


def solve_inner_bound(
    setup: WzSetup,
    restarts: int = 64,
    penalty_schedule: tuple = (30.0, 300.0, 3000.0, 3e4),
    seed: int = 0,
    feas_tol: float = _FEAS_TOL,
    iters_per_stage: int = 60,
) -> WzResult:
    """Multi-restart penalized search for the minimum achievable rate.

    A candidate counts as feasible when its residual is at most ``feas_tol``;
    the best feasible rate (clamped at zero: rates are non-negative) is
    returned, or an infeasibility report when no restart produces one.
    Deterministic for a fixed seed.
    """
    ku, kx, ky, kz = setup.shape
    children = np.random.SeedSequence(seed).spawn(restarts)
    best: WzCandidate | None = None
    best_residual = np.inf
    n_feasible = 0
    for child in children:
        rng = np.random.default_rng(child)
        a0 = _random_rows(rng, (kx, ku))
        b0 = _random_rows(rng, (ku, kz, ky), bias_onehot=bool(rng.integers(2)))
        a1, b1 = _descent(setup, a0, b0, penalty_schedule, iters_per_stage, 0.25, rng)
        raw = WzCandidate.build(setup, Channel(a1), Channel(b1.reshape(ku * kz, ky)))
        best_residual = min(best_residual, raw.residual)
        found = []
        if raw.residual <= feas_tol:
            found.append(raw)
        found.extend(_polish(setup, b1.reshape(ku * kz, ky), feas_tol))
        if found:
            n_feasible += 1
            for cand in found:
                if best is None or cand.objective_bits < best.objective_bits:
                    best = cand
    if best is None:
        return WzResult(
            rate_bits=float("nan"),
            candidate=None,
            residual=float(best_residual),
            feasible=False,
            feasible_restarts=0,
            diagnostics={"restarts": restarts, "best_residual": float(best_residual)},
        )
    return WzResult(
        rate_bits=float(max(best.objective_bits, 0.0)),
        candidate=best,
        residual=float(best.residual),
        feasible=True,
        feasible_restarts=n_feasible,
        diagnostics={"restarts": restarts},
    )
