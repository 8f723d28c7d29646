"""Finite-blocklength simulation of the side-information compression protocol.

Pruned random codebook, likelihood encoder, uniform binning, joint-typicality
decoder, exact block total-variation evaluation at small block lengths, a
sampled single-letter diagnostic for larger ones, and the empirical-distortion
check.  Trivial side information (|Z| = 1) gives the no-side-information
protocol as a special case; there the codebook rate may equal the transmitted
rate, in which case binning degenerates to the identity map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceededError, ValidationError
from .prob import (
    Channel,
    JointPmf,
    Pmf,
    TypicalityParams,
    is_jointly_typical,
    is_typical,
    pruned_product,
)
from .rates import DistortionSpec
from .wyner_ziv import WzSetup

__all__ = [
    "ProtocolSetup",
    "Codebook",
    "BinningMap",
    "TrialRecord",
    "DiagnosticResult",
    "build_codebook",
    "build_binning",
    "encoder_pmf",
    "decode",
    "run_trial",
    "run_trials",
    "exact_block_tv",
    "single_letter_diagnostic",
    "empirical_distortion",
]


def _pow2_count(rate: float, n: int) -> int:
    return max(1, int(math.ceil(2.0 ** (n * rate) - 1e-9)))


@dataclass(frozen=True)
class ProtocolSetup:
    """Problem data plus the chosen auxiliary channels and protocol knobs.

    ``encoder`` is the auxiliary channel X -> U, ``decoder`` the reconstruction
    channel (U, Z) -> Y (rows row-major with u as the outer axis).  ``rate`` is
    the transmitted rate and ``codebook_rate`` the codeword-generation rate,
    both in bits; ``codebook_rate == rate`` selects the no-binning mode.
    ``delta`` is the typicality slack shared by the codebook pruning, the
    encoder's conditional-typicality test and the decoder; ``delta_hat`` is the
    separate slack for the source-sequence test (defaults to
    delta * (|X| + |U|)).  ``spmf_mode`` controls how a sub-PMF failure is
    handled: "per_sequence" zeroes the offending source sequence only,
    "per_codebook" zeroes the whole encoder (exhaustively checkable at the
    small block lengths where the exact evaluator runs).
    """

    setup: WzSetup
    encoder: Channel
    decoder: Channel
    rate: float
    codebook_rate: float
    delta: float
    delta_hat: float | None = None
    eta: float = 0.1
    spmf_mode: str = "per_sequence"

    p_x: Pmf = field(init=False, repr=False, compare=False)
    p_u: Pmf = field(init=False, repr=False, compare=False)
    joint_ux: JointPmf = field(init=False, repr=False, compare=False)
    joint_uz: JointPmf = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        ku, kx, ky, kz = self.setup.shape
        if self.encoder.rows.shape != (kx, ku):
            raise ValidationError(f"encoder channel must be {kx} x {ku}")
        if self.decoder.rows.shape != (ku * kz, ky):
            raise ValidationError(f"decoder channel must be ({ku}*{kz}) x {ky}")
        if not (self.codebook_rate >= self.rate >= 0.0):
            raise ValidationError("rates must satisfy codebook_rate >= rate >= 0")
        if not (0.0 < self.eta < 1.0):
            raise ValidationError("eta must lie in (0, 1)")
        if self.spmf_mode not in ("per_sequence", "per_codebook"):
            raise ValidationError("spmf_mode must be 'per_sequence' or 'per_codebook'")
        if not (self.delta > 0.0):
            raise ValidationError("delta must be positive")
        dhat = self.delta * (kx + ku) if self.delta_hat is None else float(self.delta_hat)
        if dhat <= 0.0:
            raise ValidationError("delta_hat must be positive")
        object.__setattr__(self, "delta_hat", dhat)

        m_xz = self.setup.p_xz.table
        p_x = m_xz.sum(axis=1)
        a = self.encoder.rows
        ux = (p_x[:, None] * a).T  # (u, x)
        uz = np.einsum("xz,xu->uz", m_xz, a)
        object.__setattr__(self, "p_x", Pmf(p_x))
        object.__setattr__(self, "p_u", Pmf(ux.sum(axis=1)))
        object.__setattr__(self, "joint_ux", JointPmf(ux, names=("U", "X")))
        object.__setattr__(self, "joint_uz", JointPmf(uz, names=("U", "Z")))

        # the fallback codeword is the constant sequence of the first symbol
        # and must be atypical for the configured slack
        if is_typical(np.zeros(1, dtype=np.int64), self.p_u, TypicalityParams(1, self.delta)):
            raise ValidationError(
                "the constant fallback sequence is typical for the auxiliary marginal; "
                "reorder the auxiliary alphabet or reduce delta"
            )

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.setup.shape

    def ratio_table(self) -> np.ndarray:
        """ratio[u, x] = P(x|u)/P(x); zero on unused cells."""
        ux = self.joint_ux.table
        p_u = ux.sum(axis=1)
        p_x = ux.sum(axis=0)
        denom = p_u[:, None] * p_x[None, :]
        return np.where(denom > 0, ux / np.where(denom > 0, denom, 1.0), 0.0)

    def decoder_cube(self) -> np.ndarray:
        ku, _, ky, kz = self.shape
        return self.decoder.rows.reshape(ku, kz, ky)

    def fallback(self, n: int) -> np.ndarray:
        return np.zeros(n, dtype=np.int64)


@dataclass(frozen=True)
class Codebook:
    n: int
    entries: np.ndarray  # (size, n) int
    seed: int
    epsilon: float
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def size(self) -> int:
        return int(self.entries.shape[0])


@dataclass(frozen=True)
class BinningMap:
    table: np.ndarray  # entry l-1 -> bin in [1, n_bins]
    n_bins: int
    seed: int
    identity: bool

    def bin_of(self, l: int) -> int:
        if l == 0:
            return 0
        return int(self.table[l - 1])


def build_codebook(ps: ProtocolSetup, n: int, seed: int) -> Codebook:
    """I.i.d. draws from the pruned product of the auxiliary marginal."""
    size = _pow2_count(ps.codebook_rate, n)
    pruned = pruned_product(ps.p_u, TypicalityParams(n, ps.delta))
    rng = np.random.default_rng(seed)
    entries = np.stack([pruned.sample(rng) for _ in range(size)])
    entries.flags.writeable = False
    return Codebook(n=n, entries=entries, seed=seed, epsilon=pruned.epsilon)


def build_binning(ps: ProtocolSetup, n: int, codebook_size: int, seed: int) -> BinningMap:
    """Uniform independent bin assignment; identity in the no-binning mode."""
    if ps.codebook_rate == ps.rate:
        table = np.arange(1, codebook_size + 1)
        return BinningMap(table=table, n_bins=codebook_size, seed=seed, identity=True)
    n_bins = _pow2_count(ps.rate, n)
    rng = np.random.default_rng(seed)
    # floor of a shared uniform grid keeps assignments coupled across bin counts
    table = np.minimum((rng.random(codebook_size) * n_bins).astype(np.int64), n_bins - 1) + 1
    return BinningMap(table=table, n_bins=n_bins, seed=seed, identity=False)


# ---------------------------------------------------------------------------
# encoder
# ---------------------------------------------------------------------------


def _pair_counts(useq: np.ndarray, xseq: np.ndarray, ku: int, kx: int) -> np.ndarray:
    return np.bincount(useq * kx + xseq, minlength=ku * kx).astype(float)


def _raw_weights(ps: ProtocolSetup, codebook: Codebook, xseq: np.ndarray) -> np.ndarray:
    """Unclipped likelihood-encoder masses over codeword indices 1..size."""
    n = codebook.n
    ku, kx, _, _ = ps.shape
    ratio = ps.ratio_table()
    pair_probs = ps.joint_ux.table.ravel()
    coef = (1.0 - codebook.epsilon) / ((1.0 + ps.eta) * codebook.size)
    out = np.zeros(codebook.size)
    for l in range(codebook.size):
        u = codebook.entries[l]
        counts = _pair_counts(u, xseq, ku, kx)
        if not np.all(np.abs(counts / n - pair_probs) <= ps.delta * pair_probs):
            continue
        out[l] = coef * float(np.prod(ratio[u, xseq]))
    return out


def encoder_pmf(ps: ProtocolSetup, codebook: Codebook, xseq) -> np.ndarray:
    """Likelihood-encoder PMF over {0} + codeword indices for one source block.

    Index 0 is the failure symbol: it absorbs the residual mass, the whole
    mass for atypical source blocks, and everything when the candidate masses
    exceed one (the sub-PMF failure event).
    """
    xseq = np.asarray(xseq, dtype=np.int64)
    n = codebook.n
    out = np.zeros(codebook.size + 1)
    if not is_typical(xseq, ps.p_x, TypicalityParams(n, ps.delta_hat)):
        out[0] = 1.0
        return out
    if ps.spmf_mode == "per_codebook" and not _codebook_spmf_ok(ps, codebook):
        out[0] = 1.0
        return out
    w = _raw_weights(ps, codebook, xseq)
    total = float(w.sum())
    if total > 1.0 + 1e-12:
        out[0] = 1.0
        return out
    out[1:] = w
    out[0] = max(1.0 - total, 0.0)
    return out


def _codebook_spmf_ok(ps: ProtocolSetup, codebook: Codebook) -> bool:
    """Exhaustive sub-PMF check over every typical source block (cached)."""
    if "spmf_ok" not in codebook._cache:
        _, kx, _, _ = ps.shape
        if kx**codebook.n > 2**20:
            raise BudgetExceededError(
                "per-codebook sub-PMF checking needs an enumerable source space; "
                "use spmf_mode='per_sequence' at this block length"
            )
        mat, any_fail = _encoder_matrix(ps, codebook, enforce_mode=False)
        del mat
        codebook._cache["spmf_ok"] = not any_fail
    return codebook._cache["spmf_ok"]


def _all_sequences(k: int, n: int) -> np.ndarray:
    idx = np.arange(k**n)
    place = k ** np.arange(n - 1, -1, -1)
    return (idx[:, None] // place[None, :]) % k


def _encoder_matrix(ps: ProtocolSetup, codebook: Codebook, enforce_mode: bool = True):
    """Encoder PMFs for every source block: matrix (|X|^n, size+1).

    Returns (matrix, any_spmf_failure).  With enforce_mode, the configured
    sub-PMF handling is applied; otherwise failures are only detected.
    """
    n = codebook.n
    ku, kx, _, _ = ps.shape
    xd = _all_sequences(kx, n)
    n_x = xd.shape[0]
    ratio = ps.ratio_table()
    pair_probs = ps.joint_ux.table.ravel()
    coef = (1.0 - codebook.epsilon) / ((1.0 + ps.eta) * codebook.size)

    x_probs = ps.p_x.probs
    x_counts = np.stack([np.bincount(xd[i], minlength=kx) for i in range(n_x)]).astype(float)
    typical_x = np.all(np.abs(x_counts / n - x_probs) <= ps.delta_hat * x_probs, axis=1)

    weights = np.zeros((n_x, codebook.size + 1))
    rows = np.arange(n_x)
    for l in range(codebook.size):
        u = codebook.entries[l]
        counts = np.zeros((n_x, ku * kx))
        prod = np.ones(n_x)
        for i in range(n):
            cell = u[i] * kx + xd[:, i]
            counts[rows, cell] += 1.0
            prod *= ratio[u[i], xd[:, i]]
        ok = np.all(np.abs(counts / n - pair_probs) <= ps.delta * pair_probs, axis=1)
        weights[:, l + 1] = np.where(ok & typical_x, coef * prod, 0.0)

    totals = weights[:, 1:].sum(axis=1)
    fail = typical_x & (totals > 1.0 + 1e-12)
    any_fail = bool(fail.any())
    if enforce_mode:
        if ps.spmf_mode == "per_codebook" and any_fail:
            weights[:, 1:] = 0.0
            weights[:, 0] = 1.0
            return weights, any_fail
        weights[fail, 1:] = 0.0
        weights[~typical_x, 1:] = 0.0
    totals = weights[:, 1:].sum(axis=1)
    weights[:, 0] = np.maximum(1.0 - totals, 0.0)
    return weights, any_fail


# ---------------------------------------------------------------------------
# decoder and trials
# ---------------------------------------------------------------------------


def decode(
    ps: ProtocolSetup, codebook: Codebook, binning: BinningMap, m: int, zseq
) -> tuple[np.ndarray, bool]:
    """Unique-joint-typicality decoding; returns (codeword, fallback_flag)."""
    zseq = np.asarray(zseq, dtype=np.int64)
    n = codebook.n
    if m != 0:
        params = TypicalityParams(n, ps.delta)
        hit = -1
        count = 0
        for l in range(1, codebook.size + 1):
            if binning.bin_of(l) != m:
                continue
            if is_jointly_typical((codebook.entries[l - 1], zseq), ps.joint_uz, params):
                count += 1
                hit = l
                if count > 1:
                    break
        if count == 1:
            return codebook.entries[hit - 1].copy(), False
    return ps.fallback(n), True


@dataclass(frozen=True)
class TrialRecord:
    x: np.ndarray
    z: np.ndarray
    l: int
    m: int
    u: np.ndarray
    y: np.ndarray
    encode_failure: bool
    decode_fallback: bool


def run_trial(
    ps: ProtocolSetup, codebook: Codebook, binning: BinningMap, rng: np.random.Generator
) -> TrialRecord:
    """One protocol realization: sample source and side info, encode, bin,
    decode, and draw the reconstruction letterwise."""
    ku, kx, ky, kz = ps.shape
    n = codebook.n
    m_xz = ps.setup.p_xz.table
    flat = rng.choice(kx * kz, size=n, p=m_xz.ravel())
    xseq = (flat // kz).astype(np.int64)
    zseq = (flat % kz).astype(np.int64)

    pmf = encoder_pmf(ps, codebook, xseq)
    l = int(rng.choice(codebook.size + 1, p=pmf))
    m = binning.bin_of(l)
    useq, fallback = decode(ps, codebook, binning, m, zseq)

    cube = ps.decoder_cube()
    yseq = np.empty(n, dtype=np.int64)
    for i in range(n):
        yseq[i] = rng.choice(ky, p=cube[useq[i], zseq[i]])
    return TrialRecord(
        x=xseq,
        z=zseq,
        l=l,
        m=m,
        u=useq,
        y=yseq,
        encode_failure=(l == 0),
        decode_fallback=fallback,
    )


def run_trials(
    ps: ProtocolSetup, codebook: Codebook, binning: BinningMap, trials: int, seed: int
) -> list[TrialRecord]:
    """Independent trials with per-trial generators derived from one seed."""
    children = np.random.SeedSequence(seed).spawn(trials)
    return [run_trial(ps, codebook, binning, np.random.default_rng(c)) for c in children]


# ---------------------------------------------------------------------------
# exact block total variation
# ---------------------------------------------------------------------------


def exact_block_tv(
    ps: ProtocolSetup,
    codebook: Codebook,
    binning: BinningMap,
    budget: float = 2.0**28,
) -> float:
    """Exact total variation between the induced block distribution and the
    product-posterior approximation, for the fixed codebook and binning.

    Refuses (BudgetExceededError) when |X|^n |Y|^n |Z|^n * size exceeds the
    budget; the sampled single-letter diagnostic covers larger blocks.
    """
    ku, kx, ky, kz = ps.shape
    n = codebook.n
    cost = float(kx * ky * kz) ** n * codebook.size
    if cost > budget:
        raise BudgetExceededError(
            f"exact evaluation needs ~{cost:.3g} elementary operations "
            f"(budget {budget:.3g}); use single_letter_diagnostic instead"
        )

    xd = _all_sequences(kx, n)
    yd = _all_sequences(ky, n)
    zd = _all_sequences(kz, n)
    n_xs, n_ys, n_zs = xd.shape[0], yd.shape[0], zd.shape[0]
    m_xz = ps.setup.p_xz.table

    pxz = np.ones((n_xs, n_zs))
    for i in range(n):
        pxz *= m_xz[xd[:, i][:, None], zd[:, i][None, :]]

    enc, _ = _encoder_matrix(ps, codebook)
    pm = np.zeros((n_xs, binning.n_bins + 1))
    pm[:, 0] = enc[:, 0]
    for l in range(1, codebook.size + 1):
        pm[:, binning.bin_of(l)] += enc[:, l]

    # decoded codeword for every (bin index, side-information block)
    params = TypicalityParams(n, ps.delta)
    uz_probs = ps.joint_uz.table.ravel()
    typ_lz = np.zeros((codebook.size, n_zs), dtype=bool)
    rows = np.arange(n_zs)
    for l in range(codebook.size):
        u = codebook.entries[l]
        counts = np.zeros((n_zs, ku * kz))
        for i in range(n):
            counts[rows, u[i] * kz + zd[:, i]] += 1.0
        typ_lz[l] = np.all(np.abs(counts / n - uz_probs) <= params.delta * uz_probs, axis=1)

    cube = ps.decoder_cube()
    fallback = ps.fallback(n)
    py = np.zeros((binning.n_bins + 1, n_zs, n_ys))
    for m in range(binning.n_bins + 1):
        members = (
            [l for l in range(1, codebook.size + 1) if binning.bin_of(l) == m] if m else []
        )
        for zi in range(n_zs):
            if members:
                hits = [l for l in members if typ_lz[l - 1, zi]]
                useq = codebook.entries[hits[0] - 1] if len(hits) == 1 else fallback
            else:
                useq = fallback
            prob = np.ones(n_ys)
            for i in range(n):
                prob *= cube[useq[i], zd[zi, i]][yd[:, i]]
            py[m, zi] = prob

    p_ind = np.einsum("xm,mzy,xz->xyz", pm, py, pxz)
    total = float(p_ind.sum())
    if abs(total - 1.0) > 1e-9:
        raise ValidationError(f"induced distribution sums to {total}, not 1")

    w_cube = ps.setup.w_cube()  # [y, z, x]
    wn = np.ones((n_xs, n_ys, n_zs))
    for i in range(n):
        wn *= w_cube[yd[:, i][None, :, None], zd[:, i][None, None, :], xd[:, i][:, None, None]]
    p_app = p_ind.sum(axis=0)[None, :, :] * wn
    return float(0.5 * np.abs(p_ind - p_app).sum())


# ---------------------------------------------------------------------------
# sampled diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiagnosticResult:
    tv: float
    stderr: float
    n_letters: int


def single_letter_diagnostic(trials: list[TrialRecord], ps: ProtocolSetup) -> DiagnosticResult:
    """Averaged single-letter total variation against the posterior product.

    Pools letter triples across positions and trials into an empirical joint,
    compares it with (empirical YZ marginal) x W, and reports a conservative
    per-cell standard error for the estimate.
    """
    if not trials:
        raise ValidationError("at least one trial is required")
    _, kx, ky, kz = ps.shape
    counts = np.zeros((kx, ky, kz))
    for t in trials:
        np.add.at(counts, (t.x, t.y, t.z), 1.0)
    n_letters = int(counts.sum())
    emp = counts / n_letters
    w_x = np.moveaxis(ps.setup.w_cube(), 2, 0)  # [x, y, z]
    approx = emp.sum(axis=0)[None, :, :] * w_x
    tv = float(0.5 * np.abs(emp - approx).sum())
    stderr = float(0.5 * np.sqrt(emp * (1.0 - emp) / n_letters).sum())
    return DiagnosticResult(tv=tv, stderr=stderr, n_letters=n_letters)


def empirical_distortion(
    trials: list[TrialRecord], spec: DistortionSpec
) -> tuple[float, float, int]:
    """Mean per-letter distortion across trials with its standard error.

    Trials that hit an infinite distortion entry are excluded from the mean
    and counted separately; returns (mean, stderr, n_infinite).
    """
    if not trials:
        raise ValidationError("at least one trial is required")
    vals = []
    n_inf = 0
    for t in trials:
        d = spec.d[t.x, t.y]
        if np.any(np.isinf(d)):
            n_inf += 1
            continue
        vals.append(float(d.mean()))
    if not vals:
        return float("inf"), float("nan"), n_inf
    arr = np.asarray(vals)
    se = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else float("nan")
    return float(arr.mean()), se, n_inf
