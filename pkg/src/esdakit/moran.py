"""Global and local Moran statistics with permutation inference.

The global statistic is I = (n/S0) * (sum_ij w_ij z_i z_j) / (sum_i z_i^2)
over non-island regions, with z the population z-scores of the analyzed
values. The local decomposition is I_i = (z_i / m2) * sum_j w_ij z_j with
m2 = sum_k z_k^2 / n_eff, so that under row-standardized weights with no
islands the mean of the I_i equals the global I. The bivariate local
statistic correlates one variable at a region with a second variable at
its neighbors: I_i = zx_i * sum_j w_ij zy_j, both variables standardized
separately (no m2 term; classification depends only on signs and p, so
the scaling convention cannot change a cluster).

Inference is one-tailed pseudo-significance. Monte Carlo mode draws M
permutations (total randomization for the global test, conditional
randomization holding the focal value fixed for local tests) and reports
(r + 1) / (M + 1) with r the count of simulated statistics at least as
extreme as the observed one, toward the observed departure. Exhaustive
mode enumerates every arrangement and reports the exact rank proportion;
floating-point ties near the observed statistic are re-decided in exact
rational arithmetic so the result equals an exact-arithmetic oracle.

Missing values are an error throughout: imputation is an explicit,
audited step that happens before inference, never silently inside it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from itertools import permutations as iter_permutations

import numpy as np

from . import _kernels
from .errors import (
    EnumerationTooLarge,
    MalformedInput,
    MissingValues,
    TooFewRegions,
    ZeroVariance,
)
from .textio import format_optional
from .weights import SpatialWeights

PERMUTATIONS = 999
ALPHA = 0.05
MIN_PERMUTATIONS = 99
MAX_ENUMERATION = 1_000_000

MODE_PERMUTATION = "permutation"
MODE_EXACT = "exact"


class ClusterClass(Enum):
    """LISA cluster taxonomy; CSV codes are the enum values."""

    HIGH_HIGH = "HH"
    LOW_LOW = "LL"
    LOW_HIGH = "LH"
    HIGH_LOW = "HL"
    NOT_SIGNIFICANT = "NS"
    UNDEFINED = "UNDEF"

    @property
    def code(self) -> str:
        return self.value


@dataclass(frozen=True)
class MoranResult:
    """Global Moran's I with permutation inference."""

    statistic: float
    expected: float
    pseudo_p: float
    z_sim: float
    permutations: int
    seed: int
    n_eff: int


@dataclass
class LisaResult:
    """Per-region local Moran statistics, pseudo p-values and clusters.

    Arrays are aligned to the full region universe; islands carry NaN in
    local_i / pseudo_p / z_focal / lag and class UNDEFINED.
    """

    local_i: np.ndarray
    pseudo_p: np.ndarray
    clusters: list[ClusterClass]
    alpha: float
    permutations: int
    seed: int
    z_focal: np.ndarray
    lag: np.ndarray
    fdr: bool = False

    @property
    def n(self) -> int:
        return len(self.clusters)

    def cluster_counts(self) -> dict[ClusterClass, int]:
        counts = {cls: 0 for cls in ClusterClass}
        for cls in self.clusters:
            counts[cls] += 1
        return counts

    def to_csv(self, region_ids: list[str]) -> str:
        if len(region_ids) != self.n:
            raise MalformedInput("region id list does not match result length")
        lines = ["region_id,local_I,pseudo_p,cluster"]
        for i, rid in enumerate(region_ids):
            lines.append(
                f"{rid},{format_optional(float(self.local_i[i]))},"
                f"{format_optional(float(self.pseudo_p[i]))},{self.clusters[i].code}"
            )
        return "\n".join(lines) + "\n"


def _require_complete(x: np.ndarray) -> None:
    if np.isnan(x).any():
        raise MissingValues("values contain MISSING entries; impute before inference")
    if np.isinf(x).any():
        raise MissingValues("values contain non-finite entries")


def standardize(values) -> np.ndarray:
    """Population z-scores: (x - mean) / sigma with sigma dividing by n."""
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise TooFewRegions("standardize needs at least two values")
    _require_complete(x)
    dev = x - x.mean()
    sigma = math.sqrt(float(np.mean(dev * dev)))
    if sigma == 0.0:
        raise ZeroVariance("all values are equal")
    return dev / sigma


def spatial_lag(w: SpatialWeights, z) -> np.ndarray:
    """lag_i = sum_j w_ij z_j; islands (empty rows) get lag 0."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (w.n,):
        raise MalformedInput(f"expected {w.n} values, got {z.shape}")
    lag = np.zeros(w.n)
    if w.weights.size:
        contrib = w.weights * z[w.indices]
        nonempty = w.cardinalities > 0
        lag[nonempty] = np.add.reduceat(contrib, w.indptr[:-1][nonempty])
    return lag


def classify(
    z_value: float, lag_value: float, pseudo_p: float, alpha: float, is_island: bool = False
) -> ClusterClass:
    """Quadrant classification of one region.

    Islands are UNDEFINED; anything not significant at ``alpha`` (or with
    an exact zero in the focal score or the lag, where no quadrant exists)
    is NOT_SIGNIFICANT.
    """
    if is_island:
        return ClusterClass.UNDEFINED
    if not pseudo_p < alpha:
        return ClusterClass.NOT_SIGNIFICANT
    if z_value == 0.0 or lag_value == 0.0:
        return ClusterClass.NOT_SIGNIFICANT
    if z_value > 0.0:
        return ClusterClass.HIGH_HIGH if lag_value > 0.0 else ClusterClass.HIGH_LOW
    return ClusterClass.LOW_LOW if lag_value < 0.0 else ClusterClass.LOW_HIGH


# --- shared preparation -------------------------------------------------------


def _active_set(w: SpatialWeights) -> tuple[np.ndarray, np.ndarray]:
    active_ids = np.nonzero(w.cardinalities > 0)[0].astype(np.int64)
    active_pos = np.full(w.n, -1, dtype=np.int64)
    active_pos[active_ids] = np.arange(active_ids.size, dtype=np.int64)
    return active_ids, active_pos


def _prepare(values, w: SpatialWeights):
    x = np.asarray(values, dtype=np.float64)
    if x.shape != (w.n,):
        raise MalformedInput(f"expected {w.n} values, got {x.shape}")
    _require_complete(x)
    active_ids, active_pos = _active_set(w)
    n_eff = int(active_ids.size)
    if n_eff < 3:
        raise TooFewRegions(f"only {n_eff} non-island regions; need at least 3")
    sub = x[active_ids]
    dev = sub - sub.mean()
    sigma = math.sqrt(float(np.mean(dev * dev)))
    if sigma == 0.0:
        raise ZeroVariance("analyzed values are constant over non-island regions")
    z = np.full(w.n, np.nan)
    z[active_ids] = dev / sigma
    return z, active_ids, active_pos, n_eff


def global_moran(values, w: SpatialWeights) -> float:
    """Global Moran's I over non-island regions (point estimate only)."""
    z, active_ids, _, n_eff = _prepare(values, w)
    za = z[active_ids]
    lag = spatial_lag(w, np.nan_to_num(z))
    num = float(za @ lag[active_ids])
    den = float(za @ za)
    return (n_eff / w.s0) * num / den


# --- global inference ----------------------------------------------------------


def global_moran_inference(
    values,
    w: SpatialWeights,
    permutations: int = PERMUTATIONS,
    seed: int = 0,
    method: str = MODE_PERMUTATION,
    workers: int | None = None,
) -> MoranResult:
    """Test the global statistic against the total-randomization null.

    Monte Carlo mode permutes the values over non-island regions M times
    (substreams keyed by (seed, permutation index)); exhaustive mode ranks
    the observed statistic among all n_eff! relabelings.
    """
    z, active_ids, active_pos, n_eff = _prepare(values, w)
    za = np.ascontiguousarray(z[active_ids])
    den = float(za @ za)
    scale = n_eff / (w.s0 * den)
    num_obs = float(
        _kernels.quadratic_form(w.indptr, w.indices, w.weights, za, active_ids, active_pos)
    )
    statistic = scale * num_obs
    expected = -1.0 / (n_eff - 1)
    upper = statistic >= expected

    if method == MODE_EXACT:
        count, total, sims = _exact_global(w, za, active_ids, active_pos, upper, scale)
        pseudo_p = count / total
        m_count = total
    elif method == MODE_PERMUTATION:
        if permutations < MIN_PERMUTATIONS:
            raise MalformedInput(f"need at least {MIN_PERMUTATIONS} permutations")
        with _kernels.worker_threads(workers):
            nums = _kernels.global_permutation_nums(
                w.indptr, w.indices, w.weights, za, active_ids, active_pos,
                int(permutations), _kernels.normalize_seed(seed),
            )
        r = int(np.sum(nums >= num_obs)) if upper else int(np.sum(nums <= num_obs))
        pseudo_p = (r + 1) / (permutations + 1)
        sims = scale * nums
        m_count = int(permutations)
    else:
        raise MalformedInput(f"unknown inference method {method!r}")

    sd = float(sims.std())
    z_sim = (statistic - float(sims.mean())) / sd if sd > 0 else math.nan
    return MoranResult(statistic, expected, pseudo_p, z_sim, m_count, int(seed), n_eff)


def _dense_active(w: SpatialWeights, active_ids, active_pos) -> np.ndarray:
    n_eff = active_ids.size
    dense = np.zeros((n_eff, n_eff))
    for a, i in enumerate(active_ids):
        for t in range(w.indptr[i], w.indptr[i + 1]):
            dense[a, active_pos[w.indices[t]]] = w.weights[t]
    return dense


def _exact_global(w, za, active_ids, active_pos, upper, scale):
    n_eff = int(active_ids.size)
    total = math.factorial(n_eff)
    if total > MAX_ENUMERATION:
        raise EnumerationTooLarge(
            f"{total} arrangements exceed the {MAX_ENUMERATION} budget; "
            "use method='permutation'"
        )
    dense = _dense_active(w, active_ids, active_pos)
    perms = np.array(list(iter_permutations(range(n_eff))), dtype=np.int64)
    zp = za[perms]
    nums = np.einsum("pi,ij,pj->p", zp, dense, zp, optimize=True)
    obs = nums[0]  # identity permutation comes first

    # Clear cases decide in float; anything within the band is re-decided
    # in exact rational arithmetic so ties rank exactly.
    tol = 1e-9 * max(1.0, float(np.abs(nums).max()))
    if upper:
        count = int(np.sum(nums > obs + tol))
    else:
        count = int(np.sum(nums < obs - tol))
    band = np.nonzero(np.abs(nums - obs) <= tol)[0]
    if band.size:
        pairs = [
            (a, b, Fraction(dense[a, b]))
            for a in range(n_eff)
            for b in range(n_eff)
            if dense[a, b] != 0.0
        ]
        zf = [Fraction(v) for v in za.tolist()]
        obs_f = sum(wf * zf[a] * zf[b] for a, b, wf in pairs)
        for p in band:
            perm = perms[p]
            num_f = sum(wf * zf[perm[a]] * zf[perm[b]] for a, b, wf in pairs)
            if (num_f >= obs_f) if upper else (num_f <= obs_f):
                count += 1
    return count, total, scale * nums


# --- local inference ------------------------------------------------------------


def local_moran(
    values,
    w: SpatialWeights,
    permutations: int = PERMUTATIONS,
    seed: int = 0,
    alpha: float = ALPHA,
    method: str = MODE_PERMUTATION,
    workers: int | None = None,
    fdr: bool = False,
) -> LisaResult:
    """Univariate LISA with conditional permutation inference.

    The focal z-score is held fixed while its neighbor positions are
    refilled from the other non-island values; per-region draws come from
    RNG substreams keyed by (seed, region_index), so results do not depend
    on worker-thread count.
    """
    z, active_ids, active_pos, n_eff = _prepare(values, w)
    m2 = float(z[active_ids] @ z[active_ids]) / n_eff
    return _local_engine(
        z, z, w, active_ids, active_pos, n_eff, 1.0 / m2,
        permutations, seed, alpha, method, workers, fdr,
    )


def bivariate_local_moran(
    x,
    y,
    w: SpatialWeights,
    permutations: int = PERMUTATIONS,
    seed: int = 0,
    alpha: float = ALPHA,
    method: str = MODE_PERMUTATION,
    workers: int | None = None,
    fdr: bool = False,
) -> LisaResult:
    """Bivariate LISA: x at the region against y at its neighbors.

    Conditional permutation holds zx_i fixed and refills the neighbor
    positions from the other regions' zy values. The first letter of a
    cluster reflects sign(zx_i), the second sign(lag of zy): HIGH_LOW is
    high x at the region with low y around it.
    """
    zx, active_ids, active_pos, n_eff = _prepare(x, w)
    zy, _, _, _ = _prepare(y, w)
    return _local_engine(
        zx, zy, w, active_ids, active_pos, n_eff, 1.0,
        permutations, seed, alpha, method, workers, fdr,
    )


def _local_engine(
    zx, zy, w, active_ids, active_pos, n_eff, stat_scale,
    permutations, seed, alpha, method, workers, fdr,
):
    zy_active = np.ascontiguousarray(zy[active_ids])

    if method == MODE_EXACT:
        counts, totals, lags = _exact_local(w, zx, zy, zy_active, active_ids, active_pos)
        p_active = counts / totals
        m_count = math.factorial(n_eff - 1)
    elif method == MODE_PERMUTATION:
        if permutations < MIN_PERMUTATIONS:
            raise MalformedInput(f"need at least {MIN_PERMUTATIONS} permutations")
        with _kernels.worker_threads(workers):
            counts, lags = _kernels.local_permutation_counts(
                w.indptr, w.indices, w.weights, zx, zy, zy_active, active_ids,
                int(permutations), _kernels.normalize_seed(seed),
            )
        p_active = (counts + 1.0) / (permutations + 1.0)
        m_count = int(permutations)
    else:
        raise MalformedInput(f"unknown inference method {method!r}")

    n = w.n
    local_i = np.full(n, np.nan)
    pseudo_p = np.full(n, np.nan)
    lag_full = np.full(n, np.nan)
    local_i[active_ids] = stat_scale * zx[active_ids] * lags
    pseudo_p[active_ids] = p_active
    lag_full[active_ids] = lags

    if fdr:
        cutoff = _bh_cutoff(p_active, alpha)
        # BH rejects p <= cutoff; classify() compares strictly, so nudge up.
        effective_alpha = np.nextafter(cutoff, np.inf) if cutoff > 0 else 0.0
    else:
        effective_alpha = alpha

    island = np.ones(n, dtype=bool)
    island[active_ids] = False
    clusters = [
        classify(float(zx[i]), float(lag_full[i]), float(pseudo_p[i]), effective_alpha,
                 is_island=bool(island[i]))
        for i in range(n)
    ]
    return LisaResult(
        local_i, pseudo_p, clusters, float(alpha), m_count, int(seed),
        zx.copy(), lag_full, fdr=fdr,
    )


def _bh_cutoff(pvals: np.ndarray, alpha: float) -> float:
    """Benjamini-Hochberg p-value cutoff (0.0 when nothing passes)."""
    m = pvals.size
    ordered = np.sort(pvals)
    passing = ordered <= (np.arange(1, m + 1) * alpha / m)
    if not passing.any():
        return 0.0
    return float(ordered[np.nonzero(passing)[0].max()])


def _exact_local(w, zx, zy, zy_active, active_ids, active_pos):
    n_active = int(active_ids.size)
    budget = math.factorial(n_active - 1)
    if budget > MAX_ENUMERATION:
        raise EnumerationTooLarge(
            f"{budget} arrangements exceed the {MAX_ENUMERATION} budget; "
            "use method='permutation'"
        )
    counts = np.zeros(n_active)
    totals = np.zeros(n_active)
    lags = np.zeros(n_active)
    pool_size = n_active - 1
    for a in range(n_active):
        i = int(active_ids[a])
        lo, hi = int(w.indptr[i]), int(w.indptr[i + 1])
        k = hi - lo
        wrow = w.weights[lo:hi]
        lag = 0.0
        for t in range(k):
            lag += wrow[t] * zy[w.indices[lo + t]]
        lags[a] = lag
        obs = zx[i] * lag
        upper = obs >= 0.0

        pool = np.delete(zy_active, a)
        inj = np.array(list(iter_permutations(range(pool_size), k)), dtype=np.int64)
        sims = zx[i] * (pool[inj] @ wrow)
        tol = 1e-9 * max(1.0, float(np.abs(sims).max()), abs(obs))
        if upper:
            count = int(np.sum(sims > obs + tol))
        else:
            count = int(np.sum(sims < obs - tol))
        band = np.nonzero(np.abs(sims - obs) <= tol)[0]
        if band.size:
            zxf = Fraction(float(zx[i]))
            wf = [Fraction(float(v)) for v in wrow.tolist()]
            poolf = [Fraction(float(v)) for v in pool.tolist()]
            obs_f = zxf * sum(
                wf[t] * Fraction(float(zy[w.indices[lo + t]])) for t in range(k)
            )
            for row in band:
                sim_f = zxf * sum(wf[t] * poolf[inj[row, t]] for t in range(k))
                if (sim_f >= obs_f) if upper else (sim_f <= obs_f):
                    count += 1
        counts[a] = count
        totals[a] = len(inj)
    return counts, totals, lags
