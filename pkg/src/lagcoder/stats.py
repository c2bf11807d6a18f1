"""Inferential statistics for lag-layer analyses.

Correlations and rank tests are written against closed-form definitions so
they can be checked by brute-force oracles; resampling procedures (paired
permutation of layer indices, electrode bootstrap, phase-randomized
surrogate selection) take explicit generators so every p-value is
reproducible bit-exactly from a master seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.fft as sfft
import scipy.linalg
import scipy.optimize
import scipy.stats

from .embeddings import pca_fit
from .encoding import GridEncoder, _window_starts, window_responses
from .errors import (DegenerateGroup, OutOfRange, ShapeMismatch,
                     TooFewElectrodes, TooFewPairs)
from .types import (EmbeddingSet, PeakLagTable, SignalRecording,
                    contiguous_folds)


def pearson(x, y) -> float:
    """Product-moment correlation; NaN when either side has zero variance."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeMismatch("pearson expects two equal-length vectors")
    if x.size < 3:
        return float("nan")
    xc = x - x.mean()
    yc = y - y.mean()
    den = np.sqrt((xc @ xc) * (yc @ yc))
    if not den > 0:
        return float("nan")
    return float((xc @ yc) / den)


def _average_ranks(x: np.ndarray) -> np.ndarray:
    return scipy.stats.rankdata(x, method="average")


def spearman(x, y) -> float:
    """Pearson correlation of average ranks."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeMismatch("spearman expects two equal-length vectors")
    return pearson(_average_ranks(x), _average_ranks(y))


@dataclass
class LagLayerResult:
    """Correlation between layer index and that layer's peak-encoding lag."""

    pearson_r: float
    spearman_r: float
    permutation_p: float
    peak_lags: np.ndarray
    layer_indices: tuple[int, ...]
    n_perm: int
    tag: str = ""
    condition: str = ""


def permutation_test_layers(peaks: PeakLagTable, n_perm: int = 100000,
                            rng: np.random.Generator | None = None) -> float:
    """One-sided p for the layer-vs-peak-lag correlation.

    Layer indices are permuted with the lags held fixed; p uses the add-one
    estimator (1 + #{r_perm >= r_obs}) / (1 + n_perm) so it is never zero.
    Returns NaN when the observed correlation is undefined (all lags equal).
    """
    rng = rng or np.random.default_rng()
    x = np.asarray(peaks.layer_indices, dtype=np.float64)
    y = np.asarray(peaks.peak_lag_ms, dtype=np.float64)
    xc = x - x.mean()
    yc = y - y.mean()
    den = np.sqrt((xc @ xc) * (yc @ yc))
    if not den > 0:
        return float("nan")
    obs = (xc @ yc) / den
    perms = np.tile(x, (n_perm, 1))
    rng.permuted(perms, axis=1, out=perms)
    r_perm = ((perms - x.mean()) @ yc) / den
    return float((1 + np.sum(r_perm >= obs)) / (1 + n_perm))


def lag_layer_correlation(peaks: PeakLagTable, n_perm: int = 100000,
                          rng: np.random.Generator | None = None) -> LagLayerResult:
    x = np.asarray(peaks.layer_indices, dtype=np.float64)
    y = np.asarray(peaks.peak_lag_ms, dtype=np.float64)
    return LagLayerResult(
        pearson_r=pearson(x, y),
        spearman_r=spearman(x, y),
        permutation_p=permutation_test_layers(peaks, n_perm, rng),
        peak_lags=y.copy(),
        layer_indices=tuple(int(i) for i in peaks.layer_indices),
        n_perm=n_perm,
        tag=peaks.tag,
        condition=peaks.condition,
    )


def bootstrap_roi_peaks(values, n_boot: int = 10000,
                        rng: np.random.Generator | None = None):
    """Two-tailed bootstrap p that the electrode mean differs from zero.

    values: electrode values on the last axis, optionally stacked by layer
    on the first. Electrodes are resampled with replacement (the same draw
    reused across layers); p = 2 * min(P(mean <= 0), P(mean >= 0)) with the
    add-one correction, capped at 1.
    """
    rng = rng or np.random.default_rng()
    arr = np.asarray(values, dtype=np.float64)
    n_el = arr.shape[-1]
    if n_el < 2:
        raise TooFewElectrodes(f"bootstrap needs >= 2 electrodes, got {n_el}")
    idx = rng.integers(0, n_el, size=(n_boot, n_el))
    means = arr[..., idx].mean(axis=-1)  # [..., n_boot]
    lo = 1 + np.sum(means <= 0, axis=-1)
    hi = 1 + np.sum(means >= 0, axis=-1)
    p = 2.0 * np.minimum(lo, hi) / (1 + n_boot)
    p = np.minimum(p, 1.0)
    return float(p) if arr.ndim == 1 else p


def _surrogate_rows(spec: np.ndarray, n: int,
                    rng: np.random.Generator) -> np.ndarray:
    """One surrogate batch from precomputed rfft coefficients (rows intact).

    DC is kept; for even lengths the Nyquist bin is kept too (both must stay
    real); remaining bins get iid uniform phases per row. A complex64 spec
    selects the single-precision fast path used by the selection null.
    """
    out = spec.copy()
    n_bins = spec.shape[-1]
    free_lo = 1
    free_hi = n_bins - 1 if n % 2 == 0 else n_bins
    if free_hi > free_lo:
        real_t = np.float32 if spec.dtype == np.complex64 else np.float64
        phases = rng.random(size=spec.shape[:-1] + (free_hi - free_lo,),
                            dtype=real_t)
        phases *= real_t(2.0 * np.pi)
        mags = np.abs(spec[..., free_lo:free_hi])
        band = out[..., free_lo:free_hi]
        np.multiply(mags, np.cos(phases), out=band.real)
        np.multiply(mags, np.sin(phases), out=band.imag)
    return sfft.irfft(out, n=n, axis=-1)


def _phase_randomize_rows(samples: np.ndarray,
                          rng: np.random.Generator) -> np.ndarray:
    """Surrogates preserving each row's FFT magnitudes exactly."""
    x = np.asarray(samples, dtype=np.float64)
    n = x.shape[-1]
    return _surrogate_rows(sfft.rfft(x, axis=-1), n, rng)


def phase_randomize(signal, rng: np.random.Generator | None = None) -> np.ndarray:
    """Phase-randomized surrogate of one series; power spectrum preserved."""
    rng = rng or np.random.default_rng()
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeMismatch("phase_randomize expects a 1-D series")
    return _phase_randomize_rows(x[None, :], rng)[0]


def fdr_bh(p) -> np.ndarray:
    """Benjamini-Hochberg step-up adjusted p-values.

    q_(i) = min over j >= i of k * p_(j) / j on the sorted vector; output is
    returned in the input order and is monotone in p.
    """
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeMismatch("fdr_bh expects a 1-D vector")
    if arr.size == 0:
        return arr.copy()
    if np.any(np.isnan(arr)) or arr.min() < 0 or arr.max() > 1:
        raise OutOfRange("p-values must lie in [0, 1]")
    k = arr.size
    order = np.argsort(arr, kind="stable")
    scaled = arr[order] * k / np.arange(1, k + 1)
    q_sorted = np.minimum.accumulate(scaled[::-1])[::-1]
    q = np.empty_like(arr)
    q[order] = np.minimum(q_sorted, 1.0)
    return q


@dataclass
class SelectionReport:
    """Per-electrode significance of stimulus-locked encoding."""

    electrode_ids: tuple[str, ...]
    observed_max_r: np.ndarray
    p_values: np.ndarray
    q_values: np.ndarray
    selected: np.ndarray  # bool per electrode
    null_max: np.ndarray  # one max-over-grid value per permutation
    n_perm: int
    q_threshold: float

    def selected_ids(self) -> tuple[str, ...]:
        return tuple(e for e, s in zip(self.electrode_ids, self.selected) if s)


def select_electrodes(rec: SignalRecording, onsets: Sequence[float],
                      static_set: EmbeddingSet, lags_ms,
                      window_ms: float = 200.0, n_folds: int = 10,
                      n_components: int = 50, n_perm: int = 5000,
                      q_threshold: float = 0.01,
                      rng: np.random.Generator | None = None,
                      electrode_ids: Sequence[str] | None = None) -> SelectionReport:
    """Pick electrodes whose max-over-lags encoding beats a surrogate null.

    The null is conservative: per permutation every electrode's signal is
    phase-randomized, the full lag encoding is rerun with the static
    embeddings, and the maximum r across lags AND electrodes is recorded.
    Each electrode's p is the add-one percentile of its observed max in that
    null; selection applies Benjamini-Hochberg at q < q_threshold.
    """
    rng = rng or np.random.default_rng()
    if static_set.layer_count != 1:
        raise ShapeMismatch("selection expects a single-layer embedding set")
    lags_ms = np.asarray(lags_ms, dtype=np.float64)
    onsets = np.asarray(onsets, dtype=np.float64)
    n_words = onsets.size
    if static_set.n_words != n_words:
        raise ShapeMismatch("static set rows do not match word count")
    ids = tuple(electrode_ids) if electrode_ids is not None else tuple(
        f"e{i:02d}" for i in range(rec.n_electrodes))

    folds = contiguous_folds(n_words, n_folds)
    comps = min(n_components, static_set.dim)
    model = pca_fit(static_set.layers[0], comps)
    feats = model.transform(static_set.layers[0])

    responses = window_responses(rec, onsets, lags_ms, window_ms)
    encoder = GridEncoder(lambda f: feats, folds, responses.word_lag_valid,
                          dtype=np.float32)
    obs_grid = encoder.r_grid(responses.by_word())
    obs_max = np.nanmax(np.where(np.isnan(obs_grid), -np.inf, obs_grid), axis=0)

    # surrogate loop: windows share the precomputed start indices
    n_win = max(1, int(round(window_ms / 1000.0 * rec.sample_rate)))
    starts = _window_starts(onsets, lags_ms, rec.sample_rate, rec.t0, n_win)
    safe = np.clip(starts, 0, max(0, rec.n_samples - n_win))
    null_max = np.empty(n_perm)
    cums = np.zeros((rec.n_electrodes, rec.n_samples + 1))
    spec = sfft.rfft(np.asarray(rec.samples, dtype=np.float32), axis=-1)
    for i in range(n_perm):
        surr = _surrogate_rows(spec, rec.n_samples, rng)
        np.cumsum(surr, axis=1, out=cums[:, 1:])
        vals = (cums[:, safe + n_win] - cums[:, safe]) / n_win
        grid = encoder.r_grid(np.moveaxis(vals, 0, -1))
        null_max[i] = np.nanmax(grid)
    p = (1 + np.sum(null_max[None, :] >= obs_max[:, None], axis=1)) / (1 + n_perm)
    q = fdr_bh(p)
    return SelectionReport(
        electrode_ids=ids,
        observed_max_r=np.asarray(obs_max, dtype=np.float64),
        p_values=p,
        q_values=q,
        selected=q < q_threshold,
        null_max=null_max,
        n_perm=n_perm,
        q_threshold=q_threshold,
    )


@dataclass
class PairedTtestResult:
    layer_indices: tuple[int, ...]
    t_stats: np.ndarray
    p_values: np.ndarray
    q_values: np.ndarray
    mean_difference: np.ndarray


def paired_ttest_layers(peaks_a: np.ndarray, peaks_b: np.ndarray,
                        layer_indices: Sequence[int] | None = None) -> PairedTtestResult:
    """Per-layer paired two-sided t-test across electrodes, BH-corrected.

    peaks_a/peaks_b: [n_electrodes x n_layers] peak lags under the two
    conditions, rows aligned by electrode. All-zero differences in a layer
    give t=0, p=1 by definition.
    """
    a = np.asarray(peaks_a, dtype=np.float64)
    b = np.asarray(peaks_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ShapeMismatch("expected matching [n_electrodes x n_layers] tables")
    n_el, n_layers = a.shape
    if n_el < 3:
        raise TooFewPairs(f"paired t-test needs >= 3 electrodes, got {n_el}")
    d = a - b
    mean = d.mean(axis=0)
    sd = d.std(axis=0, ddof=1)
    t = np.zeros(n_layers)
    p = np.ones(n_layers)
    for j in range(n_layers):
        if sd[j] == 0.0:
            if mean[j] == 0.0:
                t[j], p[j] = 0.0, 1.0
            else:
                t[j] = np.inf if mean[j] > 0 else -np.inf
                p[j] = 0.0
        else:
            t[j] = mean[j] / (sd[j] / np.sqrt(n_el))
            p[j] = 2.0 * scipy.stats.t.sf(abs(t[j]), df=n_el - 1)
    idx = tuple(layer_indices) if layer_indices is not None else tuple(
        range(1, n_layers + 1))
    return PairedTtestResult(idx, t, p, fdr_bh(p), mean)


def levene_test(groups: Sequence[Sequence[float]]) -> tuple[float, float]:
    """Classic Levene statistic (group-mean centering) and its F-test p.

    Degenerate spreads are resolved explicitly: zero between- and
    within-group deviation variance gives F=0, p=1; positive between with
    zero within gives F=inf, p=0.
    """
    arrays = [np.asarray(g, dtype=np.float64) for g in groups]
    if len(arrays) < 2:
        raise DegenerateGroup("need at least two groups")
    for g in arrays:
        if g.size < 2:
            raise DegenerateGroup("each group needs at least two values")
    k = len(arrays)
    n_total = sum(g.size for g in arrays)
    z = [np.abs(g - g.mean()) for g in arrays]
    z_bar = np.concatenate(z).mean()
    between = sum(g.size * (zi.mean() - z_bar) ** 2 for g, zi in zip(arrays, z))
    within = sum(((zi - zi.mean()) ** 2).sum() for zi in z)
    if within == 0.0:
        if between == 0.0:
            return 0.0, 1.0
        return float("inf"), 0.0
    f_stat = ((n_total - k) / (k - 1)) * between / within
    p = float(scipy.stats.f.sf(f_stat, k - 1, n_total - k))
    return float(f_stat), p


# mixed model: peak_lag ~ 1 + layer with correlated per-electrode random
# intercept and slope, variance components by REML


@dataclass
class LmmFit:
    fixed_intercept: float
    fixed_slope: float
    slope_std_error: float
    slope_p: float
    intercept_var: float
    slope_var: float
    intercept_slope_cov: float
    residual_var: float
    converged: bool
    singular: bool
    log_restricted_likelihood: float
    theta: np.ndarray
    n_electrodes: int
    n_rows: int


_THETA_CLIP = 12.0
_SIGMA2_FLOOR = 1e-12


def _lmm_groups(rows) -> list[tuple[np.ndarray, np.ndarray]]:
    by_key: dict = {}
    for key, layer, lag in rows:
        by_key.setdefault(key, []).append((float(layer), float(lag)))
    groups = []
    for key, pairs in by_key.items():
        layers = np.array([p[0] for p in pairs])
        lags = np.array([p[1] for p in pairs])
        x = np.column_stack([np.ones_like(layers), layers])
        groups.append((x, lags))
    return groups


def _lambda_of(theta: np.ndarray) -> np.ndarray:
    t = np.clip(np.asarray(theta, dtype=np.float64), -_THETA_CLIP, _THETA_CLIP)
    return np.array([[np.exp(t[0]), 0.0], [t[1], np.exp(t[2])]])


def _reml_pieces(theta, groups):
    """GLS normal-equation pieces under V_e = I + Z Lambda Lambda' Z'."""
    lam = _lambda_of(theta)
    psi_rel = lam @ lam.T
    a = np.zeros((2, 2))
    b = np.zeros(2)
    logdet_v = 0.0
    solves = []
    for x, y in groups:
        v = np.eye(x.shape[0]) + x @ psi_rel @ x.T
        c, low = scipy.linalg.cho_factor(v, lower=True, check_finite=False)
        logdet_v += 2.0 * np.sum(np.log(np.diag(c)))
        vx = scipy.linalg.cho_solve((c, low), x, check_finite=False)
        vy = scipy.linalg.cho_solve((c, low), y, check_finite=False)
        a += x.T @ vx
        b += x.T @ vy
        solves.append((x, y, (c, low)))
    beta = np.linalg.solve(a, b)
    rss = 0.0
    for x, y, (c, low) in solves:
        r = y - x @ beta
        rss += float(r @ scipy.linalg.cho_solve((c, low), r, check_finite=False))
    return lam, a, beta, logdet_v, rss


def reml_loglik(theta, groups) -> float:
    """Restricted log-likelihood profiled over beta and the residual scale.

    Exposed so fits can be spot-checked for local optimality against
    perturbed parameter vectors.
    """
    n = sum(y.size for _, y in groups)
    p = 2
    try:
        _, a, _, logdet_v, rss = _reml_pieces(theta, groups)
    except np.linalg.LinAlgError:
        return -np.inf
    sigma2 = max(rss / (n - p), _SIGMA2_FLOOR)
    sign, logdet_a = np.linalg.slogdet(a)
    if sign <= 0:
        return -np.inf
    return -0.5 * ((n - p) * (1.0 + np.log(2.0 * np.pi * sigma2))
                   + logdet_v + logdet_a)


def fit_lmm(rows) -> LmmFit:
    """Fit peak_lag ~ 1 + layer + (1 + layer | electrode) by REML.

    rows: iterable of (electrode_key, layer, peak_lag). The random-effect
    covariance is parameterized through its scaled Cholesky factor
    theta = (log l11, l21, log l22), which keeps it positive semidefinite
    for every theta. Slope inference uses a Wald z statistic.
    """
    groups = _lmm_groups(rows)
    if len(groups) < 3:
        raise TooFewPairs(f"mixed model needs >= 3 electrodes, got {len(groups)}")
    for x, _ in groups:
        if x.shape[0] < 3:
            raise TooFewPairs("each electrode needs >= 3 layers")

    def objective(theta):
        return -reml_loglik(theta, groups)

    best = None
    for start in (np.zeros(3), np.array([-2.0, 0.0, -2.0])):
        res = scipy.optimize.minimize(
            objective, start, method="Nelder-Mead",
            options={"maxiter": 4000, "maxfev": 4000,
                     "xatol": 1e-9, "fatol": 1e-11})
        if best is None or res.fun < best.fun:
            best = res
    theta = np.clip(best.x, -_THETA_CLIP, _THETA_CLIP)
    lam, a, beta, _, rss = _reml_pieces(theta, groups)
    n = sum(y.size for _, y in groups)
    sigma2 = max(rss / (n - 2), _SIGMA2_FLOOR)
    psi = sigma2 * (lam @ lam.T)
    cov_beta = sigma2 * np.linalg.inv(a)
    se = float(np.sqrt(cov_beta[1, 1]))
    z = beta[1] / se if se > 0 else np.inf
    slope_p = float(2.0 * scipy.stats.norm.sf(abs(z)))
    singular = bool(min(lam[0, 0], lam[1, 1]) < 1e-4)
    return LmmFit(
        fixed_intercept=float(beta[0]),
        fixed_slope=float(beta[1]),
        slope_std_error=se,
        slope_p=slope_p,
        intercept_var=float(psi[0, 0]),
        slope_var=float(psi[1, 1]),
        intercept_slope_cov=float(psi[0, 1]),
        residual_var=float(sigma2),
        converged=bool(best.success),
        singular=singular,
        log_restricted_likelihood=float(reml_loglik(theta, groups)),
        theta=theta,
        n_electrodes=len(groups),
        n_rows=n,
    )


def lmm_groups_from_rows(rows) -> list[tuple[np.ndarray, np.ndarray]]:
    """Grouped design/response pairs, for use with reml_loglik."""
    return _lmm_groups(rows)
