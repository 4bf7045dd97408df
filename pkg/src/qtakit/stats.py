"""Repeated-measures model comparison and its validity diagnostics.

The comparison engine consumes a balanced score matrix (model x repeat
x fold), averages folds into repeat-level scores, runs a two-way
(model + repeat block) ANOVA, and applies the studentized-range
post-hoc test: two models differ significantly iff the gap between
their repeat-averaged means exceeds the minimum significant
difference MSD = q_crit * sqrt(MSE / n_repeats).

The studentized-range CDF is computed by direct double integration
(outer chi distribution of the pooled scale, inner normal-range
probability) on Gauss-Legendre panels; no tabulated constants.
Reported p-values are floored at 0.001 to match table conventions,
with raw values retained.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from math import gamma as gamma_fn
from pathlib import Path

import numpy as np
from scipy.special import erfinv, fdtrc, ndtr, stdtr, stdtrit

from .errors import NumericError, ParseError, ValidationError

__all__ = [
    "ScoreMatrix",
    "repeat_means",
    "TukeyResult",
    "rm_anova_tukey",
    "studentized_range_cdf",
    "studentized_range_crit",
    "t_quantile",
    "icc1",
    "n_eff",
    "ShapiroResult",
    "shapiro_wilk",
    "LeveneResult",
    "levene",
    "PairedBattery",
    "paired_battery",
    "wilcoxon_signed_rank",
]

P_FLOOR = 1e-3


# ---- score matrix -------------------------------------------------------

CSV_COLUMNS = ("model", "repeat", "fold", "stratum", "metric", "value")


@dataclass
class ScoreMatrix:
    """Rows of (model, repeat, fold, stratum=(label, property), metric, value)."""

    rows: list = field(default_factory=list)

    def add(self, model, repeat, fold, label, prop, metric, value):
        self.rows.append((model, int(repeat), int(fold), label, prop, metric, float(value)))

    def models(self):
        return sorted({r[0] for r in self.rows})

    def strata(self):
        return sorted({(r[3], r[4]) for r in self.rows})

    def fold_scores(self, model, metric, strata=None, n_repeats=5, n_folds=5):
        """(n_repeats, n_folds) matrix, averaging the selected strata
        within each cell first. Missing cells are an error (the ANOVA
        requires a balanced design)."""
        cells = defaultdict(list)
        for m, r, f, label, prop, met, v in self.rows:
            if m != model or met != metric:
                continue
            if strata is not None and (label, prop) not in set(strata):
                continue
            cells[(r, f)].append(v)
        out = np.empty((n_repeats, n_folds))
        for r in range(n_repeats):
            for f in range(n_folds):
                if (r, f) not in cells:
                    raise ValidationError(
                        f"missing score cell (model={model}, repeat={r}, fold={f}, "
                        f"metric={metric})"
                    )
                out[r, f] = float(np.mean(cells[(r, f)]))
        return out

    def write_csv(self, path):
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for m, r, f, label, prop, met, v in sorted(self.rows):
                writer.writerow([m, r, f, f"{label}:{prop}", met, repr(v)])

    @classmethod
    def read_csv(cls, path):
        sm = cls()
        with Path(path).open("r", newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(header) != CSV_COLUMNS:
                raise ParseError(f"expected columns {CSV_COLUMNS}, got {header}", line=1)
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(CSV_COLUMNS):
                    raise ParseError(f"expected {len(CSV_COLUMNS)} fields", line=lineno)
                model, r, f, stratum, metric, value = row
                label, _, prop = stratum.partition(":")
                try:
                    sm.add(model, int(r), int(f), label, prop, metric, float(value))
                except ValueError:
                    raise ParseError(f"malformed score row {row}", line=lineno) from None
        return sm


def repeat_means(fold_matrix: np.ndarray) -> np.ndarray:
    """Average fold scores into one score per repeat."""
    m = np.asarray(fold_matrix, dtype=float)
    if m.ndim != 2:
        raise ValidationError("fold matrix must be (repeats, folds)")
    return m.mean(axis=1)


# ---- studentized range --------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


def _panels(a, b, n_panels):
    edges = np.linspace(a, b, n_panels + 1)
    mid = (edges[:-1] + edges[1:]) / 2.0
    half = (edges[1:] - edges[:-1]) / 2.0
    nodes = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    weights = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    return nodes, weights


def _normal_range_cdf(w, k):
    """P(range of k iid standard normals <= w), vectorized over w."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    z, wz = _panels(-8.5, 8.5, 17)
    phi = np.exp(-0.5 * z**2) / np.sqrt(2 * np.pi)
    inner = ndtr(z)[None, :] - ndtr(z[None, :] - w[:, None])
    inner = np.clip(inner, 0.0, 1.0)
    vals = k * np.sum(wz * phi * inner ** (k - 1), axis=1)
    return np.clip(vals, 0.0, 1.0)


def studentized_range_cdf(q, k, df) -> float:
    """P(Q_{k, df} <= q) by outer integration over the pooled scale.

    The outer variable s = sqrt(chi2_df / df) has density
    df^{df/2} s^{df-1} exp(-df s^2 / 2) / (Gamma(df/2) 2^{df/2 - 1}).
    """
    if q <= 0:
        return 0.0
    if k < 2 or df < 1:
        raise ValidationError("studentized range needs k >= 2 and df >= 1")
    s, ws = _panels(1e-9, 6.0, 14)
    log_norm = (df / 2.0) * np.log(df) - np.log(gamma_fn(df / 2.0)) - (df / 2.0 - 1.0) * np.log(2.0)
    dens = np.exp(log_norm + (df - 1) * np.log(s) - df * s**2 / 2.0)
    inner = _normal_range_cdf(q * s, k)
    return float(np.clip(np.sum(ws * dens * inner), 0.0, 1.0))


def studentized_range_crit(alpha: float, k: int, df: int) -> float:
    """Upper-alpha critical value by bisection of the CDF."""
    target = 1.0 - alpha
    lo, hi = 1e-9, 100.0
    for _ in range(80):
        mid = (lo + hi) / 2.0
        if studentized_range_cdf(mid, k, df) < target:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2.0


def t_quantile(p: float, df: int) -> float:
    """Student-t quantile."""
    return float(stdtrit(df, p))


# ---- the comparison engine ----------------------------------------------


@dataclass
class TukeyResult:
    models: list
    means: np.ndarray  # repeat-averaged mean per model
    sems: np.ndarray  # SEM of the repeat-level means
    ci_half: np.ndarray  # t_{0.975, n-1} * SEM
    p_raw: np.ndarray  # pairwise p-values, no floor
    p_reported: np.ndarray  # floored at 0.001, diagonal 1
    msd: float
    mse: float
    df_error: int
    q_crit: float
    n_repeats: int
    degenerate: bool = False

    def significant(self, i, j, _alpha=0.05):
        return abs(self.means[i] - self.means[j]) > self.msd


def rm_anova_tukey(means_by_model: dict[str, np.ndarray], alpha: float = 0.05) -> TukeyResult:
    """Repeated-measures ANOVA + studentized-range pairwise comparison.

    Input: repeat-level mean vectors (equal length n) per model. The
    error term is the model x repeat interaction with (k-1)(n-1)
    degrees of freedom; repeat acts as the blocking factor.
    """
    models = sorted(means_by_model)
    if len(models) < 2:
        raise ValidationError("need at least two models to compare")
    X = np.stack([np.asarray(means_by_model[m], dtype=float) for m in models])
    k, n = X.shape
    if n < 2:
        raise ValidationError("need at least two repeats")

    grand = X.mean()
    model_means = X.mean(axis=1)
    repeat_means_ = X.mean(axis=0)
    ss_model = n * float(((model_means - grand) ** 2).sum())
    ss_repeat = k * float(((repeat_means_ - grand) ** 2).sum())
    ss_total = float(((X - grand) ** 2).sum())
    ss_err = max(0.0, ss_total - ss_model - ss_repeat)
    df_err = (k - 1) * (n - 1)
    mse = ss_err / df_err

    degenerate = mse <= 0.0
    if degenerate:
        q_crit = np.inf
        msd = 0.0
    else:
        q_crit = studentized_range_crit(alpha, k, df_err)
        msd = q_crit * np.sqrt(mse / n)

    p_raw = np.ones((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            gap = abs(model_means[i] - model_means[j])
            if degenerate:
                p = 1.0 if gap == 0.0 else 0.0
            else:
                q_stat = gap / np.sqrt(mse / n)
                p = 1.0 - studentized_range_cdf(q_stat, k, df_err)
            p_raw[i, j] = p_raw[j, i] = p
    p_reported = np.maximum(p_raw, P_FLOOR)
    np.fill_diagonal(p_reported, 1.0)

    sems = X.std(axis=1, ddof=1) / np.sqrt(n)
    t_crit = t_quantile(1.0 - alpha / 2.0, n - 1)
    return TukeyResult(
        models=models,
        means=model_means,
        sems=sems,
        ci_half=t_crit * sems,
        p_raw=p_raw,
        p_reported=p_reported,
        msd=float(msd),
        mse=float(mse),
        df_error=df_err,
        q_crit=float(q_crit),
        n_repeats=n,
        degenerate=degenerate,
    )


# ---- diagnostics ---------------------------------------------------------


def icc1(groups) -> float:
    """One-way ICC(1,1) over balanced groups (here: folds per repeat)."""
    X = np.asarray(groups, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValidationError("need at least two balanced groups")
    g, k = X.shape
    grand = X.mean()
    group_means = X.mean(axis=1)
    msb = k * float(((group_means - grand) ** 2).sum()) / (g - 1)
    msw = float(((X - group_means[:, None]) ** 2).sum()) / (g * (k - 1))
    denom = msb + (k - 1) * msw
    if denom == 0.0:
        raise NumericError("ICC undefined: zero variance everywhere")
    return (msb - msw) / denom


def n_eff(icc: float, k: int = 5, n_total: int = 25) -> float:
    """Effective sample size n / (1 + (k-1) * max(0, ICC))."""
    return n_total / (1.0 + (k - 1) * max(0.0, icc))


@dataclass
class ShapiroResult:
    w: float
    p: float
    degenerate: bool = False


def shapiro_wilk(x) -> ShapiroResult:
    """Shapiro-Wilk normality test for 3 <= n <= 50.

    Uses the standard small-sample approximation: Blom scores for the
    expected order statistics, polynomial-corrected tail coefficients,
    an exact p transform at n=3 and log-normal approximations above.
    """
    x = np.sort(np.asarray(x, dtype=float))
    n = len(x)
    if not 3 <= n <= 50:
        raise ValidationError("shapiro_wilk supports 3 <= n <= 50")
    ss = float(((x - x.mean()) ** 2).sum())
    if ss <= 1e-300 or x[0] == x[-1]:
        return ShapiroResult(w=np.nan, p=np.nan, degenerate=True)

    m = -np.sqrt(2.0) * erfinv(1.0 - 2.0 * (np.arange(1, n + 1) - 0.375) / (n + 0.25))
    mm = float((m * m).sum())
    c = m / np.sqrt(mm)
    u = 1.0 / np.sqrt(n)
    a = np.empty(n)
    poly_n = ((((-2.706056 * u + 4.434685) * u - 2.071190) * u - 0.147981) * u + 0.221157) * u
    a_n = c[-1] + poly_n
    if n > 5:
        poly_n1 = ((((-3.582633 * u + 5.682633) * u - 1.752461) * u - 0.293762) * u + 0.042981) * u
        a_n1 = c[-2] + poly_n1
        phi = (mm - 2.0 * m[-1] ** 2 - 2.0 * m[-2] ** 2) / (1.0 - 2.0 * a_n**2 - 2.0 * a_n1**2)
        a[2 : n - 2] = m[2 : n - 2] / np.sqrt(phi)
        a[-1], a[-2] = a_n, a_n1
        a[0], a[1] = -a_n, -a_n1
    else:
        phi = (mm - 2.0 * m[-1] ** 2) / (1.0 - 2.0 * a_n**2)
        if n > 3:
            a[1 : n - 1] = m[1 : n - 1] / np.sqrt(phi)
        a[-1] = a_n
        a[0] = -a_n
        if n == 3:
            a[0], a[1], a[2] = -np.sqrt(0.5), 0.0, np.sqrt(0.5)

    w = float((a @ x) ** 2 / ss)
    w = min(w, 1.0)

    if n == 3:
        p = 6.0 / np.pi * (np.arcsin(np.sqrt(w)) - np.arcsin(np.sqrt(0.75)))
        p = float(np.clip(p, 0.0, 1.0))
        return ShapiroResult(w=w, p=p)
    if n <= 11:
        g = -2.273 + 0.459 * n
        mu = 0.5440 - 0.39978 * n + 0.025054 * n**2 - 0.0006714 * n**3
        sigma = np.exp(1.3822 - 0.77857 * n + 0.062767 * n**2 - 0.0020322 * n**3)
        arg = g - np.log(max(1e-300, 1.0 - w))
        if arg <= 0:
            return ShapiroResult(w=w, p=0.0)
        z = (-np.log(arg) - mu) / sigma
    else:
        ln_n = np.log(n)
        mu = -1.5861 - 0.31082 * ln_n - 0.083751 * ln_n**2 + 0.0038915 * ln_n**3
        sigma = np.exp(-0.4803 - 0.082676 * ln_n + 0.0030302 * ln_n**2)
        z = (np.log(max(1e-300, 1.0 - w)) - mu) / sigma
    p = float(1.0 - ndtr(z))
    return ShapiroResult(w=w, p=p)


@dataclass
class LeveneResult:
    stat: float
    p: float
    degenerate: bool = False


def levene(groups, center: str = "mean") -> LeveneResult:
    """Levene homoscedasticity test (classic mean-centered form by
    default; ``center='median'`` gives the Brown-Forsythe variant)."""
    arrays = [np.asarray(g, dtype=float) for g in groups]
    if len(arrays) < 2 or any(len(g) < 2 for g in arrays):
        raise ValidationError("levene needs >= 2 groups with >= 2 points each")
    if center == "mean":
        z = [np.abs(g - g.mean()) for g in arrays]
    elif center == "median":
        z = [np.abs(g - np.median(g)) for g in arrays]
    else:
        raise ValidationError(f"unknown centering {center!r}")
    n_total = sum(len(g) for g in z)
    n_groups = len(z)
    z_means = [float(g.mean()) for g in z]
    if all(mu == z_means[0] for mu in z_means):
        return LeveneResult(stat=0.0, p=1.0)  # equal spread-means: SS_between is 0
    zbar = float(np.concatenate(z).mean())
    ss_between = sum(len(g) * (g.mean() - zbar) ** 2 for g in z)
    ss_within = sum(float(((g - g.mean()) ** 2).sum()) for g in z)
    if ss_between == 0.0:
        return LeveneResult(stat=0.0, p=1.0)
    if ss_within == 0.0:
        return LeveneResult(stat=np.inf, p=0.0, degenerate=True)
    stat = (n_total - n_groups) / (n_groups - 1) * ss_between / ss_within
    p = float(fdtrc(n_groups - 1, n_total - n_groups, stat))
    return LeveneResult(stat=float(stat), p=p)


# ---- paired battery -------------------------------------------------------


def wilcoxon_signed_rank(diffs, exact_limit: int = 25):
    """Two-sided Wilcoxon signed-rank test with midranks.

    Zero differences are dropped before ranking. For m <= exact_limit
    the null distribution of W+ is enumerated exactly by convolution
    over the (doubled, integer) rank values; beyond that a normal
    approximation with tie correction is used.

    Returns (W+, p, degenerate_flag).
    """
    d = np.asarray(diffs, dtype=float)
    d = d[d != 0.0]
    m = len(d)
    if m == 0:
        return np.nan, np.nan, True
    order = np.argsort(np.abs(d), kind="stable")
    ranks = np.empty(m)
    abs_sorted = np.abs(d)[order]
    i = 0
    while i < m:
        j = i
        while j + 1 < m and abs_sorted[j + 1] == abs_sorted[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    w_plus = float(ranks[d > 0].sum())

    if m <= exact_limit:
        scaled = np.rint(ranks * 2.0).astype(int)  # midranks * 2 are integers
        total = int(scaled.sum())
        counts = np.zeros(total + 1, dtype=float)
        counts[0] = 1.0
        for r in scaled:
            shifted = np.zeros_like(counts)
            shifted[r:] = counts[: len(counts) - r]
            counts = counts + shifted
        counts /= 2.0**m
        w_scaled = int(round(w_plus * 2.0))
        cdf = float(counts[: w_scaled + 1].sum())
        sf = float(counts[w_scaled:].sum())
        p = min(1.0, 2.0 * min(cdf, sf))
        return w_plus, p, False

    mean = m * (m + 1) / 4.0
    tie_term = float((ranks**2).sum())  # sum of squared midranks
    var = tie_term / 4.0
    if var == 0.0:
        return w_plus, np.nan, True
    z = (w_plus - mean) / np.sqrt(var)
    p = float(2.0 * (1.0 - ndtr(abs(z))))
    return w_plus, min(1.0, p), False


@dataclass
class PairedBattery:
    n: int
    delta_mean: float
    sem: float
    icc_delta: float
    sw_p: float
    t_stat: float
    t_p: float
    wilcoxon_stat: float
    wilcoxon_p: float
    degenerate: bool = False


def paired_battery(a: np.ndarray, b: np.ndarray) -> PairedBattery:
    """All paired diagnostics on matched fold scores grouped by repeat.

    ``a`` and ``b`` are (repeats, folds) matrices from matched cells.
    Reports the mean difference with its SEM, the ICC of differences
    grouped by repeat, Shapiro-Wilk normality of the differences, the
    two-sided paired t-test and the exact Wilcoxon signed-rank test.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 2:
        raise ValidationError("paired scores must be matched (repeats, folds) matrices")
    delta = a - b
    flat = delta.ravel()
    n = flat.size
    mean = float(flat.mean())
    sd = float(flat.std(ddof=1))
    sem = sd / np.sqrt(n)

    if np.all(flat == 0.0):
        return PairedBattery(
            n=n, delta_mean=0.0, sem=0.0, icc_delta=np.nan, sw_p=np.nan,
            t_stat=np.nan, t_p=np.nan, wilcoxon_stat=np.nan, wilcoxon_p=np.nan,
            degenerate=True,
        )

    try:
        icc_delta = icc1(delta)
    except NumericError:
        icc_delta = np.nan
    sw = shapiro_wilk(flat)
    if sd == 0.0:
        t_stat, t_p = np.nan, np.nan  # constant nonzero shift: t degenerate
    else:
        t_stat = mean / sem
        t_p = float(2.0 * stdtr(n - 1, -abs(t_stat)))
    w_stat, w_p, _w_degen = wilcoxon_signed_rank(flat)
    return PairedBattery(
        n=n,
        delta_mean=mean,
        sem=sem,
        icc_delta=icc_delta,
        sw_p=sw.p,
        t_stat=t_stat,
        t_p=t_p,
        wilcoxon_stat=w_stat,
        wilcoxon_p=w_p,
        degenerate=False,
    )
