"""ROC analysis, operating-point metrics, paired DeLong test and bootstrap CIs.

AUROC is computed two ways that must agree: a threshold sweep whose
trapezoid area is accumulated in exact integer arithmetic, and (in the
tests) a brute-force pairwise count.  Both equal the Mann-Whitney statistic
with ties counted as one half.

The DeLong variance uses midrank structural components; a direct O(m*n)
double loop over the same components is kept as :func:`delong_paired_direct`
to check the fast path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.stats import rankdata

from .errors import DataError
from .seeding import stream

DEGENERATE_VAR = 1e-15


def _check(scores, labels) -> tuple:
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.size != y.size:
        raise DataError(f"scores ({s.size}) and labels ({y.size}) differ in length")
    if not np.all((y == 0) | (y == 1)):
        raise DataError("labels must be 0 or 1")
    if not np.all(np.isfinite(s)):
        raise DataError("scores must be finite")
    if y.sum() == 0 or y.sum() == y.size:
        raise DataError("both classes must be present")
    return s, y.astype(int)


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auroc: float

    def points_text(self) -> str:
        """``fpr tpr`` per line, for external plotting."""
        return "".join(f"{float(f)!r} {float(t)!r}\n" for f, t in zip(self.fpr, self.tpr))


def roc_curve(scores, labels) -> RocCurve:
    """ROC points over all distinct thresholds, from (0,0) to (1,1).

    A patient is called positive at threshold ``t`` when its score is >= t.
    """
    s, y = _check(scores, labels)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]  # last index of each distinct score
    tp = np.r_[0, np.cumsum(y)[last]]
    fp = np.r_[0, np.cumsum(1 - y)[last]]
    m, n = int(tp[-1]), int(fp[-1])
    # trapezoids in integer arithmetic: sum (fp_i - fp_{i-1}) (tp_i + tp_{i-1}) / (2 m n)
    twice_area = int(np.sum((np.diff(fp) * (tp[1:] + tp[:-1])).astype(np.int64)))
    return RocCurve(fp / n, tp / m, np.r_[np.inf, s[last]], twice_area / (2 * m * n))


def auroc(scores, labels) -> float:
    return roc_curve(scores, labels).auroc


def sens_spec(probs, labels, threshold: float = 0.5) -> tuple:
    """Sensitivity and specificity with prob >= threshold called positive."""
    p, y = _check(probs, labels)
    pred = p >= threshold
    tp = np.sum(pred & (y == 1))
    tn = np.sum(~pred & (y == 0))
    return float(tp / np.sum(y == 1)), float(tn / np.sum(y == 0))


@dataclass
class DelongResult:
    auc_a: float
    auc_b: float
    delta: float
    variance: float
    z: float
    p: float
    degenerate: bool


def _components(s: np.ndarray, y: np.ndarray) -> tuple:
    """Midrank structural components (V10 per positive, V01 per negative)."""
    x, z = s[y == 1], s[y == 0]
    m, n = x.size, z.size
    tz = rankdata(np.r_[x, z])
    v10 = (tz[:m] - rankdata(x)) / n
    v01 = 1.0 - (tz[m:] - rankdata(z)) / m
    return v10, v01


def _finish(auc_a, auc_b, s10, s01, m, n) -> DelongResult:
    var = float((s10[0, 0] + s10[1, 1] - 2 * s10[0, 1]) / m
                + (s01[0, 0] + s01[1, 1] - 2 * s01[0, 1]) / n)
    delta = auc_a - auc_b
    if var < DEGENERATE_VAR:
        return DelongResult(auc_a, auc_b, delta, var, math.nan, 1.0 if delta == 0 else 0.0, True)
    z = delta / math.sqrt(var)
    return DelongResult(auc_a, auc_b, delta, var, z, math.erfc(abs(z) / math.sqrt(2.0)), False)


def _paired_inputs(scores_a, scores_b, labels) -> tuple:
    a = np.asarray(scores_a, dtype=np.float64).reshape(-1)
    b = np.asarray(scores_b, dtype=np.float64).reshape(-1)
    if a.size != b.size:
        raise DataError(f"delong_paired: score vectors differ in length ({a.size} vs {b.size})")
    a, y = _check(a, labels)
    b, _ = _check(b, labels)
    if min(y.sum(), y.size - y.sum()) < 2:
        raise DataError("delong_paired: need at least two patients per class")
    return a, b, y


def delong_paired(scores_a, scores_b, labels) -> DelongResult:
    """Paired DeLong test of AUROC(a) - AUROC(b); p = 2(1 - Phi(|z|)) via erfc."""
    a, b, y = _paired_inputs(scores_a, scores_b, labels)
    (a10, a01), (b10, b01) = _components(a, y), _components(b, y)
    m, n = a10.size, a01.size
    s10 = np.cov(np.vstack([a10, b10]), ddof=1)
    s01 = np.cov(np.vstack([a01, b01]), ddof=1)
    return _finish(float(a10.mean()), float(b10.mean()), s10, s01, m, n)


def delong_paired_direct(scores_a, scores_b, labels) -> DelongResult:
    """Reference DeLong: structural components from an explicit pairwise double loop."""
    a, b, y = _paired_inputs(scores_a, scores_b, labels)
    pos, neg = np.flatnonzero(y == 1), np.flatnonzero(y == 0)
    m, n = pos.size, neg.size

    def psi(u, v):
        return 1.0 if u > v else (0.5 if u == v else 0.0)

    comps = []
    for s in (a, b):
        v10 = [math.fsum(psi(s[i], s[j]) for j in neg) / n for i in pos]
        v01 = [math.fsum(psi(s[i], s[j]) for i in pos) / m for j in neg]
        comps.append((v10, v01))

    def cov(u, v):
        mu, mv = math.fsum(u) / len(u), math.fsum(v) / len(v)
        return math.fsum((p - mu) * (q - mv) for p, q in zip(u, v)) / (len(u) - 1)

    s10 = np.array([[cov(comps[i][0], comps[j][0]) for j in range(2)] for i in range(2)])
    s01 = np.array([[cov(comps[i][1], comps[j][1]) for j in range(2)] for i in range(2)])
    auc_a = math.fsum(comps[0][0]) / m
    auc_b = math.fsum(comps[1][0]) / m
    return _finish(auc_a, auc_b, s10, s01, m, n)


@dataclass
class BootstrapCI:
    point: float
    lower: float
    upper: float
    n_resamples: int
    level: float
    n_skipped_degenerate: int


METRICS = {
    "auroc": auroc,
    "sensitivity": lambda p, y: sens_spec(p, y)[0],
    "specificity": lambda p, y: sens_spec(p, y)[1],
}


def nearest_rank(sorted_values: np.ndarray, q) -> float:
    """Nearest-rank quantile: the ceil(q*N)-th smallest value (1-based), q in (0, 1]."""
    q = Fraction(q).limit_denominator(10 ** 9)
    k = max(1, math.ceil(q * len(sorted_values)))
    return float(sorted_values[k - 1])


def bootstrap_ci(metric, scores, labels, n: int = 1000, level: float = 0.95, seed: int = 0,
                 stratified: bool = False) -> BootstrapCI:
    """Percentile bootstrap CI over patient resamples.

    Unstratified resamples that miss a class are redrawn and counted; more
    than ``10 * n`` consecutive such draws raise.  ``stratified=True``
    resamples each class separately instead, so no redraws occur.
    """
    fn = METRICS[metric] if isinstance(metric, str) else metric
    s, y = _check(scores, labels)
    point = float(fn(s, y))
    rng = stream(seed, "bootstrap", metric if isinstance(metric, str) else "custom")
    pos, neg = np.flatnonzero(y == 1), np.flatnonzero(y == 0)
    values = np.empty(n)
    skipped = consecutive = 0
    i = 0
    while i < n:
        if stratified:
            idx = np.r_[rng.choice(pos, pos.size), rng.choice(neg, neg.size)]
        else:
            idx = rng.integers(0, s.size, s.size)
            k = y[idx].sum()
            if k == 0 or k == idx.size:
                skipped += 1
                consecutive += 1
                if consecutive > 10 * n:
                    raise DataError(f"bootstrap: {consecutive} consecutive single-class "
                                    f"resamples; cohort too small")
                continue
        consecutive = 0
        values[i] = fn(s[idx], y[idx])
        i += 1
    values.sort()
    alpha = (1 - Fraction(level).limit_denominator(10 ** 9)) / 2
    return BootstrapCI(point, nearest_rank(values, alpha), nearest_rank(values, 1 - alpha),
                       n, level, skipped)


def summarize(probs, labels, n_boot: int = 1000, seed: int = 0,
              stratified: bool = False) -> dict:
    """AUROC, sensitivity and specificity with bootstrap CIs."""
    return {name: bootstrap_ci(name, probs, labels, n_boot, 0.95, seed, stratified)
            for name in METRICS}


def format_ci(ci: BootstrapCI, digits: int = 3) -> str:
    return f"{ci.point:.{digits}f} [{ci.lower:.{digits}f}, {ci.upper:.{digits}f}]"
