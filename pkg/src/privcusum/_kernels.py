"""Hot inner loops for the CUSUM detectors.

Each whole-run detection kernel exists twice: a scalar-loop version compiled
with numba's @njit, and a vectorised pure-NumPy twin (suffix ``_numpy``).
Both perform the same IEEE-754 operations element by element, so results are
identical. The active implementation is chosen at import time; set
``PRIVCUSUM_NO_NUMBA=1`` to force the NumPy path (used by the benchmark and
by environments without a working numba install).

Array conventions: streams are time-major float64 arrays where observation t
(1-indexed) lives at row t-1, and cumulative-sum buffers carry a leading zero
row so the sum over the segment (s, t] is ``cum[t] - cum[s]``.

Kernel return value is the tuple ``(alarm_t, alarm_s, statistic, threshold)``
with ``alarm_t == 0`` meaning no alarm. When ``fill_trace`` is set the
per-step arrays receive, at index t, the max statistic over scanned active
splits (NaN when none are active) and the min active threshold (inf when
none are active).
"""

from __future__ import annotations

import math
import os

import numpy as np

__all__ = [
    "USING_NUMBA",
    "dyadic_splits",
    "estimator_gate",
    "cusum_private_row",
    "cusum_nonprivate_row",
    "cusum_univariate_row",
    "run_private",
    "run_private_numpy",
    "run_nonprivate",
    "run_nonprivate_numpy",
    "run_univariate",
    "run_univariate_numpy",
]

_NO_ALARM = (0, 0, 0.0, math.inf)


def _numba_requested() -> bool:
    return os.environ.get("PRIVCUSUM_NO_NUMBA", "").strip() in ("", "0")


USING_NUMBA = False
if _numba_requested():
    try:
        from numba import njit as _njit

        USING_NUMBA = True
    except ImportError:
        _njit = None


def dyadic_splits(t: int) -> np.ndarray:
    """Candidate splits {t - 2^k >= 1}, ascending."""
    out = []
    p = 1
    while t - p >= 1:
        out.append(t - p)
        p <<= 1
    out.reverse()
    return np.asarray(out, dtype=np.int64)


def estimator_gate(n):
    """Occupancy gate log(n+1)/n for a segment of length n."""
    n = np.asarray(n, dtype=np.float64)
    return np.log(n + 1.0) / n


# ---------------------------------------------------------------------------
# Row statistics (NumPy, vectorised over the split s at fixed t).
# These back the reference detector and the estimation-level API; the
# whole-run kernels below inline the same arithmetic.
# ---------------------------------------------------------------------------

def cusum_private_row(wcum, zcum, t, s_arr):
    s = np.asarray(s_arr, dtype=np.int64)
    n1 = s.astype(np.float64)
    n2 = (t - s).astype(np.float64)
    mu1 = wcum[s] / n1[:, None]
    nu1 = zcum[s] / n1[:, None]
    mu2 = (wcum[t] - wcum[s]) / n2[:, None]
    nu2 = (zcum[t] - zcum[s]) / n2[:, None]
    g1 = (np.log(n1 + 1.0) / n1)[:, None]
    g2 = (np.log(n2 + 1.0) / n2)[:, None]
    m1 = np.divide(nu1, mu1, out=np.zeros_like(nu1), where=mu1 >= g1)
    m2 = np.divide(nu2, mu2, out=np.zeros_like(nu2), where=mu2 >= g2)
    q = s * (t - s) / t
    return np.sqrt(q) * np.abs(m1 - m2).max(axis=1)


def cusum_nonprivate_row(ccum, ycum, t, s_arr):
    s = np.asarray(s_arr, dtype=np.int64)
    c1 = ccum[s]
    c2 = ccum[t] - ccum[s]
    m1 = np.divide(ycum[s], c1, out=np.zeros_like(ycum[s]), where=c1 > 0)
    m2 = np.divide(ycum[t] - ycum[s], c2, out=np.zeros_like(c2), where=c2 > 0)
    occupied = ccum[t] > 0
    diff = np.abs(m1 - m2)
    diff[:, ~occupied] = 0.0
    q = s * (t - s) / t
    return np.sqrt(q) * diff.max(axis=1)


def cusum_univariate_row(zcum, t, s_arr):
    s = np.asarray(s_arr, dtype=np.int64)
    left = np.sqrt((t - s) / (t * s)) * zcum[s]
    right = np.sqrt(s / (t * (t - s))) * (zcum[t] - zcum[s])
    return np.abs(left - right)


# ---------------------------------------------------------------------------
# Whole-run kernels, scalar-loop form (numba target).
# ---------------------------------------------------------------------------

def _run_private_loop(w, z, a_bias, b_coef, log_c, act_coef, dyadic,
                      stop_at_alarm, fill_trace, max_stat, min_thr):
    T = w.shape[0]
    nb = w.shape[1]
    wcum = np.zeros((T + 1, nb))
    zcum = np.zeros((T + 1, nb))
    cand = np.empty(64, np.int64)
    alarm_t = 0
    alarm_s = 0
    alarm_stat = 0.0
    alarm_thr = math.inf
    for t in range(1, T + 1):
        for j in range(nb):
            wcum[t, j] = wcum[t - 1, j] + w[t - 1, j]
            zcum[t, j] = zcum[t - 1, j] + z[t - 1, j]
        if t < 2:
            continue
        lt = math.log(log_c * float(t) * float(t) * float(t))
        b_t = b_coef * math.sqrt(lt)
        r_t = act_coef * lt
        if dyadic:
            m = 0
            p = 1
            while t - p >= 1:
                cand[m] = t - p
                m += 1
                p <<= 1
            lo_idx, hi_idx, step = m - 1, -1, -1
        else:
            lo_idx, hi_idx, step = 1, t, 1
        step_max = -math.inf
        step_thr = math.inf
        n_active = 0
        for idx in range(lo_idx, hi_idx, step):
            s = cand[idx] if dyadic else idx
            q = s * (t - s) / t
            if q < r_t:
                continue
            n_active += 1
            sq = math.sqrt(q)
            thr = 2.0 * sq * a_bias + b_t
            n1 = float(s)
            n2 = float(t - s)
            g1 = math.log(n1 + 1.0) / n1
            g2 = math.log(n2 + 1.0) / n2
            dmax = 0.0
            for j in range(nb):
                mu1 = wcum[s, j] / n1
                if mu1 >= g1:
                    nu1 = zcum[s, j] / n1
                    m1 = nu1 / mu1
                else:
                    m1 = 0.0
                mu2 = (wcum[t, j] - wcum[s, j]) / n2
                if mu2 >= g2:
                    nu2 = (zcum[t, j] - zcum[s, j]) / n2
                    m2 = nu2 / mu2
                else:
                    m2 = 0.0
                d = abs(m1 - m2)
                if d > dmax:
                    dmax = d
            stat = sq * dmax
            if stat > step_max:
                step_max = stat
            if thr < step_thr:
                step_thr = thr
            if stat > thr and alarm_t == 0:
                alarm_t = t
                alarm_s = s
                alarm_stat = stat
                alarm_thr = thr
        if fill_trace:
            max_stat[t] = step_max if n_active > 0 else math.nan
            min_thr[t] = step_thr
        if alarm_t > 0 and stop_at_alarm:
            return alarm_t, alarm_s, alarm_stat, alarm_thr
    return alarm_t, alarm_s, alarm_stat, alarm_thr


def _run_nonprivate_loop(bins, y, nb, a_bias, b_coef, l32g, dyadic,
                         stop_at_alarm, fill_trace, max_stat, min_thr):
    T = bins.shape[0]
    ccum = np.zeros((T + 1, nb))
    ycum = np.zeros((T + 1, nb))
    cand = np.empty(64, np.int64)
    alarm_t = 0
    alarm_s = 0
    alarm_stat = 0.0
    alarm_thr = math.inf
    for t in range(1, T + 1):
        for j in range(nb):
            ccum[t, j] = ccum[t - 1, j]
            ycum[t, j] = ycum[t - 1, j]
        b = bins[t - 1]
        ccum[t, b] += 1.0
        ycum[t, b] += y[t - 1]
        if t < 2:
            continue
        b_t = b_coef * math.sqrt(5.0 * math.log(float(t)) + l32g)
        if dyadic:
            m = 0
            p = 1
            while t - p >= 1:
                cand[m] = t - p
                m += 1
                p <<= 1
            lo_idx, hi_idx, step = m - 1, -1, -1
        else:
            lo_idx, hi_idx, step = 1, t, 1
        step_max = -math.inf
        step_thr = math.inf
        n_active = 0
        for idx in range(lo_idx, hi_idx, step):
            s = cand[idx] if dyadic else idx
            q = s * (t - s) / t
            n_active += 1
            sq = math.sqrt(q)
            thr = 2.0 * sq * a_bias + b_t
            dmax = 0.0
            for j in range(nb):
                if ccum[t, j] <= 0.0:
                    continue
                c1 = ccum[s, j]
                m1 = ycum[s, j] / c1 if c1 > 0.0 else 0.0
                c2 = ccum[t, j] - ccum[s, j]
                m2 = (ycum[t, j] - ycum[s, j]) / c2 if c2 > 0.0 else 0.0
                d = abs(m1 - m2)
                if d > dmax:
                    dmax = d
            stat = sq * dmax
            if stat > step_max:
                step_max = stat
            if thr < step_thr:
                step_thr = thr
            if stat > thr and alarm_t == 0:
                alarm_t = t
                alarm_s = s
                alarm_stat = stat
                alarm_thr = thr
        if fill_trace:
            max_stat[t] = step_max if n_active > 0 else math.nan
            min_thr[t] = step_thr
        if alarm_t > 0 and stop_at_alarm:
            return alarm_t, alarm_s, alarm_stat, alarm_thr
    return alarm_t, alarm_s, alarm_stat, alarm_thr


def _run_univariate_loop(zs, b1, log_inv_gamma, dyadic, stop_at_alarm,
                         fill_trace, max_stat, min_thr):
    T = zs.shape[0]
    zcum = np.zeros(T + 1)
    cand = np.empty(64, np.int64)
    alarm_t = 0
    alarm_s = 0
    alarm_stat = 0.0
    alarm_thr = math.inf
    for t in range(1, T + 1):
        zcum[t] = zcum[t - 1] + zs[t - 1]
        if t < 2:
            continue
        b_t = b1 * math.sqrt(math.log(float(t)) + log_inv_gamma)
        if dyadic:
            m = 0
            p = 1
            while t - p >= 1:
                cand[m] = t - p
                m += 1
                p <<= 1
            lo_idx, hi_idx, step = m - 1, -1, -1
        else:
            lo_idx, hi_idx, step = 1, t, 1
        step_max = -math.inf
        n_active = 0
        for idx in range(lo_idx, hi_idx, step):
            s = cand[idx] if dyadic else idx
            n_active += 1
            left = math.sqrt((t - s) / (t * s)) * zcum[s]
            right = math.sqrt(s / (t * (t - s))) * (zcum[t] - zcum[s])
            stat = abs(left - right)
            if stat > step_max:
                step_max = stat
            if stat > b_t and alarm_t == 0:
                alarm_t = t
                alarm_s = s
                alarm_stat = stat
                alarm_thr = b_t
        if fill_trace:
            max_stat[t] = step_max if n_active > 0 else math.nan
            min_thr[t] = b_t
        if alarm_t > 0 and stop_at_alarm:
            return alarm_t, alarm_s, alarm_stat, alarm_thr
    return alarm_t, alarm_s, alarm_stat, alarm_thr


# ---------------------------------------------------------------------------
# Whole-run kernels, vectorised NumPy twins.
# ---------------------------------------------------------------------------

def _candidates(t, dyadic):
    return dyadic_splits(t) if dyadic else np.arange(1, t, dtype=np.int64)


def run_private_numpy(w, z, a_bias, b_coef, log_c, act_coef, dyadic,
                      stop_at_alarm, fill_trace, max_stat, min_thr):
    T = w.shape[0]
    wcum = np.vstack([np.zeros((1, w.shape[1])), np.cumsum(w, axis=0)])
    zcum = np.vstack([np.zeros((1, z.shape[1])), np.cumsum(z, axis=0)])
    alarm = _NO_ALARM
    for t in range(2, T + 1):
        lt = math.log(log_c * float(t) * float(t) * float(t))
        b_t = b_coef * math.sqrt(lt)
        r_t = act_coef * lt
        s = _candidates(t, dyadic)
        q = s * (t - s) / t
        active = q >= r_t
        s = s[active]
        if fill_trace:
            max_stat[t] = math.nan
            min_thr[t] = math.inf
        if s.size == 0:
            continue
        stats = cusum_private_row(wcum, zcum, t, s)
        thr = 2.0 * np.sqrt(q[active]) * a_bias + b_t
        if fill_trace:
            max_stat[t] = stats.max()
            min_thr[t] = thr.min()
        exceed = stats > thr
        if alarm[0] == 0 and exceed.any():
            k = int(np.argmax(exceed))
            alarm = (t, int(s[k]), float(stats[k]), float(thr[k]))
            if stop_at_alarm:
                return alarm
    return alarm


def run_nonprivate_numpy(bins, y, nb, a_bias, b_coef, l32g, dyadic,
                         stop_at_alarm, fill_trace, max_stat, min_thr):
    T = bins.shape[0]
    onehot = np.zeros((T, nb))
    onehot[np.arange(T), bins] = 1.0
    ccum = np.vstack([np.zeros((1, nb)), np.cumsum(onehot, axis=0)])
    ycum = np.vstack([np.zeros((1, nb)), np.cumsum(onehot * y[:, None], axis=0)])
    alarm = _NO_ALARM
    for t in range(2, T + 1):
        b_t = b_coef * math.sqrt(5.0 * math.log(float(t)) + l32g)
        s = _candidates(t, dyadic)
        stats = cusum_nonprivate_row(ccum, ycum, t, s)
        q = s * (t - s) / t
        thr = 2.0 * np.sqrt(q) * a_bias + b_t
        if fill_trace:
            max_stat[t] = stats.max()
            min_thr[t] = thr.min()
        exceed = stats > thr
        if alarm[0] == 0 and exceed.any():
            k = int(np.argmax(exceed))
            alarm = (t, int(s[k]), float(stats[k]), float(thr[k]))
            if stop_at_alarm:
                return alarm
    return alarm


def run_univariate_numpy(zs, b1, log_inv_gamma, dyadic, stop_at_alarm,
                         fill_trace, max_stat, min_thr):
    T = zs.shape[0]
    zcum = np.concatenate([[0.0], np.cumsum(zs)])
    alarm = _NO_ALARM
    for t in range(2, T + 1):
        b_t = b1 * math.sqrt(math.log(float(t)) + log_inv_gamma)
        s = _candidates(t, dyadic)
        stats = cusum_univariate_row(zcum, t, s)
        if fill_trace:
            max_stat[t] = stats.max()
            min_thr[t] = b_t
        exceed = stats > b_t
        if alarm[0] == 0 and exceed.any():
            k = int(np.argmax(exceed))
            alarm = (t, int(s[k]), float(stats[k]), float(b_t))
            if stop_at_alarm:
                return alarm
    return alarm


if USING_NUMBA:
    run_private = _njit(cache=True)(_run_private_loop)
    run_nonprivate = _njit(cache=True)(_run_nonprivate_loop)
    run_univariate = _njit(cache=True)(_run_univariate_loop)
else:
    run_private = run_private_numpy
    run_nonprivate = run_nonprivate_numpy
    run_univariate = run_univariate_numpy
