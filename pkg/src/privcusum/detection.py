"""CUSUM statistics, threshold schedules, and the online detection loops.

Three detector flavors share one loop structure: at each new time t >= 2,
evaluate a CUSUM statistic for every candidate split s (all of 1..t-1, or
the dyadic subset {t - 2^k}) and stop at the first t where any statistic
strictly exceeds its threshold.

Statistics:
  private      D = max_j sqrt(s(t-s)/t) |m1_j - m2_j| over gated ratio
               estimates of the privatized stream,
  nonprivate   same shape over raw per-bin means, max restricted to bins
               occupied by at least one of the first t covariates,
  univariate   |sqrt((t-s)/(ts)) * S_s - sqrt(s/(t(t-s))) * (S_t - S_s)|
               on privatized scalar prefix sums S.

Threshold schedules (b = threshold at the pair (s, t), q = s(t-s)/t):
  private      2 sqrt(q) {2(M-M0)exp(-(M-M0)^2/(2 sigma^2)) + C_lip sqrt(d) h}
               + (M/(c_min h^d alpha)) sqrt(log(72 t^3/(gamma c_min h^d))),
               active only when q c_min^2 h^(2d) alpha^2 >= 64 log(72 t^3 /
               (gamma c_min h^d)); +inf otherwise (never flags).
  nonprivate   2 sqrt(q) C_lip sqrt(d) h
               + (4 sigma / sqrt(c_min h^d)) sqrt(5 log t + log(32/gamma)).
  univariate   2^(3/2) sqrt(sigma^2 + 4/alpha^2) sqrt(log(t/gamma)).

``threshold_private`` accepts an optional ``noise_scale`` multiplier on its
noise term. The default 1.0 reproduces the schedule verbatim; empirically
that constant sits below the statistic's stationary noise level, so any
experiment that needs a controlled false-alarm rate should calibrate the
multiplier on null runs (the CLI's ``calibrate-constants`` command does
this). The nonprivate and univariate schedules are conservative as stated
and take no knob.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .estimation import PrefixState

__all__ = [
    "ThresholdParams",
    "CusumReport",
    "DetectionResult",
    "m1_truncation_floor",
    "threshold_private",
    "threshold_nonprivate",
    "threshold_univariate",
    "cusum_private",
    "cusum_nonprivate",
    "cusum_univariate",
    "prefix_sums",
    "snr_check",
    "SnrCheck",
    "run_detector",
    "detect_private",
    "detect_nonprivate",
    "detect_univariate",
]


@dataclass(frozen=True)
class ThresholdParams:
    """Everything the threshold schedules need besides (s, t).

    gamma        target false-alarm probability,
    alpha        privacy budget (private schedule only),
    truncation_m response clamp level of the channel (private only),
    m0           sup-norm bound on the regression functions,
    sigma        sub-Gaussian noise level,
    c_lip        Lipschitz constant bound,
    c_min        density floor: bin mass >= c_min h^d,
    h, d         bin width and covariate dimension.
    """

    gamma: float
    sigma: float
    alpha: float = 1.0
    truncation_m: float | None = None
    m0: float = 0.0
    c_lip: float = 0.0
    c_min: float = 1.0
    h: float = 1.0
    d: int = 1

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must be in (0, 1), got {self.gamma}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.sigma < 0.0 or self.m0 < 0.0 or self.c_lip < 0.0:
            raise ValueError("sigma, m0 and c_lip must be nonnegative")
        if self.c_min <= 0.0 or self.h <= 0.0 or self.d < 1:
            raise ValueError("c_min and h must be positive, d >= 1")
        if self.truncation_m is not None and self.truncation_m <= 0.0:
            raise ValueError("truncation_m must be positive when given")


@dataclass(frozen=True)
class CusumReport:
    """One evaluated (split, time) pair."""

    s: int
    t: int
    statistic: float
    threshold: float

    @property
    def exceeded(self) -> bool:
        return self.statistic > self.threshold


@dataclass
class DetectionResult:
    """Outcome of one detector run.

    ``alarms`` holds every flag raised (one unless restart mode); ``trace``
    is (t, max_statistic, min_active_threshold) arrays when requested.
    """

    alarms: list[CusumReport]
    horizon: int
    engine: str
    trace: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None

    @property
    def alarm_time(self) -> int | None:
        return self.alarms[0].t if self.alarms else None


def m1_truncation_floor(m0: float, sigma: float, h: float) -> float:
    """Smallest admissible truncation level
    M0 + sigma sqrt(2 log(2 + sigma/h) + log log(2 + sigma/h))."""
    if m0 < 0 or sigma < 0 or h <= 0:
        raise ValueError("m0, sigma must be nonnegative and h positive")
    if sigma == 0.0:
        return float(m0)
    r = 2.0 + sigma / h
    return m0 + sigma * math.sqrt(2.0 * math.log(r) + math.log(math.log(r)))


def _private_pieces(params: ThresholdParams, noise_scale: float):
    """(bias slope A, noise coefficient, log argument coefficient,
    activation coefficient) of the private schedule."""
    p = params
    if p.truncation_m is None:
        raise ValueError("private schedule needs truncation_m")
    if p.truncation_m < p.m0:
        raise ValueError(
            f"truncation level {p.truncation_m} below the mean bound {p.m0}")
    gap = p.truncation_m - p.m0
    if p.sigma > 0.0:
        trunc_bias = 2.0 * gap * math.exp(-gap * gap / (2.0 * p.sigma * p.sigma))
    else:
        trunc_bias = 0.0
    hd = p.h ** p.d
    a_bias = trunc_bias + p.c_lip * math.sqrt(p.d) * p.h
    b_coef = noise_scale * p.truncation_m / (p.c_min * hd * p.alpha)
    log_c = 72.0 / (p.gamma * p.c_min * hd)
    act_coef = 64.0 / (p.c_min ** 2 * hd * hd * p.alpha ** 2)
    return a_bias, b_coef, log_c, act_coef


def threshold_private(s, t: int, params: ThresholdParams,
                      noise_scale: float = 1.0):
    """Private schedule at (s, t); +inf on pairs failing the activation
    condition. Vectorized over s."""
    a_bias, b_coef, log_c, act_coef = _private_pieces(params, noise_scale)
    s_arr = np.asarray(s, dtype=np.float64)
    _check_split(s_arr, t)
    lt = math.log(log_c * float(t) ** 3)
    q = s_arr * (t - s_arr) / t
    out = np.where(q >= act_coef * lt,
                   2.0 * np.sqrt(q) * a_bias + b_coef * math.sqrt(lt),
                   math.inf)
    return float(out) if out.ndim == 0 else out


def _nonprivate_pieces(params: ThresholdParams):
    p = params
    a_bias = p.c_lip * math.sqrt(p.d) * p.h
    b_coef = 4.0 * p.sigma / math.sqrt(p.c_min * p.h ** p.d)
    l32g = math.log(32.0 / p.gamma)
    return a_bias, b_coef, l32g


def threshold_nonprivate(s, t: int, params: ThresholdParams):
    """Raw-data schedule at (s, t); always finite. Vectorized over s."""
    a_bias, b_coef, l32g = _nonprivate_pieces(params)
    s_arr = np.asarray(s, dtype=np.float64)
    _check_split(s_arr, t)
    q = s_arr * (t - s_arr) / t
    out = 2.0 * np.sqrt(q) * a_bias + b_coef * math.sqrt(5.0 * math.log(t) + l32g)
    return float(out) if out.ndim == 0 else out


def threshold_univariate(t: int, gamma: float, sigma: float, alpha: float) -> float:
    """Scalar-stream schedule 2^(3/2) sqrt(sigma^2 + 4/alpha^2) sqrt(log(t/gamma)).

    Defined for t >= 2 (the detection loop never evaluates t = 1).
    """
    if t < 2:
        raise ValueError(f"threshold defined for t >= 2, got {t}")
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must be in (0, 1), got {gamma}")
    if sigma < 0.0 or alpha <= 0.0:
        raise ValueError("sigma must be nonnegative and alpha positive")
    return (2.0 ** 1.5) * math.sqrt(sigma * sigma + 4.0 / (alpha * alpha)) \
        * math.sqrt(math.log(t) + math.log(1.0 / gamma))


def _check_split(s_arr, t):
    if np.any(s_arr < 1) or np.any(s_arr >= t):
        raise ValueError(f"splits must satisfy 1 <= s < t, got s={s_arr}, t={t}")


def cusum_private(state: PrefixState, s: int, t: int, partition=None) -> float:
    """max_j sqrt(s(t-s)/t) |m_hat_{1:s} - m_hat_{(s+1):t}| at bin centers."""
    from .estimation import estimate_private

    if not 1 <= s < t <= state.t:
        raise ValueError(f"need 1 <= s < t <= {state.t}, got ({s}, {t})")
    m1 = estimate_private(state, 1, s, partition)
    m2 = estimate_private(state, s + 1, t, partition)
    return float(math.sqrt(s * (t - s) / t) * np.max(np.abs(m1 - m2)))


def cusum_nonprivate(state: PrefixState, s: int, t: int, partition=None) -> float:
    """Same shape on raw per-bin means, max over occupied bins only."""
    from .estimation import estimate_nonprivate

    if not 1 <= s < t <= state.t:
        raise ValueError(f"need 1 <= s < t <= {state.t}, got ({s}, {t})")
    m1 = estimate_nonprivate(state, 1, s, partition)
    m2 = estimate_nonprivate(state, s + 1, t, partition)
    counts, _ = state.segment_sum(1, t)
    diff = np.abs(m1 - m2)
    diff[counts <= 0] = 0.0
    return float(math.sqrt(s * (t - s) / t) * np.max(diff))


def prefix_sums(values) -> np.ndarray:
    """Length n+1 prefix-sum array with a leading zero."""
    values = np.asarray(values, dtype=np.float64)
    return np.concatenate([[0.0], np.cumsum(values)])


def cusum_univariate(zcum, s: int, t: int) -> float:
    """Scalar CUSUM from a prefix-sum array (zcum[0] = 0)."""
    zcum = np.asarray(zcum, dtype=np.float64)
    if not 1 <= s < t < zcum.shape[0]:
        raise ValueError(f"need 1 <= s < t <= {zcum.shape[0] - 1}, got ({s}, {t})")
    left = math.sqrt((t - s) / (t * s)) * zcum[s]
    right = math.sqrt(s / (t * (t - s))) * (zcum[t] - zcum[s])
    return float(abs(left - right))


@dataclass(frozen=True)
class SnrCheck:
    passed: bool
    ratio: float


def snr_check(kind: str, kappa: float, delta: int, params: ThresholdParams,
              c_snr: float = 1.0) -> SnrCheck:
    """Evaluate the detectability condition for the given detector kind.

    Returns pass/fail plus the ratio of the signal side to c_snr times the
    logarithmic side (>= 1 means pass).
    """
    if kappa <= 0.0 or delta < 1:
        raise ValueError("kappa must be positive and delta >= 1")
    p = params
    hd = p.h ** p.d
    if kind == "private":
        lhs = kappa ** 2 * hd * hd * p.alpha ** 2 * delta / max(p.sigma ** 2, p.m0 ** 2)
        rhs = math.log(delta / (p.c_min * hd * hd * p.gamma))
    elif kind == "nonprivate":
        lhs = kappa ** 2 * hd * delta / p.sigma ** 2
        rhs = math.log(delta / (p.gamma * hd))
    elif kind == "univariate":
        lhs = delta * kappa ** 2 / (p.sigma ** 2 + 4.0 / p.alpha ** 2)
        rhs = math.log(delta / p.gamma)
    else:
        raise ValueError(f"unknown snr kind {kind!r}")
    ratio = lhs / (c_snr * rhs)
    return SnrCheck(passed=ratio >= 1.0, ratio=float(ratio))


# ---------------------------------------------------------------------------
# Online loops.
# ---------------------------------------------------------------------------

def _scan_candidates(t: int, scan: str) -> np.ndarray:
    if scan == "full":
        return np.arange(1, t, dtype=np.int64)
    if scan == "dyadic":
        return _kernels.dyadic_splits(t)
    raise ValueError(f"unknown scan policy {scan!r}")


def run_detector(observations, make_state, push, cusum_row, threshold_row, *,
                 scan: str = "full", restart: bool = False, trace: bool = False,
                 stop_at_alarm: bool = True) -> DetectionResult:
    """Reference online loop over pluggable statistic and threshold callables.

    ``push(state, obs)`` ingests one observation; ``cusum_row(state, t,
    s_arr)`` and ``threshold_row(t, s_arr)`` return per-split statistics and
    thresholds. Flags at the first t where some statistic strictly exceeds
    its threshold; with restart=True the state is rebuilt and the loop
    continues on the remaining stream (thresholds restart on local time).
    """
    horizon = len(observations)
    if horizon <= 1:
        raise ValueError(f"horizon must exceed 1, got {horizon}")
    _scan_candidates(2, scan)
    alarms: list[CusumReport] = []
    ts, max_stats, min_thrs = [], [], []
    base = 0
    state = make_state()
    t_local = 0
    for i in range(horizon):
        push(state, observations[i])
        t_local += 1
        t_abs = i + 1
        if t_local < 2:
            continue
        s_arr = _scan_candidates(t_local, scan)
        thr = np.asarray(threshold_row(t_local, s_arr), dtype=np.float64)
        active = np.isfinite(thr)
        stats = None
        if active.any():
            stats = np.asarray(cusum_row(state, t_local, s_arr[active]),
                               dtype=np.float64)
        if trace:
            ts.append(t_abs)
            max_stats.append(float(stats.max()) if stats is not None else math.nan)
            min_thrs.append(float(thr[active].min()) if active.any() else math.inf)
        if stats is None:
            continue
        exceed = stats > thr[active]
        if exceed.any() and (restart or not alarms):
            k = int(np.argmax(exceed))
            s_hit = int(s_arr[active][k])
            alarms.append(CusumReport(s=s_hit + base, t=t_abs,
                                      statistic=float(stats[k]),
                                      threshold=float(thr[active][k])))
            if restart:
                base = t_abs
                state = make_state()
                t_local = 0
            elif stop_at_alarm:
                break
    trace_arrays = None
    if trace:
        trace_arrays = (np.asarray(ts), np.asarray(max_stats), np.asarray(min_thrs))
    return DetectionResult(alarms=alarms, horizon=horizon, engine="reference",
                           trace=trace_arrays)


def _kernel_alarm_to_report(res, base):
    t, s, stat, thr = res
    if t == 0:
        return None
    return CusumReport(s=int(s) + base, t=int(t) + base, statistic=float(stat),
                       threshold=float(thr))


def _drive_kernel(kernel, build_args, horizon, restart, trace, stop_at_alarm):
    """Run a whole-stream kernel, handling restart by re-invoking on the
    remaining suffix (thresholds restart on local time)."""
    alarms = []
    trace_parts = []
    base = 0
    while True:
        remaining = horizon - base
        if remaining <= 1:
            break
        fill = trace
        max_stat = np.full(remaining + 1, np.nan) if fill else np.empty(1)
        min_thr = np.full(remaining + 1, np.inf) if fill else np.empty(1)
        args = build_args(base) + (bool(stop_at_alarm and not trace), bool(fill),
                                   max_stat, min_thr)
        report = _kernel_alarm_to_report(kernel(*args), base)
        if fill:
            t_axis = np.arange(2, remaining + 1) + base
            trace_parts.append((t_axis, max_stat[2:remaining + 1],
                                min_thr[2:remaining + 1]))
        if report is None:
            break
        alarms.append(report)
        if not restart:
            break
        base = report.t
        if trace:
            # truncate the suffix trace at the alarm before restarting
            t_axis, ms, mt = trace_parts[-1]
            keep = t_axis <= report.t
            trace_parts[-1] = (t_axis[keep], ms[keep], mt[keep])
    trace_arrays = None
    if trace:
        if trace_parts:
            trace_arrays = tuple(np.concatenate([p[k] for p in trace_parts])
                                 for k in range(3))
        else:
            trace_arrays = (np.empty(0, dtype=np.int64), np.empty(0), np.empty(0))
    return alarms, trace_arrays


def detect_private(w, z, params: ThresholdParams, *, scan: str = "full",
                   restart: bool = False, noise_scale: float = 1.0,
                   trace: bool = False, stop_at_alarm: bool = True,
                   engine: str = "auto") -> DetectionResult:
    """Online detection on a privatized stream (rows of W and Z)."""
    w = np.ascontiguousarray(w, dtype=np.float64)
    z = np.ascontiguousarray(z, dtype=np.float64)
    if w.shape != z.shape or w.ndim != 2:
        raise ValueError("w and z must be equal-shape (horizon, n_bins) arrays")
    horizon = w.shape[0]
    if horizon <= 1:
        raise ValueError(f"horizon must exceed 1, got {horizon}")
    pieces = _private_pieces(params, noise_scale)
    dyadic = _require_scan(scan) == "dyadic"
    if engine == "reference":
        return _reference_private(w, z, params, noise_scale, scan, restart,
                                  trace, stop_at_alarm)
    if engine not in ("auto", "kernel"):
        raise ValueError(f"unknown engine {engine!r}")
    kernel = _kernels.run_private

    def build_args(base):
        return (w[base:], z[base:]) + pieces + (dyadic,)

    alarms, trace_arrays = _drive_kernel(kernel, build_args, horizon, restart,
                                         trace, stop_at_alarm)
    return DetectionResult(alarms=alarms, horizon=horizon,
                           engine="numba" if _kernels.USING_NUMBA else "numpy",
                           trace=trace_arrays)


def _reference_private(w, z, params, noise_scale, scan, restart, trace,
                       stop_at_alarm):
    n_bins = w.shape[1]

    def make_state():
        return PrefixState(n_bins)

    def push(state, row):
        state.push(row[0], row[1])

    def cusum_row(state, t, s_arr):
        return _kernels.cusum_private_row(state.w_matrix, state.z_matrix, t, s_arr)

    def threshold_row(t, s_arr):
        return threshold_private(s_arr, t, params, noise_scale)

    obs = list(zip(w, z))
    return run_detector(obs, make_state, push, cusum_row, threshold_row,
                        scan=scan, restart=restart, trace=trace,
                        stop_at_alarm=stop_at_alarm)


def detect_nonprivate(bin_indices, y, n_bins: int, params: ThresholdParams, *,
                      scan: str = "full", restart: bool = False,
                      trace: bool = False, stop_at_alarm: bool = True,
                      engine: str = "auto") -> DetectionResult:
    """Online detection on a raw stream given per-observation bin indices."""
    bins = np.ascontiguousarray(bin_indices, dtype=np.int64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if bins.shape != y.shape or bins.ndim != 1:
        raise ValueError("bin_indices and y must be equal-length vectors")
    if bins.min(initial=0) < 0 or bins.max(initial=0) >= n_bins:
        raise ValueError("bin indices out of range")
    horizon = bins.shape[0]
    if horizon <= 1:
        raise ValueError(f"horizon must exceed 1, got {horizon}")
    a_bias, b_coef, l32g = _nonprivate_pieces(params)
    dyadic = _require_scan(scan) == "dyadic"
    if engine == "reference":
        return _reference_nonprivate(bins, y, n_bins, params, scan, restart,
                                     trace, stop_at_alarm)
    if engine not in ("auto", "kernel"):
        raise ValueError(f"unknown engine {engine!r}")

    def build_args(base):
        return (bins[base:], y[base:], n_bins, a_bias, b_coef, l32g, dyadic)

    alarms, trace_arrays = _drive_kernel(_kernels.run_nonprivate, build_args,
                                         horizon, restart, trace, stop_at_alarm)
    return DetectionResult(alarms=alarms, horizon=horizon,
                           engine="numba" if _kernels.USING_NUMBA else "numpy",
                           trace=trace_arrays)


def _reference_nonprivate(bins, y, n_bins, params, scan, restart, trace,
                          stop_at_alarm):
    def make_state():
        return PrefixState(n_bins)

    def push(state, row):
        j, yv = row
        w_row = np.zeros(n_bins)
        z_row = np.zeros(n_bins)
        w_row[int(j)] = 1.0
        z_row[int(j)] = yv
        state.push(w_row, z_row)

    def cusum_row(state, t, s_arr):
        return _kernels.cusum_nonprivate_row(state.w_matrix, state.z_matrix, t, s_arr)

    def threshold_row(t, s_arr):
        return threshold_nonprivate(s_arr, t, params)

    obs = list(zip(bins, y))
    return run_detector(obs, make_state, push, cusum_row, threshold_row,
                        scan=scan, restart=restart, trace=trace,
                        stop_at_alarm=stop_at_alarm)


def detect_univariate(zs, gamma: float, sigma: float, alpha: float, *,
                      scan: str = "full", restart: bool = False,
                      trace: bool = False, stop_at_alarm: bool = True,
                      engine: str = "auto") -> DetectionResult:
    """Online detection on a privatized scalar stream."""
    zs = np.ascontiguousarray(zs, dtype=np.float64)
    if zs.ndim != 1:
        raise ValueError("zs must be a vector")
    horizon = zs.shape[0]
    if horizon <= 1:
        raise ValueError(f"horizon must exceed 1, got {horizon}")
    # validate the schedule parameters eagerly
    threshold_univariate(2, gamma, sigma, alpha)
    b1 = (2.0 ** 1.5) * math.sqrt(sigma * sigma + 4.0 / (alpha * alpha))
    lg = math.log(1.0 / gamma)
    dyadic = _require_scan(scan) == "dyadic"
    if engine == "reference":
        return _reference_univariate(zs, gamma, sigma, alpha, scan, restart,
                                     trace, stop_at_alarm)
    if engine not in ("auto", "kernel"):
        raise ValueError(f"unknown engine {engine!r}")

    def build_args(base):
        return (zs[base:], b1, lg, dyadic)

    alarms, trace_arrays = _drive_kernel(_kernels.run_univariate, build_args,
                                         horizon, restart, trace, stop_at_alarm)
    return DetectionResult(alarms=alarms, horizon=horizon,
                           engine="numba" if _kernels.USING_NUMBA else "numpy",
                           trace=trace_arrays)


def _reference_univariate(zs, gamma, sigma, alpha, scan, restart, trace,
                          stop_at_alarm):
    class _Cum:
        def __init__(self):
            self.vals = [0.0]

        def push(self, v):
            self.vals.append(self.vals[-1] + v)

    def make_state():
        return _Cum()

    def push(state, v):
        state.push(float(v))

    def cusum_row(state, t, s_arr):
        return _kernels.cusum_univariate_row(np.asarray(state.vals), t, s_arr)

    def threshold_row(t, s_arr):
        return np.full(len(s_arr), threshold_univariate(t, gamma, sigma, alpha))

    return run_detector(list(zs), make_state, push, cusum_row, threshold_row,
                        scan=scan, restart=restart, trace=trace,
                        stop_at_alarm=stop_at_alarm)


def _require_scan(scan: str) -> str:
    if scan not in ("full", "dyadic"):
        raise ValueError(f"unknown scan policy {scan!r}")
    return scan
