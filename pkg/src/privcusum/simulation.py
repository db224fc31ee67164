"""Data generators, the Monte Carlo driver, and summary metrics.

Scenarios describe an i.i.d. covariate stream with a single mean-function
switch at a known step (or no switch at all), plus the noise law. Streams
are reproducible: one Philox generator per replication, derived from
(master_seed, rep_index), and the random draws are consumed in an order
that does not depend on where (or whether) the change occurs, so a null run
and a late-change run share their prefix sample path under the same seed.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .detection import (ThresholdParams, detect_nonprivate, detect_private,
                        detect_univariate)
from .estimation import BinPartition, build_partition
from .privacy import (PrivacyParams, privatize_regression_batch,
                      privatize_univariate_batch)

__all__ = [
    "Constant",
    "RadialBump",
    "cone_bump",
    "RegressionScenario",
    "UnivariateScenario",
    "lower_bound_regression_instance",
    "lower_bound_univariate_instance",
    "generate_regression_stream",
    "generate_univariate_stream",
    "DetectorConfig",
    "RunOutcome",
    "run_one",
    "run_replications",
    "summarize",
    "Metrics",
    "fit_scaling",
    "ScalingFit",
    "bernoulli_sum_tail_bound",
    "rng_for",
]


def rng_for(master_seed: int, rep: int) -> np.random.Generator:
    """Counter-based generator for replication ``rep`` of a master seed."""
    child = np.random.SeedSequence(master_seed).spawn(rep + 1)[rep]
    return np.random.Generator(np.random.Philox(child))


# ---------------------------------------------------------------------------
# Mean-function families with analytically known sup-norm and Lipschitz
# constants, so every threshold input is exact rather than estimated.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Constant:
    level: float

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return np.full(x.shape[0], self.level)

    @property
    def sup_norm(self) -> float:
        return abs(self.level)

    @property
    def lipschitz(self) -> float:
        return 0.0


@dataclass(frozen=True)
class RadialBump:
    """height * (1 - |x - center| / radius)_+ ; Lipschitz |height|/radius."""

    height: float
    center: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ValueError("radius must be positive")

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        c = np.asarray(self.center, dtype=np.float64)
        dist = np.linalg.norm(x - c, axis=1)
        return self.height * np.maximum(0.0, 1.0 - dist / self.radius)

    @property
    def sup_norm(self) -> float:
        return abs(self.height)

    @property
    def lipschitz(self) -> float:
        return abs(self.height) / self.radius


def cone_bump(kappa: float, d: int) -> RadialBump:
    """The worst-case bump (kappa - |x|)_+: peak kappa at 0, 1-Lipschitz."""
    return RadialBump(height=kappa, center=(0.0,) * d, radius=kappa)


@dataclass(frozen=True)
class _SumFn:
    """Pointwise sum of two mean functions (used by adversarial instances)."""

    a: object
    b: object

    def __call__(self, x):
        return self.a(x) + self.b(x)

    @property
    def sup_norm(self) -> float:
        return self.a.sup_norm + self.b.sup_norm

    @property
    def lipschitz(self) -> float:
        return self.a.lipschitz + self.b.lipschitz


# ---------------------------------------------------------------------------
# Scenarios.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegressionScenario:
    """Multivariate regression stream with one mean-function switch.

    ``change_at`` is the last pre-change step (None means no change ever).
    ``x_law`` is "uniform" over the domain box or "uniform_ball" over the
    ball inscribed at the origin with radius highs[0] (adversarial
    instances). ``c_min`` may be supplied when the sampling law's density
    floor is known; for the uniform law it is computed exactly.
    """

    lows: tuple
    highs: tuple
    h: float
    pre_fn: object
    post_fn: object
    kappa: float
    change_at: int | None
    sigma: float
    horizon: int
    noise: str = "gaussian"
    x_law: str = "uniform"
    c_min: float | None = None

    def __post_init__(self):
        if self.horizon < 2:
            raise ValueError("horizon must be >= 2")
        if self.noise not in ("gaussian", "uniform"):
            raise ValueError(f"unknown noise law {self.noise!r}")
        if self.x_law not in ("uniform", "uniform_ball"):
            raise ValueError(f"unknown covariate law {self.x_law!r}")
        if self.change_at is not None and self.change_at < 1:
            raise ValueError("change_at must be >= 1 when finite")

    @property
    def dim(self) -> int:
        return len(self.lows)

    @property
    def m0(self) -> float:
        return max(self.pre_fn.sup_norm, self.post_fn.sup_norm)

    @property
    def c_lip(self) -> float:
        return max(self.pre_fn.lipschitz, self.post_fn.lipschitz)

    def partition(self) -> BinPartition:
        return build_partition(self.lows, self.highs, self.h, c_min=self.c_min_exact)

    @property
    def c_min_exact(self) -> float | None:
        if self.c_min is not None:
            return self.c_min
        if self.x_law == "uniform":
            part = build_partition(self.lows, self.highs, self.h)
            vol_domain = float(np.prod(np.asarray(self.highs) - np.asarray(self.lows)))
            hd = self.h ** self.dim
            return float(np.min(part.volumes / vol_domain / hd))
        return None

    def verify_kappa(self, grid_points: int = 2001) -> float:
        """Max |pre - post| over a dense domain grid (1d exact check)."""
        if self.dim == 1:
            xs = np.linspace(self.lows[0], self.highs[0], grid_points)[:, None]
        else:
            rng = np.random.Generator(np.random.Philox(12345))
            xs = rng.uniform(self.lows, self.highs, size=(grid_points, self.dim))
            xs = np.vstack([xs, np.zeros((1, self.dim))])
        return float(np.max(np.abs(self.pre_fn(xs) - self.post_fn(xs))))


@dataclass(frozen=True)
class UnivariateScenario:
    """Scalar mean stream with one level shift."""

    pre_mean: float
    post_mean: float
    change_at: int | None
    sigma: float
    horizon: int
    noise: str = "gaussian"

    def __post_init__(self):
        if self.horizon < 2:
            raise ValueError("horizon must be >= 2")
        if self.noise not in ("gaussian", "uniform"):
            raise ValueError(f"unknown noise law {self.noise!r}")
        if self.change_at is not None and self.change_at < 1:
            raise ValueError("change_at must be >= 1 when finite")

    @property
    def kappa(self) -> float:
        return abs(self.post_mean - self.pre_mean)


def lower_bound_regression_instance(kappa: float, sigma: float, d: int, *,
                                    h: float, change_at: int | None,
                                    horizon: int, radius: float | None = None,
                                    alpha: float | None = None,
                                    gamma: float | None = None) -> RegressionScenario:
    """Adversarial regression instance: pre-change mean 0, post-change the
    cone bump (kappa - |x|)_+ on the kappa-ball, covariates uniform on a
    centered ball.

    Radius resolution: explicit ``radius`` wins; else the privacy-driven
    radius (2(e^alpha - 1)/alpha)^(1/d) when alpha is given; else
    max{(8 sigma^2 log(1/gamma) / kappa^2)^(1/d), 2 kappa} when gamma is
    given; else 2 kappa.
    """
    if kappa <= 0.0 or sigma <= 0.0:
        raise ValueError("kappa and sigma must be positive")
    if radius is None:
        if alpha is not None:
            radius = (2.0 * (math.exp(alpha) - 1.0) / alpha) ** (1.0 / d)
        elif gamma is not None:
            radius = max((8.0 * sigma ** 2 * math.log(1.0 / gamma) / kappa ** 2)
                         ** (1.0 / d), 2.0 * kappa)
        else:
            radius = 2.0 * kappa
    if radius < kappa:
        raise ValueError(f"radius {radius} smaller than the bump support {kappa}")
    lows = (-radius,) * d
    highs = (radius,) * d
    pre = Constant(0.0)
    post = _SumFn(Constant(0.0), cone_bump(kappa, d))
    x_law = "uniform" if d == 1 else "uniform_ball"
    return RegressionScenario(lows=lows, highs=highs, h=h, pre_fn=pre,
                              post_fn=post, kappa=kappa, change_at=change_at,
                              sigma=sigma, horizon=horizon, noise="uniform",
                              x_law=x_law)


def lower_bound_univariate_instance(kappa: float, sigma: float, *,
                                    change_at: int | None,
                                    horizon: int) -> UnivariateScenario:
    """Adversarial scalar instance: Unif[0, 2 sigma] shifting to
    kappa + Unif[0, 2 sigma]; total variation distance kappa/(2 sigma)."""
    if not 0.0 < kappa < 2.0 * sigma:
        raise ValueError(f"requires 0 < kappa < 2*sigma, got kappa={kappa}, sigma={sigma}")
    return UnivariateScenario(pre_mean=sigma, post_mean=sigma + kappa,
                              change_at=change_at, sigma=sigma,
                              horizon=horizon, noise="uniform")


# ---------------------------------------------------------------------------
# Stream generation. Draw order is change-point independent: covariates
# first, then the centered noise, then means are added.
# ---------------------------------------------------------------------------

def _mean_mask(horizon: int, change_at: int | None) -> np.ndarray:
    post = np.zeros(horizon, dtype=bool)
    if change_at is not None and change_at < horizon:
        post[change_at:] = True
    return post


def _draw_noise(rng, kind: str, sigma: float, n: int) -> np.ndarray:
    if sigma == 0.0:
        return np.zeros(n)
    if kind == "gaussian":
        return rng.normal(0.0, sigma, size=n)
    return rng.uniform(-sigma, sigma, size=n)


def generate_regression_stream(sc: RegressionScenario, rng):
    """(X, Y) arrays of shape (horizon, d) and (horizon,)."""
    n = sc.horizon
    lows = np.asarray(sc.lows, dtype=np.float64)
    highs = np.asarray(sc.highs, dtype=np.float64)
    if sc.x_law == "uniform":
        xs = rng.uniform(lows, highs, size=(n, sc.dim))
    else:
        radius = float(highs[0])
        xs = np.empty((n, sc.dim))
        got = 0
        while got < n:
            block = rng.uniform(-radius, radius, size=(2 * (n - got) + 16, sc.dim))
            keep = block[np.linalg.norm(block, axis=1) <= radius]
            take = min(len(keep), n - got)
            xs[got:got + take] = keep[:take]
            got += take
    noise = _draw_noise(rng, sc.noise, sc.sigma, n)
    post = _mean_mask(n, sc.change_at)
    ys = np.where(post, sc.post_fn(xs), sc.pre_fn(xs)) + noise
    return xs, ys


def generate_univariate_stream(sc: UnivariateScenario, rng) -> np.ndarray:
    n = sc.horizon
    noise = _draw_noise(rng, sc.noise, sc.sigma, n)
    post = _mean_mask(n, sc.change_at)
    means = np.where(post, sc.post_mean, sc.pre_mean)
    return means + noise


# ---------------------------------------------------------------------------
# Monte Carlo driver.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DetectorConfig:
    """Which detector to run and how."""

    kind: str  # "private" | "nonprivate" | "univariate"
    params: ThresholdParams
    scan: str = "full"
    restart: bool = False
    noise_scale: float = 1.0
    engine: str = "auto"

    def __post_init__(self):
        if self.kind not in ("private", "nonprivate", "univariate"):
            raise ValueError(f"unknown detector kind {self.kind!r}")


@dataclass(frozen=True)
class RunOutcome:
    """One replication: stopping time versus the truth."""

    alarm_time: int | None
    delta: int | None
    horizon: int
    rep: int

    @property
    def false_alarm(self) -> bool:
        if self.alarm_time is None:
            return False
        return self.delta is None or self.alarm_time <= self.delta

    @property
    def detected(self) -> bool:
        return self.alarm_time is not None and not self.false_alarm

    @property
    def delay(self) -> int:
        if self.alarm_time is None or self.delta is None:
            return 0
        return max(0, self.alarm_time - self.delta)


def run_one(scenario, det: DetectorConfig, rng, rep: int = 0) -> RunOutcome:
    """Generate one stream, push it through the configured detector."""
    if det.kind == "univariate":
        if not isinstance(scenario, UnivariateScenario):
            raise TypeError("univariate detector needs a UnivariateScenario")
        xs = generate_univariate_stream(scenario, rng)
        zs = privatize_univariate_batch(xs, det.params.alpha, rng)
        res = detect_univariate(zs, det.params.gamma, det.params.sigma,
                                det.params.alpha, scan=det.scan,
                                restart=det.restart, engine=det.engine)
    elif det.kind == "private":
        if not isinstance(scenario, RegressionScenario):
            raise TypeError("private detector needs a RegressionScenario")
        if det.params.truncation_m is None:
            raise ValueError("private detector needs params.truncation_m")
        xs, ys = generate_regression_stream(scenario, rng)
        part = scenario.partition()
        pp = PrivacyParams(alpha=det.params.alpha,
                           truncation_m=det.params.truncation_m)
        w, z = privatize_regression_batch(xs, ys, part, pp, rng)
        res = detect_private(w, z, det.params, scan=det.scan,
                             restart=det.restart, noise_scale=det.noise_scale,
                             engine=det.engine)
    else:
        if not isinstance(scenario, RegressionScenario):
            raise TypeError("nonprivate detector needs a RegressionScenario")
        xs, ys = generate_regression_stream(scenario, rng)
        part = scenario.partition()
        bins = part.locate_batch(xs)
        res = detect_nonprivate(bins, ys, part.n_bins, det.params,
                                scan=det.scan, restart=det.restart,
                                engine=det.engine)
    return RunOutcome(alarm_time=res.alarm_time, delta=scenario.change_at,
                      horizon=scenario.horizon, rep=rep)


def _run_rep(payload):
    scenario, det, master_seed, rep = payload
    rng = rng_for(master_seed, rep)
    return run_one(scenario, det, rng, rep=rep)


def run_replications(scenario, det: DetectorConfig, n_reps: int,
                     master_seed: int, parallelism: int = 1) -> list[RunOutcome]:
    """n_reps independent seeded runs; outcomes do not depend on parallelism.

    Per-replication failures are recorded as outcomes with alarm_time None
    and horizon 0 rather than aborting the batch.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    payloads = [(scenario, det, master_seed, rep) for rep in range(n_reps)]
    outcomes: list[RunOutcome] = []
    if parallelism <= 1:
        for p in payloads:
            outcomes.append(_run_rep_safe(p))
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(_run_rep_safe, payloads))
    return outcomes


def _run_rep_safe(payload) -> RunOutcome:
    try:
        return _run_rep(payload)
    except Exception:
        _, _, _, rep = payload
        return RunOutcome(alarm_time=None, delta=None, horizon=0, rep=rep)


@dataclass(frozen=True)
class Metrics:
    n: int
    gamma: float
    horizon: int
    false_alarm_rate: float
    false_alarm_se: float
    detection_rate: float
    delay_mean: float
    delay_median: float
    delay_q25: float
    delay_q75: float
    delay_q90: float
    budget: float | None = None
    budget_exceed_frac: float | None = None


def summarize(outcomes: list[RunOutcome], gamma: float,
              delay_budget: float | None = None) -> Metrics:
    """False-alarm and delay summary over a batch of outcomes.

    Delay statistics are over detected (post-change alarm) runs only; the
    false-alarm rate carries its binomial standard error. The horizon is
    reported so "no alarm by the horizon" is interpretable.
    """
    if not outcomes:
        raise ValueError("summarize needs at least one outcome")
    n = len(outcomes)
    fa = sum(1 for o in outcomes if o.false_alarm) / n
    fa_se = math.sqrt(fa * (1.0 - fa) / n)
    detected = [o for o in outcomes if o.detected]
    det_rate = len(detected) / n
    delays = np.asarray([o.delay for o in detected], dtype=np.float64)
    if delays.size:
        dm, dmed = float(delays.mean()), float(np.median(delays))
        q25, q75, q90 = (float(np.quantile(delays, q)) for q in (0.25, 0.75, 0.90))
    else:
        dm = dmed = q25 = q75 = q90 = math.nan
    exceed = None
    if delay_budget is not None:
        exceed = (float((delays > delay_budget).mean()) if delays.size else math.nan)
    return Metrics(n=n, gamma=gamma, horizon=max(o.horizon for o in outcomes),
                   false_alarm_rate=fa, false_alarm_se=fa_se,
                   detection_rate=det_rate, delay_mean=dm, delay_median=dmed,
                   delay_q25=q25, delay_q75=q75, delay_q90=q90,
                   budget=delay_budget, budget_exceed_frac=exceed)


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    residual_rms: float


def fit_scaling(xs, ys) -> ScalingFit:
    """Least-squares slope of log(y) against log(x)."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.size < 3:
        raise ValueError("need at least 3 sweep points")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("scaling fit needs positive values")
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    return ScalingFit(slope=float(slope), intercept=float(intercept),
                      residual_rms=float(np.sqrt(np.mean(resid ** 2))))


def bernoulli_sum_tail_bound(n: int, p: float, x: float) -> float:
    """Tail factor 2 exp(-n p x^2 / 4) for a noise sum against its
    Bernoulli-count normalizer; valid for x in (0, 1]."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 < p < 1.0:
        raise ValueError("p must be in (0, 1)")
    if not 0.0 < x <= 1.0:
        raise ValueError("x must be in (0, 1]")
    return 2.0 * math.exp(-n * p * x * x / 4.0)
