"""Command-line entry points, experiment configuration, and CSV I/O.

Commands:
  privatize            raw CSV (t,x1..xd,y) -> privatized CSV (t,w1..wN,z1..zN)
  detect               run a detector over a CSV stream, print the alarm
  experiment           config-driven Monte Carlo with optional sweeps
  calibrate-constants  empirical search for the unpinned constants
  audit                randomized privacy-loss property check

Exit codes: 0 success, 1 validation error, 2 runtime error.

The experiment config is a single JSON file; numeric CSV fields use repr()
serialization so re-reading reproduces every value exactly.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import simulation
from .detection import (ThresholdParams, detect_nonprivate, detect_private,
                        detect_univariate, m1_truncation_floor, snr_check,
                        threshold_private)
from .estimation import build_partition
from .privacy import (PrivacyParams, RegressionChannel, UnivariateChannel,
                      audit_privacy_loss_batch, privatize_regression_batch,
                      zero_noise_source)
from .simulation import (Constant, DetectorConfig, RadialBump,
                         RegressionScenario, UnivariateScenario, fit_scaling,
                         run_replications, summarize)

__all__ = ["ExperimentConfig", "main"]


class ValidationError(ValueError):
    pass


def _fmt(v) -> str:
    """Full-precision scalar serialization (round-trips exactly)."""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


# ---------------------------------------------------------------------------
# Experiment configuration.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment needs, JSON round-trippable.

    ``scenario`` and ``detector`` blocks mirror the simulation dataclasses;
    ``constants`` carries the empirically calibrated values (c_snr, c_eps,
    c_d, and the private threshold noise_scale) that the schedules leave
    unpinned.
    """

    scenario: dict
    detector: dict
    n_reps: int
    master_seed: int
    gamma: float
    horizon_steps: int
    parallelism: int = 1
    privacy: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)
    constants: dict = field(default_factory=lambda: {
        "c_snr": 1.0, "c_eps": 64.0, "c_d": 8.0, "noise_scale": 1.0})
    sweep: dict | None = None
    delay_budget: float | None = None

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "ExperimentConfig":
        data = json.loads(text)
        try:
            cfg = ExperimentConfig(**data)
        except TypeError as exc:
            raise ValidationError(f"bad config: {exc}") from exc
        cfg.validate()
        return cfg

    # -- assembly -----------------------------------------------------------

    def build_scenario(self):
        sc = dict(self.scenario)
        kind = sc.pop("kind", "univariate")
        sc.setdefault("horizon", self.horizon_steps)
        if kind == "univariate":
            return UnivariateScenario(**sc)
        if kind != "regression":
            raise ValidationError(f"unknown scenario kind {kind!r}")
        fams = {"constant": Constant, "radial_bump": RadialBump}
        for key in ("pre_fn", "post_fn"):
            fn_cfg = dict(sc[key])
            fam = fn_cfg.pop("family")
            if fam not in fams:
                raise ValidationError(f"unknown mean function family {fam!r}")
            if fam == "radial_bump":
                fn_cfg["center"] = tuple(fn_cfg["center"])
            sc[key] = fams[fam](**fn_cfg)
        sc["lows"] = tuple(sc["lows"])
        sc["highs"] = tuple(sc["highs"])
        return RegressionScenario(**sc)

    def build_threshold_params(self) -> ThresholdParams:
        scn = self.build_scenario()
        thr = dict(self.thresholds)
        thr.setdefault("gamma", self.gamma)
        thr.setdefault("sigma", scn.sigma)
        if isinstance(scn, RegressionScenario):
            thr.setdefault("m0", scn.m0)
            thr.setdefault("c_lip", scn.c_lip)
            thr.setdefault("h", scn.h)
            thr.setdefault("d", scn.dim)
            if scn.c_min_exact is not None:
                thr.setdefault("c_min", scn.c_min_exact)
        thr.setdefault("alpha", self.privacy.get("alpha", 1.0))
        if "truncation_m" in self.privacy:
            thr.setdefault("truncation_m", self.privacy["truncation_m"])
        return ThresholdParams(**thr)

    def build_detector(self) -> DetectorConfig:
        det = dict(self.detector)
        det.setdefault("noise_scale", self.constants.get("noise_scale", 1.0))
        return DetectorConfig(params=self.build_threshold_params(), **det)

    def validate(self) -> None:
        if self.n_reps < 1:
            raise ValidationError("n_reps must be >= 1")
        if not 0.0 < self.gamma < 1.0:
            raise ValidationError("gamma must be in (0, 1)")
        if self.horizon_steps < 2:
            raise ValidationError("horizon_steps must be >= 2")
        det = self.build_detector()
        scn = self.build_scenario()
        p = det.params
        if det.kind == "private":
            if p.truncation_m is None:
                raise ValidationError("private detector needs privacy.truncation_m")
            floor = m1_truncation_floor(p.m0, p.sigma, p.h)
            if p.truncation_m < floor:
                raise ValidationError(
                    f"truncation_m={p.truncation_m} is below the admissible "
                    f"floor {floor:.6g} for (m0={p.m0}, sigma={p.sigma}, h={p.h})")
        if self.sweep is not None:
            if set(self.sweep) != {"parameter", "values"}:
                raise ValidationError("sweep needs exactly {parameter, values}")
            if self.sweep["parameter"] not in ("alpha", "kappa", "h", "delta"):
                raise ValidationError("sweep parameter must be alpha|kappa|h|delta")
            if len(self.sweep["values"]) < 1:
                raise ValidationError("sweep needs at least one value")
        # detectability is a warning, not an error
        kappa = getattr(scn, "kappa", 0.0)
        if kappa > 0 and scn.change_at is not None:
            chk = snr_check(det.kind, kappa, scn.change_at, p,
                            self.constants.get("c_snr", 1.0))
            if not chk.passed:
                print(f"warning: signal-to-noise check fails "
                      f"(ratio {chk.ratio:.3g} < 1); detection may be unreliable",
                      file=sys.stderr)


def _apply_sweep_value(cfg: ExperimentConfig, param: str, value):
    scenario = dict(cfg.scenario)
    privacy = dict(cfg.privacy)
    thresholds = dict(cfg.thresholds)
    if param == "alpha":
        privacy["alpha"] = value
        thresholds["alpha"] = value
    elif param == "h":
        scenario["h"] = value
        thresholds.pop("h", None)
        thresholds.pop("c_min", None)
    elif param == "delta":
        scenario["change_at"] = int(value)
    elif param == "kappa":
        kind = scenario.get("kind", "univariate")
        if kind == "univariate":
            base = scenario.get("pre_mean", 0.0)
            scenario["post_mean"] = base + value
        else:
            post = dict(scenario["post_fn"])
            if post.get("family") == "radial_bump":
                post["height"] = value
            else:
                post["level"] = scenario["pre_fn"].get("level", 0.0) + value
            scenario["post_fn"] = post
            scenario["kappa"] = value
    return dataclasses.replace(cfg, scenario=scenario, privacy=privacy,
                               thresholds=thresholds, sweep=None)


# ---------------------------------------------------------------------------
# CSV formats.
# ---------------------------------------------------------------------------

def read_raw_csv(path):
    """Rows (t, x1..xd, y), time ordered. Returns (ts, X, Y)."""
    ts, xs, ys = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header is None:
            raise ValidationError(f"{path}: empty file, expected a header")
        d = len(header) - 2
        if d < 1 or header[0] != "t" or header[-1] != "y":
            raise ValidationError(f"{path}: expected header t,x1..xd,y, got {header}")
        for ln, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                ts.append(int(row[0]))
                xs.append([float(v) for v in row[1:1 + d]])
                ys.append(float(row[1 + d]))
            except (ValueError, IndexError) as exc:
                raise ValidationError(f"{path}: malformed row at line {ln}: {row}") from exc
    return np.asarray(ts), np.asarray(xs), np.asarray(ys)


def write_privatized_csv(path, w, z, meta: dict) -> None:
    n, nb = w.shape
    with open(path, "w", newline="") as fh:
        fh.write("# " + ", ".join(f"{k}={_fmt_meta(v)}" for k, v in meta.items()) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"w{j+1}" for j in range(nb)]
                        + [f"z{j+1}" for j in range(nb)])
        for i in range(n):
            writer.writerow([i + 1] + [_fmt(v) for v in w[i]] + [_fmt(v) for v in z[i]])


def _fmt_meta(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def read_privatized_csv(path):
    """Returns (W, Z, meta dict) from a privatized CSV."""
    meta = {}
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            for piece in line[1:].split(","):
                if "=" in piece:
                    k, v = piece.split("=", 1)
                    meta[k.strip()] = v.strip()
        elif line.strip():
            body.append(line)
    if not body:
        raise ValidationError(f"{path}: no header row")
    reader = csv.reader(body)
    header = next(reader)
    nb = (len(header) - 1) // 2
    if len(header) != 1 + 2 * nb or header[0] != "t":
        raise ValidationError(f"{path}: expected header t,w1..wN,z1..zN, got {header}")
    w_rows, z_rows = [], []
    for ln, row in enumerate(reader, start=2):
        try:
            w_rows.append([float(v) for v in row[1:1 + nb]])
            z_rows.append([float(v) for v in row[1 + nb:1 + 2 * nb]])
        except (ValueError, IndexError) as exc:
            raise ValidationError(f"{path}: malformed row at line {ln}") from exc
    if not w_rows:
        return np.zeros((0, nb)), np.zeros((0, nb)), meta
    return np.asarray(w_rows), np.asarray(z_rows), meta


def write_trace_csv(path, trace) -> None:
    ts, stats, thrs = trace
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "max_statistic", "min_active_threshold"])
        for t, s, b in zip(ts, stats, thrs):
            writer.writerow([int(t), _fmt(s), _fmt(b)])


# ---------------------------------------------------------------------------
# Commands.
# ---------------------------------------------------------------------------

def _parse_domain(text: str):
    axes = [a for a in text.split(";") if a.strip()]
    lows, highs = [], []
    for a in axes:
        lo, hi = a.split(":")
        lows.append(float(lo))
        highs.append(float(hi))
    return lows, highs


def cmd_privatize(args) -> int:
    ts, xs, ys = read_raw_csv(args.input)
    lows, highs = _parse_domain(args.domain)
    part = build_partition(lows, highs, args.h)
    params = PrivacyParams(alpha=args.alpha, truncation_m=args.truncation_m)
    if args.zero_noise:
        rng = zero_noise_source()
    else:
        rng = simulation.rng_for(args.seed, 0)
    if len(ts) == 0:
        w = np.zeros((0, part.n_bins))
        z = np.zeros((0, part.n_bins))
    else:
        try:
            w, z = privatize_regression_batch(xs, ys, part, params, rng)
        except ValueError as exc:
            raise ValidationError(str(exc)) from exc
    meta = {"h": args.h, "alpha": args.alpha, "M": args.truncation_m,
            "seed": args.seed, "domain": args.domain, "n_bins": part.n_bins,
            "zero_noise": int(args.zero_noise)}
    write_privatized_csv(args.output, w, z, meta)
    print(f"privatized {len(ts)} rows into {part.n_bins} bins -> {args.output}")
    return 0


def _threshold_params_from_args(args, h, d) -> ThresholdParams:
    return ThresholdParams(gamma=args.gamma, sigma=args.sigma,
                           alpha=args.alpha, truncation_m=args.truncation_m,
                           m0=args.m0, c_lip=args.c_lip, c_min=args.c_min,
                           h=h, d=d)


def cmd_detect(args) -> int:
    trace = args.trace is not None
    if args.kind == "private":
        w, z, meta = read_privatized_csv(args.input)
        h = float(meta.get("h", args.h or 0) or 0)
        alpha = float(meta.get("alpha", args.alpha))
        m = float(meta.get("M", args.truncation_m or 0) or 0)
        if h <= 0 or m <= 0:
            raise ValidationError("private detection needs h and M "
                                  "(from CSV metadata or flags)")
        if "n_bins" in meta and int(meta["n_bins"]) != w.shape[1]:
            raise ValidationError(
                f"metadata says n_bins={meta['n_bins']} but the CSV carries "
                f"{w.shape[1]} bins per block")
        p = ThresholdParams(gamma=args.gamma, sigma=args.sigma, alpha=alpha,
                            truncation_m=m, m0=args.m0, c_lip=args.c_lip,
                            c_min=args.c_min, h=h, d=args.d)
        res = detect_private(w, z, p, scan=args.scan, restart=args.restart,
                             noise_scale=args.noise_scale, trace=trace,
                             stop_at_alarm=not trace)
    elif args.kind == "nonprivate":
        ts, xs, ys = read_raw_csv(args.input)
        lows, highs = _parse_domain(args.domain)
        part = build_partition(lows, highs, args.h)
        try:
            bins = part.locate_batch(xs)
        except ValueError as exc:
            raise ValidationError(str(exc)) from exc
        p = _threshold_params_from_args(args, args.h, part.dim)
        res = detect_nonprivate(bins, ys, part.n_bins, p, scan=args.scan,
                                restart=args.restart, trace=trace,
                                stop_at_alarm=not trace)
    else:
        ts, xs, ys = read_raw_csv(args.input)
        zs = xs[:, 0] if (args.use_x and xs.size) else ys
        res = detect_univariate(zs, args.gamma, args.sigma, args.alpha,
                                scan=args.scan, restart=args.restart,
                                trace=trace, stop_at_alarm=not trace)
    if res.alarms:
        for a in res.alarms:
            print(f"alarm at t={a.t} (split s={a.s}, statistic={a.statistic:.6g}, "
                  f"threshold={a.threshold:.6g})")
    else:
        print("none")
    if trace:
        write_trace_csv(args.trace, res.trace)
        print(f"trace -> {args.trace}")
    return 0


def _summary_row(cfg, det, metrics, sweep_param, sweep_value, snr_ratio):
    return {
        "sweep_parameter": sweep_param or "",
        "sweep_value": "" if sweep_value is None else _fmt(sweep_value),
        "detector": det.kind,
        "scan": det.scan,
        "n_reps": metrics.n,
        "horizon_steps": metrics.horizon,
        "false_alarm_rate": _fmt(metrics.false_alarm_rate),
        "false_alarm_se": _fmt(metrics.false_alarm_se),
        "detection_rate": _fmt(metrics.detection_rate),
        "delay_mean": _fmt(metrics.delay_mean),
        "delay_median": _fmt(metrics.delay_median),
        "delay_q25": _fmt(metrics.delay_q25),
        "delay_q75": _fmt(metrics.delay_q75),
        "delay_q90": _fmt(metrics.delay_q90),
        "snr_ratio": "" if snr_ratio is None else _fmt(snr_ratio),
        "master_seed": cfg.master_seed,
    }


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig.from_json(Path(args.config).read_text())
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sweep = cfg.sweep
    points = ([(None, None)] if sweep is None
              else [(sweep["parameter"], v) for v in sweep["values"]])
    rows = []
    sweep_xs, sweep_med = [], []
    for param, value in points:
        sub = cfg if param is None else _apply_sweep_value(cfg, param, value)
        try:
            scenario = sub.build_scenario()
            det = sub.build_detector()
            outcomes = run_replications(scenario, det, sub.n_reps,
                                        sub.master_seed, sub.parallelism)
            metrics = summarize(outcomes, sub.gamma, sub.delay_budget)
            snr_ratio = None
            kappa = getattr(scenario, "kappa", 0.0)
            if kappa > 0 and scenario.change_at is not None:
                snr_ratio = snr_check(det.kind, kappa, scenario.change_at,
                                      det.params,
                                      sub.constants.get("c_snr", 1.0)).ratio
            rows.append(_summary_row(sub, det, metrics, param, value, snr_ratio))
            if param is not None and not math.isnan(metrics.delay_median):
                sweep_xs.append(value)
                sweep_med.append(metrics.delay_median)
        except Exception as exc:  # partial sweep failures are recorded
            rows.append({"sweep_parameter": param or "",
                         "sweep_value": "" if value is None else _fmt(value),
                         "detector": cfg.detector.get("kind", "?"),
                         "error": str(exc)})
    summary_path = out_dir / "summary.csv"
    fieldnames = sorted({k for r in rows for k in r})
    with open(summary_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    print(f"summary -> {summary_path}")
    for metric in ("delay_median", "false_alarm_rate", "detection_rate"):
        pts = [(r.get("sweep_value"), r.get(metric)) for r in rows
               if r.get(metric) not in (None, "")]
        if sweep is not None and pts:
            plot_path = out_dir / f"{metric}_vs_{sweep['parameter']}.csv"
            with open(plot_path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["x", "y", "err"])
                for r in rows:
                    if metric not in r or r.get(metric) in (None, ""):
                        continue
                    err = r.get("false_alarm_se", "0.0") \
                        if metric == "false_alarm_rate" else "0.0"
                    writer.writerow([r["sweep_value"], r[metric], err])
            print(f"plot data -> {plot_path}")
    if sweep is not None and len(sweep_med) >= 3 and all(m > 0 for m in sweep_med):
        fit = fit_scaling(sweep_xs, sweep_med)
        fit_path = out_dir / "scaling_fit.json"
        fit_path.write_text(json.dumps({
            "parameter": sweep["parameter"], "metric": "delay_median",
            "slope": fit.slope, "intercept": fit.intercept,
            "residual_rms": fit.residual_rms}, indent=2))
        print(f"scaling fit: slope={fit.slope:.4f} -> {fit_path}")
    return 0


def cmd_calibrate(args) -> int:
    """Empirical constants: private-threshold noise multiplier from null-run
    quantiles, plus delay-to-schedule ratios where a change is planted."""
    cfg = ExperimentConfig.from_json(Path(args.config).read_text())
    det = cfg.build_detector()
    scenario = cfg.build_scenario()
    out = {}
    if det.kind == "private":
        null_sc = dataclasses.replace(scenario, change_at=None)
        need = []
        for rep in range(args.null_runs):
            rng = simulation.rng_for(cfg.master_seed + 7919, rep)
            xs, ys = simulation.generate_regression_stream(null_sc, rng)
            part = null_sc.partition()
            pp = PrivacyParams(alpha=det.params.alpha,
                               truncation_m=det.params.truncation_m)
            w, z = privatize_regression_batch(xs, ys, part, pp, rng)
            need.append(_null_multiplier(w, z, det.params, det.scan))
        need = np.asarray(need)
        q = float(np.quantile(need, 1.0 - cfg.gamma))
        out["noise_scale_quantile"] = q
        out["noise_scale_suggested"] = q * args.margin
    if scenario.change_at is not None and getattr(scenario, "kappa", 0.0) > 0:
        outcomes = run_replications(scenario, det, cfg.n_reps, cfg.master_seed,
                                    cfg.parallelism)
        metrics = summarize(outcomes, cfg.gamma)
        p = det.params
        kappa = scenario.kappa
        delta = scenario.change_at
        if not math.isnan(metrics.delay_median):
            if det.kind == "univariate":
                unit = (p.sigma ** 2 + 4.0 / p.alpha ** 2) \
                    * math.log(delta / p.gamma) / kappa ** 2
                out["c_d_hat"] = metrics.delay_median / unit
            elif det.kind == "private":
                hd = p.h ** p.d
                unit = p.truncation_m ** 2 / (kappa ** 2 * hd * hd * p.alpha ** 2) \
                    * math.log(delta / (hd * hd * p.c_min * p.gamma))
                out["c_eps_hat"] = metrics.delay_median / unit
            out["detection_rate"] = metrics.detection_rate
            out["false_alarm_rate"] = metrics.false_alarm_rate
        chk = snr_check(det.kind, kappa, delta, p, 1.0)
        out["c_snr_boundary_hat"] = chk.ratio
    text = json.dumps(out, indent=2, sort_keys=True)
    print(text)
    if args.output:
        Path(args.output).write_text(text)
    return 0


def _null_multiplier(w, z, params, scan) -> float:
    """Largest noise multiplier the null statistics would have needed on this
    run: max over scanned active (s, t) of (D - 2 sqrt(q) A) / unit noise term.

    Dyadic scans group the pairs by gap t - s = 2^k, which vectorizes over
    all splits at once; full scans fall back to a per-t loop.
    """
    from . import _kernels
    from .detection import _private_pieces

    a_bias, b_coef, log_c, act_coef = _private_pieces(params, 1.0)
    T = w.shape[0]
    wcum = np.vstack([np.zeros((1, w.shape[1])), np.cumsum(w, axis=0)])
    zcum = np.vstack([np.zeros((1, w.shape[1])), np.cumsum(z, axis=0)])
    worst = 0.0
    if scan == "dyadic":
        gap = 1
        while gap < T:
            s = np.arange(1, T - gap + 1, dtype=np.int64)
            t = s + gap
            q = s * gap / t
            lt = np.log(log_c) + 3.0 * np.log(t.astype(np.float64))
            act = q >= act_coef * lt
            if act.any():
                s, t, q, lt = s[act], t[act], q[act], lt[act]
                n1 = s.astype(np.float64)
                n2 = float(gap)
                mu1 = wcum[s] / n1[:, None]
                nu1 = zcum[s] / n1[:, None]
                mu2 = (wcum[t] - wcum[s]) / n2
                nu2 = (zcum[t] - zcum[s]) / n2
                g1 = (np.log(n1 + 1.0) / n1)[:, None]
                g2 = math.log(n2 + 1.0) / n2
                m1 = np.divide(nu1, mu1, out=np.zeros_like(nu1), where=mu1 >= g1)
                m2 = np.divide(nu2, mu2, out=np.zeros_like(nu2), where=mu2 >= g2)
                stats = np.sqrt(q) * np.abs(m1 - m2).max(axis=1)
                need = (stats - 2.0 * np.sqrt(q) * a_bias) / (b_coef * np.sqrt(lt))
                worst = max(worst, float(need.max()))
            gap <<= 1
        return worst
    for t in range(2, T + 1):
        lt = math.log(log_c * float(t) ** 3)
        s = np.arange(1, t, dtype=np.int64)
        q = s * (t - s) / t
        act = q >= act_coef * lt
        if not act.any():
            continue
        s = s[act]
        stats = _kernels.cusum_private_row(wcum, zcum, t, s)
        unit = b_coef * math.sqrt(lt)
        need = (stats - 2.0 * np.sqrt(q[act]) * a_bias) / unit
        worst = max(worst, float(need.max()))
    return worst


def cmd_audit(args) -> int:
    rng = simulation.rng_for(args.seed, 0)
    n = args.trials
    if args.channel == "univariate":
        chan = UnivariateChannel(alpha=args.alpha, interval_length=args.interval_length)
        xa = rng.uniform(0.0, args.interval_length, size=n)
        xb = rng.uniform(0.0, args.interval_length, size=n)
        outs = rng.uniform(-3.0 * args.interval_length,
                           4.0 * args.interval_length, size=n)
        losses = audit_privacy_loss_batch(chan, xa, xb, outs)
        bound = args.alpha
    else:
        lows, highs = _parse_domain(args.domain)
        part = build_partition(lows, highs, args.h)
        params = PrivacyParams(alpha=args.alpha, truncation_m=args.truncation_m)
        chan = RegressionChannel(partition=part, params=params)
        d = part.dim
        xa = rng.uniform(lows, highs, size=(n, d))
        xb = rng.uniform(lows, highs, size=(n, d))
        ya = rng.normal(0.0, 2.0 * args.truncation_m, size=n)
        yb = rng.normal(0.0, 2.0 * args.truncation_m, size=n)
        w_out = rng.normal(0.0, 8.0 / args.alpha, size=(n, part.n_bins))
        z_out = rng.normal(0.0, 8.0 * args.truncation_m / args.alpha,
                           size=(n, part.n_bins))
        losses = audit_privacy_loss_batch(chan, (xa, ya), (xb, yb), (w_out, z_out))
        bound = args.alpha
    worst = float(np.max(np.abs(losses)))
    violations = int(np.sum(np.abs(losses) > bound + 1e-12))
    print(f"channel={args.channel} alpha={args.alpha} trials={n} "
          f"max|loss|={worst:.12g} bound={bound} violations={violations}")
    if violations:
        raise ValidationError(f"{violations} privacy-loss violations found")
    print("privacy bound holds on all sampled triples")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing.
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="privcusum",
                description="Locally private online change point detection")
    sub = p.add_subparsers(dest="command", required=True)

    pv = sub.add_parser("privatize", help="randomize a raw CSV stream")
    pv.add_argument("--input", required=True)
    pv.add_argument("--output", required=True)
    pv.add_argument("--domain", required=True,
                    help="axis ranges, e.g. '0:1' or '0:1;0:1'")
    pv.add_argument("--h", type=float, required=True, help="bin width")
    pv.add_argument("--alpha", type=float, required=True)
    pv.add_argument("--truncation-m", type=float, required=True)
    pv.add_argument("--seed", type=int, default=0)
    pv.add_argument("--zero-noise", action="store_true")
    pv.set_defaults(fn=cmd_privatize)

    dt = sub.add_parser("detect", help="run a detector over a CSV stream")
    dt.add_argument("--input", required=True)
    dt.add_argument("--kind", choices=["private", "nonprivate", "univariate"],
                    required=True)
    dt.add_argument("--gamma", type=float, default=0.05)
    dt.add_argument("--sigma", type=float, default=1.0)
    dt.add_argument("--alpha", type=float, default=1.0)
    dt.add_argument("--truncation-m", type=float, default=None)
    dt.add_argument("--m0", type=float, default=0.0)
    dt.add_argument("--c-lip", type=float, default=0.0)
    dt.add_argument("--c-min", type=float, default=1.0)
    dt.add_argument("--h", type=float, default=None)
    dt.add_argument("--d", type=int, default=1)
    dt.add_argument("--domain", default="0:1")
    dt.add_argument("--scan", choices=["full", "dyadic"], default="full")
    dt.add_argument("--restart", action="store_true")
    dt.add_argument("--noise-scale", type=float, default=1.0)
    dt.add_argument("--trace", default=None, help="write per-step trace CSV here")
    dt.add_argument("--use-x", action="store_true",
                    help="univariate: detect on the x column instead of y")
    dt.set_defaults(fn=cmd_detect)

    ex = sub.add_parser("experiment", help="config-driven Monte Carlo")
    ex.add_argument("--config", required=True)
    ex.add_argument("--out-dir", required=True)
    ex.set_defaults(fn=cmd_experiment)

    cal = sub.add_parser("calibrate-constants",
                         help="empirical search for unpinned constants")
    cal.add_argument("--config", required=True)
    cal.add_argument("--null-runs", type=int, default=20)
    cal.add_argument("--margin", type=float, default=1.2)
    cal.add_argument("--output", default=None)
    cal.set_defaults(fn=cmd_calibrate)

    au = sub.add_parser("audit", help="randomized privacy-loss check")
    au.add_argument("--channel", choices=["regression", "univariate"],
                    required=True)
    au.add_argument("--alpha", type=float, required=True)
    au.add_argument("--trials", type=int, default=10000)
    au.add_argument("--seed", type=int, default=0)
    au.add_argument("--domain", default="0:1")
    au.add_argument("--h", type=float, default=0.25)
    au.add_argument("--truncation-m", type=float, default=1.0)
    au.add_argument("--interval-length", type=float, default=1.0)
    au.set_defaults(fn=cmd_audit)
    return p


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
