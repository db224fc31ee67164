"""Acceptance checklist: one test per criterion, one pass/fail line each.

Criteria 4 and 5 are run exactly as configured and are expected to fail:
their parameter regimes sit below the detectability boundary of the
implemented threshold schedules (the printed numbers show the measured
rates against the required ones). Criterion 8's Laplace half is likewise
expected to fail: the closed-form tail factor is not a valid envelope of
the empirical tail. They are kept failing rather than re-tuned; see
README and the test output for the measured values.
"""

import math
import time

import numpy as np

import privcusum as pc
from privcusum import _kernels

import _oracles


def _report(num, name, ok, detail):
    status = "PASS" if ok else "FAIL"
    line = f"ACCEPTANCE {num} [{name}]: {status} ({detail})"
    print(line, flush=True)
    assert ok, line


# ---------------------------------------------------------------------------
# 1. Privacy bound.
# ---------------------------------------------------------------------------

def test_acceptance_1_privacy_bound():
    t0 = time.time()
    rng = pc.rng_for(1001, 0)
    n = 10_000
    worst = {}
    for alpha in (0.25, 1.0):
        part = pc.build_partition([0.0], [1.0], 0.25)
        params = pc.PrivacyParams(alpha=alpha, truncation_m=1.0)
        chan = pc.RegressionChannel(part, params)
        xa = rng.uniform(0, 1, size=(n, 1))
        xb = rng.uniform(0, 1, size=(n, 1))
        ya = rng.normal(0, 3.0, size=n)
        yb = rng.normal(0, 3.0, size=n)
        outs = (rng.normal(0, 10.0 / alpha, size=(n, 4)),
                rng.normal(0, 10.0 / alpha, size=(n, 4)))
        losses = pc.audit_privacy_loss_batch(chan, (xa, ya), (xb, yb), outs)
        worst[("regression", alpha)] = float(np.max(np.abs(losses)))
        uchan = pc.UnivariateChannel(alpha=alpha)
        ul = pc.audit_privacy_loss_batch(uchan, rng.uniform(0, 1, n),
                                         rng.uniform(0, 1, n),
                                         rng.normal(0, 6.0 / alpha, n))
        worst[("univariate", alpha)] = float(np.max(np.abs(ul)))
    violations = sum(v > alpha + 1e-12 for (_, alpha), v in worst.items())
    elapsed = time.time() - t0
    detail = (", ".join(f"{k[0]}@a={k[1]}: max|loss|={v:.9f}"
                        for k, v in worst.items())
              + f"; violations={violations}; {elapsed:.1f}s")
    _report(1, "privacy bound", violations == 0 and elapsed < 10.0, detail)


# ---------------------------------------------------------------------------
# 2. Oracle equivalence.
# ---------------------------------------------------------------------------

def _stats_match(engine_vals, oracle_vals):
    engine_vals = np.asarray(engine_vals)
    oracle_vals = np.asarray(oracle_vals)
    tol = 1e-10 * np.maximum(1.0, np.abs(oracle_vals))
    return np.all(np.abs(engine_vals - oracle_vals) <= tol)


def test_acceptance_2_oracle_equivalence():
    t0 = time.time()
    T = 200
    mismatches = 0
    alarm_mismatch = 0
    part = pc.build_partition([0.0], [1.0], 0.25)
    for stream in range(20):
        rng = pc.rng_for(2002, stream)
        kind = ("private", "univariate", "nonprivate")[stream % 3]
        jump = stream % 2 == 0
        if kind == "private":
            xs = rng.uniform(0, 1, size=(T, 1))
            ys = np.where(np.arange(T) < T // 2, 0.0, 2.0 * jump) \
                + rng.normal(0, 0.5, T)
            W, Z = pc.privatize_regression_batch(
                xs, ys, part, pc.PrivacyParams(1.0, 3.0), rng)
            wcum = np.vstack([np.zeros((1, 4)), np.cumsum(W, axis=0)])
            zcum = np.vstack([np.zeros((1, 4)), np.cumsum(Z, axis=0)])
            all_engine, all_oracle = [], []
            for t in range(2, T + 1):
                s_arr = np.arange(1, t)
                all_engine.append(_kernels.cusum_private_row(wcum, zcum, t, s_arr))
                all_oracle.append([_oracles.cusum_private(W, Z, s, t)
                                   for s in s_arr])
            flat_e = np.concatenate(all_engine)
            flat_o = np.concatenate([np.asarray(v) for v in all_oracle])
            mismatches += not _stats_match(flat_e, flat_o)
            # alarm equivalence through a constant threshold (the literal
            # schedule is +inf everywhere at this horizon: both report none)
            params = pc.ThresholdParams(gamma=0.05, sigma=0.5, alpha=1.0,
                                        truncation_m=3.0, m0=2.0, c_min=1.0,
                                        h=0.25, d=1)
            engine_none = pc.detect_private(W, Z, params).alarm_time
            oracle_none = _oracles.detect(
                lambda s, t: _oracles.cusum_private(W, Z, s, t),
                lambda s, t: pc.threshold_private(s, t, params), T)
            alarm_mismatch += (engine_none is not None) or (oracle_none is not None)
            const = 0.6 * flat_o.max()
            ref = pc.run_detector(
                list(zip(W, Z)),
                lambda: pc.PrefixState(4),
                lambda st, row: st.push(row[0], row[1]),
                lambda st, t, s_arr: _kernels.cusum_private_row(
                    st.w_matrix, st.z_matrix, t, s_arr),
                lambda t, s_arr: np.full(len(s_arr), const))
            orc = _oracles.detect(
                lambda s, t: _oracles.cusum_private(W, Z, s, t),
                lambda s, t: const, T)
            got = (ref.alarms[0].t, ref.alarms[0].s) if ref.alarms else None
            alarm_mismatch += got != orc
        elif kind == "univariate":
            zs = rng.normal(0, 1.0, T) + np.where(np.arange(T) < T // 2, 0.0,
                                                  5.0 * jump)
            zcum = pc.prefix_sums(zs)
            engine = np.concatenate(
                [_kernels.cusum_univariate_row(zcum, t, np.arange(1, t))
                 for t in range(2, T + 1)])
            oracle = np.concatenate(
                [[_oracles.cusum_univariate(zs, s, t) for s in range(1, t)]
                 for t in range(2, T + 1)])
            mismatches += not _stats_match(engine, oracle)
            res = pc.detect_univariate(zs, 0.05, 1.0, 1.0)
            orc = _oracles.detect(
                lambda s, t: _oracles.cusum_univariate(zs, s, t),
                lambda s, t: pc.threshold_univariate(t, 0.05, 1.0, 1.0), T)
            got = (res.alarms[0].t, res.alarms[0].s) if res.alarms else None
            alarm_mismatch += got != orc
        else:
            xs = rng.uniform(0, 1, size=(T, 1))
            ys = np.where(np.arange(T) < T // 2, 0.0, 3.0 * jump) \
                + rng.normal(0, 0.5, T)
            bins = part.locate_batch(xs)
            onehot = np.zeros((T, 4))
            onehot[np.arange(T), bins] = 1.0
            ccum = np.vstack([np.zeros((1, 4)), np.cumsum(onehot, axis=0)])
            ycum = np.vstack([np.zeros((1, 4)),
                              np.cumsum(onehot * ys[:, None], axis=0)])
            engine = np.concatenate(
                [_kernels.cusum_nonprivate_row(ccum, ycum, t, np.arange(1, t))
                 for t in range(2, T + 1)])
            oracle = np.concatenate(
                [[_oracles.cusum_nonprivate(bins, ys, 4, s, t)
                  for s in range(1, t)] for t in range(2, T + 1)])
            mismatches += not _stats_match(engine, oracle)
            params = pc.ThresholdParams(gamma=0.05, sigma=0.5, c_lip=0.0,
                                        c_min=1.0, h=0.25, d=1)
            res = pc.detect_nonprivate(bins, ys, 4, params)
            orc = _oracles.detect(
                lambda s, t: _oracles.cusum_nonprivate(bins, ys, 4, s, t),
                lambda s, t: pc.threshold_nonprivate(s, t, params), T)
            got = (res.alarms[0].t, res.alarms[0].s) if res.alarms else None
            alarm_mismatch += got != orc
    elapsed = time.time() - t0
    ok = mismatches == 0 and alarm_mismatch == 0 and elapsed < 60.0
    _report(2, "oracle equivalence",
            ok, f"stat mismatches={mismatches}, alarm mismatches={alarm_mismatch}, "
                f"{elapsed:.1f}s over 20 streams, t<=200")


# ---------------------------------------------------------------------------
# 3. False-alarm control.
# ---------------------------------------------------------------------------

def test_acceptance_3_false_alarm_control():
    t0 = time.time()
    gamma, n_reps = 0.05, 500
    sc = pc.UnivariateScenario(pre_mean=0.0, post_mean=0.0, change_at=None,
                               sigma=0.5, horizon=500)
    det = pc.DetectorConfig(kind="univariate",
                            params=pc.ThresholdParams(gamma=gamma, sigma=0.5,
                                                      alpha=1.0))
    m = pc.summarize(pc.run_replications(sc, det, n_reps, master_seed=303), gamma)
    limit = gamma + 3 * math.sqrt(gamma * (1 - gamma) / n_reps)
    elapsed = time.time() - t0
    _report(3, "false-alarm control",
            m.false_alarm_rate <= limit and elapsed < 300.0,
            f"empirical rate={m.false_alarm_rate:.4f} <= {limit:.3f} "
            f"(horizon 500, {n_reps} reps, {elapsed:.1f}s)")


# ---------------------------------------------------------------------------
# 4 and 5. Delay scaling at the configured desk scale.
# ---------------------------------------------------------------------------

def _delay_sweep(values, make_scenario, make_params, n_reps=300, horizon=5000):
    # horizon 5000 leaves room for delays an order beyond the schedule's
    # nominal bound at the weakest sweep point
    rates, medians = [], []
    for i, v in enumerate(values):
        sc = make_scenario(v)
        det = pc.DetectorConfig(kind="univariate", params=make_params(v))
        outs = pc.run_replications(sc, det, n_reps, master_seed=404 + i)
        m = pc.summarize(outs, 0.05)
        rates.append(m.detection_rate)
        medians.append(m.delay_median)
    return rates, medians


def test_acceptance_4_delay_scaling_alpha():
    t0 = time.time()
    alphas = (0.25, 0.5, 1.0)
    rates, medians = _delay_sweep(
        alphas,
        lambda a: pc.UnivariateScenario(pre_mean=0.0, post_mean=1.0,
                                        change_at=200, sigma=0.05, horizon=5000),
        lambda a: pc.ThresholdParams(gamma=0.05, sigma=0.05, alpha=a))
    slope = math.nan
    if all(isinstance(m, float) and m > 0 for m in medians):
        slope = pc.fit_scaling(alphas, medians).slope
    ok = all(r >= 0.95 for r in rates) and -2.5 <= slope <= -1.5
    elapsed = time.time() - t0
    _report(4, "delay scaling in alpha", ok,
            f"detection rates={[round(r, 3) for r in rates]} (need >= 0.95 each), "
            f"median delays={medians}, log-log slope={slope} "
            f"(need within [-2.5, -1.5]); kappa=1, change at 200, {elapsed:.0f}s")


def test_acceptance_5_delay_scaling_kappa():
    t0 = time.time()
    kappas = (0.5, 1.0, 2.0)
    rates, medians = _delay_sweep(
        kappas,
        lambda k: pc.UnivariateScenario(pre_mean=0.0, post_mean=k,
                                        change_at=200, sigma=0.05, horizon=5000),
        lambda k: pc.ThresholdParams(gamma=0.05, sigma=0.05, alpha=1.0))
    slope = math.nan
    if all(isinstance(m, float) and m > 0 for m in medians):
        slope = pc.fit_scaling(kappas, medians).slope
    ok = all(r >= 0.95 for r in rates) and -2.5 <= slope <= -1.5
    elapsed = time.time() - t0
    _report(5, "delay scaling in kappa", ok,
            f"detection rates={[round(r, 3) for r in rates]} (need >= 0.95 each), "
            f"median delays={medians}, log-log slope={slope} "
            f"(need within [-2.5, -1.5]); alpha=1, change at 200, {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 6. Cost of privacy.
# ---------------------------------------------------------------------------

# Noise multiplier for the private schedule, calibrated on 30 null runs of
# this exact scenario via the calibrate-constants procedure (1 - gamma
# quantile of the needed multiplier was 1.48, max 1.96; 2.0 adds margin).
# The run below re-verifies false-alarm control on fresh seeds.
CRIT6_NOISE_SCALE = 2.0


def test_acceptance_6_cost_of_privacy():
    t0 = time.time()
    gamma, alpha = 0.05, 0.5
    m0, sigma, h = 2.0, 0.25, 0.25
    m_trunc = pc.m1_truncation_floor(m0, sigma, h)
    delta, horizon = 400_000, 560_000
    sc = pc.RegressionScenario(lows=(0.0,), highs=(0.5,), h=h,
                               pre_fn=pc.Constant(0.0), post_fn=pc.Constant(2.0),
                               kappa=2.0, change_at=delta, sigma=sigma,
                               horizon=horizon)
    params = pc.ThresholdParams(gamma=gamma, sigma=sigma, alpha=alpha,
                                truncation_m=m_trunc, m0=m0, c_lip=0.0,
                                c_min=sc.c_min_exact, h=h, d=1)
    snr = pc.snr_check("private", sc.kappa, delta, params, c_snr=1.0)
    n_reps = 25
    priv = pc.summarize(pc.run_replications(
        sc, pc.DetectorConfig(kind="private", params=params, scan="dyadic",
                              noise_scale=CRIT6_NOISE_SCALE),
        n_reps, master_seed=606), gamma)
    nonpriv = pc.summarize(pc.run_replications(
        sc, pc.DetectorConfig(kind="nonprivate", params=params, scan="dyadic"),
        n_reps, master_seed=606), gamma)
    ok = (snr.ratio >= 20.0
          and priv.detection_rate >= 0.9 and nonpriv.detection_rate >= 0.9
          and priv.false_alarm_rate <= gamma and nonpriv.false_alarm_rate <= gamma
          and priv.delay_median > nonpriv.delay_median)
    elapsed = time.time() - t0
    _report(6, "cost of privacy", ok,
            f"snr ratio={snr.ratio:.1f} (>=20), "
            f"private: det={priv.detection_rate:.2f} fa={priv.false_alarm_rate:.3f} "
            f"median delay={priv.delay_median:.0f}; "
            f"nonprivate: det={nonpriv.detection_rate:.2f} "
            f"fa={nonpriv.false_alarm_rate:.3f} median delay={nonpriv.delay_median:.0f}; "
            f"noise_scale={CRIT6_NOISE_SCALE}, dyadic scan, {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 7. Population CUSUM at the change point.
# ---------------------------------------------------------------------------

def test_acceptance_7_population_cusum():
    h = 1.0 / 32
    part = pc.build_partition([0.0], [1.0], h)
    nb = part.n_bins
    f_pre = pc.Constant(0.0)
    f_post = pc.RadialBump(height=1.0, center=(0.5,), radius=1.0)

    def dense_xs(n):
        return part.centers[np.arange(n) % nb]

    # non-private statistic at the stated scale (64, 128)
    delta, t = 64, 128
    xs = dense_xs(t)
    ys = np.where(np.arange(t) < delta, f_pre(xs), f_post(xs))
    state = pc.PrefixState(nb)
    for i in range(t):
        pc.push_raw(state, xs[i], ys[i], part)
    d_np = pc.cusum_nonprivate(state, delta, t, part)
    target = math.sqrt(delta * (t - delta) / t)
    envelope = 2 * math.sqrt(delta * (t - delta) / t) * 1.0 * math.sqrt(1.0) * h
    ok_np = abs(d_np - target) <= envelope

    # private statistic at the smallest dense scale clearing the occupancy
    # gate (the gate log(65)/64 exceeds the per-bin mass 1/32 at length 64,
    # so at (64, 128) the gated estimator is identically zero)
    delta2, t2 = 256, 512
    xs2 = dense_xs(t2)
    ys2 = np.where(np.arange(t2) < delta2, f_pre(xs2), f_post(xs2))
    w, z = pc.privatize_regression_batch(xs2, ys2, part,
                                         pc.PrivacyParams(1.0, 2.0),
                                         pc.zero_noise_source())
    st2 = pc.PrefixState(nb)
    for i in range(t2):
        st2.push(w[i], z[i])
    d_pr = pc.cusum_private(st2, delta2, t2, part)
    target2 = math.sqrt(delta2 * (t2 - delta2) / t2)
    envelope2 = 2 * math.sqrt(delta2 * (t2 - delta2) / t2) * 1.0 * h
    ok_pr = abs(d_pr - target2) <= envelope2

    gate64 = math.log(delta + 1.0) / delta
    zero_at_stated = pc.cusum_private(st2, delta, t, part)
    _report(7, "population CUSUM", ok_np and ok_pr and zero_at_stated == 0.0,
            f"nonprivate at (64,128): {d_np:.4f} vs {target:.4f} +- {envelope:.4f}; "
            f"private at (256,512): {d_pr:.4f} vs {target2:.4f} +- {envelope2:.4f}; "
            f"private at (64,128) is {zero_at_stated} since gate {gate64:.4f} > "
            f"bin mass {1 / nb:.4f}")


# ---------------------------------------------------------------------------
# 8. Concentration bounds against empirical tails.
# ---------------------------------------------------------------------------

def test_acceptance_8_concentration_bounds():
    t0 = time.time()
    trials = 1_000_000
    rng = pc.rng_for(808, 0)
    # one (trials, 200) tensor serves all three n values per trial
    marks = (10, 50, 200)
    exceed = {(n, x): 0 for n in marks for x in (0.25, 0.5, 1.0)}
    chunk = 20_000
    done = 0
    while done < trials:
        b = min(chunk, trials - done)
        draws = pc.sample_laplace(rng, 1.0, size=(b, 200))
        csum = np.cumsum(draws, axis=1)
        for n in marks:
            means = csum[:, n - 1] / n
            for x in (0.25, 0.5, 1.0):
                exceed[(n, x)] += int((means >= x).sum())
        done += b
    lap_viol = []
    for (n, x), cnt in sorted(exceed.items()):
        emp = cnt / trials
        bound = pc.laplace_mean_tail_bound(n, x)
        if emp > bound:
            lap_viol.append(f"(n={n},x={x}): {emp:.2e} > {bound:.2e}")
    # Bernoulli-normalized sum bound at (50, 0.5, 0.5)
    n, p, x = 50, 0.5, 0.5
    cnt = 0
    done = 0
    while done < trials:
        b = min(100_000, trials - done)
        B = rng.random((b, n)) < p
        eps = rng.normal(0.0, 1.0, size=(b, n))
        cnt += int((np.abs((eps * B).sum(axis=1)) >= x * B.sum(axis=1)).sum())
        done += b
    emp_bern = cnt / trials
    bern_bound = pc.bernoulli_sum_tail_bound(n, p, x)
    bern_ok = emp_bern <= bern_bound
    elapsed = time.time() - t0
    ok = not lap_viol and bern_ok and elapsed < 120.0
    _report(8, "concentration bounds", ok,
            f"bernoulli (50,.5,.5): {emp_bern:.2e} <= {bern_bound:.2e} "
            f"{'OK' if bern_ok else 'VIOLATED'}; laplace violations: "
            f"{lap_viol if lap_viol else 'none'}; {elapsed:.0f}s")
