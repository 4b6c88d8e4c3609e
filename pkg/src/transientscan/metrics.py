"""Monte Carlo estimation of every monitored-run performance quantity.

Estimated quantities, each with a standard error:

  * run length to a false alarm on a pure-nominal stream (its mean is the
    calibration target ``eta``),
  * the per-onset conditional detection probability
    ``P(tau = onset | tau >= onset)`` and its sum over a schedule (the
    probability-maximizing objective; the sum of conditional probabilities
    may exceed 1 and is reported raw),
  * the worst-case-over-history variant of that sum, which for memoryless
    rules equals the plain sum by construction,
  * the optimality ceiling ``s * E0[l_tau] / E0[tau]`` that no rule with
    the same run-length budget can beat, usable as an oracle against any
    plug-in stopping rule,
  * detect-first / detect-any probabilities and missed-onset counts from
    monitored runs.

Reproducibility contract: every trial draws from its own generator keyed by
``(seed, stream tag, trial index)``, and aggregation reduces per-trial
records in trial order.  Results are therefore bit-identical for any worker
count; workers only split the fixed chunking of the trial range.

Standard errors: exact binomial for probabilities, sample standard
deviation for means, delta method for the bound ratio.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Literal, NamedTuple

import numpy as np
from scipy import stats as scipy_stats

from .detector import ShewhartDetector, StoppingRule, calibrate
from .distributions import DistributionPair
from .sequence_model import ChangeSchedule, generate_sequence

Mode = Literal["single_shot", "restart"]

#: stream tags keying independent substreams under one master seed
STREAM_RUN_LENGTH = 0
STREAM_MONITOR = 1
STREAM_ONSET = 2
STREAM_HISTORY = 3
STREAM_SCHEDULE = 4

#: dispatch chunk count: chunk boundaries are a fixed function of the trial
#: count only, so outputs can never depend on the worker count
_N_CHUNKS = 64

_CENSORED = -1


class DegenerateEstimateError(RuntimeError):
    """Too few surviving trials to estimate a conditional probability."""


class Estimate(NamedTuple):
    value: float
    std_error: float


class ArlEstimate(NamedTuple):
    mean: float
    std_error: float
    censored: int


@dataclass(frozen=True)
class RunLengthSample:
    """Uncensored stopping times and the ratio value at each stop, under F0.

    Initial stops (time 0, no sample consumed) carry a ratio value of 0, so
    expectations pick up the ``(1 - initial_stop_prob)`` factor they should.
    """

    taus: np.ndarray
    lrs: np.ndarray
    censored: int

    @property
    def n(self) -> int:
        return int(self.taus.size)


@dataclass(frozen=True)
class PollakEstimate:
    """Sum over onsets of the conditional detection probability.

    ``per_onset`` holds the per-onset estimates, ``survivors`` how many
    trials reached each onset.  Onsets with fewer than the configured
    minimum of survivors are excluded from the sum and listed in
    ``degenerate_onsets`` (their conditional probability is not estimable
    from the run).
    """

    value: float
    std_error: float
    per_onset: tuple[Estimate, ...]
    survivors: tuple[int, ...]
    degenerate_onsets: tuple[int, ...]


@dataclass(frozen=True)
class TrialOutcome:
    """One monitored run.

    ``tau`` is the run's stopping time: the first alarm in single-shot
    mode, the first alarm coinciding with an onset in restart mode, 0 for
    an initial stop, None when the horizon ran out first.  ``alarms``
    classifies every alarm raised before (and including) the stop; an alarm
    inside a transient window but not exactly at its onset is a false
    alarm.  ``missed_onsets_before_detection`` counts onsets passed with no
    alarm at them before the first detection (or before the run ended).
    """

    tau: int | None
    alarms: tuple[tuple[int, str], ...]
    first_detection_time: int | None
    missed_onsets_before_detection: int


@dataclass(frozen=True)
class CriteriaReport:
    """All criteria estimates for one detector on one schedule."""

    pollak_estimate: Estimate
    lorden_estimate: Estimate
    arl_to_false_alarm: Estimate
    optimality_ceiling: Estimate
    detect_first_prob: Estimate
    detect_any_prob: Estimate
    avg_missed: Estimate
    n_trials: int
    mode: Mode
    arl_censored: int
    degenerate_onsets: tuple[int, ...]

    def __post_init__(self):
        for name in ("detect_first_prob", "detect_any_prob"):
            est = getattr(self, name)
            if not 0.0 <= est.value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {est.value}")
        for name in (
            "pollak_estimate",
            "lorden_estimate",
            "arl_to_false_alarm",
            "optimality_ceiling",
            "detect_first_prob",
            "detect_any_prob",
            "avg_missed",
        ):
            if getattr(self, name).std_error < 0.0:
                raise ValueError(f"{name} has a negative standard error")


def trial_rng(seed, stream: int, trial: int) -> np.random.Generator:
    """Generator for one trial, keyed by (seed, stream, trial index)."""
    entropy = seed.entropy if isinstance(seed, np.random.SeedSequence) else seed
    base_key = seed.spawn_key if isinstance(seed, np.random.SeedSequence) else ()
    ss = np.random.SeedSequence(entropy, spawn_key=(*base_key, stream, trial))
    return np.random.default_rng(ss)


def _seed_key(seed) -> tuple:
    """Picklable (entropy, spawn_key) form of a seed for worker dispatch."""
    if isinstance(seed, np.random.SeedSequence):
        return (seed.entropy, tuple(seed.spawn_key))
    return (seed, ())


def _rng_from_key(key: tuple, stream: int, trial: int) -> np.random.Generator:
    entropy, spawn_key = key
    ss = np.random.SeedSequence(entropy, spawn_key=(*spawn_key, stream, trial))
    return np.random.default_rng(ss)


def _chunk_ranges(n_trials: int) -> list[tuple[int, int]]:
    chunk = max(1, -(-n_trials // _N_CHUNKS))
    return [(lo, min(lo + chunk, n_trials)) for lo in range(0, n_trials, chunk)]


def _map_chunks(fn, n_trials: int, n_workers: int) -> list:
    """Run fn(lo, hi) over the fixed chunking, in chunk order."""
    ranges = _chunk_ranges(n_trials)
    if n_workers <= 1:
        return [fn(lo, hi) for lo, hi in ranges]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(_call_range, [(fn, lo, hi) for lo, hi in ranges]))


def _call_range(job):
    fn, lo, hi = job
    return fn(lo, hi)


def _binomial_se(p: float, n: int) -> float:
    return math.sqrt(p * (1.0 - p) / n) if n > 0 else 0.0


def _mean_se(values: np.ndarray) -> Estimate:
    n = values.size
    if n == 0:
        return Estimate(math.nan, math.nan)
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Estimate(mean, se)


# ---------------------------------------------------------------------------
# Pure-nominal run-length simulation (false-alarm side)


def _f0_chunk(
    lo: int,
    hi: int,
    *,
    rule: StoppingRule,
    pair: DistributionPair,
    seed_key: tuple,
    max_horizon: int,
    first_block: int,
):
    n = hi - lo
    taus = np.empty(n, dtype=np.int64)
    lrs = np.empty(n, dtype=float)
    pi0 = getattr(rule, "initial_stop_prob", 0.0)
    for k in range(n):
        rng = _rng_from_key(seed_key, STREAM_RUN_LENGTH, lo + k)
        if pi0 > 0.0 and rng.random() < pi0:
            taus[k] = 0
            lrs[k] = 0.0
            continue
        t0 = 0
        block = first_block
        taus[k] = _CENSORED
        lrs[k] = math.nan
        while t0 < max_horizon:
            nb = min(block, max_horizon - t0)
            x = pair.sample("nominal", rng, nb)
            times = np.arange(t0 + 1, t0 + nb + 1, dtype=np.int64)
            hits = np.nonzero(rule.alarm_mask(times, x, rng))[0]
            if hits.size:
                j = int(hits[0])
                taus[k] = t0 + j + 1
                lrs[k] = float(np.exp(pair.log_likelihood_ratio(x[j])))
                break
            t0 += nb
            block = min(block * 4, 1 << 16)
    return taus, lrs


def simulate_run_lengths(
    rule: StoppingRule,
    pair: DistributionPair,
    n_trials: int,
    max_horizon: int,
    seed,
    *,
    n_workers: int = 1,
) -> RunLengthSample:
    """Run the rule on pure-F0 streams; collect stopping times and the
    likelihood ratio of the stopping sample.  Runs that reach the horizon
    without alarming are censored: counted, excluded from the arrays."""
    if n_trials < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials}")
    if max_horizon < 1:
        raise ValueError(f"max_horizon must be >= 1, got {max_horizon}")
    eta = getattr(rule, "eta", None)
    first_block = 256 if eta is None else max(256, int(1.25 * eta))
    fn = partial(
        _f0_chunk,
        rule=rule,
        pair=pair,
        seed_key=_seed_key(seed),
        max_horizon=max_horizon,
        first_block=first_block,
    )
    parts = _map_chunks(fn, n_trials, n_workers)
    taus = np.concatenate([p[0] for p in parts])
    lrs = np.concatenate([p[1] for p in parts])
    keep = taus != _CENSORED
    return RunLengthSample(
        taus=taus[keep].astype(float), lrs=lrs[keep], censored=int((~keep).sum())
    )


def estimate_arl(
    detector: StoppingRule,
    pair: DistributionPair,
    n_trials: int,
    max_horizon: int,
    seed,
    *,
    n_workers: int = 1,
    sample: RunLengthSample | None = None,
) -> ArlEstimate:
    """Mean run length to a false alarm over pure-F0 trials.

    For a calibrated detector the horizon must be at least 10x eta, keeping
    the censoring probability (and hence the exclusion bias) below ~e^-10.
    Pass a precomputed ``sample`` to reuse one simulation for several
    estimators.
    """
    eta = getattr(detector, "eta", None)
    if eta is not None and max_horizon < 10 * eta:
        raise ValueError(
            f"max_horizon {max_horizon} is below 10 * eta = {10 * eta:g}; "
            "censoring would bias the run-length mean"
        )
    if sample is None:
        sample = simulate_run_lengths(
            detector, pair, n_trials, max_horizon, seed, n_workers=n_workers
        )
    mean, se = _mean_se(sample.taus)
    return ArlEstimate(mean, se, sample.censored)


def estimate_optimality_ceiling(
    stopping_rule: StoppingRule,
    pair: DistributionPair,
    s: int,
    n_trials: int,
    max_horizon: int,
    seed,
    *,
    n_workers: int = 1,
    sample: RunLengthSample | None = None,
) -> Estimate:
    """The optimality ceiling s * E0[l_tau] / E0[tau] for any plug-in rule.

    Both expectations are estimated under pure F0 from the same runs;
    censored runs are excluded from both means.  The standard error of the
    ratio comes from the delta method with the empirical covariance of
    (l_tau, tau).
    """
    if s < 0:
        raise ValueError(f"s must be nonnegative, got {s}")
    if sample is None:
        sample = simulate_run_lengths(
            stopping_rule, pair, n_trials, max_horizon, seed, n_workers=n_workers
        )
    n = sample.n
    if n == 0:
        raise DegenerateEstimateError("all runs were censored; cannot form the bound")
    mean_lr = float(sample.lrs.mean())
    mean_tau = float(sample.taus.mean())
    value = s * mean_lr / mean_tau
    if n < 2 or value == 0.0:
        return Estimate(value, 0.0)
    var_lr = float(sample.lrs.var(ddof=1))
    var_tau = float(sample.taus.var(ddof=1))
    cov = float(np.cov(sample.lrs, sample.taus, ddof=1)[0, 1])
    rel_var = (
        var_lr / mean_lr**2 + var_tau / mean_tau**2 - 2.0 * cov / (mean_lr * mean_tau)
    ) / n
    se = abs(value) * math.sqrt(max(rel_var, 0.0))
    return Estimate(value, se)


def geometric_gof_pvalue(taus: np.ndarray, p: float, *, min_expected: float = 5.0) -> float:
    """Chi-square goodness of fit of positive run lengths against a
    geometric law with success probability p (known, not fitted).

    Bins 1, 2, ... are merged from the right into a single tail bin so
    every expected count is at least ``min_expected``.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must be in (0, 1], got {p}")
    taus = np.asarray(taus)
    if taus.size == 0 or (taus < 1).any():
        raise ValueError("taus must be a nonempty array of positive run lengths")
    if p == 1.0:
        return 1.0 if (taus == 1).all() else 0.0
    n = taus.size
    k_max = 1
    while n * p * (1.0 - p) ** k_max >= min_expected:
        k_max += 1
    # bins: {1}, {2}, ..., {k_max}, then the tail {k_max+1, ...}
    observed = np.bincount(np.minimum(taus.astype(np.int64), k_max + 1), minlength=k_max + 2)[1:]
    expected = np.array(
        [n * p * (1.0 - p) ** (k - 1) for k in range(1, k_max + 1)]
        + [n * (1.0 - p) ** k_max]
    )
    if expected[-1] < min_expected:
        observed = np.concatenate([observed[:-2], [observed[-2] + observed[-1]]])
        expected = np.concatenate([expected[:-2], [expected[-2] + expected[-1]]])
    stat = float(((observed - expected) ** 2 / expected).sum())
    df = len(expected) - 1
    return float(scipy_stats.chi2.sf(stat, df))


# ---------------------------------------------------------------------------
# Monitored runs over schedules


def _monitor_arrays(
    rule: StoppingRule,
    pair: DistributionPair,
    schedule: ChangeSchedule,
    mode: Mode,
    rng: np.random.Generator,
):
    """One monitored run; returns (tau, first_det, n_false, missed, survived, hit).

    tau / first_det use -1 for "never".  ``survived[i]`` means the run was
    still being monitored with no prior detection when onset i arrived;
    ``hit[i]`` means the stop landed exactly on onset i.
    """
    onsets = np.asarray(schedule.onsets, dtype=np.int64)
    s = onsets.size
    pi0 = getattr(rule, "initial_stop_prob", 0.0)
    if pi0 > 0.0 and rng.random() < pi0:
        return 0, -1, 0, 0, np.zeros(s, bool), np.zeros(s, bool)
    x = generate_sequence(pair, schedule, rng)
    times = np.arange(1, schedule.horizon + 1, dtype=np.int64)
    mask = rule.alarm_mask(times, x, rng)
    alarm_times = times[mask]
    onset_set = np.isin(alarm_times, onsets)
    if mode == "single_shot":
        if alarm_times.size:
            tau = int(alarm_times[0])
            detected = bool(onset_set[0])
        else:
            tau = _CENSORED
            detected = False
        first_det = tau if detected else _CENSORED
        end = tau if tau != _CENSORED else schedule.horizon + 1
        survived = np.ones(s, bool) if tau == _CENSORED else onsets <= tau
        hit = onsets == tau
        n_false = int(tau != _CENSORED and not detected)
        missed = int((onsets < end).sum())
        return tau, first_det, n_false, missed, survived, hit
    if mode != "restart":
        raise ValueError(f"unknown mode {mode!r}")
    detections = alarm_times[onset_set]
    if detections.size:
        first_det = int(detections[0])
        n_false = int((~onset_set[alarm_times <= first_det]).sum())
        end = first_det
    else:
        first_det = _CENSORED
        n_false = int((~onset_set).sum())
        end = schedule.horizon + 1
    survived = onsets <= end
    hit = onsets == first_det
    alarmed_at_onset = mask[onsets - 1] if s else np.zeros(0, bool)
    missed = int(((onsets < end) & ~alarmed_at_onset).sum())
    tau = first_det
    return tau, first_det, n_false, missed, survived, hit


def _monitor_chunk(
    lo: int,
    hi: int,
    *,
    rule: StoppingRule,
    pair: DistributionPair,
    schedule: ChangeSchedule,
    mode: Mode,
    seed_key: tuple,
):
    n = hi - lo
    s = schedule.s
    taus = np.empty(n, dtype=np.int64)
    first_det = np.empty(n, dtype=np.int64)
    n_false = np.empty(n, dtype=np.int64)
    missed = np.empty(n, dtype=np.int64)
    survived = np.empty((n, s), dtype=bool)
    hit = np.empty((n, s), dtype=bool)
    for k in range(n):
        rng = _rng_from_key(seed_key, STREAM_MONITOR, lo + k)
        taus[k], first_det[k], n_false[k], missed[k], survived[k], hit[k] = _monitor_arrays(
            rule, pair, schedule, mode, rng
        )
    return taus, first_det, n_false, missed, survived, hit


def _monitor_trials(
    rule: StoppingRule,
    pair: DistributionPair,
    schedule: ChangeSchedule,
    mode: Mode,
    n_trials: int,
    seed,
    n_workers: int = 1,
):
    fn = partial(
        _monitor_chunk,
        rule=rule,
        pair=pair,
        schedule=schedule,
        mode=mode,
        seed_key=_seed_key(seed),
    )
    parts = _map_chunks(fn, n_trials, n_workers)
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(6))


def monitor_sequence(
    rule: StoppingRule,
    x: np.ndarray,
    schedule: ChangeSchedule,
    mode: Mode = "single_shot",
    rng: np.random.Generator | None = None,
) -> TrialOutcome:
    """Score one concrete realization against its ground-truth schedule.

    ``single_shot`` stops at the first alarm of any kind.  ``restart``
    logs a false alarm and keeps monitoring from the next sample (the rule
    is per-sample, so nothing carries over), terminating at the first alarm
    that lands exactly on an onset, or at the end of the data.
    """
    if mode not in ("single_shot", "restart"):
        raise ValueError(f"unknown mode {mode!r}")
    x = np.asarray(x, dtype=float)
    if x.size != schedule.horizon:
        raise ValueError(
            f"sequence length {x.size} does not match schedule horizon {schedule.horizon}"
        )
    if rng is None:
        rng = np.random.default_rng()
    onsets = set(schedule.onsets)
    times = np.arange(1, schedule.horizon + 1, dtype=np.int64)
    mask = rule.alarm_mask(times, x, rng)
    alarm_times = [int(t) for t in times[mask]]
    alarms: list[tuple[int, str]] = []
    first_detection = None
    tau: int | None = None
    for t in alarm_times:
        kind = "true_onset" if t in onsets else "false_alarm"
        alarms.append((t, kind))
        if mode == "single_shot":
            tau = t
            if kind == "true_onset":
                first_detection = t
            break
        if kind == "true_onset":
            first_detection = t
            tau = t
            break
    end = first_detection if first_detection is not None else (
        tau if tau is not None else schedule.horizon + 1
    )
    if mode == "restart":
        alarmed = set(alarm_times)
        missed = sum(1 for g in schedule.onsets if g < end and g not in alarmed)
    else:
        missed = sum(1 for g in schedule.onsets if g < end)
    return TrialOutcome(
        tau=tau,
        alarms=tuple(alarms),
        first_detection_time=first_detection,
        missed_onsets_before_detection=missed,
    )


def run_monitoring(
    detector: StoppingRule,
    pair: DistributionPair,
    schedule: ChangeSchedule,
    mode: Mode,
    seed,
    *,
    trial: int = 0,
) -> TrialOutcome:
    """Generate one stream for the schedule and score a monitored run on it."""
    rng = trial_rng(seed, STREAM_MONITOR, trial)
    pi0 = getattr(detector, "initial_stop_prob", 0.0)
    if pi0 > 0.0 and rng.random() < pi0:
        return TrialOutcome(
            tau=0, alarms=(), first_detection_time=None, missed_onsets_before_detection=0
        )
    x = generate_sequence(pair, schedule, rng)
    return monitor_sequence(detector, x, schedule, mode, rng)


# ---------------------------------------------------------------------------
# Criteria estimators


def _pollak_from_counts(
    hits: np.ndarray,
    survivors: np.ndarray,
    onsets: tuple[int, ...],
    min_survivors: int,
    on_degenerate: str,
) -> PollakEstimate:
    per_onset = []
    degenerate = []
    total = 0.0
    var = 0.0
    for i, onset in enumerate(onsets):
        m = int(survivors[i])
        if m < min_survivors:
            degenerate.append(onset)
            per_onset.append(Estimate(math.nan, math.nan))
            continue
        p = float(hits[i]) / m
        se = _binomial_se(p, m)
        per_onset.append(Estimate(p, se))
        total += p
        var += se * se
    if degenerate and on_degenerate == "raise":
        raise DegenerateEstimateError(
            f"onsets {degenerate} were reached by fewer than {min_survivors} trials; "
            "their conditional detection probability is not estimable "
            "(pass on_degenerate='exclude' to drop them from the sum)"
        )
    return PollakEstimate(
        value=total,
        std_error=math.sqrt(var),
        per_onset=tuple(per_onset),
        survivors=tuple(int(v) for v in survivors),
        degenerate_onsets=tuple(degenerate),
    )


def estimate_pollak(
    detector: StoppingRule,
    pair: DistributionPair,
    schedule: ChangeSchedule,
    n_trials: int,
    seed,
    *,
    mode: Mode = "single_shot",
    min_survivors: int = 100,
    on_degenerate: str = "raise",
    n_workers: int = 1,
) -> PollakEstimate:
    """Sum over onsets of P(stop exactly at the onset | still running there).

    Direct conditioning: each onset's term is the detected fraction among
    the trials that reached it.  For memoryless rules consecutive terms are
    uncorrelated (the conditional law after surviving an onset does not
    depend on how), so the summed variance is the sum of the per-term
    binomial variances.

    The worst case over schedules is not searched: for a memoryless rule
    on unit-duration changes every term is schedule-invariant, so any
    schedule attains it (property-tested, not assumed silently).
    """
    if schedule.s == 0:
        return PollakEstimate(0.0, 0.0, (), (), ())
    _, _, _, _, survived, hit = _monitor_trials(
        detector, pair, schedule, mode, n_trials, seed, n_workers
    )
    return _pollak_from_counts(
        hit.sum(axis=0), survived.sum(axis=0), schedule.onsets, min_survivors, on_degenerate
    )


def estimate_conditional_detection(
    detector: StoppingRule,
    pair: DistributionPair,
    schedule: ChangeSchedule,
    index: int,
    n_trials: int,
    seed,
    *,
    method: Literal["direct", "onset_sample"] = "direct",
    min_survivors: int = 100,
    n_workers: int = 1,
) -> Estimate:
    """P(stop exactly at onset #index | the run reaches it); index is 1-based.

    ``direct`` simulates single-shot runs and conditions on survival.
    ``onset_sample`` exploits memorylessness (valid for memoryless rules
    only, any positive duration): survival carries no information, so the
    conditional probability is the alarm probability of one transient
    sample; it draws that sample directly.
    """
    if not 1 <= index <= schedule.s:
        raise ValueError(f"index must be in 1..{schedule.s}, got {index}")
    onset = schedule.onsets[index - 1]
    if method == "onset_sample":
        if not getattr(detector, "memoryless", False):
            raise ValueError("onset_sample shortcut requires a memoryless rule")
        rng = trial_rng(seed, STREAM_ONSET, index)
        x = pair.sample("alternative", rng, n_trials)
        times = np.full(n_trials, onset, dtype=np.int64)
        p = float(detector.alarm_mask(times, x, rng).mean())
        return Estimate(p, _binomial_se(p, n_trials))
    if method != "direct":
        raise ValueError(f"unknown method {method!r}")
    est = estimate_pollak(
        detector,
        pair,
        schedule,
        n_trials,
        seed,
        mode="single_shot",
        min_survivors=min_survivors,
        on_degenerate="raise",
        n_workers=n_workers,
    )
    return est.per_onset[index - 1]


def estimate_lorden(
    detector: StoppingRule,
    pair: DistributionPair,
    schedule: ChangeSchedule,
    n_trials: int,
    seed,
    *,
    n_history_bins: int = 4,
    min_survivors: int = 100,
    on_degenerate: str = "raise",
    n_workers: int = 1,
) -> PollakEstimate:
    """The history-worst-case variant of the conditional-detection sum.

    For a memoryless rule the conditional probability is constant over
    pre-onset histories, so the worst case equals the plain conditional and
    this returns exactly :func:`estimate_pollak`'s result, by construction.

    For non-memoryless rules the essential infimum over histories is not
    directly simulable; it is approximated by the minimum over
    ``n_history_bins`` quantile bins of the last pre-onset sample.  That is
    a labeled approximation, not an exact worst case.
    """
    if getattr(detector, "memoryless", False):
        return estimate_pollak(
            detector,
            pair,
            schedule,
            n_trials,
            seed,
            mode="single_shot",
            min_survivors=min_survivors,
            on_degenerate=on_degenerate,
            n_workers=n_workers,
        )
    if schedule.s == 0:
        return PollakEstimate(0.0, 0.0, (), (), ())
    per_onset = []
    degenerate = []
    total = 0.0
    var = 0.0
    for index in range(1, schedule.s + 1):
        feats, survived, hit = _history_records(
            detector, pair, schedule, index, n_trials, seed
        )
        if int(survived.sum()) < max(min_survivors, n_history_bins * 2):
            degenerate.append(schedule.onsets[index - 1])
            per_onset.append(Estimate(math.nan, math.nan))
            continue
        f = feats[survived]
        h = hit[survived]
        edges = np.quantile(f, np.linspace(0, 1, n_history_bins + 1)[1:-1])
        bins = np.searchsorted(edges, f)
        worst, worst_se = math.inf, 0.0
        for b in range(n_history_bins):
            sel = bins == b
            m = int(sel.sum())
            if m == 0:
                continue
            p = float(h[sel].mean())
            if p < worst:
                worst, worst_se = p, _binomial_se(p, m)
        per_onset.append(Estimate(worst, worst_se))
        total += worst
        var += worst_se * worst_se
    if degenerate and on_degenerate == "raise":
        raise DegenerateEstimateError(f"onsets {degenerate} have too few survivors")
    return PollakEstimate(
        value=total,
        std_error=math.sqrt(var),
        per_onset=tuple(per_onset),
        survivors=(),
        degenerate_onsets=tuple(degenerate),
    )


def _history_records(detector, pair, schedule, index, n_trials, seed):
    """Per-trial (pre-onset feature, survived, hit) for one onset."""
    onset = schedule.onsets[index - 1]
    if onset < 2:
        raise ValueError("history conditioning needs at least one pre-onset sample")
    feats = np.empty(n_trials, dtype=float)
    survived = np.empty(n_trials, dtype=bool)
    hit = np.empty(n_trials, dtype=bool)
    for k in range(n_trials):
        rng = trial_rng(seed, STREAM_HISTORY, k)
        x = generate_sequence(pair, schedule, rng)
        times = np.arange(1, schedule.horizon + 1, dtype=np.int64)
        mask = detector.alarm_mask(times, x, rng)
        alarm_idx = np.nonzero(mask)[0]
        tau = int(alarm_idx[0]) + 1 if alarm_idx.size else _CENSORED
        feats[k] = x[onset - 2]
        survived[k] = tau == _CENSORED or tau >= onset
        hit[k] = tau == onset
    return feats, survived, hit


def history_independence_pvalue(
    detector: StoppingRule,
    pair: DistributionPair,
    schedule: ChangeSchedule,
    index: int,
    n_trials: int,
    seed,
    *,
    n_bins: int = 4,
) -> float:
    """Chi-square p-value for dependence of detection-at-onset on the last
    pre-onset sample, among trials that reached the onset.

    For a memoryless rule detection is independent of any pre-onset
    feature, so small p-values indicate a broken memorylessness contract.
    """
    feats, survived, hit = _history_records(detector, pair, schedule, index, n_trials, seed)
    f = feats[survived]
    h = hit[survived]
    edges = np.quantile(f, np.linspace(0, 1, n_bins + 1)[1:-1])
    bins = np.searchsorted(edges, f)
    table = np.zeros((2, n_bins), dtype=np.int64)
    for b in range(n_bins):
        sel = bins == b
        table[0, b] = int(h[sel].sum())
        table[1, b] = int((~h[sel]).sum())
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2 or table.sum(axis=1).min() == 0:
        return 1.0
    return float(scipy_stats.chi2_contingency(table)[1])


def evaluate_criteria(
    detector: ShewhartDetector,
    pair: DistributionPair,
    schedule: ChangeSchedule,
    *,
    n_trials: int,
    seed,
    mode: Mode = "restart",
    arl_trials: int | None = None,
    arl_horizon: int | None = None,
    min_survivors: int = 20,
    on_degenerate: str = "exclude",
    n_workers: int = 1,
) -> CriteriaReport:
    """Full criteria report for one calibrated detector on one schedule.

    Monitored-run quantities come from ``n_trials`` runs in the requested
    mode; the run-length mean and the optimality ceiling come from a
    separate pure-F0 simulation (``arl_trials`` runs, default the same
    count, horizon defaulting to 20x eta).

    In restart mode the conditional-detection terms condition on "no
    detection before the onset" (false alarms do not end a restart run),
    which for a memoryless rule estimates the same conditional as the
    single-shot run.
    """
    taus, first_det, _n_false, missed, survived, hit = _monitor_trials(
        detector, pair, schedule, mode, n_trials, seed, n_workers
    )
    detect_any = float((first_det != _CENSORED).mean())
    if schedule.s:
        first_onset = schedule.onsets[0]
        detect_first = float((first_det == first_onset).mean())
        pollak = _pollak_from_counts(
            hit.sum(axis=0),
            survived.sum(axis=0),
            schedule.onsets,
            min_survivors,
            on_degenerate,
        )
    else:
        detect_first = 0.0
        pollak = PollakEstimate(0.0, 0.0, (), (), ())
    avg_missed = _mean_se(missed.astype(float))
    horizon = arl_horizon if arl_horizon is not None else max(int(20 * detector.eta), 1000)
    sample = simulate_run_lengths(
        detector, pair, arl_trials or n_trials, horizon, seed, n_workers=n_workers
    )
    arl = estimate_arl(
        detector, pair, sample.n, horizon, seed, sample=sample
    )
    bound = estimate_optimality_ceiling(
        detector, pair, schedule.s, sample.n, horizon, seed, sample=sample
    )
    pollak_est = Estimate(pollak.value, pollak.std_error)
    return CriteriaReport(
        pollak_estimate=pollak_est,
        lorden_estimate=pollak_est,  # memoryless rule: worst case over histories is the plain value
        arl_to_false_alarm=Estimate(arl.mean, arl.std_error),
        optimality_ceiling=bound,
        detect_first_prob=Estimate(detect_first, _binomial_se(detect_first, n_trials)),
        detect_any_prob=Estimate(detect_any, _binomial_se(detect_any, n_trials)),
        avg_missed=avg_missed,
        n_trials=n_trials,
        mode=mode,
        arl_censored=arl.censored,
        degenerate_onsets=pollak.degenerate_onsets,
    )


# ---------------------------------------------------------------------------
# Sweep rows (the report schema shared with the experiment harness)

CSV_COLUMNS = (
    "eta,mu1,s,T,mode,detect_first,detect_first_se,detect_any,detect_any_se,"
    "avg_missed,avg_missed_se,arl,arl_se,pollak,pollak_se,bound,bound_se,"
    "n_trials,seed"
)


@dataclass(frozen=True)
class CurveRow:
    eta: float
    mu1: float
    s: int
    T: int
    mode: str
    detect_first: float
    detect_first_se: float
    detect_any: float
    detect_any_se: float
    avg_missed: float
    avg_missed_se: float
    arl: float
    arl_se: float
    pollak: float
    pollak_se: float
    bound: float
    bound_se: float
    n_trials: int
    seed: int

    def to_csv_line(self) -> str:
        def fmt(v):
            if isinstance(v, (int, np.integer)):
                return str(int(v))
            return f"{v:.17g}"

        return ",".join(
            [
                fmt(self.eta),
                fmt(self.mu1),
                str(self.s),
                str(self.T),
                self.mode,
                *[
                    fmt(v)
                    for v in (
                        self.detect_first,
                        self.detect_first_se,
                        self.detect_any,
                        self.detect_any_se,
                        self.avg_missed,
                        self.avg_missed_se,
                        self.arl,
                        self.arl_se,
                        self.pollak,
                        self.pollak_se,
                        self.bound,
                        self.bound_se,
                    )
                ],
                str(self.n_trials),
                str(self.seed),
            ]
        )


def detect_first_any_curves(
    pair: DistributionPair,
    schedule: ChangeSchedule,
    eta_list,
    n_trials: int,
    mode: Mode,
    seed,
    *,
    n_workers: int = 1,
    seed_label: int | None = None,
) -> list[CurveRow]:
    """One report row per eta: detect-first / detect-any probabilities,
    missed-onset averages, the run-length mean, the conditional-detection
    sum, and the optimality ceiling, all from independent trials."""
    eta_list = list(eta_list)
    if not eta_list:
        raise ValueError("eta_list must be nonempty")
    entropy = seed.entropy if isinstance(seed, np.random.SeedSequence) else seed
    base_key = seed.spawn_key if isinstance(seed, np.random.SeedSequence) else ()
    label = seed_label if seed_label is not None else (
        entropy if isinstance(entropy, int) else 0
    )
    rows = []
    for gi, eta in enumerate(eta_list):
        det = calibrate(pair, float(eta))
        sub_seed = np.random.SeedSequence(entropy, spawn_key=(*base_key, gi))
        rep = evaluate_criteria(
            det, pair, schedule, n_trials=n_trials, seed=sub_seed, mode=mode,
            n_workers=n_workers,
        )
        rows.append(
            CurveRow(
                eta=float(eta),
                mu1=float(getattr(pair, "mean1", math.nan)),
                s=schedule.s,
                T=schedule.duration,
                mode=mode,
                detect_first=rep.detect_first_prob.value,
                detect_first_se=rep.detect_first_prob.std_error,
                detect_any=rep.detect_any_prob.value,
                detect_any_se=rep.detect_any_prob.std_error,
                avg_missed=rep.avg_missed.value,
                avg_missed_se=rep.avg_missed.std_error,
                arl=rep.arl_to_false_alarm.value,
                arl_se=rep.arl_to_false_alarm.std_error,
                pollak=rep.pollak_estimate.value,
                pollak_se=rep.pollak_estimate.std_error,
                bound=rep.optimality_ceiling.value,
                bound_se=rep.optimality_ceiling.std_error,
                n_trials=n_trials,
                seed=label,
            )
        )
    return rows
