"""Event-driven simulation of one M/G/1 queue under size-aware disciplines.

Every discipline is a priority order on (key, tiebreak, job id). Threshold
policies key on the advice bit; SRPT and SPRPT key on (predicted) remaining
size, which shrinks while the job runs. Jobs are generated up front with
numpy; the event loop itself is compiled with numba.
"""

from __future__ import annotations

import heapq
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import stats as sps

from .analytic import BELOW_ORDERS, conservation_check
from .dist import (
    DomainError,
    ExponentialPrediction,
    PredictionModel,
    ServiceDistribution,
    spawn_seeds,
)

POLICY_KINDS = ("fifo", "srpt", "sprpt", "threshold")


@dataclass(frozen=True)
class SchedulingPolicy:
    kind: str
    T: float | None = None
    preemptive: bool = False
    model: PredictionModel | None = None
    below_order: str = "front"

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise DomainError(f"unknown policy {self.kind!r}")
        if self.kind == "threshold" and not (self.T is not None and self.T >= 0):
            raise DomainError("threshold policy needs T >= 0")
        if self.below_order not in BELOW_ORDERS:
            raise DomainError(f"below_order must be one of {BELOW_ORDERS}")

    @property
    def name(self) -> str:
        if self.kind != "threshold":
            return self.kind.upper()
        advice = "exact" if self.model is None else f"pred-{self.model.kind.lower()}"
        mode = "preempt" if self.preemptive else "nonpreempt"
        return f"threshold-{advice}-{mode}(T={self.T:g})"


def FIFO() -> SchedulingPolicy:
    return SchedulingPolicy("fifo")


def SRPT() -> SchedulingPolicy:
    return SchedulingPolicy("srpt", preemptive=True)


def SPRPT(model: PredictionModel | None = None) -> SchedulingPolicy:
    return SchedulingPolicy("sprpt", preemptive=True, model=model or ExponentialPrediction())


def ThresholdExact(T: float, preemptive: bool = False, below_order: str = "front") -> SchedulingPolicy:
    return SchedulingPolicy("threshold", T=T, preemptive=preemptive, below_order=below_order)


def ThresholdPredicted(
    T: float, preemptive: bool = False, model: PredictionModel | None = None, below_order: str = "front"
) -> SchedulingPolicy:
    return SchedulingPolicy(
        "threshold", T=T, preemptive=preemptive, model=model or ExponentialPrediction(), below_order=below_order
    )


@dataclass(frozen=True)
class SimConfig:
    dist: ServiceDistribution
    lam: float
    horizon: float = 2e5
    warmup: float | None = None
    seed: int = 1

    def __post_init__(self):
        if self.warmup is None:
            object.__setattr__(self, "warmup", 0.1 * self.horizon)
        if not 0 < self.warmup < self.horizon:
            raise DomainError("need 0 < warmup < horizon")
        if not 0.0 <= self.lam < 1.0:
            raise DomainError(f"arrival rate must lie in [0, 1), got {self.lam}")


@dataclass
class SimStats:
    completed_count: int
    mean_sojourn: float
    mean_wait: float
    sample_variance: float
    time_avg_workload: float
    ci95_halfwidth: float | None = None
    replications: int = 1
    rep_means: list[float] = field(default_factory=list)
    service_error: float = 0.0

    @property
    def rep_min(self) -> float:
        return min(self.rep_means) if self.rep_means else self.mean_sojourn

    @property
    def rep_max(self) -> float:
        return max(self.rep_means) if self.rep_means else self.mean_sojourn


# --- job generation ---------------------------------------------------------


def generate_jobs(config: SimConfig, model: PredictionModel | None):
    """Arrival times, sizes and predicted sizes on [0, horizon).

    Three independent Philox streams so that the choice of prediction model
    never perturbs arrivals or sizes.
    """
    ss = np.random.SeedSequence(int(config.seed))
    r_arr, r_size, r_pred = (np.random.Generator(np.random.Philox(s)) for s in ss.spawn(3))
    if config.lam <= 0:
        empty = np.zeros(0)
        return empty, empty, empty
    expected = config.lam * config.horizon
    chunk = int(expected + 10.0 * math.sqrt(expected) + 100)
    gaps = r_arr.exponential(1.0 / config.lam, chunk)
    arr = np.cumsum(gaps)
    while arr[-1] < config.horizon:
        more = np.cumsum(r_arr.exponential(1.0 / config.lam, chunk)) + arr[-1]
        arr = np.concatenate([arr, more])
    arr = arr[arr < config.horizon]
    n = arr.size
    size = np.asarray(config.dist.sample(r_size, n), dtype=float)
    u = r_pred.random(n)
    pred = size.copy() if model is None else np.asarray(model.predicted_from_uniform(size, u), dtype=float)
    return arr, size, pred


def policy_keys(policy: SchedulingPolicy, arr, size, pred):
    """Primary key, tiebreak and aging flag for the event loop."""
    if policy.kind == "fifo":
        return np.zeros_like(arr), arr.copy(), False
    if policy.kind == "srpt":
        return size.copy(), arr.copy(), True
    if policy.kind == "sprpt":
        return pred.copy(), arr.copy(), True
    below = pred <= policy.T
    key = np.where(below, 0.0, 1.0)
    if policy.below_order == "front":
        # newest below-labeled job first; above-labeled jobs stay FIFO
        tie = np.where(below, -arr, arr)
    else:
        tie = arr.copy()
    return key, tie, False


# --- event loop -------------------------------------------------------------


@numba.njit(cache=True)
def _integrate_workload(u0, t0, t1, warmup):
    """Integral over [max(t0, warmup), t1] of max(u0 - (s - t0), 0)."""
    a = t0 if t0 > warmup else warmup
    if t1 <= a or u0 <= 0.0:
        return 0.0
    end = t0 + u0
    b = t1 if t1 < end else end
    if b <= a:
        return 0.0
    ua = u0 - (a - t0)
    ub = u0 - (b - t0)
    return 0.5 * (ua + ub) * (b - a)


@numba.njit(cache=True)
def _run_queue(arr, size, key, tie, preemptive, aging, horizon, warmup):
    n = arr.shape[0]
    rem = size.copy()
    served = np.zeros(n)
    start = np.full(n, -1.0)
    heap = [(0.0, 0.0, 0)]
    heap.pop()

    t = 0.0
    work = 0.0
    area = 0.0
    count = 0
    sum_s = 0.0
    sumsq_s = 0.0
    sum_w = 0.0
    max_err = 0.0

    cur = -1
    cur_key = 0.0
    cur_tie = 0.0
    i = 0
    inf = np.inf
    while True:
        next_arr = arr[i] if i < n else inf
        t_done = t + rem[cur] if cur >= 0 else inf
        if t_done <= next_arr:
            if t_done > horizon:
                break
            area += _integrate_workload(work, t, t_done, warmup)
            elapsed = t_done - t
            work -= elapsed
            served[cur] += elapsed
            t = t_done
            rem[cur] = 0.0
            if t >= warmup:
                s = t - arr[cur]
                count += 1
                sum_s += s
                sumsq_s += s * s
                sum_w += start[cur] - arr[cur]
                err = abs(served[cur] - size[cur])
                if err > max_err:
                    max_err = err
            if len(heap) == 0:
                cur = -1
                work = 0.0
            else:
                cur_key, cur_tie, cur = heapq.heappop(heap)
                if start[cur] < 0:
                    start[cur] = t
        else:
            if next_arr > horizon:
                break
            area += _integrate_workload(work, t, next_arr, warmup)
            elapsed = next_arr - t
            if cur >= 0:
                work -= elapsed
                served[cur] += elapsed
                rem[cur] -= elapsed
                if aging:
                    cur_key -= elapsed
            t = next_arr
            j = i
            i += 1
            work += size[j]
            if cur < 0:
                cur = j
                cur_key = key[j]
                cur_tie = tie[j]
                start[j] = t
            elif preemptive and (key[j] < cur_key or (key[j] == cur_key and tie[j] < cur_tie)):
                heapq.heappush(heap, (cur_key, cur_tie, cur))
                cur = j
                cur_key = key[j]
                cur_tie = tie[j]
                start[j] = t
            else:
                heapq.heappush(heap, (key[j], tie[j], j))
    if cur >= 0:
        area += _integrate_workload(work, t, horizon, warmup)
    return count, sum_s, sumsq_s, sum_w, area, max_err


def run_single(config: SimConfig, policy: SchedulingPolicy) -> SimStats:
    """Simulate one replication from an empty queue."""
    model = policy.model if policy.kind in ("sprpt", "threshold") else None
    arr, size, pred = generate_jobs(config, model)
    key, tie, aging = policy_keys(policy, arr, size, pred)
    count, sum_s, sumsq_s, sum_w, area, max_err = _run_queue(
        arr, size, key, tie, policy.preemptive, aging, float(config.horizon), float(config.warmup)
    )
    window = config.horizon - config.warmup
    if count == 0:
        return SimStats(0, 0.0, 0.0, 0.0, area / window)
    mean = sum_s / count
    var = (sumsq_s - count * mean * mean) / (count - 1) if count > 1 else 0.0
    return SimStats(
        completed_count=int(count),
        mean_sojourn=mean,
        mean_wait=sum_w / count,
        sample_variance=max(var, 0.0),
        time_avg_workload=area / window,
        rep_means=[mean],
        service_error=float(max_err),
    )


def _run_one(args):
    config, policy = args
    return run_single(config, policy)


def aggregate(runs: list[SimStats]) -> SimStats:
    """Average per-replication means; Student-t 95% half-width over replications."""
    means = np.array([r.mean_sojourn for r in runs])
    k = len(runs)
    sd = float(means.std(ddof=1)) if k > 1 else 0.0
    half = float(sps.t.ppf(0.975, k - 1) * sd / math.sqrt(k)) if k > 1 else None
    return SimStats(
        completed_count=int(sum(r.completed_count for r in runs)),
        mean_sojourn=float(means.mean()),
        mean_wait=float(np.mean([r.mean_wait for r in runs])),
        sample_variance=sd * sd,
        time_avg_workload=float(np.mean([r.time_avg_workload for r in runs])),
        ci95_halfwidth=half,
        replications=k,
        rep_means=[float(m) for m in means],
        service_error=max(r.service_error for r in runs),
    )


def replicate(
    config: SimConfig, policy: SchedulingPolicy, reps: int = 20, workers: int = 1, seeds: list[int] | None = None
) -> SimStats:
    """Independent replications with seeds spawned from ``config.seed``."""
    if reps < 2:
        raise DomainError("need at least two replications")
    if seeds is None:
        seeds = spawn_seeds(config.seed, reps)
    jobs = [(SimConfig(config.dist, config.lam, config.horizon, config.warmup, s), policy) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            runs = list(pool.map(_run_one, jobs))
    else:
        runs = [_run_one(j) for j in jobs]
    return aggregate(runs)


def workload_conservation_check(stats: SimStats, dist: ServiceDistribution, lam: float) -> float:
    """Relative gap between simulated mean unfinished work and V / (1 - rho)."""
    expected = conservation_check(dist, lam).expected_load
    if expected == 0.0:
        return abs(stats.time_avg_workload)
    return abs(stats.time_avg_workload - expected) / expected
