"""Simulation of n queues fed by power-of-d choices with two job types.

Long jobs (type 1) and short jobs (type 2) arrive as Poisson streams of rate
``lambda1 * n`` and ``lambda2 * n``, have exponential sizes with means
``mean1 > mean2``, and carry a one-bit label that is wrong with probability
``q1`` (long labeled short) or ``q2`` (short labeled long).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numba
import numpy as np

from .dist import DomainError, spawn_seeds
from .sim_single import SimStats, aggregate

ONEBIT, ONE_CHOICE_FIFO, SHORTER_FIFO, LEAST_LOADED_SRPT, LEAST_LOADED_SJF = 0, 1, 2, 3, 4
POLICIES = {
    "onebit": ONEBIT,
    "one-choice-fifo": ONE_CHOICE_FIFO,
    "shorter-fifo": SHORTER_FIFO,
    "least-loaded-srpt": LEAST_LOADED_SRPT,
    # same routing, shortest job first without preemption
    "least-loaded-sjf": LEAST_LOADED_SJF,
}

# label / list indices
LABEL_LONG, LABEL_SHORT = 0, 1


@dataclass(frozen=True)
class ClusterConfig:
    n: int = 200
    d: int = 2
    lambda1: float = 0.225
    lambda2: float = 0.90
    mean1: float = 3.2
    mean2: float = 0.20
    q1: float = 0.0
    q2: float = 0.0
    horizon: float = 2e4
    warmup: float | None = None
    seed: int = 1

    def __post_init__(self):
        if self.warmup is None:
            object.__setattr__(self, "warmup", 0.1 * self.horizon)
        if not self.mean1 > self.mean2 > 0:
            raise DomainError("need mean1 > mean2 > 0")
        if not (0 <= self.q1 <= 1 and 0 <= self.q2 <= 1):
            raise DomainError("misclassification probabilities must lie in [0, 1]")
        if self.load >= 1:
            raise DomainError(f"per-queue load {self.load} must be below 1")
        if self.n < 1 or self.d < 1:
            raise DomainError("need n >= 1 and d >= 1")
        if not 0 <= self.warmup < self.horizon:
            raise DomainError("need 0 <= warmup < horizon")

    @property
    def load(self) -> float:
        return self.lambda1 * self.mean1 + self.lambda2 * self.mean2

    def with_errors(self, q1: float, q2: float) -> "ClusterConfig":
        return replace(self, q1=q1, q2=q2)


@dataclass(frozen=True)
class DerivedRates:
    p_L: float
    p_S: float
    lambda_L: float
    lambda_S: float


def derived_rates(config: ClusterConfig) -> DerivedRates:
    """Label arrival rates and the chance a label is right.

    A label that never occurs gets probability 1 by convention.
    """
    l1, l2, q1, q2 = config.lambda1, config.lambda2, config.q1, config.q2
    lam_L = l1 * (1 - q1) + l2 * q2
    lam_S = l2 * (1 - q2) + l1 * q1
    p_L = l1 * (1 - q1) / lam_L if lam_L > 0 else 1.0
    p_S = l2 * (1 - q2) / lam_S if lam_S > 0 else 1.0
    return DerivedRates(p_L=p_L, p_S=p_S, lambda_L=lam_L, lambda_S=lam_S)


def choose_queue(states, label_short: bool, rng: np.random.Generator) -> int:
    """Pick among sampled queue states ``(short_queued, long_queued, busy)``.

    An idle queue wins outright. Otherwise a labeled-short arrival minimises
    (short, long) lexicographically and a labeled-long arrival (long, short);
    the job in service is ignored. Remaining ties are broken uniformly.
    """
    best, key_best, ties = -1, None, 0
    for i, (s, l, busy) in enumerate(states):
        key = (-1, -1) if not busy else ((s, l) if label_short else (l, s))
        if key_best is None or key < key_best:
            best, key_best, ties = i, key, 1
        elif key == key_best:
            ties += 1
            if rng.random() * ties < 1.0:
                best = i
    return best


# --- event loop -------------------------------------------------------------


@numba.njit(cache=True)
def _sift_up(ht, hq, pos, i):
    while i > 0:
        p = (i - 1) >> 1
        if ht[p] <= ht[i]:
            break
        ht[p], ht[i] = ht[i], ht[p]
        hq[p], hq[i] = hq[i], hq[p]
        pos[hq[p]] = p
        pos[hq[i]] = i
        i = p


@numba.njit(cache=True)
def _sift_down(ht, hq, pos, i, size):
    while True:
        l = 2 * i + 1
        if l >= size:
            break
        c = l
        r = l + 1
        if r < size and ht[r] < ht[l]:
            c = r
        if ht[i] <= ht[c]:
            break
        ht[c], ht[i] = ht[i], ht[c]
        hq[c], hq[i] = hq[i], hq[c]
        pos[hq[c]] = c
        pos[hq[i]] = i
        i = c


@numba.njit(cache=True)
def _set_departure(ht, hq, pos, q, t):
    """Indexed heap holding one departure time per queue (inf when idle)."""
    i = pos[q]
    old = ht[i]
    ht[i] = t
    if t < old:
        _sift_up(ht, hq, pos, i)
    else:
        _sift_down(ht, hq, pos, i, ht.shape[0])


@numba.njit(cache=True)
def _run_cluster(n, d, lam1, lam2, mean1, mean2, q1, q2, horizon, warmup, seed, policy, capacity):
    np.random.seed(seed)
    # job slots
    arr = np.zeros(capacity)
    rem = np.zeros(capacity)
    first = np.zeros(capacity)
    nxt = np.full(capacity, -1, np.int64)
    free = np.arange(capacity - 1, -1, -1).astype(np.int64)
    nfree = capacity
    # per-queue lists: [q, 0] labeled long, [q, 1] labeled short
    head = np.full((n, 2), -1, np.int64)
    tail = np.full((n, 2), -1, np.int64)
    cnt = np.zeros((n, 2), np.int64)
    serving = np.full(n, -1, np.int64)
    seg_start = np.zeros(n)
    queued_work = np.zeros(n)
    # departure heap
    ht = np.full(n, np.inf)
    hq = np.arange(n).astype(np.int64)
    pos = np.arange(n).astype(np.int64)

    total_rate = n * (lam1 + lam2)
    p_long = lam1 / (lam1 + lam2)
    t = 0.0
    t_arr = np.random.exponential(1.0 / total_rate)
    count = 0
    sum_s = 0.0
    sumsq_s = 0.0
    sum_w = 0.0
    area = 0.0
    in_system = 0

    while True:
        t_dep = ht[0]
        t_next = t_arr if t_arr < t_dep else t_dep
        if t_next > horizon:
            break
        a0 = t if t > warmup else warmup
        if t_next > a0:
            area += in_system * (t_next - a0)
        t = t_next
        if t_arr <= t_dep:
            # ---- arrival
            t_arr = t + np.random.exponential(1.0 / total_rate)
            is_long = np.random.random() < p_long
            if is_long:
                size = np.random.exponential(mean1)
                label = LABEL_SHORT if np.random.random() < q1 else LABEL_LONG
            else:
                size = np.random.exponential(mean2)
                label = LABEL_LONG if np.random.random() < q2 else LABEL_SHORT

            if policy == ONE_CHOICE_FIFO:
                q = np.random.randint(n)
            else:
                q = -1
                best_a = 0.0
                best_b = 0.0
                ties = 0
                for _ in range(d):
                    c = np.random.randint(n)
                    if serving[c] < 0:
                        ka, kb = -1.0, -1.0
                    elif policy == ONEBIT:
                        if label == LABEL_SHORT:
                            ka, kb = float(cnt[c, 1]), float(cnt[c, 0])
                        else:
                            ka, kb = float(cnt[c, 0]), float(cnt[c, 1])
                    elif policy == SHORTER_FIFO:
                        ka, kb = float(cnt[c, 0] + cnt[c, 1] + 1), 0.0
                    else:
                        ka = queued_work[c] + rem[serving[c]] - (t - seg_start[c])
                        kb = 0.0
                    if q < 0 or ka < best_a or (ka == best_a and kb < best_b):
                        q = c
                        best_a = ka
                        best_b = kb
                        ties = 1
                    elif ka == best_a and kb == best_b:
                        ties += 1
                        if np.random.random() * ties < 1.0:
                            q = c

            if nfree == 0:
                return -1, 0.0, 0.0, 0.0, 0.0
            nfree -= 1
            j = free[nfree]
            arr[j] = t
            rem[j] = size
            nxt[j] = -1
            in_system += 1

            first[j] = -1.0
            if serving[q] < 0:
                serving[q] = j
                seg_start[q] = t
                first[j] = t
                _set_departure(ht, hq, pos, q, t + size)
            else:
                lst = 0
                if policy == ONEBIT:
                    lst = label
                if policy == LEAST_LOADED_SRPT:
                    cur = serving[q]
                    cur_rem = rem[cur] - (t - seg_start[q])
                    if size < cur_rem:
                        # preempt: the running job goes back to the pool
                        rem[cur] = cur_rem
                        j, cur = cur, j
                        serving[q] = cur
                        seg_start[q] = t
                        first[cur] = t
                        _set_departure(ht, hq, pos, q, t + size)
                queued_work[q] += rem[j]
                nxt[j] = -1
                if tail[q, lst] < 0:
                    head[q, lst] = j
                else:
                    nxt[tail[q, lst]] = j
                tail[q, lst] = j
                cnt[q, lst] += 1
        else:
            # ---- departure
            q = hq[0]
            j = serving[q]
            if t >= warmup:
                s = t - arr[j]
                count += 1
                sum_s += s
                sumsq_s += s * s
                sum_w += first[j] - arr[j]
            free[nfree] = j
            nfree += 1
            in_system -= 1
            # next job
            nj = -1
            if policy == ONEBIT:
                lst = 1 if cnt[q, 1] > 0 else 0
            else:
                lst = 0
            if cnt[q, lst] > 0:
                if policy >= LEAST_LOADED_SRPT:
                    prev = -1
                    best_prev = -1
                    k = head[q, 0]
                    nj = k
                    while k >= 0:
                        if rem[k] < rem[nj] or (rem[k] == rem[nj] and arr[k] < arr[nj]):
                            nj = k
                            best_prev = prev
                        prev = k
                        k = nxt[k]
                    if best_prev < 0:
                        head[q, 0] = nxt[nj]
                    else:
                        nxt[best_prev] = nxt[nj]
                    if tail[q, 0] == nj:
                        tail[q, 0] = best_prev
                else:
                    nj = head[q, lst]
                    head[q, lst] = nxt[nj]
                    if head[q, lst] < 0:
                        tail[q, lst] = -1
                cnt[q, lst] -= 1
                queued_work[q] -= rem[nj]
                if cnt[q, 0] + cnt[q, 1] == 0:
                    queued_work[q] = 0.0
            if nj >= 0:
                serving[q] = nj
                seg_start[q] = t
                if first[nj] < 0:
                    first[nj] = t
                _set_departure(ht, hq, pos, q, t + rem[nj])
            else:
                serving[q] = -1
                _set_departure(ht, hq, pos, q, np.inf)
    a0 = t if t > warmup else warmup
    if horizon > a0:
        area += in_system * (horizon - a0)
    return count, sum_s, sumsq_s, sum_w, area


def run_cluster(config: ClusterConfig, policy: str = "onebit") -> SimStats:
    """One replication from an all-empty system.

    ``time_avg_workload`` here holds the time-averaged number of jobs per
    queue, the quantity Little's law ties to the mean sojourn time.
    """
    try:
        code = POLICIES[policy]
    except KeyError:
        raise DomainError(f"unknown cluster policy {policy!r}; choose from {sorted(POLICIES)}") from None
    d = 1 if code == ONE_CHOICE_FIFO else config.d
    capacity = max(4096, 64 * config.n)
    seed32 = int(config.seed) % (2**32)
    while True:
        count, sum_s, sumsq_s, sum_w, area = _run_cluster(
            config.n, d, config.lambda1, config.lambda2, config.mean1, config.mean2,
            config.q1, config.q2, float(config.horizon), float(config.warmup), seed32, code, capacity,
        )
        if count >= 0:
            break
        capacity *= 4
    window = config.horizon - config.warmup
    if count == 0:
        return SimStats(0, 0.0, 0.0, 0.0, area / (window * config.n))
    mean = sum_s / count
    var = (sumsq_s - count * mean * mean) / (count - 1) if count > 1 else 0.0
    return SimStats(
        completed_count=int(count),
        mean_sojourn=mean,
        mean_wait=sum_w / count,
        sample_variance=max(var, 0.0),
        time_avg_workload=area / (window * config.n),
        rep_means=[mean],
    )


def _run_one(args):
    return run_cluster(*args)


def replicate_cluster(config: ClusterConfig, policy: str = "onebit", reps: int = 10, workers: int = 1) -> SimStats:
    if reps < 2:
        raise DomainError("need at least two replications")
    jobs = [(replace(config, seed=s), policy) for s in spawn_seeds(config.seed, reps)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            runs = list(pool.map(_run_one, jobs))
    else:
        runs = [_run_one(j) for j in jobs]
    return aggregate(runs)
