"""Mean-field limit of power-of-d choices with one-bit labeled jobs.

A queue's state is (s, l, c): s queued jobs labeled short, l queued jobs
labeled long, and c the actual type of the job in service (index 0 = long,
1 = short). The empty queue is kept separately as ``x_empty``. The occupancy
fractions evolve by an ODE that is integrated with forward Euler from the
all-empty state until the derivative vanishes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numba
import numpy as np

from .sim_cluster import ClusterConfig, derived_rates

log = logging.getLogger(__name__)

LONG, SHORT = 0, 1


class IntegrationQualityError(ArithmeticError):
    """Truncation or clamping diagnostics exceeded their limits."""


@dataclass(frozen=True)
class MfParams:
    lambda_L: float
    lambda_S: float
    p_L: float
    p_S: float
    rate_long: float
    rate_short: float
    d: int = 2
    s_max: int = 40
    l_max: int = 40

    @classmethod
    def from_cluster(cls, config: ClusterConfig, s_max: int = 40, l_max: int = 40) -> "MfParams":
        r = derived_rates(config)
        return cls(
            lambda_L=r.lambda_L,
            lambda_S=r.lambda_S,
            p_L=r.p_L,
            p_S=r.p_S,
            rate_long=1.0 / config.mean1,
            rate_short=1.0 / config.mean2,
            d=config.d,
            s_max=s_max,
            l_max=l_max,
        )

    @property
    def total_rate(self) -> float:
        return self.lambda_L + self.lambda_S

    def _args(self):
        return (self.lambda_L, self.lambda_S, self.p_L, self.p_S, self.rate_long, self.rate_short, self.d)


@dataclass
class MfState:
    x: np.ndarray  # shape (s_max + 1, l_max + 1, 2)
    x_empty: float

    @classmethod
    def empty(cls, s_max: int = 40, l_max: int = 40) -> "MfState":
        return cls(np.zeros((s_max + 1, l_max + 1, 2)), 1.0)

    @property
    def mass(self) -> float:
        return float(self.x.sum() + self.x_empty)

    def boundary_mass(self) -> float:
        return float(self.x[-1, :, :].sum() + self.x[:-1, -1, :].sum())

    def copy(self) -> "MfState":
        return MfState(self.x.copy(), self.x_empty)

    def to_rows(self):
        """(s, l, c, x) rows with c in the 1 = long / 2 = short convention, plus (0, 0, 0)."""
        rows = [(0, 0, 0, self.x_empty)]
        S, L, _ = self.x.shape
        for s in range(S):
            for l in range(L):
                for c in (LONG, SHORT):
                    rows.append((s, l, c + 1, float(self.x[s, l, c])))
        return rows


@dataclass(frozen=True)
class ChoiceTables:
    z: np.ndarray  # z[k, s, l]; k = 0 labeled-long arrival, k = 1 labeled-short arrival
    w: np.ndarray  # w[k, s, l, c]
    w_empty: float


@dataclass(frozen=True)
class FixedPoint:
    state: MfState
    mean_sojourn: float
    steps: int
    time: float
    residual: float
    truncation_flux: float
    clamped: float


# --- kernels -----------------------------------------------------------------


@numba.njit(cache=True)
def _z_tables(x, z):
    S, L = x.shape[0], x.shape[1]
    y = x[:, :, 0] + x[:, :, 1]
    # labeled-short arrival ranks by (s, l); labeled-long by (l, s)
    row_tail = 0.0
    for s in range(S - 1, -1, -1):
        acc = 0.0
        for l in range(L - 1, -1, -1):
            z[1, s, l] = row_tail + acc
            acc += y[s, l]
        row_tail += acc
    col_tail = 0.0
    for l in range(L - 1, -1, -1):
        acc = 0.0
        for s in range(S - 1, -1, -1):
            z[0, s, l] = col_tail + acc
            acc += y[s, l]
        col_tail += acc


@numba.njit(cache=True)
def _w_tables(x, x_empty, z, d, w):
    S, L = x.shape[0], x.shape[1]
    for k in range(2):
        for s in range(S):
            for l in range(L):
                y = x[s, l, 0] + x[s, l, 1]
                if y <= 0.0:
                    w[k, s, l, 0] = 0.0
                    w[k, s, l, 1] = 0.0
                    continue
                zz = z[k, s, l]
                sel = (zz + y) ** d - zz ** d
                w[k, s, l, 0] = sel * x[s, l, 0] / y
                w[k, s, l, 1] = sel * x[s, l, 1] / y
    return 1.0 - (1.0 - x_empty) ** d


@numba.njit(cache=True)
def _derivative(x, x_empty, lamL, lamS, pL, pS, muL, muS, d, z, w, dx):
    """Fill dx with dx/dt; return (d x_empty / dt, blocked arrival flux)."""
    S, L = x.shape[0], x.shape[1]
    _z_tables(x, z)
    w_empty = _w_tables(x, x_empty, z, d, w)
    dx[:, :, :] = 0.0
    blocked = 0.0
    mu = (muL, muS)
    # arrivals to the empty queue start service immediately
    a_short = lamS * w_empty
    a_long = lamL * w_empty
    dempty = -(a_short + a_long)
    dx[0, 0, SHORT] += a_short * pS + a_long * (1.0 - pL)
    dx[0, 0, LONG] += a_short * (1.0 - pS) + a_long * pL
    for s in range(S):
        for l in range(L):
            for c in range(2):
                xv = x[s, l, c]
                # labeled-short arrival joins the short list
                f = lamS * w[1, s, l, c]
                if s + 1 < S:
                    dx[s, l, c] -= f
                    dx[s + 1, l, c] += f
                else:
                    blocked += f
                # labeled-long arrival joins the long list
                f = lamL * w[0, s, l, c]
                if l + 1 < L:
                    dx[s, l, c] -= f
                    dx[s, l + 1, c] += f
                else:
                    blocked += f
                # service completion; next job comes from the short list first
                f = mu[c] * xv
                dx[s, l, c] -= f
                if s > 0:
                    dx[s - 1, l, SHORT] += f * pS
                    dx[s - 1, l, LONG] += f * (1.0 - pS)
                elif l > 0:
                    dx[0, l - 1, LONG] += f * pL
                    dx[0, l - 1, SHORT] += f * (1.0 - pL)
                else:
                    dempty += f
    return dempty, blocked


@numba.njit(cache=True)
def _euler(x, x_empty, lamL, lamS, pL, pS, muL, muS, d, dt, max_steps, tol, check_every):
    S, L = x.shape[0], x.shape[1]
    z = np.zeros((2, S, L))
    w = np.zeros((2, S, L, 2))
    dx = np.zeros_like(x)
    blocked_total = 0.0
    clamped = 0.0
    resid = np.inf
    step = 0
    while step < max_steps:
        dempty, blocked = _derivative(x, x_empty, lamL, lamS, pL, pS, muL, muS, d, z, w, dx)
        if step % check_every == 0:
            resid = abs(dempty)
            for v in dx.ravel():
                if abs(v) > resid:
                    resid = abs(v)
            if resid < tol:
                break
        blocked_total += blocked * dt
        x_empty += dt * dempty
        for s in range(S):
            for l in range(L):
                for c in range(2):
                    v = x[s, l, c] + dt * dx[s, l, c]
                    if v < 0.0:
                        clamped -= v
                        v = 0.0
                    x[s, l, c] = v
        step += 1
    return x_empty, step, resid, blocked_total, clamped


# --- public surface ----------------------------------------------------------


def compute_z(state: MfState) -> np.ndarray:
    S, L, _ = state.x.shape
    z = np.zeros((2, S, L))
    _z_tables(state.x, z)
    return z


def compute_w(state: MfState, z: np.ndarray, d: int) -> ChoiceTables:
    S, L, _ = state.x.shape
    w = np.zeros((2, S, L, 2))
    w_empty = _w_tables(state.x, state.x_empty, z, d, w)
    return ChoiceTables(z=z, w=w, w_empty=float(w_empty))


def derivative(state: MfState, params: MfParams) -> tuple[MfState, float]:
    """Time derivative of the occupancy and the arrival flux lost at the truncation edge."""
    S, L, _ = state.x.shape
    z = np.zeros((2, S, L))
    w = np.zeros((2, S, L, 2))
    dx = np.zeros_like(state.x)
    dempty, blocked = _derivative(state.x, state.x_empty, *params._args(), z, w, dx)
    return MfState(dx, float(dempty)), float(blocked)


def mean_sojourn(state: MfState, params: MfParams) -> float:
    """Little's law on the equilibrium occupancy."""
    S, L, _ = state.x.shape
    jobs = (np.arange(S)[:, None] + np.arange(L)[None, :] + 1.0)
    n = float((jobs[:, :, None] * state.x).sum())
    if params.total_rate <= 0:
        return 0.0
    return n / params.total_rate


def integrate_to_fixed_point(
    params: MfParams,
    dt: float = 1e-3,
    horizon: float = 1e5,
    stop_tol: float = 1e-10,
    check_every: int = 100,
    boundary_tol: float = 1e-9,
    clamp_tol: float = 1e-9,
    state: MfState | None = None,
) -> FixedPoint:
    """Forward Euler from the all-empty state until max |dx/dt| < stop_tol.

    With ``stop_tol = 0`` every step up to ``horizon`` is taken.

    Raises :class:`IntegrationQualityError` if the horizon runs out first or
    if the truncation or clamping diagnostics exceed their tolerances.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    st = state.copy() if state is not None else MfState.empty(params.s_max, params.l_max)
    max_steps = int(round(horizon / dt))
    x_empty, steps, resid, blocked, clamped = _euler(
        st.x, st.x_empty, *params._args(), dt, max_steps, stop_tol, check_every
    )
    st.x_empty = float(x_empty)
    if clamped > 0:
        log.info("clamped %.3g total negative mass", clamped)
    drift = st.mass - 1.0
    if abs(drift) > 1e-9:
        log.warning("renormalising mass drift %.3g", drift)
        st.x /= st.mass
        st.x_empty /= st.mass
    # stop_tol = 0 runs the whole horizon (fixed-step mode) without a convergence verdict
    if stop_tol > 0 and resid >= stop_tol:
        raise IntegrationQualityError(
            f"derivative norm {resid:.3g} above {stop_tol:.3g} after {steps} steps (t={steps * dt:g})"
        )
    if st.boundary_mass() > boundary_tol or blocked > boundary_tol:
        raise IntegrationQualityError(
            f"truncation at s_max={params.s_max}, l_max={params.l_max} too tight: "
            f"boundary mass {st.boundary_mass():.3g}, blocked flux {blocked:.3g}"
        )
    if clamped > clamp_tol:
        raise IntegrationQualityError(f"clamped {clamped:.3g} negative mass")
    return FixedPoint(
        state=st,
        mean_sojourn=mean_sojourn(st, params),
        steps=int(steps),
        time=steps * dt,
        residual=float(resid),
        truncation_flux=float(blocked),
        clamped=float(clamped),
    )


def solve(config: ClusterConfig, dt: float = 1e-3, s_max: int = 40, l_max: int = 40, **kwargs) -> FixedPoint:
    """Fixed point for a cluster configuration, raising the truncation on trouble."""
    while True:
        params = MfParams.from_cluster(config, s_max, l_max)
        try:
            return integrate_to_fixed_point(params, dt=dt, **kwargs)
        except IntegrationQualityError as exc:
            if "truncation" not in str(exc) or s_max >= 160:
                raise
            log.warning("%s; doubling truncation", exc)
            s_max, l_max = 2 * s_max, 2 * l_max
