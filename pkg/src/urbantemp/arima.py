"""ARIMA fitting by conditional sum of squares, with AICc order search.

The parameterization is mean-centered: after d-fold differencing the series
x_t = w_t - mu follows x_t = sum_i ar_i x_{t-i} + e_t + sum_j ma_j e_{t-j}.
Residuals condition on the first p observations and zero pre-sample shocks,
so the MA recursion is a plain linear filter. The intercept mu is estimated
only when d = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

MAX_P = 3
MAX_D = 2
MAX_Q = 3
# A candidate order must satisfy len(series) > this multiple of (p+d+q+1).
MIN_OBS_FACTOR = 10
_ACF1_DIFF_THRESHOLD = 0.99
_ROOT_MARGIN = 1.0 + 1e-3


class ArimaError(ValueError):
    """Raised for infeasible orders, non-convergence, or unstable estimates."""


@dataclass(frozen=True)
class ArimaOrder:
    p: int
    d: int
    q: int

    def __post_init__(self) -> None:
        if not (0 <= self.p <= MAX_P and 0 <= self.d <= MAX_D and 0 <= self.q <= MAX_Q):
            raise ArimaError(f"order ({self.p},{self.d},{self.q}) outside the search space")

    @property
    def n_params(self) -> int:
        """Optimized parameters: AR, MA, and the intercept when d = 0."""
        return self.p + self.q + (1 if self.d == 0 else 0)


@dataclass
class ArimaModel:
    order: ArimaOrder
    ar_coeffs: np.ndarray
    ma_coeffs: np.ndarray
    intercept: float
    sigma2: float
    aicc: float


def _difference(series: np.ndarray, d: int) -> np.ndarray:
    return np.diff(series, n=d) if d > 0 else series


def _css_residuals(x: np.ndarray, ar: np.ndarray, ma: np.ndarray) -> np.ndarray:
    """Conditional residuals e_p..e_{n-1} with zero pre-sample shocks."""
    p = len(ar)
    rhs = x[p:].copy()
    for i, phi in enumerate(ar, start=1):
        rhs -= phi * x[p - i : len(x) - i]
    if len(ma) == 0:
        return rhs
    return lfilter([1.0], np.concatenate([[1.0], ma]), rhs)


def _unpack(beta: np.ndarray, order: ArimaOrder) -> tuple[float, np.ndarray, np.ndarray]:
    mu = beta[0] if order.d == 0 else 0.0
    k = 1 if order.d == 0 else 0
    ar = beta[k : k + order.p]
    ma = beta[k + order.p :]
    return mu, ar, ma


def _residual_fn(w: np.ndarray, order: ArimaOrder):
    def resid(beta: np.ndarray) -> np.ndarray:
        mu, ar, ma = _unpack(beta, order)
        return _css_residuals(w - mu, ar, ma)

    return resid


def _check_roots(coeffs: np.ndarray, what: str) -> None:
    """Polynomial 1 -/+ c1 z ... must have all roots outside the unit circle."""
    if len(coeffs) == 0:
        return
    sign = -1.0 if what == "AR" else 1.0
    poly = np.concatenate([[1.0], sign * coeffs])
    roots = np.roots(poly[::-1])
    if len(roots) and np.abs(roots).min() < _ROOT_MARGIN:
        kind = "explosive AR" if what == "AR" else "non-invertible MA"
        raise ArimaError(f"{kind} estimate: root magnitude {np.abs(roots).min():.4f}")


def _initial_guess(w: np.ndarray, order: ArimaOrder) -> np.ndarray:
    mu0 = float(w.mean()) if order.d == 0 else 0.0
    x = w - mu0
    ar0 = np.zeros(order.p)
    if order.p > 0:
        # Least-squares regression of x_t on its own lags.
        X = np.column_stack([x[order.p - i : len(x) - i] for i in range(1, order.p + 1)])
        ar0, *_ = np.linalg.lstsq(X, x[order.p :], rcond=None)
        ar0 = np.clip(ar0, -0.9, 0.9)
    beta = np.concatenate([[mu0] if order.d == 0 else [], ar0, np.zeros(order.q)])
    return beta


def _gauss_newton(resid, beta0: np.ndarray, max_iter: int = 200) -> np.ndarray:
    """Levenberg-damped Gauss-Newton on a vector residual function."""
    beta = beta0.astype(np.float64).copy()
    if beta.size == 0:
        return beta
    e = resid(beta)
    loss = float(e @ e)
    lam = 1e-3
    for _ in range(max_iter):
        J = np.empty((len(e), len(beta)))
        for i in range(len(beta)):
            h = 1e-6 * max(1.0, abs(beta[i]))
            up = beta.copy()
            up[i] += h
            down = beta.copy()
            down[i] -= h
            J[:, i] = (resid(up) - resid(down)) / (2.0 * h)
        g = J.T @ e
        H = J.T @ J
        damping = np.diag(np.maximum(np.diag(H), 1e-12))
        improved = False
        for _ in range(12):
            try:
                step = np.linalg.solve(H + lam * damping, g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            candidate = beta - step
            with np.errstate(over="ignore", invalid="ignore"):
                e_new = resid(candidate)
                loss_new = float(e_new @ e_new)
            if math.isfinite(loss_new) and loss_new <= loss:
                improved = loss - loss_new > 1e-12 * (1.0 + loss)
                beta, e, loss = candidate, e_new, loss_new
                lam = max(lam / 10.0, 1e-12)
                break
            lam *= 10.0
        else:
            raise ArimaError("Gauss-Newton step search failed to improve the fit")
        if not improved:
            return beta
        if float(np.max(np.abs(step))) < 1e-10:
            return beta
    raise ArimaError(f"no convergence after {max_iter} Gauss-Newton iterations")


def _aicc(css: float, n_eff: int, order: ArimaOrder) -> float:
    k = order.n_params + 1  # +1 counts the residual variance
    if n_eff - k - 1 <= 0:
        raise ArimaError(f"too few residuals ({n_eff}) for order {order}")
    sigma2 = max(css / n_eff, 1e-300)
    return n_eff * math.log(sigma2) + 2 * k + 2 * k * (k + 1) / (n_eff - k - 1)


def arima_fit(series: np.ndarray, order: ArimaOrder) -> ArimaModel:
    """Estimate an ARIMA model of fixed order by conditional least squares."""
    series = np.asarray(series, dtype=np.float64)
    if np.isnan(series).any():
        raise ArimaError("series has missing values")
    min_len = MIN_OBS_FACTOR * (order.p + order.d + order.q + 1)
    if len(series) <= min_len:
        raise ArimaError(
            f"series of {len(series)} too short for order "
            f"({order.p},{order.d},{order.q}); need > {min_len}"
        )
    w = _difference(series, order.d)
    beta = _gauss_newton(_residual_fn(w, order), _initial_guess(w, order))
    mu, ar, ma = _unpack(beta, order)
    _check_roots(ar, "AR")
    _check_roots(ma, "MA")
    e = _css_residuals(w - mu, ar, ma)
    n_eff = len(e)
    css = float(e @ e)
    return ArimaModel(
        order=order,
        ar_coeffs=np.asarray(ar, dtype=np.float64).copy(),
        ma_coeffs=np.asarray(ma, dtype=np.float64).copy(),
        intercept=float(mu),
        sigma2=css / n_eff,
        aicc=_aicc(css, n_eff, order),
    )


def _acf1(x: np.ndarray) -> float:
    x = x - x.mean()
    denom = float(x @ x)
    if denom == 0.0:
        return 0.0
    return float(x[:-1] @ x[1:]) / denom


def choose_d(series: np.ndarray, max_d: int = MAX_D) -> int:
    """Difference until the lag-1 autocorrelation magnitude drops below 0.99."""
    w = np.asarray(series, dtype=np.float64)
    d = 0
    while d < max_d and abs(_acf1(w)) >= _ACF1_DIFF_THRESHOLD:
        w = np.diff(w)
        d += 1
    return d


# Candidates whose AICc is within this margin of the minimum count as ties
# and resolve by parsimony; differences under ~4 carry little evidence.
AICC_TIE_MARGIN = 4.0


def arima_auto(series: np.ndarray) -> ArimaModel:
    """Exhaustive AICc search over the (p, q) grid at an automatic d.

    All fits within AICC_TIE_MARGIN of the best AICc are treated as ties
    and break toward fewer parameters (smaller p+q, then smaller p).
    Candidates that fail to fit or violate the length rule are skipped.
    """
    series = np.asarray(series, dtype=np.float64)
    if len(series) >= 2 and float(np.ptp(series)) == 0.0:
        # Constant input: every stationary fit is degenerate; model it as a
        # parameter-free random walk.
        order = ArimaOrder(0, 1, 0)
        return ArimaModel(order, np.zeros(0), np.zeros(0), 0.0, 0.0, -math.inf)
    d = choose_d(series)
    fits: list[ArimaModel] = []
    for p in range(MAX_P + 1):
        for q in range(MAX_Q + 1):
            if len(series) <= MIN_OBS_FACTOR * (p + d + q + 1):
                continue
            try:
                fits.append(arima_fit(series, ArimaOrder(p, d, q)))
            except ArimaError:
                continue
    if not fits:
        raise ArimaError(f"no ARIMA order could be fit to a series of {len(series)}")
    cutoff = min(m.aicc for m in fits) + AICC_TIE_MARGIN
    near = [m for m in fits if m.aicc <= cutoff]
    return min(near, key=lambda m: (m.order.p + m.order.q, m.order.p, m.aicc))


def arima_forecast(model: ArimaModel, last_values: np.ndarray, horizon: int = 24) -> np.ndarray:
    """Iterated forecasts with future shocks zero; differencing is inverted
    by cumulative summation from the observed tails."""
    series = np.asarray(last_values, dtype=np.float64)
    order = model.order
    need = order.d + max(order.p, 1)
    if len(series) < need:
        raise ArimaError(f"need at least {need} trailing values, got {len(series)}")
    levels = [series]
    for _ in range(order.d):
        levels.append(np.diff(levels[-1]))
    w = levels[-1]
    x = w - model.intercept
    e = _css_residuals(x, model.ar_coeffs, model.ma_coeffs)

    x_ext = list(x)
    e_ext = [0.0] * order.p + list(e)
    future = []
    for _ in range(horizon):
        val = 0.0
        for i, phi in enumerate(model.ar_coeffs, start=1):
            if len(x_ext) - i >= 0:
                val += phi * x_ext[len(x_ext) - i]
        for j, theta in enumerate(model.ma_coeffs, start=1):
            if len(e_ext) - j >= 0:
                val += theta * e_ext[len(e_ext) - j]
        x_ext.append(val)
        e_ext.append(0.0)
        future.append(val + model.intercept)

    forecast = np.array(future)
    for level in reversed(levels[:-1]):
        forecast = level[-1] + np.cumsum(forecast)
    return forecast


def simulate_arma(
    n: int,
    ar: tuple[float, ...] = (),
    ma: tuple[float, ...] = (),
    sigma: float = 1.0,
    mean: float = 0.0,
    seed: int = 0,
    burn: int = 200,
) -> np.ndarray:
    """Draw a stationary ARMA path; handy for estimator-consistency checks."""
    rng = np.random.default_rng(seed)
    eps = rng.normal(0.0, sigma, size=n + burn)
    x = lfilter(np.concatenate([[1.0], np.asarray(ma, dtype=np.float64)]),
                np.concatenate([[1.0], -np.asarray(ar, dtype=np.float64)]),
                eps)
    return mean + x[burn:]
