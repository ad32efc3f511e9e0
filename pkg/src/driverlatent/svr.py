"""Epsilon-SVR decision model over latent vectors.

The fit solves the standard epsilon-insensitive dual by sequential
pairwise optimization on the 2n nonnegative multipliers (alpha, alpha*):

    min  0.5 b'Kb + eps*sum(alpha + alpha*) - y'b     with b = alpha - alpha*
    s.t. sum(b) = 0,  0 <= alpha, alpha* <= C

At each step the most violating pair under the KKT conditions is updated
analytically and clipped to the box. Problems here are tiny (hundreds of
points), so the full kernel matrix is kept dense. The deployment decision
thresholds the regression output at zero.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_TOL = 1e-4
JITTER = 1e-10


class ConvergenceError(RuntimeError):
    """The pairwise solver did not reach the KKT tolerance."""


@dataclass(frozen=True)
class KernelParams:
    degree: int = 3
    gamma: float = 0.5
    coef0: float = 1.0


@dataclass
class FitInfo:
    objective: float
    kkt_gap: float
    iterations: int
    n_train: int


@dataclass
class SvrModel:
    support_latents: np.ndarray  # (m, D), in scaled space when a scaler is set
    dual_coeffs: np.ndarray  # (m,), alpha - alpha*
    bias: float
    kernel: KernelParams
    epsilon_tube: float
    C: float
    # optional input standardization (the polynomial kernel is not
    # scale-invariant; uncentered inputs make its values explode)
    input_mean: np.ndarray | None = None
    input_scale: np.ndarray | None = None
    fit_info: FitInfo | None = field(default=None, compare=False)

    def transform(self, Z: np.ndarray) -> np.ndarray:
        if self.input_mean is None:
            return Z
        return (Z - self.input_mean) / self.input_scale


def kernel_poly3(u, v, gamma: float, coef0: float) -> float:
    """Degree-3 polynomial kernel (gamma * <u, v> + coef0)^3."""
    return float((gamma * np.dot(np.asarray(u, float), np.asarray(v, float)) + coef0) ** 3)


def _kernel_matrix(A: np.ndarray, B: np.ndarray, k: KernelParams) -> np.ndarray:
    return (k.gamma * (A @ B.T) + k.coef0) ** k.degree


def fit_svr(
    latents: np.ndarray,
    targets: np.ndarray,
    C: float = 1.0,
    epsilon: float = 0.5,
    gamma: float | None = None,
    coef0: float = 1.0,
    degree: int = 3,
    tol: float = DEFAULT_TOL,
    max_iter: int = 200_000,
    standardize_inputs: bool = False,
) -> SvrModel:
    """Fit the epsilon-SVR dual to KKT tolerance ``tol``."""
    X = np.asarray(latents, dtype=float)
    y = np.asarray(targets, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = len(X)
    if n < 2:
        raise ValueError("need at least 2 training points")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")
    input_mean = input_scale = None
    if standardize_inputs:
        input_mean = X.mean(axis=0)
        input_scale = np.maximum(X.std(axis=0), 1e-9)
        X = (X - input_mean) / input_scale
    kern = KernelParams(degree=degree, gamma=(1.0 / X.shape[1]) if gamma is None else gamma, coef0=coef0)

    K = _kernel_matrix(X, X, kern)
    K[np.diag_indices_from(K)] += JITTER

    a = np.zeros(2 * n)  # [alpha; alpha*]
    s = np.concatenate([np.ones(n), -np.ones(n)])
    beta = np.zeros(n)
    # v_t = s_t * grad_t; stationarity of free multipliers gives bias = -v_t
    v = np.concatenate([epsilon - y, -epsilon - y])
    eps_b = 1e-12  # at-bound tolerance

    kdiag = np.tile(np.diag(K), 2)
    it = 0
    gap = math.inf
    while it < max_iter:
        at_lo = a <= eps_b
        at_hi = a >= C - eps_b
        in_low = np.where(s > 0, ~at_lo, ~at_hi)  # gives lower bounds on -bias
        in_up = np.where(s > 0, ~at_hi, ~at_lo)
        v_low = np.where(in_low, v, -np.inf)
        v_up = np.where(in_up, v, np.inf)
        i = int(np.argmax(v_low))
        gap = v_low[i] - v_up.min()
        if gap <= tol:
            break

        # second-order pair selection: maximize the one-step decrease
        ic = i % n
        krow = np.tile(K[:, ic], 2)
        diff = v_low[i] - v
        etas = np.maximum(kdiag[i] + kdiag - 2.0 * krow, 1e-12)
        cand = in_up & (diff > 0)
        gains = np.where(cand, diff * diff / etas, -np.inf)
        j = int(np.argmax(gains))

        jc = j % n
        eta = K[ic, ic] + K[jc, jc] - 2.0 * K[ic, jc]
        # step t changes a_i by s_i*t and a_j by -s_j*t, keeping sum(s*a) = 0
        if s[i] > 0:
            t_lo, t_hi = -a[i], C - a[i]
        else:
            t_lo, t_hi = a[i] - C, a[i]
        if s[j] > 0:
            t_lo, t_hi = max(t_lo, a[j] - C), min(t_hi, a[j])
        else:
            t_lo, t_hi = max(t_lo, -a[j]), min(t_hi, C - a[j])
        if eta > 1e-12:
            t = float(np.clip(-(v[i] - v[j]) / eta, t_lo, t_hi))
        else:
            t = t_lo  # linear in t and v_i > v_j: descend to the boundary
        if t == 0.0:
            break  # numerically stuck at a boundary pair

        a[i] = min(max(a[i] + s[i] * t, 0.0), C)
        a[j] = min(max(a[j] - s[j] * t, 0.0), C)
        beta[ic] += t
        beta[jc] -= t
        v += t * np.tile(K[:, ic] - K[:, jc], 2)
        it += 1

    if gap > tol:
        raise ConvergenceError(
            f"SMO did not converge in {max_iter} iterations (KKT violation {gap:.3e})"
        )

    free = (a > eps_b) & (a < C - eps_b)
    if free.any():
        bias = float(-v[free].mean())
    else:
        at_lo = a <= eps_b
        at_hi = a >= C - eps_b
        in_low = np.where(s > 0, ~at_lo, ~at_hi)
        in_up = np.where(s > 0, ~at_hi, ~at_lo)
        lo = v[in_low].max() if in_low.any() else -math.inf
        hi = v[in_up].min() if in_up.any() else math.inf
        bias = float(-(lo + hi) / 2.0)

    objective = float(0.5 * beta @ K @ beta + epsilon * a.sum() - y @ beta)
    keep = np.abs(beta) > 1e-12
    return SvrModel(
        support_latents=X[keep].copy(),
        dual_coeffs=beta[keep].copy(),
        bias=bias,
        kernel=kern,
        epsilon_tube=epsilon,
        C=C,
        input_mean=input_mean,
        input_scale=input_scale,
        fit_info=FitInfo(objective=objective, kkt_gap=max(gap, 0.0), iterations=it, n_train=n),
    )


def predict(svr: SvrModel, z) -> float | np.ndarray:
    """Regression output sum_i beta_i * k(sv_i, z) + bias."""
    Z = np.asarray(z, dtype=float)
    single = Z.ndim == 1
    if single:
        Z = Z[None, :]
    Z = svr.transform(Z)
    if len(svr.dual_coeffs) == 0:
        out = np.full(len(Z), svr.bias)
    else:
        out = _kernel_matrix(Z, svr.support_latents, svr.kernel) @ svr.dual_coeffs + svr.bias
    return float(out[0]) if single else out


@dataclass(frozen=True)
class HmiDecision:
    subject_id: int
    score: float  # predicted speed benefit, m/s
    deploy: bool  # strict: score > 0


class InferenceMode:
    INSTANTANEOUS = "instantaneous"
    WINDOWED_AVERAGE = "windowed"


def decide(svr: SvrModel, z_input, mode: str, subject_id: int = -1) -> HmiDecision:
    """Deployment decision from a latent input.

    ``instantaneous`` expects a single latent vector (or LatentPoint);
    ``windowed`` expects a latent time series and averages it first.
    """
    if mode == InferenceMode.INSTANTANEOUS:
        z = np.asarray(getattr(z_input, "z", z_input), dtype=float)
        if z.ndim != 1:
            raise ValueError("instantaneous mode takes a single latent vector")
    elif mode == InferenceMode.WINDOWED_AVERAGE:
        series = np.asarray(z_input, dtype=float)
        if series.ndim != 2 or len(series) == 0:
            raise ValueError("windowed mode takes a non-empty latent series")
        z = series.mean(axis=0)
    else:
        raise ValueError(f"unknown inference mode {mode!r}")
    score = float(predict(svr, z))
    return HmiDecision(subject_id=subject_id, score=score, deploy=score > 0.0)


# ---------------------------------------------------------------------------
# persistence

SVR_FORMAT_VERSION = 1


def svr_to_json(svr: SvrModel) -> str:
    return json.dumps(
        {
            "format_version": SVR_FORMAT_VERSION,
            "support_latents": svr.support_latents.tolist(),
            "dual_coeffs": svr.dual_coeffs.tolist(),
            "bias": svr.bias,
            "kernel": {"degree": svr.kernel.degree, "gamma": svr.kernel.gamma, "coef0": svr.kernel.coef0},
            "epsilon_tube": svr.epsilon_tube,
            "C": svr.C,
            "input_mean": None if svr.input_mean is None else svr.input_mean.tolist(),
            "input_scale": None if svr.input_scale is None else svr.input_scale.tolist(),
        },
        sort_keys=True,
    )


def svr_from_json(text: str) -> SvrModel:
    raw = json.loads(text)
    if raw["format_version"] != SVR_FORMAT_VERSION:
        raise ValueError(f"unsupported SVR format version {raw['format_version']}")
    return SvrModel(
        support_latents=np.array(raw["support_latents"], dtype=float).reshape(len(raw["dual_coeffs"]), -1),
        dual_coeffs=np.array(raw["dual_coeffs"], dtype=float),
        bias=raw["bias"],
        kernel=KernelParams(**raw["kernel"]),
        epsilon_tube=raw["epsilon_tube"],
        C=raw["C"],
        input_mean=None if raw.get("input_mean") is None else np.array(raw["input_mean"]),
        input_scale=None if raw.get("input_scale") is None else np.array(raw["input_scale"]),
    )
