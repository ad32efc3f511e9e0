"""Recurrent latent-trait encoder trained with a contrastive objective.

A single-layer LSTM reads a standardized driving-history window (state
features plus previous action per step); its final hidden state feeds two
linear heads producing the mean and log-variance of a low-dimensional
latent, and a linear decoder predicts the window's last action from the
latent. Training minimizes

    alpha1 * L1 (action reconstruction)
  + alpha2 * L2 (pairwise contrastive loss on factor targets)
  + alpha3 * L3 (KL regularizer toward the unit normal)

with Adam. The forward pass, backpropagation through time, and the
optimizer are implemented directly in numpy in double precision so the
analytic gradients can be verified against central finite differences
(``grad_check``).
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .config import Hyperparams
from .snippets import Snippet

FORMAT_VERSION = 1
MAGIC = b"DLAT"

#: serialization order of the parameter arrays
PARAM_ORDER = ("W_x", "W_h", "b", "W_mu", "b_mu", "W_lv", "b_lv", "W_dec", "b_dec")

FEATURES_WITH_ACTION = ("speed", "dist_entry", "dist_exit", "light", "hmi_active", "prev_action")


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass
class FeatureStats:
    mean: np.ndarray  # (F,)
    std: np.ndarray  # (F,), floored at 1e-6


@dataclass
class EncoderModel:
    params: dict[str, np.ndarray]
    hyper: Hyperparams
    stats: FeatureStats
    sample_rate: float
    seed: int

    @property
    def n_features(self) -> int:
        return self.params["W_x"].shape[0]

    @property
    def hidden(self) -> int:
        return self.params["W_h"].shape[0]

    @property
    def latent_dim(self) -> int:
        return self.params["W_mu"].shape[1]

    @property
    def context_len(self) -> int:
        return self.hyper.context_len(self.sample_rate)


@dataclass
class LatentPoint:
    mu: np.ndarray
    logvar: np.ndarray
    z: np.ndarray
    subject_id: int = -1
    snippet_index: int = -1


@dataclass
class TrainingBatch:
    """Standardized features, raw action targets, normalized factor targets."""

    X: np.ndarray  # (B, T, F)
    actions: np.ndarray  # (B,)
    y: np.ndarray  # (B, K)


@dataclass
class TrainingHistory:
    epochs: list[int] = field(default_factory=list)
    l1: list[float] = field(default_factory=list)
    l2: list[float] = field(default_factory=list)
    l3: list[float] = field(default_factory=list)
    total: list[float] = field(default_factory=list)

    def append(self, epoch: int, l1: float, l2: float, l3: float, total: float) -> None:
        self.epochs.append(int(epoch))
        self.l1.append(float(l1))
        self.l2.append(float(l2))
        self.l3.append(float(l3))
        self.total.append(float(total))

    def to_csv(self) -> str:
        lines = ["epoch,L1,L2,L3,total"]
        for e, a, b, c, d in zip(self.epochs, self.l1, self.l2, self.l3, self.total):
            lines.append(f"{e},{a!r},{b!r},{c!r},{d!r}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# features


def snippet_features(snippet: Snippet, include_prev_action: bool = True) -> np.ndarray:
    """Raw per-step feature matrix (T, F) for one snippet."""
    T = len(snippet)
    light = snippet.light_state.astype(float) / 2.0  # {0, 0.5, 1}
    cols = [
        snippet.speed.astype(float),
        snippet.dist_entry.astype(float),
        snippet.dist_exit.astype(float),
        light,
        snippet.hmi_active.astype(float),
    ]
    if include_prev_action:
        prev = np.empty(T)
        prev[0] = snippet.prev_action0
        prev[1:] = snippet.actions[:-1]
        cols.append(prev)
    return np.column_stack(cols)


def corpus_arrays(
    snippets: list[Snippet], include_prev_action: bool = True
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack a snippet list into (X, last-step actions, subject ids)."""
    if not snippets:
        raise ValueError("empty snippet corpus")
    X = np.stack([snippet_features(s, include_prev_action) for s in snippets])
    actions = np.array([float(s.actions[-1]) for s in snippets])
    subjects = np.array([s.subject_id for s in snippets], dtype=int)
    return X, actions, subjects


def compute_feature_stats(X: np.ndarray) -> FeatureStats:
    flat = X.reshape(-1, X.shape[-1])
    return FeatureStats(
        mean=flat.mean(axis=0), std=np.maximum(flat.std(axis=0), 1e-6)
    )


def standardize(X: np.ndarray, stats: FeatureStats) -> np.ndarray:
    return (X - stats.mean) / stats.std


# ---------------------------------------------------------------------------
# model construction and forward pass


def init_model(
    hyper: Hyperparams,
    stats: FeatureStats,
    sample_rate: float,
    seed: int,
) -> EncoderModel:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 7]))
    F = len(stats.mean)
    H, D = hyper.hidden, hyper.latent_dim
    k = 1.0 / np.sqrt(H)
    params = {
        "W_x": rng.uniform(-k, k, size=(F, 4 * H)),
        "W_h": rng.uniform(-k, k, size=(H, 4 * H)),
        "b": np.zeros(4 * H),
        "W_mu": rng.uniform(-k, k, size=(H, D)),
        "b_mu": np.zeros(D),
        "W_lv": rng.uniform(-k, k, size=(H, D)),
        "b_lv": np.zeros(D),
        "W_dec": rng.uniform(-1.0, 1.0, size=D) / np.sqrt(D),
        "b_dec": np.zeros(1),
    }
    params["b"][H : 2 * H] = 1.0  # forget-gate bias, standard initialization
    return EncoderModel(params=params, hyper=hyper, stats=stats, sample_rate=sample_rate, seed=seed)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # sigmoid(x) = (1 + tanh(x/2)) / 2, stable for any x
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def _lstm_forward(params: dict, X: np.ndarray, h0=None, c0=None, keep_cache: bool = True):
    """Run the LSTM over X (B, T, F); returns final state and the step cache.

    The cache stores hidden/cell state with a one-slot shift (index t is the
    state *entering* step t) so backpropagation can slice instead of copy.
    """
    B, T, F = X.shape
    H = params["W_h"].shape[0]
    W_h = params["W_h"]
    pre = X.reshape(B * T, F) @ params["W_x"] + params["b"]
    pre = np.ascontiguousarray(pre.reshape(B, T, 4 * H).transpose(1, 0, 2))
    hs = np.zeros((T + 1, B, H), dtype=pre.dtype)
    cs = np.zeros((T + 1, B, H), dtype=pre.dtype)
    if h0 is not None:
        hs[0] = h0
    if c0 is not None:
        cs[0] = c0
    tcs = np.empty((T, B, H), dtype=pre.dtype)
    for t in range(T):
        zb = pre[t]  # activated in place; pre doubles as the gate cache
        zb += hs[t] @ W_h
        zb[:, : 2 * H] = _sigmoid(zb[:, : 2 * H])
        np.tanh(zb[:, 2 * H : 3 * H], out=zb[:, 2 * H : 3 * H])
        zb[:, 3 * H :] = _sigmoid(zb[:, 3 * H :])
        np.multiply(zb[:, H : 2 * H], cs[t], out=cs[t + 1])
        cs[t + 1] += zb[:, :H] * zb[:, 2 * H : 3 * H]
        np.tanh(cs[t + 1], out=tcs[t])
        np.multiply(zb[:, 3 * H :], tcs[t], out=hs[t + 1])
    cache = {"gates": pre, "tc": tcs, "hs": hs, "cs": cs} if keep_cache else None
    return hs[T], cs[T], cache


def _heads(params: dict, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = h @ params["W_mu"] + params["b_mu"]
    logvar = h @ params["W_lv"] + params["b_lv"]
    return mu, logvar


def decoder_mean(model_or_params, z: np.ndarray) -> np.ndarray:
    params = model_or_params.params if isinstance(model_or_params, EncoderModel) else model_or_params
    return np.asarray(z) @ params["W_dec"] + params["b_dec"][0]


def encode(
    model: EncoderModel,
    snippet: Snippet,
    deterministic: bool = True,
    rng: np.random.Generator | None = None,
    xi: np.ndarray | None = None,
) -> LatentPoint:
    """Map one snippet to its latent distribution (and a point z)."""
    Xr = snippet_features(snippet, model.hyper.include_prev_action)
    if Xr.shape[0] != model.context_len:
        raise ValueError(
            f"snippet length {Xr.shape[0]} != model context length {model.context_len}"
        )
    Xs = standardize(Xr, model.stats)[None, :, :]
    h, _, _ = _lstm_forward(model.params, Xs, keep_cache=False)
    mu, logvar = _heads(model.params, h)
    mu, logvar = mu[0], logvar[0]
    if deterministic:
        z = mu.copy()
    else:
        if xi is None:
            if rng is None:
                raise ValueError("sampling encode needs rng or xi")
            xi = rng.standard_normal(mu.shape)
        z = mu + np.exp(0.5 * logvar) * xi
    return LatentPoint(mu=mu, logvar=logvar, z=z, subject_id=snippet.subject_id)


def encode_corpus(
    model: EncoderModel, X_raw: np.ndarray, mode: str = "instantaneous"
) -> np.ndarray:
    """Deterministic latents for stacked snippets (N, T, F).

    ``instantaneous`` uses the final step's latent mean; ``windowed``
    averages the per-step latent means over the whole window (the heads are
    linear, so this equals the heads applied to the time-averaged hidden
    state).
    """
    Xs = standardize(X_raw, model.stats)
    h_T, _, cache = _lstm_forward(model.params, Xs, keep_cache=(mode == "windowed"))
    if mode == "instantaneous":
        mu, _ = _heads(model.params, h_T)
    elif mode == "windowed":
        mu, _ = _heads(model.params, cache["hs"][1:].mean(axis=0))
    else:
        raise ValueError(f"unknown latent mode {mode!r}")
    return mu


def encode_step_series(model: EncoderModel, X_raw: np.ndarray) -> np.ndarray:
    """Per-step latent means (T, D) for one window (T, F) of raw features."""
    Xs = standardize(X_raw, model.stats)[None, :, :]
    _, _, cache = _lstm_forward(model.params, Xs)
    h_steps = cache["hs"][1:, 0, :]
    mu, _ = _heads(model.params, h_steps)
    return mu


def encode_streaming(model: EncoderModel, X_raw: np.ndarray) -> np.ndarray:
    """Per-step latent means for an arbitrarily long feature sequence.

    The recurrent state is carried across the entire sequence, as it would
    be when running on live data (no window resets).
    """
    Xs = standardize(X_raw, model.stats)[None, :, :]
    _, _, cache = _lstm_forward(model.params, Xs)
    h_steps = cache["hs"][1:, 0, :]
    mu, _ = _heads(model.params, h_steps)
    return mu


def windowed_average_latent(
    z_series: np.ndarray, window_seconds: float, sample_rate: float
) -> np.ndarray:
    """Mean of the trailing ``window_seconds`` of a latent time series."""
    z_series = np.asarray(z_series, dtype=float)
    if z_series.ndim != 2 or len(z_series) == 0:
        raise ValueError("z_series must be a non-empty (n, D) array")
    w = max(int(round(window_seconds * sample_rate)), 1)
    return z_series[-w:].mean(axis=0)


def moving_average(z_series: np.ndarray, window_seconds: float, sample_rate: float) -> np.ndarray:
    """Trailing moving average of a latent series; shorter prefix at the start."""
    z = np.asarray(z_series, dtype=float)
    w = max(int(round(window_seconds * sample_rate)), 1)
    csum = np.cumsum(z, axis=0)
    out = np.empty_like(z)
    for k in range(len(z)):
        lo = max(k - w + 1, 0)
        total = csum[k] - (csum[lo - 1] if lo > 0 else 0.0)
        out[k] = total / (k - lo + 1)
    return out


# ---------------------------------------------------------------------------
# losses


def loss_reconstruction(model_or_params, z: np.ndarray, action) -> np.ndarray:
    """Negative log-likelihood of the action under a unit-variance Gaussian
    decoder, constant dropped: 0.5 * (a - decoder(z))**2."""
    pred = decoder_mean(model_or_params, z)
    return 0.5 * np.square(np.asarray(action) - pred)


def _pair_weights(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise (d, s) matrices: d = squared factor distance, s = max(0, 1 - d)."""
    diff = y[:, None, :] - y[None, :, :]
    d = np.einsum("ijk,ijk->ij", diff, diff)
    s = np.maximum(0.0, 1.0 - d)
    return d, s


def loss_contrastive(z: np.ndarray, y: np.ndarray, epsilon: float) -> float:
    """Mean over unordered batch pairs of s*l^2 + d*max(0, eps - l)^2.

    l is the Euclidean latent distance, d the squared distance between the
    batch-normalized factor targets, and s = max(0, 1 - d) the clamped
    similarity weight.
    """
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    B = len(z)
    if B < 2:
        raise ValueError("contrastive loss needs a batch of at least 2")
    d, s = _pair_weights(y)
    zdiff = z[:, None, :] - z[None, :, :]
    l2 = np.einsum("ijk,ijk->ij", zdiff, zdiff)
    l = np.sqrt(l2)
    hinge = np.maximum(0.0, epsilon - l)
    terms = s * l2 + d * hinge * hinge
    iu = np.triu_indices(B, k=1)
    return float(terms[iu].mean())


def loss_kl(mu, logvar):
    """KL(N(mu, diag exp(logvar)) || N(0, I)), summed over latent dims."""
    mu = np.asarray(mu, dtype=float)
    logvar = np.asarray(logvar, dtype=float)
    per_dim = 0.5 * (mu * mu + np.exp(logvar) - logvar - 1.0)
    return per_dim.sum(axis=-1)


def loss_total(
    model: EncoderModel,
    batch: TrainingBatch,
    hyper: Hyperparams | None = None,
    xi: np.ndarray | None = None,
) -> tuple[float, dict[str, float]]:
    """Combined loss with per-term breakdown (no gradients)."""
    hyper = hyper or model.hyper
    total, parts, _ = _loss_and_grads(model.params, batch, hyper, xi=xi, want_grads=False)
    return total, parts


def _loss_and_grads(
    params: dict,
    batch: TrainingBatch,
    hyper: Hyperparams,
    xi: np.ndarray | None,
    want_grads: bool = True,
):
    """Forward and (optionally) backward pass for one minibatch.

    ``xi`` is the reparameterization noise (B, D); None means deterministic
    z = mu. Returns (total, per-term breakdown, grads or None).
    """
    X, a, y = batch.X, batch.actions, batch.y
    B, T, F = X.shape
    H = params["W_h"].shape[0]
    D = params["W_mu"].shape[1]
    eps = hyper.epsilon_contrastive

    h_T, _, cache = _lstm_forward(params, X, keep_cache=True)
    mu, logvar = _heads(params, h_T)
    z = mu if xi is None else mu + np.exp(0.5 * logvar) * xi

    pred = z @ params["W_dec"] + params["b_dec"][0]
    resid = pred - a
    l1 = float(0.5 * np.mean(resid * resid))

    d, s = _pair_weights(y)
    zdiff = z[:, None, :] - z[None, :, :]
    lsq = np.einsum("ijk,ijk->ij", zdiff, zdiff)
    l = np.sqrt(lsq)
    hinge = np.maximum(0.0, eps - l)
    iu = np.triu_indices(B, k=1)
    n_pairs = len(iu[0])
    l2 = float((s * lsq + d * hinge * hinge)[iu].mean())

    kl_rows = 0.5 * (mu * mu + np.exp(logvar) - logvar - 1.0).sum(axis=1)
    l3 = float(kl_rows.mean())

    total = hyper.alpha1 * l1 + hyper.alpha2 * l2 + hyper.alpha3 * l3
    parts = {"L1": l1, "L2": l2, "L3": l3, "total": total}
    if not want_grads:
        return total, parts, None

    # --- backward ---
    dpred = hyper.alpha1 * resid / B  # (B,)
    dz = np.outer(dpred, params["W_dec"])
    g_W_dec = z.T @ dpred
    g_b_dec = np.array([dpred.sum()])

    # contrastive: dL2/dz_i = (1/P) sum_j 2*s_ij*(z_i - z_j)
    #                       - 2*d_ij*hinge_ij*(z_i - z_j)/l_ij
    safe_l = np.where(l > 1e-12, l, 1.0)
    coef = 2.0 * s - 2.0 * d * hinge / safe_l
    np.fill_diagonal(coef, 0.0)
    dz += (hyper.alpha2 / n_pairs) * np.einsum("ij,ijk->ik", coef, zdiff)

    dmu = dz.copy()
    dlogvar = np.zeros_like(logvar)
    if xi is not None:
        dlogvar += dz * (0.5 * np.exp(0.5 * logvar) * xi)
    dmu += hyper.alpha3 * mu / B
    dlogvar += hyper.alpha3 * 0.5 * (np.exp(logvar) - 1.0) / B

    dh = dmu @ params["W_mu"].T + dlogvar @ params["W_lv"].T
    g_W_mu = h_T.T @ dmu
    g_b_mu = dmu.sum(axis=0)
    g_W_lv = h_T.T @ dlogvar
    g_b_lv = dlogvar.sum(axis=0)

    gates = cache["gates"]
    dZ_all = np.empty((T, B, 4 * H), dtype=gates.dtype)
    dc = np.zeros((B, H), dtype=gates.dtype)
    for t in range(T - 1, -1, -1):
        zb = gates[t]
        i, f, g, o = zb[:, :H], zb[:, H : 2 * H], zb[:, 2 * H : 3 * H], zb[:, 3 * H :]
        tc = cache["tc"][t]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        dZ = dZ_all[t]
        dZ[:, :H] = (dc * g) * i * (1 - i)
        dZ[:, H : 2 * H] = (dc * cache["cs"][t]) * f * (1 - f)
        dZ[:, 2 * H : 3 * H] = (dc * i) * (1 - g * g)
        dZ[:, 3 * H :] = do * o * (1 - o)
        dh = dZ @ params["W_h"].T
        dc = dc * f

    dZ2 = dZ_all.reshape(T * B, 4 * H)
    X_t = np.ascontiguousarray(X.transpose(1, 0, 2)).reshape(T * B, F)
    hp = cache["hs"][:T].reshape(T * B, H)
    grads = {
        "W_x": X_t.T @ dZ2,
        "W_h": hp.T @ dZ2,
        "b": dZ2.sum(axis=0),
        "W_mu": g_W_mu,
        "b_mu": g_b_mu,
        "W_lv": g_W_lv,
        "b_lv": g_b_lv,
        "W_dec": g_W_dec,
        "b_dec": g_b_dec,
    }
    return total, parts, grads


# ---------------------------------------------------------------------------
# training


class Adam:
    """Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, params: dict, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1t = 1.0 - self.b1**self.t
        b2t = 1.0 - self.b2**self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / b1t) / (np.sqrt(self.v[k] / b2t) + self.eps)


def train(
    snippet_corpus: list[Snippet],
    factors_normalized: dict[int, np.ndarray],
    hyper: Hyperparams,
    sample_rate: float,
    seed: int,
) -> tuple[EncoderModel, TrainingHistory]:
    """Train an encoder on a snippet corpus.

    ``factors_normalized`` maps subject id to its batch-normalized factor
    vector. Deterministic for a given seed: initialization, shuffling, and
    reparameterization noise all derive from it.
    """
    X, actions, subjects = corpus_arrays(snippet_corpus, hyper.include_prev_action)
    y = np.stack([factors_normalized[int(s)] for s in subjects])
    stats = compute_feature_stats(X)
    model = init_model(hyper, stats, sample_rate, seed)
    history = TrainingHistory()
    if hyper.epochs == 0:
        return model, history

    # optimization runs in float32 for speed; the shipped parameters and
    # every verification path (grad_check) stay in float64
    Xs = standardize(X, stats).astype(np.float32)
    actions32 = actions.astype(np.float32)
    y32 = y.astype(np.float32)
    params = {k: v.astype(np.float32) for k, v in model.params.items()}

    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 11]))
    opt = Adam(params, lr=hyper.lr)
    n = len(Xs)
    for epoch in range(hyper.epochs):
        order = rng.permutation(n)
        sums = np.zeros(4)
        weight = 0
        for lo in range(0, n, hyper.batch_size):
            idx = order[lo : lo + hyper.batch_size]
            if len(idx) < 2:
                continue  # the contrastive term needs at least one pair
            batch = TrainingBatch(X=Xs[idx], actions=actions32[idx], y=y32[idx])
            xi = None
            if hyper.sample_latent_in_training:
                xi = rng.standard_normal((len(idx), hyper.latent_dim)).astype(np.float32)
            total, parts, grads = _loss_and_grads(params, batch, hyper, xi)
            if not np.isfinite(total):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, batch offset {lo}: {parts}"
                )
            opt.step(params, grads)
            sums += np.array([parts["L1"], parts["L2"], parts["L3"], total]) * len(idx)
            weight += len(idx)
        if weight:
            sums /= weight
        history.append(epoch, sums[0], sums[1], sums[2], sums[3])
    model.params = {k: v.astype(np.float64) for k, v in params.items()}
    return model, history


# ---------------------------------------------------------------------------
# gradient verification


def flatten_params(params: dict) -> np.ndarray:
    return np.concatenate([params[k].ravel() for k in PARAM_ORDER])


def unflatten_params(flat: np.ndarray, like: dict) -> dict:
    out = {}
    pos = 0
    for k in PARAM_ORDER:
        size = like[k].size
        out[k] = flat[pos : pos + size].reshape(like[k].shape).copy()
        pos += size
    return out


def analytic_gradients(model: EncoderModel, batch: TrainingBatch, hyper: Hyperparams, xi) -> dict:
    _, _, grads = _loss_and_grads(model.params, batch, hyper, xi, want_grads=True)
    return grads


def numeric_gradients(
    model: EncoderModel, batch: TrainingBatch, hyper: Hyperparams, xi, step: float = 1e-5
) -> dict:
    """Central finite differences over every parameter (double precision)."""
    base = flatten_params(model.params)
    grad = np.empty_like(base)
    for j in range(len(base)):
        for sgn, slot in ((+1, 0), (-1, 1)):
            theta = base.copy()
            theta[j] += sgn * step
            p = unflatten_params(theta, model.params)
            val, _, _ = _loss_and_grads(p, batch, hyper, xi, want_grads=False)
            if slot == 0:
                up = val
            else:
                down = val
        grad[j] = (up - down) / (2.0 * step)
    return unflatten_params(grad, model.params)


def gradient_error(analytic: dict, numeric: dict) -> float:
    ga = flatten_params(analytic)
    gn = flatten_params(numeric)
    denom = np.maximum(1.0, np.maximum(np.abs(ga), np.abs(gn)))
    return float(np.max(np.abs(ga - gn) / denom))


def grad_check(
    model: EncoderModel,
    batch: TrainingBatch,
    hyper: Hyperparams | None = None,
    step: float = 1e-5,
    seed: int = 0,
) -> float:
    """Max relative error between backprop and finite-difference gradients.

    The reparameterization noise is drawn once and held fixed across all
    finite-difference evaluations so both sides differentiate the same
    function.
    """
    hyper = hyper or model.hyper
    xi = None
    if hyper.sample_latent_in_training:
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 13]))
        xi = rng.standard_normal((len(batch.X), hyper.latent_dim))
    ga = analytic_gradients(model, batch, hyper, xi)
    gn = numeric_gradients(model, batch, hyper, xi, step=step)
    return gradient_error(ga, gn)


# ---------------------------------------------------------------------------
# serialization


def save_model(model: EncoderModel, path: str) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "hyper": {k: getattr(model.hyper, k) for k in (
            "batch_size", "epochs", "epsilon_contrastive", "lr", "alpha1", "alpha2",
            "alpha3", "context_seconds", "hidden", "latent_dim",
            "include_prev_action", "sample_latent_in_training",
        )},
        "feature_mean": model.stats.mean.tolist(),
        "feature_std": model.stats.std.tolist(),
        "sample_rate": model.sample_rate,
        "seed": model.seed,
        "shapes": {k: list(model.params[k].shape) for k in PARAM_ORDER},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for k in PARAM_ORDER:
            fh.write(np.ascontiguousarray(model.params[k], dtype="<f8").tobytes())


def load_model(path: str) -> EncoderModel:
    with open(path, "rb") as fh:
        data = fh.read()
    buf = io.BytesIO(data)
    if buf.read(4) != MAGIC:
        raise ValueError("not an encoder model file")
    (hlen,) = struct.unpack("<I", buf.read(4))
    header = json.loads(buf.read(hlen).decode())
    if header["format_version"] != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {header['format_version']}")
    hyper = Hyperparams(**header["hyper"])
    params = {}
    for k in PARAM_ORDER:
        shape = tuple(header["shapes"][k])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(buf.read(8 * count), dtype="<f8").reshape(shape)
        params[k] = arr.astype(np.float64).copy()
    return EncoderModel(
        params=params,
        hyper=hyper,
        stats=FeatureStats(
            mean=np.array(header["feature_mean"]), std=np.array(header["feature_std"])
        ),
        sample_rate=header["sample_rate"],
        seed=header["seed"],
    )
