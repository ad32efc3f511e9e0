"""Leave-one-out evaluation of the latent encoder and decision model.

For every (held-out subject, seed) pair an encoder is trained and an SVR
fitted on the remaining subjects only; the held-out subject never touches
training data, normalization statistics, or the SVR fit. Fold results are
aggregated into a five-row decision-rule table (fixed rules, a random
rule, and the two latent inference modes), an embedding-separation score
per cognitive factor, and policy-conditioned yellow-light speeds.
"""

from __future__ import annotations

import dataclasses
import json
import math
import multiprocessing
from dataclasses import dataclass

import numpy as np

from . import __version__
from .config import RunConfig
from .encoder import (
    EncoderModel,
    corpus_arrays,
    encode_corpus,
    encode_streaming,
    moving_average,
    train,
)
from .simulator import FACTOR_NAMES, FactorVector, Trajectory
from .snippets import (
    CoverageError,
    Snippet,
    batch_normalize_factors,
    decision_targets,
    extract_corpus,
    filter_min_exposure,
    subject_behavior_table,
    yellow_speed_stats,
)
from .svr import SvrModel, fit_svr, predict

RULE_NO_HMI = "No-HMI"
RULE_ALWAYS_HMI = "Always-HMI"
RULE_RANDOM = "Random"
RULE_WINDOWED = "Window-Averaged"
RULE_INSTANT = "Instantaneous"
ALL_RULES = (RULE_NO_HMI, RULE_ALWAYS_HMI, RULE_RANDOM, RULE_WINDOWED, RULE_INSTANT)


class UndefinedClassError(ValueError):
    """A metric needs both classes present in the ground truth."""


class InsufficientSupportError(ValueError):
    """A group has too few points to fit a distribution."""


class FoldError(RuntimeError):
    """A cross-validation fold failed; completed folds are preserved."""

    def __init__(self, held_out: int, seed: int, message: str, partial: list):
        super().__init__(f"fold (seed={seed}, held_out={held_out}) failed: {message}")
        self.held_out = held_out
        self.seed = seed
        self.message = message
        self.partial = partial


# ---------------------------------------------------------------------------
# metrics


def cohens_kappa(predicted, actual) -> float:
    p = np.asarray(predicted, dtype=bool)
    a = np.asarray(actual, dtype=bool)
    if len(p) != len(a) or len(p) == 0:
        raise ValueError("predicted and actual must have equal nonzero length")
    p_o = float(np.mean(p == a))
    pm, am = float(np.mean(p)), float(np.mean(a))
    p_e = pm * am + (1 - pm) * (1 - am)
    if p_e >= 1.0 - 1e-15:
        return 0.0
    return (p_o - p_e) / (1.0 - p_e)


def balanced_accuracy(predicted, actual) -> float:
    p = np.asarray(predicted, dtype=bool)
    a = np.asarray(actual, dtype=bool)
    if len(p) != len(a) or len(p) == 0:
        raise ValueError("predicted and actual must have equal nonzero length")
    if a.all() or not a.any():
        raise UndefinedClassError("balanced accuracy needs both classes in actual")
    tpr = float(np.mean(p[a]))
    tnr = float(np.mean(~p[~a]))
    return 0.5 * (tpr + tnr)


def _diag_gauss_kl(m1, v1, m2, v2) -> float:
    return float(0.5 * np.sum(v1 / v2 + (m2 - m1) ** 2 / v2 - 1.0 + np.log(v2 / v1)))


def normalized_kl(latents: np.ndarray, subjects: np.ndarray, factor_by_subject: dict[int, float]) -> float:
    """Embedding separation for one cognitive factor.

    Subjects are split at the factor median; a diagonal Gaussian is fitted
    to each group's pooled latents and the symmetric KL between the two is
    normalized by the same score for two unit-covariance Normals one unit
    apart (which is exactly 1).
    """
    latents = np.asarray(latents, dtype=float)
    subjects = np.asarray(subjects)
    sids = sorted(factor_by_subject)
    if len(sids) < 4:
        raise InsufficientSupportError("need at least 4 subjects for a median split")
    values = np.array([factor_by_subject[s] for s in sids])
    med = float(np.median(values))
    low = {s for s, v in zip(sids, values) if v <= med}
    high = {s for s, v in zip(sids, values) if v > med}
    if len(low) < 2 or len(high) < 2:
        raise InsufficientSupportError("median split left fewer than 2 subjects per side")
    mask_low = np.isin(subjects, list(low))
    mask_high = np.isin(subjects, list(high))
    if mask_low.sum() < 2 or mask_high.sum() < 2:
        raise InsufficientSupportError("fewer than 2 latent points on one side of the split")
    zl, zh = latents[mask_low], latents[mask_high]
    ml, vl = zl.mean(axis=0), np.maximum(zl.var(axis=0), 1e-6)
    mh, vh = zh.mean(axis=0), np.maximum(zh.var(axis=0), 1e-6)
    sym = _diag_gauss_kl(ml, vl, mh, vh) + _diag_gauss_kl(mh, vh, ml, vl)
    return sym / 1.0  # normalizer: N(0, I) vs N(e1, I)


def pearson_r(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sx, sy = x.std(), y.std()
    if sx < 1e-12 or sy < 1e-12:
        return math.nan
    return float(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy))


def correlation_report(
    dataset: list[Trajectory], factors: dict[int, FactorVector]
) -> dict[tuple[str, str], float]:
    """Pearson r between each factor and each per-subject behavior statistic."""
    if len(factors) < 3:
        raise ValueError("need at least 3 subjects")
    table = subject_behavior_table(dataset)
    sids = sorted(table)
    stats = ("mean_speed_yellow", "max_speed_yellow", "min_speed_yellow", "std_speed_yellow")
    out: dict[tuple[str, str], float] = {}
    for fname in FACTOR_NAMES:
        fvals = [getattr(factors[s], fname) for s in sids]
        for sname in stats:
            svals = [getattr(table[s], sname) for s in sids]
            out[(fname, sname)] = pearson_r(fvals, svals)
    return out


# ---------------------------------------------------------------------------
# decision rules and policy speeds


def random_decision(seed: int, subject_id: int) -> bool:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 17, int(subject_id)]))
    return bool(rng.random() < 0.5)


def baseline_rules(subjects: list[int], seed: int) -> dict[str, dict[int, bool]]:
    return {
        RULE_NO_HMI: {s: False for s in subjects},
        RULE_ALWAYS_HMI: {s: True for s in subjects},
        RULE_RANDOM: {s: random_decision(seed, s) for s in subjects},
    }


def _subject_condition_speeds(dataset: list[Trajectory]) -> dict[int, dict[bool, list[float]]]:
    per: dict[int, dict[bool, list[float]]] = {}
    for traj in dataset:
        per.setdefault(traj.subject_id, {True: [], False: []})[
            traj.hmi_condition.active_condition
        ].append(yellow_speed_stats(traj).mean_speed_yellow)
    return per


def policy_speed(
    dataset: list[Trajectory], decisions: dict[int, bool], rule_name: str = ""
) -> tuple[float, float]:
    """Across-subject mean and standard error of yellow speed on matched laps."""
    per = _subject_condition_speeds(dataset)
    vals = []
    for sid, decision in sorted(decisions.items()):
        if sid not in per:
            raise CoverageError(f"{rule_name or 'rule'}: no laps for subject {sid}")
        matched = per[sid][bool(decision)]
        if not matched:
            raise CoverageError(
                f"{rule_name or 'rule'}: subject {sid} has no laps matching decision {decision}"
            )
        vals.append(float(np.mean(matched)))
    arr = np.array(vals)
    se = float(arr.std(ddof=1) / np.sqrt(len(arr))) if len(arr) > 1 else 0.0
    return float(arr.mean()), se


# ---------------------------------------------------------------------------
# leave-one-out harness


@dataclass
class FoldResult:
    held_out_subject: int
    seed: int
    normalized_kl: dict[str, float]
    # kappa and balanced accuracy are undefined for a single held-out
    # subject; they are computed across folds during aggregation
    kappa: float
    balanced_accuracy: float
    policy_speeds: dict[str, tuple[float, float]]
    decision_windowed: bool
    decision_instantaneous: bool
    score_windowed: float
    score_instantaneous: float
    actual_deploy: bool
    delta_speed: float
    train_loss_trace: list[float]
    held_latents_windowed: list[list[float]]
    stream_decision: bool | None = None
    stream_score: float | None = None
    stream_agreement: float | None = None


@dataclass
class RuleRow:
    rule: str
    mean_speed: float
    standard_error: float
    kappa: float
    balanced_accuracy: float


@dataclass
class EvalReport:
    rows: list[RuleRow]
    kl_table: dict[str, float]
    fold_count: int
    seeds: tuple[int, ...]
    config_hash: str
    version: str = ""
    stream_rows: list[RuleRow] | None = None
    stream_agreement: float | None = None

    def row(self, rule: str, stream: bool = False) -> RuleRow:
        rows = self.stream_rows if stream else self.rows
        for r in rows or []:
            if r.rule == rule:
                return r
        raise KeyError(rule)


def fold_train_seed(eval_seed: int, subject_id: int) -> int:
    ss = np.random.SeedSequence([int(eval_seed), 23, int(subject_id)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _factor_matrix(factors: dict[int, FactorVector], sids: list[int]) -> np.ndarray:
    return np.stack([factors[s].as_array() for s in sids])


def _decision_latents(model: EncoderModel, snips: list[Snippet]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    X, _, subjects = corpus_arrays(snips, model.hyper.include_prev_action)
    z_inst = encode_corpus(model, X, mode="instantaneous")
    z_win = encode_corpus(model, X, mode="windowed")
    return z_inst, z_win, subjects


def run_fold(
    dataset: list[Trajectory],
    factors: dict[int, FactorVector],
    cfg: RunConfig,
    held_out: int,
    seed: int,
    streaming: bool = False,
) -> FoldResult:
    """Train on everyone but ``held_out`` and evaluate the withheld subject."""
    rate = dataset[0].sample_rate
    ctx = cfg.hyper.context_len(rate)
    dcfg = cfg.dataset

    train_trajs = [t for t in dataset if t.subject_id != held_out]
    held_trajs = [t for t in dataset if t.subject_id == held_out]
    if not held_trajs:
        raise CoverageError(f"held-out subject {held_out} not in dataset")
    train_sids = sorted({t.subject_id for t in train_trajs})

    y_raw = _factor_matrix(factors, train_sids)
    y_norm = batch_normalize_factors(y_raw, names=FACTOR_NAMES)
    y_by_sid = {s: y_norm[k] for k, s in enumerate(train_sids)}

    enc_corpus = extract_corpus(train_trajs, ctx, dcfg.encoder_hop, dcfg.encoder_span)
    model, history = train(enc_corpus, y_by_sid, cfg.hyper, rate, fold_train_seed(seed, held_out))

    dec_train = filter_min_exposure(
        extract_corpus(train_trajs, ctx, dcfg.decision_hop, dcfg.decision_span),
        dcfg.min_exposure_s,
    )
    targets = {t.subject_id: t.delta_speed for t in decision_targets(train_trajs)}
    z_inst, z_win, subj_train = _decision_latents(model, dec_train)
    t_vec = np.array([targets[int(s)] for s in subj_train])
    svr_kw = dict(
        C=cfg.svr.C, epsilon=cfg.svr.epsilon, gamma=cfg.svr.gamma,
        coef0=cfg.svr.coef0, degree=cfg.svr.degree, tol=cfg.svr.tol,
        max_iter=cfg.svr.max_iter, standardize_inputs=True,
    )
    svr_inst = fit_svr(z_inst, t_vec, **svr_kw)
    svr_win = fit_svr(z_win, t_vec, **svr_kw)

    # embedding separation, on training-side latents only
    kl_latents = z_win if cfg.eval.kl_latent_mode == "windowed" else z_inst
    kl_table = {}
    for fname in FACTOR_NAMES:
        vals = {s: getattr(factors[s], fname) for s in train_sids}
        kl_table[fname] = normalized_kl(kl_latents, subj_train, vals)

    # held-out evaluation
    dec_held = filter_min_exposure(
        extract_corpus(held_trajs, ctx, dcfg.decision_hop, dcfg.decision_span),
        dcfg.min_exposure_s,
    )
    if not dec_held:
        raise CoverageError(f"held-out subject {held_out} has no admissible decision snippets")
    zh_inst, zh_win, _ = _decision_latents(model, dec_held)
    score_inst = float(np.mean(predict(svr_inst, zh_inst)))
    score_win = float(np.mean(predict(svr_win, zh_win)))

    held_targets = decision_targets(held_trajs)
    delta = held_targets[0].delta_speed
    actual = held_targets[0].deploy

    decisions = {
        RULE_NO_HMI: False,
        RULE_ALWAYS_HMI: True,
        RULE_RANDOM: random_decision(seed, held_out),
        RULE_WINDOWED: score_win > 0.0,
        RULE_INSTANT: score_inst > 0.0,
    }
    per_cond = _subject_condition_speeds(held_trajs)[held_out]
    speeds: dict[str, tuple[float, float]] = {}
    for rule, d in decisions.items():
        matched = np.array(per_cond[bool(d)])
        se = float(matched.std(ddof=1) / np.sqrt(len(matched))) if len(matched) > 1 else 0.0
        speeds[rule] = (float(matched.mean()), se)

    stream_decision = stream_score = stream_agreement = None
    if streaming:
        stream_score, stream_agreement = _stream_subject_score(
            model, svr_win, held_trajs, dec_held, zh_win, cfg.eval.smoothing_window_s
        )
        stream_decision = stream_score > 0.0

    return FoldResult(
        held_out_subject=held_out,
        seed=seed,
        normalized_kl=kl_table,
        kappa=math.nan,
        balanced_accuracy=math.nan,
        policy_speeds=speeds,
        decision_windowed=decisions[RULE_WINDOWED],
        decision_instantaneous=decisions[RULE_INSTANT],
        score_windowed=score_win,
        score_instantaneous=score_inst,
        actual_deploy=actual,
        delta_speed=delta,
        train_loss_trace=[float(v) for v in history.total],
        held_latents_windowed=[[float(a), float(b)] for a, b in zh_win],
        stream_decision=stream_decision,
        stream_score=stream_score,
        stream_agreement=stream_agreement,
    )


def _lap_features(traj: Trajectory, include_prev_action: bool) -> np.ndarray:
    light = traj.light_state.astype(float) / 2.0
    cols = [
        traj.speed.astype(float),
        traj.dist_entry.astype(float),
        traj.dist_exit.astype(float),
        light,
        traj.hmi_active.astype(float),
    ]
    if include_prev_action:
        prev = np.empty(len(traj))
        prev[0] = 0.0
        prev[1:] = traj.actions[:-1]
        cols.append(prev)
    return np.column_stack(cols)


def _stream_subject_score(
    model: EncoderModel,
    svr_win: SvrModel,
    held_trajs: list[Trajectory],
    dec_held: list[Snippet],
    zh_win: np.ndarray,
    smoothing_window_s: float,
) -> tuple[float, float]:
    """Streaming score for one subject plus agreement with batch decisions.

    Whole laps are fed through the encoder with retained state, the
    per-step latent series is smoothed with a trailing moving average, and
    a score is read at the same window endpoints the batch pipeline used.
    Agreement is the fraction of transitions where the two pipelines issue
    the same deploy decision.
    """
    # batch scores per (lap, transition)
    batch_scores: dict[tuple[int, int], list[float]] = {}
    preds = predict(svr_win, zh_win)
    for snip, sc in zip(dec_held, np.atleast_1d(preds)):
        batch_scores.setdefault((snip.lap_id, snip.transition_index), []).append(float(sc))

    smoothed_by_lap: dict[int, np.ndarray] = {}
    for traj in held_trajs:
        mu = encode_streaming(model, _lap_features(traj, model.hyper.include_prev_action))
        smoothed_by_lap[traj.lap_id] = moving_average(mu, smoothing_window_s, traj.sample_rate)
    stream_scores: dict[tuple[int, int], list[float]] = {}
    for snip in dec_held:
        z = smoothed_by_lap[snip.lap_id][snip.last_index]
        stream_scores.setdefault((snip.lap_id, snip.transition_index), []).append(
            float(predict(svr_win, z))
        )

    agree = []
    all_stream = []
    for key, b_scores in batch_scores.items():
        s_scores = stream_scores[key]
        agree.append((np.mean(b_scores) > 0) == (np.mean(s_scores) > 0))
        all_stream.extend(s_scores)
    return float(np.mean(all_stream)), float(np.mean(agree))


def _fold_task(args):
    dataset, factors, cfg, held, seed, streaming = args
    try:
        return ("ok", run_fold(dataset, factors, cfg, held, seed, streaming))
    except Exception as exc:  # collected so finished folds survive a bad one
        return ("err", (held, seed, f"{type(exc).__name__}: {exc}"))


def loocv(
    dataset: list[Trajectory],
    factors: dict[int, FactorVector],
    cfg: RunConfig,
    streaming: bool = False,
) -> list[FoldResult]:
    """One fold per (seed, subject); parallelism never changes the results."""
    sids = sorted({t.subject_id for t in dataset})
    if len(sids) < 3:
        raise ValueError("leave-one-out needs at least 3 subjects")
    tasks = [
        (dataset, factors, cfg, held, seed, streaming)
        for seed in cfg.eval.seeds
        for held in sids
    ]
    jobs = max(int(cfg.eval.jobs), 1)
    if jobs == 1:
        outcomes = [_fold_task(t) for t in tasks]
    else:
        method = "fork" if "fork" in multiprocessing.get_all_start_methods() else "spawn"
        with multiprocessing.get_context(method).Pool(processes=jobs) as pool:
            outcomes = pool.map(_fold_task, tasks)
    results = [r for tag, r in outcomes if tag == "ok"]
    results.sort(key=lambda r: (r.seed, r.held_out_subject))
    errors = [r for tag, r in outcomes if tag == "err"]
    if errors:
        held, seed, msg = errors[0]
        raise FoldError(held, seed, msg, partial=results)
    return results


def aggregate_report(
    dataset: list[Trajectory],
    folds: list[FoldResult],
    cfg: RunConfig,
    streaming: bool = False,
) -> EvalReport:
    """Collapse fold results into the five-row decision-rule table."""
    seeds = tuple(sorted({f.seed for f in folds}))
    sids = sorted({f.held_out_subject for f in folds})
    actual = {f.held_out_subject: f.actual_deploy for f in folds}

    def seed_metrics(decider) -> tuple[float, float]:
        ks, bas = [], []
        for seed in seeds:
            sub = {f.held_out_subject: decider(f) for f in folds if f.seed == seed}
            pred = [sub[s] for s in sids]
            act = [actual[s] for s in sids]
            ks.append(cohens_kappa(pred, act))
            bas.append(balanced_accuracy(pred, act))
        return float(np.mean(ks)), float(np.mean(bas))

    def seed_speeds(decider) -> tuple[float, float]:
        means, ses = [], []
        for seed in seeds:
            decisions = {f.held_out_subject: decider(f) for f in folds if f.seed == seed}
            m, se = policy_speed(dataset, decisions)
            means.append(m)
            ses.append(se)
        return float(np.mean(means)), float(np.mean(ses))

    deciders = {
        RULE_NO_HMI: lambda f: False,
        RULE_ALWAYS_HMI: lambda f: True,
        RULE_RANDOM: lambda f: random_decision(f.seed, f.held_out_subject),
        RULE_WINDOWED: lambda f: f.decision_windowed,
        RULE_INSTANT: lambda f: f.decision_instantaneous,
    }
    rows = []
    for rule in ALL_RULES:
        k, ba = seed_metrics(deciders[rule])
        m, se = seed_speeds(deciders[rule])
        rows.append(RuleRow(rule, m, se, k, ba))

    kl_table = {
        name: float(np.mean([f.normalized_kl[name] for f in folds])) for name in FACTOR_NAMES
    }
    report = EvalReport(
        rows=rows,
        kl_table=kl_table,
        fold_count=len(folds),
        seeds=seeds,
        config_hash=cfg.content_hash(),
        version=f"driverlatent-{__version__}+cfg.{cfg.content_hash()}",
    )
    if streaming:
        stream_deciders = dict(deciders)
        stream_deciders[RULE_WINDOWED] = lambda f: bool(f.stream_decision)
        stream_deciders[RULE_INSTANT] = lambda f: f.decision_instantaneous
        srows = []
        for rule in ALL_RULES:
            k, ba = seed_metrics(stream_deciders[rule])
            m, se = seed_speeds(stream_deciders[rule])
            srows.append(RuleRow(rule, m, se, k, ba))
        report.stream_rows = srows
        agreements = [f.stream_agreement for f in folds if f.stream_agreement is not None]
        report.stream_agreement = float(np.mean(agreements)) if agreements else None
    return report


# ---------------------------------------------------------------------------
# single-model streaming evaluation


def sequential_stream_eval(
    dataset: list[Trajectory],
    model: EncoderModel,
    svr: SvrModel,
    cfg: RunConfig,
    smoothing_window_s: float | None = None,
) -> EvalReport:
    """Streaming-inference analog of the decision table for one trained model.

    Every lap is fed sample-by-sample through the encoder (state retained
    across the lap); the smoothed latent series is scored at each
    transition's admissible window endpoints and per-subject decisions come
    from the mean transition score.
    """
    window = smoothing_window_s if smoothing_window_s is not None else cfg.eval.smoothing_window_s
    rate = dataset[0].sample_rate
    ctx = cfg.hyper.context_len(rate)
    dcfg = cfg.dataset
    sids = sorted({t.subject_id for t in dataset})
    labels = {t.subject_id: t.deploy for t in decision_targets(dataset)}

    by_subject: dict[int, list[Trajectory]] = {}
    for t in dataset:
        by_subject.setdefault(t.subject_id, []).append(t)

    decisions_stream: dict[int, bool] = {}
    agreements: list[float] = []
    for sid in sids:
        trajs = by_subject[sid]
        dec = filter_min_exposure(
            extract_corpus(trajs, ctx, dcfg.decision_hop, dcfg.decision_span),
            dcfg.min_exposure_s,
        )
        if not dec:
            raise CoverageError(f"subject {sid} has no admissible decision snippets")
        _, zw, _ = _decision_latents(model, dec)
        score, agree = _stream_subject_score(model, svr, trajs, dec, zw, window)
        decisions_stream[sid] = score > 0.0
        agreements.append(agree)

    seed = cfg.eval.seeds[0]
    rule_decisions = baseline_rules(sids, seed)
    rule_decisions[RULE_WINDOWED] = decisions_stream

    rows = []
    for rule in (RULE_NO_HMI, RULE_ALWAYS_HMI, RULE_RANDOM, RULE_WINDOWED):
        d = rule_decisions[rule]
        m, se = policy_speed(dataset, d, rule)
        pred = [d[s] for s in sids]
        act = [labels[s] for s in sids]
        rows.append(RuleRow(rule, m, se, cohens_kappa(pred, act), balanced_accuracy(pred, act)))
    return EvalReport(
        rows=rows,
        kl_table={},
        fold_count=len(sids),
        seeds=(seed,),
        config_hash=cfg.content_hash(),
        version=f"driverlatent-{__version__}+cfg.{cfg.content_hash()}",
        stream_agreement=float(np.mean(agreements)),
    )


# ---------------------------------------------------------------------------
# report serialization


def report_to_csv(rows: list[RuleRow]) -> str:
    lines = ["rule,mean_yellow_speed,standard_error,kappa,balanced_accuracy"]
    for r in rows:
        lines.append(
            f"{r.rule},{r.mean_speed!r},{r.standard_error!r},{r.kappa!r},{r.balanced_accuracy!r}"
        )
    return "\n".join(lines) + "\n"


def report_to_json(report: EvalReport, folds: list[FoldResult] | None = None) -> str:
    payload = {
        "version": report.version,
        "config_hash": report.config_hash,
        "seeds": list(report.seeds),
        "fold_count": report.fold_count,
        "rules": [dataclasses.asdict(r) for r in report.rows],
        "kl_table": report.kl_table,
        "stream_rules": [dataclasses.asdict(r) for r in report.stream_rows] if report.stream_rows else None,
        "stream_agreement": report.stream_agreement,
    }
    if folds is not None:
        payload["folds"] = [_fold_to_dict(f) for f in folds]
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=True)


def _fold_to_dict(f: FoldResult) -> dict:
    d = dataclasses.asdict(f)
    d["kappa"] = None if math.isnan(f.kappa) else f.kappa
    d["balanced_accuracy"] = None if math.isnan(f.balanced_accuracy) else f.balanced_accuracy
    return d


def latent_scatter_csv(folds: list[FoldResult], factors: dict[int, FactorVector]) -> str:
    """Held-out latents of the first seed, one row per decision snippet."""
    if not folds:
        return "subject_id,z0,z1,urgency,fun_seeking,go_rt,violations,deploy\n"
    first_seed = min(f.seed for f in folds)
    lines = ["subject_id,z0,z1,urgency,fun_seeking,go_rt,violations,deploy"]
    for f in folds:
        if f.seed != first_seed:
            continue
        fv = factors[f.held_out_subject]
        for z0, z1 in f.held_latents_windowed:
            lines.append(
                f"{f.held_out_subject},{z0!r},{z1!r},{fv.urgency!r},{fv.fun_seeking!r},"
                f"{fv.go_rt!r},{fv.violations!r},{int(f.decision_windowed)}"
            )
    return "\n".join(lines) + "\n"
