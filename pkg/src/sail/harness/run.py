"""The training loop: rollout, TRPO on the learned reward, REPR, then the adversarial step."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import ail
from ..agent import NumericError, collect, make_policy, trpo_update, value_net
from ..diffcore import AdamState, DiffError, ParamSet
from ..diffcore import checkpoint as ckpt
from ..envs import (
    DemonstrationSet,
    MixtureSpec,
    expert_sampler,
    generate_demonstrations,
    label_subset,
    load_demos,
    make_env,
    mix_demonstrations,
    suboptimal_policy,
)
from ..metrics import EvalReport, eval_policy, write_metrics
from ..reprlearn import RepresentationModel, repr_update
from .config import ExperimentConfig

log = logging.getLogger(__name__)

STREAMS = ("env", "policy-init", "corruption", "noise", "mixup", "gmm", "demos", "eval", "value",
           "gail", "classifier")
PHASES = ("rollout", "trpo", "repr", "gail")
LOG_COLUMNS = ("iteration", "mean_return", "surrogate", "kl", "accepted", "cg_residual", "entropy",
               "value_loss", "disc_loss", "mean_D_agent", "mean_D_expert", "mean_reward", "L_F", "L_SC",
               "L_AC", "mode", "eval_mean", "eval_stderr")


class RunAborted(RuntimeError):
    """A module error during training, tagged with where it happened."""

    def __init__(self, iteration: int, phase: str, cause: BaseException):
        super().__init__(f"iteration {iteration}, phase {phase}: {type(cause).__name__}: {cause}")
        self.iteration, self.phase, self.cause = iteration, phase, cause

    @property
    def numeric(self) -> bool:
        return isinstance(self.cause, (NumericError, DiffError, FloatingPointError))


def rng_streams(seed: int) -> dict[str, np.random.Generator]:
    """Named child generators of one master seed; each name owns a fixed spawn slot."""
    return {name: np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
            for i, name in enumerate(STREAMS)}


def gail_mode(algo: str) -> str:
    return {"gail": "plain", "ours": "plain", "ours+2iwil": "weighted", "ours+2iwil+mm": "mixup"}[algo]


# ----------------------------------------------------------------------
# demonstrations


def build_demos(cfg: ExperimentConfig, env, rng: np.random.Generator) -> DemonstrationSet:
    """Load ``run.demos`` or generate: pure expert when ``psi == 1``, else a mixture with n non-experts."""
    r, g = cfg.run, cfg.gail
    if r.demos:
        return load_demos(r.demos, env.spec)
    n = r.n_expert
    optimal = generate_demonstrations(env, expert_sampler(env), n, rng, iid=r.iid_subsample)
    if g.psi == 1.0:
        optimal.seed = r.seed
        return optimal
    subs = [generate_demonstrations(env, suboptimal_policy(env, i), n, rng, iid=r.iid_subsample, source=i)
            for i in range(1, g.n_nonexperts + 1)]
    mixed = mix_demonstrations(optimal, subs, MixtureSpec.uniform(g.psi, g.n_nonexperts), rng, n_pairs=n)
    mixed.seed = r.seed
    return mixed


@dataclass
class ExpertPrep:
    side: ail.ExpertSide
    info: dict = field(default_factory=dict)


def _pair_features(demos: DemonstrationSet, spec) -> np.ndarray:
    if spec.discrete:
        a = np.eye(spec.n_actions)[demos.actions.astype(np.int64).reshape(-1)]
    else:
        a = demos.actions
    return np.concatenate([demos.states, a], axis=1)


def prepare_expert_side(cfg: ExperimentConfig, demos: DemonstrationSet, spec, rngs) -> ExpertPrep:
    """Plain: all pairs unweighted. 2IWIL: classifier confidences. Mixup: plus the GMM split."""
    algo, g = cfg.run.algo, cfg.gail
    if not algo.startswith("ours+2iwil"):
        return ExpertPrep(ail.ExpertSide(demos.states, demos.actions))
    labeled, unlabeled = label_subset(demos, g.labeled_ratio, rngs["classifier"])
    x_l, x_u = _pair_features(labeled, spec), _pair_features(unlabeled, spec)
    predict, _, history = ail.train_classifier(x_l, labeled.confidence, x_u, rngs["classifier"],
                                               steps=g.classifier_steps, lr=g.classifier_lr)
    y_u = predict(x_u)
    states = np.concatenate([labeled.states, unlabeled.states])
    actions = np.concatenate([labeled.actions, unlabeled.actions])
    conf = np.concatenate([labeled.confidence, y_u])
    truth = np.concatenate([labeled.source, unlabeled.source]) == 0
    info = {
        "n_labeled": len(labeled),
        "n_unlabeled": len(unlabeled),
        "beta": str(ail.beta_ratio(len(labeled), len(unlabeled))),
        "epsilon": str(ail.epsilon_ratio(labeled.confidence)) if labeled.confidence.sum() > 0 else "0",
        "classifier_final_risk": history[-1] if history else float("nan"),
    }
    if truth[len(labeled):].any() and not truth[len(labeled):].all():
        info["unlabeled_auc"] = ail.auc(y_u, truth[len(labeled):])
    side = ail.ExpertSide(states, actions, confidence=conf)
    if algo == "ours+2iwil+mm":
        split = ail.gmm_split(conf, rngs["gmm"], threshold=g.gmm_threshold)
        side.optimal_mask = split.optimal_mask
        info.update(gmm_fallback=split.fallback, gmm_optimal=int(split.optimal_mask.sum()))
    return ExpertPrep(side, info)


# ----------------------------------------------------------------------
# run state and logging


@dataclass
class RunResult:
    config: ExperimentConfig
    rows: list[dict]
    evals: list[EvalReport]
    trace: list[tuple[int, str]]
    params: ParamSet
    checkpoint_hash: str | None = None
    log_hash: str | None = None
    manifest: dict = field(default_factory=dict)

    @property
    def final_return(self) -> float:
        """Mean deterministic return over evaluations in the last 10% of iterations."""
        T = self.config.iterations
        cutoff = T - max(1, math.ceil(0.1 * T))
        tail = [e.mean for e in self.evals if e.iteration > cutoff] or [self.evals[-1].mean]
        return float(np.mean(tail))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class _CsvLog:
    def __init__(self, path: Path | None):
        self.path = path
        self._fh = None
        if path is not None:
            self._fh = path.open("w", newline="")
            self._w = csv.writer(self._fh, lineterminator="\n")
            self._w.writerow(LOG_COLUMNS)
            self._fh.flush()

    def write(self, row: dict):
        if self._fh is not None:
            self._w.writerow([_fmt(row.get(c)) for c in LOG_COLUMNS])
            self._fh.flush()

    def close(self):
        if self._fh is not None:
            self._fh.close()


def _atomic_write(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def checkpoint_arrays(policy_params, vparams, rparams, dparams) -> dict[str, np.ndarray]:
    arrays = dict(policy_params)
    arrays.update(vparams)
    if rparams is not None:
        arrays.update(rparams)
    arrays.update(dparams)
    return arrays


# ----------------------------------------------------------------------


def run_training(cfg: ExperimentConfig, out_dir=None, demos: DemonstrationSet | None = None,
                 on_iteration=None) -> RunResult:
    """Train for ``cfg.iterations`` outer iterations.

    Each iteration runs, in order: rollout of ``trpo.batch_steps`` steps,
    TRPO + value fit on ``-log D``, one REPR pass (skipped for ``gail``),
    one adversarial update. With ``out_dir`` the per-iteration CSV is
    appended as it goes (so an aborted run keeps its rows), and the final
    checkpoint plus JSON manifest are written at the end.
    """
    t0 = time.time()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    rngs = rng_streams(cfg.run.seed)
    env = make_env(cfg.run.env)
    spec = env.spec
    if demos is None:
        demos = build_demos(cfg, env, rngs["demos"])
    prep = prepare_expert_side(cfg, demos, spec, rngs)
    mode = gail_mode(cfg.run.algo)
    encoded = cfg.run.algo != "gail"

    policy = make_policy(spec)
    vnet = value_net(spec.state_dim)
    init_rng = rngs["policy-init"]
    params = policy.init(init_rng)
    vparams = vnet.init(init_rng)
    p = cfg.repr
    model = RepresentationModel(spec.state_dim, spec.action_dim, p.state_repr_dim, p.action_repr_dim,
                                p.noise_dim, spec.discrete, spec.n_actions)
    rparams = model.init(init_rng) if encoded else None
    featurizer = ail.Featurizer(model, encoded=encoded, discrete_append_action=cfg.gail.discrete_append_action)
    disc = ail.Discriminator(featurizer.width)
    dparams = disc.init(init_rng)
    vstate = AdamState(lr=cfg.trpo.value_lr)
    rstate = AdamState(lr=p.lr)
    dstate = AdamState(lr=cfg.gail.lr)

    T = cfg.iterations
    rows: list[dict] = []
    evals: list[EvalReport] = []
    trace: list[tuple[int, str]] = []
    csvlog = _CsvLog(out / "log.csv" if out is not None else None)

    def evaluate(k):
        rep = eval_policy(policy, params, env, cfg.run.eval_episodes, rngs["eval"], iteration=k, seed=cfg.run.seed)
        evals.append(rep)
        return rep

    evaluate(0)
    phase = "setup"
    k = 0
    try:
        for k in range(1, T + 1):
            phase = "rollout"
            trace.append((k, phase))
            batch = collect(env, policy, params, cfg.trpo.batch_steps, rngs["env"])
            batch.rewards = ail.disc_reward(disc, dparams, featurizer, rparams, batch.states, batch.actions)

            phase = "trpo"
            trace.append((k, phase))
            params, vparams, info = trpo_update(policy, params, vnet, vparams, vstate, batch, cfg.trpo,
                                                rngs["value"])
            if info.accepted and info.kl > cfg.trpo.max_kl:
                raise NumericError(f"accepted step with KL {info.kl} > {cfg.trpo.max_kl}")

            phase = "repr"
            trace.append((k, phase))
            rdiag = {"L_F": None, "L_SC": None, "L_AC": None}
            if encoded:
                rparams, rdiag = repr_update(model, rparams, rstate, batch.states, batch.actions,
                                             batch.next_states, cfg.corruption, cfg.ssl_weights,
                                             rngs["corruption"], cfg.repr_cfg, noise_rng=rngs["noise"])

            phase = "gail"
            trace.append((k, phase))
            dparams, rparams, gdiag = ail.gail_update(
                disc, dparams, featurizer, rparams, dstate, batch.states, batch.actions, prep.side, mode,
                rngs["mixup"] if mode == "mixup" else rngs["gail"], alpha=cfg.gail.alpha)

            phase = "eval"
            rep = evaluate(k) if (k % cfg.run.eval_every == 0 or k == T) else None
            row = {
                "iteration": k,
                "mean_return": float(np.mean(batch.episode_returns)) if len(batch.episode_returns) else None,
                "surrogate": info.surrogate, "kl": info.kl, "accepted": info.accepted,
                "cg_residual": info.cg_residual, "entropy": info.entropy, "value_loss": info.value_loss,
                "disc_loss": gdiag.disc_loss, "mean_D_agent": gdiag.mean_D_agent,
                "mean_D_expert": gdiag.mean_D_expert, "mean_reward": float(np.mean(batch.rewards)),
                "L_F": rdiag["L_F"], "L_SC": rdiag["L_SC"], "L_AC": rdiag["L_AC"], "mode": mode,
                "eval_mean": rep.mean if rep else None, "eval_stderr": rep.stderr if rep else None,
            }
            rows.append(row)
            csvlog.write(row)
            if on_iteration is not None:
                on_iteration(k, row)
            if out is not None and cfg.run.checkpoint_every and k % cfg.run.checkpoint_every == 0:
                ckpt.save(out / f"ckpt_{k:05d}.sail", checkpoint_arrays(params, vparams, rparams, dparams),
                          _ckpt_meta(cfg, k))
    except (KeyboardInterrupt, RunAborted):
        raise
    except Exception as exc:
        raise RunAborted(k, phase, exc) from exc
    finally:
        csvlog.close()

    result = RunResult(cfg, rows, evals, trace, ParamSet(checkpoint_arrays(params, vparams, rparams, dparams)))
    arrays = dict(result.params)
    result.checkpoint_hash = hashlib.sha256(ckpt.dumps(arrays, _ckpt_meta(cfg, T))).hexdigest()
    manifest = {
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "iterations": T,
        "mode": mode,
        "demos": {"n": len(demos), "optimal": int(np.sum(demos.source == 0)), **prep.info},
        "final_eval": evals[-1].as_dict(),
        "final_return": result.final_return,
        "phase_order": [ph for kk, ph in trace if kk == 1],
        "checkpoint_sha256": result.checkpoint_hash,
        "wall_clock_s": time.time() - t0,
    }
    if out is not None:
        ckpt.save(out / "final.sail", arrays, _ckpt_meta(cfg, T))
        result.log_hash = ckpt.file_hash(out / "log.csv")
        manifest["log_sha256"] = result.log_hash
        write_metrics(out / "metrics.csv", evals)
        _atomic_write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    result.manifest = manifest
    return result


def _ckpt_meta(cfg: ExperimentConfig, iteration: int) -> dict:
    return {"env": cfg.run.env, "algo": cfg.run.algo, "seed": cfg.run.seed, "iteration": iteration,
            "config": cfg.canonical()}


def policy_from_checkpoint(path):
    """Rebuild ``(env, policy, params, metadata)`` from a training checkpoint."""
    arrays, meta = ckpt.load(path)
    env = make_env(meta["env"])
    policy = make_policy(env.spec)
    params = ParamSet({k: v for k, v in arrays.items() if k.startswith("pi.")})
    return env, policy, params, meta
