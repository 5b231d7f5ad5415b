"""REINFORCE training across mission variants with grouped rollouts.

Each iteration draws one attribute regime (open/closed x deadlines on/off,
multi-depot fixed by the phase), generates an attribute-homogeneous batch,
and samples `group_size` rollouts per instance.  The learning signal is the
group-centered, EMA-normalized reward: normalizing per regime keeps reward
scales comparable when very different variants share one network, and the
within-group baseline removes most of the remaining variance.
"""

import csv
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import instancegen as geninst
from . import policy as pol
from .autodiff import Tensor
from .errors import NonFiniteGradient


def _desk_gen():
    # 4 x 5 lattice: 20 junctions, ~22 links after pruning
    return geninst.GenConfig(grid_side=4, grid_cols=5, prune_keep_fraction=0.7,
                             perturb_magnitude=0.3, seed=0)


def _desk_model():
    return pol.ModelConfig(embed_dim=32, n_layers=2, n_heads=4, ffn_hidden=128)


@dataclass
class TrainConfig:
    epochs: int = 6
    iters_per_epoch: int = 60
    batch_size: int = 32
    group_size: int = 8
    lr: float = 1e-3
    weight_decay: float = 1e-6
    lr_decay_factor: float = 0.1
    lr_milestones: tuple = (5, 6)    # decay after finishing these epochs
    ema_decay: float = 0.99
    norm_eps: float = 1e-5
    seed: int = 0
    gen: geninst.GenConfig = field(default_factory=_desk_gen)
    sample: geninst.SampleConfig = field(default_factory=geninst.SampleConfig)
    model: pol.ModelConfig = field(default_factory=_desk_model)
    open_route_prob: float = 0.5
    time_window_prob: float = 0.5
    multi_depot: bool = False
    heldout_per_regime: int = 32
    trainable_prefix: str = None     # restrict updates to matching params
    checkpoint_every: int = 0        # epochs between checkpoints; 0 disables
    out_dir: str = None


@dataclass
class EmaState:
    """Per-regime running reward statistics."""

    decay: float = 0.99
    eps: float = 1e-5
    means: dict = field(default_factory=dict)
    variances: dict = field(default_factory=dict)

    def update(self, key, batch_mean, batch_var):
        if key not in self.means:
            self.means[key] = batch_mean
            self.variances[key] = batch_var
        else:
            b = self.decay
            self.means[key] = b * self.means[key] + (1 - b) * batch_mean
            self.variances[key] = b * self.variances[key] + (1 - b) * batch_var
        return self.means[key], self.variances[key]


def normalize_rewards(rewards, regime_key, ema):
    """EMA z-score per regime, then center within each rollout group.

    rewards: (batch, group) raw episode values.  Returns advantages of the
    same shape with zero mean along the group axis.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    mean, var = ema.update(regime_key, float(rewards.mean()), float(rewards.var()))
    z = (rewards - mean) / (np.sqrt(var) + ema.eps)
    return z - z.mean(axis=1, keepdims=True)


def pomo_group_rollout(instances, params, group_size, rng):
    """Sample `group_size` rollouts per instance with recorded log-probs.

    The batch must be attribute-homogeneous: one regime per update keeps
    the normalizer statistics unmixed.
    """
    if len({inst.attrs for inst in instances}) != 1:
        raise ValueError("batch instances must share one attribute regime")
    solutions, logp = pol.run_rollouts(
        instances, params, samples_per_instance=group_size, mode="sample",
        rng=rng, record_logprobs=True, multistart=True)
    rewards = np.array([[s.total_value for s in group] for group in solutions])
    return rewards, logp, solutions


class AdamW:
    """Adam with decoupled weight decay; zero gradients leave parameters
    unchanged except for the decay shrinkage.

    `trainable` optionally restricts updates to a subset of parameters
    (by name); everything else is left untouched, decay included.
    """

    def __init__(self, params, lr, weight_decay=0.0, beta1=0.9, beta2=0.999,
                 eps=1e-8, trainable=None):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.trainable = trainable
        self.m = {name: np.zeros_like(t.data) for name, t in params.named()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.named()}
        self.t = 0

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, tensor in self.params.named():
            if self.trainable is not None and not self.trainable(name):
                continue
            g = tensor.grad
            if g is not None:
                if not np.isfinite(g).all():
                    raise NonFiniteGradient(f"non-finite gradient in {name}")
                self.m[name] = b1 * self.m[name] + (1 - b1) * g
                self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            m_hat = self.m[name] / (1 - b1 ** self.t)
            v_hat = self.v[name] / (1 - b2 ** self.t)
            tensor.data = tensor.data - self.lr * (
                m_hat / (np.sqrt(v_hat) + self.eps)
                + self.weight_decay * tensor.data)


def train_step(instances, params, optimizer, ema, rng, group_size):
    """One REINFORCE update; returns summary statistics."""
    rewards, logp, _ = pomo_group_rollout(instances, params, group_size, rng)
    regime = instances[0].attrs.code()
    adv = normalize_rewards(rewards, regime, ema)
    loss = ad.tmean(ad.mul(logp, Tensor(-adv.reshape(-1))))
    params.zero_grads()
    loss.backward()
    optimizer.step()
    return {"regime": regime, "loss": float(loss.data),
            "mean_reward": float(rewards.mean())}


def _regimes(cfg):
    flags = (False, True)
    return [geninst.AttributeConfig(o, tw, cfg.multi_depot)
            for o in flags for tw in flags]


def _sample_cfg_for(cfg, attrs):
    return replace(cfg.sample, attributes=attrs,
                   multi_depot=attrs.multi_depot)


def make_batch(cfg, attrs, rng, count):
    sample_cfg = _sample_cfg_for(cfg, attrs)
    seeds = rng.integers(0, 2 ** 63 - 1, size=count)
    return [
        geninst.generate_instance(cfg.gen, sample_cfg,
                                  np.random.default_rng(int(s)))
        for s in seeds
    ]


def heldout_sets(cfg):
    """Fixed-seed evaluation instances, one list per attribute regime."""
    sets = {}
    for ri, attrs in enumerate(_regimes(cfg)):
        sample_cfg = _sample_cfg_for(cfg, attrs)
        sets[attrs.code()] = [
            geninst.generate_instance(
                cfg.gen, sample_cfg,
                np.random.default_rng([cfg.seed, 9000 + ri, i]))
            for i in range(cfg.heldout_per_regime)
        ]
    return sets

def greedy_eval(params, instances):
    """Mean greedy-decode value over a homogeneous instance list."""
    with ad.no_grad():
        solutions, _ = pol.run_rollouts(instances, params,
                                        samples_per_instance=1, mode="greedy")
    return float(np.mean([group[0].total_value for group in solutions]))


def train(cfg, params=None):
    """Full training loop; returns (params, per-epoch metrics rows)."""
    rng = np.random.default_rng(cfg.seed)
    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)
    if params is None:
        params = pol.init_params(cfg.model, rng)
    trainable = None
    if cfg.trainable_prefix:
        trainable = lambda name: name.startswith(cfg.trainable_prefix)
    optimizer = AdamW(params, cfg.lr, cfg.weight_decay, trainable=trainable)
    ema = EmaState(decay=cfg.ema_decay, eps=cfg.norm_eps)
    heldout = heldout_sets(cfg)
    metrics = []
    for epoch in range(1, cfg.epochs + 1):
        decayed = sum(1 for m in cfg.lr_milestones if epoch > m)
        optimizer.lr = cfg.lr * (cfg.lr_decay_factor ** decayed)
        losses, rewards = [], []
        for _ in range(cfg.iters_per_epoch):
            attrs = geninst.AttributeConfig(
                open_route=bool(rng.random() < cfg.open_route_prob),
                time_windows=bool(rng.random() < cfg.time_window_prob),
                multi_depot=cfg.multi_depot,
            )
            batch = make_batch(cfg, attrs, rng, cfg.batch_size)
            stats = train_step(batch, params, optimizer, ema, rng,
                               cfg.group_size)
            losses.append(stats["loss"])
            rewards.append(stats["mean_reward"])
        row = {
            "epoch": epoch,
            "lr": optimizer.lr,
            "loss": float(np.mean(losses)),
            "mean_reward": float(np.mean(rewards)),
        }
        for code, instances in sorted(heldout.items()):
            row[f"heldout_{code}"] = greedy_eval(params, instances)
        metrics.append(row)
        if cfg.out_dir and cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            pol.save_checkpoint(params,
                                os.path.join(cfg.out_dir, f"epoch{epoch:03d}.npz"))
    if cfg.out_dir:
        pol.save_checkpoint(params, os.path.join(cfg.out_dir, "policy.npz"))
        write_metrics_csv(metrics, os.path.join(cfg.out_dir, "metrics.csv"))
    return params, metrics


def finetune_md(params, cfg):
    """Expand the decoder context for depot coordinates, then train on
    multi-depot regimes.  With zero epochs this reduces to the zero-shot
    expanded policy (identical behavior on single-depot inputs).

    Only the decoder is updated: the encoder's routing features transfer
    as-is, and full-network updates on the new regime tear down more
    single-sortie skill than the depot-assignment signal rebuilds.
    """
    expanded = pol.expand_for_md(params)
    md_cfg = replace(cfg, multi_depot=True, trainable_prefix="dec.")
    return train(md_cfg, params=expanded)


def write_metrics_csv(metrics, path):
    if not metrics:
        return
    fields = list(metrics[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(metrics)
