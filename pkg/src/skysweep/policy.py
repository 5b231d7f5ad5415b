"""Attention policy for sequential assessment routing.

One shared network serves every mission variant.  Nodes embed from raw
features [x, y, value, deadline]; depots embed from mission features
[x, y, time_limit, battery_limit, n_drones, closed_flag].  A transformer
encoder (pre- or post-norm, RMS or instance normalization, gated or ReLU
feed-forward, standard or block-streamed attention) produces node
encodings once per episode; a small decoder then scores feasible nodes
step by step from a context of [current node encoding, sortie clock,
drone index], optionally extended with depot coordinates after the
multi-depot adapter expansion.
"""

import json
from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from . import env as envmod
from .autodiff import Tensor
from .errors import AllMasked, AlreadyExpanded, NonFiniteActivation, ShapeMismatch

NODE_FEATURES = 4   # x, y, value, deadline
DEPOT_FEATURES = 6  # x, y, time_limit, battery_limit, n_drones, closed_flag


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 128
    n_layers: int = 6
    n_heads: int = 8
    ffn_hidden: int = 512
    norm_kind: str = "rms"           # "rms" | "instance"
    norm_position: str = "pre"       # "pre" | "post"
    ffn_kind: str = "sglu"           # "sglu" | "relu"
    attention_kind: str = "blockwise"  # "blockwise" | "standard"
    block_size: int = 64
    tanh_clip: float = 10.0
    deadline_cap: float = 4.0        # feature stand-in for "no deadline"
    norm_eps: float = 1e-8

    def __post_init__(self):
        if self.embed_dim % self.n_heads:
            raise ValueError("embed_dim must be divisible by n_heads")
        if self.norm_kind not in ("rms", "instance"):
            raise ValueError(f"unknown norm_kind {self.norm_kind!r}")
        if self.norm_position not in ("pre", "post"):
            raise ValueError(f"unknown norm_position {self.norm_position!r}")
        if self.ffn_kind not in ("sglu", "relu"):
            raise ValueError(f"unknown ffn_kind {self.ffn_kind!r}")
        if self.attention_kind not in ("blockwise", "standard"):
            raise ValueError(f"unknown attention_kind {self.attention_kind!r}")
        if self.block_size < 1:
            raise ValueError("block_size must be positive")


class PolicyParams:
    """Named parameter tensors plus the config they were built for."""

    def __init__(self, config, tensors, md_expanded=False):
        self.config = config
        self.tensors = tensors
        self.md_expanded = md_expanded

    def __getitem__(self, name):
        return self.tensors[name]

    def named(self):
        return sorted(self.tensors.items())

    def zero_grads(self):
        for _, t in self.named():
            t.grad = None

    def n_parameters(self):
        return sum(t.data.size for _, t in self.named())


def init_params(config, rng=None):
    if rng is None:
        rng = np.random.default_rng(0)
    d, f = config.embed_dim, config.ffn_hidden
    tensors = {}

    def mat(name, fan_in, fan_out):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        tensors[name] = Tensor(rng.uniform(-a, a, size=(fan_in, fan_out)),
                               requires_grad=True)

    def vec(name, size, value=0.0):
        tensors[name] = Tensor(np.full(size, value, dtype=np.float64),
                               requires_grad=True)

    mat("node_embed.W", NODE_FEATURES, d)
    vec("node_embed.b", d)
    mat("depot_embed.W", DEPOT_FEATURES, d)
    vec("depot_embed.b", d)
    for layer in range(config.n_layers):
        p = f"enc{layer}"
        for w in ("Wq", "Wk", "Wv", "Wo"):
            mat(f"{p}.attn.{w}", d, d)
        vec(f"{p}.norm1.g", d, 1.0)
        vec(f"{p}.norm2.g", d, 1.0)
        mat(f"{p}.ffn.W1", d, f)
        vec(f"{p}.ffn.b1", f)
        if config.ffn_kind == "sglu":
            mat(f"{p}.ffn.W2", d, f)
            vec(f"{p}.ffn.b2", f)
        mat(f"{p}.ffn.W3", f, d)
        vec(f"{p}.ffn.b3", d)
    mat("dec.Wc", d + 2, d)
    vec("dec.bc", d)
    for w in ("Wq", "Wk", "Wv", "Wo"):
        mat(f"dec.glimpse.{w}", d, d)
    mat("dec.score.Wq", d, d)
    mat("dec.score.Wk", d, d)
    return PolicyParams(config, tensors)


def expand_for_md(params):
    """Widen the decoder context with two zero-initialized depot-coordinate
    rows.  Outputs on single-depot inputs are preserved exactly; the new rows
    only start mattering once finetuning moves them."""
    if params.md_expanded:
        raise AlreadyExpanded("decoder context already carries depot coordinates")
    d = params.config.embed_dim
    tensors = {}
    for name, t in params.tensors.items():
        if name == "dec.Wc":
            tensors[name] = Tensor(np.vstack([t.data, np.zeros((2, d))]),
                                   requires_grad=True)
        else:
            tensors[name] = Tensor(t.data.copy(), requires_grad=True)
    return PolicyParams(params.config, tensors, md_expanded=True)


# --- checkpoints --------------------------------------------------------------

def save_checkpoint(params, path):
    meta = {
        "format": "policy-checkpoint/1",
        "config": asdict(params.config),
        "md_expanded": params.md_expanded,
    }
    arrays = {name: t.data for name, t in params.named()}
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
                 **arrays)


def load_checkpoint(path):
    with np.load(path) as archive:
        meta = json.loads(bytes(archive["__meta__"]).decode())
        if meta.get("format") != "policy-checkpoint/1":
            raise ValueError(f"unexpected checkpoint format {meta.get('format')!r}")
        config = ModelConfig(**meta["config"])
        tensors = {
            name: Tensor(archive[name].copy(), requires_grad=True)
            for name in archive.files
            if name != "__meta__"
        }
    return PolicyParams(config, tensors, md_expanded=meta["md_expanded"])


# --- building blocks -----------------------------------------------------------

def rms_norm(x, gain, eps):
    ms = ad.tmean(ad.power(x, 2.0), axis=-1, keepdims=True)
    return ad.mul(ad.mul(x, ad.power(ad.add(ms, eps), -0.5)), gain)


def instance_norm(x, gain, eps):
    # normalize each feature channel over the node axis
    mu = ad.tmean(x, axis=-2, keepdims=True)
    centered = ad.add(x, ad.mul(mu, -1.0))
    var = ad.tmean(ad.power(centered, 2.0), axis=-2, keepdims=True)
    return ad.mul(ad.mul(centered, ad.power(ad.add(var, eps), -0.5)), gain)


def _norm(x, params, prefix, which, config):
    gain = params[f"{prefix}.norm{which}.g"]
    if config.norm_kind == "rms":
        return rms_norm(x, gain, config.norm_eps)
    return instance_norm(x, gain, config.norm_eps)


def swish(x):
    return ad.mul(x, ad.sigmoid(x))


def sglu_gate(x, w1, b1, w2, b2):
    """Gated feed-forward core: Swish(x W1 + b1) * (x W2 + b2)."""
    return ad.mul(swish(ad.add(ad.matmul(x, w1), b1)),
                  ad.add(ad.matmul(x, w2), b2))


def _ffn(x, params, prefix, config):
    if config.ffn_kind == "sglu":
        hidden = sglu_gate(x, params[f"{prefix}.ffn.W1"], params[f"{prefix}.ffn.b1"],
                           params[f"{prefix}.ffn.W2"], params[f"{prefix}.ffn.b2"])
    else:
        hidden = ad.relu(ad.add(ad.matmul(x, params[f"{prefix}.ffn.W1"]),
                                params[f"{prefix}.ffn.b1"]))
    return ad.add(ad.matmul(hidden, params[f"{prefix}.ffn.W3"]),
                  params[f"{prefix}.ffn.b3"])


def _split_heads(x, n_heads):
    # (B, n, d) -> (B, H, n, d/H)
    b, n, d = x.shape
    return ad.transpose(ad.reshape(x, (b, n, n_heads, d // n_heads)), (0, 2, 1, 3))


def _merge_heads(x):
    # (B, H, n, dh) -> (B, n, d)
    b, h, n, dh = x.shape
    return ad.reshape(ad.transpose(x, (0, 2, 1, 3)), (b, n, h * dh))


def attention(q, k, v, config, mask=None):
    """Scaled dot-product attention over already-projected q/k/v.

    q: (B, m, d), k/v: (B, n, d); mask: bool (B, n) or None (all feasible).
    The blockwise path streams over key blocks with a running max and an
    accumulated numerator/denominator, never holding more than one
    (B, H, m, block) score panel in the forward pass.
    """
    h = config.n_heads
    qh, kh, vh = _split_heads(q, h), _split_heads(k, h), _split_heads(v, h)
    scale = 1.0 / np.sqrt(qh.shape[-1])
    n = kh.shape[2]
    if mask is None:
        mask4 = np.ones((q.shape[0], 1, 1, n), dtype=bool)
    else:
        mask4 = np.asarray(mask, dtype=bool)[:, None, None, :]

    if config.attention_kind == "standard" or n <= config.block_size:
        scores = ad.mul(ad.matmul(qh, ad.transpose(kh, (0, 1, 3, 2))), scale)
        probs = ad.masked_softmax(scores, mask4, axis=-1)
        out = ad.matmul(probs, vh)
        return _merge_heads(out)

    # pass 1 (no graph): running row maxima over feasible keys
    bsz = config.block_size
    m = np.full(qh.shape[:-1] + (1,), -np.inf)
    kd = kh.data
    for lo in range(0, n, bsz):
        hi = min(lo + bsz, n)
        s = qh.data @ np.swapaxes(kd[:, :, lo:hi], -1, -2) * scale
        s = np.where(mask4[..., lo:hi], s, -np.inf)
        m = np.maximum(m, s.max(axis=-1, keepdims=True))
    # pass 2: streamed softmax-weighted sum with the fixed shift
    num, den = None, None
    for lo in range(0, n, bsz):
        hi = min(lo + bsz, n)
        k_blk = ad.transpose(ad.narrow(kh, 2, lo, hi), (0, 1, 3, 2))
        s_blk = ad.mul(ad.matmul(qh, k_blk), scale)
        bias = np.where(mask4[..., lo:hi], 0.0, -np.inf)
        e_blk = ad.exp(ad.add(ad.add(s_blk, bias), -m))
        num_blk = ad.matmul(e_blk, ad.narrow(vh, 2, lo, hi))
        den_blk = ad.tsum(e_blk, axis=-1, keepdims=True)
        num = num_blk if num is None else ad.add(num, num_blk)
        den = den_blk if den is None else ad.add(den, den_blk)
    out = ad.mul(num, ad.power(den, -1.0))
    return _merge_heads(out)


def _mha(x, params, prefix, config, mask=None, kv=None):
    kv = x if kv is None else kv
    q = ad.matmul(x, params[f"{prefix}.Wq"])
    k = ad.matmul(kv, params[f"{prefix}.Wk"])
    v = ad.matmul(kv, params[f"{prefix}.Wv"])
    return ad.matmul(attention(q, k, v, config, mask=mask), params[f"{prefix}.Wo"])


# --- encoder -------------------------------------------------------------------

def embed_inputs(instance, params):
    """Initial embeddings for one instance: Tensor (n_nodes, embed_dim)."""
    h = embed_batch([instance], params)
    return ad.reshape(h, h.shape[1:])


def embed_batch(instances, params):
    cfg = params.config
    n = instances[0].network.n_nodes
    ndep = len(instances[0].network.depots)
    feats = np.zeros((len(instances), n, NODE_FEATURES))
    dfeats = np.zeros((len(instances), ndep, DEPOT_FEATURES))
    select = np.zeros((len(instances), n, ndep))
    keep = np.ones((len(instances), n, 1))
    for b, inst in enumerate(instances):
        tn = inst.network
        if tn.n_nodes != n or len(tn.depots) != ndep:
            raise ShapeMismatch("instances in a batch must share node/depot counts")
        feats[b, :, 0:2] = tn.coords
        feats[b, :, 2] = tn.values
        feats[b, :, 3] = np.minimum(inst.deadlines, cfg.deadline_cap)
        for di, dep in enumerate(tn.depots):
            dfeats[b, di] = (tn.coords[dep, 0], tn.coords[dep, 1],
                             inst.time_limit, inst.battery_limit,
                             inst.n_drones, 0.0 if inst.attrs.open_route else 1.0)
            select[b, dep, di] = 1.0
            keep[b, dep, 0] = 0.0
    base = ad.add(ad.matmul(Tensor(feats), params["node_embed.W"]),
                  params["node_embed.b"])
    depot = ad.add(ad.matmul(Tensor(dfeats), params["depot_embed.W"]),
                   params["depot_embed.b"])
    return ad.add(ad.mul(base, Tensor(keep)), ad.matmul(Tensor(select), depot))


def encoder_forward(h, config, params):
    """Run the encoder stack on (n, d) or (B, n, d) embeddings."""
    squeeze = False
    if h.ndim == 2:
        h = ad.reshape(h, (1,) + h.shape)
        squeeze = True
    if h.shape[-1] != config.embed_dim:
        raise ShapeMismatch(f"embeddings have width {h.shape[-1]}, "
                            f"config says {config.embed_dim}")
    for layer in range(config.n_layers):
        p = f"enc{layer}"
        if config.norm_position == "pre":
            h = ad.add(h, _mha(_norm(h, params, p, 1, config), params,
                               f"{p}.attn", config))
            h = ad.add(h, _ffn(_norm(h, params, p, 2, config), params, p, config))
        else:
            h = _norm(ad.add(h, _mha(h, params, f"{p}.attn", config)),
                      params, p, 1, config)
            h = _norm(ad.add(h, _ffn(h, params, p, config)), params, p, 2, config)
    if not np.isfinite(h.data).all():
        raise NonFiniteActivation("encoder produced non-finite values")
    if squeeze:
        h = ad.reshape(h, h.shape[1:])
    return h


def encode_instances(instances, params):
    return encoder_forward(embed_batch(instances, params), params.config, params)


# --- decoder -------------------------------------------------------------------

class DecoderCache:
    """Per-episode projections of the node encodings."""

    def __init__(self, encodings, params):
        # encodings: (B, n, d)
        self.encodings = encodings
        self.glimpse_k = ad.matmul(encodings, params["dec.glimpse.Wk"])
        self.glimpse_v = ad.matmul(encodings, params["dec.glimpse.Wv"])
        # row-normalized keys (and the matching query below) keep the
        # pre-clip scores scale-free: without this the cheapest ascent
        # direction for the policy gradient is a global score blow-up,
        # which saturates the tanh clip and freezes learning.
        self.score_k = rms_norm(ad.matmul(encodings, params["dec.score.Wk"]),
                                1.0, params.config.norm_eps)

    def take_lanes(self, lane_idx):
        c = object.__new__(DecoderCache)
        c.encodings = ad.take(self.encodings, lane_idx)
        c.glimpse_k = ad.take(self.glimpse_k, lane_idx)
        c.glimpse_v = ad.take(self.glimpse_v, lane_idx)
        c.score_k = ad.take(self.score_k, lane_idx)
        return c


def _context_rows(states):
    """Constant context pieces for a list of active states.

    Returns (mix, consts, depot_xy): mix (A, 1, n) averages node encodings
    (one-hot at the position; uniform over depots while the pick is pending),
    consts (A, 2) holds the scaled clock and drone index, depot_xy (A, 2)
    the active depot coordinates (mean of depots while pending).
    """
    a = len(states)
    n = states[0].instance.network.n_nodes
    mix = np.zeros((a, 1, n))
    consts = np.zeros((a, 2))
    depot_xy = np.zeros((a, 2))
    for r, st in enumerate(states):
        tn = st.instance.network
        if st.position is envmod.PENDING:
            mix[r, 0, list(tn.depots)] = 1.0 / len(tn.depots)
            depot_xy[r] = tn.coords[list(tn.depots)].mean(axis=0)
        else:
            mix[r, 0, st.position] = 1.0
            dep = st.depot_assignment[st.drone - 1]
            depot_xy[r] = tn.coords[dep]
        consts[r, 0] = st.clock / st.instance.time_limit
        consts[r, 1] = st.drone / st.instance.n_drones
    return mix, consts, depot_xy


def decode_batch(cache, states, masks, params):
    """Action distributions for active states: Tensor (A, n)."""
    cfg = params.config
    mix, consts, depot_xy = _context_rows(states)
    h_prev = ad.reshape(ad.matmul(Tensor(mix), cache.encodings),
                        (len(states), cfg.embed_dim))
    pieces = [h_prev, Tensor(consts)]
    if params.md_expanded:
        pieces.append(Tensor(depot_xy))
    ctx = ad.concat(pieces, axis=-1)
    if ctx.shape[-1] != params["dec.Wc"].shape[0]:
        raise ShapeMismatch(
            f"context width {ctx.shape[-1]} does not match dec.Wc rows "
            f"{params['dec.Wc'].shape[0]}")
    ctx = ad.reshape(ad.add(ad.matmul(ctx, params["dec.Wc"]), params["dec.bc"]),
                     (len(states), 1, cfg.embed_dim))

    q = ad.matmul(ctx, params["dec.glimpse.Wq"])
    glimpse = ad.matmul(
        attention(q, cache.glimpse_k, cache.glimpse_v, cfg, mask=masks),
        params["dec.glimpse.Wo"])

    sq = rms_norm(ad.matmul(glimpse, params["dec.score.Wq"]), 1.0,
                  cfg.norm_eps)
    u = ad.mul(ad.matmul(sq, ad.transpose(cache.score_k, (0, 2, 1))),
               1.0 / np.sqrt(cfg.embed_dim))
    logits = ad.mul(ad.tanh(ad.reshape(u, (len(states), -1))), cfg.tanh_clip)
    probs = ad.masked_softmax(logits, masks, axis=-1)
    if not np.isfinite(probs.data).all():
        raise NonFiniteActivation("decoder produced non-finite probabilities")
    return probs


def decode_step(encodings, state, params):
    """Distribution over next nodes for a single state: Tensor (n_nodes,)."""
    if envmod.is_terminal(state):
        raise AllMasked("state is terminal; nothing to decode")
    mask = envmod.feasible_mask(state)
    if not mask.any():
        raise AllMasked("no feasible action at this state")
    enc = encodings if encodings.ndim == 3 else ad.reshape(encodings,
                                                           (1,) + encodings.shape)
    cache = DecoderCache(enc, params)
    probs = decode_batch(cache, [state], mask[None, :], params)
    return ad.reshape(probs, (probs.shape[-1],))


# --- rollouts ------------------------------------------------------------------

def run_rollouts(instances, params, samples_per_instance=1, mode="greedy",
                 rng=None, record_logprobs=False, deadline_on_completion=False,
                 multistart=False):
    """Batched episodes: `samples_per_instance` rollouts for each instance.

    Returns (solutions, logprobs) where solutions is a list of lists shaped
    [n_instances][samples] and logprobs a Tensor (n_instances * samples,)
    of per-episode log-likelihood sums (data-only when record_logprobs is
    False).  With mode="sample", rng must be provided.

    `multistart` spreads each instance's rollouts over its feasible first
    actions round-robin instead of sampling them (later steps still
    sample).  Grouped training wants this: it guarantees the group
    explores every opening symmetrically, so group-centered advantages
    attribute the outcome difference to the opening itself.
    """
    if mode not in ("greedy", "sample"):
        raise ValueError(f"unknown rollout mode {mode!r}")
    if mode == "sample" and rng is None:
        raise ValueError("sampling rollouts need an rng")
    if multistart and mode != "sample":
        raise ValueError("multistart spreads sampled rollouts only")
    b, g = len(instances), samples_per_instance
    lanes = b * g
    encodings = encode_instances(instances, params)
    cache = DecoderCache(encodings, params)
    lane_instance = np.repeat(np.arange(b), g)
    cache = cache.take_lanes(lane_instance)
    states = [envmod.reset(instances[i], deadline_on_completion=deadline_on_completion)
              for i in lane_instance]
    logp = Tensor(np.zeros(lanes))

    first_step = True
    while True:
        active = np.array([l for l in range(lanes) if not states[l].done])
        if active.size == 0:
            break
        masks = np.stack([envmod.feasible_mask(states[l]) for l in active])
        probs = decode_batch(cache.take_lanes(active),
                             [states[l] for l in active], masks, params)
        if mode == "greedy":
            chosen = probs.data.argmax(axis=-1)
        else:
            chosen = _sample_rows(probs.data, masks, rng)
            if multistart and first_step:
                for row, lane in enumerate(active):
                    feasible = np.flatnonzero(masks[row])
                    chosen[row] = feasible[(lane % g) % feasible.size]
        first_step = False
        step_logp = ad.log(ad.gather(probs, chosen))
        if record_logprobs:
            logp = ad.index_add(logp, active, step_logp)
        else:
            np.add.at(logp.data, active, step_logp.data)
        for l, action in zip(active, chosen):
            envmod.step(states[l], int(action))

    solutions = [
        [envmod.extract_solution(states[i * g + j]) for j in range(g)]
        for i in range(b)
    ]
    return solutions, logp


def _sample_rows(probs, masks, rng):
    cum = np.cumsum(probs, axis=-1)
    draws = rng.random(probs.shape[0])
    chosen = np.minimum((cum < draws[:, None]).sum(axis=-1), probs.shape[1] - 1)
    bad = ~masks[np.arange(len(chosen)), chosen]
    if bad.any():  # numerical edge: fall back to the mode of the row
        chosen[bad] = probs[bad].argmax(axis=-1)
    return chosen


def rollout(instance, params, mode="greedy", n_samples=1, rng=None,
            deadline_on_completion=False):
    """Roll out one instance; returns a list of (Solution, log_prob) pairs."""
    with ad.no_grad():
        solutions, logp = run_rollouts(
            [instance], params, samples_per_instance=n_samples, mode=mode,
            rng=rng, deadline_on_completion=deadline_on_completion)
    return [(sol, float(lp)) for sol, lp in zip(solutions[0], logp.data)]
