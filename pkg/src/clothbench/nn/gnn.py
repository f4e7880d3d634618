"""Graph network forward passes: encode, process (L blocks), decode.

Two variants share the processor architecture:

* ``dynamics_model`` - node features are the flattened velocity history, a
  picked/unpicked one-hot and the table clearance; edge features are the
  displacement vector, its norm, a mesh/proximity one-hot and the displacement
  from rest.  The decoder maps final node embeddings to accelerations
  (normalised; callers de-normalise with the stored statistics).
* ``edge_model`` - node features are a single zero; edge features are the
  displacement vector and norm.  The decoder maps final edge embeddings to a
  mesh-edge logit; the two half-edge logits of an undirected edge are
  averaged.

Undirected edges are materialised as two directed half-edges with oppositely
signed displacement features.  Each half-edge carries its own embedding, and
a node aggregates incoming half-edge embeddings sorted by sender id, which
keeps the summation order stable under node permutations.

Every block applies the updates in order edge -> node -> global:

    g' = f_e(h_s, h_r, g, c) + g
    h' = f_p(h,  sum_in g', c) + h
    c' = f_c(c, mean h', mean g')        (no residual; c^0 = 0)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..graphs.graph import ConnectivityGraph
from .autodiff import Tape, Tensor
from .mlp import HIDDEN_WIDTH, MlpParams, MlpTensors, init_mlp, mlp_forward

DYNAMICS_MODEL = "dynamics_model"
EDGE_MODEL = "edge_model"

DEFAULT_BLOCKS = 10
DEFAULT_LATENT = 128


def node_feature_dim(variant: str, history: int) -> int:
    return 3 * history + 3 if variant == DYNAMICS_MODEL else 1


def edge_feature_dim(variant: str) -> int:
    return 7 if variant == DYNAMICS_MODEL else 4


@dataclass
class NormStats:
    node_mean: np.ndarray
    node_std: np.ndarray
    edge_mean: np.ndarray
    edge_std: np.ndarray
    accel_mean: np.ndarray
    accel_std: np.ndarray
    reward_mean: float = 0.0
    reward_std: float = 1.0

    @classmethod
    def identity(cls, variant: str, history: int) -> "NormStats":
        fn = node_feature_dim(variant, history)
        fe = edge_feature_dim(variant)
        return cls(
            node_mean=np.zeros(fn), node_std=np.ones(fn),
            edge_mean=np.zeros(fe), edge_std=np.ones(fe),
            accel_mean=np.zeros(3), accel_std=np.ones(3),
        )

    def validate(self) -> None:
        for arr in (self.node_std, self.edge_std, self.accel_std):
            assert np.all(np.asarray(arr) > 0)
        assert self.reward_std > 0


@dataclass
class GnBlock:
    edge: MlpParams
    node: MlpParams
    globl: MlpParams


@dataclass
class GnsParameters:
    variant: str
    l_blocks: int
    latent_dim: int
    hidden_dim: int
    history: int
    use_global: bool
    node_encoder: MlpParams
    edge_encoder: MlpParams
    blocks: list[GnBlock]
    decoder: MlpParams
    reward_head: MlpParams | None
    stats: NormStats

    @property
    def dtype(self):
        return self.node_encoder.weights[0].dtype

    def named_arrays(self):
        """Deterministic (name, array) walk over every parameter tensor."""
        out = []

        def add(prefix, mlp):
            for k, w in enumerate(mlp.weights):
                out.append((f"{prefix}.w{k}", w))
            for k, b in enumerate(mlp.biases):
                out.append((f"{prefix}.b{k}", b))

        add("node_encoder", self.node_encoder)
        add("edge_encoder", self.edge_encoder)
        for l, blk in enumerate(self.blocks):
            add(f"blocks.{l}.edge", blk.edge)
            add(f"blocks.{l}.node", blk.node)
            add(f"blocks.{l}.global", blk.globl)
        add("decoder", self.decoder)
        if self.reward_head is not None:
            add("reward_head", self.reward_head)
        return out

    def copy(self) -> "GnsParameters":
        import copy as _copy

        return _copy.deepcopy(self)

    def astype(self, dtype) -> "GnsParameters":
        clone = self.copy()

        def conv(mlp):
            mlp.weights = [w.astype(dtype) for w in mlp.weights]
            mlp.biases = [b.astype(dtype) for b in mlp.biases]
        conv(clone.node_encoder)
        conv(clone.edge_encoder)
        for blk in clone.blocks:
            conv(blk.edge)
            conv(blk.node)
            conv(blk.globl)
        conv(clone.decoder)
        if clone.reward_head is not None:
            conv(clone.reward_head)
        return clone


def init_gns(
    variant: str,
    seed: int = 0,
    l_blocks: int = DEFAULT_BLOCKS,
    latent_dim: int = DEFAULT_LATENT,
    hidden_dim: int = HIDDEN_WIDTH,
    history: int = 4,
    use_global: bool = True,
    with_reward_head: bool = False,
    dtype=np.float32,
) -> GnsParameters:
    if variant not in (DYNAMICS_MODEL, EDGE_MODEL):
        raise ValueError(f"unknown variant {variant!r}")
    from .. import rng

    gen = rng.stream(seed, f"init/{variant}")
    fn = node_feature_dim(variant, history)
    fe = edge_feature_dim(variant)
    mk = lambda d_in, d_out: init_mlp(gen, d_in, d_out, hidden=hidden_dim, dtype=dtype)
    blocks = [
        GnBlock(edge=mk(4 * latent_dim, latent_dim),
                node=mk(3 * latent_dim, latent_dim),
                globl=mk(3 * latent_dim, latent_dim))
        for _ in range(l_blocks)
    ]
    decoder_out = 3 if variant == DYNAMICS_MODEL else 1
    return GnsParameters(
        variant=variant,
        l_blocks=l_blocks,
        latent_dim=latent_dim,
        hidden_dim=hidden_dim,
        history=history,
        use_global=use_global,
        node_encoder=mk(fn, latent_dim),
        edge_encoder=mk(fe, latent_dim),
        blocks=blocks,
        decoder=mk(latent_dim, decoder_out),
        reward_head=mk(latent_dim, 1) if with_reward_head else None,
        stats=NormStats.identity(variant, history),
    )


# ---------------------------------------------------------------------------
# feature construction and batching


def graph_node_features(graph: ConnectivityGraph, variant: str) -> np.ndarray:
    n = graph.n_nodes
    if variant == EDGE_MODEL:
        return np.zeros((n, 1))
    hist = graph.velocity_history.reshape(n, -1)
    picked = graph.picked_mask.astype(np.float64)
    onehot = np.stack([picked, 1.0 - picked], axis=1)
    clearance = graph.table_clearance[:, None]
    return np.concatenate([hist, onehot, clearance], axis=1)


def graph_edge_features(graph: ConnectivityGraph, variant: str):
    """Directed half-edge arrays (senders, receivers, features, fwd, rev).

    Half-edges are sorted by (receiver, sender); `fwd[k]` / `rev[k]` locate
    the two half-edges of undirected edge k in that order.
    """
    e = graph.n_edges
    if e == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty, np.empty((0, edge_feature_dim(variant))), empty, empty
    i = graph.edges[:, 0]
    j = graph.edges[:, 1]
    senders = np.concatenate([i, j])
    receivers = np.concatenate([j, i])
    order = np.lexsort((senders, receivers))
    inv = np.empty_like(order)
    inv[order] = np.arange(2 * e)
    fwd = inv[:e]  # half-edge i -> j of undirected edge k
    rev = inv[e:]

    senders = senders[order]
    receivers = receivers[order]
    d = graph.points[senders] - graph.points[receivers]
    norm = np.linalg.norm(d, axis=1, keepdims=True)
    if variant == EDGE_MODEL:
        feats = np.concatenate([d, norm], axis=1)
    else:
        mesh = np.concatenate([graph.mesh_mask, graph.mesh_mask])[order].astype(np.float64)
        onehot = np.stack([mesh, 1.0 - mesh], axis=1)
        rest = np.concatenate([graph.rest_distances, graph.rest_distances])[order]
        from_rest = np.where(mesh > 0, norm[:, 0] - rest, 0.0)[:, None]
        feats = np.concatenate([d, norm, onehot, from_rest], axis=1)
    return senders, receivers, feats, fwd, rev


@dataclass
class GraphBatch:
    """Union of disconnected graphs with per-graph global slots."""

    node_feats: np.ndarray
    edge_feats: np.ndarray
    senders: np.ndarray
    receivers: np.ndarray
    node_graph: np.ndarray
    edge_graph: np.ndarray
    und_fwd: np.ndarray
    und_rev: np.ndarray
    und_graph: np.ndarray
    n_graphs: int
    node_offsets: np.ndarray  # (B+1,)
    und_offsets: np.ndarray  # (B+1,)
    accel_target: np.ndarray | None = None
    edge_labels: np.ndarray | None = None
    reward_target: np.ndarray | None = None
    imitation_nodes: np.ndarray | None = None  # target rows in the teacher batch

    @property
    def n_nodes(self) -> int:
        return len(self.node_feats)


def make_batch(
    graphs: list[ConnectivityGraph],
    variant: str,
    accel_targets: list[np.ndarray] | None = None,
    edge_labels: list[np.ndarray] | None = None,
    rewards: list[float] | None = None,
) -> GraphBatch:
    node_feats, edge_feats = [], []
    senders, receivers, node_graph, edge_graph = [], [], [], []
    und_fwd, und_rev, und_graph = [], [], []
    node_off = [0]
    und_off = [0]
    n_nodes = 0
    n_dir = 0
    for b, g in enumerate(graphs):
        nf = graph_node_features(g, variant)
        s, r, ef, fwd, rev = graph_edge_features(g, variant)
        node_feats.append(nf)
        edge_feats.append(ef)
        senders.append(s + n_nodes)
        receivers.append(r + n_nodes)
        node_graph.append(np.full(g.n_nodes, b, dtype=np.int64))
        edge_graph.append(np.full(len(s), b, dtype=np.int64))
        und_fwd.append(fwd + n_dir)
        und_rev.append(rev + n_dir)
        und_graph.append(np.full(g.n_edges, b, dtype=np.int64))
        n_nodes += g.n_nodes
        n_dir += len(s)
        node_off.append(n_nodes)
        und_off.append(und_off[-1] + g.n_edges)

    return GraphBatch(
        node_feats=np.concatenate(node_feats, axis=0),
        edge_feats=np.concatenate(edge_feats, axis=0) if n_dir else np.empty((0, edge_feature_dim(variant))),
        senders=np.concatenate(senders) if n_dir else np.empty(0, dtype=np.int64),
        receivers=np.concatenate(receivers) if n_dir else np.empty(0, dtype=np.int64),
        node_graph=np.concatenate(node_graph),
        edge_graph=np.concatenate(edge_graph) if n_dir else np.empty(0, dtype=np.int64),
        und_fwd=np.concatenate(und_fwd) if n_dir else np.empty(0, dtype=np.int64),
        und_rev=np.concatenate(und_rev) if n_dir else np.empty(0, dtype=np.int64),
        und_graph=np.concatenate(und_graph) if n_dir else np.empty(0, dtype=np.int64),
        n_graphs=len(graphs),
        node_offsets=np.asarray(node_off),
        und_offsets=np.asarray(und_off),
        accel_target=np.concatenate(accel_targets, axis=0) if accel_targets is not None else None,
        edge_labels=np.concatenate(edge_labels) if edge_labels is not None else None,
        reward_target=np.asarray(rewards, dtype=np.float64) if rewards is not None else None,
    )


# ---------------------------------------------------------------------------
# forward passes


class LiftedGns:
    """GnsParameters lifted onto a tape (one object per forward/backward)."""

    def __init__(self, tape: Tape, params: GnsParameters, needs_grad: bool = True):
        self.params = params
        self.node_encoder = MlpTensors(tape, params.node_encoder, needs_grad)
        self.edge_encoder = MlpTensors(tape, params.edge_encoder, needs_grad)
        self.blocks = [
            (MlpTensors(tape, blk.edge, needs_grad),
             MlpTensors(tape, blk.node, needs_grad),
             MlpTensors(tape, blk.globl, needs_grad))
            for blk in params.blocks
        ]
        self.decoder = MlpTensors(tape, params.decoder, needs_grad)
        self.reward_head = (
            MlpTensors(tape, params.reward_head, needs_grad)
            if params.reward_head is not None else None
        )

    def named_tensors(self):
        out = []

        def add(prefix, mlp):
            for k, w in enumerate(mlp.weights):
                out.append((f"{prefix}.w{k}", w))
            for k, b in enumerate(mlp.biases):
                out.append((f"{prefix}.b{k}", b))

        add("node_encoder", self.node_encoder)
        add("edge_encoder", self.edge_encoder)
        for l, (e, n, c) in enumerate(self.blocks):
            add(f"blocks.{l}.edge", e)
            add(f"blocks.{l}.node", n)
            add(f"blocks.{l}.global", c)
        add("decoder", self.decoder)
        if self.reward_head is not None:
            add("reward_head", self.reward_head)
        return out


def _normalize(x, mean, std, dtype):
    return ((np.asarray(x, dtype=np.float64) - mean) / std).astype(dtype)


def forward_latents(tape: Tape, lifted: LiftedGns, batch: GraphBatch):
    """Run encoder + L GN blocks; returns (h, g, c) tensors."""
    p = lifted.params
    dtype = p.dtype
    st = p.stats
    nf = tape.leaf(_normalize(batch.node_feats, st.node_mean, st.node_std, dtype))
    ef = tape.leaf(_normalize(batch.edge_feats, st.edge_mean, st.edge_std, dtype))
    h = mlp_forward(tape, lifted.node_encoder, nf)
    g = mlp_forward(tape, lifted.edge_encoder, ef)
    c = tape.leaf(np.zeros((batch.n_graphs, p.latent_dim), dtype=dtype))
    n = batch.n_nodes
    for edge_mlp, node_mlp, global_mlp in lifted.blocks:
        hs = tape.gather(h, batch.senders)
        hr = tape.gather(h, batch.receivers)
        ce = tape.gather(c, batch.edge_graph)
        g = tape.add(mlp_forward(tape, edge_mlp, tape.concat([hs, hr, g, ce])), g)
        agg = tape.segment_sum(g, batch.receivers, n)
        cn = tape.gather(c, batch.node_graph)
        h = tape.add(mlp_forward(tape, node_mlp, tape.concat([h, agg, cn])), h)
        if p.use_global:
            c = mlp_forward(tape, global_mlp, tape.concat([
                c,
                tape.segment_mean(h, batch.node_graph, batch.n_graphs),
                tape.segment_mean(g, batch.edge_graph, batch.n_graphs),
            ]))
    return h, g, c


def dynamics_out(tape: Tape, lifted: LiftedGns, h: Tensor) -> Tensor:
    """Normalised acceleration prediction per node."""
    return mlp_forward(tape, lifted.decoder, h)


def edge_logits_out(tape: Tape, lifted: LiftedGns, g: Tensor, batch: GraphBatch) -> Tensor:
    """Mesh-edge logit per undirected edge (half-edge logits averaged)."""
    per_dir = mlp_forward(tape, lifted.decoder, g)
    lf = tape.gather(per_dir, batch.und_fwd)
    lr = tape.gather(per_dir, batch.und_rev)
    return tape.scale(tape.add(lf, lr), 0.5)


def reward_out(tape: Tape, lifted: LiftedGns, c: Tensor) -> Tensor:
    """Normalised reward prediction per graph (requires a reward head)."""
    if lifted.reward_head is None:
        raise ValueError("model has no reward head")
    return mlp_forward(tape, lifted.reward_head, c)


# ---------------------------------------------------------------------------
# inference wrappers (numpy in / numpy out)


def forward_dynamics(graphs, params: GnsParameters) -> np.ndarray:
    """Per-node acceleration in m/s^2 for one graph or a list of graphs."""
    single = isinstance(graphs, ConnectivityGraph)
    batch = make_batch([graphs] if single else list(graphs), DYNAMICS_MODEL)
    tape = Tape()
    lifted = LiftedGns(tape, params, needs_grad=False)
    h, _, _ = forward_latents(tape, lifted, batch)
    out = dynamics_out(tape, lifted, h).value.astype(np.float64)
    accel = out * params.stats.accel_std + params.stats.accel_mean
    return accel


def forward_edges(graph: ConnectivityGraph, params: GnsParameters) -> np.ndarray:
    """Mesh-edge probability per undirected edge of the graph."""
    batch = make_batch([graph], EDGE_MODEL)
    tape = Tape()
    lifted = LiftedGns(tape, params, needs_grad=False)
    _, g, _ = forward_latents(tape, lifted, batch)
    logits = edge_logits_out(tape, lifted, g, batch).value[:, 0].astype(np.float64)
    return 1.0 / (1.0 + np.exp(-logits))


def forward_reward(graph: ConnectivityGraph, params: GnsParameters) -> float:
    """Predicted covered area (m^2) after one step."""
    batch = make_batch([graph], params.variant)
    tape = Tape()
    lifted = LiftedGns(tape, params, needs_grad=False)
    _, _, c = forward_latents(tape, lifted, batch)
    out = float(reward_out(tape, lifted, c).value[0, 0])
    return out * params.stats.reward_std + params.stats.reward_mean
