import numpy as np
import pytest

from clothbench.graphs.graph import ConnectivityGraph
from clothbench.nn.autodiff import Tape
from clothbench.nn.checkpoint import load_model, save_model
from clothbench.nn.gnn import (
    DYNAMICS_MODEL,
    EDGE_MODEL,
    GnsParameters,
    LiftedGns,
    dynamics_out,
    edge_logits_out,
    forward_dynamics,
    forward_edges,
    forward_latents,
    forward_reward,
    graph_node_features,
    init_gns,
    make_batch,
    node_feature_dim,
)
from clothbench.nn.mlp import MlpParams, MlpTensors, init_mlp, mlp_apply, mlp_forward


def make_graph(points, edges, mesh_mask=None, rest=None, history=None, picked=None,
               velocity=None):
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if mesh_mask is None:
        mesh_mask = np.zeros(len(edges), dtype=bool)
    if rest is None:
        rest = np.zeros(len(edges))
    hist = np.zeros((n, 4, 3)) if history is None else history
    if velocity is not None:
        hist = hist.copy()
        hist[:, -1] = velocity
    picked_mask = np.zeros(n, dtype=bool)
    if picked is not None:
        picked_mask[picked] = True
    return ConnectivityGraph(
        points=points, edges=edges, mesh_mask=np.asarray(mesh_mask, dtype=bool),
        rest_distances=np.asarray(rest, dtype=np.float64),
        velocity_history=hist, picked_mask=picked_mask,
        table_clearance=points[:, 1].copy(),
    )


def zero_mlp(mlp: MlpParams) -> MlpParams:
    return MlpParams(weights=[np.zeros_like(w) for w in mlp.weights],
                     biases=[np.zeros_like(b) for b in mlp.biases])


def zero_params(params: GnsParameters, parts=("encoders", "blocks", "decoder")) -> GnsParameters:
    p = params.copy()
    if "encoders" in parts:
        p.node_encoder = zero_mlp(p.node_encoder)
        p.edge_encoder = zero_mlp(p.edge_encoder)
    if "blocks" in parts:
        for blk in p.blocks:
            blk.edge = zero_mlp(blk.edge)
            blk.node = zero_mlp(blk.node)
            blk.globl = zero_mlp(blk.globl)
    if "decoder" in parts:
        p.decoder = zero_mlp(p.decoder)
        if p.reward_head is not None:
            p.reward_head = zero_mlp(p.reward_head)
    return p


class TestMlp:
    def test_zero_params_zero_output(self):
        gen = np.random.default_rng(0)
        mlp = zero_mlp(init_mlp(gen, 5, 3, hidden=8))
        x = gen.normal(size=(4, 5))
        assert np.all(mlp_apply(mlp, x) == 0)

    def test_identity_construction_passthrough(self):
        d = 4
        eye = np.eye(d)
        mlp = MlpParams(weights=[eye.copy() for _ in range(4)],
                        biases=[np.zeros(d) for _ in range(4)])
        x = np.abs(np.random.default_rng(1).normal(size=(3, d)))  # ReLU-safe
        assert np.allclose(mlp_apply(mlp, x), x)

    def test_matches_naive_matmul_oracle(self):
        gen = np.random.default_rng(2)
        mlp = init_mlp(gen, 6, 2, hidden=7, dtype=np.float64)
        x = gen.normal(size=(5, 6))

        def naive(mat, vec):
            out = np.zeros(mat.shape[1])
            for a in range(mat.shape[0]):
                for b in range(mat.shape[1]):
                    out[b] += vec[a] * mat[a, b]
            return out

        for row in x:
            h = row
            for k in range(4):
                h = naive(mlp.weights[k], h) + mlp.biases[k]
                if k < 3:
                    h = np.maximum(h, 0)
            got = mlp_apply(mlp, row[None])[0]
            assert np.allclose(got, h, rtol=1e-6, atol=1e-12)

    def test_tape_forward_matches_apply(self):
        gen = np.random.default_rng(3)
        mlp = init_mlp(gen, 5, 4, hidden=6, dtype=np.float64)
        x = gen.normal(size=(7, 5))
        tape = Tape()
        out = mlp_forward(tape, MlpTensors(tape, mlp, needs_grad=False), tape.leaf(x))
        assert np.allclose(out.value, mlp_apply(mlp, x))


def tiny_params(variant, seed=0, **kw):
    kw.setdefault("l_blocks", 2)
    kw.setdefault("latent_dim", 16)
    kw.setdefault("hidden_dim", 16)
    return init_gns(variant, seed=seed, dtype=np.float64, **kw)


class TestEncode:
    def test_dynamics_node_feature_dim(self):
        assert node_feature_dim(DYNAMICS_MODEL, 4) == 15
        g = make_graph([[0, 0, 0], [0.01, 0, 0]], [[0, 1]])
        assert graph_node_features(g, DYNAMICS_MODEL).shape == (2, 15)
        assert graph_node_features(g, EDGE_MODEL).shape == (2, 1)
        assert np.all(graph_node_features(g, EDGE_MODEL) == 0)

    def test_zero_encoders_zero_latents(self):
        params = zero_params(tiny_params(DYNAMICS_MODEL), parts=("encoders",))
        g = make_graph([[0, 0, 0], [0.01, 0, 0]], [[0, 1]])
        batch = make_batch([g], DYNAMICS_MODEL)
        tape = Tape()
        lifted = LiftedGns(tape, zero_params(params, parts=("blocks",)), needs_grad=False)
        h, gl, c = forward_latents(tape, lifted, batch)
        assert np.all(h.value == 0) and np.all(gl.value == 0) and np.all(c.value == 0)

    def test_identity_normalization_passthrough(self):
        params = tiny_params(DYNAMICS_MODEL)
        g = make_graph([[0, 0, 0], [0.01, 0, 0]], [[0, 1]])
        batch = make_batch([g], DYNAMICS_MODEL)
        st = params.stats
        normed = (batch.node_feats - st.node_mean) / st.node_std
        assert np.array_equal(normed, batch.node_feats)


def dense_reference_forward(params: GnsParameters, graph: ConnectivityGraph, variant: str):
    """Independent loop-based implementation of encode + blocks + decode."""
    def run_mlp(mlp, vec):
        h = vec
        for k in range(len(mlp.weights)):
            h = h @ mlp.weights[k] + mlp.biases[k]
            if k < len(mlp.weights) - 1:
                h = np.maximum(h, 0)
        return h

    st = params.stats
    n = graph.n_nodes
    # node features
    if variant == EDGE_MODEL:
        nf = np.zeros((n, 1))
    else:
        picked = graph.picked_mask.astype(float)
        nf = np.concatenate([
            graph.velocity_history.reshape(n, -1),
            np.stack([picked, 1 - picked], axis=1),
            graph.table_clearance[:, None],
        ], axis=1)
    nf = (nf - st.node_mean) / st.node_std

    halves = []  # (sender, receiver, undirected id)
    for k, (i, j) in enumerate(graph.edges):
        halves.append((int(i), int(j), k))
        halves.append((int(j), int(i), k))
    halves.sort(key=lambda t: (t[1], t[0]))

    def half_features(s, r, k):
        d = graph.points[s] - graph.points[r]
        norm = np.linalg.norm(d)
        if variant == EDGE_MODEL:
            f = np.concatenate([d, [norm]])
        else:
            mesh = float(graph.mesh_mask[k])
            from_rest = (norm - graph.rest_distances[k]) if graph.mesh_mask[k] else 0.0
            f = np.concatenate([d, [norm, mesh, 1 - mesh, from_rest]])
        return (f - st.edge_mean) / st.edge_std

    h = np.stack([run_mlp(params.node_encoder, nf[i]) for i in range(n)])
    g = np.stack([run_mlp(params.edge_encoder, half_features(s, r, k)) for s, r, k in halves])
    c = np.zeros(params.latent_dim)
    for blk in params.blocks:
        g_new = np.stack([
            run_mlp(blk.edge, np.concatenate([h[s], h[r], g[e], c])) + g[e]
            for e, (s, r, k) in enumerate(halves)
        ])
        h_new = np.empty_like(h)
        for i in range(n):
            agg = np.zeros(params.latent_dim)
            for e, (s, r, k) in enumerate(halves):
                if r == i:
                    agg += g_new[e]
            h_new[i] = run_mlp(blk.node, np.concatenate([h[i], agg, c])) + h[i]
        g, h = g_new, h_new
        if params.use_global:
            c = run_mlp(blk.globl, np.concatenate([c, h.mean(axis=0), g.mean(axis=0)]))
    if variant == EDGE_MODEL:
        logits = {}
        for e, (s, r, k) in enumerate(halves):
            logits.setdefault(k, []).append(run_mlp(params.decoder, g[e])[0])
        return np.array([0.5 * sum(logits[k]) for k in range(graph.n_edges)])
    out = np.stack([run_mlp(params.decoder, h[i]) for i in range(n)])
    return out * st.accel_std + st.accel_mean


class TestGnBlocks:
    def test_zero_updaters_pure_residual(self):
        params = tiny_params(DYNAMICS_MODEL)
        params = zero_params(params, parts=("blocks",))
        g = make_graph([[0, 0, 0], [0.02, 0, 0], [0, 0.02, 0]], [[0, 1], [1, 2]])
        batch = make_batch([g], DYNAMICS_MODEL)
        tape = Tape()
        lifted = LiftedGns(tape, params, needs_grad=False)
        h, gl, c = forward_latents(tape, lifted, batch)
        # recompute the encoder outputs alone
        p0 = params.copy()
        p0.l_blocks = 0
        p0.blocks = []
        tape0 = Tape()
        lifted0 = LiftedGns(tape0, p0, needs_grad=False)
        h0, gl0, c0 = forward_latents(tape0, lifted0, batch)
        assert np.array_equal(h.value, h0.value)
        assert np.array_equal(gl.value, gl0.value)
        assert np.all(c.value == 0)

    def test_single_edge_aggregate_is_single_term(self):
        params = tiny_params(DYNAMICS_MODEL, l_blocks=1)
        g = make_graph([[0, 0, 0], [0.02, 0, 0]], [[0, 1]])
        batch = make_batch([g], DYNAMICS_MODEL)
        tape = Tape()
        lifted = LiftedGns(tape, params, needs_grad=False)

        from clothbench.nn.mlp import mlp_forward as fwd
        from clothbench.nn.gnn import _normalize

        nf = tape.leaf(_normalize(batch.node_feats, params.stats.node_mean, params.stats.node_std, np.float64))
        ef = tape.leaf(_normalize(batch.edge_feats, params.stats.edge_mean, params.stats.edge_std, np.float64))
        h = fwd(tape, lifted.node_encoder, nf)
        gl = fwd(tape, lifted.edge_encoder, ef)
        c = tape.leaf(np.zeros((1, params.latent_dim)))
        edge_mlp, node_mlp, _ = lifted.blocks[0]
        hs = tape.gather(h, batch.senders)
        hr = tape.gather(h, batch.receivers)
        ce = tape.gather(c, batch.edge_graph)
        g_upd = tape.add(fwd(tape, edge_mlp, tape.concat([hs, hr, gl, ce])), gl)
        agg = tape.segment_sum(g_upd, batch.receivers, batch.n_nodes)
        # node 0 receives exactly the half-edge 1 -> 0
        incoming = g_upd.value[batch.receivers == 0]
        assert incoming.shape[0] == 1
        assert np.array_equal(agg.value[0], incoming[0])

    @pytest.mark.parametrize("variant", [DYNAMICS_MODEL, EDGE_MODEL])
    def test_triangle_matches_dense_reference(self, variant):
        params = tiny_params(variant, seed=3, l_blocks=2)
        pts = [[0, 0, 0], [0.02, 0, 0], [0, 0.02, 0.01]]
        gen = np.random.default_rng(4)
        hist = gen.normal(size=(3, 4, 3)) * 0.01
        g = make_graph(pts, [[0, 1], [0, 2], [1, 2]],
                       mesh_mask=[True, False, False], rest=[0.018, 0, 0],
                       history=hist, picked=1)
        expect = dense_reference_forward(params, g, variant)
        if variant == DYNAMICS_MODEL:
            got = forward_dynamics(g, params)
        else:
            probs = forward_edges(g, params)
            got = np.log(probs / (1 - probs))  # back to logits
        assert np.allclose(got, expect, rtol=1e-6, atol=1e-9)


def permute_graph(g: ConnectivityGraph, perm: np.ndarray) -> ConnectivityGraph:
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    new_edges = inv[g.edges]
    lo = np.minimum(new_edges[:, 0], new_edges[:, 1])
    hi = np.maximum(new_edges[:, 0], new_edges[:, 1])
    order = np.lexsort((hi, lo))
    picked = np.flatnonzero(g.picked_mask)
    return ConnectivityGraph(
        points=g.points[perm],
        edges=np.stack([lo, hi], axis=1)[order],
        mesh_mask=g.mesh_mask[order],
        rest_distances=g.rest_distances[order],
        velocity_history=g.velocity_history[perm],
        picked_mask=g.picked_mask[perm],
        table_clearance=g.table_clearance[perm],
    )


def random_graph(gen, n=8, variant=DYNAMICS_MODEL):
    pts = gen.uniform(-0.05, 0.05, (n, 3))
    pts[:, 1] = np.abs(pts[:, 1])
    from clothbench.graphs.edges import collision_edges

    edges = collision_edges(pts, 0.05)
    mesh = gen.uniform(size=len(edges)) < 0.5
    rest = np.where(mesh, gen.uniform(0.01, 0.03, len(edges)), 0.0)
    hist = gen.normal(size=(n, 4, 3)) * 0.02
    return make_graph(pts, edges, mesh, rest, history=hist, picked=int(gen.integers(n)))


class TestForwardProperties:
    def test_zero_decoder_outputs_accel_mean(self):
        params = tiny_params(DYNAMICS_MODEL, seed=5)
        params.decoder = zero_mlp(params.decoder)
        params.stats.accel_mean = np.array([0.3, -0.1, 0.2])
        g = random_graph(np.random.default_rng(6))
        out = forward_dynamics(g, params)
        assert np.allclose(out, params.stats.accel_mean[None, :])

    def test_permutation_equivariance(self):
        gen = np.random.default_rng(7)
        params = tiny_params(DYNAMICS_MODEL, seed=8)
        g = random_graph(gen, n=10)
        out = forward_dynamics(g, params)
        perm = gen.permutation(10)
        out_p = forward_dynamics(permute_graph(g, perm), params)
        assert np.allclose(out_p, out[perm], rtol=1e-6, atol=1e-12)

    def test_disconnected_duplicate_component(self):
        gen = np.random.default_rng(9)
        params = tiny_params(DYNAMICS_MODEL, seed=10)
        g = random_graph(gen, n=6)
        far = g.points + np.array([10.0, 0.0, 0.0])  # far outside the radius
        pts = np.vstack([g.points, far])
        edges = np.vstack([g.edges, g.edges + 6])
        mesh = np.concatenate([g.mesh_mask, g.mesh_mask])
        rest = np.concatenate([g.rest_distances, g.rest_distances])
        hist = np.concatenate([g.velocity_history, g.velocity_history])
        twin = make_graph(pts, edges, mesh, rest, history=hist)
        twin.table_clearance = np.concatenate([g.table_clearance, g.table_clearance])
        g2 = make_graph(g.points, g.edges, g.mesh_mask, g.rest_distances,
                        history=g.velocity_history)
        g2.table_clearance = g.table_clearance.copy()
        # no picked node in either graph half (mean-pooled global sees both)
        params.use_global = False
        out_twin = forward_dynamics(twin, params)
        out_single = forward_dynamics(g2, params)
        assert np.allclose(out_twin[:6], out_single, rtol=1e-9, atol=1e-12)
        assert np.allclose(out_twin[6:], out_single, rtol=1e-9, atol=1e-12)

    def test_edge_probs_half_at_zero_decoder(self):
        params = tiny_params(EDGE_MODEL, seed=11)
        params.decoder = zero_mlp(params.decoder)
        g = random_graph(np.random.default_rng(12), variant=EDGE_MODEL)
        probs = forward_edges(g, params)
        assert np.allclose(probs, 0.5)

    def test_edge_translation_invariance(self):
        params = tiny_params(EDGE_MODEL, seed=13)
        g = random_graph(np.random.default_rng(14), variant=EDGE_MODEL)
        probs = forward_edges(g, params)
        g_shift = make_graph(g.points + np.array([1.0, 2.0, 3.0]), g.edges,
                             g.mesh_mask, g.rest_distances, history=g.velocity_history)
        probs_shift = forward_edges(g_shift, params)
        assert np.allclose(probs, probs_shift, rtol=1e-9)
        assert np.all((probs > 0) & (probs < 1))

    def test_dynamics_translation_invariance_with_clearance_held(self):
        params = tiny_params(DYNAMICS_MODEL, seed=15)
        g = random_graph(np.random.default_rng(16))
        out = forward_dynamics(g, params)
        shifted = make_graph(g.points + np.array([0.5, 0.2, -0.3]), g.edges,
                             g.mesh_mask, g.rest_distances, history=g.velocity_history,
                             picked=int(np.flatnonzero(g.picked_mask)[0]))
        shifted.table_clearance = g.table_clearance.copy()  # hold the height feature
        out_shift = forward_dynamics(shifted, params)
        assert np.allclose(out, out_shift, rtol=1e-9, atol=1e-12)

    def test_locality_bound_on_path_graph(self):
        # a perturbation cannot reach nodes more than L hops away
        L = 2
        params = tiny_params(DYNAMICS_MODEL, seed=17, l_blocks=L)
        params.use_global = False
        n = 8
        pts = np.zeros((n, 3))
        pts[:, 0] = np.arange(n) * 0.03
        edges = [[k, k + 1] for k in range(n - 1)]
        hist = np.zeros((n, 4, 3))
        g = make_graph(pts, edges, history=hist)
        base = forward_dynamics(g, params)
        hist2 = hist.copy()
        hist2[0] += 0.5  # perturb node 0's history
        g2 = make_graph(pts, edges, history=hist2)
        pert = forward_dynamics(g2, params)
        changed = ~np.all(np.isclose(pert, base, rtol=1e-12, atol=1e-15), axis=1)
        assert changed[0]
        assert not changed[L + 1:].any()

    def test_global_ablation_hook(self):
        params = tiny_params(DYNAMICS_MODEL, seed=18)
        g = random_graph(np.random.default_rng(19))
        no_global = params.copy()
        no_global.use_global = False
        zeroed = params.copy()
        for blk in zeroed.blocks:
            blk.globl = zero_mlp(blk.globl)
        out_a = forward_dynamics(g, no_global)
        out_b = forward_dynamics(g, zeroed)
        assert np.array_equal(out_a, out_b)


class TestRewardHead:
    def test_zero_head_outputs_mean(self):
        params = tiny_params(DYNAMICS_MODEL, seed=20, with_reward_head=True)
        params.reward_head = zero_mlp(params.reward_head)
        params.stats.reward_mean = 0.017
        g = random_graph(np.random.default_rng(21))
        assert forward_reward(g, params) == pytest.approx(0.017)

    def test_denormalization(self):
        params = tiny_params(DYNAMICS_MODEL, seed=22, with_reward_head=True)
        params.stats.reward_mean = 0.01
        params.stats.reward_std = 0.5
        g = random_graph(np.random.default_rng(23))
        raw = (forward_reward(g, params) - 0.01) / 0.5
        params.stats.reward_mean = 0.0
        params.stats.reward_std = 1.0
        assert forward_reward(g, params) == pytest.approx(raw, rel=1e-9)

    def test_missing_head_rejected(self):
        params = tiny_params(DYNAMICS_MODEL, seed=24)
        g = random_graph(np.random.default_rng(25))
        with pytest.raises(ValueError):
            forward_reward(g, params)


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path):
        params = init_gns(DYNAMICS_MODEL, seed=3, l_blocks=2, latent_dim=16,
                          hidden_dim=16, with_reward_head=True)
        params.stats.node_mean = np.linspace(-1, 1, 15)
        save_model(params, tmp_path / "m1")
        loaded = load_model(tmp_path / "m1")
        save_model(loaded, tmp_path / "m2")
        assert (tmp_path / "m1" / "model.json").read_bytes() == (tmp_path / "m2" / "model.json").read_bytes()
        assert (tmp_path / "m1" / "model.f32").read_bytes() == (tmp_path / "m2" / "model.f32").read_bytes()
        for (na, a), (nb, b) in zip(params.named_arrays(), loaded.named_arrays()):
            assert na == nb
            assert np.array_equal(a.astype(np.float32), b)

    def test_forward_identical_after_roundtrip(self, tmp_path):
        params = init_gns(EDGE_MODEL, seed=4, l_blocks=2, latent_dim=16, hidden_dim=16)
        save_model(params, tmp_path / "m")
        loaded = load_model(tmp_path / "m")
        g = random_graph(np.random.default_rng(26), variant=EDGE_MODEL)
        assert np.array_equal(forward_edges(g, params), forward_edges(g, loaded))
