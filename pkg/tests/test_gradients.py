import numpy as np
import pytest

from clothbench.graphs.edges import collision_edges
from clothbench.graphs.graph import ConnectivityGraph
from clothbench.nn.gnn import DYNAMICS_MODEL, EDGE_MODEL, init_gns, make_batch
from clothbench.nn.mlp import MlpParams, mlp_apply
from clothbench.train.grad import (
    LOSS_ACCEL,
    LOSS_ACCEL_REWARD,
    LOSS_EDGE,
    LOSS_IMITATION,
    backward,
)
from clothbench.train.losses import loss_accel, loss_edge, loss_imitation, loss_reward
from clothbench.train.optim import AdamState, adam_step, clip_global_norm
from clothbench.train.schedule import PlateauState, lr_on_plateau


def random_graph(gen, n=7):
    pts = gen.uniform(-0.05, 0.05, (n, 3))
    pts[:, 1] = np.abs(pts[:, 1]) + 0.005
    edges = collision_edges(pts, 0.06)
    mesh = gen.uniform(size=len(edges)) < 0.5
    rest = np.where(mesh, gen.uniform(0.01, 0.03, len(edges)), 0.0)
    hist = gen.normal(size=(n, 4, 3)) * 0.02
    picked = np.zeros(n, dtype=bool)
    picked[int(gen.integers(n))] = True
    return ConnectivityGraph(
        points=pts, edges=edges, mesh_mask=mesh, rest_distances=rest,
        velocity_history=hist, picked_mask=picked, table_clearance=pts[:, 1].copy(),
    )


def random_batch(seed, variant, n_graphs=3, with_rewards=False):
    gen = np.random.default_rng(seed)
    graphs = [random_graph(gen) for _ in range(n_graphs)]
    accel = [gen.normal(size=(g.n_nodes, 3)) for g in graphs] if variant == DYNAMICS_MODEL else None
    labels = [gen.integers(0, 2, g.n_edges).astype(bool) for g in graphs] if variant == EDGE_MODEL else None
    rewards = [float(gen.uniform(0.01, 0.03)) for _ in graphs] if with_rewards else None
    return make_batch(graphs, variant, accel_targets=accel, edge_labels=labels, rewards=rewards), graphs


def tiny(variant, **kw):
    kw.setdefault("l_blocks", 2)
    kw.setdefault("latent_dim", 8)
    kw.setdefault("hidden_dim", 8)
    kw.setdefault("dtype", np.float64)
    return init_gns(variant, seed=0, **kw)


def fd_check(params, batch, loss_kind, n_coords=220, seed=0, **kw):
    """Central finite differences on float64 shadow parameters."""
    loss0, grads = backward(params, batch, loss_kind, **kw)
    named = dict(params.named_arrays())
    gen = np.random.default_rng(seed)
    names = sorted(named)
    step = 1e-4
    def probe(name, k, h):
        flat = named[name].reshape(-1)
        orig = flat[k]
        flat[k] = orig + h
        lp, _ = backward(params, batch, loss_kind, with_grads=False, **kw)
        flat[k] = orig - h
        lm, _ = backward(params, batch, loss_kind, with_grads=False, **kw)
        flat[k] = orig
        return (lp - lm) / (2 * h)

    checked = 0
    worst = 0.0
    while checked < n_coords:
        name = names[int(gen.integers(len(names)))]
        k = int(gen.integers(named[name].size))
        an = float(grads[name].reshape(-1)[k])
        fd = probe(name, k, step)
        rel = abs(fd - an) / max(abs(fd), abs(an), 1e-8)
        if rel > 1e-3:
            # a ReLU kink inside +-step corrupts the quotient; a smaller step
            # converges iff the analytic gradient is right
            fd = probe(name, k, 1e-6)
            rel = abs(fd - an) / max(abs(fd), abs(an), 1e-8)
        worst = max(worst, rel)
        assert rel <= 1e-3, f"{name}[{k}]: fd={fd} analytic={an} rel={rel}"
        checked += 1
    return worst


class TestFiniteDifferences:
    def test_dynamics_gradients(self):
        params = tiny(DYNAMICS_MODEL)
        batch, _ = random_batch(1, DYNAMICS_MODEL)
        fd_check(params, batch, LOSS_ACCEL, n_coords=220)

    def test_edge_gradients(self):
        params = tiny(EDGE_MODEL)
        batch, _ = random_batch(2, EDGE_MODEL)
        fd_check(params, batch, LOSS_EDGE, n_coords=220)

    def test_teacher_gradients_with_reward(self):
        params = tiny(DYNAMICS_MODEL, with_reward_head=True)
        batch, _ = random_batch(3, DYNAMICS_MODEL, with_rewards=True)
        fd_check(params, batch, LOSS_ACCEL_REWARD, n_coords=120)

    def test_imitation_gradients(self):
        params = tiny(DYNAMICS_MODEL, with_reward_head=True)
        batch, _ = random_batch(4, DYNAMICS_MODEL, with_rewards=True)
        gen = np.random.default_rng(5)
        ih = gen.normal(size=(batch.n_nodes, params.latent_dim))
        ic = gen.normal(size=(batch.n_graphs, params.latent_dim))
        fd_check(params, batch, LOSS_IMITATION, n_coords=120,
                 imitation_h=ih, imitation_c=ic)

    def test_scalar_toy_network_hand_chain_rule(self):
        # all-positive weights on positive input keep every ReLU active:
        # y = w3(w2(w1(w0 x + b0) + b1) + b2) + b3, dL/dw0 = 2(y - t) w3 w2 w1 x
        w = [0.7, 1.3, 0.9, 1.1]
        b = [0.2, 0.1, 0.3, 0.05]
        mlp = MlpParams(weights=[np.array([[wi]]) for wi in w],
                        biases=[np.array([bi]) for bi in b])
        x, t = 0.8, 2.0
        y = float(mlp_apply(mlp, np.array([[x]]))[0, 0])

        from clothbench.nn.autodiff import Tape
        from clothbench.nn.mlp import MlpTensors, mlp_forward

        tape = Tape()
        lifted = MlpTensors(tape, mlp, needs_grad=True)
        out = mlp_forward(tape, lifted, tape.leaf(np.array([[x]])))
        loss = tape.mse(out, np.array([[t]]))
        tape.backward(loss)
        grad_w0 = float(lifted.weights[0].grad[0, 0])
        expect = 2 * (y - t) * w[3] * w[2] * w[1] * x
        assert grad_w0 == pytest.approx(expect, rel=1e-8)


class TestLosses:
    def test_zero_at_target(self):
        x = np.random.default_rng(0).normal(size=(5, 3))
        assert loss_accel(x, x) == 0.0
        labels = np.array([0.0, 1.0, 1.0, 0.0])
        assert loss_edge(labels, labels) <= 1e-6
        assert loss_reward(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
        h = np.ones((4, 8))
        c = np.zeros((1, 8))
        assert loss_imitation(h, h, c, c) == 0.0

    def test_bce_at_half_is_ln2(self):
        probs = np.full(10, 0.5)
        labels = np.array([0, 1] * 5, dtype=float)
        assert loss_edge(probs, labels) == pytest.approx(np.log(2), rel=1e-12)

    def test_matches_naive_loop_oracle(self):
        gen = np.random.default_rng(1)
        pred = gen.normal(size=(6, 3))
        target = gen.normal(size=(6, 3))
        naive = sum((pred[i, k] - target[i, k]) ** 2 for i in range(6) for k in range(3)) / 18
        assert loss_accel(pred, target) == pytest.approx(naive, rel=1e-7)

        probs = gen.uniform(0.01, 0.99, 12)
        labels = gen.integers(0, 2, 12).astype(float)
        naive = -np.mean([labels[i] * np.log(probs[i]) + (1 - labels[i]) * np.log(1 - probs[i])
                          for i in range(12)])
        assert loss_edge(probs, labels) == pytest.approx(naive, rel=1e-7)

    def test_shape_and_empty_errors(self):
        with pytest.raises(ValueError):
            loss_accel(np.zeros((2, 3)), np.zeros((3, 3)))
        with pytest.raises(ValueError):
            loss_edge(np.zeros(0), np.zeros(0))


class TestAdam:
    def test_zero_gradient_no_change(self):
        p = {"w": np.array([1.0, -2.0])}
        before = p["w"].copy()
        adam_step(p, {"w": np.zeros(2)}, AdamState())
        assert np.array_equal(p["w"], before)

    def test_first_step_magnitude(self):
        p = {"w": np.array([0.0])}
        adam_step(p, {"w": np.array([1.0])}, AdamState(), learning_rate=1e-4)
        expect = 1e-4 / (1.0 + 1e-8)
        assert p["w"][0] == pytest.approx(-expect, rel=1e-12)

    def test_determinism(self):
        def run():
            gen = np.random.default_rng(3)
            p = {"w": gen.normal(size=(4, 4))}
            st = AdamState()
            for _ in range(20):
                adam_step(p, {"w": gen.normal(size=(4, 4))}, st, learning_rate=1e-3)
            return p["w"]

        assert np.array_equal(run(), run())

    def test_clip_global_norm(self):
        grads = {"a": np.array([3.0, 0.0]), "b": np.array([4.0])}
        total = clip_global_norm(grads, 1.0)
        assert total == pytest.approx(5.0)
        norm_after = np.sqrt(sum((g ** 2).sum() for g in grads.values()))
        assert norm_after == pytest.approx(1.0)


class TestPlateau:
    def test_decreasing_keeps_lr(self):
        assert lr_on_plateau([1.0, 0.9, 0.8, 0.7], patience=2, lr=1e-4) == 1e-4

    def test_flat_reduces_once(self):
        history = [1.0] * 4  # first sets best; 3 = patience bad epochs follow
        assert lr_on_plateau(history, patience=3, lr=1e-4) == pytest.approx(0.8e-4)

    def test_floor(self):
        state = PlateauState(lr=2e-6, patience=1)
        for _ in range(10):
            state.update(1.0)
        assert state.lr == pytest.approx(1e-6)


class TestMonotonicity:
    @pytest.mark.parametrize("variant,kind", [(DYNAMICS_MODEL, LOSS_ACCEL),
                                              (EDGE_MODEL, LOSS_EDGE)])
    def test_single_batch_loss_decreases_20_steps(self, variant, kind):
        params = tiny(variant, latent_dim=16, hidden_dim=16)
        batch, _ = random_batch(6, variant)
        named = dict(params.named_arrays())
        state = AdamState()
        losses = []
        for _ in range(21):
            loss, grads = backward(params, batch, kind)
            losses.append(loss)
            clip_global_norm(grads, 1.0)
            adam_step(named, grads, state, learning_rate=1e-4)
        diffs = np.diff(losses)
        assert np.all(diffs < 0), losses
