"""Training procedures for the edge classifier, dynamics models and the
privileged-imitation student."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import rng
from ..graphs.dataset import ClothDataset
from ..graphs.graph import ConnectivityGraph, zero_history
from ..nn.autodiff import Tape
from ..nn.checkpoint import save_model
from ..nn.gnn import (
    DYNAMICS_MODEL,
    EDGE_MODEL,
    GnsParameters,
    LiftedGns,
    NormStats,
    edge_logits_out,
    forward_latents,
    graph_edge_features,
    graph_node_features,
    init_gns,
    make_batch,
)
from .grad import LOSS_ACCEL, LOSS_ACCEL_REWARD, LOSS_EDGE, LOSS_IMITATION, backward
from .optim import AdamState, adam_step, clip_global_norm
from .schedule import PlateauState


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 16
    epochs: int = 120
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.0
    plateau_factor: float = 0.8
    plateau_patience: int = 5
    seed: int = 0
    lambda_node: float = 1.0
    lambda_global: float = 1.0
    lambda_reward: float = 0.1
    clip_norm: float = 1.0
    # architecture
    l_blocks: int = 10
    latent_dim: int = 128
    hidden_dim: int = 128
    use_global: bool = True
    # data handling
    step_stride: int = 1
    val_fraction: float = 0.1
    checkpoint_every: int = 0
    out_dir: str | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 < self.plateau_factor < 1.0:
            raise ValueError("plateau_factor must lie in (0, 1)")


def edge_graph_from(points: np.ndarray, edges: np.ndarray) -> ConnectivityGraph:
    """Bare proximity graph (no typing) as consumed by the edge classifier."""
    n = len(points)
    return ConnectivityGraph(
        points=np.asarray(points, dtype=np.float64),
        edges=np.asarray(edges, dtype=np.int64).reshape(-1, 2),
        mesh_mask=np.zeros(len(edges), dtype=bool),
        rest_distances=np.zeros(len(edges)),
        velocity_history=zero_history(n),
        picked_mask=np.zeros(n, dtype=bool),
        table_clearance=np.asarray(points, dtype=np.float64)[:, 1].copy(),
    )


def fit_stats(
    graphs: list[ConnectivityGraph],
    variant: str,
    history: int,
    accel_targets: list[np.ndarray] | None = None,
    rewards: list[float] | None = None,
) -> NormStats:
    """Per-dimension feature statistics over a sample of graphs."""
    node_rows = [graph_node_features(g, variant) for g in graphs]
    edge_rows = [graph_edge_features(g, variant)[2] for g in graphs if g.n_edges > 0]
    nodes = np.concatenate(node_rows, axis=0)
    edges = np.concatenate(edge_rows, axis=0)

    def moments(x):
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        std = np.where(std < 1e-6, 1.0, std)
        return mean, std

    stats = NormStats.identity(variant, history)
    stats.node_mean, stats.node_std = moments(nodes)
    stats.edge_mean, stats.edge_std = moments(edges)
    if accel_targets is not None:
        acc = np.concatenate(accel_targets, axis=0)
        stats.accel_mean, stats.accel_std = moments(acc)
    if rewards is not None:
        r = np.asarray(rewards, dtype=np.float64)
        stats.reward_mean = float(r.mean())
        std = float(r.std())
        stats.reward_std = std if std >= 1e-9 else 1.0
    stats.validate()
    return stats


def edge_accuracy(params: GnsParameters, batches) -> float:
    """Fraction of undirected edges classified correctly at threshold 0.5."""
    hits = total = 0
    for batch in batches:
        tape = Tape()
        lifted = LiftedGns(tape, params, needs_grad=False)
        _, g, _ = forward_latents(tape, lifted, batch)
        logits = edge_logits_out(tape, lifted, g, batch).value[:, 0]
        pred = logits > 0.0
        hits += int((pred == batch.edge_labels.astype(bool)).sum())
        total += len(pred)
    return hits / max(total, 1)


class _Loop:
    """Shared epoch loop: minibatch gradients, Adam, plateau schedule, metrics."""

    def __init__(self, params, cfg: TrainConfig, loss_kind, build_batch, train_ids, val_ids,
                 accuracy_fn=None):
        self.params = params
        self.cfg = cfg
        self.loss_kind = loss_kind
        self.build_batch = build_batch  # ids -> (batch, imitation_h, imitation_c)
        self.train_ids = list(train_ids)
        self.val_ids = list(val_ids)
        self.accuracy_fn = accuracy_fn
        self.named = dict(params.named_arrays())
        self.adam = AdamState()
        self.plateau = PlateauState(lr=cfg.learning_rate, patience=cfg.plateau_patience,
                                    factor=cfg.plateau_factor)
        self.history: list[dict] = []

    def _chunks(self, ids):
        b = self.cfg.batch_size
        return [ids[k:k + b] for k in range(0, len(ids), b)]

    def _loss_of(self, batch, imitation_h, imitation_c, with_grads):
        return backward(
            self.params, batch, self.loss_kind,
            lambda_node=self.cfg.lambda_node, lambda_global=self.cfg.lambda_global,
            lambda_reward=self.cfg.lambda_reward,
            imitation_h=imitation_h, imitation_c=imitation_c, with_grads=with_grads,
        )

    def validation_loss(self) -> float:
        if not self.val_ids:
            return float("nan")
        losses = []
        for chunk in self._chunks(self.val_ids):
            batch, ih, ic = self.build_batch(chunk)
            loss, _ = self._loss_of(batch, ih, ic, with_grads=False)
            losses.append(loss)
        return float(np.mean(losses))

    def run(self):
        cfg = self.cfg
        lr = cfg.learning_rate
        out_dir = Path(cfg.out_dir) if cfg.out_dir else None
        metrics_rows = []
        for epoch in range(cfg.epochs):
            order = list(rng.stream(cfg.seed, f"epoch/{epoch}").permutation(len(self.train_ids)))
            ids = [self.train_ids[k] for k in order]
            train_losses = []
            for chunk in self._chunks(ids):
                batch, ih, ic = self.build_batch(chunk)
                loss, grads = self._loss_of(batch, ih, ic, with_grads=True)
                clip_global_norm(grads, cfg.clip_norm)
                adam_step(self.named, grads, self.adam, learning_rate=lr,
                          beta1=cfg.beta1, beta2=cfg.beta2, weight_decay=cfg.weight_decay)
                train_losses.append(loss)
            val = self.validation_loss()
            acc = self.accuracy_fn(self.params) if self.accuracy_fn else None
            row = {
                "epoch": epoch,
                "train_loss": float(np.mean(train_losses)),
                "val_loss": val,
                "accuracy": "" if acc is None else acc,
                "lr": lr,
            }
            metrics_rows.append(row)
            self.history.append(row)
            lr = self.plateau.update(val if np.isfinite(val) else row["train_loss"])
            if out_dir and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
                save_model(self.params, out_dir / f"epoch_{epoch + 1:04d}")
        if out_dir:
            out_dir.mkdir(parents=True, exist_ok=True)
            with open(out_dir / "metrics.csv", "w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "val_loss",
                                                        "accuracy", "lr"])
                writer.writeheader()
                writer.writerows(metrics_rows)
            save_model(self.params, out_dir / "final")
        return self.params


def _step_indices(traj, stride: int) -> list[int]:
    return list(range(0, traj.n_steps, max(stride, 1)))


def train_edge(dataset: ClothDataset, cfg: TrainConfig) -> GnsParameters:
    """Train the mesh-edge classifier on stored proximity-edge labels."""
    train_tr, val_tr = dataset.split(cfg.val_fraction)
    if not train_tr:
        raise ValueError("empty dataset")

    def collect(traj_ids):
        samples = []
        for i in traj_ids:
            traj = dataset.trajectory(i)
            for t in _step_indices(traj, cfg.step_stride):
                pts, edges, labels = traj.edge_sample(t)
                if len(edges) == 0:
                    continue
                samples.append((edge_graph_from(pts, edges), labels))
        return samples

    train_samples = collect(train_tr)
    val_samples = collect(val_tr)
    if not train_samples:
        raise ValueError("dataset produced no edge samples")

    params = init_gns(EDGE_MODEL, seed=cfg.seed, l_blocks=cfg.l_blocks,
                      latent_dim=cfg.latent_dim, hidden_dim=cfg.hidden_dim,
                      history=dataset.cfg.history, use_global=cfg.use_global)
    params.stats = fit_stats([g for g, _ in train_samples], EDGE_MODEL, dataset.cfg.history)

    def build(ids):
        graphs = [train_pool[i][0] for i in ids]
        labels = [train_pool[i][1] for i in ids]
        return make_batch(graphs, EDGE_MODEL, edge_labels=labels), None, None

    train_pool = train_samples + val_samples
    train_ids = list(range(len(train_samples)))
    val_ids = list(range(len(train_samples), len(train_pool)))

    val_batches = [build(chunk)[0] for chunk in
                   [val_ids[k:k + cfg.batch_size] for k in range(0, len(val_ids), cfg.batch_size)]]
    acc_fn = (lambda p: edge_accuracy(p, val_batches)) if val_batches else None

    loop = _Loop(params, cfg, LOSS_EDGE, build, train_ids, val_ids, accuracy_fn=acc_fn)
    return loop.run()


def _student_pool(dataset: ClothDataset, traj_ids, stride):
    samples = []
    for i in traj_ids:
        traj = dataset.trajectory(i)
        for t in _step_indices(traj, stride):
            s = traj.student_sample(t)
            if s.graph.n_edges == 0:
                continue
            samples.append(s)
    return samples


def _teacher_pool(dataset: ClothDataset, traj_ids, stride):
    samples = []
    for i in traj_ids:
        traj = dataset.trajectory(i)
        for t in _step_indices(traj, stride):
            samples.append(traj.teacher_sample(t))
    return samples


def train_dynamics(dataset: ClothDataset, cfg: TrainConfig, full_state: bool = False) -> GnsParameters:
    """Train a dynamics model.

    `full_state=False` trains on voxelized partial clouds with labelled mesh
    edges; `full_state=True` trains the privileged teacher on all subsampled
    particles with true springs, jointly with the auxiliary reward head.
    """
    train_tr, val_tr = dataset.split(cfg.val_fraction)
    if not train_tr:
        raise ValueError("empty dataset")
    pool_fn = _teacher_pool if full_state else _student_pool
    train_samples = pool_fn(dataset, train_tr, cfg.step_stride)
    val_samples = pool_fn(dataset, val_tr, cfg.step_stride)
    if not train_samples:
        raise ValueError("dataset produced no dynamics samples")

    params = init_gns(DYNAMICS_MODEL, seed=cfg.seed, l_blocks=cfg.l_blocks,
                      latent_dim=cfg.latent_dim, hidden_dim=cfg.hidden_dim,
                      history=dataset.cfg.history, use_global=cfg.use_global,
                      with_reward_head=full_state)
    params.stats = fit_stats(
        [s.graph for s in train_samples], DYNAMICS_MODEL, dataset.cfg.history,
        accel_targets=[s.target_accelerations for s in train_samples],
        rewards=[s.reward_next for s in train_samples] if full_state else None,
    )

    pool = train_samples + val_samples
    loss_kind = LOSS_ACCEL_REWARD if full_state else LOSS_ACCEL

    def build(ids):
        graphs = [pool[i].graph for i in ids]
        accel = [pool[i].target_accelerations for i in ids]
        rewards = [pool[i].reward_next for i in ids] if full_state else None
        return make_batch(graphs, DYNAMICS_MODEL, accel_targets=accel, rewards=rewards), None, None

    train_ids = list(range(len(train_samples)))
    val_ids = list(range(len(train_samples), len(pool)))
    loop = _Loop(params, cfg, loss_kind, build, train_ids, val_ids)
    return loop.run()


def _copy_mlp_into(dst, src):
    dst.weights = [w.copy() for w in src.weights]
    dst.biases = [b.copy() for b in src.biases]


def train_student_imitation(teacher: GnsParameters, dataset: ClothDataset,
                            cfg: TrainConfig) -> GnsParameters:
    """Distil the privileged teacher into a partial-observation student.

    The student copies the teacher's encoders, decoder and reward head at
    initialisation, then trains with acceleration loss, reward loss and MSE
    imitation of the teacher's final node/global embeddings under the
    point-to-particle correspondence.  The teacher is never modified.
    """
    if teacher.reward_head is None:
        raise ValueError("imitation requires a teacher with a reward head")
    train_tr, val_tr = dataset.split(cfg.val_fraction)

    def paired(traj_ids):
        stu, tea = [], []
        for i in traj_ids:
            traj = dataset.trajectory(i)
            for t in _step_indices(traj, cfg.step_stride):
                s = traj.student_sample(t)
                if s.graph.n_edges == 0:
                    continue
                stu.append(s)
                tea.append(traj.teacher_sample(t))
        return stu, tea

    stu_train, tea_train = paired(train_tr)
    stu_val, tea_val = paired(val_tr)

    student = init_gns(DYNAMICS_MODEL, seed=cfg.seed + 1, l_blocks=teacher.l_blocks,
                       latent_dim=teacher.latent_dim, hidden_dim=teacher.hidden_dim,
                       history=teacher.history, use_global=teacher.use_global,
                       with_reward_head=True)
    _copy_mlp_into(student.node_encoder, teacher.node_encoder)
    _copy_mlp_into(student.edge_encoder, teacher.edge_encoder)
    _copy_mlp_into(student.decoder, teacher.decoder)
    _copy_mlp_into(student.reward_head, teacher.reward_head)
    import copy as _copy

    student.stats = _copy.deepcopy(teacher.stats)

    stu_pool = stu_train + stu_val
    tea_pool = tea_train + tea_val

    def build(ids):
        graphs = [stu_pool[i].graph for i in ids]
        accel = [stu_pool[i].target_accelerations for i in ids]
        rewards = [stu_pool[i].reward_next for i in ids]
        batch = make_batch(graphs, DYNAMICS_MODEL, accel_targets=accel, rewards=rewards)
        t_batch = make_batch([tea_pool[i].graph for i in ids], DYNAMICS_MODEL)
        tape = Tape()
        lifted = LiftedGns(tape, teacher, needs_grad=False)
        h_t, _, c_t = forward_latents(tape, lifted, t_batch)
        # teacher target rows for each student node via the stored matching
        rows = []
        for slot, i in enumerate(ids):
            offset = t_batch.node_offsets[slot]
            rows.append(offset + stu_pool[i].matched_particles)
        idx = np.concatenate(rows)
        return batch, h_t.value[idx].astype(np.float64), c_t.value.astype(np.float64)

    train_ids = list(range(len(stu_train)))
    val_ids = list(range(len(stu_train), len(stu_pool)))
    loop = _Loop(student, cfg, LOSS_IMITATION, build, train_ids, val_ids)
    return loop.run()
