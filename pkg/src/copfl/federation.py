"""Round-based federated training: CO-PFL and the baselines under one harness.

One round of CO-PFL:

1. the server broadcasts its model and mask;
2. every client rebuilds its working model (personalized coordinates from its
   own retained values, the rest from the broadcast), runs the personalized
   and shared optimizer phases, and grows its mask;
3. the server unions the client masks, scores each client against the
   leave-one-out aggregate, turns the scores into weights, sums the shared
   parts with those weights and refreshes the coordinates no client keeps.

Everything random is drawn from generators keyed by (seed, client, phase,
epoch), so results do not depend on the order clients are processed in.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import cowa
from .data import ClientDataset, PartitionSpec, apply_feature_shift, class_overlap, gen_synthetic, load_csv_pool, partition
from .mamo import MamoState, Phase, apply_step
from .models import LabeledBatch, ModelKind, ModelSpec, NumericError, accuracy, init_params, loss_and_grad, predict_loss
from .params import elementwise_mul, mask_complement, mask_union, popcount
from .pwpm import PersonalizationConfig, param_diff, update_mask

log = logging.getLogger(__name__)

_PHASE_KEY = {Phase.PERSONALIZED: 0, Phase.SHARED: 1, "finetune": 2}


class AlgorithmKind(str, Enum):
    CO_PFL = "co_pfl"
    FEDAVG = "fedavg"
    FEDAVG_FT = "fedavg_ft"
    LOCAL_ONLY = "local_only"
    FIXED_HEAD = "fixed_head"


@dataclass(frozen=True)
class HyperParams:
    lr: float
    local_iters: int = 1
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    rate: float = 0.0
    budget: float = 0.0
    literal_decay: bool = False

    def fresh_optimizer(self, d: int) -> MamoState:
        return MamoState.zeros(
            d, beta1=self.beta1, beta2=self.beta2, eps=self.eps, lr=self.lr,
            literal_decay=self.literal_decay,
        )


@dataclass
class ClientState:
    id: int
    model: np.ndarray
    mask: np.ndarray
    mamo: MamoState
    retained_personalized: np.ndarray
    data: ClientDataset


@dataclass
class ServerState:
    model: np.ndarray
    prev_model: np.ndarray | None
    server_mask: np.ndarray
    weights: list[float]
    round: int = 0


@dataclass
class ClientRoundStats:
    client_id: int
    test_acc: float
    train_loss: float
    alpha: float
    gamma_grad: float
    gamma_data: float
    mask_popcount: int
    failed: bool = False


@dataclass
class RoundRecord:
    round: int
    clients: list[ClientRoundStats]
    mean_acc: float
    std_acc: float
    wall_ms: float
    server_mask_popcount: int = 0

    @property
    def alphas(self) -> list[float]:
        return [c.alpha for c in self.clients]


@dataclass
class ExperimentResult:
    records: list[RoundRecord]
    client_models: list[np.ndarray]
    server_model: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def final_accuracies(self) -> list[float]:
        return [c.test_acc for c in self.records[-1].clients] if self.records else []


def minibatch(data: LabeledBatch, seed: int, client_id: int, phase, step: int, batch_size: int) -> LabeledBatch:
    """Batch number ``step`` of a client's reshuffled-every-epoch stream.

    Epochs drop the incomplete tail batch, so every batch has exactly
    ``batch_size`` samples (or the whole set when it is smaller).
    """
    n = len(data)
    if batch_size >= n:
        return data
    per_epoch = n // batch_size
    epoch, pos = divmod(step, per_epoch)
    rng = np.random.default_rng([seed, client_id, _PHASE_KEY[phase], epoch])
    perm = rng.permutation(n)
    return data.take(perm[pos * batch_size : (pos + 1) * batch_size])


def _run_phase(spec, w, state, mask, phase, client: ClientState, hyper: HyperParams, seed: int, round_idx: int):
    for t in range(hyper.local_iters):
        batch = minibatch(client.data.train, seed, client.id, phase,
                          round_idx * hyper.local_iters + t, hyper.batch_size)
        _, grad = loss_and_grad(spec, w, batch)
        w, state = apply_step(state, w, grad, mask, phase)
    return w, state


def client_round(
    client: ClientState,
    broadcast_model: np.ndarray,
    broadcast_mask: np.ndarray,
    hyper: HyperParams,
    spec: ModelSpec,
    seed: int,
    round_idx: int,
    grow_mask: bool = True,
) -> tuple[ClientState, np.ndarray, np.ndarray]:
    """Local work of one client for one round.

    Returns the updated client, its signed update ``w_start - w_end`` and the
    new mask. ``broadcast_mask`` is accepted for protocol completeness only;
    the client's own mask decides what is personalized.
    """
    del broadcast_mask
    mask = client.mask
    w_start = np.where(mask.astype(bool), client.retained_personalized, broadcast_model)
    state = client.mamo

    w_pers = w_start
    if mask.any():
        w_pers, state = _run_phase(spec, w_start, state, mask, Phase.PERSONALIZED,
                                   client, hyper, seed, round_idx)
    w_shared = w_start
    if not mask.all():
        w_shared, state = _run_phase(spec, w_start, state, mask, Phase.SHARED,
                                     client, hyper, seed, round_idx)
    w_new = elementwise_mul(w_shared, mask_complement(mask)) + elementwise_mul(w_pers, mask)

    delta_abs, delta = param_diff(w_start, w_new)
    new_mask = mask
    if grow_mask:
        new_mask = update_mask(mask, delta_abs, PersonalizationConfig(hyper.rate, hyper.budget))
    updated = replace(
        client, model=w_new, mask=new_mask, mamo=state,
        retained_personalized=elementwise_mul(w_new, new_mask),
    )
    return updated, delta, new_mask


def aggregate_shared(models, masks, alphas, renorm_per_coord: bool = False) -> np.ndarray:
    """Weighted sum of the clients' shared parts, accumulated in client order.

    With ``renorm_per_coord`` every coordinate is divided by the total
    weight of the clients that share it (coordinates nobody shares become 0).
    """
    if not (len(models) == len(masks) == len(alphas)) or not models:
        raise ValueError("need equally many models, masks and weights (at least one)")
    g = np.zeros_like(np.asarray(models[0], dtype=np.float64))
    denom = np.zeros_like(g)
    for w, m, a in zip(models, masks, alphas):
        shared = mask_complement(m)
        g += a * elementwise_mul(w, shared)
        denom += a * shared
    if renorm_per_coord:
        g = np.divide(g, denom, out=np.zeros_like(g), where=denom > 0)
    return g


def server_update(server: ServerState, g_new: np.ndarray, union: np.ndarray) -> ServerState:
    """Take aggregated values where no client personalizes, keep the rest."""
    model = np.where(union.astype(bool), server.model, g_new)
    return replace(server, model=model, prev_model=server.model, server_mask=union.copy(),
                   round=server.round + 1)


class Federation:
    """An initialized experiment: clients, server and everything they share."""

    def __init__(self, config, jobs: int = 1):
        self.config = config
        self.algorithm = AlgorithmKind(config.algorithm)
        self.jobs = max(1, int(jobs))
        self.seed = int(config.seed)
        dc = config.data
        self.clients_data = _build_datasets(config)
        self.spec = ModelSpec(
            kind=ModelKind(config.model.kind), input_dim=self.clients_data[0].train.inputs.shape[1],
            num_classes=dc.num_classes, hidden_dim=config.model.hidden_dim,
        )
        self.num_classes = dc.num_classes
        self.hyper = HyperParams(
            lr=config.lr, local_iters=config.local_iters, batch_size=config.batch_size,
            beta1=config.beta1, beta2=config.beta2, eps=config.epsilon,
            rate=config.p, budget=config.gamma, literal_decay=config.mamo.literal_decay,
        )
        d = self.spec.num_params
        w0 = init_params(self.spec, [self.seed, 1])
        mask0 = np.zeros(d, dtype=np.uint8)
        if self.algorithm is AlgorithmKind.FIXED_HEAD:
            mask0[self.spec.head_slice()] = 1
        n = len(self.clients_data)
        self.clients = [
            ClientState(
                id=i, model=w0.copy(), mask=mask0.copy(), mamo=self.hyper.fresh_optimizer(d),
                retained_personalized=elementwise_mul(w0, mask0), data=cd,
            )
            for i, cd in enumerate(self.clients_data)
        ]
        self.server = ServerState(model=w0.copy(), prev_model=None, server_mask=mask0.copy(),
                                  weights=[1.0 / n] * n)
        self.records: list[RoundRecord] = []

    @property
    def num_clients(self) -> int:
        return len(self.clients)

    def metadata(self) -> dict:
        overlap = class_overlap(self.clients_data)
        return {
            "num_params": self.spec.num_params,
            "class_sets": [sorted(cd.class_set) for cd in self.clients_data],
            "class_overlap": {str(k): v for k, v in overlap.items()},
            "overlapping_class_sets": any(v > 1 for v in overlap.values()),
            "contribution_scoring": "orchestrator",
        }

    # -- one round -------------------------------------------------------

    def _local_step(self, client: ClientState, k: int):
        algo = self.algorithm
        if algo is AlgorithmKind.LOCAL_ONLY:
            broadcast = client.model
        else:
            broadcast = self.server.model
        grow = algo is AlgorithmKind.CO_PFL
        try:
            return client_round(client, broadcast, self.server.server_mask, self.hyper, self.spec,
                                self.seed, k, grow_mask=grow)
        except NumericError as exc:
            log.warning("client %d failed in round %d: %s", client.id, k, exc)
            return None

    def _score(self, prev_models, deltas, survivors) -> dict[int, tuple[float, float]]:
        cc = self.config.cowa
        server = self.server
        delta_global = server.prev_model - server.model
        neutral_data = math.log(self.num_classes)
        raw = {}
        for n in survivors:
            a_prev = server.weights[n]
            gg = gd = 0.0
            if cc.use_grad:
                dn = deltas[n]
                if cc.shared_only_direction:
                    dn = elementwise_mul(dn, mask_complement(self.clients[n].mask))
                try:
                    gg = cowa.gradient_score(dn, cowa.leave_one_out_direction(delta_global, dn, a_prev))
                except cowa.DegenerateLeaveOneOut:
                    gg = 1.0
            if cc.use_data:
                try:
                    w_loo = cowa.leave_one_out_model(server.model, prev_models[n], a_prev)
                    gd = cowa.prediction_score(self.spec, w_loo, self.clients[n].data.train)
                except (cowa.DegenerateLeaveOneOut, NumericError):
                    gd = neutral_data
            raw[n] = (gg, gd)
        if cc.normalize_components and raw:
            ids = list(raw)
            gs = cowa.min_max_normalize([raw[i][0] for i in ids]) if cc.use_grad else [0.0] * len(ids)
            ds = cowa.min_max_normalize([raw[i][1] for i in ids]) if cc.use_data else [0.0] * len(ids)
            raw = {i: (g, d) for i, g, d in zip(ids, gs, ds)}
        return raw

    def _weights(self, k, prev_models, deltas, survivors):
        n = self.num_clients
        scores = {i: (0.0, 0.0) for i in range(n)}
        cc = self.config.cowa
        use_cowa = (self.algorithm is AlgorithmKind.CO_PFL and cc.enabled
                    and self.server.prev_model is not None)
        if use_cowa:
            scores.update(self._score(prev_models, deltas, survivors))
        reports = cowa.combine_and_normalize([scores[i] for i in survivors], survivors)
        alphas = [0.0] * n
        for r in reports:
            alphas[r.client_id] = r.alpha
        return alphas, scores

    def run_round(self) -> RoundRecord | None:
        """Advance one round; returns a record when this round is evaluated."""
        t0 = time.perf_counter()
        k = self.server.round
        prev_models = [c.model for c in self.clients]

        if self.jobs > 1:
            with ThreadPoolExecutor(max_workers=self.jobs) as pool:
                outcomes = list(pool.map(lambda c: self._local_step(c, k), self.clients))
        else:
            outcomes = [self._local_step(c, k) for c in self.clients]

        deltas = {}
        survivors = []
        for i, out in enumerate(outcomes):
            if out is None:
                continue
            self.clients[i], deltas[i], _ = out
            survivors.append(i)

        n = self.num_clients
        if not survivors:
            log.error("every client failed in round %d; server model unchanged", k)
            alphas, scores = list(self.server.weights), {i: (0.0, 0.0) for i in range(n)}
            self.server = replace(self.server, round=k + 1)
        elif self.algorithm is AlgorithmKind.LOCAL_ONLY:
            alphas = [1.0 / len(survivors) if i in survivors else 0.0 for i in range(n)]
            scores = {i: (0.0, 0.0) for i in range(n)}
            self.server = replace(self.server, weights=alphas, round=k + 1)
        else:
            alphas, scores = self._weights(k, prev_models, deltas, survivors)
            union = mask_union([c.mask for c in self.clients])
            g = aggregate_shared(
                [self.clients[i].model for i in survivors],
                [self.clients[i].mask for i in survivors],
                [alphas[i] for i in survivors],
                renorm_per_coord=self.config.renorm_per_coord,
            )
            self.server = replace(server_update(self.server, g, union), weights=alphas)

        last = k + 1 == self.config.rounds
        if (k + 1) % self.config.eval_every and not last:
            return None
        stats = []
        for i, c in enumerate(self.clients):
            model = self.evaluation_model(i)
            stats.append(ClientRoundStats(
                client_id=c.id,
                test_acc=accuracy(self.spec, model, c.data.test),
                train_loss=predict_loss(self.spec, model, c.data.train),
                alpha=alphas[i], gamma_grad=scores[i][0], gamma_data=scores[i][1],
                mask_popcount=popcount(c.mask), failed=i not in survivors,
            ))
        accs = np.array([s.test_acc for s in stats])
        rec = RoundRecord(
            round=k, clients=stats, mean_acc=float(accs.mean()), std_acc=float(accs.std()),
            wall_ms=(time.perf_counter() - t0) * 1000.0,
            server_mask_popcount=popcount(self.server.server_mask),
        )
        self.records.append(rec)
        return rec

    # -- evaluation --------------------------------------------------------

    def fine_tune(self, client: ClientState, start: np.ndarray) -> np.ndarray:
        """Full-batch local steps from ``start`` with a fresh optimizer."""
        w = start
        state = self.hyper.fresh_optimizer(self.spec.num_params)
        zero = np.zeros(self.spec.num_params, dtype=np.uint8)
        for _ in range(self.config.ft_steps):
            _, grad = loss_and_grad(self.spec, w, client.data.train)
            w, state = apply_step(state, w, grad, zero, Phase.SHARED)
        return w

    def evaluation_model(self, i: int) -> np.ndarray:
        algo = self.algorithm
        if algo is AlgorithmKind.FEDAVG:
            return self.server.model
        if algo is AlgorithmKind.FEDAVG_FT:
            return self.fine_tune(self.clients[i], self.server.model)
        return self.clients[i].model

    def personalized_models(self) -> list[np.ndarray]:
        return [self.evaluation_model(i) for i in range(self.num_clients)]

    def run(self) -> ExperimentResult:
        while self.server.round < self.config.rounds:
            self.run_round()
        return ExperimentResult(
            records=self.records, client_models=self.personalized_models(),
            server_model=self.server.model, metadata=self.metadata(),
        )


def _build_datasets(config) -> list[ClientDataset]:
    dc = config.data
    data_seed = config.seed if dc.seed is None else dc.seed
    pspec = PartitionSpec(
        num_clients=config.clients, classes_per_client=dc.classes_per_client,
        train_bound=dc.train_bound, test_bound=dc.test_bound,
        num_classes=dc.num_classes, seed=data_seed,
    )
    if dc.csv_path:
        pool = load_csv_pool(dc.csv_path)
    else:
        per_class = pspec.assignments_per_class() * (dc.train_bound + dc.test_bound)
        pool = gen_synthetic(dc.num_classes, dc.input_dim, per_class, [data_seed, 0],
                             dc.noise_scale, mean_scale=dc.mean_scale, mean_rank=dc.mean_rank)
    clients = partition(pool, pspec)
    if dc.feature_shift:
        clients = apply_feature_shift(clients, data_seed, dc.feature_shift_scale)
    return clients


def run_round(fed: Federation) -> RoundRecord | None:
    return fed.run_round()


def run_experiment(config, jobs: int = 1) -> ExperimentResult:
    """Run ``config.rounds`` rounds from scratch; deterministic in (config, seed)."""
    config.validate()
    return Federation(config, jobs=jobs).run()
