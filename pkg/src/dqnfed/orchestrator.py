"""The federation round loop.

Every source of randomness is a separate stream derived from the master
seed (see :mod:`dqnfed.rng`), and client results are always reduced in
client-id order, so a run is bit-for-bit reproducible whatever the worker
count.
"""

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import aggregate as agg
from . import data as _data
from . import local as _local
from . import model as _model
from . import rng as _rng
from .config import FederationConfig
from .errors import DQNFedError, FederationError, NonFiniteValue, ValidationError
from .metrics import FairnessReport, fairness_report, improved_fraction

log = logging.getLogger(__name__)

THREADS_ENV = "DQNFED_THREADS"


@dataclass
class RoundLog:
    round: int
    method: str
    seed: int
    participating: List[int]
    fairness: Optional[FairnessReport]
    rho: float
    global_loss: float
    eta: float
    eta_applied: float
    dropped_clients: List[int] = field(default_factory=list)
    wallclock_ms: int = 0


@dataclass(eq=False)
class ClientData:
    train: _data.Dataset
    test: Optional[_data.Dataset]


@dataclass(eq=False)
class Federation:
    """Everything that is fixed before round 0."""

    spec: _model.ModelSpec
    clients: List[ClientData]
    theta0: np.ndarray

    @property
    def num_clients(self):
        return len(self.clients)


@dataclass(eq=False)
class RoundTrace:
    """Per-round internals handed to an optional observer."""

    round: int
    reports: List[_local.ClientReport]
    plan: Optional[agg.AggregationPlan]
    theta_before: np.ndarray
    theta_after: np.ndarray
    losses_after: List[float]


@dataclass(eq=False)
class FederationResult:
    logs: List[RoundLog]
    params: np.ndarray
    client_losses: np.ndarray
    client_accuracies: Optional[np.ndarray]
    federation: Federation


def sample_clients(num_clients, fraction, master_seed, round_index) -> List[int]:
    """``ceil(fraction * K)`` distinct ids, uniform without replacement, ascending."""
    m = max(1, int(np.ceil(fraction * num_clients - 1e-9)))
    if m >= num_clients:
        return list(range(num_clients))
    gen = _rng.generator(master_seed, _rng.SAMPLING, round_index)
    return sorted(int(i) for i in gen.choice(num_clients, size=m, replace=False))


def load_dataset(cfg: FederationConfig) -> _data.Dataset:
    d = cfg.data
    seed = _rng.derive_seed(cfg.master_seed, _rng.DATA)
    if d.source == "blobs":
        return _data.gen_blobs(d.num_classes, d.per_class, d.input_dim, d.spread, seed)
    if d.source == "csv":
        return _data.load_delimited(d.path, d.num_classes)
    return _data.gen_conflicting_quadratics(
        cfg.num_clients, d.dim, d.per_client, d.radius, d.jitter, d.spread,
        d.num_outliers, seed,
    )


def partition_dataset(cfg: FederationConfig, ds) -> _data.Partition:
    p = cfg.partition
    seed = _rng.derive_seed(cfg.master_seed, _rng.PARTITION)
    if p.scheme == "dirichlet":
        return _data.dirichlet_partition(ds, cfg.num_clients, p.beta, seed, p.min_size)
    if p.scheme == "shard":
        return _data.shard_partition(ds, cfg.num_clients, p.shards_per_client, seed)
    if p.scheme == "label":
        return _data.label_partition(ds, cfg.num_clients)
    perm = _rng.generator(seed, _rng.PARTITION).permutation(len(ds))
    return _data.Partition([np.sort(a) for a in np.array_split(perm, cfg.num_clients)])


def build_federation(cfg: FederationConfig) -> Federation:
    """Dataset, partition, per-client 80/20 splits and the initial model."""
    ds = load_dataset(cfg)
    part = partition_dataset(cfg, ds)
    split_seed = _rng.derive_seed(cfg.master_seed, _rng.SPLIT)
    clients = []
    for k, idx in enumerate(part.assignments):
        if len(idx) == 0:
            raise ValidationError("partition", f"client {k} received no samples")
        train, test = _data.train_test_split(idx, cfg.data.test_fraction, split_seed, k)
        clients.append(ClientData(ds.subset(train), ds.subset(test) if len(test) else None))
    m = cfg.model
    spec = _model.ModelSpec(
        kind=m.kind,
        input_dim=ds.input_dim,
        num_classes=ds.num_classes if m.kind != "quadratic" else 1,
        hidden_dim=m.hidden_dim if m.kind == "mlp-1h" else 0,
        l2_reg=m.l2_reg,
    )
    if cfg.local.bfgs_mode == "dense" and spec.num_params > _local.MAX_DENSE_DIM:
        raise ValidationError(
            "local.bfgs_mode",
            f"dense mode needs d <= {_local.MAX_DENSE_DIM}, model has {spec.num_params}",
        )
    theta0 = _model.init_params(spec, _rng.derive_seed(cfg.master_seed, _rng.INIT))
    return Federation(spec, clients, theta0)


def _worker_count():
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(THREADS_ENV, f"must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValidationError(THREADS_ENV, "must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)


def _map(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def _client_metrics(fed: Federation, theta):
    losses = np.array([_model.loss(fed.spec, theta, c.train) for c in fed.clients])
    if fed.spec.kind == "quadratic":
        return losses, None
    accs = np.array([
        _model.accuracy(fed.spec, theta, c.test if c.test is not None else c.train)
        for c in fed.clients
    ])
    return losses, accs


def run_federation(cfg: FederationConfig, observer: Optional[Callable[[RoundTrace], None]] = None,
                   federation: Optional[Federation] = None,
                   on_round: Optional[Callable[[RoundLog], None]] = None) -> FederationResult:
    """Run ``cfg.rounds`` rounds and return the logs and the final model.

    ``observer`` receives a :class:`RoundTrace` after each round and
    ``on_round`` the finished :class:`RoundLog` (used for streaming output).
    Errors raised inside a round are re-raised as
    :class:`~dqnfed.errors.FederationError` carrying the round and client.
    """
    fed = federation if federation is not None else build_federation(cfg)
    workers = _worker_count()
    lc = cfg.local
    weights = np.array([len(c.train) for c in fed.clients], dtype=np.float64)
    theta = fed.theta0.copy()
    theta_prev = None
    logs = []

    for t in range(cfg.rounds):
        start = time.perf_counter()
        chosen = sample_clients(fed.num_clients, cfg.participation_fraction, cfg.master_seed, t)

        def work(k, t=t, theta=theta, theta_prev=theta_prev):
            try:
                return _local.run_client(
                    k, fed.spec, theta, theta_prev, fed.clients[k].train,
                    epochs=lc.epochs, lr=lc.learning_rate, batch_size=lc.batch_size,
                    seed=_rng.derive_seed(cfg.master_seed, _rng.BATCH, t, k),
                    bfgs_mode=lc.bfgs_mode, memory=lc.memory,
                    want_direction=cfg.method == "newton-avg",
                )
            except DQNFedError as exc:
                raise FederationError(t, k, exc) from exc

        reports = _map(work, chosen, workers)

        plan = None
        try:
            if cfg.method == "dqnfed":
                plan = agg.dqnfed_plan([r.grad for r in reports], [r.rate for r in reports],
                                       [r.client_id for r in reports])
                clip = None
                if cfg.server.clip:
                    clip = agg.smoothness_clip([r.smoothness for r in reports],
                                               [r.rate for r in reports])
                    if clip is None:
                        log.warning("round %d: no displacement observed, step not clipped", t)
                plan = agg.guard_dropped(plan.clipped(clip))
                new_theta = agg.apply_global_step(theta, plan, plan.eta_applied)
                eta, eta_applied, dropped = plan.eta, plan.eta_applied, plan.dropped
                if dropped:
                    log.info("round %d: dropped clients %s", t, dropped)
            elif cfg.method == "fedavg":
                new_theta = agg.fedavg_aggregate(reports, theta, cfg.server_lr)
                eta = eta_applied = cfg.server_lr
                dropped = []
            else:
                new_theta = agg.newton_avg_aggregate(reports, theta, cfg.server_lr)
                eta = eta_applied = cfg.server_lr
                dropped = []
            if not np.all(np.isfinite(new_theta)):
                raise NonFiniteValue("global model became non-finite")
        except DQNFedError as exc:
            raise FederationError(t, None, exc) from exc

        losses_after = _map(
            lambda k: _model.loss(fed.spec, new_theta, fed.clients[k].train), chosen, workers
        )
        rho = improved_fraction([r.loss_before for r in reports], losses_after)

        fairness, global_loss = None, float("nan")
        if (t + 1) % cfg.eval_every == 0 or t == cfg.rounds - 1:
            losses, accs = _client_metrics(fed, new_theta)
            global_loss = float(weights @ losses / weights.sum())
            if accs is not None:
                fairness = fairness_report(accs, 0.1)

        if observer is not None:
            observer(RoundTrace(t, reports, plan, theta, new_theta, list(losses_after)))
        theta_prev, theta = theta, new_theta
        elapsed = int((time.perf_counter() - start) * 1000) if cfg.record_wallclock else 0
        entry = RoundLog(t, cfg.method, cfg.master_seed, chosen, fairness, rho, global_loss,
                         float(eta), float(eta_applied), list(dropped), elapsed)
        logs.append(entry)
        if on_round is not None:
            on_round(entry)

    losses, accs = _client_metrics(fed, theta)
    return FederationResult(logs, theta, losses, accs, fed)
