"""Training loop, Adam optimiser and classification metrics.

Batches group stocks by calendar date so the cross-stock attention only
ever relates same-day representations.  Training batches are seeded
chunks of at most ``batch_cap`` stocks per date; evaluation batches take
every stock of a date at once.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from .model import Batch, ModelError, ModelParams, loss_and_probs, model_loss


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainingSample:
    ticker: str
    end_date: dt.date
    x: np.ndarray        # (6, T, E)
    ci: np.ndarray       # (6, T) -- the attention form (normalized by default)
    label: int
    next_return: float
    ci_raw: np.ndarray | None = None  # (6, T) unscaled, for distribution reports


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    lr: float = 1e-3
    patience: int = 5
    batch_cap: int = 128
    seed: int = 0


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float


@dataclass(frozen=True)
class EvalMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    n: int


@dataclass
class TrainResult:
    params: ModelParams
    history: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0


class Adam:
    def __init__(self, params: ModelParams, lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(t.data) for name, t in params.tensors.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.tensors.items()}

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name, tensor in self.params.tensors.items():
            if tensor.grad is None:
                continue
            g = tensor.grad
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            tensor.data -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def _assemble(samples: list[TrainingSample]) -> Batch:
    xs = np.stack([np.stack([s.x[ch] for s in samples]) for ch in range(6)])
    cis = np.stack([np.stack([s.ci[ch] for s in samples]) for ch in range(6)])
    labels = np.array([s.label for s in samples], dtype=np.float64)
    return Batch(xs=xs, cis=cis, labels=labels)


def group_by_date(samples: list[TrainingSample]) -> dict[dt.date, list[TrainingSample]]:
    grouped: dict[dt.date, list[TrainingSample]] = {}
    for s in samples:
        grouped.setdefault(s.end_date, []).append(s)
    return {
        day: sorted(members, key=lambda s: s.ticker)
        for day, members in sorted(grouped.items())
    }


def training_batches(samples: list[TrainingSample], batch_cap: int,
                     rng: np.random.Generator) -> list[list[TrainingSample]]:
    """Seeded same-date groups of at most batch_cap stocks, in shuffled order."""
    groups = []
    for _, members in group_by_date(samples).items():
        order = rng.permutation(len(members))
        for lo in range(0, len(members), batch_cap):
            groups.append([members[i] for i in order[lo:lo + batch_cap]])
    batch_order = rng.permutation(len(groups))
    return [groups[i] for i in batch_order]


def eval_batches(samples: list[TrainingSample]):
    """Whole-date batches plus the original sample indices they cover.

    Yields lazily; assembled batches are large enough that materialising
    the whole dataset twice would hurt at corpus scale.
    """
    by_date: dict[dt.date, list[int]] = {}
    for i, s in enumerate(samples):
        by_date.setdefault(s.end_date, []).append(i)
    for day in sorted(by_date):
        idx = sorted(by_date[day], key=lambda i: samples[i].ticker)
        yield idx, _assemble([samples[i] for i in idx])


def dataset_eval(samples: list[TrainingSample],
                 params: ModelParams) -> tuple[float, np.ndarray]:
    """Mean loss and aligned probabilities from one pass over the dataset."""
    probs = np.empty(len(samples))
    total = 0.0
    for idx, batch in eval_batches(samples):
        loss, p = loss_and_probs(batch, params)
        total += float(loss.data) * len(idx)
        for j, i in enumerate(idx):
            probs[i] = p[j]
    return total / len(samples), probs


def predict_samples(samples: list[TrainingSample], params: ModelParams) -> np.ndarray:
    """Upward probabilities aligned with the input sample order."""
    return dataset_eval(samples, params)[1]


def dataset_loss(samples: list[TrainingSample], params: ModelParams) -> float:
    return dataset_eval(samples, params)[0]


def evaluate_metrics(labels: np.ndarray, probs: np.ndarray,
                     threshold: float = 0.5) -> EvalMetrics:
    """Confusion-matrix metrics for the upward class at the given threshold."""
    labels = np.asarray(labels)
    preds = (np.asarray(probs) >= threshold).astype(int)
    tp = int(np.sum((preds == 1) & (labels == 1)))
    fp = int(np.sum((preds == 1) & (labels == 0)))
    fn = int(np.sum((preds == 0) & (labels == 1)))
    correct = int(np.sum(preds == labels))
    n = len(labels)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return EvalMetrics(accuracy=correct / n, precision=precision,
                       recall=recall, f1=f1, n=n)


def evaluate(samples: list[TrainingSample], params: ModelParams) -> tuple[EvalMetrics, np.ndarray]:
    if not samples:
        raise TrainingError("cannot evaluate an empty dataset")
    _, probs = dataset_eval(samples, params)
    labels = np.array([s.label for s in samples])
    return evaluate_metrics(labels, probs), probs


def train(train_samples: list[TrainingSample], val_samples: list[TrainingSample],
          dims, cfg: TrainConfig) -> TrainResult:
    """Adam-optimised BCE training with early stopping on validation loss."""
    if not train_samples or not val_samples:
        raise TrainingError("training and validation sets must be nonempty")
    params = ModelParams.init(dims, cfg.seed)
    opt = Adam(params, lr=cfg.lr)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed & (2**64 - 1), 0x747261696E]))
    history: list[EpochStats] = []
    best_vec = params.flatten()
    best_loss = np.inf
    best_epoch = 0
    stale = 0
    for epoch in range(1, cfg.epochs + 1):
        batches = training_batches(train_samples, cfg.batch_cap, rng)
        running = 0.0
        seen = 0
        for b_idx, members in enumerate(batches):
            batch = _assemble(members)
            params.zero_grad()
            try:
                loss = model_loss(batch, params)
            except ModelError as exc:
                raise TrainingError(
                    f"non-finite forward pass at epoch {epoch}, batch {b_idx}: {exc}"
                ) from exc
            if not np.isfinite(loss.data):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b_idx}")
            loss.backward()
            opt.step()
            running += float(loss.data) * batch.size
            seen += batch.size
        train_loss = running / seen
        try:
            val_loss, val_probs = dataset_eval(val_samples, params)
        except ModelError as exc:
            raise TrainingError(
                f"non-finite validation pass after epoch {epoch}: {exc}"
            ) from exc
        if not np.isfinite(val_loss):
            raise TrainingError(f"non-finite validation loss after epoch {epoch}")
        val_labels = np.array([s.label for s in val_samples])
        val_metrics = evaluate_metrics(val_labels, val_probs)
        history.append(EpochStats(epoch=epoch, train_loss=train_loss,
                                  val_loss=val_loss, val_acc=val_metrics.accuracy))
        if val_loss < best_loss:
            best_loss = val_loss
            best_vec = params.flatten()
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale > cfg.patience:
                break
    params.load_flat(best_vec)
    # restate the restored parameters' validation row so the checkpointed
    # model and the history's final line always agree
    final_loss, final_probs = dataset_eval(val_samples, params)
    final_metrics = evaluate_metrics(np.array([s.label for s in val_samples]),
                                     final_probs)
    train_loss_final = history[best_epoch - 1].train_loss if history else np.nan
    history.append(EpochStats(epoch=best_epoch, train_loss=train_loss_final,
                              val_loss=final_loss, val_acc=final_metrics.accuracy))
    return TrainResult(params=params, history=history, best_epoch=best_epoch)
