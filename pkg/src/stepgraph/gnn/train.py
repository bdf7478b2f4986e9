"""Mini-batch training with Adam and a plateau-triggered learning-rate decay."""
import logging
from collections import deque
from dataclasses import dataclass
from typing import List, NamedTuple, Optional

import numpy as np

from stepgraph.gnn.model import forward, loss_and_grads, cross_entropy

log = logging.getLogger(__name__)


class EmptyTrainSet(ValueError):
    pass


class Sample(NamedTuple):
    adj: object
    x: np.ndarray
    label: int


@dataclass
class TrainConfig:
    epochs: int = 50
    lr: float = 0.0005
    gamma: float = 0.1
    window: int = 6
    batch_size: int = 16
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.window < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("window and batch_size must be >= 1, epochs >= 0")


class Adam:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1 ** self.t
        corr2 = 1.0 - b2 ** self.t
        for k in sorted(params):
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g
            params[k] -= lr * (self.m[k] / corr1) / (np.sqrt(self.v[k] / corr2) + self.eps)


class PlateauDecay:
    """Multiply the learning rate by ``gamma`` when an epoch's loss exceeds the
    mean of the previous ``window`` epochs. The window is emptied after each
    decay and must fill up again before the next one can fire.
    """

    def __init__(self, lr, gamma=0.1, window=6):
        self.lr = lr
        self.gamma = gamma
        self.history = deque(maxlen=window)

    def step(self, loss):
        if len(self.history) == self.history.maxlen and loss > float(np.mean(self.history)):
            self.lr *= self.gamma
            self.history.clear()
            return True
        self.history.append(loss)
        return False


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: Optional[float]
    val_acc: Optional[float]
    lr: float


def evaluate(model, samples):
    """Mean loss, accuracy and predicted labels over ``samples``."""
    if not samples:
        return None, None, []
    losses, preds = [], []
    for s in samples:
        logits = forward(model, s.adj, s.x).logits
        losses.append(cross_entropy(logits, s.label))
        preds.append(int(np.argmax(logits)))
    acc = float(np.mean([p == s.label for p, s in zip(preds, samples)]))
    return float(np.mean(losses)), acc, preds


def train(model, train_set: List[Sample], val_set: List[Sample], config: TrainConfig, callback=None):
    """Train ``model`` in place and return the per-epoch metrics.

    Each batch accumulates per-graph gradients, averages them and takes one
    Adam step. The ``lr`` column reports the rate used during that epoch.
    """
    if not train_set:
        raise EmptyTrainSet("training split is empty")
    rng = np.random.default_rng(config.seed)
    opt = Adam(model.params, config.beta1, config.beta2, config.eps)
    sched = PlateauDecay(config.lr, config.gamma, config.window)
    history = []
    for epoch in range(1, config.epochs + 1):
        lr = sched.lr
        order = rng.permutation(len(train_set))
        losses, correct = [], 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            acc_grads = None
            for idx in batch:
                s = train_set[idx]
                loss, grads, res = loss_and_grads(model, s.adj, s.x, s.label)
                losses.append(loss)
                correct += int(np.argmax(res.logits)) == s.label
                if acc_grads is None:
                    acc_grads = grads
                else:
                    for k in acc_grads:
                        acc_grads[k] += grads[k]
            for k in acc_grads:
                acc_grads[k] /= len(batch)
            opt.step(model.params, acc_grads, lr)
        train_loss = float(np.mean(losses))
        val_loss, val_acc, _ = evaluate(model, val_set)
        m = EpochMetrics(epoch, train_loss, correct / len(train_set), val_loss, val_acc, lr)
        history.append(m)
        if sched.step(train_loss):
            log.info("epoch %d: loss %.4f above window mean, lr -> %g", epoch, train_loss, sched.lr)
        if callback is not None:
            callback(m)
    return history
