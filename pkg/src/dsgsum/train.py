"""Teacher-forced training with two Adam optimizers and checkpoint selection."""
from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import ndgrad as nd
from .corpus import Vocab
from .model import Batch, DSGSum, Example, ModelConfig, collate
from .ndgrad import Tape, Tensor

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    max_steps: int = 1000
    grad_accum: int = 2
    enc_lr: float = 2e-3
    enc_warmup: int = 100
    dec_lr: float = 0.1
    dec_warmup: int = 100
    dropout: float = 0.2
    batch_size: int = 8
    seed: int = 0
    checkpoint_interval: int = 100
    max_src_len: int = 512
    max_tgt_len: int = 64
    beam_size: int = 5
    label_smoothing: float = 0.0
    keep_checkpoints: int = 3
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.enc_warmup < 1 or self.dec_warmup < 1:
            raise ValueError("warmup steps must be >= 1")
        if self.grad_accum < 1:
            raise ValueError("grad_accum must be >= 1")
        self.adam_betas = tuple(self.adam_betas)

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**obj)

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


# ---------------------------------------------------------------------- loss


def nll_loss(probs: Tensor, targets: np.ndarray, mask: np.ndarray,
             label_smoothing: float = 0.0) -> Tensor:
    """Mean negative log-likelihood over positions where ``mask`` is true."""
    mask = np.asarray(mask, dtype=bool)
    bi, ti = np.nonzero(mask)
    if bi.size == 0:
        raise ValueError("nll_loss: no non-pad target positions")
    yi = np.asarray(targets)[bi, ti]
    gold = probs[bi, ti, yi]
    loss = -nd.sum_(nd.log(gold)) / bi.size
    if label_smoothing > 0.0:
        rows = probs[bi, ti]  # [n, V]
        rest = rows[:, 1:]  # column 0 is [PAD], which has zero mass
        smooth = -nd.sum_(nd.log(rest)) / (bi.size * rest.shape[1])
        loss = loss * (1.0 - label_smoothing) + smooth * label_smoothing
    return loss


def lr_schedule(step: int, base_lr: float, warmup: int) -> float:
    """``base_lr * min(step^-0.5, step * warmup^-1.5)``."""
    if step < 1:
        raise ValueError("step must be >= 1")
    return base_lr * min(step ** -0.5, step * warmup ** -1.5)


class Adam:
    def __init__(self, params: dict[str, Tensor], betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros(v.shape) for k, v in params.items()}
        self.v = {k: np.zeros(v.shape) for k, v in params.items()}

    def step(self, lr: float, scale: float = 1.0) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad * scale
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            p.data = p.data - lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)

    def state(self) -> dict[str, np.ndarray]:
        out = {f"m.{k}": v for k, v in self.m.items()}
        out.update({f"v.{k}": v for k, v in self.v.items()})
        return out


class Trainer:
    """Owns the optimizers and the accumulation counter for one model."""

    def __init__(self, model: DSGSum, cfg: TrainConfig):
        self.model = model
        self.cfg = cfg
        groups = model.groups()
        self.enc_opt = Adam(groups["encoder"], cfg.adam_betas, cfg.adam_eps)
        self.dec_opt = Adam(groups["decoder"], cfg.adam_betas, cfg.adam_eps)
        self.calls = 0
        self.step = 0  # optimizer updates so far
        self.lr_enc = self.lr_dec = 0.0

    def _rng(self) -> np.random.Generator:
        # counter-based stream per call: reproducible irrespective of history
        return np.random.Generator(np.random.Philox(key=self.cfg.seed, counter=[0, 0, 0, self.calls]))

    def train_step(self, batch: Batch) -> float:
        """Forward/backward on ``batch``; parameters move on every ``grad_accum``-th call."""
        model = self.model
        ctx = model.ctx(train=True, rng=self._rng())
        with Tape() as tape:
            probs = model.forward(batch, ctx)
            loss = nll_loss(probs, batch.tgt_out, batch.tgt_mask, self.cfg.label_smoothing)
        value = float(loss.data)
        if not math.isfinite(value):
            raise TrainingError(f"non-finite loss {value} at step {self.step + 1}")
        nd.backward(loss, tape)
        self.calls += 1
        if self.calls % self.cfg.grad_accum == 0:
            self.step += 1
            self.lr_enc = lr_schedule(self.step, self.cfg.enc_lr, self.cfg.enc_warmup)
            self.lr_dec = lr_schedule(self.step, self.cfg.dec_lr, self.cfg.dec_warmup)
            scale = 1.0 / self.cfg.grad_accum
            self.enc_opt.step(self.lr_enc, scale)
            self.dec_opt.step(self.lr_dec, scale)
            model.params.zero_grad()
        return value


def evaluate_loss(model: DSGSum, batches: Sequence[Batch]) -> float:
    """Token-weighted mean NLL with dropout off."""
    total, count = 0.0, 0
    for b in batches:
        n = int(b.tgt_mask.sum())
        total += float(nll_loss(model.forward(b), b.tgt_out, b.tgt_mask).data) * n
        count += n
    return total / count


def make_batches(examples: Sequence[Example], batch_size: int, max_src_len: int,
                 rng: np.random.Generator | None = None) -> list[Batch]:
    order = np.arange(len(examples))
    if rng is not None:
        rng.shuffle(order)
    return [collate([examples[i] for i in order[k:k + batch_size]], max_src_len)
            for k in range(0, len(order), batch_size)]


# --------------------------------------------------------------- checkpoints


@dataclass
class Checkpoint:
    step: int
    val_loss: float
    path: str | None = None

    def __post_init__(self):
        if not math.isfinite(self.val_loss):
            raise ValueError(f"checkpoint at step {self.step} has non-finite validation loss")

    def to_json(self) -> dict:
        # file name only, so run directories stay relocatable and reproducible
        return {"step": self.step, "val_loss": self.val_loss,
                "path": None if self.path is None else Path(self.path).name}


def select_checkpoints(history: Sequence[Checkpoint], k: int = 3) -> list[Checkpoint]:
    """The ``k`` lowest validation losses; ties go to the earlier step."""
    if not history:
        raise ValueError("empty checkpoint history")
    if len(history) < k:
        log.warning("only %d checkpoints available, wanted %d", len(history), k)
    return sorted(history, key=lambda c: (c.val_loss, c.step))[:k]


def save_model(path, model: DSGSum, vocab: Vocab, step: int = 0, val_loss: float | None = None) -> None:
    meta = {"model_config": model.cfg.to_json(), "vocab": vocab.to_json(), "step": step,
            "val_loss": val_loss}
    nd.save_checkpoint(path, model.params.state(), meta)


def load_model(path) -> tuple[DSGSum, Vocab, dict]:
    arrays, meta = nd.load_checkpoint(path)
    model = DSGSum(ModelConfig.from_json(meta["model_config"]))
    model.params.load_state(arrays)
    return model, Vocab.from_json(meta["vocab"]), meta


def fit(model: DSGSum, vocab: Vocab, train: Sequence[Example], cfg: TrainConfig,
        valid: Sequence[Example] | None = None, out_dir=None,
        log_fh=None, on_step: Callable[[int, float], None] | None = None) -> list[Checkpoint]:
    """Run ``cfg.max_steps`` optimizer updates; returns the checkpoint history."""
    trainer = Trainer(model, cfg)
    rng = np.random.default_rng(cfg.seed)
    valid_batches = make_batches(valid, cfg.batch_size, cfg.max_src_len) if valid else None
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    history: list[Checkpoint] = []
    batches: list[Batch] = []
    while trainer.step < cfg.max_steps:
        if not batches:
            batches = make_batches(train, cfg.batch_size, cfg.max_src_len, rng)
        value = trainer.train_step(batches.pop(0))
        if trainer.calls % cfg.grad_accum:
            continue
        step = trainer.step
        if log_fh is not None:
            log_fh.write(f"{step}\t{value:.6f}\t{trainer.lr_enc:.6e}\t{trainer.lr_dec:.6e}\n")
        if on_step is not None:
            on_step(step, value)
        if valid_batches and (step % cfg.checkpoint_interval == 0 or step == cfg.max_steps):
            vl = evaluate_loss(model, valid_batches)
            path = None
            if out is not None:
                path = str(out / f"step_{step:07d}.ckpt")
                save_model(path, model, vocab, step, vl)
            history.append(Checkpoint(step, vl, path))
            log.info("step %d valid loss %.4f", step, vl)
    if out is not None:
        (out / "history.json").write_text(json.dumps([c.to_json() for c in history], indent=1))
    return history
