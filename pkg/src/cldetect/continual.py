"""Continual-learning strategies and the sequential training driver.

Three ways of fitting a task stream without revisiting past data:

* transfer: plain cross-entropy on the current task (the forgetting-prone
  baseline),
* knowledge distillation: the student additionally matches a frozen
  teacher's temperature-softened outputs on current-task inputs,
* elastic weight consolidation: a Fisher-weighted quadratic penalty keeps
  parameters near the optima recorded for previous tasks.

The driver trains the stream in order: first task plain, then per strategy,
snapshotting a teacher copy (distillation) or a parameter/Fisher anchor
(consolidation) after each task, and evaluating the model on every eval
task after each stage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .checkpoint import Checkpoint
from .config import EvalMatrix, RunConfig
from .exceptions import ConfigError, NumericError
from .nn import (
    ModelSpec,
    backward,
    check_params,
    cosine_lr,
    cross_entropy,
    forward_batch,
    init_params,
    make_optimizer,
    predict_labels,
    sgd_step,
    softmax_ce_loss,
    softmax_temp,
    unpack,
)
from .taskgen import TaskDataset, flatten_patches, random_crop
from .validation import as_model_inputs
from ._util import mix_seed, seeded_rng

_LOG_CLAMP = 1e-12


@dataclass(frozen=True)
class KDConfig:
    """Distillation coefficients: loss = alpha*distill + beta*label_ce."""

    alpha: float = 1.0
    beta: float = 1.0
    tau: float = 2.0
    # Some distillation variants rescale the soft term by tau^2 to keep
    # gradient magnitude temperature-independent; off by default.
    scale_distill_by_tau_sq: bool = False

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta <= 0:
            raise ConfigError("need alpha, beta >= 0 with alpha + beta > 0")
        if not self.tau > 0:
            raise ConfigError("temperature tau must be positive")


@dataclass(frozen=True)
class EWCConfig:
    """Quadratic-anchor settings: penalty weight and Fisher estimation size."""

    lam: float = 1000.0
    fisher_sample_count: int = 256
    accumulation: str = "per_task_list"  # or "running_sum"

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if self.fisher_sample_count < 1:
            raise ConfigError("fisher_sample_count must be >= 1")
        if self.accumulation not in ("per_task_list", "running_sum"):
            raise ConfigError(f"unknown accumulation mode {self.accumulation!r}")


@dataclass(frozen=True)
class Transfer:
    pass


@dataclass(frozen=True)
class KD:
    config: KDConfig = KDConfig()


@dataclass(frozen=True)
class EWC:
    config: EWCConfig = EWCConfig()


Strategy = Transfer | KD | EWC


def build_strategy(name: str, alpha: float = 1.0, beta: float = 1.0, tau: float = 2.0,
                   lam: float = 1000.0, fisher_sample_count: int = 256,
                   accumulation: str = "per_task_list") -> Strategy:
    """Construct a strategy from flag-style arguments (CLI glue)."""
    if name == "transfer":
        return Transfer()
    if name == "kd":
        return KD(KDConfig(alpha=alpha, beta=beta, tau=tau))
    if name == "ewc":
        return EWC(EWCConfig(lam=lam, fisher_sample_count=fisher_sample_count,
                             accumulation=accumulation))
    raise ConfigError(f"unknown strategy {name!r} (transfer, kd, ewc)")


def strategy_metadata(strategy: Strategy) -> dict:
    match strategy:
        case Transfer():
            return {"kind": "transfer"}
        case KD(config=cfg):
            return {"kind": "kd", "alpha": cfg.alpha, "beta": cfg.beta, "tau": cfg.tau,
                    "scale_distill_by_tau_sq": cfg.scale_distill_by_tau_sq}
        case EWC(config=cfg):
            return {"kind": "ewc", "lambda": cfg.lam,
                    "fisher_sample_count": cfg.fisher_sample_count,
                    "accumulation": cfg.accumulation}
    raise ConfigError(f"unknown strategy object {strategy!r}")


@dataclass(frozen=True)
class TaskAnchor:
    """Post-task snapshot consumed by the consolidation penalty."""

    task_name: str
    anchor_params: np.ndarray
    fisher_diag: np.ndarray

    def __post_init__(self):
        anchor = np.asarray(self.anchor_params, dtype=np.float64)
        fisher = np.asarray(self.fisher_diag, dtype=np.float64)
        if anchor.shape != fisher.shape or anchor.ndim != 1:
            raise ConfigError("anchor params and fisher diagonal must be congruent vectors")
        if (fisher < 0).any() or not np.isfinite(fisher).all():
            raise ConfigError("fisher diagonal entries must be finite and >= 0")
        object.__setattr__(self, "anchor_params", anchor)
        object.__setattr__(self, "fisher_diag", fisher)


# ---------------------------------------------------------------------------
# Loss terms
# ---------------------------------------------------------------------------

def distill_term(teacher_logits: np.ndarray, student_logits: np.ndarray, tau: float) -> float:
    """Cross-entropy between softened teacher and student distributions.

    H(softmax(T/tau), softmax(S/tau)) = -sum_c p_t[c] * log p_s[c]; the
    positive orientation, so minimizing it pulls the student toward the
    teacher's soft labels.
    """
    p_t = softmax_temp(teacher_logits, tau)
    p_s = softmax_temp(student_logits, tau)
    return float(-(p_t * np.log(np.maximum(p_s, _LOG_CLAMP))).sum())


def kd_loss(teacher_logits: np.ndarray, student_logits: np.ndarray, label: int,
            cfg: KDConfig) -> float:
    """alpha * soft-label term (at tau) + beta * hard-label term (at tau=1)."""
    hard = cross_entropy(softmax_temp(student_logits, 1.0), label)
    if cfg.alpha == 0.0:
        return cfg.beta * hard
    soft = distill_term(teacher_logits, student_logits, cfg.tau)
    if cfg.scale_distill_by_tau_sq:
        soft = soft * cfg.tau**2
    return cfg.alpha * soft + cfg.beta * hard


def ewc_penalty(params: np.ndarray, anchors: list[TaskAnchor], lam: float) -> float:
    """Sum over anchors of (lam/2) * F_i * (theta_i - theta*_i)^2."""
    params = np.asarray(params, dtype=np.float64)
    total = 0.0
    for anchor in anchors:
        if anchor.anchor_params.shape != params.shape:
            raise ConfigError(
                f"anchor {anchor.task_name!r} is not congruent with the parameter vector"
            )
        delta = params - anchor.anchor_params
        total += 0.5 * lam * float((anchor.fisher_diag * delta * delta).sum())
    return total


def ewc_penalty_grad(params: np.ndarray, anchors: list[TaskAnchor], lam: float) -> np.ndarray:
    """Componentwise lam * F_i * (theta_i - theta*_i), summed over anchors."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.zeros_like(params)
    for anchor in anchors:
        if anchor.anchor_params.shape != params.shape:
            raise ConfigError(
                f"anchor {anchor.task_name!r} is not congruent with the parameter vector"
            )
        grad += lam * anchor.fisher_diag * (params - anchor.anchor_params)
    return grad


def merge_anchors(anchors: list[TaskAnchor], name: str = "merged") -> TaskAnchor:
    """Collapse several quadratic penalties into one.

    The sum of quadratics is itself a quadratic: Fisher diagonals add and
    the merged center is the Fisher-weighted mean of the centers (constant
    offsets are dropped, so gradients are preserved exactly).
    """
    if not anchors:
        raise ConfigError("cannot merge an empty anchor list")
    fisher = np.zeros_like(anchors[0].fisher_diag)
    weighted = np.zeros_like(anchors[0].anchor_params)
    for anchor in anchors:
        fisher += anchor.fisher_diag
        weighted += anchor.fisher_diag * anchor.anchor_params
    center = np.divide(weighted, fisher, out=anchors[-1].anchor_params.copy(),
                       where=fisher > 0)
    return TaskAnchor(name, center, fisher)


# ---------------------------------------------------------------------------
# Fisher estimation
# ---------------------------------------------------------------------------

_FISHER_CHUNK = 4096


def estimate_fisher(spec: ModelSpec, params: np.ndarray, dataset, cfg: EWCConfig,
                    seed: int = 0) -> np.ndarray:
    """Empirical diagonal Fisher: mean squared per-sample log-likelihood gradient.

    F_i = (1/N) * sum_n (d log p(y_n | x_n; theta) / d theta_i)^2 over N =
    min(fisher_sample_count, train size) samples drawn seeded without
    replacement. Accepts a TaskDataset (train split) or an (inputs, labels)
    pair.
    """
    if isinstance(dataset, TaskDataset):
        inputs = as_model_inputs(spec, dataset.train.patches)
        labels = np.asarray(dataset.train.labels, dtype=np.int64)
    else:
        raw_inputs, raw_labels = dataset
        inputs = as_model_inputs(spec, raw_inputs)
        labels = np.asarray(raw_labels, dtype=np.int64)
    n = inputs.shape[0]
    if n == 0:
        raise ConfigError("cannot estimate Fisher information from an empty dataset")
    params = check_params(spec, params)
    k = min(cfg.fisher_sample_count, n)
    idx = seeded_rng(seed, "fisher-sample").choice(n, size=k, replace=False)
    fisher = np.zeros_like(params)
    for start in range(0, k, _FISHER_CHUNK):
        sel = idx[start : start + _FISHER_CHUNK]
        fisher += _squared_grad_sums(spec, params, inputs[sel], labels[sel])
    return fisher / k


def _squared_grad_sums(spec: ModelSpec, params: np.ndarray, inputs: np.ndarray,
                       labels: np.ndarray) -> np.ndarray:
    """Sum over samples of the squared per-sample log-likelihood gradient.

    Per-sample weight gradients factor as outer(activation, delta), so the
    squared sums reduce to (acts^2)^T @ (delta^2) without materializing
    per-sample gradients.
    """
    layers = unpack(spec, params)
    acts = [inputs]
    pre = []
    a = inputs
    for i, (w, b) in enumerate(layers):
        z = a @ w + b
        pre.append(z)
        a = np.maximum(z, 0.0) if i < len(layers) - 1 else z
        acts.append(a)
    probs = softmax_temp(acts[-1], 1.0)
    delta = probs.copy()
    delta[np.arange(labels.shape[0]), labels] -= 1.0  # same squares as d log p / d z
    out = np.zeros_like(params)
    out_layers = unpack(spec, out)
    for i in reversed(range(len(layers))):
        w, _b = layers[i]
        gw, gb = out_layers[i]
        gw[...] = (acts[i] ** 2).T @ (delta**2)
        gb[...] = (delta**2).sum(axis=0)
        if i > 0:
            delta = (delta @ w.T) * (pre[i - 1] > 0.0)
    return out


# ---------------------------------------------------------------------------
# Per-batch loss/gradient under each strategy
# ---------------------------------------------------------------------------

def _scaled_ce(beta: float):
    if beta == 1.0:
        return softmax_ce_loss

    def loss_fn(logits, labels):
        losses, grads = softmax_ce_loss(logits, labels)
        return beta * losses, beta * grads

    return loss_fn


def _kd_loss_fn(cfg: KDConfig, teacher_logits: np.ndarray):
    soft_scale = cfg.alpha * (cfg.tau**2 if cfg.scale_distill_by_tau_sq else 1.0)
    p_t = softmax_temp(teacher_logits, cfg.tau)

    def loss_fn(logits, labels):
        ce_losses, ce_grads = softmax_ce_loss(logits, labels)
        p_s = softmax_temp(logits, cfg.tau)
        soft_losses = -(p_t * np.log(np.maximum(p_s, _LOG_CLAMP))).sum(axis=1)
        soft_grads = (p_s - p_t) / cfg.tau
        return (soft_scale * soft_losses + cfg.beta * ce_losses,
                soft_scale * soft_grads + cfg.beta * ce_grads)

    return loss_fn


def _batch_loss_grad(spec, params, xb, yb, strategy, teacher_params, anchors):
    match strategy:
        case Transfer():
            return backward(spec, params, (xb, yb))
        case KD(config=cfg):
            if cfg.alpha == 0.0:
                return backward(spec, params, (xb, yb), _scaled_ce(cfg.beta))
            teacher_logits = forward_batch(spec, teacher_params, xb)
            return backward(spec, params, (xb, yb), _kd_loss_fn(cfg, teacher_logits))
        case EWC(config=cfg):
            loss, grad = backward(spec, params, (xb, yb))
            if cfg.lam != 0.0 and anchors:
                loss = loss + ewc_penalty(params, anchors, cfg.lam)
                grad = grad + ewc_penalty_grad(params, anchors, cfg.lam)
            return loss, grad
    raise ConfigError(f"unknown strategy object {strategy!r}")


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def task_accuracy(spec: ModelSpec, params: np.ndarray, task: TaskDataset,
                  split: str = "test") -> float:
    """Fraction of argmax-correct predictions on a task split (ties -> real)."""
    part = task.split(split)
    if len(part) == 0:
        raise ConfigError(f"{split!r} split of task {task.name!r} is empty")
    inputs = as_model_inputs(spec, part.patches)
    return float(np.mean(predict_labels(spec, params, inputs) == part.labels))


def train_task(spec: ModelSpec, params: np.ndarray, task: TaskDataset,
               strategy: Strategy, run: RunConfig, teacher: np.ndarray | None = None,
               anchors: list[TaskAnchor] = (), stage: int = 0):
    """Fit one task under a strategy; returns (best params, training trace).

    SGD with momentum under the cosine schedule, minibatches reshuffled per
    epoch, early stopping on validation accuracy with best-weights restore.
    The teacher, when given, is copied and frozen; it is never modified.
    """
    params = check_params(spec, params).copy()
    if isinstance(strategy, KD) and teacher is None:
        raise ConfigError("KD training requires a frozen teacher (tasks after the first)")
    teacher_params = None
    if teacher is not None:
        teacher_params = np.array(teacher, dtype=np.float64, copy=True)
        teacher_params.flags.writeable = False
    anchors = list(anchors)
    for anchor in anchors:
        if anchor.anchor_params.shape != params.shape:
            raise ConfigError(f"anchor {anchor.task_name!r} incongruent with parameters")

    y_train = np.asarray(task.train.labels, dtype=np.int64)
    n = y_train.shape[0]
    if n == 0:
        raise ConfigError(f"task {task.name!r} has an empty train split")
    use_crop = run.crop_enabled and spec.input_width == run.crop_size**2
    if use_crop:
        train_patches = np.asarray(task.train.patches, dtype=np.float64)
    else:
        x_train = as_model_inputs(spec, task.train.patches)
    x_val = as_model_inputs(spec, task.val.patches)
    y_val = np.asarray(task.val.labels, dtype=np.int64)

    opt = make_optimizer(spec, run.lr_initial, run.lr_min, run.momentum,
                         max(1, run.max_epochs - 1))
    rng = seeded_rng(run.seed, "train", stage)

    best_params = params.copy()
    best_acc = -1.0
    best_epoch = -1
    stall = 0
    epochs = []
    final_epoch = -1
    for epoch in range(run.max_epochs):
        final_epoch = epoch
        lr = cosine_lr(epoch, opt)
        perm = rng.permutation(n)
        if use_crop:
            x_epoch = flatten_patches(random_crop(train_patches[perm], run.crop_size, rng))
        else:
            x_epoch = x_train[perm]
        y_epoch = y_train[perm]
        batch_losses = []
        for start in range(0, n, run.batch_size):
            xb = x_epoch[start : start + run.batch_size]
            yb = y_epoch[start : start + run.batch_size]
            loss, grad = _batch_loss_grad(spec, params, xb, yb, strategy,
                                          teacher_params, anchors)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch} of task {task.name!r}")
            params = sgd_step(params, grad, opt, lr)
            batch_losses.append(loss)
        val_inputs = x_val
        val_acc = float(np.mean(predict_labels(spec, params, val_inputs) == y_val))
        epochs.append({
            "epoch": epoch,
            "lr": float(lr),
            "train_loss": float(np.mean(batch_losses)),
            "val_accuracy": val_acc,
        })
        if val_acc > best_acc:
            best_acc = val_acc
            best_epoch = epoch
            best_params = params.copy()
            stall = 0
        else:
            stall += 1
            if stall >= run.patience:
                break
    trace = {
        "task": task.name,
        "epochs": epochs,
        "best_epoch": best_epoch,
        "best_val_accuracy": best_acc,
        "stopped_early": final_epoch < run.max_epochs - 1,
    }
    return best_params, trace


def train_sequence(spec: ModelSpec, stream: list[TaskDataset], strategy: Strategy,
                   run: RunConfig, eval_tasks: list[TaskDataset] | None = None,
                   on_stage=None):
    """Train a task stream in order; returns (params, EvalMatrix, checkpoints).

    First task is trained plain. Afterwards, distillation snapshots the
    current model as the frozen teacher before each task, and consolidation
    appends a (theta*, Fisher) anchor after each task. One evaluation row
    over all eval tasks is appended per stage; training data of completed
    tasks is never revisited.
    """
    stream = list(stream)
    if not stream:
        raise ConfigError("task stream must contain at least one task")
    eval_tasks = list(eval_tasks) if eval_tasks is not None else list(stream)

    params = init_params(spec, seed=run.seed)
    anchors: list[TaskAnchor] = []
    matrix = EvalMatrix([t.name for t in eval_tasks])
    checkpoints: dict[str, Checkpoint] = {}

    for idx, task in enumerate(stream):
        teacher = None
        stage_strategy: Strategy = strategy
        if isinstance(strategy, KD):
            if idx == 0:
                stage_strategy = Transfer()
            else:
                teacher = params.copy()
        params, trace = train_task(spec, params, task, stage_strategy, run,
                                   teacher=teacher, anchors=anchors, stage=idx)
        if isinstance(strategy, EWC) and idx < len(stream) - 1:
            fisher = estimate_fisher(spec, params, task, strategy.config,
                                     seed=mix_seed(run.seed, "fisher", idx))
            anchor = TaskAnchor(task.name, params.copy(), fisher)
            if strategy.config.accumulation == "running_sum" and anchors:
                anchors = [merge_anchors([anchors[0], anchor])]
            else:
                anchors.append(anchor)
        row = [task_accuracy(spec, params, t) for t in eval_tasks]
        matrix.append_row(row)
        ckpt = Checkpoint(spec, params.copy(), strategy_metadata(strategy),
                          run.seed, trace, task.name)
        checkpoints[task.name] = ckpt
        if on_stage is not None:
            on_stage(idx, task, row, ckpt)
    return params, matrix, checkpoints
