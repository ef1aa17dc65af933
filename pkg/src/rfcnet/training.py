"""Training loop, loss, and the mean-IoU evaluation protocol.

The loss attaches to the last frame of each clip (the only labeled one) and
backpropagation runs through all frames without truncation. Validation mean
IoU drives checkpoint selection and early stopping.
"""

from __future__ import annotations

import itertools
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .checkpoint import load_checkpoint, save_checkpoint
from .datastore import DatasetManifest, SplitReader
from .errors import BadSpec, ConfigError, DataMissing, LabelOutOfRange, NonFiniteLoss
from .metrics import ConfusionMatrix, EvalReport
from .models import ModelSpec, build, forward_sequence


@dataclass
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 8
    max_epochs: int = 60
    patience: int = 10
    seed: int = 0
    device: str = "cpu"
    strict_determinism: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")


def sequence_loss(scores: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean per-pixel cross-entropy of softmax-normalized class scores."""
    if labels.min() < 0 or labels.max() >= scores.shape[1]:
        raise LabelOutOfRange(
            f"labels outside 0..{scores.shape[1] - 1}: "
            f"[{labels.min().item()}, {labels.max().item()}]")
    return F.cross_entropy(scores, labels)


def _batches(reader: SplitReader, order: np.ndarray, batch_size: int, device):
    for lo in range(0, len(order), batch_size):
        chunk = order[lo:lo + batch_size]
        frames = torch.from_numpy(np.stack([reader[int(i)].frames for i in chunk]))
        labels = torch.from_numpy(
            np.stack([reader[int(i)].label for i in chunk])).long()
        yield frames.to(device), labels.to(device)


@torch.no_grad()
def evaluate_on_reader(net, reader: SplitReader, batch_size: int = 8,
                       device: str = "cpu", split_name: str = "?") -> EvalReport:
    net.eval()
    confusion = ConfusionMatrix(net.spec.n_classes)
    order = np.arange(len(reader))
    for frames, labels in _batches(reader, order, batch_size, device):
        scores = forward_sequence(net, frames)
        pred = scores.argmax(dim=1).cpu().numpy()
        confusion.update(pred, labels.cpu().numpy())
    return EvalReport(split=split_name,
                      per_class_iou=confusion.per_class_iou().tolist(),
                      mean_iou=confusion.mean_iou(),
                      pixel_count=confusion.total)


def evaluate(checkpoint_path, manifest: DatasetManifest, split: str,
             batch_size: int = 8, device: str = "cpu") -> EvalReport:
    """Per-class IoU and mean IoU of a checkpointed model on one split."""
    loaded = load_checkpoint(checkpoint_path)
    reader = SplitReader(manifest, split)
    return evaluate_on_reader(loaded.net.to(device), reader, batch_size, device,
                              split_name=split)


@dataclass
class TrainResult:
    checkpoint_path: Path
    best_val_miou: float
    best_epoch: int
    epochs_run: int
    log: list[dict] = field(default_factory=list)


def train(spec: ModelSpec, manifest: DatasetManifest, config: TrainConfig,
          out_dir: str | Path, val_fn=None, train_split: str = "train",
          val_split: str = "val", init_from: str | Path | None = None) -> TrainResult:
    """Train a model, keeping the checkpoint with the best validation mIoU.

    Stops after *patience* consecutive non-improving epochs. *init_from*
    initializes all same-named weights from an existing checkpoint (e.g. a
    feedforward net warm-starting its recurrent twin). *val_fn* is a hook
    for tests: it replaces the validation pass and receives the net.
    """
    if spec.family == "rfcd" and spec.fm_kind == "identity":
        raise BadSpec("the identity filter is a test hook, not a trainable model")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    torch.manual_seed(config.seed)
    if config.strict_determinism:
        torch.use_deterministic_algorithms(True)

    device = torch.device(config.device)
    net = build(spec, seed=config.seed).to(device)
    if init_from is not None:
        from .models import transfer_shared_weights
        transfer_shared_weights(net, load_checkpoint(init_from).net.to(device))
    if config.optimizer != "adam":
        raise ConfigError(f"unknown optimizer {config.optimizer!r}")
    optimizer = torch.optim.Adam(net.parameters(), lr=config.learning_rate,
                                 weight_decay=config.weight_decay)

    train_reader = SplitReader(manifest, train_split)
    if len(train_reader) == 0:
        raise DataMissing(f"split {train_split!r} is empty")
    if val_fn is None:
        val_reader = SplitReader(manifest, val_split)

        def val_fn(model):
            return evaluate_on_reader(model, val_reader, config.batch_size,
                                      device, split_name=val_split).mean_iou

    ckpt_path = out_dir / f"{spec.name}-best.ckpt"
    log_path = out_dir / f"{spec.name}-log.jsonl"
    log: list[dict] = []
    best_miou = -1.0
    best_epoch = -1
    bad_epochs = 0
    epoch = 0

    with open(log_path, "w") as log_file:
        for epoch in range(1, config.max_epochs + 1):
            start = time.monotonic()
            net.train()
            order = np.arange(len(train_reader))
            np.random.Generator(
                np.random.PCG64((config.seed, epoch))).shuffle(order)
            losses = []
            for batch_idx, (frames, labels) in enumerate(
                    _batches(train_reader, order, config.batch_size, device)):
                optimizer.zero_grad()
                scores = forward_sequence(net, frames)
                loss = sequence_loss(scores, labels)
                if not torch.isfinite(loss):
                    dump = out_dir / f"{spec.name}-nonfinite.json"
                    dump.write_text(json.dumps({
                        "epoch": epoch, "batch_index": batch_idx,
                        "sample_indices": order[batch_idx * config.batch_size:
                                                (batch_idx + 1) * config.batch_size].tolist(),
                    }))
                    raise NonFiniteLoss(
                        f"non-finite loss at epoch {epoch} batch {batch_idx} "
                        f"(diagnostics in {dump})", batch_index=batch_idx)
                loss.backward()
                optimizer.step()
                losses.append(loss.item())

            val_miou = float(val_fn(net))
            record = {"epoch": epoch, "train_loss": float(np.mean(losses)),
                      "val_miou": val_miou,
                      "wall_time": time.monotonic() - start}
            log.append(record)
            log_file.write(json.dumps(record) + "\n")
            log_file.flush()

            if val_miou > best_miou:
                best_miou = val_miou
                best_epoch = epoch
                bad_epochs = 0
                save_checkpoint(ckpt_path, net, optimizer, epoch=epoch,
                                best_val_miou=best_miou)
            else:
                bad_epochs += 1
                if bad_epochs >= config.patience:
                    break

    return TrainResult(checkpoint_path=ckpt_path, best_val_miou=best_miou,
                       best_epoch=best_epoch, epochs_run=epoch, log=log)


def grid_search(base_spec: ModelSpec, grid: dict[str, list], manifest: DatasetManifest,
                config: TrainConfig, out_dir: str | Path,
                budget_epochs: int | None = None) -> list[dict]:
    """Train every grid cell under a shared epoch budget, ranked by val mIoU.

    Grid keys are "model.<field>" or "train.<field>". Completed cells leave a
    result.json behind and are skipped on resume.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    keys = sorted(grid)
    results = []
    for values in itertools.product(*(grid[k] for k in keys)):
        cell = dict(zip(keys, values))
        cell_name = "cell_" + "_".join(
            f"{k.split('.', 1)[1]}={v}" for k, v in cell.items())
        cell_dir = out_dir / cell_name
        result_path = cell_dir / "result.json"
        if result_path.exists():
            results.append(json.loads(result_path.read_text()))
            continue
        spec_fields = {}
        train_fields = {}
        for key, value in cell.items():
            section, name = key.split(".", 1)
            if section == "model":
                spec_fields[name] = value
            elif section == "train":
                train_fields[name] = value
            else:
                raise ConfigError(f"grid key {key!r} must start with model. or train.")
        spec = ModelSpec(**{**vars_of(base_spec), **spec_fields,
                            "name": f"{base_spec.name}-{cell_name}"})
        cell_config = TrainConfig(**{**vars_of(config), **train_fields})
        if budget_epochs is not None:
            cell_config.max_epochs = budget_epochs
        outcome = train(spec, manifest, cell_config, cell_dir)
        record = {"cell": cell, "best_val_miou": outcome.best_val_miou,
                  "best_epoch": outcome.best_epoch,
                  "epochs_run": outcome.epochs_run,
                  "checkpoint": str(outcome.checkpoint_path)}
        result_path.write_text(json.dumps(record, indent=2))
        results.append(record)
    results.sort(key=lambda r: r["best_val_miou"], reverse=True)
    (out_dir / "ranking.json").write_text(json.dumps(results, indent=2))
    return results


def vars_of(obj) -> dict:
    import dataclasses
    return dataclasses.asdict(obj) if dataclasses.is_dataclass(obj) else dict(vars(obj))
