"""Training loop, configuration and checkpoints."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..autodiff import backward
from ..data.folds import make_folds, read_folds, split_by_scene
from ..data.manifest import load_arrays, read_manifest
from ..data.smoothing import smooth_labels
from ..encoder import EncoderConfig, load_weights
from ..errors import ConfigError, DataError, NumericError
from ..evaluation.correlation import srcc
from ..model import ModelConfig, TransformAR
from ..scoring import LossConfig, huber_loss
from ..weights_io import read_weights, write_weights
from .optim import AdamW, ReduceLROnPlateau

LOG_COLUMNS = (
    "epoch", "loss_total", "loss_quality", "loss_ncs", "loss_ce", "loss_reg",
    "lr_main", "lr_encoder", "val_huber", "val_srcc", "train_srcc", "smoothing",
)


@dataclass
class TrainConfig:
    variant: str = "kd"
    lr_main: float = 1e-4
    lr_encoder: float = 1e-5
    batch_size: int = 32
    epochs: int = 250
    plateau_patience: int = 20
    plateau_factor: float = 0.5
    min_lr: float = 1e-7
    seed: int = 0
    smoothing_trigger: str = "auto"
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    val_fraction: float = 0.2
    # loss
    zeta: float = 0.51
    delta: float = 1.0
    alpha: float = 0.7
    lambda0: float = 1.0
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 0.05
    objective: str = "huber"
    ce_reduction: str = "mean"
    # architecture
    image_height: int = 96
    image_width: int = 96
    patch_size: int = 16
    embed_dim: int = 64
    num_heads: int = 4
    num_layers: int = 2
    ffnn_ratio: int = 4
    use_decoder: bool = True
    use_shift: bool = True
    decoder_skip: str = "shift"
    # data and paths
    manifest: str = ""
    output_dir: str = ""
    encoder_weights: str = ""
    folds_file: str = ""
    fold: int = 0
    num_folds: int = 5
    fold_seed: int = 0
    train_fraction: float = 0.5
    strict_sigma: bool = False
    center_bias: bool = True

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction must lie in [0, 1), got {self.val_fraction}")
        self.smoothing_start()  # validates the trigger
        self.model_config()

    def smoothing_start(self) -> int | None | str:
        """``"auto"``, ``None`` (off) or a fixed start epoch."""
        trig = str(self.smoothing_trigger).strip().lower()
        if trig == "auto":
            return "auto"
        if trig in ("off", "none", "never", ""):
            return None
        try:
            start = int(trig)
        except ValueError:
            raise ConfigError(f"smoothing_trigger must be 'auto', 'off' or an epoch number, got {trig!r}") from None
        if start < 0:
            raise ConfigError("smoothing_trigger epoch must be >= 0")
        return start

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(self.image_height, self.image_width, self.patch_size, self.embed_dim,
                             self.num_heads, self.num_layers, self.ffnn_ratio)

    def loss_config(self) -> LossConfig:
        return LossConfig(self.zeta, self.delta, self.alpha, self.lambda0, self.lambda1, self.lambda2, self.lambda3)

    def model_config(self) -> ModelConfig:
        return ModelConfig(variant=self.variant, encoder=self.encoder_config(), loss=self.loss_config(),
                           use_decoder=self.use_decoder, use_shift=self.use_shift, decoder_skip=self.decoder_skip,
                           objective=self.objective, ce_reduction=self.ce_reduction)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown TrainConfig keys: {', '.join(unknown)}")
        return cls(**d)


@dataclass
class TrainResult:
    model: TransformAR
    optimizer: AdamW
    log: list = field(default_factory=list)
    checkpoint: Path | None = None


class SmoothingSchedule:
    """Decides per epoch whether training targets are perturbed.

    In ``auto`` mode smoothing switches on (and stays on) once the monitored
    validation loss has not improved for ``patience`` epochs while the
    training loss still improved in the latest epoch.
    """

    def __init__(self, start, patience: int, threshold: float = 1e-6):
        self.mode = start
        self.patience = max(1, patience)
        self.threshold = threshold
        self.active = start == 0
        self.best_val = math.inf
        self.stale = 0
        self.prev_train = math.inf

    def is_active(self, epoch: int) -> bool:
        if isinstance(self.mode, int):
            return epoch >= self.mode
        return self.mode == "auto" and self.active

    def update(self, train_loss: float, val_loss: float) -> None:
        if val_loss < self.best_val - self.threshold:
            self.best_val = val_loss
            self.stale = 0
        else:
            self.stale += 1
        train_improving = train_loss < self.prev_train
        self.prev_train = min(self.prev_train, train_loss)
        if self.mode == "auto" and not self.active and self.stale >= self.patience and train_improving:
            self.active = True

    def state_dict(self) -> dict:
        return {"active": self.active, "best_val": self.best_val, "stale": self.stale, "prev_train": self.prev_train}

    def load_state_dict(self, d: dict) -> None:
        self.active, self.best_val, self.stale, self.prev_train = d["active"], d["best_val"], d["stale"], d["prev_train"]


def build_optimizer(model: TransformAR, cfg: TrainConfig) -> AdamW:
    named = model.named_parameters()
    by_id = {id(t): n for n, t in named.items()}
    groups = {}
    for gname, params in model.parameter_groups().items():
        lr = cfg.lr_encoder if gname == "encoder" else cfg.lr_main
        groups[gname] = {"lr": lr, "base_lr": lr, "params": {by_id[id(t)]: t for t in params}}
    return AdamW(groups, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay)


def center_output_bias(model: TransformAR, mos) -> None:
    """Start both regressors at the mean training score.

    Pooling weights start at 1/T, so this makes the initial pMOS equal to the
    mean MOS and spares the optimiser a long climb to the score scale.
    """
    level = float(np.mean(mos))
    for reg in model.regressors.values():
        reg["mlp.fc2.bias"].data = np.full(1, level)


def _safe_srcc(pred, target) -> float:
    try:
        return srcc(pred, target)
    except ArithmeticError:
        return float("nan")
    except ValueError:
        return float("nan")


def fit(model: TransformAR, cfg: TrainConfig, train, val=None, rng: np.random.Generator | None = None,
        optimizer: AdamW | None = None, start_epoch: int = 0, resume_state: dict | None = None,
        log_path=None) -> TrainResult:
    """Run the optimisation loop on in-memory triplet arrays."""
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    optimizer = optimizer or build_optimizer(model, cfg)
    sched = ReduceLROnPlateau(cfg.lr_main, cfg.plateau_patience, cfg.plateau_factor, cfg.min_lr)
    smoothing = SmoothingSchedule(cfg.smoothing_start(), cfg.plateau_patience // 2)
    if resume_state:
        sched.load_state_dict(resume_state["scheduler"])
        smoothing.load_state_dict(resume_state["smoothing"])
        for g in optimizer.groups.values():
            g["lr"] = max(g["base_lr"] * sched.scale, cfg.min_lr)
    n = len(train)
    if n == 0:
        raise DataError("training set is empty")
    delta = model.config.loss.delta
    distill = model.config.distill
    if cfg.center_bias and start_epoch == 0 and resume_state is None:
        center_output_bias(model, train.mos)
    log = []
    for epoch in range(start_epoch, cfg.epochs):
        smoothing_on = smoothing.is_active(epoch)
        targets = smooth_labels(train.mos, rng) if smoothing_on else train.mos
        targets = np.atleast_1d(np.asarray(targets, dtype=np.float64))
        order = rng.permutation(n)
        sums = {k: 0.0 for k in ("total", "quality", "ncs", "ce", "reg")}
        clean_quality = 0.0
        epoch_pred = np.empty(n)
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            out = model.forward(train.fg[idx], train.bg[idx], train.sup[idx])
            terms = model.losses(out, targets[idx], train.fg_labels[idx] if distill else None,
                                 train.bg_labels[idx] if distill else None)
            for name, t in terms.items():
                if not np.isfinite(t.data):
                    raise NumericError(f"non-finite {name} loss at epoch {epoch}, batch starting {lo}")
            optimizer.zero_grad()
            backward(terms["total"])
            optimizer.step()
            for name, t in terms.items():
                sums[name] += float(t.data) * len(idx)
            epoch_pred[idx] = np.atleast_1d(out.pmos.data)
            clean_quality += float(huber_loss(train.mos[idx], out.pmos.data, delta).data) * len(idx)
        means = {k: v / n for k, v in sums.items()}
        train_huber = clean_quality / n
        if val is not None and len(val):
            val_pred = model.predict(val.fg, val.bg, val.sup, cfg.batch_size)
            val_huber = float(huber_loss(val.mos, val_pred, delta).data)
            val_srcc = _safe_srcc(val_pred, val.mos)
        else:
            val_huber, val_srcc = train_huber, float("nan")
        smoothing.update(train_huber, val_huber)
        sched.step(val_huber)
        for g in optimizer.groups.values():
            g["lr"] = max(g["base_lr"] * sched.scale, cfg.min_lr)
        row = {
            "epoch": epoch,
            "loss_total": means["total"],
            "loss_quality": means["quality"],
            "loss_ncs": means["ncs"] if distill else float("nan"),
            "loss_ce": means["ce"] if distill else float("nan"),
            "loss_reg": means["reg"],
            "lr_main": optimizer.groups["main"]["lr"],
            "lr_encoder": optimizer.groups["encoder"]["lr"] if "encoder" in optimizer.groups else float("nan"),
            "val_huber": val_huber,
            "val_srcc": val_srcc,
            "train_srcc": _safe_srcc(epoch_pred, train.mos),
            "smoothing": int(smoothing_on),
        }
        log.append(row)
    if log_path is not None:
        write_log(log_path, log)
    result = TrainResult(model, optimizer, log)
    result.scheduler_state = sched.state_dict()
    result.smoothing_state = smoothing.state_dict()
    result.rng_state = rng.bit_generator.state
    return result


def write_log(path, rows, prefix_lines=()) -> None:
    """CSV with one row per epoch; ``prefix_lines`` are raw rows of earlier epochs."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_COLUMNS)
        w.writerows(prefix_lines)
        for r in rows:
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in LOG_COLUMNS])


def _log_lines_before(path: Path, epoch: int) -> list:
    if not path.is_file():
        return []
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return [r for r in rows if r and int(r[0]) < epoch]


# checkpoints ------------------------------------------------------------------

WEIGHTS_FILE = "model.arwt"
META_FILE = "checkpoint.json"


def save_checkpoint(path, model: TransformAR, optimizer: AdamW | None = None, train_config: TrainConfig | None = None,
                    train_state: dict | None = None) -> Path:
    """Directory with ``model.arwt`` (parameters + optimizer moments) and ``checkpoint.json``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    arrays = model.state_arrays()
    if optimizer is not None:
        arrays.update(optimizer.state_arrays())
    write_weights(out / WEIGHTS_FILE, arrays)
    meta = {
        "model_config": model.config.to_dict(),
        "train_config": None if train_config is None else train_config.to_dict(),
        "train_state": train_state,
        "optimizer_lrs": None if optimizer is None else {k: g["lr"] for k, g in optimizer.groups.items()},
    }
    (out / META_FILE).write_text(json.dumps(meta, indent=1, sort_keys=True))
    return out


def load_checkpoint(path):
    """Return ``(model, optimizer_arrays, meta)`` from a checkpoint directory."""
    path = Path(path)
    if not (path / META_FILE).is_file():
        raise DataError(f"not a checkpoint directory (missing {META_FILE}): {path}")
    meta = json.loads((path / META_FILE).read_text())
    cfg = ModelConfig.from_dict(meta["model_config"])
    arrays = read_weights(path / WEIGHTS_FILE)
    model = TransformAR.initialize(cfg, np.random.default_rng(0))
    optim_arrays = {k: v for k, v in arrays.items() if k.startswith("optim.")}
    model_arrays = {k: v for k, v in arrays.items() if not k.startswith("optim.")}
    unexpected = sorted(set(model_arrays) - set(model.named_parameters()))
    if unexpected:
        from ..errors import UnexpectedTensorError

        raise UnexpectedTensorError(f"unexpected tensors: {', '.join(unexpected)}")
    model.load_state_arrays(model_arrays)
    return model, optim_arrays, meta


# end-to-end run ---------------------------------------------------------------


def resolve_fold(cfg: TrainConfig, triplets):
    """(train_triplets, test_triplets) for ``cfg.fold``; fold -1 trains on everything."""
    if cfg.fold < 0:
        return list(triplets), []
    if cfg.folds_file:
        folds = read_folds(cfg.folds_file)
    else:
        folds = make_folds(triplets, max(cfg.num_folds, cfg.fold + 1), cfg.fold_seed, cfg.train_fraction)
    if cfg.fold >= len(folds):
        raise ConfigError(f"fold {cfg.fold} not available ({len(folds)} folds)")
    split = folds[cfg.fold]
    by_id = {t.id: t for t in triplets}
    try:
        return [by_id[i] for i in split.train_ids], [by_id[i] for i in split.test_ids]
    except KeyError as exc:
        raise DataError(f"fold references unknown id {exc.args[0]!r}") from None


def prepare_data(cfg: TrainConfig, triplets, base_dir):
    """Load train / validation / test arrays for the configured fold."""
    train_t, test_t = resolve_fold(cfg, triplets)
    val_t = []
    scenes = {t.scene_id for t in train_t}
    if cfg.val_fraction > 0 and len(scenes) >= 2:
        keep, val_ids = split_by_scene(train_t, 1.0 - cfg.val_fraction, np.random.default_rng(cfg.seed + 7919))
        keep, val_ids = set(keep), set(val_ids)
        if keep and val_ids:
            val_t = [t for t in train_t if t.id in val_ids]
            train_t = [t for t in train_t if t.id in keep]
    h, w = cfg.image_height, cfg.image_width
    load = lambda ts: load_arrays(ts, base_dir, h, w)  # noqa: E731
    return load(train_t), (load(val_t) if val_t else None), (load(test_t) if test_t else None)


def train_run(cfg: TrainConfig, manifest=None, resume=None) -> TrainResult:
    """Train one fold from a manifest and write checkpoint + log into ``cfg.output_dir``."""
    manifest = Path(manifest or cfg.manifest)
    if not str(manifest):
        raise ConfigError("no manifest given")
    triplets = read_manifest(manifest, strict_sigma=cfg.strict_sigma)
    train, val, _ = prepare_data(cfg, triplets, manifest.parent)
    rng = np.random.default_rng(cfg.seed)
    start_epoch, resume_state = 0, None
    if resume:
        model, optim_arrays, meta = load_checkpoint(resume)
        optimizer = build_optimizer(model, cfg)
        optimizer.load_state_arrays(optim_arrays)
        resume_state = meta["train_state"]
        start_epoch = resume_state["epoch"] + 1
        rng.bit_generator.state = resume_state["rng"]
    else:
        encoder_weights = load_weights(cfg.encoder_weights, cfg.encoder_config()) if cfg.encoder_weights else None
        model = TransformAR.initialize(cfg.model_config(), rng, encoder_weights)
        optimizer = None
    out_dir = Path(cfg.output_dir) if cfg.output_dir else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    result = fit(model, cfg, train, val, rng, optimizer, start_epoch, resume_state)
    if out_dir is not None:
        earlier = _log_lines_before(Path(resume).parent / "train_log.csv", start_epoch) if resume else []
        write_log(out_dir / "train_log.csv", result.log, earlier)
        state = {
            "epoch": cfg.epochs - 1,
            "scheduler": result.scheduler_state,
            "smoothing": result.smoothing_state,
            "rng": result.rng_state,
        }
        result.checkpoint = save_checkpoint(out_dir / "checkpoint", model, result.optimizer, cfg, state)
    return result


def cross_validate(cfg: TrainConfig, manifest=None, out_dir=None) -> list:
    """Train and evaluate every fold; writes per-fold reports and ``table.txt``."""
    from dataclasses import replace

    from ..evaluation.report import evaluate_fold, table_rows

    manifest = Path(manifest or cfg.manifest)
    out = Path(out_dir or cfg.output_dir or ".")
    triplets = read_manifest(manifest, strict_sigma=cfg.strict_sigma)
    reports = []
    for k in range(cfg.num_folds):
        fold_cfg = replace(cfg, fold=k, manifest=str(manifest), output_dir=str(out / f"fold_{k}"))
        result = train_run(fold_cfg)
        _, _, test = prepare_data(fold_cfg, triplets, manifest.parent)
        if test is None:
            raise DataError(f"fold {k} has an empty test split")
        reports.append(evaluate_fold(result.model, test, k, out, cfg.batch_size))
    (out / "table.txt").write_text(table_rows(reports) + "\n")
    return reports
