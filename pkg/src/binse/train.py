"""Training loop, evaluation runner, and the ablation matrix.

Training is fully deterministic given the seed: model initialization, batch
order and optimizer updates all derive from it. The per-step loss breakdown
is appended to a JSON-lines log; checkpoints are written every eval_every
steps and at the end.
"""

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from . import dataset as ds
from . import losses, metrics
from .checkpoint import load_checkpoint, save_checkpoint
from .dsp import StftConfig, Waveform
from .errors import InvalidConfigError, TrainingFaultError
from .model import BinauralMappingEnhancer, ModelConfig, build_model, param_count

ABLATION_AXES = ("ssm_pairs", "scenario", "component_case")

# Table-style component cases: (mb_conv_mode, bottleneck, use_cross_attention, use_ifm)
COMPONENT_CASES = {
    0: ("multi", "ctfa", True, True),
    1: ("single_d1", "ctfa", True, True),
    2: ("single_d4", "ctfa", True, True),
    3: ("multi", "plain_self_attention", True, True),
    4: ("multi", "ctfa", False, True),
    5: ("multi", "ctfa", True, False),
}


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 4
    max_steps: int = 1000
    grad_clip_norm: float = 5.0
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    gamma: float = 0.01
    eval_every: int = 500
    checkpoint_dir: str = "checkpoints"
    lr_cosine_decay: bool = False

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InvalidConfigError("learning_rate must be positive")
        if self.batch_size < 1:
            raise InvalidConfigError("batch_size must be >= 1")


def _load_all(dataset_dir):
    entries = ds.load_index(dataset_dir)
    if not entries:
        raise InvalidConfigError(f"dataset index is empty: {dataset_dir}")
    examples = [ds.load_example(dataset_dir, e) for e in entries]
    return entries, examples


def _stack(examples, key, dtype=torch.float32):
    return torch.stack([torch.as_tensor(ex[key].samples, dtype=dtype) for ex in examples])


def train(model_cfg: ModelConfig, train_cfg: TrainConfig, dataset_dir,
          stft_cfg: StftConfig | None = None, log_path=None) -> dict:
    """Run the optimization loop; returns paths and the final loss report."""
    os.makedirs(train_cfg.checkpoint_dir, exist_ok=True)
    log_path = log_path or os.path.join(train_cfg.checkpoint_dir, "train_log.jsonl")
    _, examples = _load_all(dataset_dir)
    y_all = _stack(examples, "y")
    yl_all = _stack(examples, "yl")
    yr_all = _stack(examples, "yr")
    s_all = _stack(examples, "s")

    torch.manual_seed(train_cfg.seed)
    model = BinauralMappingEnhancer(model_cfg, stft_cfg)
    opt = torch.optim.Adam(
        model.parameters(), lr=train_cfg.learning_rate,
        betas=(train_cfg.beta1, train_cfg.beta2), eps=train_cfg.adam_eps,
    )
    sched = None
    if train_cfg.lr_cosine_decay:
        sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=train_cfg.max_steps)
    # keep filesystem paths out of the checkpoint header so identical runs
    # into different directories produce byte-identical checkpoints
    stored_cfg = {k: v for k, v in asdict(train_cfg).items() if k != "checkpoint_dir"}
    order_rng = np.random.default_rng(train_cfg.seed)
    n = len(examples)
    order = []
    final_report = None
    model.train()
    with open(log_path, "w", encoding="utf-8") as log:
        for step in range(1, train_cfg.max_steps + 1):
            while len(order) < train_cfg.batch_size:
                order.extend(order_rng.permutation(n).tolist())
            idx = [order.pop(0) for _ in range(train_cfg.batch_size)]
            y, yl, yr, s = y_all[idx], yl_all[idx], yr_all[idx], s_all[idx]
            out = model(y)
            n_blocks = len(out["y_pre_left"])
            try:
                l_tot, report = losses.total_loss(
                    [yl] * n_blocks, [yr] * n_blocks,
                    out["y_pre_left"], out["y_pre_right"],
                    s, out["s_pre"], gamma=train_cfg.gamma,
                )
            except TrainingFaultError as exc:
                raise TrainingFaultError(f"step {step}: {exc}") from exc
            opt.zero_grad()
            l_tot.backward()
            grad_norm = float(torch.nn.utils.clip_grad_norm_(
                model.parameters(), train_cfg.grad_clip_norm))
            opt.step()
            if sched is not None:
                sched.step()
            final_report = report
            # no timestamps here: identical seeds must give byte-identical logs
            entry = {"step": step, **report.to_dict(), "grad_norm": grad_norm}
            log.write(json.dumps(entry, sort_keys=True) + "\n")
            if train_cfg.eval_every and step % train_cfg.eval_every == 0:
                save_checkpoint(model, os.path.join(
                    train_cfg.checkpoint_dir, f"step{step:07d}.ckpt"),
                    extra={"step": step, "train_config": stored_cfg})
    final_path = os.path.join(train_cfg.checkpoint_dir, "final.ckpt")
    save_checkpoint(model, final_path,
                    extra={"step": train_cfg.max_steps, "train_config": stored_cfg})
    return {
        "checkpoint": final_path,
        "log": log_path,
        "final_loss": final_report.to_dict() if final_report else None,
        "param_count": sum(p.numel() for p in model.parameters()),
    }


def enhance(model: BinauralMappingEnhancer, noisy: Waveform) -> Waveform:
    """Single-utterance inference."""
    model.eval()
    with torch.no_grad():
        y = torch.as_tensor(noisy.samples, dtype=torch.float32).unsqueeze(0)
        s_pre = model(y)["s_pre"][0].numpy().astype(np.float64)
    return Waveform(s_pre, noisy.sample_rate)


def evaluate(checkpoint_path, dataset_dir, pesq_scores: dict | None = None) -> metrics.MetricsReport:
    """Run inference over a generated dataset and score against the references."""
    model, _ = load_checkpoint(checkpoint_path)
    return evaluate_model(model, dataset_dir, pesq_scores)


def evaluate_model(model, dataset_dir, pesq_scores: dict | None = None) -> metrics.MetricsReport:
    entries, examples = _load_all(dataset_dir)
    pairs = []
    for entry, ex in zip(entries, examples):
        est = enhance(model, ex["y"])
        pairs.append((entry["dir"], ex["s"], ex["y"], est))
    return metrics.evaluate_corpus(pairs, pesq_scores)


def _variant_configs(axis: str, base: ModelConfig):
    if axis == "ssm_pairs":
        return {str(n): _replaced(base, n_ssm_pairs=n) for n in range(1, 6)}
    if axis == "component_case":
        out = {}
        for case, (mode, bottleneck, cross, ifm) in COMPONENT_CASES.items():
            out[f"case{case}"] = _replaced(
                base, mb_conv_mode=mode, bottleneck=bottleneck,
                use_cross_attention=cross, use_ifm=ifm)
        return out
    raise InvalidConfigError(f"unknown ablation axis: {axis}")


def _replaced(cfg: ModelConfig, **kw) -> ModelConfig:
    d = asdict(cfg)
    d.update(kw)
    return ModelConfig(**d)


def run_ablation(axis: str, model_cfg: ModelConfig, train_cfg: TrainConfig,
                 manifest: ds.Manifest, work_dir, stft_cfg: StftConfig | None = None) -> dict:
    """Train/evaluate every variant along one axis under identical seeds/data.

    Returns {"axis", "variants": {name: {"param_count", "metrics", ...}}} and
    writes table.txt / table.json under work_dir.
    """
    if axis not in ABLATION_AXES:
        raise InvalidConfigError(f"unknown ablation axis: {axis}")
    os.makedirs(work_dir, exist_ok=True)
    results = {}
    if axis == "scenario":
        variants = {}
        for kind in ds.SCENARIO_KINDS:
            recipes = [ds.MixtureRecipe(**{**asdict(r), "scenario_kind": kind, "recipe_id": ""})
                       for r in manifest.recipes]
            variants[kind] = (model_cfg, ds.Manifest(recipes))
    else:
        variants = {name: (cfg, manifest) for name, cfg in _variant_configs(axis, model_cfg).items()}
    for name, (cfg, var_manifest) in variants.items():
        var_dir = os.path.join(work_dir, name)
        data_dir = os.path.join(var_dir, "data")
        ds.generate_dataset(var_manifest, data_dir)
        var_train = _replaced_train(train_cfg, checkpoint_dir=os.path.join(var_dir, "ckpt"))
        entry = {"param_count": param_count(cfg, stft_cfg)}
        if train_cfg.max_steps > 0:
            summary = train(cfg, var_train, data_dir, stft_cfg)
            report = evaluate(summary["checkpoint"], data_dir)
            entry["final_loss"] = summary["final_loss"]
            entry["metrics"] = report.means
        results[name] = entry
    table = _format_ablation_table(axis, results)
    with open(os.path.join(work_dir, "table.txt"), "w", encoding="utf-8") as fh:
        fh.write(table + "\n")
    with open(os.path.join(work_dir, "table.json"), "w", encoding="utf-8") as fh:
        json.dump({"axis": axis, "variants": results}, fh, indent=2, sort_keys=True)
    return {"axis": axis, "variants": results, "table": table}


def _replaced_train(cfg: TrainConfig, **kw) -> TrainConfig:
    d = asdict(cfg)
    d.update(kw)
    return TrainConfig(**d)


def _format_ablation_table(axis: str, results: dict) -> str:
    names = list(results)
    rows = ["params"] + sorted(
        {k for r in results.values() for k in r.get("metrics", {})})
    width = max(12, max(len(n) for n in names) + 2)
    lines = [f"{axis:<18}" + "".join(f"{n:>{width}}" for n in names)]
    for row in rows:
        cells = []
        for name in names:
            if row == "params":
                cells.append(f"{results[name]['param_count']:>{width}}")
            else:
                v = results[name].get("metrics", {}).get(row, float("nan"))
                cells.append(f"{v:>{width}.4f}")
        lines.append(f"{row:<18}" + "".join(cells))
    return "\n".join(lines)
