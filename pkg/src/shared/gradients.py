"""
Finite-difference gradient check of the full training loss.

Every trainable tensor is compared on a seeded sample of its entries:
central differences with step h in float64 against autograd. The
per-tensor error is ||a - n|| / max(||a||, ||n||), or ||a - n|| when both
norms are below 1e-10.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
import torch

from .answer import loss
from .corpus import Sample, SyntheticConfig, generate_synthetic
from .model import build_model, build_vocab, featurize
from .utils import RunConfig, get_logger

logger = get_logger('gradients')

TINY_NORM = 1e-10


@dataclass
class GradcheckReport:
    passed: bool
    max_error: float
    worst_tensor: str
    tolerance: float
    errors: Dict[str, float] = field(default_factory=dict)
    failing: List[str] = field(default_factory=list)
    entries_checked: int = 0

    def to_dict(self) -> dict:
        return {
            'status': 'PASS' if self.passed else 'FAIL',
            'max_error': self.max_error,
            'worst_tensor': self.worst_tensor,
            'tolerance': self.tolerance,
            'failing': self.failing,
            'entries_checked': self.entries_checked,
            'errors': self.errors,
        }


def relative_error(analytic: torch.Tensor, numeric: torch.Tensor) -> float:
    diff = float(torch.linalg.norm(analytic - numeric))
    scale = max(float(torch.linalg.norm(analytic)), float(torch.linalg.norm(numeric)))
    if scale < TINY_NORM:
        return diff
    return diff / scale


def padding_rows(module: torch.nn.Module, prefix: str = '') -> Dict[str, int]:
    """Weight name -> padding_idx for every embedding that has a padding row."""
    rows = {}
    for name, sub in module.named_modules():
        if isinstance(sub, torch.nn.Embedding) and sub.padding_idx is not None:
            rows[f'{prefix}{name}.weight' if name else f'{prefix}weight'] = sub.padding_idx
    return rows


def _entry_indices(tensor: torch.Tensor, max_entries: int, rng: np.random.Generator,
                   padding_row: Optional[int] = None) -> np.ndarray:
    population = np.arange(tensor.numel())
    if padding_row is not None and tensor.dim() == 2:
        # the padding row never receives gradient
        width = tensor.shape[1]
        population = np.delete(population, np.arange(padding_row * width, (padding_row + 1) * width))
    count = min(max_entries, len(population))
    return np.sort(rng.choice(population, size=count, replace=False))


def check_gradients(loss_fn: Callable[[], torch.Tensor], parameters: Dict[str, torch.nn.Parameter],
                    step: float = 1e-5, tolerance: float = 1e-4, max_entries: int = 16, seed: int = 0,
                    corrupt: Optional[str] = None, padding: Optional[Dict[str, int]] = None) -> GradcheckReport:
    """
    Compare autograd against central differences for every named parameter.
    ``corrupt`` names a tensor whose analytic gradient is deliberately
    offset, which must make the check fail on that tensor. ``padding`` maps
    embedding weights to their padding row (see ``padding_rows``); those
    entries are not sampled.
    """
    for p in parameters.values():
        p.grad = None
    loss_fn().backward()
    analytic = {name: (p.grad if p.grad is not None else torch.zeros_like(p)).detach().clone()
                for name, p in parameters.items()}
    if corrupt is not None:
        if corrupt not in analytic:
            raise KeyError(f"no parameter named {corrupt}")
        analytic[corrupt] += 1.0

    padding = padding or {}
    rng = np.random.default_rng(seed)
    errors, checked = {}, 0
    with torch.no_grad():
        for name, param in parameters.items():
            indices = _entry_indices(param, max_entries, rng, padding.get(name))
            flat = param.data.view(-1)
            numeric = torch.zeros(len(indices), dtype=param.dtype)
            for slot, index in enumerate(indices.tolist()):
                original = flat[index].item()
                flat[index] = original + step
                f_plus = loss_fn().item()
                flat[index] = original - step
                f_minus = loss_fn().item()
                flat[index] = original
                numeric[slot] = (f_plus - f_minus) / (2.0 * step)
            a = analytic[name].view(-1)[torch.as_tensor(indices, dtype=torch.long)]
            errors[name] = relative_error(a, numeric)
            checked += len(indices)

    worst = max(errors, key=errors.get) if errors else ''
    failing = sorted(name for name, err in errors.items() if not err < tolerance)
    return GradcheckReport(
        passed=not failing,
        max_error=errors.get(worst, 0.0),
        worst_tensor=worst,
        tolerance=tolerance,
        errors=errors,
        failing=failing,
        entries_checked=checked,
    )


def gradcheck_samples(seed: int, num_samples: int = 2) -> List[Sample]:
    """Small synthetic scenes that exercise OCR, objects and specials."""
    dataset = generate_synthetic(SyntheticConfig(num_samples=4 * num_samples, vocab_size=12, seed=seed))
    grounded = [s for s in dataset if s.objects and s.ocr_tokens and s.sample_id[0] in ('a', 'b')]
    return (grounded or list(dataset))[:num_samples]


def gradcheck(config: RunConfig, seed: int = 0, corrupt: Optional[str] = None,
              samples: List[Sample] = None) -> GradcheckReport:
    """Full-loss check of a freshly initialised float64 model."""
    config = config.replace(dropout=0.0, use_semantic_reasoning=True)
    samples = samples or gradcheck_samples(seed)
    extra = ['ticket', 'open late']
    vocab = build_vocab(samples, config, extra_texts=extra)
    model = build_model(config, vocab, seed=seed).double()
    model.train()
    inputs = [featurize(s, config, additional_texts=extra + list(s.gold_answers)) for s in samples]

    def total_loss() -> torch.Tensor:
        return sum(loss(model(x), x.gold_answers).loss for x in inputs)

    parameters = {name: p for name, p in model.named_parameters() if p.requires_grad}
    report = check_gradients(total_loss, parameters, step=config.gradcheck_step,
                             tolerance=config.gradcheck_tolerance,
                             max_entries=config.gradcheck_max_entries, seed=seed, corrupt=corrupt,
                             padding=padding_rows(model))
    status = '✅ PASS' if report.passed else '❌ FAIL'
    logger.info(f"{status} gradcheck seed {seed}: max error {report.max_error:.2e} on {report.worst_tensor} "
                f"({report.entries_checked} entries, {len(parameters)} tensors)")
    return report
