"""
Inference products and the segmentation report.
"""
import csv
import json
import logging
import sys
from collections import defaultdict
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from tqdm import tqdm

from pathogan.models.domain import Domain, ImageSlice, Mode, TranslationResult
from pathogan.models.pathogan import PRIOR, PathoGAN
from pathogan.schemas.evaluation import MetricsRecord, PatientMetrics, SliceMetrics
from pathogan.services.datasets import stack_slices
from pathogan.services.metrics import aggregate, dice_per_patient, slice_metrics

logger = logging.getLogger(__name__)

CSV_NAME = "eval_report.csv"
JSON_NAME = "eval_report.json"
COLUMNS = ("dice", "hd95", "avd", "dice_pp")
LABELS = {"dice": "Dice", "hd95": "HD95", "avd": "AVD", "dice_pp": "Dice PP"}

# reference scores on BraTS 2017 (mean±std(median)), for comparison only
REFERENCE_SCORES = {
    "train": {"dice": "72.4±24.4(81.0)", "hd95": "40.6±30.7(38.0)", "avd": "10.3±15.4(4.7)", "dice_pp": "77.4±14.4(81.2)"},
    "test": {"dice": "72.9±23.8(81.4)", "hd95": "39.4±29.9(37.6)", "avd": "9.4±13.7(4.6)", "dice_pp": "77.4±14.4(81.7)"},
}


def _model_input(model: PathoGAN, x: torch.Tensor) -> torch.Tensor:
    parameter = next(model.parameters())
    return x.to(device=parameter.device, dtype=parameter.dtype)


@torch.no_grad()
def segment(model: PathoGAN, x_B: torch.Tensor, threshold: float = 0.5) -> Tuple[np.ndarray, np.ndarray]:
    """Test-mode labelmap of the B -> A generator, (B, H, W), and its thresholded mask"""
    model.eval()
    result = model.generator_B_forward(_model_input(model, x_B), Mode.TEST)
    probability = result.labelmap[:, 0].cpu().numpy()
    return probability, probability > threshold


@torch.no_grad()
def inpaint_healthy(model: PathoGAN, x_B: torch.Tensor) -> TranslationResult:
    model.eval()
    return model.generator_B_forward(_model_input(model, x_B), Mode.TEST)


@torch.no_grad()
def sample_pathology(model: PathoGAN, x_A: torch.Tensor, generator: Optional[torch.Generator] = None) -> TranslationResult:
    """A -> B with delta drawn from the prior; everything else deterministic"""
    model.eval()
    return model.generator_A_forward(_model_input(model, x_A), PRIOR, Mode.TEST, generator)


def evaluate_predictions(slices: Sequence[ImageSlice], probabilities: np.ndarray, threshold: float) -> MetricsRecord:
    """Scores of probability maps (one per slice) against the slices' gold masks"""
    per_slice = []
    groups: Dict[str, List[Tuple[np.ndarray, np.ndarray]]] = defaultdict(list)
    for s, probability in zip(slices, probabilities):
        prediction = probability > threshold
        per_slice.append(slice_metrics(prediction, s.gold_mask, s.patient_id, s.slice_index))
        groups[s.patient_id].append((prediction, s.gold_mask))

    counts = {patient_id: len(pairs) for patient_id, pairs in groups.items()}
    per_patient = [
        PatientMetrics(patient_id=patient_id, dice_pp=score, slices=counts[patient_id])
        for patient_id, score in dice_per_patient(groups).items()
    ]
    penalized = sum(1 for m in per_slice if m.penalized)
    if penalized:
        logger.warning("%d slice(s) had exactly one empty mask; distances use the image diagonal", penalized)
    return MetricsRecord(
        per_slice=per_slice,
        per_patient=per_patient,
        aggregate={
            "dice": aggregate(m.dice for m in per_slice),
            "hd95": aggregate(m.hd95 for m in per_slice),
            "avd": aggregate(m.avd for m in per_slice),
            "dice_pp": aggregate(p.dice_pp for p in per_patient),
        },
        threshold=threshold,
    )


def evaluate_dataset(
    model: PathoGAN,
    slices: Sequence[ImageSlice],
    threshold: float = 0.5,
    batch_size: int = 8,
) -> MetricsRecord:
    """Segment every pathological slice and score it against its manual segmentation"""
    evaluated = [s for s in slices if s.domain == Domain.B_PATHOLOGICAL and s.gold_mask is not None]
    if not evaluated:
        logger.warning("No pathological slice with a manual segmentation to evaluate")
    probabilities = []
    starts = range(0, len(evaluated), batch_size)
    for start in tqdm(starts, desc="evaluate", disable=not sys.stderr.isatty()):
        probability, _ = segment(model, stack_slices(evaluated[start:start + batch_size]), threshold)
        probabilities.append(probability)
    stacked = np.concatenate(probabilities) if probabilities else np.zeros((0,))
    return evaluate_predictions(evaluated, stacked, threshold)


def format_table(record: MetricsRecord, reference: Optional[str] = "test") -> str:
    """Aggregates as mean±std(median), with the reference row underneath"""
    header = "".join(f"{LABELS[c]:>18}" for c in COLUMNS)
    rows = [f"{'':<12}{header}", f"{'PathoGAN':<12}" + "".join(f"{record.aggregate[c].formatted():>18}" for c in COLUMNS)]
    if reference in REFERENCE_SCORES:
        scores = REFERENCE_SCORES[reference]
        rows.append(f"{'reference':<12}" + "".join(f"{scores[c]:>18}" for c in COLUMNS))
    return "\n".join(rows)


def write_report(
    record: MetricsRecord,
    out_dir: Path,
    config_echo: Dict[str, Any],
    checkpoint_hash: str,
    split: str,
) -> Tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out_dir / CSV_NAME, out_dir / JSON_NAME

    with open(csv_path, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(SliceMetrics.model_fields))
        writer.writeheader()
        for metrics in record.per_slice:
            writer.writerow(metrics.model_dump())

    reference = REFERENCE_SCORES.get(split)
    report = {
        "split": split,
        "threshold": record.threshold,
        "aggregate": {name: {**agg.model_dump(), "formatted": agg.formatted()} for name, agg in record.aggregate.items()},
        "per_patient": [p.model_dump() for p in record.per_patient],
        "slices": len(record.per_slice),
        "checkpoint_sha256": checkpoint_hash,
        "config": config_echo,
        "reference": {"source": "BraTS 2017 reference scores", "scores": reference or REFERENCE_SCORES},
    }
    json_path.write_text(json.dumps(report, indent=2) + "\n")
    logger.info("Wrote %s and %s", csv_path, json_path)
    return csv_path, json_path
