"""Sequential multi-hypothesis segmentation: python surface for the C++ core.

Array-level operations (dice, hungarian, ged, ...) come straight from the
extension module; the run-level helpers below wrap its JSON-string interface
with plain dicts.
"""

import json as _json

from ._seqseg import (  # noqa: F401
    __version__,
    binarize,
    brute_force_assignment,
    build_cost_matrix,
    dice,
    dice_avg,
    dist,
    ged,
    hungarian,
    iou,
    majority_vote,
    partition,
    predict,
    render_panels,
    sample_per_chunk,
    select_ablation_indices,
    set_loss,
    set_loss_grad,
    soft_dice_loss,
    soft_dice_loss_grad,
    wilcoxon_signed_rank,
)
from . import _seqseg as _core


def generate_dataset(config: dict, out_dir: str) -> dict:
    """Generate a synthetic multi-annotator dataset on disk."""
    return _json.loads(_core.generate_dataset_json(_json.dumps(config), out_dir))


def train(config: dict) -> dict:
    """Train per the config; returns the epoch log and checkpoint paths."""
    return _json.loads(_core.train_json(_json.dumps(config)))


def evaluate(checkpoint: str, data_dir: str, split: str = "test", num_masks: int = 3) -> dict:
    """Evaluate a checkpoint; returns the report (GED, dice-avg, per-sample)."""
    return _json.loads(_core.evaluate_json(checkpoint, data_dir, split, num_masks))


def compare(report_a: str, report_b: str, metric: str = "ged") -> dict:
    """Paired Wilcoxon comparison of two report JSON files."""
    return _json.loads(_core.compare_json(report_a, report_b, metric))


def ablate(config: dict, out_dir: str) -> dict:
    """Run the four-variant ablation grid; returns the table."""
    return _json.loads(_core.ablate_json(_json.dumps(config), out_dir))
