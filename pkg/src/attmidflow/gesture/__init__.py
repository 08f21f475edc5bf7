"""Synthetic gesture clips and a segment-sampled classifier over stacked flow."""

from .clips import (
    CLASSES,
    GestureClip,
    class_velocities,
    read_clips,
    render_clip,
    split_clips,
    synth_gesture_dataset,
    write_clips,
)
from .tsn import (
    GestureClassifier,
    GestureNet,
    GestureTrainConfig,
    PipelineResult,
    SegmentPlan,
    classify,
    clip_with_estimated_flow,
    consensus,
    estimate_flows,
    evaluate_classifier,
    flow_cap,
    flow_training_pairs,
    mean_flow,
    nearest_centroid_fit,
    nearest_centroid_predict,
    pipeline_recognize,
    prediction_record,
    sample_snippets,
    segment_bounds,
    snippet_starts,
    stack_snippet,
    train_classifier,
)

__all__ = [
    "CLASSES", "GestureClip", "class_velocities", "read_clips", "render_clip", "split_clips",
    "synth_gesture_dataset", "write_clips", "GestureClassifier", "GestureNet", "GestureTrainConfig",
    "PipelineResult", "SegmentPlan", "classify", "clip_with_estimated_flow", "consensus",
    "estimate_flows", "evaluate_classifier", "flow_cap", "flow_training_pairs", "mean_flow",
    "nearest_centroid_fit", "nearest_centroid_predict", "pipeline_recognize", "prediction_record",
    "sample_snippets", "segment_bounds", "snippet_starts", "stack_snippet", "train_classifier",
]
