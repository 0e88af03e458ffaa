"""Pipeline configuration file: one JSON document bundling the preprocessing,
segmentation, training and split settings plus the classifier architecture."""

import json
from dataclasses import dataclass, field

from .preprocess import PreprocConfig
from .segment import SegmenterSpec
from .training import SplitConfig, TrainConfig


@dataclass
class PipelineConfig:
    preproc: PreprocConfig = field(default_factory=PreprocConfig)
    segmenter: SegmenterSpec = field(default_factory=SegmenterSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    model_width: int = 16
    blocks_per_stage: tuple = (1, 1, 1, 1)
    block: str = "FC"

    def to_json(self):
        return {
            "preproc": self.preproc.to_json(),
            "segmenter": self.segmenter.to_json(),
            "train": self.train.to_json(),
            "split": {
                "ratios": list(self.split.ratios),
                "stratify_by_label": self.split.stratify_by_label,
                "group_by_patient": self.split.group_by_patient,
                "seed": self.split.seed,
            },
            "model_width": self.model_width,
            "blocks_per_stage": list(self.blocks_per_stage),
            "block": self.block,
        }

    @classmethod
    def from_json(cls, d):
        split = dict(d.get("split", {}))
        if "ratios" in split:
            split["ratios"] = tuple(split["ratios"])
        return cls(
            preproc=PreprocConfig.from_json(d.get("preproc", {})),
            segmenter=SegmenterSpec.from_json(d.get("segmenter", {})),
            train=TrainConfig.from_json(d.get("train", {})),
            split=SplitConfig(**split),
            model_width=d.get("model_width", 16),
            blocks_per_stage=tuple(d.get("blocks_per_stage", (1, 1, 1, 1))),
            block=d.get("block", "FC"),
        )


def load_pipeline_config(path=None):
    if path is None:
        return PipelineConfig()
    with open(path) as fh:
        return PipelineConfig.from_json(json.load(fh))


def save_pipeline_config(config, path):
    with open(path, "w") as fh:
        json.dump(config.to_json(), fh, indent=2)
