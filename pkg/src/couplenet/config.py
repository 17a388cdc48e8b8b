"""Run configuration: one JSON document holding every tunable, validated
strictly (unknown keys are rejected) and round-trippable, so each run can
write its fully-resolved config next to its outputs."""

import json
from dataclasses import dataclass, field

from .coupling import CouplingConfig
from .heads import HeadConfig
from .model import CoupleNetModel, ModelDims
from .proposals import ProposalConfig
from .synthdata import DatasetManifest, SceneConfig
from .train import TrainConfig

CONFIG_VERSION = 1

NORM_ALIASES = {"none": "none", "l2": "l2", "conv": "learned_scale",
                "learned_scale": "learned_scale"}
BRANCH_MODES = {"local": (True, False), "global": (False, True), "both": (True, True)}


class ConfigError(ValueError):
    pass


def _take(d, defaults, context):
    unknown = set(d) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys in {context}: {sorted(unknown)}")
    out = dict(defaults)
    out.update(d)
    return out


@dataclass
class RunConfig:
    seed: int = 0
    model: dict = field(default_factory=dict)
    coupling: dict = field(default_factory=dict)
    context: bool = False
    dataset: dict = field(default_factory=dict)
    proposals: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    eval: dict = field(default_factory=dict)

    MODEL_DEFAULTS = {"k": 3, "num_classes": 4, "reduce_d": 64, "hidden": 64,
                      "c1": 12, "c2": 24, "c3": 32}
    COUPLING_DEFAULTS = {"normalization": "learned_scale", "strategy": "sum",
                         "branches": "both"}
    DATASET_DEFAULTS = {"seed": 11, "num_train": 500, "num_test": 200, "scene": {}}
    PROPOSAL_DEFAULTS = {"jitter_scale": 0.05, "positives_per_gt": 6,
                         "negatives_per_image": 8, "test_proposals": 40}
    TRAIN_DEFAULTS = {"lr_schedule": [[2000, 0.002], [500, 0.0002]],
                      "momentum": 0.9, "rois_per_image": 32,
                      "cls_weight": 1.0, "bbox_weight": 1.0, "ohem": True,
                      "scales": [0.75, 1.0, 1.25], "fg_thresh": 0.5,
                      "bg_range": [0.0, 0.5], "val_every": 0}
    EVAL_DEFAULTS = {"iou_thresh": 0.5, "score_thresh": 0.05, "nms_thresh": 0.3}

    def __post_init__(self):
        self.model = _take(self.model, self.MODEL_DEFAULTS, "model")
        self.coupling = _take(self.coupling, self.COUPLING_DEFAULTS, "coupling")
        self.dataset = _take(self.dataset, self.DATASET_DEFAULTS, "dataset")
        scene_defaults = {f: getattr(SceneConfig(), f)
                          for f in SceneConfig.__dataclass_fields__}
        self.dataset["scene"] = _take(self.dataset["scene"], scene_defaults,
                                      "dataset.scene")
        self.proposals = _take(self.proposals, self.PROPOSAL_DEFAULTS, "proposals")
        self.train = _take(self.train, self.TRAIN_DEFAULTS, "train")
        self.eval = _take(self.eval, self.EVAL_DEFAULTS, "eval")
        if self.coupling["normalization"] not in NORM_ALIASES:
            raise ConfigError(
                f"unknown normalization {self.coupling['normalization']!r}")
        if self.coupling["branches"] not in BRANCH_MODES:
            raise ConfigError(f"unknown branch mode {self.coupling['branches']!r}")

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        version = data.pop("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {version}")
        defaults = {f: getattr(cls, f.upper() + "_DEFAULTS", None)
                    for f in ("model", "coupling", "dataset", "proposals",
                              "train", "eval")}
        known = {"seed", "context", *defaults}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_dict(self):
        return {"version": CONFIG_VERSION, "seed": self.seed, "model": self.model,
                "coupling": self.coupling, "context": self.context,
                "dataset": self.dataset, "proposals": self.proposals,
                "train": self.train, "eval": self.eval}

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=1, sort_keys=True)
            f.write("\n")

    # -- factory helpers -----------------------------------------------------

    def coupling_config(self):
        enable_local, enable_global = BRANCH_MODES[self.coupling["branches"]]
        return CouplingConfig(
            normalization=NORM_ALIASES[self.coupling["normalization"]],
            strategy=self.coupling["strategy"],
            enable_local=enable_local, enable_global=enable_global)

    def head_config(self):
        return HeadConfig(k=self.model["k"], num_classes=self.model["num_classes"],
                          coupling=self.coupling_config(), use_context=self.context)

    def make_model(self, seed=None):
        dims = ModelDims(in_channels=1, c1=self.model["c1"], c2=self.model["c2"],
                         c3=self.model["c3"], reduce_d=self.model["reduce_d"],
                         hidden=self.model["hidden"])
        return CoupleNetModel(self.head_config(), dims,
                              seed=self.seed if seed is None else seed)

    def make_manifest(self):
        d = self.dataset
        return DatasetManifest(seed=d["seed"], num_train=d["num_train"],
                               num_test=d["num_test"],
                               scene_config=SceneConfig(**d["scene"]))

    def proposal_config(self):
        return ProposalConfig(**self.proposals)

    def train_config(self):
        t = self.train
        return TrainConfig(
            lr_schedule=tuple((int(s), float(lr)) for s, lr in t["lr_schedule"]),
            momentum=t["momentum"], rois_per_image=t["rois_per_image"],
            cls_weight=t["cls_weight"], bbox_weight=t["bbox_weight"],
            ohem_enabled=t["ohem"], scales=tuple(t["scales"]),
            fg_thresh=t["fg_thresh"], bg_range=tuple(t["bg_range"]),
            proposals=self.proposal_config(), val_every=t["val_every"])
