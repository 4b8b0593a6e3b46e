"""Run configuration: every hyperparameter, threshold, toggle, and path.

The JSON schema mirrors the dataclasses exactly; unknown keys are
rejected so a typo cannot silently fall back to a default.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import DataFormatError
from .orem import ExtractionThresholds


@dataclass
class ModelConfig:
    input_dim: int = 512
    visual_seq_len: int = 10
    d_model: int = 768
    ssm_blocks: int = 10
    ssm_state_dim: int = 16
    decoder_layers: int = 12
    decoder_heads: int = 12
    max_context: int = 128


@dataclass
class AblationConfig:
    use_prompt: bool = True
    use_objects: bool = True
    use_relations: bool = True
    template_id: int = 3
    freeze_decoder_layers: int | None = None  # None -> floor(2L/3)
    mapping: str = "ssm"

    def __post_init__(self):
        if self.mapping != "ssm":
            raise ValueError(f"unsupported mapping network {self.mapping!r}")
        if self.template_id not in (1, 2, 3):
            raise ValueError(f"template_id must be 1, 2, or 3, got {self.template_id}")


@dataclass
class HeadConfig:
    vocab_size: int = 906
    pretrain_epochs: int = 200
    pretrain_lr: float = 0.1
    joint_train: bool = False


@dataclass
class DataConfig:
    image_embeddings: str = ""
    image_ids: str = ""
    captions: str = ""
    caption_embeddings: str = ""
    caption_ids: str = ""
    word_embeddings: str = ""
    word_vocab: str = ""
    lexicon: str = ""
    prepositions: str | None = None  # None -> shipped default list
    head_prefix: str | None = None   # None -> pretrain the head
    out_dir: str = "runs/default"


@dataclass
class TrainingConfig:
    batch_size: int = 40
    learning_rate: float = 9e-6
    warmup_steps: int = 5000
    epochs: int = 6
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip_norm: float = 1.0
    seed: int = 0
    max_caption_len: int = 32
    retrieval_k: int = 7
    beam_size: int = 5
    gen_max_len: int = 20
    thresholds: ExtractionThresholds = field(default_factory=ExtractionThresholds)
    ablation: AblationConfig = field(default_factory=AblationConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    head: HeadConfig = field(default_factory=HeadConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")

    def to_json_dict(self) -> dict:
        return asdict(self)


_NESTED = {
    "thresholds": ExtractionThresholds,
    "ablation": AblationConfig,
    "model": ModelConfig,
    "head": HeadConfig,
    "data": DataConfig,
}


def _build(cls, payload: dict, where: str):
    if not isinstance(payload, dict):
        raise DataFormatError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = set(payload) - known
    if unknown:
        raise DataFormatError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for key, value in payload.items():
        sub = _NESTED.get(key)
        if sub is not None and cls is TrainingConfig:
            kwargs[key] = _build(sub, value, f"{where}.{key}")
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise DataFormatError(f"{where}: {exc}") from exc


def config_from_dict(payload: dict, where: str = "config") -> TrainingConfig:
    return _build(TrainingConfig, payload, where)


def load_config(path: str | Path) -> TrainingConfig:
    """Load and validate a config file.

    Data paths are resolved relative to the config file's directory
    (out_dir stays relative to the working directory).
    """
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON: {exc}") from exc
    config = _build(TrainingConfig, payload, str(path))
    base = Path(path).resolve().parent
    for f in fields(DataConfig):
        value = getattr(config.data, f.name)
        if f.name != "out_dir" and isinstance(value, str) and value and not Path(value).is_absolute():
            setattr(config.data, f.name, str(base / value))
    return config


def save_config(config: TrainingConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config.to_json_dict(), indent=2) + "\n", encoding="utf-8")
