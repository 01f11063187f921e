import os
import logging
from dataclasses import dataclass, field, asdict
from fractions import Fraction
from typing import Tuple
from dotenv import load_dotenv

logger = logging.getLogger(__name__)

# Load environment variables from .env file
load_dotenv()

# ADE20K object classes
DEFAULT_OBJECT_COUNT = 150
DEFAULT_CHANNELS = 1024
DEFAULT_REPRESENTATION = 2048

AGGREGATORS = ("gram", "fc", "pool")
FUSIONS = ("cat", "sum")
ATTENTIONS = ("oab", "self-attention", "nonlocal")


@dataclass
class ModelConfig:
    """OTS model configuration."""
    c_in: int = DEFAULT_CHANNELS
    n_objects: int = DEFAULT_OBJECT_COUNT
    alphas: Tuple[Fraction, ...] = (Fraction(2), Fraction(1, 2))  # 1024 -> 512 -> 1024
    c_out: int = DEFAULT_REPRESENTATION  # scene representation width
    num_classes: int = 7
    aggregator: str = "gram"  # gram | fc | pool
    fusion: str = "cat"  # cat | sum
    use_bias: bool = False
    head_relu: bool = False  # rectifier between representation and head
    attention: str = "oab"  # oab | self-attention | nonlocal
    attention_depth: int = 2  # block count for self-attention and nonlocal; oab uses alphas
    seed: int = 0

    def __post_init__(self):
        self.alphas = tuple(Fraction(a) for a in self.alphas)

    def to_dict(self) -> dict:
        """Plain-type dictionary, suitable for the checkpoint config echo."""
        data = asdict(self)
        data["alphas"] = [str(a) for a in self.alphas]
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        values = dict(data)
        values["alphas"] = tuple(Fraction(a) for a in values.get("alphas", ()))
        return cls(**values)


@dataclass
class BenchmarkConfig:
    """Synthetic relation-learning benchmark configuration."""
    n_train: int = 2000
    n_eval: int = 500
    seed: int = 7
    min_accuracy: float = 0.90
    model: ModelConfig = field(default_factory=ModelConfig)


class Config:
    """Environment configuration for the application."""

    # Evaluation sharding width, parsed by threads()
    OTS_THREADS = os.getenv("OTS_THREADS", "1")

    OTS_LOG_LEVEL = os.getenv("OTS_LOG_LEVEL", "INFO")

    OTS_OUTPUT_DIR = os.getenv("OTS_OUTPUT_DIR", "output")

    @classmethod
    def threads(cls) -> int:
        """Sharding width, re-read so that tests and callers can override it."""
        value = os.getenv("OTS_THREADS", cls.OTS_THREADS)
        try:
            return int(value)
        except ValueError:
            raise ValueError(f"OTS_THREADS must be a positive integer, got {value!r}") from None

    @classmethod
    def validate(cls):
        """Validate that the environment configuration is usable."""
        try:
            threads = cls.threads()
        except ValueError as e:
            raise RuntimeError(str(e)) from e
        if threads < 1:
            raise RuntimeError(f"OTS_THREADS must be a positive integer, got {threads}")

        if not isinstance(logging.getLevelName(cls.OTS_LOG_LEVEL.upper()), int):
            raise RuntimeError(f"Unknown OTS_LOG_LEVEL: {cls.OTS_LOG_LEVEL}")
