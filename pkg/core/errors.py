"""
Exception hierarchy for the intent detection toolkit.
"""


class MlmcidError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(MlmcidError):
    """Invalid or unknown configuration."""


class TaxonomyError(MlmcidError):
    """Malformed taxonomy file or violated taxonomy invariant."""


class UnknownLabelError(TaxonomyError, KeyError):
    """Label lookup failed."""

    def __init__(self, label: str, granularity: str = "fine"):
        self.label = label
        self.granularity = granularity
        super().__init__(f"unknown {granularity} label: {label!r}")

    def __str__(self) -> str:
        return self.args[0]


class CorpusError(MlmcidError):
    """Base class for dataset problems."""


class CorpusFormatError(CorpusError):
    """JSONL line does not follow the example schema."""


class ExampleValidationError(CorpusError):
    """Example violates a MultiIntentExample invariant."""


class CoarseCollisionError(CorpusError):
    """Utterances selected for one example share a coarse label."""


class SynthesisExhaustedError(CorpusError):
    """Pool cannot provide the requested number of distinct examples."""


class EncoderError(MlmcidError):
    """Encoder input or configuration problem."""


class AdapterUnavailableError(EncoderError):
    """External encoder adapter is not registered or its backend is missing."""


class AdapterContractError(EncoderError):
    """Adapter returned a wrong number of token vectors."""


class DecoderError(MlmcidError):
    """Decoder input problem (e.g. fully masked sentence)."""


class ObjectiveError(MlmcidError):
    """Invalid loss targets."""


class TrainingError(MlmcidError):
    """Training could not proceed."""


class NonFiniteLossError(TrainingError):
    """Loss became NaN or infinite."""

    def __init__(self, batch_id: str, breakdown: dict):
        self.batch_id = batch_id
        self.breakdown = breakdown
        parts = ", ".join(f"{key}={value}" for key, value in breakdown.items())
        super().__init__(f"non-finite loss at batch {batch_id}: {parts}")


class CheckpointError(MlmcidError):
    """Checkpoint cannot be read or does not match expectations."""


class EvaluationError(MlmcidError):
    """Evaluation input problem."""


class TaxonomyMismatchError(EvaluationError):
    """Evaluation data uses labels the checkpoint does not know."""
