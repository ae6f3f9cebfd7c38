from dataclasses import dataclass


class SidecarError(Exception):
    pass


@dataclass(frozen=True)
class SidecarConfig:
    """Knobs shared by embedding and fine-tuning runs.

    ``query_prompt`` is the model-side query prefix (e.g. Stella's s2p prompt);
    it is prepended to every text when set, and applies to queries only by
    convention: run the sidecar separately for posts and fact-checks.
    """

    model: str
    batch_size: int = 32
    device: str = "cpu"
    query_prompt: str | None = None
    normalize: bool = True
    seed: int = 42

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise SidecarError("batch_size must be >= 1")
        if not self.model:
            raise SidecarError("model identifier must be set")
