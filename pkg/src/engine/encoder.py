import numpy as np

from src.domain.entities import Instruction, InstructionState
from src.domain.exceptions import CapacityError, InputError
from src.domain.numerics import Parameter, Tensor
from src.engine.layers import Module, TransformerBlock, sinusoidal_positions

DEFAULT_MAX_LENGTH = 80


class InstructionEncoder(Module):
    """
    Word embedding + sinusoidal position + one self-attention encoder block.
    The encoder output is used verbatim as the initial instruction state S_0.
    """

    def __init__(
        self,
        vocab_size: int,
        d: int = 32,
        heads: int = 2,
        max_length: int = DEFAULT_MAX_LENGTH,
        rng: np.random.Generator | None = None,
    ):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.embedding = Parameter("embedding", rng.uniform(-0.1, 0.1, size=(vocab_size, d)))
        self.block = TransformerBlock(d, heads, rng)
        self.vocab_size = vocab_size
        self.d = d
        self.max_length = max_length
        self._positions = sinusoidal_positions(max_length, d)

    def embed(self, tokens: list[int]) -> Tensor:
        ids = np.asarray(tokens, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            raise InputError(f"token id out of range for vocabulary of size {self.vocab_size}: {tokens}")
        return self.embedding[ids] + Tensor(self._positions[: len(ids)])

    def encode(self, inst: Instruction) -> tuple[Tensor, InstructionState]:
        if len(inst) > self.max_length:
            raise CapacityError(f"instruction has {len(inst)} tokens, the encoder holds at most {self.max_length}")
        h = self.block(self.embed(inst.tokens))
        return h, InstructionState(values=h, step=0)
