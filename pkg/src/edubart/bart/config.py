"""Sampler configuration for the additive-tree model."""

from dataclasses import dataclass

from ..errors import InvalidInputError


@dataclass
class BartConfig:
    n_trees: int = 200
    alpha: float = 0.95  # split prior: alpha * (1 + depth) ** -beta
    beta: float = 2.0
    k: float = 2.0  # leaf-prior scale divisor
    nu: float = 3.0  # noise-variance prior degrees of freedom
    q: float = 0.90  # prior mass below the pilot residual variance
    n_iter: int = 1200
    n_burn: int = 200
    n_thin: int = 1
    n_chains: int = 4
    seed: int = 0
    max_depth: int | None = None
    move_probs: tuple = (0.3, 0.3, 0.4)  # grow, prune, change
    nu_u: float = 1.0  # group-variance hyperprior
    lambda_u: float = 1.0
    refresh_every: int = 50  # sweeps between exact fit-cache refreshes

    def validate(self):
        if not 0.0 < self.alpha < 1.0:
            raise InvalidInputError(f"alpha must be in (0,1), got {self.alpha}")
        if self.beta <= 0:
            raise InvalidInputError(f"beta must be > 0, got {self.beta}")
        if self.n_trees < 1:
            raise InvalidInputError("need at least one tree")
        if self.k <= 0:
            raise InvalidInputError(f"k must be > 0, got {self.k}")
        if self.n_iter <= self.n_burn:
            raise InvalidInputError(
                f"n_iter ({self.n_iter}) must exceed n_burn ({self.n_burn})"
            )
        if self.n_thin < 1 or self.n_chains < 1:
            raise InvalidInputError("n_thin and n_chains must be >= 1")
        if len(self.move_probs) != 3 or abs(sum(self.move_probs) - 1.0) > 1e-9:
            raise InvalidInputError("move_probs must be 3 probabilities summing to 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise InvalidInputError("max_depth must be >= 0")

    def to_json(self):
        return {
            k: (list(v) if isinstance(v, tuple) else v)
            for k, v in self.__dict__.items()
        }

    @classmethod
    def from_json(cls, d):
        d = dict(d)
        if "move_probs" in d:
            d["move_probs"] = tuple(d["move_probs"])
        return cls(**d)
