"""Mode parameter presets.

Two deployment modes exist: "public" (gas-metered chain; index uploads are
split into small transactions and searches are spread over several bounded
transactions) and "private" (permissioned chain; large parameters, a single
unbounded search transaction, no gas).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import ParameterError

MODE_PUBLIC = "public"
MODE_PRIVATE = "private"


@dataclass(frozen=True)
class SchemeParams:
    mode: str
    lambda_bits: int = 256
    id_bits: int = 32              # serialized width of a document id
    pack_width: int = 8            # ids packed per setup-index entry
    entries_per_tx: int = 70       # setup-index entries per upload transaction
    step: int | None = 47          # entries one search transaction may touch
    search_rounds: int = 4         # transactions issued per keyword search
    max_pairs: int = 2_000_000     # owner-side capacity bound
    fp_modulus_bits: int = 2048    # forward-privacy permutation size

    def __post_init__(self):
        if self.mode not in (MODE_PUBLIC, MODE_PRIVATE):
            raise ParameterError(f"unknown mode {self.mode!r}")
        if self.lambda_bits % 8 != 0 or self.lambda_bits < 128:
            raise ParameterError("lambda_bits must be a multiple of 8 and >= 128")
        if not (1 <= self.id_bits <= 64):
            raise ParameterError("id_bits must be in [1, 64]")
        if self.pack_width < 1:
            raise ParameterError("pack_width must be >= 1")
        if self.pack_width * self.id_bits > self.lambda_bits:
            raise ParameterError(
                "packing bound violated: pack_width * id_bits must be <= lambda_bits")
        if self.entries_per_tx < 1:
            raise ParameterError("entries_per_tx must be >= 1")
        if self.step is not None and self.step < 1:
            raise ParameterError("step must be >= 1 or None for unbounded")
        if self.search_rounds < 1:
            raise ParameterError("search_rounds must be >= 1")

    @property
    def id_width(self) -> int:
        """Bytes needed to carry one id on the wire."""
        return (self.id_bits + 7) // 8

    @property
    def packed_width(self) -> int:
        """Bytes of one packed id block before zero-padding to 32."""
        return (self.pack_width * self.id_bits + 7) // 8

    @property
    def pad_id(self) -> int:
        """Reserved all-ones filler; never a legal document id."""
        return (1 << self.id_bits) - 1

    @property
    def max_id(self) -> int:
        return self.pad_id - 1

    def with_overrides(self, **kwargs) -> "SchemeParams":
        return replace(self, **kwargs)


def public_params(**overrides) -> SchemeParams:
    return SchemeParams(mode=MODE_PUBLIC).with_overrides(**overrides)


def private_params(**overrides) -> SchemeParams:
    """Permissioned-chain preset: 10 ids of 25 bits per entry, 500 entries per
    transaction, one unbounded search transaction."""
    base = SchemeParams(
        mode=MODE_PRIVATE,
        id_bits=25,
        pack_width=10,
        entries_per_tx=500,
        step=None,
        search_rounds=1,
    )
    return base.with_overrides(**overrides)


def params_for_mode(mode: str, **overrides) -> SchemeParams:
    if mode == MODE_PUBLIC:
        return public_params(**overrides)
    if mode == MODE_PRIVATE:
        return private_params(**overrides)
    raise ParameterError(f"unknown mode {mode!r}")
