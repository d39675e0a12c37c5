"""Reference simulators for the supported keystream generators.

Bit convention
--------------
A key is a tuple of bits ``x1 .. xn``. Registers are laid out one after the
other, LFSR1 first, and cell 1 of a register is its first key bit. In hex
form every register is written MSB first at its own width, so ``x1`` is the
most significant bit of the first group (``2C1A7:3D35B9:EEAF2`` for A5/1).

Registers are in Fibonacci form: on a shift the new cell 1 is the XOR of the
tapped cells and every other cell takes the value of its predecessor. The
last cell of a register is its output cell.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from functools import singledispatch
from pathlib import Path
from typing import Any, Iterable, Sequence, Union

logger = logging.getLogger(__name__)

Bits = tuple[int, ...]


class GeneratorSpecError(ValueError):
    """Invalid generator description, key or keystream text."""


@dataclass(frozen=True)
class LfsrSpec:
    length: int
    feedback_taps: frozenset[int]

    def __post_init__(self) -> None:
        taps = frozenset(self.feedback_taps)
        if self.length < 2:
            raise GeneratorSpecError(f"register length must be >= 2, got {self.length}")
        if not taps:
            raise GeneratorSpecError("register needs at least one feedback tap")
        for tap in taps:
            if not 1 <= tap <= self.length:
                raise GeneratorSpecError(
                    f"tap {tap} outside register of length {self.length}"
                )
        object.__setattr__(self, "feedback_taps", taps)

    @classmethod
    def of(cls, length: int, taps: Iterable[int]) -> "LfsrSpec":
        return cls(length, frozenset(taps))


def lfsr_step(state: Sequence[int], spec: LfsrSpec) -> Bits:
    """Shift the register once and return the new state."""
    if len(state) != spec.length:
        raise GeneratorSpecError(
            f"state has {len(state)} cells, register has {spec.length}"
        )
    feedback = 0
    for tap in spec.feedback_taps:
        feedback ^= state[tap - 1]
    return (feedback,) + tuple(state[:-1])


def majority(a: int, b: int, c: int) -> int:
    return (a & b) | (a & c) | (b & c)


def _split(key: Sequence[int], lengths: Sequence[int]) -> list[Bits]:
    if len(key) != sum(lengths):
        raise GeneratorSpecError(f"key has {len(key)} bits, expected {sum(lengths)}")
    parts = []
    offset = 0
    for length in lengths:
        parts.append(tuple(int(b) for b in key[offset : offset + length]))
        offset += length
    return parts


def _require_length(length: int) -> None:
    if length < 1:
        raise GeneratorSpecError("keystream length must be >= 1")


@dataclass(frozen=True)
class A51Spec:
    """Three majority-clocked registers; ``clocking_cells`` are 1-based per register."""

    registers: tuple[LfsrSpec, LfsrSpec, LfsrSpec]
    clocking_cells: tuple[int, int, int]
    name: str = "a51"

    def __post_init__(self) -> None:
        if len(self.registers) != 3 or len(self.clocking_cells) != 3:
            raise GeneratorSpecError("A5/1-style generators have exactly three registers")
        for reg, cell in zip(self.registers, self.clocking_cells):
            if not 1 <= cell <= reg.length:
                raise GeneratorSpecError(
                    f"clocking cell {cell} outside register of length {reg.length}"
                )
        object.__setattr__(self, "registers", tuple(self.registers))
        object.__setattr__(self, "clocking_cells", tuple(self.clocking_cells))

    @property
    def register_lengths(self) -> tuple[int, ...]:
        return tuple(reg.length for reg in self.registers)

    @property
    def key_length(self) -> int:
        return sum(self.register_lengths)


@dataclass(frozen=True)
class ThresholdSpec:
    """R registers shifted together; output is the majority of their outputs."""

    registers: tuple[LfsrSpec, ...]
    name: str = "threshold"

    def __post_init__(self) -> None:
        object.__setattr__(self, "registers", tuple(self.registers))
        if len(self.registers) < 3:
            raise GeneratorSpecError("threshold generator needs R >= 3 registers")

    @property
    def register_lengths(self) -> tuple[int, ...]:
        return tuple(reg.length for reg in self.registers)

    @property
    def key_length(self) -> int:
        return sum(self.register_lengths)

    @property
    def threshold(self) -> int:
        """Smallest number of ones that makes the output 1."""
        return len(self.registers) // 2 + 1


@dataclass(frozen=True)
class SummationSpec:
    """R registers summed with a carry; the key starts with the carry bits."""

    registers: tuple[LfsrSpec, ...]
    name: str = "summation"

    def __post_init__(self) -> None:
        object.__setattr__(self, "registers", tuple(self.registers))
        if len(self.registers) < 2:
            raise GeneratorSpecError("summation generator needs R >= 2 registers")

    @property
    def carry_bits(self) -> int:
        return max(1, math.ceil(math.log2(len(self.registers))))

    @property
    def register_lengths(self) -> tuple[int, ...]:
        return (self.carry_bits,) + tuple(reg.length for reg in self.registers)

    @property
    def key_length(self) -> int:
        return sum(self.register_lengths)


@dataclass(frozen=True)
class SummationState:
    registers: tuple[Bits, ...]
    carry: int

    @classmethod
    def from_key(cls, key: Sequence[int], spec: SummationSpec) -> "SummationState":
        parts = _split(key, spec.register_lengths)
        carry = bits_to_int(parts[0])
        if carry > len(spec.registers) - 1:
            raise GeneratorSpecError(
                f"carry {carry} exceeds R-1={len(spec.registers) - 1}"
            )
        return cls(tuple(parts[1:]), carry)


def summation_step(z: Sequence[int], carry: int) -> tuple[int, int]:
    """Return ``(output bit, new carry)`` for register outputs ``z``."""
    total = sum(z) + carry
    return total & 1, total >> 1


@dataclass(frozen=True)
class GiffordSpec:
    """Eight byte cells; the 64-bit key is B1 .. B8, each MSB first."""

    name: str = "gifford"

    @property
    def register_lengths(self) -> tuple[int, ...]:
        return (8,) * 8

    @property
    def key_length(self) -> int:
        return 64


@dataclass(frozen=True)
class GiffordState:
    cells: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.cells) != 8 or any(not 0 <= c <= 0xFF for c in self.cells):
            raise GeneratorSpecError("Gifford state is exactly eight 8-bit cells")

    @classmethod
    def from_key(cls, key: Sequence[int]) -> "GiffordState":
        return cls(tuple(bits_to_int(part) for part in _split(key, (8,) * 8)))


Generator = Union[A51Spec, ThresholdSpec, SummationSpec, GiffordSpec]


def sticky_right_shift(byte: int) -> int:
    return (byte >> 1) | (byte & 0x80)


def zero_left_shift(byte: int) -> int:
    return (byte << 1) & 0xFF


def gifford_output(b1: int, b3: int, b5: int, b8: int) -> int:
    """Third byte from the left of ``(B1|B3) * (B5|B8)``."""
    return ((((b1 << 8) | b3) * ((b5 << 8) | b8)) >> 8) & 0xFF


def gifford_step(state: GiffordState) -> GiffordState:
    b = state.cells
    head = b[0] ^ sticky_right_shift(b[1]) ^ zero_left_shift(b[7])
    return GiffordState((head,) + b[:7])


A51 = A51Spec(
    registers=(
        LfsrSpec.of(19, (14, 17, 18, 19)),
        LfsrSpec.of(22, (21, 22)),
        LfsrSpec.of(23, (8, 21, 22, 23)),
    ),
    clocking_cells=(9, 11, 11),
)

THRESHOLD5 = ThresholdSpec(
    registers=(
        LfsrSpec.of(13, (5, 8, 10, 13)),
        LfsrSpec.of(15, (1, 3, 13, 15)),
        LfsrSpec.of(16, (2, 8, 13, 16)),
        LfsrSpec.of(17, (2, 4, 6, 17)),
        LfsrSpec.of(19, (14, 17, 18, 19)),
    ),
    name="threshold5",
)

SUMMATION4 = SummationSpec(
    registers=(
        LfsrSpec.of(13, (1, 3, 4, 13)),
        LfsrSpec.of(15, (2, 4, 5, 15)),
        LfsrSpec.of(16, (1, 4, 6, 16)),
        LfsrSpec.of(17, (2, 4, 6, 17)),
    ),
    name="summation4",
)

GIFFORD = GiffordSpec()

BUILTIN_GENERATORS: dict[str, Generator] = {
    "a51": A51,
    "threshold5": THRESHOLD5,
    "summation4": SUMMATION4,
    "gifford": GIFFORD,
}


def a51_keystream(key: Sequence[int], length: int, spec: A51Spec = A51) -> Bits:
    """Majority-clocked keystream; each bit is read after the step's shift."""
    _require_length(length)
    states = _split(key, spec.register_lengths)
    clock_idx = [cell - 1 for cell in spec.clocking_cells]
    out = []
    for _ in range(length):
        bits = [state[idx] for state, idx in zip(states, clock_idx)]
        maj = majority(*bits)
        states = [
            lfsr_step(state, reg) if bit == maj else state
            for state, reg, bit in zip(states, spec.registers, bits)
        ]
        out.append(states[0][-1] ^ states[1][-1] ^ states[2][-1])
    return tuple(out)


def threshold_keystream(key: Sequence[int], spec: ThresholdSpec, length: int) -> Bits:
    _require_length(length)
    states = _split(key, spec.register_lengths)
    out = []
    for _ in range(length):
        states = [lfsr_step(state, reg) for state, reg in zip(states, spec.registers)]
        ones = sum(state[-1] for state in states)
        out.append(int(ones >= spec.threshold))
    return tuple(out)


def summation_keystream(key: Sequence[int], spec: SummationSpec, length: int) -> Bits:
    _require_length(length)
    state = SummationState.from_key(key, spec)
    registers = list(state.registers)
    carry = state.carry
    out = []
    for _ in range(length):
        registers = [lfsr_step(s, reg) for s, reg in zip(registers, spec.registers)]
        bit, carry = summation_step([s[-1] for s in registers], carry)
        out.append(bit)
    return tuple(out)


def gifford_keystream(key: Sequence[int], length: int) -> bytes:
    """Return ``length`` output bytes; each is computed before the step's shift."""
    _require_length(length)
    state = GiffordState.from_key(key)
    out = bytearray()
    for _ in range(length):
        b = state.cells
        out.append(gifford_output(b[0], b[2], b[4], b[7]))
        state = gifford_step(state)
    return bytes(out)


@singledispatch
def keystream_bits(generator: Any, key: Sequence[int], length: int) -> Bits:
    """Keystream of ``generator`` as ``length`` bits."""
    raise GeneratorSpecError(f"unsupported generator {generator!r}")


@keystream_bits.register
def _(generator: A51Spec, key: Sequence[int], length: int) -> Bits:
    return a51_keystream(key, length, generator)


@keystream_bits.register
def _(generator: ThresholdSpec, key: Sequence[int], length: int) -> Bits:
    return threshold_keystream(key, generator, length)


@keystream_bits.register
def _(generator: SummationSpec, key: Sequence[int], length: int) -> Bits:
    return summation_keystream(key, generator, length)


@keystream_bits.register
def _(generator: GiffordSpec, key: Sequence[int], length: int) -> Bits:
    if length % 8:
        raise GeneratorSpecError("Gifford keystream length must be a multiple of 8 bits")
    return bytes_to_bits(gifford_keystream(key, length // 8))


def is_valid_key(generator: Generator, key: Sequence[int]) -> bool:
    if len(key) != generator.key_length:
        return False
    if isinstance(generator, SummationSpec):
        return bits_to_int(key[: generator.carry_bits]) <= len(generator.registers) - 1
    return True


def verify_key(generator: Generator, key: Sequence[int], keystream: Sequence[int]) -> bool:
    """True iff simulating ``key`` reproduces ``keystream``."""
    if not keystream:
        return is_valid_key(generator, key)
    if not is_valid_key(generator, key):
        return False
    if isinstance(generator, GiffordSpec) and len(keystream) % 8:
        return False
    return keystream_bits(generator, key, len(keystream)) == tuple(int(b) for b in keystream)


# -- bit and text codecs ----------------------------------------------------


def bits_to_int(bits: Sequence[int]) -> int:
    value = 0
    for bit in bits:
        value = (value << 1) | int(bit)
    return value


def int_to_bits(value: int, width: int) -> Bits:
    if value < 0 or value >> width:
        raise GeneratorSpecError(f"value {value:#x} does not fit in {width} bits")
    return tuple((value >> (width - 1 - i)) & 1 for i in range(width))


def bytes_to_bits(data: bytes) -> Bits:
    return tuple(bit for byte in data for bit in int_to_bits(byte, 8))


def bits_to_bytes(bits: Sequence[int]) -> bytes:
    if len(bits) % 8:
        raise GeneratorSpecError("bit string length is not a multiple of 8")
    return bytes(bits_to_int(bits[i : i + 8]) for i in range(0, len(bits), 8))


def parse_key_hex(generator: Generator, text: str) -> Bits:
    """Parse a key written as one hex group per register or one group overall."""
    groups = [g.strip() for g in text.strip().split(":")]
    widths = generator.register_lengths
    if len(groups) == 1:
        widths = (generator.key_length,)
    elif len(groups) != len(widths):
        raise GeneratorSpecError(
            f"key {text!r} has {len(groups)} groups, expected {len(widths)} or 1"
        )
    bits: list[int] = []
    for group, width in zip(groups, widths):
        try:
            value = int(group, 16)
        except ValueError:
            raise GeneratorSpecError(f"invalid hex group {group!r}") from None
        bits.extend(int_to_bits(value, width))
    key = tuple(bits)
    if not is_valid_key(generator, key):
        raise GeneratorSpecError(f"key {text!r} is not a valid {generator.name} key")
    return key


def format_key_hex(generator: Generator, key: Sequence[int]) -> str:
    parts = _split(key, generator.register_lengths)
    return ":".join(
        f"{bits_to_int(part):0{math.ceil(len(part) / 4)}X}" for part in parts
    )


def parse_bits(text: str) -> Bits:
    """Parse a keystream: a 0/1 string, or ``0x``-prefixed hex read MSB first."""
    text = "".join(text.split())
    if text.lower().startswith("0x"):
        digits = text[2:]
        try:
            value = int(digits, 16)
        except ValueError:
            raise GeneratorSpecError(f"invalid hex keystream {text!r}") from None
        return int_to_bits(value, 4 * len(digits))
    if any(ch not in "01" for ch in text):
        raise GeneratorSpecError("keystream must be a string of 0 and 1")
    return tuple(int(ch) for ch in text)


def format_bits(bits: Iterable[int]) -> str:
    return "".join(str(int(b)) for b in bits)


# -- spec files ---------------------------------------------------------------


def _registers_from(data: Any) -> tuple[LfsrSpec, ...]:
    try:
        return tuple(LfsrSpec.of(int(r["length"]), (int(t) for t in r["taps"])) for r in data)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, GeneratorSpecError):
            raise
        raise GeneratorSpecError(f"invalid register list: {exc}") from None


def generator_from_dict(data: dict[str, Any], name: str | None = None) -> Generator:
    kind = data.get("type")
    label = name or data.get("name") or str(kind)
    if kind == "a51":
        registers = _registers_from(data.get("registers"))
        cells = data.get("clocking_cells")
        if not isinstance(cells, list) or len(cells) != 3:
            raise GeneratorSpecError("a51 spec needs three clocking_cells")
        if len(registers) != 3:
            raise GeneratorSpecError("a51 spec needs three registers")
        return A51Spec(registers, tuple(int(c) for c in cells), name=label)  # type: ignore[arg-type]
    if kind == "threshold":
        return ThresholdSpec(_registers_from(data.get("registers")), name=label)
    if kind == "summation":
        return SummationSpec(_registers_from(data.get("registers")), name=label)
    if kind == "gifford":
        return GiffordSpec(name=label)
    raise GeneratorSpecError(f"unknown generator type {kind!r}")


def load_generator_spec(path: str | Path) -> Generator:
    """Load a JSON generator description."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise GeneratorSpecError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise GeneratorSpecError(f"{path}: expected a JSON object")
    generator = generator_from_dict(data, name=data.get("name") or path.stem)
    logger.debug("Loaded generator %s from %s", generator.name, path)
    return generator


def resolve_generator(
    name: str | None = None,
    spec_path: str | Path | None = None,
    spec_dir: str | Path | None = None,
) -> Generator:
    """Return a built-in generator by name or load one from a spec file.

    A bare ``spec_path`` that does not exist is looked up in ``spec_dir``
    with and without a ``.json`` suffix.
    """
    if spec_path is not None:
        candidate = Path(spec_path)
        if not candidate.exists() and spec_dir is not None:
            for option in (Path(spec_dir) / candidate, Path(spec_dir) / f"{candidate}.json"):
                if option.exists():
                    candidate = option
                    break
        return load_generator_spec(candidate)
    if name is None:
        raise GeneratorSpecError("either a generator name or a spec file is required")
    try:
        return BUILTIN_GENERATORS[name]
    except KeyError:
        known = ", ".join(sorted(BUILTIN_GENERATORS))
        raise GeneratorSpecError(f"unknown generator {name!r} (known: {known})") from None
