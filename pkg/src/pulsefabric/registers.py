"""FPGA register file and register map.

All pipeline configuration flows through 64-bit registers written over the network:
lookup-table entries (two registers per entry: a packed mapping word and a delay word),
bucket parameters (destination node, capacity, transit budget), and a control register
whose commit bit decodes the staged values into a live pipeline configuration.
Unwritten registers read as zero. The map is documented in docs/register_map.md.
"""

from __future__ import annotations

from .pipeline import BucketConfig, Pipeline, RouteEntry

WORD_MASK = (1 << 64) - 1

REG_CONTROL = 0x0000
CONTROL_COMMIT_BIT = 1 << 0

LUT_BASE = 0x1_0000
LUT_ENTRIES = 1 << 14          # one slot per possible 14-bit source address
LUT_STRIDE = 2                 # MAP word + DELAY word
LUT_END = LUT_BASE + LUT_ENTRIES * LUT_STRIDE

# MAP word layout
LUT_SOURCE_SHIFT = 0
LUT_DEST_SHIFT = 14
LUT_BUCKET_SHIFT = 28
LUT_BUCKET_BITS = 16
LUT_VALID_BIT = 1 << 63

BUCKET_BASE = 0x4_0000
BUCKET_SLOTS = 4096
BUCKET_STRIDE = 4              # DEST, CAPACITY, BUDGET, reserved
BUCKET_END = BUCKET_BASE + BUCKET_SLOTS * BUCKET_STRIDE
BUCKET_DEST_OFF = 0
BUCKET_CAPACITY_OFF = 1
BUCKET_BUDGET_OFF = 2


class UnknownRegister(Exception):
    """An address outside the documented register map."""


def lut_map_address(entry: int) -> int:
    return LUT_BASE + entry * LUT_STRIDE


def lut_delay_address(entry: int) -> int:
    return LUT_BASE + entry * LUT_STRIDE + 1


def bucket_address(index: int, offset: int) -> int:
    return BUCKET_BASE + index * BUCKET_STRIDE + offset


def pack_lut_map(source: int, dest_neuron: int, bucket_index: int) -> int:
    if bucket_index >= 1 << LUT_BUCKET_BITS:
        raise ValueError("bucket_index exceeds the packed field width")
    return (
        LUT_VALID_BIT
        | (source << LUT_SOURCE_SHIFT)
        | (dest_neuron << LUT_DEST_SHIFT)
        | (bucket_index << LUT_BUCKET_SHIFT)
    )


def unpack_lut_map(word: int) -> tuple[int, int, int]:
    neuron_mask = (1 << 14) - 1
    source = (word >> LUT_SOURCE_SHIFT) & neuron_mask
    dest = (word >> LUT_DEST_SHIFT) & neuron_mask
    bucket = (word >> LUT_BUCKET_SHIFT) & ((1 << LUT_BUCKET_BITS) - 1)
    return source, dest, bucket


class RegisterFile:
    """Sparse 64-bit register store for one FPGA.

    Reads return the last written value; unwritten addresses read as zero.
    `on_commit` fires when the control register is written with the commit bit set.
    """

    def __init__(self) -> None:
        self._values: dict[int, int] = {}
        self.on_commit = None  # set by the owning endpoint

    @staticmethod
    def check_address(address: int) -> None:
        if address == REG_CONTROL:
            return
        if LUT_BASE <= address < LUT_END:
            return
        if BUCKET_BASE <= address < BUCKET_END:
            return
        raise UnknownRegister(f"address {address:#x} is not in the register map")

    def write(self, address: int, value: int) -> None:
        self.check_address(address)
        if not 0 <= value <= WORD_MASK:
            raise ValueError("register values are 64-bit")
        self._values[address] = value
        if address == REG_CONTROL and value & CONTROL_COMMIT_BIT and self.on_commit is not None:
            self.on_commit()

    def read(self, address: int) -> int:
        self.check_address(address)
        return self._values.get(address, 0)

    # -- decode -------------------------------------------------------------

    def decode_routes(self) -> list[RouteEntry]:
        routes: list[RouteEntry] = []
        for address, word in sorted(self._values.items()):
            if not LUT_BASE <= address < LUT_END or (address - LUT_BASE) % LUT_STRIDE:
                continue
            if not word & LUT_VALID_BIT:
                continue
            source, dest, bucket = unpack_lut_map(word)
            delay = self._values.get(address + 1, 0)
            routes.append(RouteEntry(source, dest, bucket, delay))
        return routes

    def decode_buckets(self) -> list[BucketConfig]:
        buckets: list[BucketConfig] = []
        for index in range(BUCKET_SLOTS):
            capacity = self._values.get(bucket_address(index, BUCKET_CAPACITY_OFF), 0)
            if capacity == 0:
                continue  # unconfigured slot
            dest = self._values.get(bucket_address(index, BUCKET_DEST_OFF), 0)
            budget = self._values.get(bucket_address(index, BUCKET_BUDGET_OFF), 0)
            buckets.append(BucketConfig(index, dest, capacity, budget))
        return buckets

    def apply_to(self, pipeline: Pipeline) -> None:
        pipeline.configure(self.decode_routes(), self.decode_buckets())
