from __future__ import annotations

import hashlib
import struct

from ..runtime import Runtime
from ..soa_types import KINDS, TypeRegistry

MASK64 = (1 << 64) - 1


class App:
    """An SMMO application: declares its types, then init/step/checksum/population."""

    name = "app"

    def __init__(self, allocator: str = "dynasoar", heap_bytes: int | None = None,
                 num_blocks: int | None = None, workers: int = 1) -> None:
        registry = TypeRegistry()
        self.declare(registry)
        self.rt = Runtime(registry, allocator, heap_bytes=heap_bytes, num_blocks=num_blocks, workers=workers)
        self.store = self.rt.store
        self.registry = self.rt.registry

    @classmethod
    def declare(cls, registry: TypeRegistry) -> None:
        raise NotImplementedError

    def init(self, size: int, seed: int = 0) -> None:
        raise NotImplementedError

    def step(self) -> None:
        raise NotImplementedError

    def population(self) -> dict[str, int]:
        raise NotImplementedError

    def live_objects(self) -> int:
        return sum(self.rt.live_count(t.type_id) for t in self.registry.types)

    def checksum(self) -> int:
        """Order-insensitive digest: sum of per-object field hashes, mod 2**64."""
        total = 0
        for info in self.registry.types:
            fields = [self.store.field(info.type_id, f.name) for f in info.fields if f.kind != "ref"]
            fmt = "<" + "".join(KINDS[f.spec.kind][0][1] for f in fields)
            pack = struct.Struct(fmt).pack
            for h in self.rt.handles(info.type_id):
                data = pack(*(f.get(h) for f in fields))
                digest = hashlib.blake2b(data, digest_size=8, person=info.name.encode()[:16]).digest()
                total = (total + int.from_bytes(digest, "little")) & MASK64
        return total

    def close(self) -> None:
        self.rt.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc) -> None:
        self.close()
