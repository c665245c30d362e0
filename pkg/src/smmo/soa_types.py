"""Type declarations and field access over columnar storage.

Types are registered up front with named scalar fields, then the registry
is frozen and the block layout computed.  Field reads and writes go
through handles and touch exactly the bytes of one column entry.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Any, Callable, Sequence

from .errors import InvalidHandle, RegistryError
from .heap import ObjectHandle, TypeDescriptor, compute_layout

# kind -> (struct format, byte width)
KINDS = {
    "f32": ("<f", 4),
    "i32": ("<i", 4),
    "f64": ("<d", 8),
    "u64": ("<Q", 8),
    "ref": ("<Q", 8),
}

_REF_BITS = 28
_REF_MASK = (1 << _REF_BITS) - 1


def encode_ref(handle: ObjectHandle | None) -> int:
    """Pack a handle into 64 bits: type+1 (8 bits), block (28), slot (28).  0 is None."""
    if handle is None:
        return 0
    t, b, s = handle
    if not (0 <= t < 255 and 0 <= b <= _REF_MASK and 0 <= s <= _REF_MASK):
        raise InvalidHandle(f"handle {handle} cannot be encoded")
    return ((t + 1) << 56) | (b << _REF_BITS) | s


def decode_ref(value: int) -> ObjectHandle | None:
    if value == 0:
        return None
    return ObjectHandle((value >> 56) - 1, (value >> _REF_BITS) & _REF_MASK, value & _REF_MASK)


@dataclass(frozen=True)
class FieldSpec:
    name: str
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise RegistryError(f"field {self.name!r}: unknown kind {self.kind!r}")

    @property
    def width(self) -> int:
        return KINDS[self.kind][1]


@dataclass(frozen=True)
class TypeInfo:
    type_id: int
    name: str
    fields: tuple[FieldSpec, ...]
    constructor: Callable | None

    def field_index(self, name: str) -> int:
        for i, f in enumerate(self.fields):
            if f.name == name:
                return i
        raise RegistryError(f"type {self.name!r} has no field {name!r}")


class TypeRegistry:
    def __init__(self) -> None:
        self.types: list[TypeInfo] = []
        self._by_name: dict[str, TypeInfo] = {}
        self.frozen = False
        self.block_bytes: int | None = None
        self.descriptors: list[TypeDescriptor] = []

    def register_type(
        self,
        name: str,
        fields: Sequence[FieldSpec | tuple[str, str]],
        constructor: Callable | None = None,
    ) -> int:
        """Declare a type; returns its dense type id.

        ``constructor(store, handle, *args, **kwargs)`` runs on every
        allocation made through ``ObjectStore.new``.
        """
        if self.frozen:
            raise RegistryError("registry is frozen")
        if name in self._by_name:
            raise RegistryError(f"type {name!r} already registered")
        specs = tuple(f if isinstance(f, FieldSpec) else FieldSpec(*f) for f in fields)
        if not specs:
            raise RegistryError(f"type {name!r} has no fields")
        names = [f.name for f in specs]
        if len(set(names)) != len(names):
            raise RegistryError(f"type {name!r} has duplicate field names")
        info = TypeInfo(len(self.types), name, specs, constructor)
        self.types.append(info)
        self._by_name[name] = info
        return info.type_id

    def freeze(self) -> "TypeRegistry":
        if not self.frozen:
            self.block_bytes, self.descriptors = compute_layout(self.field_widths())
            self.frozen = True
        return self

    def field_widths(self) -> list[list[int]]:
        return [[f.width for f in t.fields] for t in self.types]

    def __getitem__(self, key: int | str) -> TypeInfo:
        try:
            return self._by_name[key] if isinstance(key, str) else self.types[key]
        except (KeyError, IndexError):
            raise RegistryError(f"unknown type {key!r}") from None

    def type_id(self, name: int | str) -> int:
        return self[name].type_id

    def describe(self) -> list[dict[str, Any]]:
        """Names, kinds and capacities for layout reports."""
        self.freeze()
        return [
            {
                "type_id": t.type_id,
                "name": t.name,
                "fields": [(f.name, f.kind) for f in t.fields],
                "capacity": self.descriptors[t.type_id].capacity,
                "object_bytes": self.descriptors[t.type_id].object_bytes,
            }
            for t in self.types
        ]


class Field:
    """Fast accessor for one field of one type: ``get(handle)`` / ``set(handle, value)``."""

    __slots__ = ("spec", "get", "set", "buffer", "base", "block_stride", "slot_stride")

    def __init__(self, spec: FieldSpec, buffer, base: int, block_stride: int, slot_stride: int) -> None:
        self.spec = spec
        self.buffer = buffer
        self.base = base
        self.block_stride = block_stride
        self.slot_stride = slot_stride
        st = struct.Struct(KINDS[spec.kind][0])
        unpack, pack = st.unpack_from, st.pack_into

        if spec.kind == "ref":

            def get(h):
                v = unpack(buffer, base + h[1] * block_stride + h[2] * slot_stride)[0]
                return decode_ref(v)

            def set_(h, v):
                pack(buffer, base + h[1] * block_stride + h[2] * slot_stride, encode_ref(v))

        else:

            def get(h):
                return unpack(buffer, base + h[1] * block_stride + h[2] * slot_stride)[0]

            def set_(h, v):
                pack(buffer, base + h[1] * block_stride + h[2] * slot_stride, v)

        self.get = get
        self.set = set_

    def offset(self, handle: ObjectHandle) -> int:
        return self.base + handle[1] * self.block_stride + handle[2] * self.slot_stride


def _check_value(spec: FieldSpec, value: Any) -> None:
    kind = spec.kind
    if kind == "ref":
        if value is not None and not isinstance(value, tuple):
            raise TypeError(f"field {spec.name!r} holds a handle, got {type(value).__name__}")
    elif kind in ("i32", "u64"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError(f"field {spec.name!r} is {kind}, got {type(value).__name__}")
    elif isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TypeError(f"field {spec.name!r} is {kind}, got {type(value).__name__}")


class ObjectStore:
    """Binds a frozen registry to an allocator and exposes object-level access."""

    def __init__(self, registry: TypeRegistry, allocator) -> None:
        self.registry = registry.freeze()
        self.allocator = allocator
        self._fields: dict[tuple[int, str], Field] = {}

    def field(self, type_id: int | str, name: str) -> Field:
        if isinstance(type_id, str):
            type_id = self.registry.type_id(type_id)
        key = (type_id, name)
        f = self._fields.get(key)
        if f is None:
            info = self.registry[type_id]
            idx = info.field_index(name)
            buf, base, bstride, sstride = self.allocator.field_ref(type_id, idx)
            f = Field(info.fields[idx], buf, base, bstride, sstride)
            self._fields[key] = f
        return f

    def new(self, type_id: int | str, *args, **kwargs) -> ObjectHandle:
        if isinstance(type_id, str):
            type_id = self.registry.type_id(type_id)
        h = self.allocator.allocate(type_id)
        ctor = self.registry[type_id].constructor
        if ctor is not None:
            ctor(self, h, *args, **kwargs)
        return h

    def delete(self, handle: ObjectHandle) -> None:
        self.allocator.deallocate(handle)

    def _checked(self, handle: ObjectHandle, name: str) -> Field:
        if not self.allocator.is_live(handle):
            raise InvalidHandle(f"handle {handle} is not live")
        return self.field(handle[0], name)

    def read(self, handle: ObjectHandle, name: str) -> Any:
        return self._checked(handle, name).get(handle)

    def write(self, handle: ObjectHandle, name: str, value: Any) -> None:
        f = self._checked(handle, name)
        _check_value(f.spec, value)
        f.set(handle, value)

    def location(self, handle: ObjectHandle, name: str) -> tuple[int, int]:
        """(byte offset in the backing buffer, width) of one field entry."""
        f = self.field(handle[0], name)
        return f.offset(handle), f.spec.width
