class OutOfMemory(MemoryError):
    """No slot or block could be obtained."""


class UsageError(RuntimeError):
    """The caller broke an allocator contract."""


class DoubleFree(UsageError):
    pass


class InvalidHandle(UsageError):
    pass


class LayoutError(ValueError):
    pass


class RegistryError(ValueError):
    pass


class HeapInconsistency(AssertionError):
    """Quiescent cross-check between block headers and state bitmaps failed."""
