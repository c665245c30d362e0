"""Shared test utilities."""

import threading


def run_threads(n, target):
    """Start ``n`` threads running ``target(i)`` behind a barrier; re-raise the first error."""
    barrier = threading.Barrier(n)
    errors = []

    def body(i):
        try:
            barrier.wait()
            target(i)
        except BaseException as e:
            errors.append(e)

    ts = [threading.Thread(target=body, args=(i,)) for i in range(n)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    if errors:
        raise errors[0]


def brute_force_capacity(widths, segment, align=8):
    """Largest c in 64..1 whose aligned columns fit in ``segment`` bytes."""
    for c in range(64, 0, -1):
        if sum(-(-c * w // align) * align for w in widths) <= segment:
            return c
    return 0
