"""Order-preserving map over task units, optionally in a process pool.

Determinism does not depend on the pool: every unit derives its own
RngStream before dispatch and results are gathered by index.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor


def pmap(fn, items, processes: int = 1) -> list:
    items = list(items)
    if processes <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=processes) as pool:
        return list(pool.map(fn, items))
