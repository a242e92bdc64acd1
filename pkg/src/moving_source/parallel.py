"""Order-preserving map with an optional thread pool.

The worker count comes from the MOVING_SOURCE_THREADS environment variable
(default 1, i.e. serial).  Results are always returned in input order so
parallel runs stay bitwise reproducible.
"""

import os
from concurrent.futures import ThreadPoolExecutor

ENV_THREADS = "MOVING_SOURCE_THREADS"


def thread_count():
    try:
        return max(1, int(os.environ.get(ENV_THREADS, "1")))
    except ValueError:
        return 1


def pmap(fn, items):
    items = list(items)
    n = thread_count()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
