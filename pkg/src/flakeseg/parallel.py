"""Order-preserving map over a thread pool."""
from concurrent.futures import ThreadPoolExecutor


def pmap(fn, items, n_jobs=1):
    items = list(items)
    if n_jobs is None or n_jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items))
