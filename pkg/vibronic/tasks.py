from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

from loguru import logger

Item = TypeVar("Item")
Result = TypeVar("Result")


def run_parallel(
    task: Callable[[Item], Result], items: Iterable[Item], threads: int = 1
) -> list[Result]:
    """
    Apply task to every item, fanning out over a thread pool when threads > 1.
    Results keep the order of items.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [task(item) for item in items]

    logger.debug(f"running {len(items)} tasks on {threads} threads")
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(task, items))
