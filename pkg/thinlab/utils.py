"""Shared utility functions for the application."""
import logging
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from typing import Callable, Generator, IO, Iterable, TypeVar

from thinlab.config import get_thread_count

T = TypeVar("T")
R = TypeVar("R")


@contextmanager
def atomic_write(path: str, mode: str = "w") -> Generator[IO, None, None]:
    """
    Provide a transactional scope around writing one file.
    Writes go to a temporary file in the target directory, which replaces
    the target on success and is removed on failure.
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    handle = os.fdopen(fd, mode, newline="" if "b" not in mode else None)
    try:
        yield handle
        handle.close()
        os.replace(tmp_path, path)
    except Exception as e:
        logging.error(f"atomic_write: discarding partial write of {path}: {e}", exc_info=True)
        handle.close()
        os.unlink(tmp_path)
        raise


def parallel_map(func: Callable[[T], R], items: Iterable[T], threads: int | None = None) -> list[R]:
    """Map func over items on a thread pool, returning results in input order.

    Args:
        func: Function applied to each item
        items: Work items, typically batch indices
        threads: Worker count (defaults to THINLAB_THREADS)

    Returns:
        list[R]: Results in the order of items
    """
    work = list(items)
    workers = threads or get_thread_count()
    if workers == 1 or len(work) <= 1:
        return [func(item) for item in work]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, work))
