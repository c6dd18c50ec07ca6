import logging
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime
from typing import Callable, Iterable, List, Optional

import numpy as np
import pytz
import yaml

# Configure logging
logger = logging.getLogger(__name__)


def load_yaml(path):
    """
    Loads a YAML document
    """
    with open(path, 'r', encoding='utf-8') as file:
        return yaml.safe_load(file)


def utc_timestamp(now: Optional[datetime] = None) -> str:
    """Format the current time (or `now`) as an ISO-8601 UTC string."""
    moment = now or datetime.now(pytz.utc)
    if moment.tzinfo is None:
        moment = pytz.utc.localize(moment)
    return moment.astimezone(pytz.utc).strftime('%Y-%m-%dT%H:%M:%SZ')


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for sample `index`, so results never depend on scheduling."""
    return np.random.default_rng([int(seed), int(index)])


def parallel_map(fn: Callable, items: Iterable, threads: int = 1) -> List:
    """Ordered map, threaded when `threads` > 1."""
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(fn, items))


def frobenius_gap(a, b) -> float:
    """Relative Frobenius distance ||a - b|| / max(1, ||b||)."""
    a = np.asarray(a)
    b = np.asarray(b)
    return float(np.linalg.norm(a - b) / max(1.0, np.linalg.norm(b)))


def max_or_zero(values: Iterable[float]) -> float:
    values = list(values)
    return float(max(values)) if values else 0.0


def elapsed_since(start: datetime) -> str:
    seconds = (datetime.now() - start).total_seconds()
    return f"{seconds:.1f} seconds" if seconds < 60 else f"{seconds / 60:.1f} minutes"
