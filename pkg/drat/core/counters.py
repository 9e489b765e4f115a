from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import asdict, dataclass
from typing import Dict, Iterator, Optional


@dataclass
class OpCounter:
    """Query-key products and multiply-accumulates executed while active."""

    dot_products: int = 0
    mac_ops: int = 0

    def record_attention(self, num_queries: int, num_keys: int) -> None:
        self.dot_products += num_queries * num_keys

    def record_macs(self, count: int) -> None:
        self.mac_ops += count

    def reset(self) -> None:
        self.dot_products = 0
        self.mac_ops = 0

    def snapshot(self) -> Dict[str, int]:
        return asdict(self)


_active: ContextVar[Optional[OpCounter]] = ContextVar("drat_op_counter", default=None)


def active_counter() -> Optional[OpCounter]:
    return _active.get()


@contextmanager
def count_ops(counter: Optional[OpCounter] = None) -> Iterator[OpCounter]:
    counter = counter if counter is not None else OpCounter()
    token = _active.set(counter)
    try:
        yield counter
    finally:
        _active.reset(token)
