"""In-process message transport between rank workers.

Messages travel as byte envelopes with a fixed layout so that another
transport can be substituted::

    tag    uint32, little-endian
    count  uint64, little-endian
    data   count x float64, little-endian
"""
from __future__ import annotations

from collections import Counter, defaultdict, deque
import queue
import struct
import threading

import numpy as np

_HEAD = struct.Struct("<IQ")


class CommunicationError(RuntimeError):
    """A message could not be delivered or did not arrive in time."""


def encode(tag: int, values) -> bytes:
    data = np.ascontiguousarray(values, dtype="<f8").ravel()
    return _HEAD.pack(int(tag), data.size) + data.tobytes()


def decode(buf: bytes):
    if len(buf) < _HEAD.size:
        raise CommunicationError("truncated envelope header")
    tag, count = _HEAD.unpack_from(buf)
    body = buf[_HEAD.size:]
    if len(body) != 8 * count:
        raise CommunicationError(f"envelope declares {count} values but carries {len(body)} bytes")
    return tag, np.frombuffer(body, dtype="<f8").astype(np.float64)


class InProcessTransport:
    """Unbounded FIFO per ordered rank pair; delivery order per pair is send order."""

    def __init__(self, nranks: int, timeout: float = 60.0):
        self.nranks = nranks
        self.timeout = timeout
        self._q = {(s, d): queue.Queue() for s in range(nranks) for d in range(nranks)}
        self.sent = [Counter() for _ in range(nranks)]
        self._lock = threading.Lock()

    def endpoint(self, rank: int) -> "Endpoint":
        return Endpoint(self, rank)


class Endpoint:
    def __init__(self, transport: InProcessTransport, rank: int):
        self.t, self.rank = transport, rank
        self._pending = defaultdict(deque)

    def send(self, dest: int, tag: int, values) -> None:
        if not 0 <= dest < self.t.nranks:
            raise CommunicationError(f"rank {self.rank}: no rank {dest}")
        self.t._q[(self.rank, dest)].put(encode(tag, values))
        with self.t._lock:
            self.t.sent[self.rank][tag] += 1

    def recv(self, src: int, tag: int, what: str = "") -> np.ndarray:
        key = (src, tag)
        if self._pending[key]:
            return self._pending[key].popleft()
        q = self.t._q[(src, self.rank)]
        while True:
            try:
                buf = q.get(timeout=self.t.timeout)
            except queue.Empty:
                raise CommunicationError(
                    f"rank {self.rank}: timed out waiting for tag {tag} from rank {src}"
                    + (f" ({what})" if what else "")) from None
            got_tag, data = decode(buf)
            if got_tag == tag:
                return data
            self._pending[(src, got_tag)].append(data)


def run_ranks(n: int, fn, transport: InProcessTransport | None = None):
    """Run ``fn(rank, endpoint)`` on ``n`` worker threads and return the results.

    The first worker exception is re-raised after all workers finish.
    """
    transport = transport or InProcessTransport(n)
    results = [None] * n
    errors = [None] * n

    def work(r):
        try:
            results[r] = fn(r, transport.endpoint(r))
        except BaseException as exc:  # surfaced to the caller below
            errors[r] = exc

    if n == 1:
        work(0)
    else:
        threads = [threading.Thread(target=work, args=(r,), daemon=True) for r in range(n)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
    for e in errors:
        if e is not None:
            raise e
    return results
