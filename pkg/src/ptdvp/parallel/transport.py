"""Ordered point-to-point channels between neighbouring workers.

Two bindings share one interface: in-process threads talking through
``queue.Queue`` pairs, and forked processes talking through
``multiprocessing`` pipes.  Each endpoint counts what it sends so that the
coordinator can audit the boundary protocol independently of the binding.
"""

from __future__ import annotations

import multiprocessing as mp
import queue
import threading
import traceback
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Sequence

import numpy as np

DEFAULT_TIMEOUT = 600.0


class MessageKind(str, Enum):
    ENV_TRANSFER = "EnvTransfer"
    SITE_REQUEST = "SiteRequest"
    UPDATED_PAIR = "UpdatedPair"
    HANDSHAKE = "Handshake"


class TransportError(RuntimeError):
    """A channel broke or a peer failed."""


class ProtocolError(RuntimeError):
    """A message arrived out of order or with the wrong tags."""


@dataclass(frozen=True)
class BoundaryMessage:
    kind: MessageKind
    step: int
    phase: int
    boundary: int
    payload: Any = None

    @property
    def n_scalars(self) -> int:
        """Number of numbers carried by the payload."""
        items = self.payload if isinstance(self.payload, tuple) else (self.payload,)
        total = 0
        for item in items:
            if isinstance(item, np.ndarray):
                total += item.size
            elif hasattr(item, "lam"):
                total += item.lam.size
        return total


class _Abort:
    """Poison pill forwarded to neighbours when a worker dies."""

    def __init__(self, reason: str):
        self.reason = reason


class Endpoint:
    def __init__(self, timeout: float = DEFAULT_TIMEOUT):
        self.timeout = timeout
        self.sent: Counter = Counter()
        self.sent_scalars = 0

    def _put(self, obj) -> None:
        raise NotImplementedError

    def _get(self):
        raise NotImplementedError

    def send(self, msg: BoundaryMessage) -> None:
        self.sent[(msg.kind.value, msg.boundary, msg.step, msg.phase)] += 1
        self.sent_scalars += msg.n_scalars
        self._put(msg)

    def abort(self, reason: str) -> None:
        try:
            self._put(_Abort(reason))
        except Exception:
            pass

    def recv(self, kind: MessageKind, step: int, phase: int, boundary: int) -> Any:
        msg = self._get()
        if isinstance(msg, _Abort):
            raise TransportError(f"neighbour failed: {msg.reason}")
        expected = (kind, step, phase, boundary)
        got = (msg.kind, msg.step, msg.phase, msg.boundary)
        if got != expected:
            raise ProtocolError(f"expected {expected}, received {got}")
        return msg.payload


class QueueEndpoint(Endpoint):
    def __init__(self, outbox: queue.Queue, inbox: queue.Queue, timeout: float = DEFAULT_TIMEOUT):
        super().__init__(timeout)
        self.outbox, self.inbox = outbox, inbox

    def _put(self, obj):
        self.outbox.put(obj)

    def _get(self):
        try:
            return self.inbox.get(timeout=self.timeout)
        except queue.Empty:
            raise TransportError(f"no message within {self.timeout} s") from None


class PipeEndpoint(Endpoint):
    def __init__(self, conn, timeout: float = DEFAULT_TIMEOUT):
        super().__init__(timeout)
        self.conn = conn

    def _put(self, obj):
        self.conn.send(obj)

    def _get(self):
        if not self.conn.poll(self.timeout):
            raise TransportError(f"no message within {self.timeout} s")
        try:
            return self.conn.recv()
        except EOFError:
            raise TransportError("pipe closed by peer") from None


@dataclass
class Links:
    """A worker's channels to its left and right neighbours."""

    left: Endpoint | None
    right: Endpoint | None

    def sent(self) -> Counter:
        out: Counter = Counter()
        for ep in (self.left, self.right):
            if ep is not None:
                out.update(ep.sent)
        return out

    def sent_scalars(self) -> int:
        return sum(ep.sent_scalars for ep in (self.left, self.right) if ep is not None)

    def abort(self, reason: str) -> None:
        for ep in (self.left, self.right):
            if ep is not None:
                ep.abort(reason)


WorkerFn = Callable[[int, Links], Any]


class ThreadTransport:
    """Workers as threads in this process; the default binding."""

    name = "thread"

    def __init__(self, timeout: float = DEFAULT_TIMEOUT):
        self.timeout = timeout

    def _links(self, n: int) -> list[Links]:
        links = [Links(None, None) for _ in range(n)]
        for k in range(n - 1):
            to_right, to_left = queue.Queue(), queue.Queue()
            links[k].right = QueueEndpoint(to_right, to_left, self.timeout)
            links[k + 1].left = QueueEndpoint(to_left, to_right, self.timeout)
        return links

    def run(self, fn: WorkerFn, n: int) -> list[Any]:
        links = self._links(n)
        results: list[Any] = [None] * n
        errors: list[BaseException | None] = [None] * n

        def target(k):
            try:
                results[k] = fn(k, links[k])
            except BaseException as exc:
                errors[k] = exc
                links[k].abort(f"worker {k}: {exc!r}")

        threads = [threading.Thread(target=target, args=(k,), name=f"ptdvp-worker-{k}")
                   for k in range(n)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        _raise_first(errors)
        return results


def _raise_first(errors: Sequence[BaseException | str | None]):
    # prefer the root cause over the neighbours that were aborted by it
    real = [(k, e) for k, e in enumerate(errors)
            if e is not None and not isinstance(e, TransportError)]
    pending = real or [(k, e) for k, e in enumerate(errors) if e is not None]
    if not pending:
        return
    k, err = pending[0]
    if isinstance(err, BaseException):
        if isinstance(err, (TransportError, ProtocolError)):
            raise err
        raise TransportError(f"worker {k} failed: {err!r}") from err
    raise TransportError(f"worker {k} failed:\n{err}")


class ProcessTransport:
    """Workers as forked processes connected by pipes.

    Worker results travel back through a result pipe, so they must be
    picklable.  Forking means the worker function itself need not be.
    """

    name = "process"

    def __init__(self, timeout: float = DEFAULT_TIMEOUT):
        self.timeout = timeout
        self._ctx = mp.get_context("fork")

    def run(self, fn: WorkerFn, n: int) -> list[Any]:
        ends: list[list] = [[None, None] for _ in range(n)]
        for k in range(n - 1):
            a, b = self._ctx.Pipe(duplex=True)
            ends[k][1], ends[k + 1][0] = a, b
        result_pipes = [self._ctx.Pipe(duplex=False) for _ in range(n)]
        timeout = self.timeout

        def child(k):
            links = Links(*(PipeEndpoint(c, timeout) if c is not None else None for c in ends[k]))
            out = result_pipes[k][1]
            try:
                out.send(("ok", fn(k, links)))
            except BaseException as exc:
                links.abort(f"worker {k}: {exc!r}")
                kind = "transport" if isinstance(exc, TransportError) else "error"
                out.send((kind, "".join(traceback.format_exception(exc))))
            finally:
                out.close()

        procs = [self._ctx.Process(target=child, args=(k,), name=f"ptdvp-worker-{k}")
                 for k in range(n)]
        for p in procs:
            p.start()
        results: list[Any] = [None] * n
        errors: list[Any] = [None] * n
        for k in range(n):
            recv_end = result_pipes[k][0]
            if not recv_end.poll(timeout + 60):
                errors[k] = TransportError(f"worker {k} produced no result")
                continue
            try:
                status, value = recv_end.recv()
            except EOFError:
                errors[k] = TransportError(f"worker {k} exited without a result")
                continue
            if status == "ok":
                results[k] = value
            elif status == "transport":
                errors[k] = TransportError(value)
            else:
                errors[k] = value
        for p in procs:
            p.join(timeout=10)
            if p.is_alive():
                p.terminate()
        for pair in ends:
            for c in pair:
                if c is not None:
                    c.close()
        _raise_first(errors)
        return results


def make_transport(name: str = "thread", timeout: float = DEFAULT_TIMEOUT):
    if name == "thread":
        return ThreadTransport(timeout)
    if name == "process":
        return ProcessTransport(timeout)
    raise ValueError(f"unknown transport {name!r}")
