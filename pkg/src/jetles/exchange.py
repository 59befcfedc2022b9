"""Inter-partition communication.

Partitions are workers joined by ordered, reliable point-to-point channels.
An :class:`Endpoint` is one worker's view of the transport; messages are
matched on (source, tag) in FIFO order, sends never block.  The same
endpoint works over ``queue.Queue`` (threads) and ``multiprocessing`` queues
(processes).

Halo payloads are two interior layers.  Across the periodic azimuthal seam the
superposed last plane is skipped: the last partition sends the two planes
before it, and the first partition sends its planes 0..2, plane 0 landing on
the receiver's superposed plane.
"""

from __future__ import annotations

import logging
import queue
import random
import sys
import threading
import time
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .core import FRINGE
from .partition import EAST, WEST, ZMINUS, ZPLUS, PartitionMap

log = logging.getLogger(__name__)

XI, ZETA = 0, 2
DEFAULT_TIMEOUT = 60.0


class ExchangeError(RuntimeError):
    pass


class ExchangeTimeout(ExchangeError):
    pass


class FringeReadError(ExchangeError):
    pass


class ExchangeAborted(ExchangeError):
    """Another rank failed; raised in ranks blocked on a receive."""


ABORT = -1


def broadcast_abort(inboxes, reason: str) -> None:
    for box in inboxes:
        box.put((ABORT, "abort", reason))


class Endpoint:
    """One rank's end of the message transport."""

    def __init__(self, rank: int, inboxes, timeout: float = DEFAULT_TIMEOUT,
                 max_delay: float = 0.0, seed: Optional[int] = None):
        self.rank = rank
        self.inboxes = inboxes
        self.timeout = timeout
        self.max_delay = max_delay
        self._rng = random.Random(seed)
        self._stash = defaultdict(deque)
        self.sent = 0

    def send(self, dst: int, tag, payload) -> None:
        if self.max_delay:
            time.sleep(self._rng.random() * self.max_delay)
        if isinstance(payload, np.ndarray):
            payload = np.array(payload, copy=True)
        self.inboxes[dst].put((self.rank, tag, payload))
        self.sent += 1

    def recv(self, src: int, tag, timeout: Optional[float] = None):
        key = (src, tag)
        box = self._stash[key]
        if box:
            return box.popleft()
        limit = self.timeout if timeout is None else timeout
        deadline = time.monotonic() + limit
        inbox = self.inboxes[self.rank]
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise ExchangeTimeout(f"rank {self.rank}: no message from {src} tag {tag!r} within {limit}s")
            try:
                msrc, mtag, payload = inbox.get(timeout=remaining)
            except queue.Empty:
                continue
            if msrc == ABORT:
                inbox.put((msrc, mtag, payload))  # leave it for later receives
                raise ExchangeAborted(f"rank {self.rank}: run aborted ({payload})")
            if (msrc, mtag) == key:
                return payload
            self._stash[(msrc, mtag)].append(payload)


def thread_endpoints(n: int, **kwargs) -> List[Endpoint]:
    inboxes = [queue.Queue() for _ in range(n)]
    return [Endpoint(r, inboxes, **kwargs) for r in range(n)]


# ----------------------------------------------------------------------------
# payload geometry


def _sl(ndim, axis, sl):
    idx = [slice(None)] * ndim
    idx[ndim - 3 + axis] = sl
    return tuple(idx)


def _extent(arr, axis):
    return arr.shape[arr.ndim - 3 + axis] - 2 * FRINGE


def send_slab(arr: np.ndarray, axis: int, side: int, wrap: bool) -> np.ndarray:
    """Interior layers sent towards ``side`` (0 low, 1 high) along ``axis``."""
    g, n = FRINGE, _extent(arr, axis)
    if side == 1:
        sl = slice(g + n - 3, g + n - 1) if wrap else slice(g + n - 2, g + n)
    else:
        sl = slice(g, g + 3) if wrap else slice(g, g + 2)
    return arr[_sl(arr.ndim, axis, sl)]


def place_slab(arr: np.ndarray, axis: int, side: int, wrap: bool, payload: np.ndarray) -> None:
    """Write a payload received on ``side`` into the fringe of ``arr``."""
    g, n = FRINGE, _extent(arr, axis)
    nd = arr.ndim
    if side == 0:
        arr[_sl(nd, axis, slice(0, g))] = payload
        return
    if wrap:
        # first plane of the wrapped payload is the superposed counterpart
        arr[_sl(nd, axis, g + n - 1)] = payload[_sl(nd, axis, 0)]
        arr[_sl(nd, axis, slice(g + n, g + n + 2))] = payload[_sl(nd, axis, slice(1, 3))]
    else:
        arr[_sl(nd, axis, slice(g + n, g + n + 2))] = payload


def local_wrap(arr: np.ndarray, axis: int) -> None:
    """Periodic fringe of a partition that spans the whole azimuth (no messages)."""
    low = send_slab(arr, axis, 1, True).copy()
    place_slab(arr, axis, 0, True, low)
    high = send_slab(arr, axis, 0, True).copy()
    place_slab(arr, axis, 1, True, high)


# ----------------------------------------------------------------------------
# requests


@dataclass
class HaloRequest:
    """One outstanding fringe transfer of a non-blocking exchange."""

    src: int
    dst: int
    axis: int
    side: int
    tag: tuple
    shape: tuple
    kind: str = "recv"
    target: Optional[np.ndarray] = None
    wrap: bool = False
    endpoint: Optional[Endpoint] = None
    done: bool = False
    on_complete: Optional[Callable[["HaloRequest"], None]] = None

    def complete(self, timeout: Optional[float] = None) -> None:
        if self.done:
            return
        if self.kind == "recv":
            payload = self.endpoint.recv(self.src, self.tag, timeout)
            place_slab(self.target, self.axis, self.side, self.wrap, payload)
        self.done = True
        if self.on_complete is not None:
            self.on_complete(self)


def _neighbour_keys(axis):
    return (WEST, EAST) if axis == XI else (ZMINUS, ZPLUS)


def _links(pmap: PartitionMap, rank: int, axis: int):
    """[(side, neighbour, wrap)] for the exchanging sides of ``rank``."""
    nb = pmap.neighbors(rank)
    out = []
    for side, key in enumerate(_neighbour_keys(axis)):
        other = nb[key]
        if other is None:
            continue
        wrap = axis == ZETA and pmap.wraps(rank, side)
        out.append((side, other, wrap))
    return out


def post_halo_exchange(arr: np.ndarray, pmap: PartitionMap, rank: int, endpoint: Endpoint,
                       axis: int, name: str = "q") -> List[HaloRequest]:
    """Start the two-layer fringe transfer along ``axis``; does not block.

    A partition that is its own azimuthal neighbour wraps locally.
    """
    if axis not in (XI, ZETA):
        raise ValueError("only the axial and azimuthal directions are partitioned")
    links = _links(pmap, rank, axis)
    if axis == ZETA and pmap.npz == 1:
        local_wrap(arr, axis)
        return []
    for _, other, _ in links:
        if not 0 <= other < pmap.size:
            raise ExchangeError(f"rank {rank}: neighbour {other} not in map")
    requests = []
    for side, other, wrap in links:
        payload = send_slab(arr, axis, side, wrap)
        tag = (name, axis, side)
        endpoint.send(other, tag, payload)
        requests.append(HaloRequest(rank, other, axis, side, tag, payload.shape, kind="send", done=True))
    for side, other, wrap in links:
        # the neighbour sent towards the opposite side
        tag = (name, axis, 1 - side)
        requests.append(HaloRequest(other, rank, axis, side, tag, (), target=arr, wrap=wrap,
                                    endpoint=endpoint))
    return requests


def wait_halo(requests, timeout: Optional[float] = None) -> None:
    """Block until every receive in ``requests`` has landed; idempotent."""
    for req in requests:
        req.complete(timeout)


def blocking_exchange_legacy(arr: np.ndarray, pmap: PartitionMap, rank: int, endpoint: Endpoint,
                             axis: int, name: str = "q", schedule: Optional[list] = None) -> None:
    """Four-step blocking schedule along one direction.

    Step 1: even partitions send their last two layers forward to odd ones;
    step 2: odd to even; steps 3 and 4 mirror this backwards.  Seam links of
    the periodic azimuth travel in steps 2 (forward) and 4 (backward).
    ``schedule`` collects (step, src, dst) tuples when given.
    """
    if axis == ZETA and pmap.npz == 1:
        local_wrap(arr, axis)
        return
    i, j = pmap.position(rank)
    pos, count = (j, pmap.npx) if axis == XI else (i, pmap.npz)
    links = {side: (other, wrap) for side, other, wrap in _links(pmap, rank, axis)}

    def sender_step(p, forward):
        seam = axis == ZETA and ((forward and p == count - 1) or (not forward and p == 0))
        if seam:
            return 2 if forward else 4
        base = 1 if p % 2 == 0 else 2
        return base if forward else base + 2

    for step in (1, 2, 3, 4):
        forward = step <= 2
        out_side = 1 if forward else 0
        if out_side in links and sender_step(pos, forward) == step:
            other, wrap = links[out_side]
            endpoint.send(other, (name, "legacy", axis, out_side), send_slab(arr, axis, out_side, wrap))
            if schedule is not None:
                schedule.append((step, rank, other))
        in_side = 1 - out_side
        if in_side in links:
            other, wrap = links[in_side]
            other_pos = pmap.position(other)[1 if axis == XI else 0]
            if sender_step(other_pos, forward) == step:
                payload = endpoint.recv(other, (name, "legacy", axis, out_side))
                place_slab(arr, axis, in_side, wrap, payload)


def centerline_reduce(segment: np.ndarray, pmap: PartitionMap, rank: int,
                      endpoint: Optional[Endpoint], name: str = "cl") -> np.ndarray:
    """Azimuthal mean of the ring next to the axis, identical on every rank.

    ``segment`` is this rank's ring slice with the azimuth on the last axis
    (superposed plane excluded).  The lowest rank of the ring gathers the
    segments in ascending rank order, sums them strictly left to right,
    divides by the count and sends the result back.  Blocking; no collectives.
    """
    ring = pmap.ring(rank)
    master = ring[0]
    if len(ring) == 1:
        return sequential_mean(segment)
    tag_up, tag_down = (name, "gather"), (name, "scatter")
    if rank != master:
        endpoint.send(master, tag_up, segment)
        return endpoint.recv(master, tag_down)
    parts = [segment]
    for r in ring[1:]:
        parts.append(endpoint.recv(r, tag_up))
    result = sequential_mean(np.concatenate(parts, axis=-1))
    for r in ring[1:]:
        endpoint.send(r, tag_down, result)
    return result


def sequential_mean(values: np.ndarray) -> np.ndarray:
    """Left-to-right sum over the last axis divided by the count."""
    n = values.shape[-1]
    if n == 0:
        raise ExchangeError("empty centreline ring")
    acc = values[..., 0].copy()
    for k in range(1, n):
        acc += values[..., k]
    return acc / n


class HaloExchanger:
    """Binds an endpoint and a partition map for one rank.

    ``mode`` selects the non-blocking protocol or the legacy four-step one.
    In debug mode posted fringes are poisoned with NaN until their wait, and
    :meth:`read_fringe` reports reads of pending fringes on standard error.
    """

    def __init__(self, pmap: PartitionMap, rank: int, endpoint: Optional[Endpoint],
                 mode: str = "nonblocking", debug: bool = False):
        if mode not in ("nonblocking", "legacy"):
            raise ValueError(f"unknown exchange mode {mode!r}")
        self.pmap = pmap
        self.rank = rank
        self.endpoint = endpoint
        self.mode = mode
        self.debug = debug
        self.violations: List[str] = []
        self._pending = {}

    def post(self, arr: np.ndarray, axis: int, name: str) -> List[HaloRequest]:
        if self.mode == "legacy":
            blocking_exchange_legacy(arr, self.pmap, self.rank, self.endpoint, axis, name)
            return []
        reqs = post_halo_exchange(arr, self.pmap, self.rank, self.endpoint, axis, name)
        if self.debug:
            for req in reqs:
                if req.kind == "recv":
                    g, n = FRINGE, _extent(arr, axis)
                    sl = slice(0, g) if req.side == 0 else slice(g + n, g + n + g)
                    arr[_sl(arr.ndim, axis, sl)] = np.nan
                    self._pending[(id(arr), axis, req.side)] = req
                    req.on_complete = self._cleared
        return reqs

    def _cleared(self, req):
        self._pending.pop((id(req.target), req.axis, req.side), None)

    def wait(self, requests) -> None:
        wait_halo(requests)

    def exchange(self, arr: np.ndarray, axis: int, name: str) -> None:
        self.wait(self.post(arr, axis, name))

    def read_fringe(self, arr: np.ndarray, axis: int, side: int) -> np.ndarray:
        key = (id(arr), axis, side)
        if key in self._pending:
            msg = f"rank {self.rank}: fringe read before wait (axis {axis}, side {side})"
            self.violations.append(msg)
            print(msg, file=sys.stderr)
        g, n = FRINGE, _extent(arr, axis)
        sl = slice(0, g) if side == 0 else slice(g + n, g + n + g)
        return arr[_sl(arr.ndim, axis, sl)]

    def check_fresh(self) -> None:
        if self._pending:
            msg = f"rank {self.rank}: {len(self._pending)} fringe(s) still pending"
            self.violations.append(msg)
            print(msg, file=sys.stderr)
            raise FringeReadError(msg)

    def centerline(self, segment: np.ndarray) -> np.ndarray:
        return centerline_reduce(segment, self.pmap, self.rank, self.endpoint)
