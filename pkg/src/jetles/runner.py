"""Partitioned runs: one worker per rank over threads or processes.

Each worker cuts its padded window from the global grid (or reads its grid
container), computes metrics locally, marches in time with a
:class:`~jetles.numerics.Stepper` and returns its interior state and per-step
timings.  The master (rank 0) decides when a wall-clock budget is spent and
broadcasts the decision every step, so all ranks stop together.
"""

from __future__ import annotations

import multiprocessing as mp
import queue
import threading
import time
import traceback
from pathlib import Path
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .boundary import BoundarySet
from .core import FRINGE, ConservativeField, CurvilinearBlock, FlowConfig, compute_metrics
from .exchange import DEFAULT_TIMEOUT, Endpoint, ExchangeAborted, HaloExchanger, broadcast_abort
from .numerics import Stepper
from .partition import PartitionMap, build_map, local_block


class WorkerFault(RuntimeError):
    """A rank failed; carries the rank and the original traceback text."""

    def __init__(self, rank, detail, cause=None):
        super().__init__(f"rank {rank} failed: {detail}")
        self.rank = rank
        self.detail = detail
        self.cause = cause


@dataclass
class RankResult:
    rank: int
    q: np.ndarray
    step_times: List[float]
    iterations: int
    violations: List[str] = field(default_factory=list)


@dataclass
class RunResult:
    pmap: PartitionMap
    q: np.ndarray
    step_times: List[List[float]]
    iterations: int

    @property
    def slowest_step_times(self) -> List[float]:
        """Per-step time of the slowest rank."""
        return [max(ts) for ts in zip(*self.step_times)]


@dataclass
class RunSpec:
    """Everything a worker needs; must stay picklable for process workers."""

    grid: CurvilinearBlock
    cfg: FlowConfig
    bset: Optional[BoundarySet]
    pmap: PartitionMap
    steps: int
    q0: Optional[np.ndarray] = None
    exchange: str = "nonblocking"
    viscous: bool = True
    dissipation: bool = True
    wall_budget: Optional[float] = None
    debug: bool = False
    timeout: float = DEFAULT_TIMEOUT
    grid_dir: Optional[str] = None
    output_dir: Optional[str] = None
    snapshot_interval: int = 0


def initial_state(block: CurvilinearBlock, bset: BoundarySet, cfg: FlowConfig) -> np.ndarray:
    """Interior-shaped ambient field (boundary rules are applied at start-up)."""
    cons = bset.freestream_state.conservative(cfg)
    return np.broadcast_to(cons.reshape(-1, 1, 1, 1), (cons.size,) + block.dims).copy()


def _worker(job: RunSpec, rank: int, endpoint: Endpoint) -> RankResult:
    pmap = job.pmap
    if job.grid_dir is not None:
        from .io import read_grid
        from .partition import grid_filename
        block = read_grid(Path(job.grid_dir) / grid_filename(rank), rank=rank).to_block()
    else:
        block = local_block(job.grid, pmap, rank)
    block = compute_metrics(block)
    exchanger = HaloExchanger(pmap, rank, endpoint, mode=job.exchange, debug=job.debug)
    stepper = Stepper(block, job.cfg, job.bset, exchanger,
                      viscous=job.viscous, dissipation=job.dissipation)
    q = ConservativeField.zeros(block.dims)
    if job.q0 is not None:
        (x0, x1), (z0, z1) = pmap.xi_range(rank), pmap.zeta_range(rank)
        q.inner[...] = job.q0[:, x0:x1, :, z0:z1]
    elif job.bset is not None:
        q.inner[...] = initial_state(block, job.bset, job.cfg)
    stepper.initialize(q)
    sol = None
    if job.output_dir is not None:
        from .io import SolutionContainer
        sol = SolutionContainer.create(Path(job.output_dir) / solution_filename(rank), rank, block.dims)
    times = []
    start = time.perf_counter()
    for it in range(job.steps):
        t0 = time.perf_counter()
        stepper.step(q)
        times.append(time.perf_counter() - t0)
        stop = job.wall_budget is not None and _stop_requested(job, rank, endpoint, it, start)
        last = stop or it == job.steps - 1
        if sol is not None and (last or (job.snapshot_interval and stepper.iteration % job.snapshot_interval == 0)):
            sol.append(q, stepper.iteration, stepper.time)
        if stop:
            break
    return RankResult(rank, q.inner.copy(), times, stepper.iteration, exchanger.violations)


def _stop_requested(job, rank, endpoint, it, start) -> bool:
    size = job.pmap.size
    if rank == 0:
        stop = time.perf_counter() - start >= job.wall_budget
        for r in range(1, size):
            endpoint.send(r, ("stop", it), stop)
        return stop
    return endpoint.recv(0, ("stop", it))


def solution_filename(rank: int) -> str:
    return f"solution_{rank:05d}.jzs"


def _gather(pmap: PartitionMap, results: List[RankResult], dims) -> np.ndarray:
    out = np.empty((results[0].q.shape[0],) + tuple(dims))
    for res in results:
        (x0, x1), (z0, z1) = pmap.xi_range(res.rank), pmap.zeta_range(res.rank)
        out[:, x0:x1, :, z0:z1] = res.q
    return out


def _thread_run(job: RunSpec) -> List[RankResult]:
    size = job.pmap.size
    inboxes = [queue.Queue() for _ in range(size)]
    results: List[Optional[RankResult]] = [None] * size
    errors = {}

    def target(r):
        try:
            results[r] = _worker(job, r, Endpoint(r, inboxes, timeout=job.timeout))
        except BaseException as exc:  # reported to the caller below
            errors[r] = (exc, traceback.format_exc())
            broadcast_abort(inboxes, f"rank {r} failed")

    threads = [threading.Thread(target=target, args=(r,), daemon=True) for r in range(size)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        # the first genuine failure, not the ranks that were told to abort
        primary = [r for r, (e, _) in errors.items() if not isinstance(e, ExchangeAborted)]
        r = min(primary or errors)
        exc, tb = errors[r]
        raise WorkerFault(r, f"{type(exc).__name__}: {exc}", exc) from exc
    return results


def _process_target(job, rank, inboxes, out):
    try:
        res = _worker(job, rank, Endpoint(rank, inboxes, timeout=job.timeout))
        out.put((rank, res, None))
    except BaseException as exc:
        out.put((rank, None, f"{type(exc).__name__}: {exc}\n{traceback.format_exc()}"))
        broadcast_abort(inboxes, f"rank {rank} failed")


def _process_run(job: RunSpec) -> List[RankResult]:
    ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else mp.get_context()
    size = job.pmap.size
    inboxes = [ctx.Queue() for _ in range(size)]
    out = ctx.Queue()
    procs = [ctx.Process(target=_process_target, args=(job, r, inboxes, out), daemon=True)
             for r in range(size)]
    for p in procs:
        p.start()
    results: List[Optional[RankResult]] = [None] * size
    errors = {}
    try:
        for _ in range(size):
            rank, res, err = out.get(timeout=job.timeout * max(1, job.steps))
            if err is not None:
                errors[rank] = err
            else:
                results[rank] = res
    except queue.Empty:
        errors[-1] = "workers did not report back in time"
    finally:
        if errors:
            for p in procs:
                p.terminate()
        for p in procs:
            p.join()
    if errors:
        primary = [r for r, e in errors.items() if not e.startswith("ExchangeAborted")]
        r = min(primary or errors)
        raise WorkerFault(r, errors[r])
    return results


def run_partitioned(grid: CurvilinearBlock, cfg: FlowConfig, bset: Optional[BoundarySet],
                    npx: int, npz: int, steps: int, *, q0: Optional[np.ndarray] = None,
                    exchange: str = "nonblocking", transport: str = "threads",
                    viscous: bool = True, dissipation: bool = True,
                    wall_budget: Optional[float] = None, debug: bool = False,
                    timeout: float = DEFAULT_TIMEOUT, output_dir=None,
                    snapshot_interval: int = 0) -> RunResult:
    """March ``steps`` iterations on an (npx, npz) decomposition of ``grid``.

    ``grid`` is the global padded block (pad modes of the whole domain);
    ``q0`` an optional interior-shaped global initial state.  Returns the
    gathered global interior state.
    """
    pmap = build_map(grid.dims[0], grid.dims[2], npx, npz)
    pmap.check_solver_extents()
    if output_dir is not None:
        Path(output_dir).mkdir(parents=True, exist_ok=True)
    job = RunSpec(grid, cfg, bset, pmap, steps, q0, exchange, viscous, dissipation,
                   wall_budget, debug, timeout, None,
                   None if output_dir is None else str(output_dir), snapshot_interval)
    if transport == "threads":
        results = _thread_run(job)
    elif transport == "processes":
        results = _process_run(job)
    else:
        raise ValueError(f"unknown transport {transport!r}")
    q = _gather(pmap, results, grid.dims)
    if output_dir is not None:
        from .partition import manifest_lines
        (Path(output_dir) / "partition.map").write_text("\n".join(manifest_lines(pmap)) + "\n")
    return RunResult(pmap, q, [r.step_times for r in results], min(r.iterations for r in results))


def run_from_grid_dir(grid_dir, cfg: FlowConfig, bset: Optional[BoundarySet], steps: int, *,
                      exchange: str = "nonblocking", transport: str = "threads",
                      output_dir=None, snapshot_interval: int = 0,
                      timeout: float = DEFAULT_TIMEOUT) -> RunResult:
    """Run on containers written by :func:`jetles.partition.partition_grid`.

    Every rank reads only its own grid file; the decomposition comes from the
    ``partition.map`` manifest.
    """
    from .io import read_grid
    from .partition import grid_filename, read_manifest

    grid_dir = Path(grid_dir)
    pmap = read_manifest(grid_dir / "partition.map")
    pmap.check_solver_extents()
    dims = read_grid(grid_dir / grid_filename(0), rank=0).global_dims
    if output_dir is not None:
        Path(output_dir).mkdir(parents=True, exist_ok=True)
    job = RunSpec(None, cfg, bset, pmap, steps, None, exchange, True, True, None, False,
                   timeout, str(grid_dir), None if output_dir is None else str(output_dir),
                   snapshot_interval)
    results = _thread_run(job) if transport == "threads" else _process_run(job)
    q = _gather(pmap, results, dims)
    return RunResult(pmap, q, [r.step_times for r in results], min(r.iterations for r in results))
