"""Strong/weak scaling harness and metrics.

Speedup uses a shifted baseline ``s`` (the smallest core count measured):
``Sp(N) = s * T(s) / T(N)``, so ``Sp(s) == s`` and ``eta(s) == 1`` hold
exactly.  Strong efficiency is ``Sp / N``.  Weak efficiency for one workload
(fixed points per core) is ``T(s) / T(N)`` with each time first scaled by
``actual / nominal`` points when a mesh breaks the doubling progression.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import statistics
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

log = logging.getLogger(__name__)

WARMUP = 3


class BenchError(RuntimeError):
    pass


class MissingBaseline(BenchError):
    pass


@dataclass(frozen=True)
class ScalingRecord:
    """Mean seconds per iteration of one (mesh, cores, npz) run."""

    mesh: str
    cores: int
    npz: int
    seconds: float
    iterations: int
    jitter: float = 0.0
    workload: str = ""
    points: int = 0
    nominal_points: int = 0

    def __post_init__(self):
        if not self.seconds > 0.0:
            raise ValueError(f"time per iteration must be positive, got {self.seconds}")
        if self.iterations < 1:
            raise ValueError("a record needs at least one iteration")
        if self.cores < 1 or self.npz < 1 or self.cores % self.npz:
            raise ValueError(f"npz={self.npz} does not divide cores={self.cores}")

    @property
    def npx(self) -> int:
        return self.cores // self.npz

    @property
    def correction(self) -> float:
        """actual / nominal workload (1 when no nominal size is given)."""
        if not self.nominal_points or not self.points:
            return 1.0
        return self.points / self.nominal_points


@dataclass(frozen=True)
class StrongPoint:
    mesh: str
    cores: int
    npz: int
    seconds: float
    baseline: int
    speedup: float
    efficiency: float

    @property
    def superlinear(self) -> bool:
        return self.efficiency > 1.0


@dataclass(frozen=True)
class WeakPoint:
    workload: str
    mesh: str
    cores: int
    npz: int
    seconds: float
    correction: float
    efficiency: float


@dataclass
class ScalingReport:
    records: List[ScalingRecord] = field(default_factory=list)
    strong: List[StrongPoint] = field(default_factory=list)
    weak: List[WeakPoint] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)


# ----------------------------------------------------------------------------
# metrics


def speedup(times: Dict[int, float], s: int) -> Dict[int, float]:
    """Sp(N) = s * T(s) / T(N) for every N in ``times`` (N -> T)."""
    if s not in times:
        raise MissingBaseline(f"no timing at the baseline core count {s}")
    base = times[s]
    return {n: (float(s) if n == s else s * (base / t)) for n, t in sorted(times.items())}


def strong_efficiency(sp: Dict[int, float]) -> Dict[int, float]:
    return {n: v / n for n, v in sp.items()}


def weak_efficiency(times: Dict[int, float], s: int,
                    corrections: Optional[Dict[int, float]] = None) -> Dict[int, float]:
    """eta(N) = (T(s) * c(s)) / (T(N) * c(N)) with c = nominal / actual time scaling.

    ``corrections`` maps N to actual/nominal workload; a point whose mesh is
    1.45 times its nominal size has its time divided by 1.45.
    """
    if s not in times:
        raise MissingBaseline(f"no timing at the baseline core count {s}")
    corr = corrections or {}
    norm = {n: t / corr.get(n, 1.0) for n, t in times.items()}
    base = norm[s]
    return {n: (1.0 if n == s else base / t) for n, t in sorted(norm.items())}


def select_optimal_npz(records: Iterable[ScalingRecord]) -> Dict[tuple, ScalingRecord]:
    """Fastest record per (mesh, cores); exact ties go to the smaller npz."""
    best: Dict[tuple, ScalingRecord] = {}
    for rec in records:
        key = (rec.mesh, rec.cores)
        cur = best.get(key)
        if cur is None or (rec.seconds, rec.npz) < (cur.seconds, cur.npz):
            best[key] = rec
    return best


def build_report(records: Sequence[ScalingRecord], baseline: Optional[int] = None,
                 physical_cores: Optional[int] = None) -> ScalingReport:
    """Strong points for records without a workload label, weak points for the rest."""
    report = ScalingReport(records=list(records))
    strong_recs = [r for r in records if not r.workload]
    weak_recs = [r for r in records if r.workload]
    chosen = select_optimal_npz(strong_recs)
    for mesh in sorted({m for m, _ in chosen}, key=_natural):
        series = {n: rec for (m, n), rec in chosen.items() if m == mesh}
        s = baseline if baseline is not None else min(series)
        sp = speedup({n: r.seconds for n, r in series.items()}, s)
        eff = strong_efficiency(sp)
        for n in sorted(series):
            r = series[n]
            report.strong.append(StrongPoint(mesh, n, r.npz, r.seconds, s, sp[n], eff[n]))
            if eff[n] > 1.0:
                report.warnings.append(f"{mesh}: super-linear efficiency {eff[n]:.3f} at N={n}")
        report.warnings.extend(_monotone_warnings(mesh, series, physical_cores))
    for wl in sorted({r.workload for r in weak_recs}, key=_natural):
        series = {n: rec for (_, n), rec in select_optimal_npz(
            [r for r in weak_recs if r.workload == wl]).items()}
        s = min(series)
        eta = weak_efficiency({n: r.seconds for n, r in series.items()}, s,
                              {n: r.correction for n, r in series.items()})
        for n in sorted(series):
            r = series[n]
            report.weak.append(WeakPoint(wl, r.mesh, n, r.npz, r.seconds, r.correction, eta[n]))
    return report


def _monotone_warnings(mesh, series, physical_cores):
    limit = physical_cores if physical_cores is not None else (os.cpu_count() or 1)
    out = []
    ns = [n for n in sorted(series) if n <= limit]
    for a, b in zip(ns, ns[1:]):
        if series[b].seconds > series[a].seconds:
            out.append(f"{mesh}: T increased from N={a} to N={b} "
                       f"({series[a].seconds:.4g}s -> {series[b].seconds:.4g}s)")
    return out


def _natural(label):
    digits = "".join(ch for ch in str(label) if ch.isdigit())
    return (int(digits) if digits else math.inf, str(label))


# ----------------------------------------------------------------------------
# timing


def run_timing(cfg, mesh, cores: int, npz: int, steps: int, wall: float, *,
               label: Optional[str] = None, transport: str = "processes",
               exchange: str = "nonblocking", workload: str = "",
               nominal_points: int = 0, timeout: float = 120.0) -> ScalingRecord:
    """Time ``min(steps, wall)`` iterations of the jet solver on ``mesh``.

    The mean covers iterations after the first ``WARMUP`` ones (all of them
    when fewer were run); each iteration counts at the slowest rank.
    """
    from .boundary import jet_boundaries
    from .core import generate_jet_grid
    from .runner import WorkerFault, run_partitioned

    if steps < 1 or not wall > 0.0:
        raise ValueError("step and wall-clock budgets must be positive")
    if cores % npz:
        raise ValueError(f"npz={npz} does not divide cores={cores}")
    nxi, neta, nzeta = mesh
    label = label or f"{nxi}x{neta}x{nzeta}"
    grid = generate_jet_grid(nxi, neta, nzeta)
    try:
        res = run_partitioned(grid, cfg, jet_boundaries(cfg), cores // npz, npz, steps,
                              exchange=exchange, transport=transport, wall_budget=wall,
                              timeout=timeout)
    except WorkerFault as exc:
        raise BenchError(f"solver fault for mesh {label}, cores={cores}, npz={npz}: {exc}") from exc
    per_step = res.slowest_step_times
    window = per_step[WARMUP:] if len(per_step) > WARMUP else per_step
    mean = statistics.fmean(window)
    jitter = statistics.pstdev(window) / mean if len(window) > 1 else 0.0
    return ScalingRecord(label, cores, npz, mean, res.iterations, jitter, workload,
                         nxi * neta * nzeta, nominal_points)


# ----------------------------------------------------------------------------
# plans


@dataclass
class PlanRow:
    label: str
    mesh: tuple
    cores: int
    npz: int
    workload: str = ""
    nominal_points: int = 0


@dataclass
class BenchPlan:
    rows: List[PlanRow]
    steps: int = 20
    wall: float = 60.0
    baseline: Optional[int] = None
    transport: str = "processes"
    settings: Dict[str, str] = field(default_factory=dict)


PLAN_SETTINGS = {"steps": int, "wall": float, "baseline": int, "transport": str,
                 "mach": float, "dt": float, "reynolds": float}


def parse_plan(text: str) -> BenchPlan:
    """Plan lines: ``key = value`` settings, then rows
    ``label nxi neta nzeta cores npz [workload] [nominal_points]``."""
    rows, settings = [], {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in PLAN_SETTINGS:
                raise BenchError(f"plan line {lineno}: unknown setting {key!r}")
            try:
                settings[key] = PLAN_SETTINGS[key](value)
            except ValueError:
                raise BenchError(f"plan line {lineno}: bad value for {key}: {value!r}") from None
            continue
        parts = line.split()
        if len(parts) < 6 or len(parts) > 8:
            raise BenchError(f"plan line {lineno}: expected 6 to 8 fields, got {len(parts)}")
        try:
            mesh = tuple(int(v) for v in parts[1:4])
            cores, npz = int(parts[4]), int(parts[5])
            nominal = int(parts[7]) if len(parts) == 8 else 0
        except ValueError:
            raise BenchError(f"plan line {lineno}: non-integer size field") from None
        rows.append(PlanRow(parts[0], mesh, cores, npz, parts[6] if len(parts) > 6 else "", nominal))
    plan = BenchPlan(rows, settings=settings)
    for key in ("steps", "wall", "baseline", "transport"):
        if key in settings:
            setattr(plan, key, settings[key])
    return plan


def run_plan(plan: BenchPlan, cfg, mode: str = "strong") -> ScalingReport:
    """Execute every plan row (``mode`` strong ignores workload labels)."""
    records = []
    for row in plan.rows:
        if mode == "weak" and not row.workload:
            raise BenchError(f"weak plan row {row.label} has no workload label")
        log.info("timing %s on %d cores (npz=%d)", row.label, row.cores, row.npz)
        records.append(run_timing(
            cfg, row.mesh, row.cores, row.npz, plan.steps, plan.wall, label=row.label,
            transport=plan.transport, workload=row.workload if mode == "weak" else "",
            nominal_points=row.nominal_points))
    return build_report(records, plan.baseline if mode == "strong" else None)


# ----------------------------------------------------------------------------
# output

RECORD_FIELDS = [f.name for f in fields(ScalingRecord)]
STRONG_FIELDS = [f.name for f in fields(StrongPoint)] + ["superlinear"]
WEAK_FIELDS = [f.name for f in fields(WeakPoint)]


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def emit_report(report: ScalingReport, outdir) -> List[Path]:
    """CSV tables plus one SVG plot per strong-scaling mesh and one for weak scaling.

    ``records.csv`` holds every measurement (the input of the metrics);
    ``strong.csv`` and ``weak.csv`` hold the derived tables, including the
    shifted baseline of each strong point.  Warnings go to ``warnings.txt``.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = [outdir / "records.csv", outdir / "strong.csv", outdir / "weak.csv"]
    _write_csv(paths[0], RECORD_FIELDS, ([getattr(r, k) for k in RECORD_FIELDS] for r in report.records))
    _write_csv(paths[1], STRONG_FIELDS,
               ([getattr(p, k) for k in STRONG_FIELDS] for p in report.strong))
    _write_csv(paths[2], WEAK_FIELDS, ([getattr(p, k) for k in WEAK_FIELDS] for p in report.weak))
    if report.warnings:
        (outdir / "warnings.txt").write_text("\n".join(report.warnings) + "\n")
    meshes = sorted({p.mesh for p in report.strong}, key=_natural)
    for mesh in meshes:
        paths.append(plot_strong([p for p in report.strong if p.mesh == mesh], outdir / f"strong_{mesh}.svg"))
    if report.weak:
        paths.append(plot_weak(report.weak, outdir / "weak.svg"))
    return paths


def read_report(outdir) -> ScalingReport:
    """Rebuild the report from ``records.csv`` and the stored baselines."""
    outdir = Path(outdir)
    with open(outdir / "records.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    types = {f.name: f.type for f in fields(ScalingRecord)}
    conv = {"str": str, "int": int, "float": float}
    records = [ScalingRecord(**{k: conv[types[k]](v) for k, v in row.items()}) for row in rows]
    baseline = None
    with open(outdir / "strong.csv", newline="") as fh:
        bases = {int(r["baseline"]) for r in csv.DictReader(fh)}
    if len(bases) == 1:
        baseline = bases.pop()
    report = build_report(records, baseline)
    warn = outdir / "warnings.txt"
    report.warnings = warn.read_text().splitlines() if warn.exists() else []
    return report


def plot_strong(points: List[StrongPoint], path) -> Path:
    """Speedup (solid) and efficiency (dashed) against cores on log2 axes."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    cores = [p.cores for p in points]
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    ax.plot(cores, [p.speedup for p in points], "k-o", label="speedup")
    ax.plot(cores, cores, color="0.6", linestyle=":", label="ideal")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log", base=2)
    ax.set_xlabel("cores")
    ax.set_ylabel("speedup")
    ax2 = ax.twinx()
    ax2.plot(cores, [p.efficiency for p in points], "k--s", label="efficiency")
    ax2.set_ylabel("efficiency")
    ax2.set_ylim(0.0, max(1.2, max(p.efficiency for p in points) * 1.1))
    lines = ax.get_lines() + ax2.get_lines()
    ax.legend(lines, [ln.get_label() for ln in lines], loc="upper left")
    ax.set_title(f"strong scaling, mesh {points[0].mesh}")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return Path(path)


def plot_weak(points: List[WeakPoint], path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    for wl in sorted({p.workload for p in points}, key=_natural):
        sel = [p for p in points if p.workload == wl]
        ax.plot([p.cores for p in sel], [p.efficiency for p in sel], "--o", label=wl)
    ax.axhline(1.0, color="0.6", linestyle=":")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("cores")
    ax.set_ylabel("weak efficiency")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return Path(path)
