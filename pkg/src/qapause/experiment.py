"""Experiment configuration, anneal runs, pause sweeps and file outputs."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .bath import BathParams, check_validity
from .mcwf import Simulation, TrajectoryBatch, simulate, split_blocks
from .protocol import PauseProtocol
from .rng import derive_seed
from .spectral import Assembler, adiabatic_h, locate_min_gap, spectrum_csv
from .spin_model import build_problem, build_sector, load_schedule

SCHEDULE_NOTE = "schedule is an approximation of the DW2000Q curves, not vendor data"


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "p-spin"
    n: int = 20
    p: int | None = 19
    schedule: str | None = None  # None selects the bundled file
    eta: float = 1e-3
    temperature: float = 1.57
    cutoff: float = 1000.0
    lamb_shift: bool = True
    tau: float = 100.0
    s_pause: float | None = None
    l_pause: float = 0.0
    trajectories: int = 5000
    seed: int = 0
    dt: float = 0.005
    samples: int = 501
    block_size: int = 2500
    levels: int = 10
    spectrum_points: int = 1001
    checkpoints: int = 20
    sweep_s: tuple = ()
    sweep_l: tuple = ()
    out: str = "out"
    workers: int = 1

    def __post_init__(self):
        if self.trajectories < 2:
            raise ValueError("need at least two trajectories")
        if self.block_size < 1:
            raise ValueError("block_size must be positive")
        if self.dt <= 0 or self.samples < 2:
            raise ValueError("dt must be positive and samples >= 2")
        if self.workers < 1:
            raise ValueError("workers must be positive")
        # let the module constructors validate the rest eagerly
        self.protocol()
        self.bath()
        build_problem(self.kind, self.n, self.p)
        for sp in self.sweep_s:
            if not 0 <= sp <= 1:
                raise ValueError(f"sweep pause point {sp} outside [0, 1]")
        for lp in self.sweep_l:
            if lp < 0:
                raise ValueError(f"negative sweep pause length {lp}")

    # physics objects
    def assembler(self) -> Assembler:
        return Assembler(build_sector(self.n), build_problem(self.kind, self.n, self.p), load_schedule(self.schedule))

    def bath(self) -> BathParams:
        return BathParams(self.eta, self.temperature, self.cutoff)

    def protocol(self) -> PauseProtocol:
        sp = self.s_pause if self.l_pause > 0 else None
        return PauseProtocol(self.tau, sp, self.l_pause if sp is not None else 0.0)

    def simulation(self, assembler=None) -> Simulation:
        return Simulation(
            assembler or self.assembler(),
            self.protocol(),
            self.bath() if self.eta > 0 else None,
            lamb_shift=self.lamb_shift,
            dt=self.dt,
            samples=self.samples,
            seed=self.seed,
        )

    # provenance
    def physics_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key in ("out", "workers"):
            d.pop(key)
        d["sweep_s"] = list(self.sweep_s)
        d["sweep_l"] = list(self.sweep_l)
        return d

    def config_hash(self) -> str:
        payload = json.dumps(self.physics_dict(), sort_keys=True) + load_schedule(self.schedule).digest
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def header(self) -> str:
        return (
            f"config_hash={self.config_hash()}\n"
            f"schedule={load_schedule(self.schedule).source} digest={load_schedule(self.schedule).digest}\n"
            f"{SCHEDULE_NOTE}"
        )

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)


_SECTIONS = {
    "model": {"kind", "n", "p", "schedule"},
    "bath": {"eta", "temperature", "cutoff", "lamb_shift"},
    "protocol": {"tau", "s_pause", "l_pause"},
    "run": {"trajectories", "seed", "dt", "samples", "block_size", "workers", "out"},
    "spectrum": {"levels", "spectrum_points"},
    "oracle": {"checkpoints"},
    "sweep": {"s_pause", "l_pause"},
}


def parse_config(text: str, base_dir: Path | None = None) -> ExperimentConfig:
    raw = tomllib.loads(text)
    kw = {}
    for section, body in raw.items():
        if section not in _SECTIONS:
            raise ValueError(f"unknown config section [{section}]")
        for key, value in body.items():
            if key not in _SECTIONS[section]:
                raise ValueError(f"unknown key {key!r} in [{section}]")
            if section == "sweep":
                kw["sweep_s" if key == "s_pause" else "sweep_l"] = tuple(float(v) for v in value)
            else:
                kw[key] = value
    sched = kw.get("schedule")
    if sched and base_dir is not None and not Path(sched).is_absolute():
        kw["schedule"] = str((base_dir / sched).resolve())
    return ExperimentConfig(**kw)


def load_config(path=None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    return parse_config(path.read_text(), path.parent)


# ---------------------------------------------------------------------------
# averaging


def mc_average(values, axis: int = 0):
    """Mean and MC standard error sqrt(sum (O - mean)^2 / (M (M - 1)))."""
    values = np.asarray(values, dtype=float)
    m = values.shape[axis]
    if m < 2:
        raise ValueError("need at least two records")
    mean = values.mean(axis=axis)
    dev = values - np.expand_dims(mean, axis)
    sigma = np.sqrt((dev**2).sum(axis=axis) / (m * (m - 1)))
    return mean, sigma


@dataclass
class RunResult:
    config_hash: str
    s: np.ndarray
    rho11: np.ndarray
    rho11_err: np.ndarray
    fidelity: float
    sigma: float
    eig_pop: np.ndarray
    eig_pop_err: np.ndarray
    w_pop: np.ndarray
    w_pop_err: np.ndarray
    trajectories: int
    jump_counts: np.ndarray
    wall_clock: float
    final_states: np.ndarray | None = field(default=None, repr=False)

    def summary(self) -> dict:
        jc = self.jump_counts
        return {
            "fidelity": self.fidelity,
            "sigma": self.sigma,
            "config_hash": self.config_hash,
            "trajectories": self.trajectories,
            "wall_clock": self.wall_clock,
            "jumps": {"mean": float(jc.mean()), "min": int(jc.min()), "max": int(jc.max())},
        }


def average(batch: TrajectoryBatch, config_hash: str = "", wall_clock: float = 0.0, keep_states=True) -> RunResult:
    rho, rho_err = mc_average(batch.rho11)
    eig, eig_err = mc_average(batch.final_eig_pop)
    w, w_err = mc_average(np.abs(batch.final_states) ** 2)
    return RunResult(
        config_hash,
        batch.s,
        rho,
        rho_err,
        float(rho[-1]),
        float(rho_err[-1]),
        eig,
        eig_err,
        w,
        w_err,
        len(batch.indices),
        batch.jump_counts,
        wall_clock,
        batch.final_states if keep_states else None,
    )


def _run_blocks(args):
    cfg, indices = args
    return simulate(cfg.simulation(), indices, cfg.block_size)


def merge_batches(batches) -> TrajectoryBatch:
    batches = sorted(batches, key=lambda b: int(b.indices[0]))
    first = batches[0]
    return TrajectoryBatch(
        np.concatenate([b.indices for b in batches]),
        first.t,
        first.s,
        np.vstack([b.rho11 for b in batches]),
        np.vstack([b.final_states for b in batches]),
        np.vstack([b.final_eig_pop for b in batches]),
        np.concatenate([b.jump_counts for b in batches]),
        [e for b in batches for e in b.jump_log],
    )


def run_trajectories(cfg: ExperimentConfig, workers: int | None = None) -> TrajectoryBatch:
    """All trajectories of ``cfg``; the block layout, not the worker count, fixes the numbers."""
    workers = workers or cfg.workers
    blocks = split_blocks(np.arange(cfg.trajectories), cfg.block_size)
    if workers == 1 or len(blocks) == 1:
        return simulate(cfg.simulation(), np.arange(cfg.trajectories), cfg.block_size)
    groups = [np.concatenate(blocks[j::workers]) for j in range(min(workers, len(blocks)))]
    with ProcessPoolExecutor(max_workers=len(groups)) as pool:
        parts = list(pool.map(_run_blocks, [(cfg, g) for g in groups]))
    # groups interleave blocks; cut back into blocks before the ordered merge
    pieces = []
    for part in parts:
        for idx in split_blocks(part.indices, cfg.block_size):
            sel = np.isin(part.indices, idx)
            pieces.append(
                TrajectoryBatch(
                    idx,
                    part.t,
                    part.s,
                    part.rho11[sel],
                    part.final_states[sel],
                    part.final_eig_pop[sel],
                    part.jump_counts[sel],
                    [e for e in part.jump_log if e[0] in set(idx.tolist())],
                )
            )
    return merge_batches(pieces)


# ---------------------------------------------------------------------------
# output helpers


def _commented(header: str) -> str:
    return "".join(f"# {line}\n" for line in header.splitlines())


_UMASK = os.umask(0)
os.umask(_UMASK)


def atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.chmod(tmp, 0o666 & ~_UMASK)  # mkstemp creates 0600
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def rho11_csv(result: RunResult, header: str = "") -> str:
    buf = io.StringIO()
    buf.write(_commented(header))
    buf.write("s,rho11_mean,rho11_err\n")
    for row in zip(result.s, result.rho11, result.rho11_err):
        buf.write("{:.6f},{:.12g},{:.6g}\n".format(*row))
    return buf.getvalue()


def population_histogram(final_states, levels: int = 6):
    """Mean |<w|psi>|^2 for w < levels with MC errors, plus the uniform 1/N line."""
    pops = np.abs(np.asarray(final_states)) ** 2
    pops = pops / pops.sum(axis=1, keepdims=True)
    mean, err = mc_average(pops[:, :levels])
    return np.arange(min(levels, pops.shape[1])), mean, err, 1.0 / pops.shape[1]


def histogram_csv(final_states, levels: int = 6, header: str = "") -> str:
    w, mean, err, ref = population_histogram(final_states, levels)
    buf = io.StringIO()
    buf.write(_commented(header + f"\nuniform reference 1/N = {ref:.6g}"))
    buf.write("w,population,err\n")
    for row in zip(w, mean, err):
        buf.write("{},{:.12g},{:.6g}\n".format(*row))
    return buf.getvalue()


def run_anneal(cfg: ExperimentConfig, out=None, workers: int | None = None, keep_states: bool = True) -> RunResult:
    """Run all trajectories, average, and write CSV + summary JSON when ``out`` is given."""
    start = time.perf_counter()
    batch = run_trajectories(cfg, workers)
    result = average(batch, cfg.config_hash(), time.perf_counter() - start, keep_states)
    if out is not None:
        out = Path(out)
        written = []
        try:
            for name, text in (
                ("rho11.csv", rho11_csv(result, cfg.header())),
                ("populations.csv", histogram_csv(batch.final_states, 6, cfg.header())),
                ("summary.json", json.dumps(result.summary(), indent=2) + "\n"),
            ):
                atomic_write(out / name, text)
                written.append(out / name)
        except BaseException:
            for p in written:
                p.unlink(missing_ok=True)
            raise
    return result


# ---------------------------------------------------------------------------
# sweeps

SWEEP_FIELDS = ["s_p", "l_p", "fidelity", "sigma"]

_COARSE = tuple(round(0.1 + 0.05 * i, 4) for i in range(17))
_GAP_WINDOW = (0.31, 0.32, 0.33, 0.34, 0.35, 0.36)
SWEEP_PRESETS = {
    # coarse grid plus a 0.01 window around the gap; about 50 cells
    "reduced": (tuple(sorted(set(_COARSE + _GAP_WINDOW + (0.525, 0.575)))), (400.0, 900.0)),
    "full": (
        tuple(sorted(set(tuple(round(0.025 * i, 4) for i in range(41)) + _GAP_WINDOW))),
        tuple(float(x) for x in range(100, 1000, 100)),
    ),
    # peak region only, dense in l_p just above l0 = 100 ns
    "saturation": ((0.525, 0.55, 0.575), (100.0, 102.0, 104.0, 108.0, 116.0, 132.0, 200.0, 400.0, 900.0)),
}


def cell_key(s_p: float, l_p: float):
    return (round(float(s_p), 9), round(float(l_p), 9))


def cell_seed(master: int, s_p: float, l_p: float) -> int:
    """Seed that depends only on the cell coordinates, never on execution order."""
    return derive_seed(master, int(round(s_p * 1e6)), int(round(l_p * 1e3)))


def run_cell(args):
    cfg, s_p, l_p = args
    cell = cfg.replace(s_pause=s_p, l_pause=l_p, seed=cell_seed(cfg.seed, s_p, l_p), workers=1)
    res = run_anneal(cell, None, 1, keep_states=False)
    return s_p, l_p, res.fidelity, res.sigma


def read_sweep(path) -> dict:
    path = Path(path)
    if not path.exists():
        return {}
    rows = {}
    lines = [ln for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]
    for row in csv.DictReader(lines):
        rows[cell_key(row["s_p"], row["l_p"])] = (float(row["fidelity"]), float(row["sigma"]))
    return rows


def sweep_csv(cells: dict, order, header: str) -> str:
    buf = io.StringIO()
    buf.write(_commented(header))
    buf.write(",".join(SWEEP_FIELDS) + "\n")
    for key in order:
        if key in cells:
            f, e = cells[key]
            buf.write(f"{key[0]:.6g},{key[1]:.6g},{f!r},{e!r}\n")
    return buf.getvalue()


def _sweep_header(cfg):
    return cfg.header() + "\nsweep cells use seeds derived from (seed, s_p, l_p)"


def run_sweep(cfg: ExperimentConfig, out, resume: bool = False, workers: int | None = None, log=None):
    """One anneal per (s_p, l_p) cell, written to ``out/sweep.csv`` after every cell.

    With ``resume`` cells already present in the file are kept and skipped.
    Failed cells are listed in ``out/sweep_errors.csv`` and the sweep goes on.
    """
    if not cfg.sweep_s or not cfg.sweep_l:
        raise ValueError("sweep grid is empty")
    out = Path(out)
    path = out / "sweep.csv"
    header = _sweep_header(cfg)
    order = [cell_key(s, l) for l in cfg.sweep_l for s in cfg.sweep_s]
    cells = {}
    if resume and path.exists():
        text = path.read_text()
        if f"config_hash={cfg.config_hash()}" not in text:
            raise ValueError(f"{path} was produced by a different configuration")
        cells = {k: v for k, v in read_sweep(path).items() if k in set(order)}
    todo = [k for k in order if k not in cells]
    errors = []
    workers = workers or cfg.workers
    if not todo:
        if not path.exists() or path.read_text() != sweep_csv(cells, order, header):
            atomic_write(path, sweep_csv(cells, order, header))
        return cells
    jobs = [(cfg, s, l) for s, l in todo]

    def done(key, value):
        cells[key] = value
        atomic_write(path, sweep_csv(cells, order, header))
        if log:
            log(f"s_p={key[0]:.4g} l_p={key[1]:.4g} fidelity={value[0]:.4f} +- {value[1]:.4f}")

    if workers == 1:
        for job in jobs:
            try:
                s, l, f, e = run_cell(job)
                done(cell_key(s, l), (f, e))
            except Exception as err:  # noqa: BLE001 - record and continue
                errors.append((job[1], job[2], repr(err)))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(run_cell, job): job for job in jobs}
            for fut in futures:
                job = futures[fut]
                try:
                    s, l, f, e = fut.result()
                    done(cell_key(s, l), (f, e))
                except Exception as err:  # noqa: BLE001
                    errors.append((job[1], job[2], repr(err)))
    err_path = out / "sweep_errors.csv"
    if errors:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s_p", "l_p", "error"])
        w.writerows(errors)
        atomic_write(err_path, buf.getvalue())
    elif err_path.exists():
        err_path.unlink()
    return cells


def peak_fidelities(cells: dict):
    """Best cell per pause length: arrays l_p, s_opt, fidelity, sigma."""
    best = {}
    for (s, l), (f, e) in cells.items():
        if not math.isfinite(f):
            continue
        if l not in best or f > best[l][1]:
            best[l] = (s, f, e)
    ls = np.array(sorted(best))
    return ls, np.array([best[l][0] for l in ls]), np.array([best[l][1] for l in ls]), np.array([best[l][2] for l in ls])


# ---------------------------------------------------------------------------
# other reports


def emit_spectrum(cfg: ExperimentConfig, levels: int | None = None, points: int | None = None) -> str:
    asm = cfg.assembler()
    s_d, gap = locate_min_gap(asm)
    head = cfg.header() + f"\nminimal gap: s_delta={s_d:.6f} delta={gap:.6g} (1e9 rad/s)"
    return spectrum_csv(asm, levels or cfg.levels, points or cfg.spectrum_points, head)


def validity_report(cfg: ExperimentConfig) -> str:
    asm = cfg.assembler()
    s_d, gap = locate_min_gap(asm)
    h = adiabatic_h(asm)
    rep = check_validity(cfg.bath(), gap, h, cfg.tau, cfg.protocol().total_time - cfg.tau)
    head = f"# s_delta={s_d:.6f} delta={gap:.6g} h={h:.6g} h/delta^2={h / gap**2:.4g} ns\n"
    return head + rep.text()


ORACLE_FIELDS = ["s", "rho11_mcwf", "sigma_mc", "rho11_oracle", "abs_diff", "z_score"]


def oracle_compare(cfg: ExperimentConfig, workers: int | None = None, floor: float = 1e-6):
    """MCWF against the dense integrator at ``cfg.checkpoints`` evenly spaced times.

    z = |diff| / max(sigma_mc, floor): before the first jump every trajectory is
    identical, sigma_mc vanishes and only the time-step error remains.
    """
    from .oracle import dense_lindblad_integrate

    total = cfg.protocol().total_time
    # checkpoints must coincide with MCWF sample times
    samples = cfg.checkpoints * ((cfg.samples - 1) // cfg.checkpoints) + 1
    run_cfg = cfg.replace(samples=samples)
    sim = run_cfg.simulation()
    batch = run_trajectories(run_cfg, workers)
    mean, sigma = mc_average(batch.rho11)
    stride = (samples - 1) // cfg.checkpoints
    pick = np.arange(stride, samples, stride)
    times = sim.sample_times()[pick]
    ref = dense_lindblad_integrate(sim.assembler, sim.protocol, sim.bath, sim.lamb_table(), times)
    diff = np.abs(mean[pick] - ref.rho11)
    z = diff / np.maximum(sigma[pick], floor)
    rows = np.column_stack([batch.s[pick], mean[pick], sigma[pick], ref.rho11, diff, z])
    buf = io.StringIO()
    buf.write(_commented(cfg.header() + f"\nz_score floor on sigma_mc = {floor:g}, total time {total:g} ns"))
    buf.write(",".join(ORACLE_FIELDS) + "\n")
    for r in rows:
        buf.write(",".join(f"{x:.12g}" for x in r) + "\n")
    return rows, buf.getvalue()
