"""Batch experiment harness and file I/O.

Config files are flat ``key = value`` text; see ``CONFIG_KEYS`` below for the
recognized keys.  Reports are CSV with header
``K,deg,dual_energy,rounded_energy,iters,seconds``; disparity maps are 16-bit
binary PGM with labels affinely mapped onto [0, 65535].

Cost volumes use a little-endian binary layout: magic ``MCV1``, then width,
height and label count as 32-bit unsigned integers, the label range as two
64-bit floats, then width*height*labels 32-bit floats with the label index
varying fastest.
"""

from __future__ import annotations

import argparse
import csv
import json
import struct
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigMismatch, IoFailure, Malformed, PolymrfError
from .graph import Graph, chain_graph, grid_graph
from .model import DualConfig, Metric, Problem, assemble, fine_decomposition
from .oracle import GridSpec, dp_chain
from .poly import Interval, PiecewisePolynomial, Polynomial, fit_least_squares, fit_piecewise_under_approx
from .rounding import round_mean, round_mode_mean, rounded_energy
from .solver import SolverOptions, pdhg_solve

CSV_HEADER = ["K", "deg", "dual_energy", "rounded_energy", "iters", "seconds"]

CONFIG_KEYS = """\
source        synthetic | volume | unaries     instance source
a, b          label interval endpoints         (default -1, 1)
grid          WxH vertex grid                  (synthetic source)
metric        tv | potts                       (default tv)
hierarchy     comma list of K:deg pairs        e.g. 1:1,3:2,5:3
seed          RNG seed for synthetic data      (default 0)
unary_degree  synthetic unary degree           (default 4)
sample_points synthetic fit sample count       (default 9)
edge_weight   uniform coupling weight          (default 1.0)
volume        cost volume path                 (volume source)
fit_pieces    under-approximation pieces       (default 30)
fit_degree    under-approximation degree       (default 3)
unaries       JSON unaries path                (unaries source)
max_iters, rel_tol, check_every, theta         solver options
rounding      mode_mean | mean | mean_knots    (default mode_mean)
out_dir       output directory                 (default .)
oracle_grid   oracle grid resolution           (oracle-compare, default 2001)
labels        label count                      (make-synth, default 24)
kind          planar | bowl                    (make-synth, default planar)
noise         additive noise level             (make-synth, default 0.0)
out           output volume path               (make-synth)
"""


class ConfigError(PolymrfError):
    """A run configuration could not be parsed or validated."""


@dataclass
class RunConfig:
    source: str = "synthetic"
    a: float = -1.0
    b: float = 1.0
    grid: tuple = (4, 4)
    metric: str = "tv"
    hierarchy: list = field(default_factory=lambda: [(1, 1)])
    seed: int = 0
    unary_degree: int = 4
    sample_points: int = 9
    edge_weight: float = 1.0
    volume: str = ""
    fit_pieces: int = 30
    fit_degree: int = 3
    unaries: str = ""
    max_iters: int = 20000
    rel_tol: float = 1e-6
    check_every: int = 500
    theta: float = 1.0
    rounding: str = "mode_mean"
    out_dir: str = "."
    oracle_grid: int = 2001
    labels: int = 24
    kind: str = "planar"
    noise: float = 0.0
    out: str = "volume.mcv"


def parse_config(path: str) -> RunConfig:
    cfg = RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not hasattr(cfg, key):
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            if key == "grid":
                w, h = value.lower().split("x")
                setattr(cfg, key, (int(w), int(h)))
            elif key == "hierarchy":
                pairs = []
                for item in value.split(","):
                    k, d = item.strip().split(":")
                    pairs.append((int(k), int(d)))
                setattr(cfg, key, pairs)
            else:
                current = getattr(cfg, key)
                if isinstance(current, bool):
                    setattr(cfg, key, value.lower() in ("1", "true", "yes"))
                elif isinstance(current, int):
                    setattr(cfg, key, int(value))
                elif isinstance(current, float):
                    setattr(cfg, key, float(value))
                else:
                    setattr(cfg, key, value)
        except (ValueError, AttributeError) as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {value!r}") from exc
    if not cfg.hierarchy:
        raise ConfigError("hierarchy must be nonempty")
    if cfg.metric not in ("tv", "potts"):
        raise ConfigError(f"unknown metric {cfg.metric!r}")
    if not cfg.a < cfg.b:
        raise ConfigError("need a < b")
    return cfg


# ---------------------------------------------------------------------------
# Cost volumes and images
# ---------------------------------------------------------------------------

_MAGIC = b"MCV1"


@dataclass
class CostVolume:
    width: int
    height: int
    values: np.ndarray  # (height, width, labels)
    a: float
    b: float

    @property
    def num_labels(self) -> int:
        return self.values.shape[2]

    def label_grid(self) -> np.ndarray:
        return np.linspace(self.a, self.b, self.num_labels)


def write_cost_volume(path: str, vol: CostVolume) -> None:
    vals = np.ascontiguousarray(vol.values, dtype=np.float32)
    if vals.shape[:2] != (vol.height, vol.width):
        raise Malformed("value array does not match stated dimensions")
    try:
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<III", vol.width, vol.height, vol.num_labels))
            fh.write(struct.pack("<dd", vol.a, vol.b))
            fh.write(vals.tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def ingest_cost_volume(path: str) -> CostVolume:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if len(blob) < 4 + 12 + 16 or blob[:4] != _MAGIC:
        raise Malformed(f"{path}: bad magic or truncated header")
    width, height, labels = struct.unpack_from("<III", blob, 4)
    a, b = struct.unpack_from("<dd", blob, 16)
    expected = 32 + 4 * width * height * labels
    if len(blob) != expected:
        raise Malformed(f"{path}: expected {expected} bytes, found {len(blob)}")
    if not (np.isfinite(a) and np.isfinite(b) and a < b):
        raise Malformed(f"{path}: bad label range [{a}, {b}]")
    vals = np.frombuffer(blob, dtype="<f4", offset=32).astype(float)
    vals = vals.reshape(height, width, labels)
    if not np.all(np.isfinite(vals)):
        raise Malformed(f"{path}: non-finite cost values")
    return CostVolume(width, height, vals, float(a), float(b))


def write_pgm16(path: str, image: np.ndarray, a: float, b: float) -> None:
    """16-bit binary PGM; values are labels mapped affinely from [a, b]."""
    scaled = np.clip((np.asarray(image, dtype=float) - a) / (b - a), 0.0, 1.0)
    pix = np.round(scaled * 65535.0).astype(">u2")
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{image.shape[1]} {image.shape[0]}\n65535\n".encode())
            fh.write(pix.tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Instance construction
# ---------------------------------------------------------------------------


def synthetic_unaries(cfg: RunConfig, num_vertices: int) -> tuple:
    """Random polynomial data terms, fit to seeded samples per vertex."""
    rng = np.random.default_rng(cfg.seed)
    xs = np.linspace(cfg.a, cfg.b, cfg.sample_points)
    out = []
    for _ in range(num_vertices):
        ys = rng.normal(0.0, 1.0, cfg.sample_points)
        p = fit_least_squares(np.column_stack([xs, ys]), cfg.unary_degree)
        out.append(PiecewisePolynomial([cfg.a, cfg.b], [p]))
    return tuple(out)


def load_unaries_json(path: str) -> tuple[tuple, tuple, Interval]:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise Malformed(f"{path}: {exc}") from exc
    try:
        knots = np.asarray(data["knots"], dtype=float)
        grid = tuple(int(x) for x in data["grid"])
        unaries = tuple(
            PiecewisePolynomial(knots, [Polynomial(c) for c in vertex])
            for vertex in data["unaries"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise Malformed(f"{path}: {exc}") from exc
    return unaries, grid, Interval(float(knots[0]), float(knots[-1]))


def fit_volume_unaries(vol: CostVolume, pieces: int, deg: int) -> tuple:
    labels = vol.label_grid()
    knots = np.linspace(vol.a, vol.b, pieces + 1)
    out = []
    for r in range(vol.height):
        for c in range(vol.width):
            samples = np.column_stack([labels, vol.values[r, c, :]])
            out.append(fit_piecewise_under_approx(samples, knots, deg))
    return tuple(out)


def _build_instance(cfg: RunConfig) -> tuple[Graph, tuple, Interval]:
    if cfg.source == "synthetic":
        w, h = cfg.grid
        g = chain_graph(w) if h == 1 else grid_graph(w, h)
        return g, synthetic_unaries(cfg, g.num_vertices), Interval(cfg.a, cfg.b)
    if cfg.source == "volume":
        vol = ingest_cost_volume(cfg.volume)
        g = grid_graph(vol.width, vol.height)
        return g, fit_volume_unaries(vol, cfg.fit_pieces, cfg.fit_degree), Interval(vol.a, vol.b)
    if cfg.source == "unaries":
        unaries, (w, h), iv = load_unaries_json(cfg.unaries)
        g = chain_graph(w) if h == 1 else grid_graph(w, h)
        if g.num_vertices != len(unaries):
            raise Malformed(f"{cfg.unaries}: {len(unaries)} unaries for {g.num_vertices} vertices")
        return g, unaries, iv
    raise ConfigError(f"unknown source {cfg.source!r}")


def _round_labels(solution, scheme: str) -> np.ndarray:
    fd = fine_decomposition(solution.problem)
    if scheme == "mode_mean":
        return round_mode_mean(solution.moments, fd.fine_knots)
    if scheme == "mean":
        return round_mean(solution.moments, fd.fine_knots)
    if scheme == "mean_knots":
        return round_mean(solution.moments, fd.fine_knots, literal_knot_mean=True)
    raise ConfigError(f"unknown rounding scheme {scheme!r}")


def _solve_entry(g: Graph, unaries: tuple, iv: Interval, cfg: RunConfig, K: int, deg: int):
    config = DualConfig.uniform(iv, K, deg)
    metric = Metric(cfg.metric)
    weights = cfg.edge_weight * np.ones(g.num_edges)
    problem = Problem(g, unaries, metric, config, weights)
    opts = SolverOptions(max_iters=cfg.max_iters, rel_tol=cfg.rel_tol,
                         check_every=cfg.check_every, theta=cfg.theta)
    t0 = time.perf_counter()
    sol = pdhg_solve(assemble(problem), opts)
    seconds = time.perf_counter() - t0
    labels = _round_labels(sol, cfg.rounding)
    energy = rounded_energy(labels, problem)
    return sol, labels, energy, seconds


def _write_report(path: Path, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow(row)


def _fmt(x: float) -> str:
    return f"{x:.9g}"


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def run_hierarchy(cfg: RunConfig) -> Path:
    """Solve every hierarchy entry and emit one CSV row per (K, deg)."""
    g, unaries, iv = _build_instance(cfg)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for K, deg in cfg.hierarchy:
        sol, _, energy, seconds = _solve_entry(g, unaries, iv, cfg, K, deg)
        rows.append([K, deg, _fmt(sol.dual_energy), _fmt(energy), sol.iterations, f"{seconds:.3f}"])
        print(f"K={K} deg={deg}: dual={sol.dual_energy:.6f} rounded={energy:.6f} "
              f"iters={sol.iterations} ({seconds:.1f}s)")
    report = out_dir / "report.csv"
    _write_report(report, rows)
    return report


def run_stereo(cfg: RunConfig) -> Path:
    """Volume pipeline: fit unaries from a cost volume, solve, write PGM maps."""
    if cfg.source != "volume":
        cfg.source = "volume"
    g, unaries, iv = _build_instance(cfg)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    vol = ingest_cost_volume(cfg.volume)
    rows = []
    for K, deg in cfg.hierarchy:
        sol, _, energy, seconds = _solve_entry(g, unaries, iv, cfg, K, deg)
        fd = fine_decomposition(sol.problem)
        disparity = round_mean(sol.moments, fd.fine_knots).reshape(vol.height, vol.width)
        write_pgm16(out_dir / f"disparity_K{K}_deg{deg}.pgm", disparity, iv.a, iv.b)
        rows.append([K, deg, _fmt(sol.dual_energy), _fmt(energy), sol.iterations, f"{seconds:.3f}"])
        print(f"K={K} deg={deg}: dual={sol.dual_energy:.6f} rounded={energy:.6f} ({seconds:.1f}s)")
    report = out_dir / "report.csv"
    _write_report(report, rows)
    return report


def run_oracle_compare(cfg: RunConfig) -> Path:
    """Chain instances: exact grid DP value next to the solver's dual bound."""
    g, unaries, iv = _build_instance(cfg)
    if cfg.metric != "tv":
        raise ConfigError("oracle-compare requires the tv metric")
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    weights = cfg.edge_weight * np.ones(g.num_edges)
    base = Problem(g, unaries, Metric(cfg.metric),
                   DualConfig.uniform(iv, 1, max(f.degree() for f in unaries)), weights)
    _, oracle_value = dp_chain(base, GridSpec(cfg.oracle_grid))
    print(f"oracle value (grid {cfg.oracle_grid}): {oracle_value:.6f}")
    rows = []
    report_rows = []
    for K, deg in cfg.hierarchy:
        sol, _, energy, seconds = _solve_entry(g, unaries, iv, cfg, K, deg)
        gap = oracle_value - sol.dual_energy
        rows.append([K, deg, _fmt(sol.dual_energy), _fmt(oracle_value), _fmt(gap)])
        report_rows.append([K, deg, _fmt(sol.dual_energy), _fmt(energy), sol.iterations, f"{seconds:.3f}"])
        print(f"K={K} deg={deg}: dual={sol.dual_energy:.6f} oracle={oracle_value:.6f} gap={gap:.6f}")
    _write_report(out_dir / "report.csv", report_rows)
    with open(out_dir / "oracle_compare.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["K", "deg", "dual_energy", "oracle_value", "gap"])
        writer.writerows(rows)
    return out_dir / "oracle_compare.csv"


def make_synth(cfg: RunConfig) -> Path:
    """Write a synthetic cost volume with a known minimizer surface."""
    rng = np.random.default_rng(cfg.seed)
    w, h = cfg.grid
    labels = np.linspace(cfg.a, cfg.b, cfg.labels)
    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    span = cfg.b - cfg.a
    if cfg.kind == "planar":
        target = cfg.a + span * (0.15 + 0.7 * (0.5 * rr / max(h - 1, 1) + 0.5 * cc / max(w - 1, 1)))
    elif cfg.kind == "bowl":
        r2 = ((rr / max(h - 1, 1) - 0.5) ** 2 + (cc / max(w - 1, 1) - 0.5) ** 2) / 0.5
        target = cfg.a + span * (0.2 + 0.6 * r2)
    else:
        raise ConfigError(f"unknown synthetic kind {cfg.kind!r}")
    vals = (labels[None, None, :] - target[:, :, None]) ** 2 / span ** 2
    if cfg.noise > 0:
        vals = vals + cfg.noise * rng.standard_normal(vals.shape)
    vol = CostVolume(w, h, vals, cfg.a, cfg.b)
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_cost_volume(str(out), vol)
    print(f"wrote {out} ({w}x{h}, {cfg.labels} labels)")
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="polymrf",
        description="Continuous-label MRF inference with piecewise-polynomial duals.",
        epilog="Config keys:\n" + CONFIG_KEYS,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("hierarchy", "solve a (K, deg) hierarchy and write report.csv"),
        ("stereo", "cost-volume pipeline with PGM disparity maps"),
        ("oracle-compare", "compare chain dual bounds against grid DP"),
        ("make-synth", "write a synthetic cost volume"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="path to a key=value config file")
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(args.config)
        if args.command == "hierarchy":
            run_hierarchy(cfg)
        elif args.command == "stereo":
            run_stereo(cfg)
        elif args.command == "oracle-compare":
            run_oracle_compare(cfg)
        elif args.command == "make-synth":
            make_synth(cfg)
    except (ConfigError, Malformed, IoFailure, ConfigMismatch) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PolymrfError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
