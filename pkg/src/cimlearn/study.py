"""Simulation study: sample from each generating catalog model, fit every
candidate on nested initial segments and approximate model posteriors."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .catalog import catalog_entry, forward_sample, reference_params
from .core import DirichletPrior
from .dimension import regular_dimension
from .em import em_fit
from .scoring import CRITERIA, CSParts, cs_parts, model_posteriors

log = logging.getLogger(__name__)

STUDY_FORMAT = "cimlearn-study/1"
SCORE_COLUMNS = (
    "generating", "N", "candidate", "criterion", "log_score", "d", "d_unadjusted",
    "posterior", "cs_raw", "completed_loglik", "loglik", "error",
)


@dataclass(frozen=True)
class StudyConfig:
    generating: tuple = ("F1", "F2", "F3", "F4", "F5")
    candidates: tuple = ("F1", "F2", "F3", "F4", "F5")
    segments: tuple = (100, 200, 400, 800, 1600)
    total_n: int = 6400
    seed: int = 0
    param_seed: int = 0
    mode: str = "ml"
    alpha: float = 1.0
    tol: float = 1e-6
    max_iter: int = 500
    restarts: int = 5
    criterion: str = "cs"
    dim_points: int = 10
    dim_seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        for name in ("generating", "candidates", "segments"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if list(self.segments) != sorted(self.segments) or not self.segments:
            raise ValueError("segment sizes must be non-empty and non-decreasing")
        if self.segments[0] < 1 or self.segments[-1] > self.total_n:
            raise ValueError("segment sizes must lie in 1..total_n")
        if self.mode not in ("ml", "map"):
            raise ValueError("mode must be 'ml' or 'map'")
        if self.criterion not in CRITERIA:
            raise ValueError(f"criterion must be one of {CRITERIA}")

    @classmethod
    def from_dict(cls, obj: dict) -> "StudyConfig":
        allowed = {f.name for f in fields(cls)} | {"format"}
        unknown = set(obj) - allowed
        if unknown:
            raise ValueError(f"study config: unknown field(s) {sorted(unknown)}")
        return cls(**{k: v for k, v in obj.items() if k != "format"})

    def header(self) -> str:
        d = asdict(self)
        d.pop("jobs")
        return " ".join(f"{k}={v}" for k, v in d.items())


@dataclass
class StudyCell:
    generating: str
    n: int
    candidate: str
    parts: CSParts | None = None
    error: str | None = None


@dataclass
class StudyResult:
    config: StudyConfig
    cells: list = field(default_factory=list)
    dims: dict = field(default_factory=dict)

    def log_score(self, cell: StudyCell, criterion: str | None = None, unadjusted: bool = False) -> float:
        """Score of one cell; ``unadjusted`` substitutes d' for d."""
        if cell.parts is None:
            return math.nan
        d, d_unadj = self.dims[cell.candidate]
        return float(cell.parts.score(criterion or self.config.criterion, d_unadj if unadjusted else d, d_unadj))

    def grid(self, criterion: str | None = None, unadjusted: bool = False) -> dict:
        """``{(generating, n): {candidate: (log_score, posterior)}}``."""
        out = {}
        for gen in self.config.generating:
            for n in self.config.segments:
                row = [c for c in self.cells if c.generating == gen and c.n == n]
                scores = [self.log_score(c, criterion, unadjusted) for c in row]
                post = model_posteriors(scores)
                out[(gen, n)] = {c.candidate: (s, float(p)) for c, s, p in zip(row, scores, post)}
        return out

    def posterior_series(self, generating: str, candidate: str, **kw) -> list[float]:
        g = self.grid(**kw)
        return [g[(generating, n)][candidate][1] for n in self.config.segments]


def _cell_seed(config: StudyConfig, gen: int, n: int, cand: int) -> int:
    return int(np.random.SeedSequence([config.seed, gen, n, cand]).generate_state(1)[0])


def generate_data(config: StudyConfig, generating: str):
    entry = catalog_entry(generating)
    params = reference_params(entry, config.param_seed)
    gen_index = config.generating.index(generating)
    return forward_sample(entry.structure, params, config.total_n, seed=[config.seed, gen_index])


def _run_cell(args):
    config, gen_index, generating, n, cand_index, candidate, data = args
    model = catalog_entry(candidate).structure
    prior = DirichletPrior.uniform(model, config.alpha)
    try:
        fit = em_fit(
            model, data, config.mode, prior, tol=config.tol, max_iter=config.max_iter,
            restarts=config.restarts, seed=_cell_seed(config, gen_index, n, cand_index),
        )
        parts = cs_parts(model, data, fit.params, prior)
        if not all(np.isfinite([parts.cs_raw, parts.completed_loglik, parts.loglik])):
            raise FloatingPointError(f"non-finite score terms {parts}")
        return StudyCell(generating, n, candidate, parts)
    except Exception as exc:  # a failed cell is recorded, the study goes on
        log.warning("cell %s/%d/%s failed: %s", generating, n, candidate, exc)
        return StudyCell(generating, n, candidate, None, f"{type(exc).__name__}: {exc}")


def study_dimensions(config: StudyConfig) -> dict:
    dims = {}
    for cand in config.candidates:
        rep = regular_dimension(catalog_entry(cand).structure, config.dim_points, config.dim_seed)
        dims[cand] = (rep.d, rep.d_unadjusted)
    return dims


def run_study(config: StudyConfig, dims: dict | None = None) -> StudyResult:
    """Fit and score every (generating, segment, candidate) cell.

    Each cell's EM seed is derived from the config seed and the cell's
    coordinates, so results do not depend on ``config.jobs``.
    """
    dims = dict(dims) if dims is not None else study_dimensions(config)
    jobs = []
    for g, gen in enumerate(config.generating):
        data = generate_data(config, gen)
        for n in config.segments:
            head = data.head(n)
            for k, cand in enumerate(config.candidates):
                jobs.append((config, g, gen, n, k, cand, head))
    if config.jobs > 1:
        with ProcessPoolExecutor(config.jobs) as pool:
            cells = list(pool.map(_run_cell, jobs))
    else:
        cells = []
        for job in jobs:
            cells.append(_run_cell(job))
            log.info("cell %s N=%d %s done", job[2], job[3], job[5])
    return StudyResult(config, cells, dims)


# ---------------------------------------------------------------------------
# reports


def _fmt(x: float) -> str:
    return "NA" if x is None or not np.isfinite(x) else repr(float(x))


def scores_csv(result: StudyResult, criterion: str | None = None) -> str:
    criterion = criterion or result.config.criterion
    grid = result.grid(criterion)
    buf = io.StringIO()
    buf.write(f"# format: {STUDY_FORMAT} {result.config.header()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCORE_COLUMNS)
    for c in result.cells:
        score, post = grid[(c.generating, c.n)][c.candidate]
        d, d_unadj = result.dims[c.candidate]
        p = c.parts
        w.writerow([
            c.generating, c.n, c.candidate, criterion, _fmt(score), d, d_unadj, _fmt(post),
            _fmt(p.cs_raw if p else None), _fmt(p.completed_loglik if p else None), _fmt(p.loglik if p else None),
            c.error or "",
        ])
    return buf.getvalue()


def read_scores_csv(text: str) -> StudyResult:
    """Rebuild a result (cells, dimensions, segment layout) from a scores file."""
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    cells, dims, gens, cands, segs = [], {}, [], [], []
    criterion = "cs"

    def num(s):
        return math.nan if s == "NA" else float(s)

    for row in reader:
        gen, cand, n = row["generating"], row["candidate"], int(row["N"])
        criterion = row["criterion"]
        dims[cand] = (int(row["d"]), int(row["d_unadjusted"]))
        for lst, v in ((gens, gen), (cands, cand), (segs, n)):
            if v not in lst:
                lst.append(v)
        if row["error"]:
            cells.append(StudyCell(gen, n, cand, None, row["error"]))
        else:
            parts = CSParts(n, num(row["cs_raw"]), num(row["completed_loglik"]), num(row["loglik"]))
            cells.append(StudyCell(gen, n, cand, parts))
    config = StudyConfig(generating=gens, candidates=cands, segments=segs, total_n=max(segs), criterion=criterion)
    return StudyResult(config, cells, dims)


def posteriors_csv(result: StudyResult, criterion: str | None = None, unadjusted: bool = False) -> str:
    grid = result.grid(criterion, unadjusted)
    buf = io.StringIO()
    buf.write(f"# format: {STUDY_FORMAT} {result.config.header()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["generating", "N", *result.config.candidates])
    for (gen, n), row in grid.items():
        w.writerow([gen, n, *[_fmt(row[c][1]) for c in result.config.candidates]])
    return buf.getvalue()


def posteriors_dat(result: StudyResult, criterion: str | None = None) -> str:
    """Whitespace columns, one gnuplot index block per generating model."""
    grid = result.grid(criterion)
    out = []
    for gen in result.config.generating:
        out.append(f"# generating {gen}")
        out.append("# N " + " ".join(result.config.candidates))
        for n in result.config.segments:
            row = grid[(gen, n)]
            out.append(f"{n} " + " ".join(_fmt(row[c][1]) for c in result.config.candidates))
        out.append("\n")
    return "\n".join(out)


def report_text(result: StudyResult, criterion: str | None = None) -> str:
    cfg = result.config
    criterion = criterion or cfg.criterion
    grid = result.grid(criterion)
    lines = [
        "Simulation study: model posteriors",
        f"criterion={criterion} mode={cfg.mode} alpha={cfg.alpha} tol={cfg.tol} "
        f"max_iter={cfg.max_iter} restarts={cfg.restarts} seed={cfg.seed} param_seed={cfg.param_seed}",
        "dimensions (d, d'): " + ", ".join(f"{k}=({d}, {du})" for k, (d, du) in result.dims.items()),
        "",
    ]
    width = 8
    for gen in cfg.generating:
        lines.append(f"Generating model {gen}")
        lines.append("N".rjust(6) + "".join(c.rjust(width) for c in cfg.candidates))
        for n in cfg.segments:
            row = grid[(gen, n)]
            cells = []
            for c in cfg.candidates:
                p = row[c][1]
                cells.append(("NA" if not np.isfinite(p) else f"{p:.3f}").rjust(width))
            lines.append(str(n).rjust(6) + "".join(cells))
        lines.append("")
    failed = [c for c in result.cells if c.error]
    if failed:
        lines.append("Failed cells:")
        lines.extend(f"  {c.generating} N={c.n} {c.candidate}: {c.error}" for c in failed)
    return "\n".join(lines) + "\n"


def render_report(result: StudyResult, out_dir, criterion: str | None = None, figure: bool = True) -> list[Path]:
    """Write the delimited outputs, the text table and (optionally) the figure."""
    from .plotting import plot_study_posteriors

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {
        "study_scores.csv": scores_csv(result, criterion),
        "study_posteriors.csv": posteriors_csv(result, criterion),
        "study_posteriors.dat": posteriors_dat(result, criterion),
        "report.txt": report_text(result, criterion),
    }
    paths = []
    for name, text in written.items():
        path = out_dir / name
        path.write_text(text)
        paths.append(path)
    if figure:
        paths.append(plot_study_posteriors(result, out_dir / "study_posteriors.png", criterion))
    return paths
