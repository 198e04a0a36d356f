"""
Batch front end for the geometry experiments.

    python cli.py validate --config config/phi_width.yaml
    python cli.py run --config config/phi_width.yaml --out reports --seed 7

`run` writes <name>.csv and <name>.json into the output directory. The JSON
file holds the same rows as the CSV plus a summary. Floats are written with
12 significant digits and logarithms are natural.

Exit codes: 0 success, 2 invalid input, 3 search cap reached, 1 anything else.
"""

import argparse
import csv
import json
import logging
import math
import numbers
import os
import sys
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import networkx as nx
import numpy as np
import yaml
from dotenv import load_dotenv
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from bundle import (
    DEFAULT_BFS_CAP,
    ExtensionPresentation,
    bundle_ball,
    flare_measure,
    gamma_ball,
    lift_presentation,
    min_set,
    periodic_classes,
    properness_pairs,
    quasiconvexity_probe,
    width_estimate,
)
from coarse import FiniteMetricGraph, delta_fourpoint
from errors import (
    BudgetExceededError,
    ConfigError,
    InvalidAutomorphismError,
    InvalidInputError,
    SubgroupNotPreservedError,
)
from factor_graphs import build_pl_ball, loxodromic_table, pl_distance_profile
from folding import check_legal_flare, folding_path, legal_flare_margins
from free_group import Automorphism, ConjugacyClass, Word, index_two_subgroups, parse_word, stallings_graph
from models import Diagnostic, ExperimentConfig, ExperimentReport, RunSummary, node_position
from outer_space import (
    RANK_THREE_TOPOLOGIES,
    TOLERANCE,
    MarkedGraph,
    act,
    cover,
    lipschitz_distance,
    lipschitz_ratio,
    random_marked_graph,
)

logger = logging.getLogger("cli")

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2
EXIT_BUDGET = 3

SIGNIFICANT_DIGITS = 12


# ---------------------------------------------------------------------------
# Loading and validation
# ---------------------------------------------------------------------------

def load_config(path) -> ExperimentConfig:
    """Read a YAML config; parse and schema errors carry the YAML line and column."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise ConfigError(exc.problem or str(exc),
                          mark.line + 1 if mark else None, mark.column + 1 if mark else None) from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping", 1, 1)
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        error = exc.errors()[0]
        where = ".".join(str(part) for part in error["loc"])
        raise ConfigError(f"{where}: {error['msg']}", *node_position(node, error["loc"])) from None
    return config.attach_source(node, path.parent)


def _config_error(config: ExperimentConfig, message: str, *path) -> ConfigError:
    return ConfigError(message, *config.position(*path))


def _word(config: ExperimentConfig, text: str, *path) -> Word:
    try:
        return parse_word(str(text), config.rank)
    except InvalidInputError as exc:
        raise _config_error(config, f"{text!r}: {exc}", *path) from None


def build_automorphism(config: ExperimentConfig, name: str) -> Automorphism:
    if name not in config.automorphisms:
        raise ConfigError(f"unknown automorphism {name!r}")
    spec = config.automorphisms[name]
    words = {}
    for field in ("images", "inverse"):
        texts = getattr(spec, field)
        if len(texts) != config.rank:
            raise _config_error(config, f"automorphism {name!r}: `{field}` needs {config.rank} words, got {len(texts)}",
                                "automorphisms", name, field)
        words[field] = [_word(config, w, "automorphisms", name, field, i) for i, w in enumerate(texts)]
    try:
        return Automorphism(words["images"], words["inverse"])
    except InvalidAutomorphismError as exc:
        raise InvalidAutomorphismError(f"automorphism {name!r}: {exc}", generator=exc.generator) from None


def build_presentation(config: ExperimentConfig, automorphisms: Dict[str, Automorphism]) -> ExtensionPresentation:
    for i, name in enumerate(config.gamma):
        if name not in automorphisms:
            raise _config_error(config, f"gamma generator {name!r} is not a listed automorphism", "gamma", i)
    return ExtensionPresentation(config.rank, [automorphisms[n] for n in config.gamma], config.gamma)


def build_graph(config: ExperimentConfig, automorphisms: Dict[str, Automorphism], name: Optional[str]) -> MarkedGraph:
    """The named graph, or the unit-volume rose when name is None."""
    if name is None:
        return MarkedGraph.rose([Fraction(1, config.rank)] * config.rank)
    if name not in config.graphs:
        raise ConfigError(f"unknown graph {name!r}")
    spec = config.graphs[name]
    try:
        if spec.rose is not None:
            graph = MarkedGraph.rose(spec.rose)
        else:
            graph = MarkedGraph.from_edges(spec.vertices, spec.edges)
    except (InvalidInputError, ValueError, ZeroDivisionError) as exc:
        raise _config_error(config, f"graph {name!r}: {exc}", "graphs", name) from None
    if graph.rank != config.rank:
        raise _config_error(config, f"graph {name!r} has rank {graph.rank}, expected {config.rank}", "graphs", name)
    if spec.normalize:
        graph = graph.normalized()
    for i, twist in enumerate(spec.act):
        if twist not in automorphisms:
            raise _config_error(config, f"graph {name!r} acts by unknown automorphism {twist!r}",
                                "graphs", name, "act", i)
        graph = act(automorphisms[twist], graph)
    return graph


def _check_graph_reference(config: ExperimentConfig, field: str) -> None:
    name = getattr(config.parameters, field)
    if name is not None and name not in config.graphs:
        raise _config_error(config, f"{field} graph {name!r} is not listed under graphs", "parameters", field)


def validate(config: ExperimentConfig) -> List[Diagnostic]:
    """Errors for malformed automorphisms, references and words; warnings from the atoroidality scan."""
    diagnostics: List[Diagnostic] = []

    def record(level: str, exc: Exception, generator: Optional[str] = None, where=()) -> None:
        line, column = getattr(exc, "line", None), getattr(exc, "column", None)
        if line is None and where:
            line, column = config.position(*where)
        message = str(exc)
        if isinstance(exc, ConfigError) and exc.line is not None:
            message = message.split(": ", 1)[1]
        diagnostics.append(Diagnostic(level=level, message=message, generator=generator, line=line, column=column))

    automorphisms: Dict[str, Automorphism] = {}
    for name in config.automorphisms:
        try:
            automorphisms[name] = build_automorphism(config, name)
        except InvalidAutomorphismError as exc:
            record("error", exc, exc.generator, ("automorphisms", name))
        except InvalidInputError as exc:
            record("error", exc, where=("automorphisms", name))

    for i, name in enumerate(config.gamma):
        if name not in config.automorphisms:
            record("error", _config_error(config, f"gamma generator {name!r} is not a listed automorphism", "gamma", i))

    for name in config.graphs:
        try:
            build_graph(config, automorphisms, name)
        except InvalidInputError as exc:
            record("error", exc, where=("graphs", name))

    for field in ("source", "target"):
        try:
            _check_graph_reference(config, field)
        except ConfigError as exc:
            record("error", exc)

    words = [("classes", i, w) for i, w in enumerate(config.parameters.classes)]
    words += [("subgroup", i, w) for i, w in enumerate(config.parameters.subgroup)]
    words += [(field, None, getattr(config.parameters, field)) for field in ("alpha", "beta")
              if getattr(config.parameters, field) is not None]
    for field, i, text in words:
        path = ("parameters", field) if i is None else ("parameters", field, i)
        try:
            _word(config, text, *path)
        except ConfigError as exc:
            record("error", exc)

    p = config.parameters
    for name in config.gamma:
        if name not in automorphisms:
            continue
        for cls, k in periodic_classes(automorphisms[name], p.scan_length, p.max_power):
            line, column = config.position("gamma")
            diagnostics.append(Diagnostic(level="warning", message=f"periodic class found: {name}^{k} fixes {cls}",
                                          line=line, column=column))
            break
    return diagnostics


# ---------------------------------------------------------------------------
# Settings
# ---------------------------------------------------------------------------

@dataclass
class RunSettings:
    seed: int = 0
    threads: int = 1
    cap: int = DEFAULT_BFS_CAP
    progress: bool = False

    @classmethod
    def from_env(cls) -> "RunSettings":
        load_dotenv()
        values = {}
        for field, variable, default in (("seed", "FREEGEO_SEED", 0), ("threads", "FREEGEO_THREADS", 1),
                                         ("cap", "FREEGEO_BFS_CAP", DEFAULT_BFS_CAP)):
            raw = os.getenv(variable, str(default))
            try:
                values[field] = int(raw)
            except ValueError:
                raise ConfigError(f"{variable}={raw!r} is not an integer") from None
        return cls(**values)

    def check(self) -> "RunSettings":
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ConfigError(f"seed {self.seed} is not an unsigned 64-bit integer")
        if self.threads < 1:
            raise ConfigError(f"threads must be positive, got {self.threads}")
        if self.cap < 1:
            raise ConfigError(f"cap must be positive, got {self.cap}")
        return self


def _first(*values):
    return next(v for v in values if v is not None)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

@dataclass
class ExperimentContext:
    config: ExperimentConfig
    automorphisms: Dict[str, Automorphism]
    presentation: ExtensionPresentation
    settings: RunSettings
    rng: np.random.Generator

    def graph(self, name: Optional[str]) -> MarkedGraph:
        return build_graph(self.config, self.automorphisms, name)

    def word(self, text: str, *path) -> Word:
        return _word(self.config, text, *path)

    def random_graphs(self, count: int) -> List[MarkedGraph]:
        if count and self.config.rank != 3:
            raise _config_error(self.config, "random marked graphs are sampled in rank 3 only; set samples: 0",
                                "parameters", "samples")
        topologies = sorted(RANK_THREE_TOPOLOGIES)
        return [random_marked_graph(self.rng, topologies[int(self.rng.integers(len(topologies)))])
                for _ in range(count)]


def _distance(ctx: ExperimentContext) -> ExperimentReport:
    p = ctx.config.parameters
    if p.source is not None and p.target is not None:
        named = [p.source, p.target]
    else:
        named = list(ctx.config.graphs)
    labels = named + [f"random{i}" for i in range(p.samples)]
    graphs = [ctx.graph(name) for name in named] + ctx.random_graphs(p.samples)
    n = len(graphs)
    d = np.zeros((n, n))
    witness = {}
    for i in range(n):
        for j in range(n):
            if i != j:
                ratio = lipschitz_ratio(graphs[i], graphs[j])
                d[i, j] = math.log(ratio.ratio)
                witness[i, j] = ratio.witness
    rows = [{"source": labels[i], "target": labels[j], "distance": d[i, j], "symmetrized": d[i, j] + d[j, i],
             "witness": witness[i, j]} for i, j in witness]
    violations = sum(1 for i in range(n) for j in range(n) for k in range(n)
                     if len({i, j, k}) == 3 and d[i, k] > d[i, j] + d[j, k] + 1e-9)
    return ExperimentReport(rows=rows, summary={
        "graphs": n,
        "pairs": len(rows),
        "max_distance": float(d.max()) if n else 0.0,
        "triangle_violations": violations,
    })


def _fold(ctx: ExperimentContext) -> ExperimentReport:
    p = ctx.config.parameters
    if p.source is None and p.target is None:
        return _fold_random(ctx)
    for field in ("source", "target"):
        if getattr(p, field) is None:
            raise _config_error(ctx.config, f"fold needs parameters.{field}", "parameters")
    source, target = ctx.graph(p.source), ctx.graph(p.target)
    path = folding_path(source, target, p.dt)
    distance = lipschitz_distance(source, target)
    total = path.prefix_length + path.length
    violations = 0
    for i, text in enumerate(p.classes):
        violations += len(check_legal_flare(path, ctx.word(text, "parameters", "classes", i)).violations)
    return ExperimentReport(rows=path.step_table(), summary={
        "steps": len(path.step_maps),
        "prefix_length": path.prefix_length,
        "length": total,
        "distance": distance,
        "telescoping_gap": abs(total - distance),
        "legal_flare_violations": violations,
    })


def _fold_random(ctx: ExperimentContext) -> ExperimentReport:
    """Fold `samples` pairs of random marked graphs along their optimal maps."""
    p = ctx.config.parameters
    if not p.samples:
        raise _config_error(ctx.config, "fold needs parameters.source and target, or samples > 0", "parameters")
    classes = [ctx.word(text, "parameters", "classes", i) for i, text in enumerate(p.classes)]
    rows, violations = [], 0
    for k in range(p.samples):
        source, target = ctx.random_graphs(2)
        path = folding_path(source, target, p.dt)
        distance = lipschitz_distance(source, target)
        total = path.prefix_length + path.length
        margins = legal_flare_margins(path, classes)
        violations += sum(1 for m in margins.values() if m < -TOLERANCE)
        rows.append({"pair": k, "source_edges": len(source.edges), "target_edges": len(target.edges),
                     "steps": len(path.step_maps), "prefix_length": path.prefix_length, "length": total,
                     "distance": distance, "telescoping_gap": abs(total - distance),
                     "worst_flare_margin": min(margins.values(), default=None)})
    return ExperimentReport(rows=rows, summary={
        "pairs": len(rows),
        "max_telescoping_gap": max((row["telescoping_gap"] for row in rows), default=0.0),
        "legal_flare_violations": violations,
    })


def _flare(ctx: ExperimentContext) -> ExperimentReport:
    p = ctx.config.parameters
    alpha = ctx.word(p.alpha or p.classes[0], "parameters", "alpha")
    beta = ctx.word(p.beta, "parameters", "beta") if p.beta is not None else alpha
    graph = ctx.graph(p.source)
    ball = gamma_ball(ctx.presentation, p.radius)
    minimum = min_set(ctx.presentation, alpha, graph, ball)
    g0 = min(minimum.table, key=lambda item: item[1])[0]
    fit = flare_measure(ctx.presentation, alpha, beta, g0, graph, p.radius, p.k)
    rows = [{"element": row.element, "distance": row.distance, "length": row.length, "contained": row.contained}
            for row in fit.rows]
    return ExperimentReport(rows=rows, summary={
        "alpha": ConjugacyClass(alpha),
        "beta": ConjugacyClass(beta),
        "base_point": g0,
        "min_length": minimum.min_length,
        "min_set_size": len(minimum.members),
        "growth": fit.growth,
        "constant": fit.constant,
        "r_squared": fit.r_squared,
        "exponential": fit.exponential,
    })


def _width(ctx: ExperimentContext) -> ExperimentReport:
    p = ctx.config.parameters
    rows, exceeded, bound = [], False, 0
    for i, text in enumerate(p.classes):
        a = ctx.word(text, "parameters", "classes", i)
        for row in width_estimate(ctx.presentation, a, p.powers, ctx.settings.cap, ctx.settings.progress):
            rows.append({"class": text, "power": row.power, "geodesic_length": row.geodesic_length,
                         "diameter": row.diameter})
            if row.diameter is None:
                exceeded = True
            else:
                bound = max(bound, row.diameter)
    return ExperimentReport(rows=rows, exceeded=exceeded, summary={"max_diameter": bound, "exceeded": exceeded})


def _pl_ball(ctx: ExperimentContext) -> ExperimentReport:
    p = ctx.config.parameters
    ball = build_pl_ball(p.length_bound, ctx.config.rank, workers=ctx.settings.threads)
    base = ConjugacyClass(ctx.word(p.alpha, "parameters", "alpha")) if p.alpha is not None else ball.vertices[0]
    if base not in ball:
        raise _config_error(ctx.config, f"{base} is not a primitive class of length <= {p.length_bound}",
                            "parameters", "alpha")
    distances = dict(pl_distance_profile(ball, base))
    rows = [{"class": c, "length": len(c), "degree": ball.graph.degree(c), "distance": distances.get(c)}
            for c in ball.vertices]
    loxodromic = {}
    for name, t in zip(ctx.presentation.names, ctx.presentation.generators):
        loxodromic[name] = [{"power": r.power, "image": r.image, "length": r.length, "distance": r.distance}
                            for r in loxodromic_table(t, base, p.powers, ball)]
    name = ctx.config.name
    return ExperimentReport(rows=rows, attachments={f"{name}_adjacency.txt": ball.to_adjacency_text()}, summary={
        "vertices": len(ball.vertices),
        "edges": ball.graph.number_of_edges(),
        "undecided": len(ball.undecided),
        "connected": nx.is_connected(ball.graph),
        "base": base,
        "loxodromic": loxodromic,
    })


def _subgroup(ctx: ExperimentContext):
    p = ctx.config.parameters
    if p.subgroup:
        gens = [ctx.word(w, "parameters", "subgroup", i) for i, w in enumerate(p.subgroup)]
        return stallings_graph(gens, ctx.config.rank)
    subgroups = index_two_subgroups(ctx.config.rank)
    if p.index_two >= len(subgroups):
        raise _config_error(ctx.config, f"index_two must be below {len(subgroups)}", "parameters", "index_two")
    return subgroups[p.index_two]


def _lift(ctx: ExperimentContext) -> ExperimentReport:
    p = ctx.config.parameters
    subgroup = _subgroup(ctx)
    if subgroup.index is None:
        raise _config_error(ctx.config, "lift needs a finite-index subgroup", "parameters", "subgroup")
    graphs = [ctx.graph(name) for name in ctx.config.graphs] + ctx.random_graphs(2 * p.samples)
    rows, worst = [], 0.0
    for i in range(0, len(graphs) - 1, 2):
        first, second = graphs[i], graphs[i + 1]
        distance = lipschitz_distance(first, second)
        lifted = lipschitz_distance(cover(first, subgroup), cover(second, subgroup))
        worst = max(worst, abs(distance - lifted))
        rows.append({"pair": i // 2, "distance": distance, "lifted_distance": lifted,
                     "difference": abs(distance - lifted)})
    summary: Dict[str, Any] = {
        "subgroup_index": subgroup.index,
        "subgroup_rank": subgroup.subgroup_rank,
        "pairs": len(rows),
        "max_difference": worst,
    }
    if ctx.presentation.num_generators:
        try:
            lifted_presentation, lift_rows = lift_presentation(ctx.presentation, subgroup, p.max_power)
            summary["lifted_generators"] = [{"generator": r.generator, "power": r.power, "induced": str(r.induced)}
                                            for r in lift_rows]
            summary["lifted_mu_bl"] = lifted_presentation.mu_bl
        except SubgroupNotPreservedError as exc:
            logger.warning("⚠️ %s", exc)
            summary["lifted_generators"] = None
    return ExperimentReport(rows=rows, summary=summary)


def _quasiconvexity(ctx: ExperimentContext) -> ExperimentReport:
    p = ctx.config.parameters
    if not p.subgroup:
        raise _config_error(ctx.config, "quasiconvexity needs parameters.subgroup", "parameters")
    subgroup = _subgroup(ctx)
    found = quasiconvexity_probe(ctx.presentation, subgroup, p.powers, ctx.settings.cap, p.max_pairs, ctx.rng)
    rows = [{"max_length": r.max_length, "pairs": r.pairs, "max_offset": r.max_offset} for r in found]
    exceeded = any(r.max_offset is None for r in found) or len(found) < len(p.powers)
    offsets = [r.max_offset for r in found if r.max_offset is not None]
    return ExperimentReport(rows=rows, exceeded=exceeded,
                            summary={"max_offset": max(offsets, default=None), "exceeded": exceeded})


def _hyperbolicity(ctx: ExperimentContext) -> ExperimentReport:
    p = ctx.config.parameters
    summary: Dict[str, Any] = {"space": p.space}
    exceeded = False
    if p.space == "bundle":
        graph, exceeded = bundle_ball(ctx.presentation, p.radius, ctx.settings.cap)
        profile = properness_pairs(ctx.presentation, p.radius, ctx.settings.cap)
        summary["properness"] = [list(row) for row in profile.rows]
    elif p.space == "pl":
        ball = build_pl_ball(p.length_bound, ctx.config.rank, workers=ctx.settings.threads)
        graph = ball.graph.subgraph(max(nx.connected_components(ball.graph), key=len)).copy()
    else:
        if p.edge_list is None:
            raise _config_error(ctx.config, "space edge-list needs parameters.edge_list", "parameters", "space")
        source = ctx.config.base_dir / p.edge_list
        try:
            text = source.read_text(encoding="utf-8")
        except OSError as exc:
            raise _config_error(ctx.config, f"cannot read {source}: {exc.strerror}", "parameters", "edge_list") from None
        metric = FiniteMetricGraph.from_edge_list(text)
        graph = None
    if graph is not None:
        metric = FiniteMetricGraph.from_networkx(graph)
    estimate = delta_fourpoint(metric, ctx.rng)
    row = {"space": p.space, "vertices": metric.num_vertices, "edges": len(metric.edges),
           "diameter": metric.diameter, "delta": estimate.value, "exhaustive": estimate.exhaustive,
           "checked": estimate.checked}
    summary.update(row)
    return ExperimentReport(rows=[row], summary=summary, exceeded=exceeded)


EXPERIMENTS: Dict[str, Callable[[ExperimentContext], ExperimentReport]] = {
    "distance": _distance,
    "fold": _fold,
    "flare": _flare,
    "width": _width,
    "pl-ball": _pl_ball,
    "lift": _lift,
    "quasiconvexity": _quasiconvexity,
    "hyperbolicity": _hyperbolicity,
}


# ---------------------------------------------------------------------------
# Report output
# ---------------------------------------------------------------------------

def to_json_value(value: Any) -> Any:
    if value is None or isinstance(value, (bool, str)):
        return value
    if isinstance(value, numbers.Integral):
        return int(value)
    if isinstance(value, numbers.Real):
        x = float(value)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(f"{x:.{SIGNIFICANT_DIGITS}g}")
    if isinstance(value, dict):
        return {str(k): to_json_value(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_json_value(v) for v in value]
    return str(value)


def to_cell(value: Any) -> str:
    value = to_json_value(value)
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.{SIGNIFICANT_DIGITS}g}"
    if isinstance(value, (list, dict)):
        return json.dumps(value, ensure_ascii=False)
    return str(value)


def write_reports(out_dir: Path, config: ExperimentConfig, settings: RunSettings, report: ExperimentReport) -> List[str]:
    out_dir.mkdir(parents=True, exist_ok=True)
    fieldnames: List[str] = []
    for row in report.rows:
        fieldnames.extend(k for k in row if k not in fieldnames)
    csv_path = out_dir / f"{config.name}.csv"
    with csv_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in report.rows:
            writer.writerow({k: to_cell(row.get(k)) for k in fieldnames})
    document = {
        "name": config.name,
        "experiment": config.experiment,
        "seed": settings.seed,
        "cap": settings.cap,
        "exceeded": report.exceeded,
        "summary": to_json_value(report.summary),
        "columns": fieldnames,
        "rows": [{k: to_cell(row.get(k)) for k in fieldnames} for row in report.rows],
    }
    json_path = out_dir / f"{config.name}.json"
    json_path.write_text(json.dumps(document, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    outputs = [str(csv_path), str(json_path)]
    for filename, text in report.attachments.items():
        (out_dir / filename).write_text(text, encoding="utf-8")
        outputs.append(str(out_dir / filename))
    return outputs


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------

def run(config: ExperimentConfig, out_dir, seed: Optional[int] = None, threads: Optional[int] = None,
        cap: Optional[int] = None, progress: bool = False) -> RunSummary:
    """Run one experiment and write its reports. Flags beat config values, which beat the environment."""
    env = RunSettings.from_env()
    settings = RunSettings(
        seed=_first(seed, config.parameters.seed, env.seed),
        threads=_first(threads, env.threads),
        cap=_first(cap, config.parameters.cap, env.cap),
        progress=progress,
    ).check()
    diagnostics = validate(config)
    for d in diagnostics:
        if d.level == "warning":
            logger.warning("⚠️ %s", d.message)
    errors = [d for d in diagnostics if d.level == "error"]
    if errors:
        first = errors[0]
        if first.generator is not None:
            raise InvalidAutomorphismError(first.message, generator=first.generator)
        raise ConfigError(first.message, first.line, first.column)
    automorphisms = {name: build_automorphism(config, name) for name in config.automorphisms}
    ctx = ExperimentContext(config, automorphisms, build_presentation(config, automorphisms), settings,
                            np.random.default_rng(settings.seed))
    report = EXPERIMENTS[config.experiment](ctx)
    outputs = write_reports(Path(out_dir), config, settings, report)
    return RunSummary(name=config.name, experiment=config.experiment, seed=settings.seed, rows=len(report.rows),
                      exceeded=report.exceeded, outputs=outputs, summary=to_json_value(report.summary))


def print_summary(summary: RunSummary, console: Optional[Console] = None) -> None:
    console = console or Console()
    table = Table(title=f"{summary.name} ({summary.experiment}, seed {summary.seed})")
    table.add_column("key", style="cyan")
    table.add_column("value")
    table.add_row("rows", str(summary.rows))
    for key, value in summary.summary.items():
        if not isinstance(value, (list, dict)):
            table.add_row(key, to_cell(value))
    table.add_row("exceeded", to_cell(summary.exceeded))
    console.print(table)


def print_diagnostics(diagnostics: List[Diagnostic], console: Optional[Console] = None) -> None:
    console = console or Console()
    table = Table(title="diagnostics")
    table.add_column("level")
    table.add_column("where")
    table.add_column("message")
    for d in diagnostics:
        where = f"{d.line}:{d.column}" if d.line is not None else ""
        table.add_row(d.level, where, d.message)
    console.print(table)


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(description="Free group geometry experiments")
    commands = parser.add_subparsers(dest="command", required=True)
    run_parser = commands.add_parser("run", help="run an experiment config and write CSV/JSON reports")
    run_parser.add_argument("--config", required=True, help="experiment YAML file")
    run_parser.add_argument("--out", default="reports", help="output directory")
    run_parser.add_argument("--seed", type=int, help="random seed (overrides FREEGEO_SEED)")
    run_parser.add_argument("--threads", type=int, help="worker processes (overrides FREEGEO_THREADS)")
    run_parser.add_argument("--cap", type=int, help="breadth-first node cap (overrides FREEGEO_BFS_CAP)")
    run_parser.add_argument("--progress", action="store_true", help="show progress bars")
    validate_parser = commands.add_parser("validate", help="check a config and print diagnostics")
    validate_parser.add_argument("--config", required=True, help="experiment YAML file")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format=LOG_FORMAT)

    try:
        config = load_config(args.config)
        if args.command == "validate":
            diagnostics = validate(config)
            print_diagnostics(diagnostics)
            if any(d.level == "error" for d in diagnostics):
                logger.error("❌ %s has errors", args.config)
                return EXIT_INVALID
            logger.info("✅ %s is valid", args.config)
            return EXIT_OK

        logger.info("=" * 60)
        logger.info("🚀 Running %s (%s)", config.name, config.experiment)
        summary = run(config, args.out, args.seed, args.threads, args.cap, args.progress)
        print_summary(summary)
        logger.info("=" * 60)
        if summary.exceeded:
            logger.warning("⚠️ Search cap reached; %s is partial", summary.outputs[0])
            return EXIT_BUDGET
        logger.info("✅ Reports written: %s", ", ".join(summary.outputs))
        return EXIT_OK
    except InvalidInputError as e:
        logger.error(f"❌ Invalid input: {e}")
        return EXIT_INVALID
    except BudgetExceededError as e:
        logger.error(f"❌ {e}")
        return EXIT_BUDGET
    except KeyboardInterrupt:
        logger.info("👋 Interrupted")
        return EXIT_FAILURE
    except Exception as e:
        logger.exception(f"❌ Experiment failed: {e}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
