"""Enumeration of contact graphs admissible in system deadlock.

Vertices are robots (labeled, 1-based); an edge means the pair sits exactly at
the safety margin.  A candidate graph is admissible when

  * every robot has at least one contact (an empty active set cannot hold in
    deadlock),
  * no robot has more than two contacts (the planar decision variable admits
    at most two linearly independent active rows per robot), and
  * the graph embeds in the plane with every edge exactly d_s long and every
    non-edge strictly longer.

Realizability is decided by multistart penalized least squares with a plain
gradient descent / backtracking inner loop; verdicts are independent of d_s
(pure scaling) and of vertex labeling.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import SafetyParams
from .errors import PreconditionError

# Strictness margin for non-edges: a pair that optimization can only place at
# exactly d_s is classified as having that edge instead (measure-zero boundary).
NONEDGE_MARGIN = 1e-6
MAX_CONTACTS_PER_ROBOT = 2


@dataclass(frozen=True)
class ContactGraph:
    """Simple labeled graph; edges are unordered 1-based vertex pairs."""

    n: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        for (i, j) in self.edges:
            if not (1 <= i < j <= self.n):
                raise PreconditionError(f"edge ({i},{j}) out of range for n={self.n}")

    def degree(self, v: int) -> int:
        return sum(1 for (i, j) in self.edges if v in (i, j))

    def non_edges(self) -> list[tuple[int, int]]:
        all_pairs = itertools.combinations(range(1, self.n + 1), 2)
        return [p for p in all_pairs if p not in self.edges]

    def edge_list(self) -> list[tuple[int, int]]:
        return sorted(self.edges)


@dataclass(eq=False)
class EmbeddingResult:
    realizable: bool
    positions: np.ndarray | None
    residual: float
    restarts_used: int


@dataclass(eq=False)
class GraphVerdict:
    graph: ContactGraph
    contact_cap_ok: bool
    embedding: EmbeddingResult | None

    @property
    def admissible(self) -> bool:
        return self.contact_cap_ok and self.embedding is not None and self.embedding.realizable


@dataclass(eq=False)
class EnumerationReport:
    n: int
    candidates: int
    admissible: int
    upper_bound: int
    lower_bound: int
    verdicts: list[GraphVerdict]
    seed: int
    restarts: int


def upper_bound(n: int) -> int:
    """All subsets of the C(n,2) possible contact pairs (Python ints never overflow)."""
    if n < 1:
        raise PreconditionError("n must be at least 1")
    return 2 ** (n * (n - 1) // 2)


def lower_bound(n: int) -> int:
    """Cycle plus open-chain labelings: (n+1)(n-1)!/2 for n >= 3, else 1."""
    if n < 1:
        raise PreconditionError("n must be at least 1")
    if n <= 2:
        return 1
    return (n + 1) * math.factorial(n - 1) // 2


def enumerate_candidates(n: int) -> list[ContactGraph]:
    """All labeled simple graphs with minimum degree >= 1 (n=1: the empty graph)."""
    if n < 1:
        raise PreconditionError("n must be at least 1")
    if n > 6:
        raise PreconditionError(f"candidate enumeration is guarded to n <= 6, got {n}")
    if n == 1:
        return [ContactGraph(1, frozenset())]
    all_edges = list(itertools.combinations(range(1, n + 1), 2))
    out = []
    for mask in range(2 ** len(all_edges)):
        deg = [0] * (n + 1)
        edges = []
        for k, (i, j) in enumerate(all_edges):
            if (mask >> k) & 1:
                deg[i] += 1
                deg[j] += 1
                edges.append((i, j))
        if min(deg[1:]) >= 1:
            out.append(ContactGraph(n, frozenset(edges)))
    return out


def _objective_and_grad(x: np.ndarray, edges, non_edges, d_s: float, margin: float):
    obj = 0.0
    grad = np.zeros_like(x)
    for (i, j) in edges:
        d = x[i - 1] - x[j - 1]
        dist = math.hypot(d[0], d[1])
        if dist < 1e-12:
            # Coincident points: push apart along a fixed subgradient direction.
            obj += d_s * d_s
            grad[i - 1] += (-2.0 * d_s, 0.0)
            grad[j - 1] += (2.0 * d_s, 0.0)
            continue
        err = dist - d_s
        obj += err * err
        g = (2.0 * err / dist) * d
        grad[i - 1] += g
        grad[j - 1] -= g
    for (i, j) in non_edges:
        d = x[i - 1] - x[j - 1]
        dist = math.hypot(d[0], d[1])
        gap = margin - dist
        if gap <= 0.0:
            continue
        if dist < 1e-12:
            obj += margin * margin
            grad[i - 1] += (-2.0 * margin, 0.0)
            grad[j - 1] += (2.0 * margin, 0.0)
            continue
        obj += gap * gap
        g = (-2.0 * gap / dist) * d
        grad[i - 1] += g
        grad[j - 1] -= g
    return obj, grad


def _descend(x, edges, non_edges, d_s, margin, max_iters=600, target=1e-16):
    obj, grad = _objective_and_grad(x, edges, non_edges, d_s, margin)
    step = 1.0
    for _ in range(max_iters):
        if obj <= target:
            break
        gnorm2 = float(np.sum(grad * grad))
        if gnorm2 <= 1e-30:
            break
        # Backtracking line search with an Armijo decrease condition.
        step = min(step * 2.0, 1.0)
        while step > 1e-18:
            x_new = x - step * grad
            obj_new, grad_new = _objective_and_grad(x_new, edges, non_edges, d_s, margin)
            if obj_new <= obj - 1e-4 * step * gnorm2:
                x, obj, grad = x_new, obj_new, grad_new
                break
            step *= 0.5
        else:
            break
    return x, obj


def _verify_embedding(x, g: ContactGraph, d_s: float) -> bool:
    for (i, j) in g.edges:
        dist = float(np.linalg.norm(x[i - 1] - x[j - 1]))
        if abs(dist - d_s) > 1e-6:
            return False
    for (i, j) in g.non_edges():
        dist = float(np.linalg.norm(x[i - 1] - x[j - 1]))
        if dist < d_s * (1.0 + NONEDGE_MARGIN):
            return False
    return True


def check_realizability(
    g: ContactGraph,
    safety: SafetyParams,
    restarts: int = 200,
    seed: int = 42,
) -> EmbeddingResult:
    """Decide whether g embeds with edges exactly d_s and non-edges strictly longer.

    Multistart penalized least squares; a restart certifies realizability when
    its objective reaches <= 1e-12 and the embedding passes an independent
    distance re-check.  Failure to certify after all restarts is reported as
    not realizable together with the best residual seen.
    """
    d_s = safety.d_s
    if g.n == 1:
        return EmbeddingResult(True, np.zeros((1, 2)), 0.0, 0)
    edges = g.edge_list()
    non_edges = g.non_edges()
    margin = d_s * (1.0 + NONEDGE_MARGIN)
    rng = np.random.default_rng(seed)
    box = 2.0 * g.n * d_s
    best = math.inf
    for r in range(restarts):
        x0 = rng.uniform(0.0, box, size=(g.n, 2))
        x, obj = _descend(x0, edges, non_edges, d_s, margin)
        best = min(best, obj)
        if obj <= 1e-12 and _verify_embedding(x, g, d_s):
            return EmbeddingResult(True, x, obj, r + 1)
    return EmbeddingResult(False, None, best, restarts)


def count_admissible(
    n: int,
    safety: SafetyParams,
    restarts: int = 200,
    seed: int = 42,
) -> EnumerationReport:
    """Count admissible contact graphs on n robots and report per-graph verdicts.

    The geometric check runs only on graphs passing the per-robot contact cap;
    restart streams are seeded per graph index so reports are reproducible and
    parallelizable with a deterministic merge.
    """
    if n > 5:
        raise PreconditionError(f"admissibility counting is guarded to n <= 5, got {n}")
    candidates = enumerate_candidates(n)
    verdicts = []
    for idx, g in enumerate(candidates):
        cap_ok = all(g.degree(v) <= MAX_CONTACTS_PER_ROBOT for v in range(1, n + 1))
        emb = None
        if cap_ok:
            emb = check_realizability(g, safety, restarts=restarts, seed=(seed, idx))
        verdicts.append(GraphVerdict(g, cap_ok, emb))
    return EnumerationReport(
        n=n,
        candidates=len(candidates),
        admissible=sum(v.admissible for v in verdicts),
        upper_bound=upper_bound(n),
        lower_bound=lower_bound(n),
        verdicts=verdicts,
        seed=seed,
        restarts=restarts,
    )


def format_report(report: EnumerationReport) -> str:
    """Structured text: one row per graph plus summary counts."""
    lines = [
        f"# contact graphs on n={report.n} robots "
        f"(seed={report.seed} restarts={report.restarts})",
        "edge_list\tadmissible\trealizable\tresidual\trestarts_used",
    ]
    for v in report.verdicts:
        edges = ";".join(f"{i}-{j}" for i, j in v.graph.edge_list()) or "(none)"
        if not v.contact_cap_ok:
            realizable, residual, used = "skipped(contact_cap)", "", ""
        else:
            realizable = str(v.embedding.realizable)
            residual = f"{v.embedding.residual:.3e}"
            used = str(v.embedding.restarts_used)
        lines.append(f"{edges}\t{v.admissible}\t{realizable}\t{residual}\t{used}")
    lines.append(
        f"admissible={report.admissible} lower={report.lower_bound} "
        f"upper={report.upper_bound} candidates={report.candidates}"
    )
    return "\n".join(lines)
