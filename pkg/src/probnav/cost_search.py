"""Multi-objective cost algebra and cost-algebraic A* with re-openings.

Path costs are 5-component vectors ordered lexicographically: collision
probability terms dominate distance, which dominates duration, which
dominates rotation count. Combining costs is componentwise addition, which
together with the lexicographic order forms a monoid with a compatible total
order, so A* with node re-openings is exact for admissible heuristics even
when they are inconsistent.
"""
from __future__ import annotations

import heapq
import time
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, NamedTuple


class CostVector(NamedTuple):
    """Lexicographically ordered path cost. Tuple order is the comparison order."""

    j_static: float
    j_dynamic: float
    j_distance: float
    j_duration: float
    j_rotation: float

    @staticmethod
    def zero() -> "CostVector":
        return CostVector(0.0, 0.0, 0.0, 0.0, 0.0)


def cost_combine(a: CostVector, b: CostVector) -> CostVector:
    """Monoid operation: componentwise addition."""
    return CostVector(a[0] + b[0], a[1] + b[1], a[2] + b[2],
                      a[3] + b[3], a[4] + b[4])


def cost_less(a: CostVector, b: CostVector) -> bool:
    """Strict lexicographic order, first component most significant."""
    return a < b


@dataclass
class _Node:
    state: object
    g: CostVector
    parent: "_Node | None"


@dataclass(frozen=True)
class SearchResult:
    path: list
    cost: CostVector
    expansions: int
    complete: bool


def astar(start,
          is_goal: Callable[[object], bool],
          expand: Callable[[object], Iterable[tuple[object, CostVector]]],
          heuristic: Callable[[object], CostVector],
          *,
          state_key: Callable[[object], Hashable] | None = None,
          expansion_limit: int | None = None,
          time_limit: float | None = None) -> SearchResult | None:
    """Best-first search over the cost algebra, anytime under a budget.

    Re-openings: a state already expanded is pushed again whenever a cheaper
    path to it appears, so admissible but inconsistent heuristics still give
    optimal results when the search runs to exhaustion. Ties in f are broken
    first-in first-out for determinism. When a budget (expansions or
    seconds) cuts the search short, the best goal path found so far is
    returned with ``complete=False``; returns None if no goal was reached.
    """
    key_of = state_key if state_key is not None else lambda s: s
    deadline = None if time_limit is None else time.monotonic() + time_limit

    counter = 0
    root = _Node(start, CostVector.zero(), None)
    open_heap: list[tuple[CostVector, int, _Node]] = []
    heapq.heappush(open_heap, (cost_combine(root.g, heuristic(start)), counter, root))
    best_g: dict[Hashable, CostVector] = {key_of(start): root.g}

    best_goal: _Node | None = None
    if is_goal(start):
        best_goal = root

    expansions = 0
    complete = True
    while open_heap:
        if expansion_limit is not None and expansions >= expansion_limit:
            complete = False
            break
        if deadline is not None and time.monotonic() >= deadline:
            complete = False
            break

        f, _, node = heapq.heappop(open_heap)
        if best_goal is not None and not cost_less(f, best_goal.g):
            # every remaining open node has f >= the best goal cost, and f
            # lower-bounds any path through it: the goal is optimal
            break
        stale = best_g.get(key_of(node.state))
        if stale is not None and cost_less(stale, node.g):
            continue

        expansions += 1
        for succ, edge_cost in expand(node.state):
            g = cost_combine(node.g, edge_cost)
            k = key_of(succ)
            known = best_g.get(k)
            if known is not None and not cost_less(g, known):
                continue
            best_g[k] = g
            child = _Node(succ, g, node)
            if is_goal(succ) and (best_goal is None or cost_less(g, best_goal.g)):
                best_goal = child
            counter += 1
            heapq.heappush(open_heap, (cost_combine(g, heuristic(succ)), counter, child))

    if best_goal is None:
        return None
    path = []
    node = best_goal
    while node is not None:
        path.append(node.state)
        node = node.parent
    path.reverse()
    return SearchResult(path, best_goal.g, expansions, complete)
