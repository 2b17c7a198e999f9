"""Sparse rectangular linear assignment.

solve_lapjvsp() implements the Jonker-Volgenant shortest augmenting path
scheme on a sparse cost matrix: column reduction, two passes of augmenting
row reduction, then one Dijkstra-style augmentation per remaining free row,
all restricted to the arcs actually present.  Every minimum scan breaks ties
toward the lowest column index, so results are deterministic.

The column-reduction phase raises column potentials and is sound only when
every column ends up assigned, i.e. on square instances; rectangular
instances (more columns than rows) skip it and rely on augmenting row
reduction plus shortest augmenting paths, which keep unassigned columns at
potential zero — the condition rectangular optimality rests on.

solve_bruteforce() enumerates injective row->column maps over the same arcs
and is the reference oracle for small instances (n_rows <= 9).

Rows must each carry at least one arc.  Infeasibility that only becomes
apparent during augmentation (no augmenting path reaches a free column) is
reported as InfeasibleRow for the row being augmented.
"""

from __future__ import annotations

import heapq
import math
from bisect import bisect_left
from dataclasses import dataclass

from .errors import ToolkitError

# Slack tolerated when asserting dual feasibility (debug checks only);
# the solver itself never branches on it.
DUAL_FEASIBILITY_EPS = 1e-12

BRUTEFORCE_MAX_ROWS = 9


class ShapeError(ToolkitError):
    """Matrix shape is unusable (more rows than columns, bad indices)."""


class InfeasibleRow(ToolkitError):
    """A row has no arcs, or no augmenting path can assign it."""

    def __init__(self, row: int, message: str | None = None):
        super().__init__(message or f"row {row} cannot be assigned")
        self.row = row


class TooLarge(ToolkitError):
    """Instance exceeds the brute-force enumeration bound."""


@dataclass(frozen=True)
class SparseCostMatrix:
    """Rectangular cost matrix in compressed sparse row form.

    Arcs are stored per row as parallel tuples of column indices (ascending)
    and finite non-negative costs.  Columns at index >= dummy_from (when set)
    are padding added by pad_with_dummies().
    """

    n_rows: int
    n_cols: int
    col_index: tuple[tuple[int, ...], ...]
    cost: tuple[tuple[float, ...], ...]
    dummy_from: int | None = None

    def __post_init__(self):
        if self.n_rows < 0 or self.n_cols < 0:
            raise ShapeError("matrix dimensions must be >= 0")
        if len(self.col_index) != self.n_rows or len(self.cost) != self.n_rows:
            raise ShapeError("per-row arc arrays must match n_rows")
        for i, (cols, costs) in enumerate(zip(self.col_index, self.cost)):
            if len(cols) != len(costs):
                raise ShapeError(f"row {i}: column and cost arrays differ in length")
            prev = -1
            for j, c in zip(cols, costs):
                if not (0 <= j < self.n_cols):
                    raise ShapeError(f"row {i}: column index {j} out of range")
                if j <= prev:
                    raise ShapeError(f"row {i}: column indices must be strictly ascending")
                prev = j
                if not math.isfinite(c) or c < 0.0:
                    raise ShapeError(f"row {i}: cost {c!r} must be finite and >= 0")
        if self.dummy_from is not None and not (0 <= self.dummy_from <= self.n_cols):
            raise ShapeError("dummy_from out of range")

    @classmethod
    def from_arcs(
        cls,
        n_rows: int,
        n_cols: int,
        arcs: "list[tuple[int, int, float]]",
        dummy_from: int | None = None,
    ) -> "SparseCostMatrix":
        """Build from (row, col, cost) triples; duplicate arcs are rejected."""
        per_row: list[list[tuple[int, float]]] = [[] for _ in range(max(n_rows, 0))]
        for r, c, w in arcs:
            if not (0 <= r < n_rows):
                raise ShapeError(f"row index {r} out of range")
            per_row[r].append((c, float(w)))
        col_index = []
        cost = []
        for r, row in enumerate(per_row):
            row.sort()
            cols = tuple(c for c, _ in row)
            if len(set(cols)) != len(cols):
                raise ShapeError(f"row {r}: duplicate arcs")
            col_index.append(cols)
            cost.append(tuple(w for _, w in row))
        return cls(
            n_rows=n_rows,
            n_cols=n_cols,
            col_index=tuple(col_index),
            cost=tuple(cost),
            dummy_from=dummy_from,
        )

    def arc_cost(self, row: int, col: int) -> float:
        cols = self.col_index[row]
        k = bisect_left(cols, col)
        if k == len(cols) or cols[k] != col:
            raise KeyError(f"no arc ({row}, {col})")
        return self.cost[row][k]

    def is_dummy(self, col: int) -> bool:
        return self.dummy_from is not None and col >= self.dummy_from

    def n_arcs(self) -> int:
        return sum(len(cols) for cols in self.col_index)


@dataclass(frozen=True)
class Assignment:
    """Result of an assignment solve: a total injective row -> column map."""

    row_to_col: tuple[int, ...]
    total_cost: float

    def pairs(self) -> list[tuple[int, int]]:
        return list(enumerate(self.row_to_col))


def pad_with_dummies(matrix: SparseCostMatrix, dummy_cost: float = 1.0) -> SparseCostMatrix:
    """Append one dedicated dummy column per row at the given cost.

    Row i gains the arc (i, n_cols + i), which makes every instance feasible
    and lets an optimal solution leave a row unmatched at a bounded price.
    The returned matrix flags the padding block via dummy_from.
    """
    if not math.isfinite(dummy_cost) or dummy_cost < 0.0:
        raise ShapeError(f"dummy cost {dummy_cost!r} must be finite and >= 0")
    col_index = tuple(
        cols + (matrix.n_cols + i,) for i, cols in enumerate(matrix.col_index)
    )
    cost = tuple(costs + (float(dummy_cost),) for costs in matrix.cost)
    return SparseCostMatrix(
        n_rows=matrix.n_rows,
        n_cols=matrix.n_cols + matrix.n_rows,
        col_index=col_index,
        cost=cost,
        dummy_from=matrix.n_cols,
    )


def _check_solvable_shape(matrix: SparseCostMatrix) -> None:
    if matrix.n_rows > matrix.n_cols:
        raise ShapeError(
            f"{matrix.n_rows} rows cannot be injectively assigned to {matrix.n_cols} columns"
        )
    for i, cols in enumerate(matrix.col_index):
        if not cols:
            raise InfeasibleRow(i, f"row {i} has no arcs")


def _total_cost(matrix: SparseCostMatrix, row_to_col: list[int]) -> float:
    return sum(matrix.arc_cost(i, j) for i, j in enumerate(row_to_col))


def _finish(matrix: SparseCostMatrix, row_to_col: list[int]) -> Assignment:
    assert all(j >= 0 for j in row_to_col), "assignment must cover every row"
    assert len(set(row_to_col)) == len(row_to_col), "assignment must be injective"
    return Assignment(
        row_to_col=tuple(row_to_col), total_cost=_total_cost(matrix, row_to_col)
    )


def solve_lapjvsp(matrix: SparseCostMatrix, *, validate_duals: bool = False) -> Assignment:
    """Minimum-cost injective assignment of every row to some column.

    With validate_duals=True the final dual variables are checked for
    feasibility and complementary slackness (within DUAL_FEASIBILITY_EPS)
    before returning; this is an optimality certificate used by tests.
    """
    _check_solvable_shape(matrix)
    n, m = matrix.n_rows, matrix.n_cols
    if n == 0:
        return Assignment(row_to_col=(), total_cost=0.0)
    col_index = matrix.col_index
    cost = matrix.cost

    u = [0.0] * n
    v = [0.0] * m
    col_of = [-1] * n  # row -> column
    row_of = [-1] * m  # column -> row

    # --- column reduction (square instances only) ---------------------------
    # v[j] = cheapest arc entering column j; assign that arc when its row is
    # still free.  Ascending scan + strict < keeps the lowest row on ties.
    # On rectangular instances this would leave positive potentials on
    # columns that never get assigned, losing optimality, so it is skipped.
    if n == m:
        col_best: list[tuple[float, int] | None] = [None] * m
        for i in range(n):
            for j, c in zip(col_index[i], cost[i]):
                cur = col_best[j]
                if cur is None or c < cur[0]:
                    col_best[j] = (c, i)
        for j in range(m):
            cur = col_best[j]
            if cur is None:
                continue
            v[j] = cur[0]
            i = cur[1]
            if col_of[i] == -1:
                col_of[i] = j
                row_of[j] = i

    # --- augmenting row reduction (two passes) -----------------------------
    free = [i for i in range(n) if col_of[i] == -1]
    for _ in range(2):
        if not free:
            break
        next_free: list[int] = []
        for i in free:
            best = second = math.inf
            best_j = -1
            for j, c in zip(col_index[i], cost[i]):
                r = c - v[j]
                if r < best:
                    second = best
                    best = r
                    best_j = j
                elif r < second:
                    second = r
            if math.isinf(second):
                # single-arc row: claim the column outright
                u[i] = best
                j = best_j
            else:
                u[i] = second
                j = best_j
                if best < second:
                    v[j] -= second - best
                elif row_of[j] != -1:
                    # tied minima: prefer a free tying column, else stay free
                    alt = -1
                    for j2, c2 in zip(col_index[i], cost[i]):
                        if j2 != j and row_of[j2] == -1 and c2 - v[j2] == best:
                            alt = j2
                            break
                    if alt == -1:
                        next_free.append(i)
                        continue
                    j = alt
            bumped = row_of[j]
            row_of[j] = i
            col_of[i] = j
            if bumped != -1:
                col_of[bumped] = -1
                next_free.append(bumped)
        free = next_free

    # --- shortest augmenting paths -----------------------------------------
    for f in range(n):
        if col_of[f] != -1:
            continue
        dist: dict[int, float] = {}
        pred: dict[int, int] = {}
        visited: set[int] = set()
        heap: list[tuple[float, int]] = []
        for j, c in zip(col_index[f], cost[f]):
            r = c - u[f] - v[j]
            dist[j] = r
            pred[j] = f
            heapq.heappush(heap, (r, j))
        endpoint = -1
        delta = 0.0
        while heap:
            dj, j = heapq.heappop(heap)
            if j in visited or dj > dist[j]:
                continue
            visited.add(j)
            if row_of[j] == -1:
                endpoint = j
                delta = dj
                break
            i = row_of[j]
            for j2, c2 in zip(col_index[i], cost[i]):
                if j2 in visited:
                    continue
                nd = dj + (c2 - u[i] - v[j2])
                if j2 not in dist or nd < dist[j2]:
                    dist[j2] = nd
                    pred[j2] = i
                    heapq.heappush(heap, (nd, j2))
        if endpoint == -1:
            raise InfeasibleRow(f, f"no augmenting path assigns row {f}")
        # dual update over the scanned tree keeps reduced costs non-negative
        for j in visited:
            if j == endpoint:
                continue
            owner = row_of[j]
            u[owner] += delta - dist[j]
            v[j] += dist[j] - delta
        u[f] += delta
        # flip assignments along the augmenting path
        j = endpoint
        while True:
            i = pred[j]
            previous = col_of[i]
            col_of[i] = j
            row_of[j] = i
            if i == f:
                break
            j = previous

    if validate_duals:
        _assert_duals_feasible(matrix, u, v, col_of)
    return _finish(matrix, col_of)


def _assert_duals_feasible(
    matrix: SparseCostMatrix, u: list[float], v: list[float], col_of: list[int]
) -> None:
    """Optimality certificate: non-negative reduced costs everywhere, tight
    assigned arcs, and no unassigned column cheaper (by potential) than an
    assigned one.  Together these bound every other row-perfect assignment's
    cost from below by this one's."""
    eps = DUAL_FEASIBILITY_EPS
    for i in range(matrix.n_rows):
        for j, c in zip(matrix.col_index[i], matrix.cost[i]):
            slack = c - u[i] - v[j]
            if slack < -eps:
                raise AssertionError(f"dual infeasible at arc ({i}, {j}): slack {slack}")
            if col_of[i] == j and abs(slack) > eps:
                raise AssertionError(
                    f"assigned arc ({i}, {j}) is not tight: slack {slack}"
                )
    assigned = set(col_of)
    free_v = [v[j] for j in range(matrix.n_cols) if j not in assigned]
    if free_v:
        worst_assigned = max(v[j] for j in assigned)
        if worst_assigned > min(free_v) + eps:
            raise AssertionError(
                "an unassigned column has lower potential than an assigned one: "
                f"{min(free_v)} < {worst_assigned}"
            )


def solve_bruteforce(matrix: SparseCostMatrix) -> Assignment:
    """Exhaustive minimum-cost assignment over the same arc set.

    Depth-first over rows with candidate columns in ascending index order and
    strict-improvement pruning, so the first optimum found (and kept) is the
    lexicographically smallest among minimum-cost assignments.  Refuses
    instances with more than BRUTEFORCE_MAX_ROWS rows.
    """
    _check_solvable_shape(matrix)
    n = matrix.n_rows
    if n > BRUTEFORCE_MAX_ROWS:
        raise TooLarge(f"{n} rows exceed brute-force bound {BRUTEFORCE_MAX_ROWS}")
    if n == 0:
        return Assignment(row_to_col=(), total_cost=0.0)

    col_index = matrix.col_index
    cost = matrix.cost
    best_total = math.inf
    best_map: list[int] | None = None
    chosen = [-1] * n
    used: set[int] = set()

    def descend(row: int, running: float) -> None:
        nonlocal best_total, best_map
        if running >= best_total:
            return  # all remaining costs are >= 0
        if row == n:
            best_total = running
            best_map = chosen.copy()
            return
        for j, c in zip(col_index[row], cost[row]):
            if j in used:
                continue
            chosen[row] = j
            used.add(j)
            descend(row + 1, running + c)
            used.discard(j)
        chosen[row] = -1

    descend(0, 0.0)
    if best_map is None:
        raise InfeasibleRow(-1, "no complete assignment exists over the given arcs")
    return _finish(matrix, best_map)
