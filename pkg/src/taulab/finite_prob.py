"""Exact measure-theoretic kernel on finite weighted sample spaces.

Conventions
-----------
* A sample space is a finite list of atoms with strictly positive rational
  weights summing to one.  Zero-probability atoms are forbidden at
  construction, so equivalence of measures is structural and no negligible-set
  bookkeeping is ever needed.
* Time is a grid ``t_0 = 0 < t_1 < ... < t_n`` plus a genuine terminal index
  ``INF``.  A filtration is a refining sequence of partitions, one per grid
  index, plus a terminal partition refining stage ``n``.
* A process is a table of rationals with one row per grid index and one
  terminal row.  ``X_0`` is the time-0 row; the jump convention is
  ``delta_0 X = X_0`` and ``delta_INF`` is the terminal increment
  ``X_INF - X_n`` (which specific operations force to vanish where the
  no-jump-at-infinity convention applies).
* "Predictable at step k" means measurable for stage ``k - 1``; the
  left-limit index of ``t_k`` is ``k - 1``, stage ``-1`` is stage ``0`` by
  convention, and the left-limit index of ``INF`` is ``n``.

All operations are pure: inputs are never mutated and outputs are immutable,
so values can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Hashable, Iterable, Iterator, Optional, Sequence, Union

from .rationals import ONE, ZERO, Q, Rational, as_q

INF = float("inf")

Index = Union[int, float]  # grid index 0..n or INF
Vector = tuple  # one rational per atom


class FiniteProbError(Exception):
    """Base class for exact-engine errors."""


class SpaceMismatchError(FiniteProbError):
    """Objects built over different spaces or with inconsistent sizes."""


class NotAdaptedError(FiniteProbError):
    """A process failed an adaptedness requirement (distinct from False)."""


class NotStoppingTimeError(FiniteProbError):
    """A random time failed the stopping-time test for the given filtration."""


class InvariantError(FiniteProbError):
    """A construction-time invariant was violated."""


# ---------------------------------------------------------------------------
# spaces and partitions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FiniteSpace:
    """Ordered atoms with strictly positive rational weights summing to 1."""

    atoms: tuple
    weight: Vector

    def __post_init__(self):
        if len(self.atoms) != len(self.weight):
            raise SpaceMismatchError("atoms and weights differ in length")
        if len(self.atoms) == 0:
            raise InvariantError("empty sample space")
        if len(set(self.atoms)) != len(self.atoms):
            raise InvariantError("duplicate atom identifiers")
        w = tuple(as_q(x) for x in self.weight)
        object.__setattr__(self, "weight", w)
        if any(x <= 0 for x in w):
            raise InvariantError("all atom weights must be strictly positive")
        if sum(w) != 1:
            raise InvariantError("atom weights must sum exactly to 1")

    @property
    def size(self) -> int:
        return len(self.atoms)

    @cached_property
    def index(self) -> dict:
        return {a: i for i, a in enumerate(self.atoms)}

    def vector(self, fn: Callable[[Hashable], object]) -> Vector:
        return tuple(as_q(fn(a)) for a in self.atoms)

    def constant(self, value) -> Vector:
        return (as_q(value),) * self.size

    def indicator(self, atoms_in: Iterable) -> Vector:
        s = {self.index[a] for a in atoms_in}
        return tuple(ONE if i in s else ZERO for i in range(self.size))

    def expectation(self, x: Sequence, weights: Optional[Sequence] = None):
        w = self.weight if weights is None else weights
        return sum(w[i] * as_q(x[i]) for i in range(self.size))


def make_space(pairs: Iterable[tuple]) -> FiniteSpace:
    """Build a space from (atom, weight) pairs."""
    items = list(pairs)
    return FiniteSpace(
        atoms=tuple(a for a, _ in items), weight=tuple(as_q(w) for _, w in items)
    )


def uniform_space(atoms: Sequence) -> FiniteSpace:
    n = len(atoms)
    return FiniteSpace(atoms=tuple(atoms), weight=(Q(1, n),) * n)


@dataclass(frozen=True)
class Partition:
    """A sigma-algebra on a FiniteSpace as an atom -> block index map.

    Block indices are contiguous ``0..B-1`` and every block is non-empty.
    """

    space: FiniteSpace
    block_of: tuple

    def __post_init__(self):
        if len(self.block_of) != self.space.size:
            raise SpaceMismatchError("block map length != number of atoms")
        seen: list[int] = []
        for b in self.block_of:
            if not isinstance(b, int) or b < 0:
                raise InvariantError("block indices must be non-negative ints")
            if b not in seen:
                seen.append(b)
        if seen != list(range(len(seen))):
            raise InvariantError("block indices must be contiguous 0..B-1")

    @property
    def n_blocks(self) -> int:
        return max(self.block_of) + 1

    @cached_property
    def blocks(self) -> tuple:
        """Tuple of blocks, each a tuple of atom indices."""
        out: list[list[int]] = [[] for _ in range(self.n_blocks)]
        for i, b in enumerate(self.block_of):
            out[b].append(i)
        return tuple(tuple(block) for block in out)

    @cached_property
    def block_weight(self) -> Vector:
        w = self.space.weight
        return tuple(sum(w[i] for i in block) for block in self.blocks)

    def is_trivial(self) -> bool:
        return self.n_blocks == 1

    def is_discrete(self) -> bool:
        return self.n_blocks == self.space.size

    def refines(self, coarser: "Partition") -> bool:
        """True iff every block of self lies inside one block of ``coarser``."""
        _check_same_space(self.space, coarser.space)
        for block in self.blocks:
            targets = {coarser.block_of[i] for i in block}
            if len(targets) > 1:
                return False
        return True

    def measurable(self, x: Sequence) -> bool:
        """True iff ``x`` is constant on every block."""
        for block in self.blocks:
            v0 = x[block[0]]
            if any(x[i] != v0 for i in block[1:]):
                return False
        return True

    def restricted_blocks(self, subset: Iterable[int]) -> tuple:
        """Blocks of the trace partition on ``subset`` (atom indices)."""
        s = set(subset)
        out = []
        for block in self.blocks:
            inter = tuple(i for i in block if i in s)
            if inter:
                out.append(inter)
        return tuple(out)

    def trace_equals(self, other: "Partition", subset: Iterable[int]) -> bool:
        """Equality of trace sigma-algebras on ``subset``.

        On a finite space two traces agree iff the restricted partitions are
        identical as set families.
        """
        s = sorted(set(subset))
        return set(self.restricted_blocks(s)) == set(other.restricted_blocks(s))

    def trace_refines(self, coarser: "Partition", subset: Iterable[int]) -> bool:
        s = set(subset)
        coarse_of = {}
        for bi, block in enumerate(coarser.restricted_blocks(s)):
            for i in block:
                coarse_of[i] = bi
        for block in self.restricted_blocks(s):
            if len({coarse_of[i] for i in block}) > 1:
                return False
        return True


def trivial_partition(space: FiniteSpace) -> Partition:
    return Partition(space, (0,) * space.size)


def discrete_partition(space: FiniteSpace) -> Partition:
    return Partition(space, tuple(range(space.size)))


def partition_from_keys(space: FiniteSpace, keys: Sequence) -> Partition:
    """Group atoms by key; blocks numbered by first occurrence (canonical)."""
    ids: dict = {}
    block_of = []
    for k in keys:
        if k not in ids:
            ids[k] = len(ids)
        block_of.append(ids[k])
    return Partition(space, tuple(block_of))


def generate_partition(space: FiniteSpace, generators: Iterable) -> Partition:
    """Coarsest partition making every generator block-constant.

    Generators may be value vectors (one entry per atom), events given as
    sets/frozensets of atoms, or existing partitions.  With no generators the
    trivial partition is returned.  Idempotent by construction.
    """
    gens = list(generators)
    keys: list[tuple] = [() for _ in range(space.size)]
    for g in gens:
        if isinstance(g, Partition):
            _check_same_space(space, g.space)
            col: Sequence = g.block_of
        elif isinstance(g, (set, frozenset)):
            col = space.indicator(g)
        else:
            if len(g) != space.size:
                raise SpaceMismatchError("generator length != number of atoms")
            col = tuple(g)
        keys = [keys[i] + (col[i],) for i in range(space.size)]
    return partition_from_keys(space, keys)


def _check_same_space(a: FiniteSpace, b: FiniteSpace) -> None:
    if a is not b and (a.atoms != b.atoms or a.weight != b.weight):
        raise SpaceMismatchError("objects live on different spaces")


# ---------------------------------------------------------------------------
# conditional expectation
# ---------------------------------------------------------------------------


def cond_exp(
    x: Sequence, partition: Partition, weights: Optional[Sequence] = None
) -> Vector:
    """Conditional expectation of ``x`` given ``partition`` under ``weights``.

    The output is constant on each block, equal to the weighted block average.
    The tower property holds exactly for any refinement pair.  Weights must be
    strictly positive; the default weights are validated at space
    construction and explicit ones at their own construction sites, so only a
    dimension check runs here.
    """
    space = partition.space
    if len(x) != space.size:
        raise SpaceMismatchError("variable length != number of atoms")
    w = space.weight if weights is None else weights
    if len(w) != space.size:
        raise SpaceMismatchError("weight table length != number of atoms")
    out = [ZERO] * space.size
    for block in partition.blocks:
        tot = ZERO
        acc = ZERO
        for i in block:
            wi = w[i]
            tot += wi
            acc += wi * x[i]
        if tot <= 0:
            raise InvariantError("conditioning weights must be strictly positive")
        avg = acc / tot
        for i in block:
            out[i] = avg
    return tuple(out)


# ---------------------------------------------------------------------------
# filtrations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Filtration:
    """Refining partitions over the grid, plus a terminal stage for INF."""

    space: FiniteSpace
    times: tuple  # t_0 = 0 < ... < t_n, rationals
    stages: tuple  # one Partition per grid index
    terminal: Partition

    def __post_init__(self):
        if len(self.stages) != len(self.times):
            raise SpaceMismatchError("one stage per grid time required")
        if len(self.times) == 0:
            raise InvariantError("grid must contain t_0 = 0")
        t = tuple(as_q(v) for v in self.times)
        object.__setattr__(self, "times", t)
        if t[0] != 0:
            raise InvariantError("grid must start at t_0 = 0")
        if any(t[i] >= t[i + 1] for i in range(len(t) - 1)):
            raise InvariantError("grid times must be strictly increasing")
        for st in self.stages + (self.terminal,):
            _check_same_space(self.space, st.space)
        for k in range(1, len(self.stages)):
            if not self.stages[k].refines(self.stages[k - 1]):
                raise InvariantError(f"stage {k} does not refine stage {k - 1}")
        if not self.terminal.refines(self.stages[-1]):
            raise InvariantError("terminal stage does not refine stage n")

    @property
    def n(self) -> int:
        return len(self.stages) - 1

    def indices(self, include_zero: bool = True) -> Iterator[Index]:
        if include_zero:
            yield 0
        for k in range(1, self.n + 1):
            yield k
        yield INF

    def stage(self, k: Index) -> Partition:
        if k == INF:
            return self.terminal
        return self.stages[int(k)]

    def prev(self, k: Index) -> Index:
        """Left-limit index: k-1 for finite k >= 1, 0 for 0, n for INF."""
        if k == INF:
            return self.n
        k = int(k)
        return max(k - 1, 0)

    def stage_before(self, k: Index) -> Partition:
        return self.stage(self.prev(k))


def constant_filtration(space: FiniteSpace, n: int, partition: Partition) -> Filtration:
    return Filtration(
        space=space,
        times=tuple(range(n + 1)),
        stages=(partition,) * (n + 1),
        terminal=partition,
    )


# ---------------------------------------------------------------------------
# process tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProcessTable:
    """Grid-index x atom matrix of rationals, terminal row included."""

    space: FiniteSpace
    rows: tuple  # n+2 rows: index 0..n then the INF row

    def __post_init__(self):
        if len(self.rows) < 2:
            raise InvariantError("a process needs a time-0 row and an INF row")
        rows = self.rows
        # internal constructions are homogeneous rational tuples already;
        # anything else (user input) is coerced entry-wise
        clean = isinstance(rows, tuple) and all(
            type(row) is tuple and (not row or type(row[0]) is Rational)
            for row in rows
        )
        if not clean:
            rows = tuple(tuple(as_q(v) for v in row) for row in rows)
            object.__setattr__(self, "rows", rows)
        for row in rows:
            if len(row) != self.space.size:
                raise SpaceMismatchError("row length != number of atoms")

    @property
    def n(self) -> int:
        return len(self.rows) - 2

    def row(self, k: Index) -> Vector:
        if k == INF:
            return self.rows[-1]
        return self.rows[int(k)]

    def __getitem__(self, k: Index) -> Vector:
        return self.row(k)

    def increment(self, k: Index) -> Vector:
        """delta_k X for k >= 1 (finite) or the terminal increment for INF."""
        cache = self.__dict__.setdefault("_increments", {})
        got = cache.get(k)
        if got is not None:
            return got
        if k == INF:
            prev = self.rows[-2]
            cur = self.rows[-1]
        else:
            kk = int(k)
            if kk < 1:
                raise IndexError("increments start at step 1")
            prev, cur = self.rows[kk - 1], self.rows[kk]
        out = tuple(c - p for p, c in zip(prev, cur))
        cache[k] = out
        return out

    def is_adapted(self, filtration: Filtration) -> bool:
        _check_same_space(self.space, filtration.space)
        if self.n != filtration.n:
            raise SpaceMismatchError("process and filtration grids differ")
        for k in filtration.indices():
            if not filtration.stage(k).measurable(self.row(k)):
                return False
        return True

    def is_predictable(self, filtration: Filtration) -> bool:
        """Row k measurable for stage k-1 (stage 0 at k = 0, stage n at INF)."""
        _check_same_space(self.space, filtration.space)
        if self.n != filtration.n:
            raise SpaceMismatchError("process and filtration grids differ")
        for k in filtration.indices():
            if not filtration.stage_before(k).measurable(self.row(k)):
                return False
        return True

    def map(self, fn: Callable) -> "ProcessTable":
        return ProcessTable(
            self.space, tuple(tuple(fn(v) for v in row) for row in self.rows)
        )

    def __add__(self, other: "ProcessTable") -> "ProcessTable":
        _check_same_space(self.space, other.space)
        return ProcessTable(
            self.space,
            tuple(
                tuple(a + b for a, b in zip(ra, rb))
                for ra, rb in zip(self.rows, other.rows)
            ),
        )

    def __sub__(self, other: "ProcessTable") -> "ProcessTable":
        return self + other.scale(-1)

    def scale(self, c) -> "ProcessTable":
        c = as_q(c)
        return self.map(lambda v: c * v)

    def mul(self, other: "ProcessTable") -> "ProcessTable":
        _check_same_space(self.space, other.space)
        return ProcessTable(
            self.space,
            tuple(
                tuple(a * b for a, b in zip(ra, rb))
                for ra, rb in zip(self.rows, other.rows)
            ),
        )

    def value_at(self, time: "StoppingTime") -> Vector:
        """Pathwise evaluation X_T: atom a -> X[T(a)](a)."""
        _check_same_space(self.space, time.space)
        return tuple(self.row(time.value[i])[i] for i in range(self.space.size))

    def stopped(self, time: "StoppingTime") -> "ProcessTable":
        """X stopped at T: rows k -> X_{k and T}."""
        _check_same_space(self.space, time.space)
        out = []
        for k in list(range(self.n + 1)) + [INF]:
            out.append(
                tuple(
                    self.row(min(k, time.value[i]))[i]
                    for i in range(self.space.size)
                )
            )
        return ProcessTable(self.space, tuple(out))

    def max_abs(self):
        return max(abs(v) for row in self.rows for v in row)


def table_constant(space: FiniteSpace, n: int, value) -> ProcessTable:
    v = as_q(value)
    return ProcessTable(space, tuple((v,) * space.size for _ in range(n + 2)))


def table_from_rows(space: FiniteSpace, rows: Sequence[Sequence]) -> ProcessTable:
    return ProcessTable(space, tuple(tuple(as_q(v) for v in row) for row in rows))


def martingale_closure(
    space: FiniteSpace,
    filtration: Filtration,
    terminal_value: Sequence,
    weights: Optional[Sequence] = None,
) -> ProcessTable:
    """The martingale ``X_k = E[zeta | stage k]`` closing the given variable."""
    rows = [
        cond_exp(terminal_value, filtration.stage(k), weights)
        for k in range(filtration.n + 1)
    ]
    rows.append(cond_exp(terminal_value, filtration.terminal, weights))
    return ProcessTable(space, tuple(rows))


def stochastic_integral(integrand: ProcessTable, integrator: ProcessTable) -> ProcessTable:
    """Finite-sum integral ``(K . X)_k = sum_{j<=k} K_j delta_j X``, zero at 0.

    The sum never references a filtration, which is exactly why the integral
    is the same process under any pair (filtration, measure) making ``K``
    predictable and ``X`` adapted.
    """
    _check_same_space(integrand.space, integrator.space)
    size = integrand.space.size
    n = integrator.n
    acc = [ZERO] * size
    rows = [tuple(acc)]
    for k in list(range(1, n + 1)) + [INF]:
        kk = integrand.row(k)
        dx = integrator.increment(k)
        acc = [acc[i] + kk[i] * dx[i] for i in range(size)]
        rows.append(tuple(acc))
    return ProcessTable(integrand.space, tuple(rows))


# ---------------------------------------------------------------------------
# stopping times
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StoppingTime:
    """Atom -> grid index in {0..n, INF}."""

    space: FiniteSpace
    value: tuple

    def __post_init__(self):
        if len(self.value) != self.space.size:
            raise SpaceMismatchError("stopping-time length != number of atoms")
        for v in self.value:
            if v != INF and (not isinstance(v, int) or v < 0):
                raise InvariantError("values must be grid indices or INF")

    def is_stopping_time(self, filtration: Filtration) -> bool:
        """{T <= k} must be a union of stage-k blocks for every k."""
        _check_same_space(self.space, filtration.space)
        for k in range(filtration.n + 1):
            ind = tuple(ONE if self.value[i] <= k else ZERO for i in range(self.space.size))
            if not filtration.stage(k).measurable(ind):
                return False
        return True

    def require_stopping_time(self, filtration: Filtration) -> None:
        if not self.is_stopping_time(filtration):
            raise NotStoppingTimeError("not a stopping time of the filtration")

    def vmax(self, other: "StoppingTime") -> "StoppingTime":
        _check_same_space(self.space, other.space)
        return StoppingTime(
            self.space, tuple(max(a, b) for a, b in zip(self.value, other.value))
        )

    def vmin(self, other: "StoppingTime") -> "StoppingTime":
        _check_same_space(self.space, other.space)
        return StoppingTime(
            self.space, tuple(min(a, b) for a, b in zip(self.value, other.value))
        )

    def le(self, other: "StoppingTime") -> bool:
        return all(a <= b for a, b in zip(self.value, other.value))


def constant_time(space: FiniteSpace, k: Index) -> StoppingTime:
    if k != INF:
        k = int(k)
    return StoppingTime(space, (k,) * space.size)


def sigma_at(
    time: StoppingTime,
    filtration: Filtration,
    kind: str = "at",
    require_stopping: bool = True,
) -> Partition:
    """Sigma-algebra at (or just before) a random time, as a partition.

    ``kind="at"`` is generated by evaluations ``U_T`` of adapted processes
    plus full terminal information on {T = INF}; ``kind="before"`` uses
    predictable evaluations, i.e. the stage index shifted down by one with
    the stage-(-1) = stage-0 convention.  Atoms are equivalent iff they carry
    the same time value and lie in the same block of the referenced stage.
    """
    if kind not in ("at", "before"):
        raise ValueError("kind must be 'at' or 'before'")
    if require_stopping:
        time.require_stopping_time(filtration)
    keys = []
    for i in range(time.space.size):
        v = time.value[i]
        if v == INF:
            ref = filtration.terminal
        elif kind == "at":
            ref = filtration.stage(v)
        else:
            ref = filtration.stage_before(v)
        keys.append((v, ref.block_of[i]))
    return partition_from_keys(time.space, keys)


# ---------------------------------------------------------------------------
# martingales, Doob decomposition, brackets, dual projections
# ---------------------------------------------------------------------------


def _require_adapted(x: ProcessTable, filtration: Filtration) -> None:
    if not x.is_adapted(filtration):
        raise NotAdaptedError("process is not adapted to the filtration")


def is_martingale(
    x: ProcessTable, filtration: Filtration, weights: Optional[Sequence] = None
) -> bool:
    """Exact martingale test: E[delta_k X | stage k-1] = 0 for every step.

    Non-adapted input raises ``NotAdaptedError`` rather than returning False.
    """
    _require_adapted(x, filtration)
    space = filtration.space
    w = space.weight if weights is None else tuple(as_q(v) for v in weights)
    for k in list(range(1, filtration.n + 1)) + [INF]:
        dx = x.increment(k)
        for block in filtration.stage_before(k).blocks:
            if sum(w[i] * dx[i] for i in block) != 0:
                return False
    return True


def martingale_defect(
    x: ProcessTable, filtration: Filtration, weights: Optional[Sequence] = None
) -> Optional[tuple]:
    """First failing (step, block atoms) of the martingale test, or None."""
    _require_adapted(x, filtration)
    space = filtration.space
    w = space.weight if weights is None else tuple(as_q(v) for v in weights)
    for k in list(range(1, filtration.n + 1)) + [INF]:
        dx = x.increment(k)
        for block in filtration.stage_before(k).blocks:
            if sum(w[i] * dx[i] for i in block) != 0:
                return (k, tuple(space.atoms[i] for i in block))
    return None


def doob_decomposition(
    x: ProcessTable, filtration: Filtration, weights: Optional[Sequence] = None
) -> tuple[ProcessTable, ProcessTable]:
    """Unique decomposition ``X = M - A`` with M a martingale, A predictable,
    ``A_0 = 0`` and ``delta_k A = -E[delta_k X | stage k-1]``."""
    _require_adapted(x, filtration)
    space = filtration.space
    size = space.size
    acc = [ZERO] * size
    a_rows = [tuple(acc)]
    for k in list(range(1, filtration.n + 1)) + [INF]:
        drift = cond_exp(x.increment(k), filtration.stage_before(k), weights)
        acc = [acc[i] - drift[i] for i in range(size)]
        a_rows.append(tuple(acc))
    a = ProcessTable(space, tuple(a_rows))
    m = x + a
    return m, a


def predictable_bracket(
    u: ProcessTable,
    v: ProcessTable,
    filtration: Filtration,
    weights: Optional[Sequence] = None,
) -> ProcessTable:
    """Discrete predictable bracket, ``delta_k <U,V> = E[dU dV | stage k-1]``.

    Bilinear, symmetric, and increasing in k when U = V.  Starts at 0.
    """
    _require_adapted(u, filtration)
    _require_adapted(v, filtration)
    space = filtration.space
    size = space.size
    acc = [ZERO] * size
    rows = [tuple(acc)]
    for k in list(range(1, filtration.n + 1)) + [INF]:
        du = u.increment(k)
        dv = v.increment(k)
        prod = tuple(du[i] * dv[i] for i in range(size))
        ce = cond_exp(prod, filtration.stage_before(k), weights)
        acc = [acc[i] + ce[i] for i in range(size)]
        rows.append(tuple(acc))
    return ProcessTable(space, tuple(rows))


def optional_bracket(u: ProcessTable, v: ProcessTable) -> ProcessTable:
    """Pathwise bracket ``[U,V]_k = sum_{j<=k} dU_j dV_j`` (no measure)."""
    _check_same_space(u.space, v.space)
    size = u.space.size
    acc = [ZERO] * size
    rows = [tuple(acc)]
    for k in list(range(1, u.n + 1)) + [INF]:
        du = u.increment(k)
        dv = v.increment(k)
        acc = [acc[i] + du[i] * dv[i] for i in range(size)]
        rows.append(tuple(acc))
    return ProcessTable(u.space, tuple(rows))


def indicator_process(
    space: FiniteSpace, n: int, tau: StoppingTime, strict_positive: bool = True
) -> ProcessTable:
    """The one-jump table ``1_{tau > 0} 1_{[tau, oo)}`` on the grid.

    The terminal row equals row n: by the no-jump-at-infinity convention a
    time tau = INF never registers a default.
    """
    rows = []
    for k in range(n + 1):
        rows.append(
            tuple(
                ONE
                if tau.value[i] <= k and (tau.value[i] > 0 or not strict_positive)
                else ZERO
                for i in range(space.size)
            )
        )
    rows.append(rows[-1])
    return ProcessTable(space, tuple(rows))


def dual_projections(
    tau: StoppingTime, filtration: Filtration, weights: Optional[Sequence] = None
) -> tuple[ProcessTable, ProcessTable]:
    """Predictable and optional dual projections of ``1_{tau>0} 1_{[tau,oo)}``.

    ``delta_k A = E[1_{tau = t_k} | stage k-1]`` and
    ``delta_k A_hat = E[1_{tau = t_k} | stage k]`` for finite k >= 1; both are
    flat across the terminal step, and ``A_hat - A`` is an exact martingale.
    """
    space = filtration.space
    for v in tau.value:
        if v != INF and not (0 <= v <= filtration.n):
            raise NotStoppingTimeError("time takes values off the grid")
    size = space.size
    acc_a = [ZERO] * size
    acc_o = [ZERO] * size
    rows_a = [tuple(acc_a)]
    rows_o = [tuple(acc_o)]
    for k in range(1, filtration.n + 1):
        jump = tuple(ONE if tau.value[i] == k else ZERO for i in range(size))
        da = cond_exp(jump, filtration.stage_before(k), weights)
        do = cond_exp(jump, filtration.stage(k), weights)
        acc_a = [acc_a[i] + da[i] for i in range(size)]
        acc_o = [acc_o[i] + do[i] for i in range(size)]
        rows_a.append(tuple(acc_a))
        rows_o.append(tuple(acc_o))
    rows_a.append(rows_a[-1])
    rows_o.append(rows_o[-1])
    return ProcessTable(space, tuple(rows_a)), ProcessTable(space, tuple(rows_o))
