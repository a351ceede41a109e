"""Progressive enlargement of a finite filtration by a random time.

The enlarged space is the product ``[grid + {INF}] x Omega`` carrying the
canonical time coordinate ``tau(k, w) = t_k``, the pulled-back base filtration
``F_hat`` and the enlarged filtration ``G``.  Stage k of ``G`` is generated by
stage k of ``F_hat`` together with the default information observable at t_k:
which of the events {tau = t_0}, ..., {tau = t_k} occurred, if any.  On the
grid this is the right-continuous enlargement: it is the smallest filtration
containing ``F_hat`` that makes ``tau`` a stopping time.

Sigma-algebras at random times follow the optional/predictable evaluation
convention of :func:`taulab.finite_prob.sigma_at`.  Several statements below
are equalities of *restricted* set families ``D . T``; with every atom of
positive weight these are implemented as equalities of partition traces on D.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Optional, Sequence

from .finite_prob import (
    INF,
    FiniteSpace,
    Filtration,
    InvariantError,
    Partition,
    ProcessTable,
    StoppingTime,
    _check_same_space,
    cond_exp,
    constant_time,
    generate_partition,
    is_martingale,
    martingale_closure,
    martingale_defect,
    partition_from_keys,
    sigma_at,
)
from .rationals import ONE, ZERO, as_q

ALIVE = "alive"  # marker for "no default observed yet" in stage generators


class KernelError(InvariantError):
    """A conditional-law row is malformed."""


@dataclass(frozen=True)
class DefaultKernel:
    """Conditional law of the default time given full base information.

    One row per base atom; entry k is the probability of ``tau = t_k`` for
    k = 0..n, and the last entry is the probability of ``tau = INF``.
    """

    rows: tuple  # per base atom: tuple of n+2 rationals

    def __post_init__(self):
        rows = tuple(tuple(as_q(p) for p in row) for row in self.rows)
        object.__setattr__(self, "rows", rows)
        width = {len(r) for r in rows}
        if len(width) != 1:
            raise KernelError("kernel rows have inconsistent lengths")
        for j, row in enumerate(rows):
            if any(p < 0 for p in row):
                raise KernelError(f"kernel row {j} has a negative entry")
            if sum(row) != 1:
                raise KernelError(f"kernel row {j} does not sum to 1")

    @property
    def n(self) -> int:
        return len(self.rows[0]) - 2

    def prob(self, base_index: int, k) -> object:
        if k == INF:
            return self.rows[base_index][-1]
        return self.rows[base_index][int(k)]


def point_mass_kernel(n: int, values: Sequence) -> DefaultKernel:
    """Kernel putting all mass on a prescribed grid index per base atom."""
    rows = []
    for v in values:
        row = [ZERO] * (n + 2)
        row[-1 if v == INF else int(v)] = ONE
        rows.append(tuple(row))
    return DefaultKernel(tuple(rows))


@dataclass(frozen=True)
class EnlargedSpace:
    """Product space with tau, the lifted base filtration and the enlargement."""

    base: FiniteSpace
    base_filtration: Filtration
    kernel: DefaultKernel
    product: FiniteSpace
    proj: tuple  # product atom index -> base atom index
    tau: StoppingTime
    lifted_F: Filtration
    G: Filtration
    model_kind: str = "custom"

    @property
    def n(self) -> int:
        return self.base_filtration.n

    @property
    def grid_indices(self) -> list:
        return list(range(self.n + 1)) + [INF]

    # -- lifting ------------------------------------------------------------

    def lift_vector(self, x: Sequence) -> tuple:
        return tuple(as_q(x[j]) for j in self.proj)

    def lift_partition(self, p: Partition) -> Partition:
        return partition_from_keys(
            self.product, tuple(p.block_of[j] for j in self.proj)
        )

    def lift_table(self, x: ProcessTable) -> ProcessTable:
        return ProcessTable(self.product, tuple(self.lift_vector(r) for r in x.rows))

    def lift_time(self, t: StoppingTime) -> StoppingTime:
        return StoppingTime(self.product, tuple(t.value[j] for j in self.proj))

    # -- tau geometry ---------------------------------------------------------

    @cached_property
    def tau_values(self) -> tuple:
        return self.tau.value

    def alive_mask(self, k) -> tuple:
        """Atom indices with ``t_k <= tau`` (the step-k hazard support)."""
        return tuple(
            i for i, v in enumerate(self.tau_values) if v >= k or v == INF
        )

    def after_mask(self, k) -> tuple:
        """Atom indices with ``tau < t_k``."""
        if k == INF:
            return tuple(i for i, v in enumerate(self.tau_values) if v != INF)
        return tuple(i for i, v in enumerate(self.tau_values) if v < k)

    @cached_property
    def interior_default_atoms(self) -> tuple:
        """Atom indices in {0 < tau < INF}."""
        return tuple(
            i for i, v in enumerate(self.tau_values) if v != INF and v > 0
        )

    def default_indicator(self) -> ProcessTable:
        """H = 1_{[tau, oo)} with terminal row equal to row n."""
        rows = []
        for k in range(self.n + 1):
            rows.append(
                tuple(
                    ONE if self.tau_values[i] <= k else ZERO
                    for i in range(self.product.size)
                )
            )
        rows.append(rows[-1])
        return ProcessTable(self.product, tuple(rows))

    # -- sigma-algebras at random times --------------------------------------

    def g_at(self, time: StoppingTime, require_stopping: bool = True) -> Partition:
        return sigma_at(time, self.G, "at", require_stopping)

    def g_before(self, time: StoppingTime, require_stopping: bool = True) -> Partition:
        return sigma_at(time, self.G, "before", require_stopping)

    def fhat_at(self, time: StoppingTime) -> Partition:
        return sigma_at(time, self.lifted_F, "at", require_stopping=False)

    def fhat_before(self, time: StoppingTime) -> Partition:
        return sigma_at(time, self.lifted_F, "before", require_stopping=False)

    def sigma_tau(self) -> Partition:
        return partition_from_keys(self.product, self.tau_values)


def build_product_space(
    base: FiniteSpace,
    filtration: Filtration,
    kernel: DefaultKernel,
    model_kind: str = "custom",
) -> EnlargedSpace:
    """Assemble the enlarged space from a base model and a default kernel.

    Zero-probability (k, w) pairs are dropped.  The pullback preserves the
    base measure exactly, which is asserted, and stage k of G is generated by
    lifted stage k together with the observed default state at t_k.
    """
    _check_same_space(base, filtration.space)
    if kernel.n != filtration.n:
        raise KernelError("kernel and filtration grids differ")
    n = filtration.n
    atoms = []
    weights = []
    proj = []
    taus = []
    for j, w in enumerate(base.weight):
        for k in list(range(n + 1)) + [INF]:
            p = kernel.prob(j, k)
            if p == 0:
                continue
            atoms.append((k, base.atoms[j]))
            weights.append(w * p)
            proj.append(j)
            taus.append(k if k == INF else int(k))
    product = FiniteSpace(tuple(atoms), tuple(weights))
    proj_t = tuple(proj)

    def lift(p: Partition) -> Partition:
        return partition_from_keys(product, tuple(p.block_of[j] for j in proj_t))

    lifted_stages = tuple(lift(filtration.stage(k)) for k in range(n + 1))
    lifted_terminal = lift(filtration.terminal)
    lifted_F = Filtration(product, filtration.times, lifted_stages, lifted_terminal)

    # restriction condition: pulled-back weights reproduce the base measure
    for j in range(base.size):
        total = sum(weights[i] for i in range(len(atoms)) if proj_t[i] == j)
        if total != base.weight[j]:
            raise KernelError("pullback failed to preserve the base measure")

    tau = StoppingTime(product, tuple(taus))
    g_stages = []
    for k in range(n + 1):
        state = tuple(
            tau.value[i] if tau.value[i] <= k else ALIVE
            for i in range(product.size)
        )
        g_stages.append(generate_partition(product, [lifted_stages[k], state]))
    g_terminal = generate_partition(product, [lifted_terminal, tau.value])
    G = Filtration(product, filtration.times, tuple(g_stages), g_terminal)

    return EnlargedSpace(
        base=base,
        base_filtration=filtration,
        kernel=kernel,
        product=product,
        proj=proj_t,
        tau=tau,
        lifted_F=lifted_F,
        G=G,
        model_kind=model_kind,
    )


# ---------------------------------------------------------------------------
# G*_T and fragment filtrations
# ---------------------------------------------------------------------------


def g_star(space: EnlargedSpace, time: StoppingTime, require_stopping: bool = True) -> Partition:
    """The sigma-algebra between G_{T-} and G_T built from three pieces:
    F_hat_T on {T < tau}, sigma(tau) v F_hat_T on {tau <= T < INF} and
    sigma(tau) v F_hat_INF on {T = INF}."""
    if require_stopping:
        time.require_stopping_time(space.G)
    fhat_t = space.fhat_at(time)
    term = space.lifted_F.terminal
    keys = []
    for i in range(space.product.size):
        tv, sv = space.tau_values[i], time.value[i]
        if sv == INF:
            keys.append((2, space.tau_values[i], term.block_of[i]))
        elif sv < tv:
            keys.append((0, fhat_t.block_of[i]))
        else:
            keys.append((1, space.tau_values[i], fhat_t.block_of[i]))
    return partition_from_keys(space.product, keys)


def g_star_mutated(space: EnlargedSpace, time: StoppingTime, require_stopping: bool = True) -> Partition:
    """Deliberately corrupted variant dropping the sigma(tau) generator on the
    middle piece.  Exists only as a mutation oracle for the identity checks."""
    if require_stopping:
        time.require_stopping_time(space.G)
    fhat_t = space.fhat_at(time)
    term = space.lifted_F.terminal
    keys = []
    for i in range(space.product.size):
        tv, sv = space.tau_values[i], time.value[i]
        if sv == INF:
            keys.append((2, space.tau_values[i], term.block_of[i]))
        elif sv < tv:
            keys.append((0, fhat_t.block_of[i]))
        else:
            keys.append((1, fhat_t.block_of[i]))
    return partition_from_keys(space.product, keys)


def fragment_stages(
    space: EnlargedSpace,
    start: StoppingTime,
    end: StoppingTime,
    gstar_fn: Callable = g_star,
) -> tuple[list, Partition, StoppingTime]:
    """Raw stage partitions of ``G^(S,T]`` (general S, T via T' = S v T).

    Stage t is G*_{T'} on {T' <= S v t} and G_{S v t} on {S v t < T'}; the
    terminal stage is G*_{T'}.
    """
    s, t = start, start.vmax(end)
    gstar_t = gstar_fn(space, t)
    stages = []
    for k in range(space.n + 1):
        svk = s.vmax(constant_time(space.product, k))
        g_svk = space.g_at(svk)
        keys = []
        for i in range(space.product.size):
            if t.value[i] <= svk.value[i]:
                keys.append((0, gstar_t.block_of[i]))
            else:
                keys.append((1, g_svk.block_of[i]))
        stages.append(partition_from_keys(space.product, keys))
    return stages, gstar_t, t


def fragment_filtration(
    space: EnlargedSpace, start: StoppingTime, end: StoppingTime
) -> Filtration:
    """The filtration agreeing with G strictly inside (S, T] and collapsing
    to G*_T at and after T.  Inputs are G-stopping times (checked)."""
    start.require_stopping_time(space.G)
    end.require_stopping_time(space.G)
    stages, terminal, _ = fragment_stages(space, start, end)
    return Filtration(space.product, space.base_filtration.times, tuple(stages), terminal)


def fragment_process(
    x: ProcessTable, start: StoppingTime, end: StoppingTime
) -> ProcessTable:
    """``X^(S,T]_t = X_{(S v t) and T'} - X_S`` with T' = S v T."""
    _check_same_space(x.space, start.space)
    s, t = start, start.vmax(end)
    x_s = x.value_at(s)
    rows = []
    for k in list(range(x.n + 1)) + [INF]:
        row = []
        for i in range(x.space.size):
            idx = min(max(s.value[i], k), t.value[i])
            row.append(x.row(idx)[i] - x_s[i])
        rows.append(tuple(row))
    return ProcessTable(x.space, tuple(rows))


def gtau_equality(space: EnlargedSpace) -> bool:
    """True iff the traces of G_tau and G_{tau-} coincide on {0 < tau < INF}."""
    d = space.interior_default_atoms
    if not d:
        return True
    at = space.g_at(space.tau)
    before = space.g_before(space.tau)
    return at.trace_equals(before, d)


# ---------------------------------------------------------------------------
# identity checks
# ---------------------------------------------------------------------------


@dataclass
class IdentityResult:
    name: str
    passed: bool
    witness: Optional[str] = None


@dataclass
class AppendixReport:
    results: list = field(default_factory=list)

    def add(self, name: str, passed: bool, witness: Optional[str] = None) -> None:
        self.results.append(IdentityResult(name, passed, witness))

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.results)

    def failures(self) -> list:
        return [r for r in self.results if not r.passed]

    def as_dict(self) -> dict:
        return {
            r.name: {"passed": r.passed, "witness": r.witness} for r in self.results
        }


def _trace_witness(space: EnlargedSpace, p1: Partition, p2: Partition, subset) -> Optional[str]:
    s = sorted(set(subset))
    b1 = set(p1.restricted_blocks(s))
    b2 = set(p2.restricted_blocks(s))
    if b1 == b2:
        return None
    diff = (b1 - b2) or (b2 - b1)
    block = sorted(diff, key=lambda b: (len(b), b))[0]
    names = [str(space.product.atoms[i]) for i in block]
    return "trace block {" + ", ".join(names) + "} present on one side only"


def _piecewise_trace_check(
    space: EnlargedSpace,
    report: AppendixReport,
    name: str,
    target: Partition,
    pieces: Sequence[tuple],
) -> None:
    """Check trace equality of ``target`` against a reference per piece."""
    for label, subset, reference in pieces:
        subset = tuple(subset)
        if not subset:
            continue
        w = _trace_witness(space, target, reference, subset)
        if w is not None:
            report.add(f"{name}[{label}]", False, w)
            return
    report.add(name, True)


def _join_with_tau(space: EnlargedSpace, p: Partition) -> Partition:
    return generate_partition(space.product, [p, space.tau_values])


def _fhat_before_with_state(space: EnlargedSpace, time: StoppingTime) -> Partition:
    """F_hat just before T, joined with the default state observable there.

    For T(a) >= 1 the state is constant on {T <= tau} and tau-measurable on
    {tau < T}, so the join is invisible in the swing decompositions; at the
    T = 0 boundary it realizes the stage-minus-one convention, under which
    the time-0 default indicator is already known "just before" 0.
    """
    fb = space.fhat_before(time)
    n = space.n
    keys = []
    for i in range(space.product.size):
        v = time.value[i]
        prev = n if v == INF else max(int(v) - 1, 0)
        tv = space.tau_values[i]
        state = tv if tv <= prev else ALIVE
        keys.append((fb.block_of[i], state))
    return partition_from_keys(space.product, keys)


def check_appendix_identities(
    space: EnlargedSpace,
    start: StoppingTime,
    end: StoppingTime,
    gstar_fn: Callable = g_star,
    martingale_basis: Optional[Sequence[ProcessTable]] = None,
) -> AppendixReport:
    """Exact verification of the structural identities relating G, G*, G_{T-}
    and the fragment filtration, reported one boolean per identity with a
    witness set on failure.

    All restricted-family statements are checked as partition-trace
    equalities piece by piece.
    """
    start.require_stopping_time(space.G)
    end.require_stopping_time(space.G)
    s, t = start, start.vmax(end)
    report = AppendixReport()
    size = space.product.size
    tauv = space.tau_values

    # --- the two decompositions of G_{T-} -----------------------------------
    g_before_t = space.g_before(t)
    fb = _fhat_before_with_state(space, t)
    fb_tau = _join_with_tau(space, fb)
    term_tau = _join_with_tau(space, space.lifted_F.terminal)
    at_inf = tuple(i for i in range(size) if t.value[i] == INF)
    _piecewise_trace_check(
        space,
        report,
        "swing-first",
        g_before_t,
        [
            (
                "T<=tau,T<inf",
                (i for i in range(size) if t.value[i] <= tauv[i] and t.value[i] != INF),
                fb,
            ),
            (
                "tau<T<inf",
                (i for i in range(size) if tauv[i] < t.value[i] != INF),
                fb_tau,
            ),
            ("T=inf", at_inf, term_tau),
        ],
    )
    _piecewise_trace_check(
        space,
        report,
        "swing-second",
        g_before_t,
        [
            ("T<tau", (i for i in range(size) if t.value[i] < tauv[i]), fb),
            (
                "tau<=T<inf",
                (i for i in range(size) if tauv[i] <= t.value[i] != INF),
                fb_tau,
            ),
            ("T=inf", at_inf, term_tau),
        ],
    )

    # --- G_{T-} subset G*_T subset G_T (as refinements) ----------------------
    gstar_t = gstar_fn(space, t)
    g_at_t = space.g_at(t)
    ok = gstar_t.refines(g_before_t) and g_at_t.refines(gstar_t)
    report.add(
        "gstar-sandwich",
        ok,
        None if ok else "refinement chain G_{T-} <= G*_T <= G_T broken",
    )

    # --- splitting of G*_{S v T} ---------------------------------------------
    gstar_svt = gstar_fn(space, s.vmax(end))
    gstar_s = gstar_fn(space, s)
    gstar_e = gstar_fn(space, end)
    _piecewise_trace_check(
        space,
        report,
        "gstar-split",
        gstar_svt,
        [
            ("S<T", (i for i in range(size) if s.value[i] < end.value[i]), gstar_e),
            ("T<=S", (i for i in range(size) if end.value[i] <= s.value[i]), gstar_s),
        ],
    )

    # --- the fragment family is a filtration (right-continuity is vacuous) ---
    stages, terminal, _ = fragment_stages(space, s, end, gstar_fn)
    frag_ok = all(
        stages[k + 1].refines(stages[k]) for k in range(len(stages) - 1)
    ) and terminal.refines(stages[-1])
    report.add(
        "fragment-filtration",
        frag_ok,
        None if frag_ok else "fragment stages fail the refinement invariant",
    )
    if not frag_ok:
        return report
    frag = Filtration(
        space.product, space.base_filtration.times, tuple(stages), terminal
    )

    # --- stage values at stopping times between S and T ----------------------
    ok_t = sigma_at(t, frag, "at").block_of == gstar_t.block_of
    report.add(
        "fragment-at-T",
        ok_t,
        None if ok_t else "fragment sigma-algebra at T differs from G*_T",
    )
    ok_s = sigma_at(s, frag, "at").block_of == stages[0].block_of
    report.add(
        "fragment-at-S",
        ok_s,
        None if ok_s else "fragment sigma-algebra at S differs from stage 0",
    )
    mid = s.vmax(constant_time(space.product, max(space.n // 2, 0))).vmin(t)
    frag_mid = sigma_at(mid, frag, "at")
    _piecewise_trace_check(
        space,
        report,
        "fragment-at-R",
        frag_mid,
        [
            ("R=T", (i for i in range(size) if mid.value[i] == t.value[i]), gstar_t),
            (
                "R<T",
                (i for i in range(size) if mid.value[i] < t.value[i]),
                space.g_at(mid),
            ),
        ],
    )

    # --- martingale transfer, both directions --------------------------------
    if martingale_basis is None:
        g_term = space.G.terminal
        martingale_basis = [
            martingale_closure(
                space.product,
                space.G,
                tuple(ONE if g_term.block_of[i] == b else ZERO for i in range(size)),
            )
            for b in range(g_term.n_blocks)
        ]
    transfer_ok = True
    witness = None
    for x in martingale_basis:
        x_t = x.value_at(t)
        if not gstar_t.measurable(x_t):
            continue
        frag_x = fragment_process(x, s, end)
        defect = martingale_defect(frag_x, frag)
        if defect is not None:
            transfer_ok = False
            witness = f"forward transfer fails at step {defect[0]} on {defect[1]}"
            break
    if transfer_ok:
        for b in range(terminal.n_blocks):
            ind = tuple(
                ONE if terminal.block_of[i] == b else ZERO for i in range(size)
            )
            y = martingale_closure(space.product, frag, ind)
            back = fragment_process(y, s, end)
            defect = martingale_defect(back, space.G)
            if defect is not None:
                transfer_ok = False
                witness = f"converse transfer fails at step {defect[0]} on {defect[1]}"
                break
    report.add("martingale-transfer", transfer_ok, witness)
    return report
