"""Martingale representation: exact certificates, integrand solvers, and the
theorem-equivalence harness.

The representation property is decided node by node: at step k, on each block
of stage k-1, the conditionally mean-zero stage-k variables form a space of
dimension (number of sub-blocks - 1), and the property holds iff the driver
increments span it.  Rank over the rationals is exact, so there are no ties
or near-degenerate cases: the verdict is either a spanning proof (a dimension
audit per step) or an explicit bounded martingale witness, null at the
origin, strongly orthogonal to every driver and not identically zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import linalg
from .calculus import (
    CoveringInterval,
    MeasureChange,
    ShMeasureResult,
    azema_Z,
    covering_covers_after_tau,
    default_after_covering,
    default_martingale_L,
    drift_exact,
    base_martingale_basis,
    sh_measure_check,
)
from .enlargement import (
    EnlargedSpace,
    fragment_filtration,
    fragment_process,
    gtau_equality,
)
from .finite_prob import (
    INF,
    FiniteSpace,
    Filtration,
    InvariantError,
    ProcessTable,
    StoppingTime,
    cond_exp,
    is_martingale,
    martingale_closure,
    sigma_at,
)
from .rationals import ONE, ZERO, Q, as_q


class DriverError(InvariantError):
    """A proposed driver is not an exact martingale (distinct from a gap)."""


class ShMeasureError(InvariantError):
    """The proposed measure fails the skewed-immersion test (distinct from a gap)."""


class MrpGapError(InvariantError):
    """An operation requiring the representation property met a gap."""

    def __init__(self, certificate: "MrpCertificate"):
        super().__init__("representation property fails; witness attached")
        self.certificate = certificate


@dataclass(frozen=True)
class MrpCertificate:
    """Either a spanning proof or an explicit orthogonal witness.

    ``dimensions`` holds one (step, mean-zero dimension, spanned dimension)
    triple per step, summed over the nodes of that step.
    """

    verdict: str  # "spanning" | "gap"
    dimensions: tuple
    witness: Optional[ProcessTable] = None
    witness_step: Optional[object] = None
    witness_block: Optional[tuple] = None

    @property
    def spanning(self) -> bool:
        return self.verdict == "spanning"


def _weights_of(space: FiniteSpace, measure: Optional[MeasureChange]):
    return space.weight if measure is None else measure.weights


def mrp_check(
    space: FiniteSpace,
    measure: Optional[MeasureChange],
    filtration: Filtration,
    drivers: Sequence[ProcessTable],
) -> MrpCertificate:
    """Decide the representation property of ``drivers`` node-wise.

    Drivers must be exact martingales under (measure, filtration); violations
    raise ``DriverError`` rather than producing a gap verdict.  A gap verdict
    carries a witness: zero up to the failing step, then a bounded mean-zero
    block variable orthogonal (under the conditional measure) to every driver
    increment, frozen afterwards.
    """
    w = _weights_of(space, measure)
    for d in drivers:
        if not is_martingale(d, filtration, w):
            raise DriverError("driver is not an exact martingale")
    dims = []
    witness = None
    witness_step = None
    witness_block = None
    for k in list(range(1, filtration.n + 1)) + [INF]:
        prev = filtration.stage_before(k)
        cur = filtration.stage(k)
        incs = [d.increment(k) for d in drivers]
        step_dim = 0
        step_span = 0
        for block in prev.blocks:
            sub: dict = {}
            for i in block:
                sub.setdefault(cur.block_of[i], []).append(i)
            m = len(sub)
            if m == 1:
                continue
            sub_blocks = list(sub.values())
            bw = [sum(w[i] for i in sb) for sb in sub_blocks]
            vecs = [[inc[sb[0]] for sb in sub_blocks] for inc in incs]
            r = linalg.rank(vecs)
            step_dim += m - 1
            step_span += r
            if r < m - 1 and witness is None:
                u = linalg.weighted_orthogonal_vector(
                    vecs + [[ONE] * m], bw
                )
                if u is None:  # cannot happen when r < m - 1
                    raise InvariantError("rank deficit without a complement vector")
                scale = max(abs(v) for v in u)
                u = [v / scale for v in u]
                witness = _freeze_witness(space, filtration.n, k, sub_blocks, u)
                witness_step = k
                witness_block = tuple(space.atoms[i] for i in block)
        dims.append((k, step_dim, step_span))
    if witness is None:
        return MrpCertificate("spanning", tuple(dims))
    return MrpCertificate("gap", tuple(dims), witness, witness_step, witness_block)


def _freeze_witness(space, n, step, sub_blocks, values) -> ProcessTable:
    size = space.size
    jump = [ZERO] * size
    for sb, v in zip(sub_blocks, values):
        for i in sb:
            jump[i] = v
    rows = []
    for k in list(range(n + 1)) + [INF]:
        live = (k != INF and k >= step) or (k == INF)
        if step == INF:
            live = k == INF
        rows.append(tuple(jump) if live else (ZERO,) * size)
    return ProcessTable(space, tuple(rows))


def solve_integrands(
    space: FiniteSpace,
    filtration: Filtration,
    drivers: Sequence[ProcessTable],
    target: ProcessTable,
    weights=None,
    active=None,
) -> list:
    """Predictable tables J with ``sum_i J_i . drivers_i = target - target_0``
    step-wise, solving one exact linear system per node.

    ``active`` optionally restricts, per step, the atoms whose equations must
    hold (the solve is skipped on nodes without active atoms).  Raises
    ``MrpGapError``-free ``InvariantError`` if some node is unsolvable.
    """
    w = filtration.space.weight if weights is None else weights
    size = space.size
    j_rows = [[(ZERO,) * size] for _ in drivers]
    for k in list(range(1, filtration.n + 1)) + [INF]:
        prev = filtration.stage_before(k)
        incs = [d.increment(k) for d in drivers]
        dt = target.increment(k)
        row = [[ZERO] * size for _ in drivers]
        for block in prev.blocks:
            atoms = block if active is None else [i for i in block if active(k, i)]
            if not atoms:
                continue
            mat = [[incs[d_i][a] for d_i in range(len(drivers))] for a in atoms]
            rhs = [dt[a] for a in atoms]
            sol = linalg.solve(mat, rhs)
            if sol is None:
                raise InvariantError(f"no exact representation at step {k}")
            for d_i in range(len(drivers)):
                for i in block:
                    row[d_i][i] = sol[d_i]
        for d_i in range(len(drivers)):
            j_rows[d_i].append(tuple(row[d_i]))
    return [ProcessTable(space, tuple(rows)) for rows in j_rows]


# ---------------------------------------------------------------------------
# the before-default solver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RepresentationTriple:
    """Integrands and residual of the stopped representation identity.

    ``J`` (one table per driver, against the drift-corrected drivers), ``K``
    (against the compensated default martingale), the residual ``xi``
    (measurable at tau, conditionally null just before tau) multiplying the
    default indicator, and the bounded optional table ``X`` used to build
    them.  ``reconstruction`` is the verified table of ``E[zeta | G_k]``.
    """

    J: tuple
    K: ProcessTable
    xi: tuple
    X: ProcessTable
    reconstruction: ProcessTable
    identity_holds: bool


def _alive(space: EnlargedSpace, k, i) -> bool:
    v = space.tau_values[i]
    return v == INF or v >= k


@dataclass(frozen=True)
class SolverContext:
    """Per-model precomputation shared across solver calls: the base
    representation certificate, drift-corrected drivers and the compensated
    default martingale."""

    certificate: MrpCertificate
    tilde: tuple
    l_table: ProcessTable


def prepare_solver(space: EnlargedSpace, drivers: Sequence[ProcessTable]) -> SolverContext:
    cert = mrp_check(space.product, None, space.lifted_F, drivers)
    if not cert.spanning:
        raise MrpGapError(cert)
    tilde = tuple(drift_exact(d, space).martingale_part for d in drivers)
    return SolverContext(cert, tilde, default_martingale_L(space))


def integrand_solver_before(
    space: EnlargedSpace,
    zeta: Sequence,
    drivers: Sequence[ProcessTable],
    context: Optional[SolverContext] = None,
) -> RepresentationTriple:
    """Integrands reproducing ``E[zeta | G_k]`` for a variable observed at tau.

    Requires the representation property of the drivers in the lifted base
    (certified; a gap is raised with its witness).  The identity is exact:
    ``E[zeta|G_k] = E[zeta|G_0] + sum J dW~ + sum K dL + xi H_k`` with the
    driver and default integrals cut to (0, tau].
    """
    if context is None:
        context = prepare_solver(space, drivers)
    zeta = tuple(as_q(v) for v in zeta)
    g_tau = space.g_at(space.tau)
    if not g_tau.measurable(zeta):
        raise InvariantError("zeta must be measurable at tau")

    n = space.n
    size = space.product.size
    w = space.product.weight
    z = azema_Z(space)
    fhat = space.lifted_F

    # X_k = E[zeta 1_{t_k < tau} | F_k] / Z_k on {Z_k > 0}; the strict
    # inequality at the terminal index means "no default at all".
    x_rows = []
    for k in list(range(n + 1)) + [INF]:
        if k == INF:
            keep = lambda i: space.tau_values[i] == INF
        else:
            keep = lambda i: space.tau_values[i] > k
        strict = tuple(zeta[i] if keep(i) else ZERO for i in range(size))
        num = cond_exp(strict, fhat.stage(k))
        zr = z.row(k)
        x_rows.append(
            tuple(num[i] / zr[i] if zr[i] != 0 else ZERO for i in range(size))
        )
    x = ProcessTable(space.product, tuple(x_rows))

    # J from the base representation of the martingale part of X.  Spanning
    # holds at every node, so the solve is unrestricted even though only the
    # values on (0, tau] ever enter the identity.
    from .finite_prob import doob_decomposition

    m_part, _ = doob_decomposition(x, fhat)
    j_tables = solve_integrands(space.product, fhat, drivers, m_part)

    # K: block average of (zeta - X_k) over {tau = t_k} within each
    # stage-(k-1) block; zero where the default has no mass.
    k_rows = [(ZERO,) * size]
    for k in range(1, n + 1):
        row = [ZERO] * size
        for block in fhat.stage_before(k).blocks:
            hit = [i for i in block if space.tau_values[i] == k]
            if not hit:
                continue
            tot = sum(w[i] for i in hit)
            avg = sum(w[i] * (zeta[i] - x.row(k)[i]) for i in hit) / tot
            for i in block:
                row[i] = avg
        k_rows.append(tuple(row))
    k_rows.append((ZERO,) * size)
    k_table = ProcessTable(space.product, tuple(k_rows))

    x_at_tau = x.value_at(space.tau)
    k_at_tau = k_table.value_at(space.tau)
    xi = tuple(
        (zeta[i] - x_at_tau[i] - k_at_tau[i])
        if space.tau_values[i] != INF and space.tau_values[i] > 0
        else ZERO
        for i in range(size)
    )
    for i in range(size):
        if space.tau_values[i] == INF and zeta[i] != x_at_tau[i]:
            raise InvariantError("terminal value mismatch on the no-default event")

    reconstruction, ok = _verify_before_identity(
        space, zeta, context, j_tables, k_table, xi
    )
    return RepresentationTriple(
        J=tuple(j_tables),
        K=k_table,
        xi=xi,
        X=x,
        reconstruction=reconstruction,
        identity_holds=ok,
    )


def _verify_before_identity(space, zeta, context, j_tables, k_table, xi):
    size = space.product.size
    tilde = context.tilde
    l_table = context.l_table
    h = space.default_indicator()
    acc = list(cond_exp(zeta, space.G.stage(0)))
    rows = [tuple(acc)]
    ok = rows[0] == cond_exp(zeta, space.G.stage(0))
    for k in list(range(1, space.n + 1)) + [INF]:
        dl = l_table.increment(k)
        dh = h.increment(k)
        dws = [t.increment(k) for t in tilde]
        jk = [j.row(k) for j in j_tables]
        kk = k_table.row(k)
        for i in range(size):
            if _alive(space, k, i):
                acc[i] += sum(jk[d][i] * dws[d][i] for d in range(len(tilde)))
                acc[i] += kk[i] * dl[i]
            acc[i] += xi[i] * dh[i]
        rows.append(tuple(acc))
        if tuple(acc) != cond_exp(zeta, space.G.stage(k)):
            ok = False
    return ProcessTable(space.product, tuple(rows)), ok


# ---------------------------------------------------------------------------
# honest-time full representation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HonestRepresentation:
    J_before: tuple
    J_after: tuple
    K: ProcessTable
    xi: tuple
    reconstruction: ProcessTable
    identity_holds: bool


def honest_full_representation(
    space: EnlargedSpace,
    zeta: Sequence,
    drivers: Sequence[ProcessTable],
) -> HonestRepresentation:
    """Full-line representation on an honest model: predictable integrands
    split into a before part and an after part, both against the drift-
    corrected drivers, plus the default integrand and the residual at tau."""
    if space.model_kind != "honest":
        raise InvariantError("full representation requires an honest model")
    zeta = tuple(as_q(v) for v in zeta)
    y = martingale_closure(space.product, space.G, zeta)
    zeta_b = y.value_at(space.tau)
    context = prepare_solver(space, drivers)
    before = integrand_solver_before(space, zeta_b, drivers, context)

    tilde = context.tilde
    after_target = y - y.stopped(space.tau)
    j_after = solve_integrands(
        space.product,
        space.lifted_F,
        tilde,
        after_target,
        active=lambda k, i: not _alive(space, k, i),
    )

    size = space.product.size
    rec_rows = []
    ok = True
    for k in list(range(space.n + 1)) + [INF]:
        row = tuple(
            before.reconstruction.row(k)[i] + after_target.row(k)[i]
            for i in range(size)
        )
        rec_rows.append(row)
        if row != y.row(k):
            ok = False
    return HonestRepresentation(
        J_before=before.J,
        J_after=tuple(j_after),
        K=before.K,
        xi=before.xi,
        reconstruction=ProcessTable(space.product, tuple(rec_rows)),
        identity_holds=ok and before.identity_holds,
    )


# ---------------------------------------------------------------------------
# fragments and the harness
# ---------------------------------------------------------------------------


def immersion_check(space: EnlargedSpace) -> bool:
    """True iff every base martingale keeps a null drift in the enlargement."""
    for x in base_martingale_basis(space):
        dec = drift_exact(x, space)
        if any(v != 0 for row in dec.drift.rows for v in row):
            return False
    return True


def lemma_5_3_reduce(
    space: EnlargedSpace, start: StoppingTime, end: StoppingTime
) -> StoppingTime:
    """Shrink an interval start to ``(S v tau) and (S v T)``: a covering of
    the full line reduces to a covering of (tau, oo)."""
    return start.vmax(space.tau).vmin(start.vmax(end))


def fragment_mrp_check(
    space: EnlargedSpace,
    measure: MeasureChange,
    start: StoppingTime,
    end: StoppingTime,
    drivers: Sequence[ProcessTable],
) -> MrpCertificate:
    """Representation check in the fragment filtration under a skewed-
    immersion measure, with the drivers cut to the interval.

    A measure failing the skewed-immersion test raises ``ShMeasureError``;
    that is a different failure mode from a gap verdict.
    """
    end.require_stopping_time(space.lifted_F)
    sh = sh_measure_check(space, measure, start, end)
    if not sh.passed:
        raise ShMeasureError(
            f"measure fails the skewed-immersion test at step {sh.witness_step}"
        )
    frag = fragment_filtration(space, start, end)
    cut = [fragment_process(d, start, end) for d in drivers]
    return mrp_check(space.product, measure, frag, cut)


@dataclass
class HarnessReport:
    booleans: dict
    implications: list = field(default_factory=list)  # (name, lhs, rhs, ok)
    covering_verified: bool = False
    covering_note: str = ""
    notes: list = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(ok for (_, _, _, ok) in self.implications)

    def as_dict(self) -> dict:
        return {
            "booleans": dict(self.booleans),
            "implications": [
                {"name": n, "lhs": l, "rhs": r, "passed": ok}
                for (n, l, r, ok) in self.implications
            ],
            "covering_verified": self.covering_verified,
            "covering_note": self.covering_note,
            "notes": list(self.notes),
            "all_passed": self.all_passed,
        }


def stopped_enlarged_filtration(space: EnlargedSpace) -> Filtration:
    """The enlargement stopped at tau: stage k is the sigma-algebra at the
    stopping time ``tau and t_k``."""
    from .finite_prob import constant_time

    stages = tuple(
        sigma_at(space.tau.vmin(constant_time(space.product, k)), space.G, "at")
        for k in range(space.n + 1)
    )
    terminal = sigma_at(space.tau, space.G, "at")
    return Filtration(space.product, space.base_filtration.times, stages, terminal)


def theorem_harness(
    space: EnlargedSpace,
    drivers: Sequence[ProcessTable],
    covering: Optional[Sequence[CoveringInterval]] = None,
    check_global: bool = True,
) -> HarnessReport:
    """Evaluate the five structural booleans and assert the equivalences
    tying them together.

    (a) representation property of (drift-corrected drivers, L) in the
        enlargement stopped at tau;
    (b) the drivers observed at tau are measurable just before tau on
        {0 < tau < INF};
    (c) the sigma-algebras at and just before tau agree on {0 < tau < INF};
    (d) immersion: null drift for every base martingale;
    (e) representation property of (drift-corrected drivers, L) in the full
        enlargement.

    Asserted: (a and b) iff c; given a verified covering of (tau, oo) by
    skewed-immersion intervals, (e and b) iff c; and, with the original
    drivers in place of the corrected ones, (d and b) iff (e' and c).
    """
    cert = mrp_check(space.product, None, space.lifted_F, drivers)
    if not cert.spanning:
        raise MrpGapError(cert)

    l_table = default_martingale_L(space)
    tilde = [drift_exact(d, space).martingale_part for d in drivers]

    stopped_f = stopped_enlarged_filtration(space)
    stopped_drivers = [t.stopped(space.tau) for t in tilde] + [l_table]
    a = mrp_check(space.product, None, stopped_f, stopped_drivers).spanning

    g_before_tau = space.g_before(space.tau)
    b = True
    for d in drivers:
        at_tau = d.value_at(space.tau)
        clipped = tuple(
            at_tau[i]
            if space.tau_values[i] != INF and space.tau_values[i] > 0
            else ZERO
            for i in range(space.product.size)
        )
        if not g_before_tau.measurable(clipped):
            b = False
            break

    c = gtau_equality(space)
    d_bool = immersion_check(space)
    e = mrp_check(space.product, None, space.G, tilde + [l_table]).spanning

    e_plain = False
    try:
        e_plain = mrp_check(space.product, None, space.G, list(drivers) + [l_table]).spanning
    except DriverError:
        e_plain = False  # original drivers are not even martingales of G

    report = HarnessReport(
        booleans={
            "a_stopped_mrp": a,
            "b_driver_at_tau_predictable": b,
            "c_gtau_equality": c,
            "d_immersion": d_bool,
            "e_global_mrp": e,
            "e_plain_driver_mrp": e_plain,
        }
    )
    report.implications.append(("stopped-iff", a and b, c, (a and b) == c))

    if check_global:
        supplied = covering is not None
        if covering is None:
            covering = default_after_covering(space)
            report.covering_note = "auto-searched covering of (tau, oo)"
        else:
            report.covering_note = "caller-supplied covering"
        verified = all(
            sh_measure_check(space, iv.measure, iv.start, iv.end).passed
            for iv in covering
        ) and covering_covers_after_tau(space, covering)
        report.covering_verified = verified
        if verified:
            report.implications.append(("global-iff", e and b, c, (e and b) == c))
        elif supplied:
            raise InvariantError(
                "global equivalence requested but the supplied covering "
                "fails verification"
            )
        else:
            report.notes.append(
                "global equivalence skipped: no verified skewed-immersion "
                "covering of (tau, oo) was found for this model"
            )

    report.implications.append(
        ("immersion-iff", d_bool and b, e_plain and c, (d_bool and b) == (e_plain and c))
    )
    report.notes.append(
        "sigma-algebra equality at tau is reported as-is; the avoidance "
        "hypothesis behind it has no grid analogue and is examined "
        "statistically in the Monte Carlo layer"
    )
    return report
