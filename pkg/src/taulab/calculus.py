"""Semimartingale calculus on enlarged spaces, exact to the last rational.

Conventions carried from the rest of the library: hazard and drift
denominators are evaluated at the left-limit index k - 1; all predictable
brackets appearing in closed drift formulas are computed in the lifted base
filtration; the drift of a process X under the enlargement is the predictable
table Gamma(X) with increments ``E[delta_k X | G_{k-1}]`` and
``Gamma(X)_0 = 0``.

The exact drift operator is the ground truth here.  Closed forms (the
universal before-default expression, the honest-time after-default
expression, the natural-family three-term expression) are separate
operations compared against it, so a transcription error in a formula can
never masquerade as a theorem.

A note on the after-default sign: the exact operator yields after-default
increments ``- d<M + A_hat - A, X> / (1 - Z_-)`` on every honest model we can
build, i.e. the mirror image of the before-default expression.  The closed
form below therefore carries a resolved sign, determined against the exact
operator per model and reported, rather than hard-coded silently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .enlargement import (
    EnlargedSpace,
    fragment_filtration,
    fragment_process,
)
from .finite_prob import (
    INF,
    FiniteSpace,
    Filtration,
    InvariantError,
    NotAdaptedError,
    Partition,
    ProcessTable,
    StoppingTime,
    cond_exp,
    constant_time,
    dual_projections,
    is_martingale,
    martingale_closure,
    martingale_defect,
    table_constant,
)
from .models import NaturalParams, natural_z
from .rationals import ONE, ZERO, Q, as_q


class CalculusError(InvariantError):
    pass


def _memo(space: EnlargedSpace, key: str, build):
    """Per-space cache of derived immutable objects (Z, compensators, ...).

    The values are pure functions of the space, so a racy double-build is
    harmless; the cache only avoids recomputation in solver-heavy loops.
    """
    cache = space.__dict__.setdefault("_derived", {})
    if key not in cache:
        cache[key] = build()
    return cache[key]


# ---------------------------------------------------------------------------
# measure changes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MeasureChange:
    """A strictly positive density with unit mean against the space weights."""

    space: FiniteSpace
    density: tuple

    def __post_init__(self):
        d = tuple(as_q(v) for v in self.density)
        object.__setattr__(self, "density", d)
        if len(d) != self.space.size:
            raise CalculusError("density length != number of atoms")
        if any(v <= 0 for v in d):
            raise CalculusError("measure-change density must be strictly positive")
        if self.space.expectation(d) != 1:
            raise CalculusError("measure-change density must have unit mean")

    @property
    def weights(self) -> tuple:
        return tuple(w * d for w, d in zip(self.space.weight, self.density))


def unit_measure(space: FiniteSpace) -> MeasureChange:
    return MeasureChange(space, (ONE,) * space.size)


def measure_from_positive(space: FiniteSpace, raw: Sequence) -> MeasureChange:
    """Normalize a strictly positive variable into a unit-mean density."""
    vals = tuple(as_q(v) for v in raw)
    total = space.expectation(vals)
    if total <= 0:
        raise CalculusError("cannot normalize a non-positive variable")
    return MeasureChange(space, tuple(v / total for v in vals))


# ---------------------------------------------------------------------------
# survival quantities
# ---------------------------------------------------------------------------


def azema_Z(space: EnlargedSpace) -> ProcessTable:
    """Optional projection of ``1_{[0, tau)}``: ``Z_k = Q[tau > t_k | F_k]``.

    The terminal row is the conditional probability of no default at all,
    which makes Z an exact supermartingale whose compensator matches the dual
    predictable projection of the default indicator including the terminal
    step.  The left-limit positivity ``Z_{tau-} > 0 on {tau < INF}`` (with
    ``Z_{0-} = 1``) is re-verified and reported on violation, although with
    strictly positive atom weights it cannot fail.
    """
    return _memo(space, "azema_Z", lambda: _azema_z_build(space))


def _azema_z_build(space: EnlargedSpace) -> ProcessTable:
    n = space.n
    size = space.product.size
    rows = []
    for k in range(n + 1):
        ind = tuple(
            ONE if space.tau_values[i] > k else ZERO for i in range(size)
        )
        rows.append(cond_exp(ind, space.lifted_F.stage(k)))
    ind_inf = tuple(
        ONE if space.tau_values[i] == INF else ZERO for i in range(size)
    )
    rows.append(cond_exp(ind_inf, space.lifted_F.terminal))
    z = ProcessTable(space.product, tuple(rows))
    for i in range(size):
        v = space.tau_values[i]
        if v == INF or v == 0:
            continue
        if z.row(v - 1)[i] <= 0:
            raise CalculusError("Z_{tau-} vanished before a finite default")
    return z


def compensators(space: EnlargedSpace) -> tuple[ProcessTable, ProcessTable]:
    """(A, A_hat): predictable and optional dual projections of the default
    indicator ``1_{tau>0} 1_{[tau, oo)}`` in the lifted base filtration."""
    return _memo(
        space, "compensators", lambda: dual_projections(space.tau, space.lifted_F)
    )


def survival_martingale(space: EnlargedSpace) -> ProcessTable:
    """M with Z = M - A (exact Doob decomposition of the supermartingale Z)."""
    z = azema_Z(space)
    a, _ = compensators(space)
    return z + a


def default_martingale_L(space: EnlargedSpace) -> ProcessTable:
    """Compensated default indicator,
    ``delta_k L = 1_{tau = t_k, tau > 0} - 1_{t_k <= tau} delta_k A / Z_{k-1}``.

    An exact martingale of the enlargement; the hazard denominator is the
    left-limit survival probability, strictly positive on the support of the
    indicator ``1_{t_k <= tau}``.
    """
    return _memo(space, "default_martingale_L", lambda: _l_build(space))


def _l_build(space: EnlargedSpace) -> ProcessTable:
    z = azema_Z(space)
    a, _ = compensators(space)
    size = space.product.size
    acc = [ZERO] * size
    rows = [tuple(acc)]
    for k in range(1, space.n + 1):
        da = a.increment(k)
        zprev = z.row(k - 1)
        for i in range(size):
            tv = space.tau_values[i]
            if tv >= k or tv == INF:
                if zprev[i] == 0:
                    raise CalculusError("hazard denominator vanished before tau")
                jump = ONE if tv == k else ZERO
                acc[i] = acc[i] + jump - da[i] / zprev[i]
        rows.append(tuple(acc))
    rows.append(rows[-1])
    return ProcessTable(space.product, tuple(rows))


# ---------------------------------------------------------------------------
# drift operators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DriftDecomposition:
    """X = martingale_part + drift with the drift predictable and null at 0."""

    martingale_part: ProcessTable
    drift: ProcessTable


def require_base_martingale(x: ProcessTable, space: EnlargedSpace) -> None:
    if not is_martingale(x, space.lifted_F):
        raise NotAdaptedError("input is not an exact martingale of the lifted base")


def drift_exact(x: ProcessTable, space: EnlargedSpace) -> DriftDecomposition:
    """Ground-truth drift: ``delta_k Gamma(X) = E[delta_k X | G_{k-1}]``.

    Always exists on a finite space; X - Gamma(X) is an exact martingale of
    the enlargement and Gamma(X) is G-predictable with Gamma(X)_0 = 0.
    """
    require_base_martingale(x, space)
    size = space.product.size
    acc = [ZERO] * size
    rows = [tuple(acc)]
    for k in list(range(1, space.n + 1)) + [INF]:
        ce = cond_exp(x.increment(k), space.G.stage_before(k))
        acc = [acc[i] + ce[i] for i in range(size)]
        rows.append(tuple(acc))
    drift = ProcessTable(space.product, tuple(rows))
    return DriftDecomposition(martingale_part=x - drift, drift=drift)


def _bracket_against(space: EnlargedSpace, x: ProcessTable) -> ProcessTable:
    """Predictable bracket <M + A_hat - A, X> computed in the lifted base."""
    from .finite_prob import predictable_bracket

    z = azema_Z(space)
    a, a_hat = compensators(space)
    m = z + a
    return predictable_bracket(m + a_hat - a, x, space.lifted_F)


def drift_before_formula(x: ProcessTable, space: EnlargedSpace) -> ProcessTable:
    """Universal before-default drift:
    ``delta_k = 1_{t_k <= tau} d<M + A_hat - A, X>_k / Z_{k-1}``.

    Agrees with the exact operator on (0, tau] entry-wise, for every model.
    """
    require_base_martingale(x, space)
    z = azema_Z(space)
    br = _bracket_against(space, x)
    size = space.product.size
    acc = [ZERO] * size
    rows = [tuple(acc)]
    for k in list(range(1, space.n + 1)) + [INF]:
        db = br.increment(k)
        zprev = z.row(space.lifted_F.prev(k))
        alive = set(space.alive_mask(k))
        for i in alive:
            if zprev[i] == 0:
                raise CalculusError("before-default denominator vanished")
            acc[i] = acc[i] + db[i] / zprev[i]
        rows.append(tuple(acc))
    return ProcessTable(space.product, tuple(rows))


@dataclass(frozen=True)
class DriftAuditResult:
    """Outcome of the batched drift-identity audit over a martingale family."""

    passed: bool
    resolved_sign: Optional[int] = None  # after-default side only
    witness: Optional[tuple] = None  # (driver index, step, block atoms)


def drift_identity_audit(
    space: EnlargedSpace,
    drivers: Optional[Sequence[ProcessTable]] = None,
    side: str = "before",
    sign: int = -1,
) -> DriftAuditResult:
    """Exact equality of the closed drift formula with the conditional-mean
    drift, per driver, step and node.

    ``side="before"`` compares, on every live node,
    ``E[dX | G_{k-1}]`` with ``d<M + A_hat - A, X>_k / Z_{k-1}``;
    ``side="after"`` compares post-default nodes against
    ``sign * d<M + A_hat - A, X>_k / (1 - Z_{k-1})`` and resolves the sign:
    it first tries the given sign, then its opposite, and reports which one
    matches (None when all after-default increments vanish).

    Mathematically identical to running the formula tables element-wise per
    driver, but all model-level quantities (survival probabilities, the
    compensator pair, node structures) are computed once.
    """
    if drivers is None:
        drivers = base_martingale_basis(space)
    z = azema_Z(space)
    a, a_hat = compensators(space)
    nbar = z + a + a_hat - a  # M + A_hat - A with M = Z + A
    steps = list(range(1, space.n + 1)) + [INF]
    w = space.product.weight
    fhat = space.lifted_F
    g = space.G

    def node_lists(k):
        prev_f = fhat.stage_before(k)
        prev_g = g.stage_before(k)
        alive = set(space.alive_mask(k))
        after = set(space.after_mask(k))
        sel = alive if side == "before" else after
        nodes = []
        for block in prev_g.blocks:
            if block[0] in sel:
                nodes.append((block, prev_f.blocks[prev_f.block_of[block[0]]]))
        return nodes

    per_step = {k: node_lists(k) for k in steps}
    zprev = {k: z.row(fhat.prev(k)) for k in steps}
    dnbar = {k: nbar.increment(k) for k in steps}

    def run(current_sign: int) -> Optional[tuple]:
        for d_idx, x in enumerate(drivers):
            for k in steps:
                dx = x.increment(k)
                dn = dnbar[k]
                zp = zprev[k]
                for g_block, f_block in per_step[k]:
                    wd = sum(w[i] for i in g_block)
                    exact = sum(w[i] * dx[i] for i in g_block) / wd
                    wb = sum(w[i] for i in f_block)
                    bracket = sum(w[i] * dn[i] * dx[i] for i in f_block) / wb
                    z_b = zp[f_block[0]]
                    if side == "before":
                        formula = bracket / z_b
                    else:
                        formula = current_sign * bracket / (ONE - z_b)
                    if exact != formula:
                        return (d_idx, k, tuple(space.product.atoms[i] for i in g_block))
        return None

    if side == "before":
        wit = run(+1)
        return DriftAuditResult(wit is None, None, wit)
    # after-default: resolve the sign, preferring the requested one
    wit = run(sign)
    if wit is None:
        trivial = all(
            all(
                sum(w[i] * dnbar[k][i] * x.increment(k)[i] for i in f_block) == 0
                for (_, f_block) in per_step[k]
            )
            for x in drivers
            for k in steps
        )
        return DriftAuditResult(True, None if trivial else sign, None)
    wit2 = run(-sign)
    if wit2 is None:
        return DriftAuditResult(True, -sign, None)
    return DriftAuditResult(False, None, wit)


@dataclass(frozen=True)
class HonestDriftResult:
    drift: ProcessTable
    resolved_sign: Optional[int]  # +1 or -1, None when indeterminate
    matches_exact: bool


def drift_after_honest_formula(x: ProcessTable, space: EnlargedSpace) -> HonestDriftResult:
    """Honest-time after-default drift with oracle-resolved sign.

    Increment magnitude on {tau < t_k} is
    ``|d<M + A_hat - A, X>_k| / (1 - Z_{k-1})``; the sign is chosen so the
    table matches the exact operator on (tau, oo), and reported.  Requires a
    space built by the honest-time construction.
    """
    if space.model_kind != "honest":
        raise CalculusError("after-default formula applies to honest models only")
    require_base_martingale(x, space)
    z = azema_Z(space)
    br = _bracket_against(space, x)
    exact = drift_exact(x, space).drift

    def build(sign: int) -> ProcessTable:
        size = space.product.size
        acc = [ZERO] * size
        rows = [tuple(acc)]
        for k in list(range(1, space.n + 1)) + [INF]:
            db = br.increment(k)
            zprev = z.row(space.lifted_F.prev(k))
            for i in space.after_mask(k):
                if zprev[i] == 1:
                    raise CalculusError(
                        "1 - Z_{k-1} vanished after tau; impossible for an "
                        "honest time with positive atom weights"
                    )
                acc[i] = acc[i] + sign * db[i] / (ONE - zprev[i])
            rows.append(tuple(acc))
        return ProcessTable(space.product, tuple(rows))

    def matches(candidate: ProcessTable) -> bool:
        for k in list(range(1, space.n + 1)) + [INF]:
            dc = candidate.increment(k)
            de = exact.increment(k)
            if any(dc[i] != de[i] for i in space.after_mask(k)):
                return False
        return True

    minus = build(-1)
    if matches(minus):
        zero = all(
            all(minus.increment(k)[i] == 0 for i in space.after_mask(k))
            for k in list(range(1, space.n + 1)) + [INF]
        )
        return HonestDriftResult(minus, None if zero else -1, True)
    plus = build(+1)
    if matches(plus):
        return HonestDriftResult(plus, +1, True)
    return HonestDriftResult(minus, None, False)


@dataclass(frozen=True)
class NaturalDriftResult:
    drift: ProcessTable
    matches_before: bool
    matches_after: bool
    deviation: ProcessTable  # formula minus exact, zero where they agree
    max_abs_deviation: object


def drift_natural_formula(
    x: ProcessTable,
    space: EnlargedSpace,
    params: NaturalParams,
    m_curves: dict,
) -> NaturalDriftResult:
    """Three-term drift of the natural family.

    Before default the coefficient against <N, X> is ``E_{k-1} / Z_{k-1}``
    (exact on the grid); after default the <N, X> coefficient is
    ``-E_{k-1} / (1 - Z_{k-1})`` and the <Y, X> coefficient is
    ``f(M^tau - (1-Z)) + M^tau f'(M^tau - (1-Z))`` at the left limit.  The
    last term is a derivative in u, so on a coarse grid it deviates from the
    exact operator by the model's discretization defect; the deviation table
    is part of the result rather than being absorbed.
    """
    if space.model_kind != "natural":
        raise CalculusError("the three-term formula applies to natural models only")
    require_base_martingale(x, space)
    from .finite_prob import predictable_bracket

    n_hat = space.lift_table(params.N)
    y_hat = space.lift_table(params.Y)
    e_hat = space.lift_table(params.survival)
    z_base = natural_z(params, space.base_filtration)
    z_hat = space.lift_table(z_base)
    br_n = predictable_bracket(n_hat, x, space.lifted_F)
    br_y = predictable_bracket(y_hat, x, space.lifted_F)

    size = space.product.size
    acc = [ZERO] * size
    rows = [tuple(acc)]
    for k in list(range(1, space.n + 1)) + [INF]:
        prev = space.lifted_F.prev(k)
        dbn = br_n.increment(k)
        dby = br_y.increment(k)
        zp = z_hat.row(prev)
        ep = e_hat.row(prev)
        for i in space.alive_mask(k):
            # where the left-limit survival probability is still 1 the whole
            # block is alive surely and the exact drift vanishes; the interior
            # coefficient form applies only where 0 < Z < 1, as in the
            # continuous statement
            if zp[i] != 1:
                acc[i] = acc[i] + (ep[i] / zp[i]) * dbn[i]
        for i in space.after_mask(k):
            theta = space.tau_values[i]
            m_theta = m_curves[int(theta)].row(prev)[space.proj[i]]
            gap = m_theta - (ONE - zp[i])
            beta = as_q(params.f(gap)) + m_theta * as_q(params.f_prime(gap))
            acc[i] = acc[i] - (ep[i] / (ONE - zp[i])) * dbn[i] + beta * dby[i]
        rows.append(tuple(acc))
    drift = ProcessTable(space.product, tuple(rows))

    exact = drift_exact(x, space).drift
    deviation = drift - exact
    before_ok = True
    after_ok = True
    for k in list(range(1, space.n + 1)) + [INF]:
        dd = deviation.increment(k)
        if any(dd[i] != 0 for i in space.alive_mask(k)):
            before_ok = False
        if any(dd[i] != 0 for i in space.after_mask(k)):
            after_ok = False
    return NaturalDriftResult(
        drift=drift,
        matches_before=before_ok,
        matches_after=after_ok,
        deviation=deviation,
        max_abs_deviation=deviation.max_abs(),
    )


# ---------------------------------------------------------------------------
# stochastic exponential and Girsanov
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DoleansResult:
    table: ProcessTable
    positive: bool  # strict positivity along every path, terminal included


def stochastic_exponential(
    integrand: ProcessTable, driver: ProcessTable
) -> DoleansResult:
    """``eta_k = eta_{k-1} (1 + J_k delta_k Y)`` with ``eta_0 = 1``.

    Non-positivity is flagged, not raised: the caller decides whether a
    sign-crossing exponential is fatal for its use.
    """
    from .finite_prob import _check_same_space

    _check_same_space(integrand.space, driver.space)
    size = driver.space.size
    cur = [ONE] * size
    rows = [tuple(cur)]
    positive = True
    for k in list(range(1, driver.n + 1)) + [INF]:
        j = integrand.row(k)
        dy = driver.increment(k)
        cur = [cur[i] * (ONE + j[i] * dy[i]) for i in range(size)]
        if any(v <= 0 for v in cur):
            positive = False
        rows.append(tuple(cur))
    return DoleansResult(ProcessTable(driver.space, tuple(rows)), positive)


def girsanov_transform(
    x: ProcessTable,
    eta: ProcessTable,
    filtration: Filtration,
    weights: Optional[Sequence] = None,
) -> ProcessTable:
    """``X^[eta]_k = X_k - sum_{j<=k} d<eta, X>_j / eta_{j-1}``.

    With eta a strictly positive martingale, the output is an exact
    martingale under the measure with terminal density eta.
    """
    from .finite_prob import predictable_bracket

    if any(v <= 0 for row in eta.rows for v in row):
        raise CalculusError("Girsanov transform needs a strictly positive density")
    if not is_martingale(eta, filtration, weights):
        raise CalculusError("Girsanov transform needs a martingale density")
    br = predictable_bracket(eta, x, filtration, weights)
    size = x.space.size
    acc = [ZERO] * size
    rows = [x.row(0)]
    for k in list(range(1, x.n + 1)) + [INF]:
        db = br.increment(k)
        eprev = eta.row(filtration.prev(k))
        acc = [acc[i] + db[i] / eprev[i] for i in range(size)]
        rows.append(tuple(v - a for v, a in zip(x.row(k), acc)))
    return ProcessTable(x.space, tuple(rows))


# ---------------------------------------------------------------------------
# sH-measures
# ---------------------------------------------------------------------------


def base_martingale_basis(space: EnlargedSpace) -> list:
    """Martingale closures of the terminal-block indicators of the lifted
    base: a finite generating family for all base martingales."""
    return _memo(space, "base_basis", lambda: _basis_build(space))


def _basis_build(space: EnlargedSpace) -> list:
    term = space.lifted_F.terminal
    out = []
    for b in range(term.n_blocks):
        ind = tuple(
            ONE if term.block_of[i] == b else ZERO
            for i in range(space.product.size)
        )
        out.append(martingale_closure(space.product, space.lifted_F, ind))
    return out


@dataclass(frozen=True)
class ShMeasureResult:
    passed: bool
    witness_basis_index: Optional[int] = None
    witness_step: Optional[object] = None
    witness_block: Optional[tuple] = None

    def __bool__(self) -> bool:
        return self.passed


def sh_measure_check(
    space: EnlargedSpace,
    measure: MeasureChange,
    start: StoppingTime,
    end: StoppingTime,
    basis: Optional[Sequence[ProcessTable]] = None,
) -> ShMeasureResult:
    """Skewed-immersion test over (S, T]: every base martingale, cut to the
    interval, must be an exact martingale of the fragment filtration under
    the changed measure.  Checking the terminal-block indicator closures is
    sufficient because they generate all base martingales."""
    if basis is None:
        basis = base_martingale_basis(space)
    frag = fragment_filtration(space, start, end)
    w = measure.weights
    for idx, x in enumerate(basis):
        cut = fragment_process(x, start, end)
        defect = martingale_defect(cut, frag, w)
        if defect is not None:
            return ShMeasureResult(False, idx, defect[0], defect[1])
    return ShMeasureResult(True)


def default_state_density(space: EnlargedSpace, stage_index) -> tuple:
    """``q_k(tau)`` atom-wise: the stage-k conditional probability of the
    atom's own default time, ``E[1_{tau = theta} | F_k]`` evaluated at
    theta = tau(atom).  Strictly positive by construction."""
    size = space.product.size
    blocks = (
        space.lifted_F.terminal if stage_index == INF else space.lifted_F.stage(stage_index)
    )
    out = [ZERO] * size
    w = space.product.weight
    for block in blocks.blocks:
        tot = sum(w[i] for i in block)
        mass: dict = {}
        for i in block:
            mass[space.tau_values[i]] = mass.get(space.tau_values[i], ZERO) + w[i]
        for i in block:
            out[i] = mass[space.tau_values[i]] / tot
    return tuple(out)


def build_sh_measure_after(
    space: EnlargedSpace, start: StoppingTime, end: StoppingTime
) -> MeasureChange:
    """Skewed-immersion measure over (S, T] for S >= tau on full-support
    models.

    The density is the telescoping likelihood ratio ``q_S(tau) / q_{S v T}(tau)``
    rebalancing each atom's own default-time probability from the end of the
    interval back to its start.  It kills the after-default drift of every
    base martingale on the interval exactly whenever each live node sees
    every branch of the base step with positive default mass (density-style
    kernels); with degenerate kernels the density fails its unit-mean
    invariant, which raises here.
    """
    for i in range(space.product.size):
        if start.value[i] < space.tau_values[i]:
            raise CalculusError("after-default construction needs S >= tau")
    t = start.vmax(end)
    qs: dict = {}

    def q_at(k) -> tuple:
        if k not in qs:
            qs[k] = default_state_density(space, k)
        return qs[k]

    density = []
    for i in range(space.product.size):
        s_i, t_i = start.value[i], t.value[i]
        if t_i <= s_i:
            density.append(ONE)
        else:
            density.append(q_at(s_i)[i] / q_at(t_i)[i])
    return MeasureChange(space.product, tuple(density))


def build_sh_measure_interval(space: EnlargedSpace, end_index=None) -> MeasureChange:
    """Decoupling measure over (0, T] for T the horizon or INF: the density
    ``pbar(tau) / q_T(tau)`` gives tau its unconditional law independently of
    the stage-T information.  Exact on full-support models; degenerate
    kernels fail the unit-mean invariant and raise."""
    size = space.product.size
    if end_index is None:
        end_index = space.n
    pbar: dict = {}
    for i in range(size):
        pbar[space.tau_values[i]] = (
            pbar.get(space.tau_values[i], ZERO) + space.product.weight[i]
        )
    q_t = default_state_density(space, end_index)
    density = tuple(pbar[space.tau_values[i]] / q_t[i] for i in range(size))
    return MeasureChange(space.product, density)


@dataclass(frozen=True)
class HonestShMeasure:
    measure: MeasureChange
    start: StoppingTime
    end: StoppingTime
    eta: ProcessTable


def honest_truncation_time(space: EnlargedSpace, a: int, bound) -> StoppingTime:
    """Base stopping time capping the accumulated squared after-default
    leverage: first index past a at which
    ``sum (1/(1-Z_{j-1}))^2 d<M>_j`` exceeds the bound, capped at a + bound
    steps and at the horizon."""
    from .finite_prob import predictable_bracket

    z = azema_Z(space)
    m = survival_martingale(space)
    br = predictable_bracket(m, m, space.lifted_F)
    bound = as_q(bound)
    cap = min(space.n, a + int(bound)) if bound < 10**9 else space.n
    values = []
    for i in range(space.product.size):
        acc = ZERO
        hit = None
        for k in range(a + 1, space.n + 1):
            zprev = z.row(k - 1)[i]
            db = br.increment(k)[i]
            if db != 0:
                if zprev == 1:
                    hit = k
                    break
                acc += db / (ONE - zprev) ** 2
                if acc > bound:
                    hit = k
                    break
        values.append(min(hit if hit is not None else space.n, cap))
    return StoppingTime(space.product, tuple(values))


def build_sh_measure_honest(space: EnlargedSpace, a: int, bound) -> HonestShMeasure:
    """Honest-time construction: exponential of
    ``1_{(S_a, T_{a,n}]} (1/(1 - Z_-))`` against the martingale part of Z in
    the enlargement, with ``S_a = tau v t_a``.

    A non-positive exponential means the requested interval is too
    aggressive; the caller must shrink it via the truncation bound.
    """
    if space.model_kind != "honest":
        raise CalculusError("construction applies to honest models only")
    z = azema_Z(space)
    m = survival_martingale(space)
    m_tilde = drift_exact(m, space).martingale_part
    start = space.tau.vmax(constant_time(space.product, a))
    end = honest_truncation_time(space, a, bound)
    size = space.product.size
    rows = []
    for k in list(range(space.n + 1)) + [INF]:
        prev = space.lifted_F.prev(k)
        row = []
        for i in range(size):
            live = start.value[i] < k <= end.value[i] if k != INF else False
            if live:
                zprev = z.row(prev)[i]
                if zprev == 1:
                    raise CalculusError(
                        "1 - Z_- vanished on the target interval; impossible "
                        "after an honest tau"
                    )
                row.append(ONE / (ONE - zprev))
            else:
                row.append(ZERO)
        rows.append(tuple(row))
    integrand = ProcessTable(space.product, tuple(rows))
    result = stochastic_exponential(integrand, m_tilde)
    if not result.positive:
        raise CalculusError(
            "exponential density hit zero; shrink the interval via the bound"
        )
    measure = MeasureChange(space.product, result.table.row(INF))
    return HonestShMeasure(measure, start, end, result.table)


# ---------------------------------------------------------------------------
# coverings of (tau, oo)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoveringInterval:
    start: StoppingTime
    end: StoppingTime
    measure: MeasureChange


def default_after_covering(space: EnlargedSpace) -> list:
    """Search a covering family of (tau, oo) by verified skewed-immersion
    intervals.

    Candidates, kept only when they pass the exact test: the reduced full
    interval ``(tau and T, T]`` for T the horizon and INF, under the original
    measure and under the decoupling density; and the one-step intervals
    ``(tau v t_{k-1}, t_k]`` likewise.  On some models (degenerate kernels
    whose default observation reveals later base moves) no family covers
    every informative after-default node; the caller decides what a partial
    covering means.
    """
    sh_cache: dict = {}

    def passes(mc: MeasureChange, s: StoppingTime, t: StoppingTime) -> bool:
        key = (mc.density, s.value, t.value)
        if key not in sh_cache:
            sh_cache[key] = sh_measure_check(space, mc, s, t).passed
        return sh_cache[key]

    out = []
    ends = [constant_time(space.product, space.n), constant_time(space.product, INF)]
    for t in ends:
        s = space.tau.vmin(t)
        candidates = [unit_measure(space.product)]
        try:
            candidates.append(
                build_sh_measure_interval(space, t.value[0])
            )
        except CalculusError:
            pass
        for mc in candidates:
            if passes(mc, s, t):
                out.append(CoveringInterval(s, t, mc))
                break
    for k in list(range(1, space.n + 1)) + [INF]:
        prev_idx = space.G.prev(k)
        s = space.tau.vmax(constant_time(space.product, prev_idx))
        t = constant_time(space.product, k)
        candidates = [unit_measure(space.product)]
        try:
            candidates.append(build_sh_measure_after(space, s, t))
        except CalculusError:
            pass
        for mc in candidates:
            if passes(mc, s, t):
                out.append(CoveringInterval(s, t, mc))
                break
    return out


def covering_covers_after_tau(space: EnlargedSpace, intervals: Sequence[CoveringInterval]) -> bool:
    """Discrete covering condition: every informative after-default node
    (k, D) with D a G_{k-1} block inside {tau < t_k} must satisfy
    ``S_j <= t_{k-1} < t_k <= T_j`` on D for some interval j."""
    for k in list(range(1, space.n + 1)) + [INF]:
        after = set(space.after_mask(k))
        prev_stage = space.G.stage_before(k)
        stage = space.G.stage(k)
        for block in prev_stage.blocks:
            d = [i for i in block if i in after]
            if not d:
                continue
            sub = {stage.block_of[i] for i in d}
            if len(sub) <= 1:
                continue  # no information gained at this node
            prev_idx = space.G.prev(k)
            covered = any(
                all(
                    iv.start.value[i] <= prev_idx and iv.end.value[i] >= k
                    for i in d
                )
                for iv in intervals
            )
            if not covered:
                return False
    return True
