"""Concrete default-time models realized as enlarged spaces.

Four constructions are provided:

* ``cox_model``: first-jump time driven by an adapted increasing hazard.  The
  hazard is carried as its survival factors ``E_k = exp(-Lambda_k)`` so the
  kernel stays rational; ``E_0 = 1`` encodes ``Lambda_0 = 0``.
* ``density_model``: the conditional law of tau has a strictly positive
  density ``alpha_k(theta)`` against reference weights ``mu`` on the default
  grid, with ``alpha(theta)`` a martingale in the stage index.
* ``honest_time_model``: tau is an F_inf-measurable grid point that, once it
  has happened, is readable from the running base information (honesty); the
  kernel is the point mass at tau.
* ``natural_model_discrete``: the conditional CDF curves ``M^u`` solve an
  explicit one-step recursion driven by a positive martingale N, survival
  factors, an auxiliary martingale Y and a feedback function f with f(0) = 0;
  the kernel is read off the terminal increments in u.  Validity (paths in
  [0,1], monotonicity in u) is checked and violations are rejected, never
  repaired.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .enlargement import (
    DefaultKernel,
    EnlargedSpace,
    build_product_space,
    point_mass_kernel,
)
from .finite_prob import (
    INF,
    FiniteSpace,
    Filtration,
    InvariantError,
    NotAdaptedError,
    ProcessTable,
    cond_exp,
    is_martingale,
    martingale_closure,
    table_from_rows,
)
from .rationals import ONE, ZERO, Q, as_q


class ModelError(InvariantError):
    """A model parameter set violates its declared invariants."""


# ---------------------------------------------------------------------------
# Cox
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoxParams:
    """Adapted survival factors ``E_k = exp(-Lambda_k)``.

    Invariants: adapted, pathwise non-increasing, strictly positive, and
    ``E_0 = 1``.  The terminal row must repeat row n (no hazard beyond the
    horizon; the residual mass is the probability of no default).
    """

    survival: ProcessTable


def deterministic_survival(space: FiniteSpace, values: Sequence) -> ProcessTable:
    vals = [as_q(v) for v in values]
    rows = [(v,) * space.size for v in vals]
    rows.append(rows[-1])
    return table_from_rows(space, rows)


def _validate_survival(survival: ProcessTable, filtration: Filtration) -> None:
    if not survival.is_adapted(filtration):
        raise ModelError("survival factors are not adapted")
    if any(v != 1 for v in survival.row(0)):
        raise ModelError("survival must start at 1 (zero initial hazard)")
    for i in range(survival.space.size):
        path = [survival.row(k)[i] for k in range(survival.n + 1)]
        if any(p <= 0 for p in path):
            raise ModelError("survival factors must stay strictly positive")
        if any(path[k + 1] > path[k] for k in range(len(path) - 1)):
            raise ModelError("hazard must be non-decreasing along every path")
    if survival.row(INF) != survival.row(survival.n):
        raise ModelError("survival terminal row must repeat row n")


def cox_kernel(survival: ProcessTable, filtration: Filtration) -> DefaultKernel:
    _validate_survival(survival, filtration)
    n = filtration.n
    rows = []
    for i in range(survival.space.size):
        path = [survival.row(k)[i] for k in range(n + 1)]
        row = [ZERO]  # E_{0-} = E_0 = 1 forces zero mass at t_0
        for k in range(1, n + 1):
            row.append(path[k - 1] - path[k])
        row.append(path[n])
        rows.append(tuple(row))
    return DefaultKernel(tuple(rows))


def cox_model(
    base: FiniteSpace, filtration: Filtration, params: CoxParams
) -> EnlargedSpace:
    """Product-space model with kernel ``p(k|w) = E_{k-1}(w) - E_k(w)`` and
    residual mass ``p(INF|w) = E_n(w)``."""
    kernel = cox_kernel(params.survival, filtration)
    return build_product_space(base, filtration, kernel, model_kind="cox")


# ---------------------------------------------------------------------------
# density hypothesis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DensityParams:
    """Per-theta martingale tables ``alpha(theta)`` and reference weights mu.

    ``alpha[j]`` is the table of ``alpha_k(theta_j)`` for the j-th default
    grid point (j = 0..n, then INF last); ``mu`` are non-negative weights
    summing to 1.  On the support of mu, alpha must be strictly positive,
    adapted, a martingale in k, and satisfy sum_theta alpha_k(theta) mu(theta)
    = 1 atom-wise.
    """

    alpha: tuple  # tuple of ProcessTable, length n + 2
    mu: tuple  # default-grid weights, length n + 2

    def __post_init__(self):
        object.__setattr__(self, "mu", tuple(as_q(v) for v in self.mu))
        object.__setattr__(self, "alpha", tuple(self.alpha))


def density_params_from_terminal(
    base: FiniteSpace,
    filtration: Filtration,
    alpha_terminal: Sequence[Sequence],
    mu: Sequence,
) -> DensityParams:
    """Build a consistent parameter set by martingale closure of the given
    terminal densities ``alpha_n(theta, .)`` (one vector per default point)."""
    tables = tuple(
        martingale_closure(base, filtration, vec) for vec in alpha_terminal
    )
    return DensityParams(alpha=tables, mu=tuple(as_q(v) for v in mu))


def _validate_density(params: DensityParams, filtration: Filtration) -> None:
    n = filtration.n
    if len(params.mu) != n + 2 or len(params.alpha) != n + 2:
        raise ModelError("mu and alpha must cover the default grid plus INF")
    if any(v < 0 for v in params.mu):
        raise ModelError("mu weights must be non-negative")
    if sum(params.mu) != 1:
        raise ModelError("mu weights must sum to 1")
    support = [j for j, v in enumerate(params.mu) if v > 0]
    for j in support:
        table = params.alpha[j]
        if not table.is_adapted(filtration):
            raise ModelError("alpha stage values are not adapted")
        if any(v <= 0 for row in table.rows for v in row):
            raise ModelError("alpha must be strictly positive on the support")
        if not is_martingale(table, filtration):
            raise ModelError("alpha violates the martingale-in-k consistency")
    for k in range(n + 1):
        for i in range(filtration.space.size):
            total = sum(
                params.alpha[j].row(k)[i] * params.mu[j] for j in support
            )
            if total != 1:
                raise ModelError("alpha mu does not integrate to 1 atom-wise")


def density_model(
    base: FiniteSpace, filtration: Filtration, params: DensityParams
) -> EnlargedSpace:
    """Kernel ``p(theta|w) = alpha_n(theta, w) mu(theta)``; earlier-stage
    conditional laws reproduce ``alpha_k`` automatically by the martingale
    consistency."""
    _validate_density(params, filtration)
    n = filtration.n
    support = [j for j, v in enumerate(params.mu) if v > 0]
    rows = []
    for i in range(base.size):
        row = [ZERO] * (n + 2)
        for j in support:
            row[j] = params.alpha[j].row(n)[i] * params.mu[j]
        rows.append(tuple(row))
    space = build_product_space(
        base, filtration, DefaultKernel(tuple(rows)), model_kind="density"
    )
    return space


def density_change_of_measure(space: EnlargedSpace, params: DensityParams):
    """Density of the decoupling measure, ``1 / alpha_n(tau)`` atom-wise.

    Under it tau is independent of the base information with law mu.
    """
    n = space.n
    vals = []
    for i in range(space.product.size):
        theta = space.tau_values[i]
        j = n + 1 if theta == INF else int(theta)
        vals.append(ONE / params.alpha[j].row(n)[space.proj[i]])
    return tuple(vals)


# ---------------------------------------------------------------------------
# honest times
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HonestRule:
    """A last-visit style specification of tau on the base space."""

    name: str
    values_fn: Callable[[FiniteSpace, Filtration], Sequence]


def last_max_rule(driver: ProcessTable) -> HonestRule:
    """tau = last grid index at which the driver equals its running maximum."""

    def values(base: FiniteSpace, filtration: Filtration) -> list:
        out = []
        for i in range(base.size):
            path = [driver.row(k)[i] for k in range(filtration.n + 1)]
            m = max(path)
            out.append(max(k for k, v in enumerate(path) if v == m))
        return out

    return HonestRule("last-max", values)


def last_zero_rule(driver: ProcessTable) -> HonestRule:
    """tau = last grid index at which the driver sits at zero."""

    def values(base: FiniteSpace, filtration: Filtration) -> list:
        out = []
        for i in range(base.size):
            path = [driver.row(k)[i] for k in range(filtration.n + 1)]
            zeros = [k for k, v in enumerate(path) if v == 0]
            if not zeros:
                raise ModelError("last-zero rule needs a path visiting zero")
            out.append(max(zeros))
        return out

    return HonestRule("last-zero", values)


def custom_rule(fn: Callable[[FiniteSpace, Filtration], Sequence]) -> HonestRule:
    return HonestRule("custom", fn)


def check_honesty(
    values: Sequence, base: FiniteSpace, filtration: Filtration
) -> Optional[str]:
    """None if honest, else a description of the violated constraint.

    Honesty: tau is F_inf-measurable, and on {tau <= t_k} it coincides with a
    stage-k measurable variable, i.e. two atoms of one stage-k block that have
    both defaulted by t_k must agree on tau.
    """
    if not filtration.terminal.measurable(
        tuple(-1 if v == INF else v for v in values)
    ):
        return "tau is not measurable for the terminal stage"
    for k in range(filtration.n + 1):
        for block in filtration.stage(k).blocks:
            seen = {values[i] for i in block if values[i] != INF and values[i] <= k}
            if len(seen) > 1:
                return f"stage {k} block mixes default times {sorted(seen)}"
    return None


def honest_time_model(
    base: FiniteSpace, filtration: Filtration, rule: HonestRule
) -> EnlargedSpace:
    """Point-mass kernel at the rule's tau; honesty is re-verified structurally."""
    values = [
        v if v == INF else int(v) for v in rule.values_fn(base, filtration)
    ]
    for v in values:
        if v != INF and not (0 <= v <= filtration.n):
            raise ModelError("honest rule produced an off-grid value")
    defect = check_honesty(values, base, filtration)
    if defect is not None:
        raise ModelError(f"rule '{rule.name}' is not honest: {defect}")
    kernel = point_mass_kernel(filtration.n, values)
    return build_product_space(base, filtration, kernel, model_kind="honest")


# ---------------------------------------------------------------------------
# the natural family
# ---------------------------------------------------------------------------


def f_zero() -> tuple:
    return (lambda x: ZERO, lambda x: ZERO, ZERO, ZERO)


def f_linear(slope) -> tuple:
    c = as_q(slope)
    # On the relevant domain |x| <= 1 the declared bounds are |c| and |c|.
    return (lambda x: c * as_q(x), lambda x: c, abs(c), abs(c))


@dataclass(frozen=True)
class NaturalParams:
    """Inputs of the conditional-CDF recursion.

    ``f``/``f_prime`` must be rational-valued with ``f(0) = 0``; the declared
    bounds document the contract, they are not enforced pointwise.
    """

    N: ProcessTable
    survival: ProcessTable
    Y: ProcessTable
    f: Callable
    f_prime: Callable
    f_bound: object = ZERO
    f_prime_bound: object = ZERO


class NaturalModelError(ModelError):
    """The recursion produced an invalid kernel (out of range or non-monotone)."""


def _validate_natural(params: NaturalParams, filtration: Filtration) -> ProcessTable:
    if not is_martingale(params.N, filtration):
        raise ModelError("N must be an exact martingale")
    if any(v != 1 for v in params.N.row(0)):
        raise ModelError("N must start at 1")
    if any(v <= 0 for row in params.N.rows for v in row):
        raise ModelError("N must stay strictly positive")
    _validate_survival(params.survival, filtration)
    if not is_martingale(params.Y, filtration):
        raise ModelError("Y must be an exact martingale")
    if as_q(params.f(ZERO)) != 0:
        raise ModelError("f(0) = 0 is required")
    n = filtration.n
    z_rows = [
        tuple(
            params.N.row(k)[i] * params.survival.row(k)[i]
            for i in range(filtration.space.size)
        )
        for k in list(range(n + 1)) + [INF]
    ]
    z = ProcessTable(filtration.space, tuple(z_rows))
    for k in range(1, n + 1):
        for v in z.row(k):
            if not (0 < v < 1):
                raise ModelError(
                    "survival probability must stay strictly inside (0,1) "
                    "at interior stages"
                )
    return z


def solve_cdf_recursion(
    params: NaturalParams, filtration: Filtration, z: ProcessTable, u: int
) -> ProcessTable:
    """One conditional-CDF curve: started at ``1 - Z_u`` on stage u, evolved by
    the explicit left-point recursion, and closed backwards before u so the
    whole table is an exact martingale."""
    space = filtration.space
    size = space.size
    n = filtration.n
    start = tuple(ONE - z.row(u)[i] for i in range(size))
    rows_fwd = {u: start}
    cur = start
    for k in list(range(u + 1, n + 1)) + [INF]:
        prev = filtration.prev(k) if k == INF else k - 1
        dn = params.N.increment(k)
        dy = params.Y.increment(k)
        nxt = []
        for i in range(size):
            if cur[i] == 0:
                # a null curve stays null regardless of the coefficients
                nxt.append(ZERO)
                continue
            zp = z.row(prev)[i]
            if zp == 1:
                raise NaturalModelError(
                    "recursion needs 1 - Z > 0 wherever the curve is alive"
                )
            ep = params.survival.row(prev)[i]
            gap = cur[i] - (ONE - zp)
            factor = ONE - (ep / (ONE - zp)) * dn[i] + as_q(params.f(gap)) * dy[i]
            nxt.append(cur[i] * factor)
        cur = tuple(nxt)
        rows_fwd[k] = cur
    # backward closure before u, forward rows after u
    all_rows = []
    for k in range(n + 1):
        if k < u:
            all_rows.append(cond_exp(start, filtration.stage(k)))
        else:
            all_rows.append(rows_fwd[k])
    all_rows.append(rows_fwd[INF])
    return ProcessTable(space, tuple(all_rows))


def natural_model_discrete(
    base: FiniteSpace, filtration: Filtration, params: NaturalParams
) -> tuple[EnlargedSpace, dict]:
    """Build the model and return ``(space, m_curves)`` with one CDF table per
    grid index u.

    The builder validates 0 <= M^u <= 1, monotonicity in u, and the exact
    martingale property of every curve; the kernel is derived from terminal
    increments in u and the resulting space is checked against both target
    conditions (base-measure restriction, survival projection) exactly.
    """
    z = _validate_natural(params, filtration)
    n = filtration.n
    size = base.size
    curves = {u: solve_cdf_recursion(params, filtration, z, u) for u in range(n + 1)}
    violations = []
    for u, table in curves.items():
        if not is_martingale(table, filtration):
            violations.append(f"M^{u} is not a martingale")
        for k in list(range(n + 1)) + [INF]:
            for i, v in enumerate(table.row(k)):
                if not (0 <= v <= 1):
                    violations.append(
                        f"M^{u} leaves [0,1] at stage {k}, atom {base.atoms[i]}"
                    )
                    break
            else:
                continue
            break
    for u in range(1, n + 1):
        lo, hi = curves[u - 1], curves[u]
        for k in list(range(n + 1)) + [INF]:
            if any(lo.row(k)[i] > hi.row(k)[i] for i in range(size)):
                violations.append(f"M^{u-1} exceeds M^{u} at stage {k}")
                break
    if violations:
        raise NaturalModelError("; ".join(violations[:4]))

    rows = []
    for i in range(size):
        row = [curves[0].row(INF)[i]]
        for u in range(1, n + 1):
            row.append(curves[u].row(INF)[i] - curves[u - 1].row(INF)[i])
        row.append(ONE - curves[n].row(INF)[i])
        rows.append(tuple(row))
    kernel = DefaultKernel(tuple(rows))
    space = build_product_space(base, filtration, kernel, model_kind="natural")

    # projection condition: conditional survival equals N_k E_k atom-wise
    for k in range(n + 1):
        ind = tuple(
            ONE if space.tau_values[i] > k or space.tau_values[i] == INF else ZERO
            for i in range(space.product.size)
        )
        lhs = cond_exp(ind, space.lifted_F.stage(k))
        rhs = space.lift_vector(z.row(k))
        if lhs != rhs:
            raise NaturalModelError("projection condition failed exactly")
    return space, curves


def natural_z(params: NaturalParams, filtration: Filtration) -> ProcessTable:
    """The survival probability table ``Z = N exp(-Lambda)`` on the base."""
    return _validate_natural(params, filtration)
