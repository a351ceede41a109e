import random

import pytest

from taulab.calculus import azema_Z
from taulab.enlargement import build_product_space, point_mass_kernel
from taulab.finite_prob import (
    INF,
    FiniteSpace,
    Filtration,
    cond_exp,
    discrete_partition,
    is_martingale,
    partition_from_keys,
    table_from_rows,
    trivial_partition,
    uniform_space,
)
from taulab.generators import curated_honest, curated_natural, fair_walk
from taulab.models import (
    CoxParams,
    ModelError,
    NaturalModelError,
    NaturalParams,
    check_honesty,
    cox_model,
    custom_rule,
    density_model,
    density_params_from_terminal,
    deterministic_survival,
    f_linear,
    f_zero,
    honest_time_model,
    last_max_rule,
    last_zero_rule,
    natural_model_discrete,
    natural_z,
)
from taulab.rationals import ONE, ZERO, Q
from taulab.representation import immersion_check


# ---------------------------------------------------------------------------
# Cox
# ---------------------------------------------------------------------------


def test_cox_deterministic_survival_projection(walk2):
    surv = deterministic_survival(walk2.space, ["1", "1/2", "1/4"])
    sp = cox_model(walk2.space, walk2.filtration, CoxParams(surv))
    z = azema_Z(sp)
    assert set(z.row(0)) == {ONE}
    assert set(z.row(1)) == {Q(1, 2)}
    assert set(z.row(2)) == {Q(1, 4)}


def test_cox_zero_hazard_never_defaults(walk2):
    surv = deterministic_survival(walk2.space, ["1", "1", "1"])
    sp = cox_model(walk2.space, walk2.filtration, CoxParams(surv))
    assert all(v == INF for v in sp.tau_values)
    z = azema_Z(sp)
    for k in (0, 1, 2, INF):
        assert set(z.row(k)) == {ONE}


def test_cox_adapted_hazard_by_oracle(walk2):
    # survival drops to 1/2 on heads and to 1/4 on tails after step 1
    up = tuple(ONE if a.startswith("u") else ZERO for a in walk2.space.atoms)
    row1 = tuple(Q(1, 2) if u else Q(1, 4) for u in up)
    surv = table_from_rows(
        walk2.space, [(ONE,) * 4, row1, row1, row1]
    )
    sp = cox_model(walk2.space, walk2.filtration, CoxParams(surv))
    z = azema_Z(sp)
    assert z.row(1) == sp.lift_vector(row1)
    # kernel rows by telescoping survival per path
    for i in range(sp.base.size):
        e1 = surv.row(1)[i]
        assert sp.kernel.rows[i] == (ZERO, ONE - e1, ZERO, e1)
    assert immersion_check(sp)


def test_cox_rejects_increasing_survival(walk2):
    bad = deterministic_survival(walk2.space, ["1", "1/2", "3/4"])
    with pytest.raises(ModelError):
        cox_model(walk2.space, walk2.filtration, CoxParams(bad))


def test_cox_rejects_non_adapted_survival(walk2):
    up_at_2 = tuple(
        Q(1, 2) if a[1] == "u" else Q(1, 4) for a in walk2.space.atoms
    )
    rows = [(ONE,) * 4, up_at_2, up_at_2, up_at_2]  # row 1 peeks at step 2
    with pytest.raises(ModelError):
        cox_model(walk2.space, walk2.filtration, CoxParams(table_from_rows(walk2.space, rows)))


# ---------------------------------------------------------------------------
# density
# ---------------------------------------------------------------------------


def test_density_uniform_alpha_is_independent(walk2):
    n = walk2.filtration.n
    mu = [Q(1, 4), Q(1, 4), Q(1, 4), Q(1, 4)]  # over {t_0, t_1, t_2, INF}
    ones = [(ONE,) * 4 for _ in range(n + 2)]
    params = density_params_from_terminal(walk2.space, walk2.filtration, ones, mu)
    sp = density_model(walk2.space, walk2.filtration, params)
    for i in range(sp.base.size):
        assert sp.kernel.rows[i] == tuple(mu)
    assert immersion_check(sp)


def test_density_coin_tilt_bayes_oracle(walk2):
    mu = [ZERO, Q(1, 2), Q(1, 2), ZERO]
    up = tuple(ONE if a.startswith("u") else ZERO for a in walk2.space.atoms)
    a1 = tuple(Q(3, 2) if u else Q(1, 2) for u in up)
    a2 = tuple(Q(1, 2) if u else Q(3, 2) for u in up)
    alpha_term = [(ONE,) * 4, a1, a2, (ONE,) * 4]
    params = density_params_from_terminal(walk2.space, walk2.filtration, alpha_term, mu)
    sp = density_model(walk2.space, walk2.filtration, params)
    for i in range(sp.base.size):
        want = (ZERO, a1[i] * Q(1, 2), a2[i] * Q(1, 2), ZERO)
        assert sp.kernel.rows[i] == want
    # conditional law at stage 1 reproduces alpha_1 = E[alpha_n | F_1] exactly
    for theta, table in ((1, params.alpha[1]), (2, params.alpha[2])):
        ind = tuple(
            ONE if sp.tau_values[i] == theta else ZERO
            for i in range(sp.product.size)
        )
        got = cond_exp(ind, sp.lifted_F.stage(1))
        want = tuple(
            table.row(1)[sp.proj[i]] * mu[theta] for i in range(sp.product.size)
        )
        assert got == want


def test_density_positivity_preserved(curated):
    sp = curated["density"].space
    support = {v for v in sp.tau_values}
    for i in range(sp.base.size):
        for j, p in enumerate(sp.kernel.rows[i]):
            theta = INF if j == sp.n + 1 else j
            if theta in support:
                assert p > 0 or theta not in support
    assert all(w > 0 for w in sp.product.weight)


def test_density_rejects_broken_martingale_consistency(walk2):
    mu = [ZERO, Q(1, 2), Q(1, 2), ZERO]
    ones = (ONE,) * 4
    tables = [
        table_from_rows(walk2.space, [ones] * 4),
        table_from_rows(walk2.space, [ones, ones, (Q(3, 2),) * 4, (Q(3, 2),) * 4]),
        table_from_rows(walk2.space, [ones, ones, (Q(1, 2),) * 4, (Q(1, 2),) * 4]),
        table_from_rows(walk2.space, [ones] * 4),
    ]
    from taulab.models import DensityParams

    with pytest.raises(ModelError):
        density_model(
            walk2.space, walk2.filtration, DensityParams(tuple(tables), tuple(mu))
        )


# ---------------------------------------------------------------------------
# honest times
# ---------------------------------------------------------------------------


def test_honest_last_max_walk_model(walk2):
    sp = honest_time_model(walk2.space, walk2.filtration, last_max_rule(walk2.drivers[0]))
    z = azema_Z(sp)
    assert set(z.row(0)) == {Q(3, 4)}
    assert set(z.row(1)) == {Q(1, 2)}
    assert set(z.row(2)) == {ZERO}
    taus = dict(zip([a[1] for a in sp.product.atoms], sp.tau_values))
    assert taus == {"uu": 2, "ud": 1, "du": 2, "dd": 0}


def test_honest_horizon_time(walk2):
    sp = honest_time_model(
        walk2.space, walk2.filtration, custom_rule(lambda b, f: [f.n] * b.size)
    )
    z = azema_Z(sp)
    for k in range(walk2.filtration.n):
        assert set(z.row(k)) == {ONE}
    assert set(z.row(walk2.filtration.n)) == {ZERO}


def test_honest_stopping_time_rule_keeps_G_equal_to_joins(walk2):
    # a first-hitting time is in particular honest
    w = walk2.drivers[0]

    def first_hit(base, filtration):
        out = []
        for i in range(base.size):
            hits = [k for k in range(filtration.n + 1) if w.row(k)[i] == 1]
            out.append(hits[0] if hits else filtration.n)
        return out

    sp = honest_time_model(walk2.space, walk2.filtration, custom_rule(first_hit))
    # tau is then a base stopping time, so G_k is generated by F_k joins
    from taulab.finite_prob import generate_partition

    for k in range(sp.n + 1):
        state = tuple(
            sp.tau_values[i] if sp.tau_values[i] <= k else -1
            for i in range(sp.product.size)
        )
        want = generate_partition(sp.product, [sp.lifted_F.stage(k), state])
        assert sp.G.stage(k).block_of == want.block_of


def test_last_zero_rule_honest(walk2):
    sp = honest_time_model(walk2.space, walk2.filtration, last_zero_rule(walk2.drivers[0]))
    assert check_honesty(list(sp.tau_values[i] for i in range(4)), walk2.space, walk2.filtration) is None


def test_dishonest_rule_rejected(walk2):
    # two paths indistinguishable at time 1 defaulted with different times:
    # tau cannot coincide with any stage-1 measurable variable on {tau <= 1}
    def rule(base, filtration):
        table = {"uu": 0, "ud": 1, "du": 2, "dd": 2}
        return [table[a] for a in base.atoms]

    with pytest.raises(ModelError):
        honest_time_model(walk2.space, walk2.filtration, custom_rule(rule))


# ---------------------------------------------------------------------------
# the natural family
# ---------------------------------------------------------------------------


def _plain_params(walk2, f_pair=None, n_table=None):
    f, fp, fb, fpb = f_pair or f_zero()
    walk = walk2.drivers[0]
    return NaturalParams(
        N=n_table if n_table is not None else walk.map(lambda v: ONE),
        survival=deterministic_survival(walk2.space, ["1", "3/5", "2/5"]),
        Y=walk,
        f=f,
        f_prime=fp,
        f_bound=fb,
        f_prime_bound=fpb,
    )


def test_natural_reduces_to_cox_when_f_zero_n_one(walk2):
    params = _plain_params(walk2)
    sp, curves = natural_model_discrete(walk2.space, walk2.filtration, params)
    for u in (0, 1, 2):
        want = ONE - params.survival.row(u)[0]
        for k in list(range(u, 3)) + [INF]:
            assert set(curves[u].row(k)) == {want}
    cox = cox_model(walk2.space, walk2.filtration, CoxParams(params.survival))
    assert sp.kernel.rows == cox.kernel.rows


def test_natural_curves_start_at_one_minus_survival(walk2):
    nm = curated_natural()
    params = nm.extras["params"]
    curves = nm.extras["curves"]
    z = natural_z(params, nm.space.base_filtration)
    for u in (0, 1, 2):
        assert curves[u].row(u) == tuple(ONE - v for v in z.row(u))


def test_natural_coin_model_oracle(walk2):
    # recompute the recursion directly on every atom
    nm = curated_natural()
    params, curves = nm.extras["params"], nm.extras["curves"]
    filt = fair_walk(2).filtration
    z = natural_z(params, filt)
    u = 1
    for i in range(4):
        m = ONE - z.row(1)[i]
        zp = z.row(1)[i]
        ep = params.survival.row(1)[i]
        gap = m - (ONE - zp)
        dn = params.N.row(2)[i] - params.N.row(1)[i]
        dy = params.Y.row(2)[i] - params.Y.row(1)[i]
        m2 = m * (ONE - (ep / (ONE - zp)) * dn + params.f(gap) * dy)
        assert curves[u].row(2)[i] == m2
    # projection condition holds exactly on the built space
    sp = nm.space
    z_lift = sp.lift_table(z)
    assert azema_Z(sp).rows[:-1] == z_lift.rows[:-1]


def test_natural_validation_rejects_exploding_parameters():
    # a three-step horizon lets the feedback term act on a nonzero gap, and a
    # large slope pushes the curve out of [0, 1]: rejected, never clamped
    bm = fair_walk(3)
    f, fp, fb, fpb = f_linear(40)
    params = NaturalParams(
        N=bm.drivers[0].map(lambda v: ONE),
        survival=deterministic_survival(bm.space, ["1", "3/5", "1/2", "2/5"]),
        Y=bm.drivers[0],
        f=f,
        f_prime=fp,
        f_bound=fb,
        f_prime_bound=fpb,
    )
    with pytest.raises(NaturalModelError):
        natural_model_discrete(bm.space, bm.filtration, params)


def test_natural_requires_interior_survival(walk2):
    params = NaturalParams(
        N=walk2.drivers[0].map(lambda v: ONE),
        survival=deterministic_survival(walk2.space, ["1", "1", "2/5"]),
        Y=walk2.drivers[0],
        f=f_zero()[0],
        f_prime=f_zero()[1],
    )
    with pytest.raises(ModelError):
        natural_model_discrete(walk2.space, walk2.filtration, params)


def test_natural_requires_f_vanishing_at_zero(walk2):
    bad = NaturalParams(
        N=walk2.drivers[0].map(lambda v: ONE),
        survival=deterministic_survival(walk2.space, ["1", "3/5", "2/5"]),
        Y=walk2.drivers[0],
        f=lambda x: Q(1, 7),
        f_prime=lambda x: ZERO,
    )
    with pytest.raises(ModelError):
        natural_model_discrete(walk2.space, walk2.filtration, bad)
