import random

import pytest

from taulab.calculus import (
    MeasureChange,
    default_martingale_L,
    drift_exact,
    girsanov_transform,
    sh_measure_check,
    unit_measure,
)
from taulab.enlargement import build_product_space, gtau_equality, point_mass_kernel
from taulab.finite_prob import (
    INF,
    Filtration,
    constant_time,
    discrete_partition,
    is_martingale,
    martingale_closure,
    partition_from_keys,
    table_from_rows,
    trivial_partition,
    uniform_space,
)
from taulab.generators import (
    CURATED,
    fair_walk,
    full_basis_drivers,
    random_enlarged,
    tree_drivers,
)
from taulab.models import density_change_of_measure
from taulab.rationals import ONE, ZERO, Q
from taulab.representation import (
    DriverError,
    MrpGapError,
    ShMeasureError,
    fragment_mrp_check,
    honest_full_representation,
    immersion_check,
    integrand_solver_before,
    lemma_5_3_reduce,
    mrp_check,
    prepare_solver,
    theorem_harness,
)


# ---------------------------------------------------------------------------
# representation certificates
# ---------------------------------------------------------------------------


def test_mrp_binary_tree_single_driver_spans(walk2):
    cert = mrp_check(walk2.space, None, walk2.filtration, [walk2.drivers[0]])
    assert cert.spanning
    for (_, mz, sp) in cert.dimensions:
        assert mz == sp


def test_mrp_ternary_node_single_driver_gap():
    space = uniform_space(("a", "b", "c"))
    disc = discrete_partition(space)
    filt = Filtration(space, (0, 1), (trivial_partition(space), disc), disc)
    w = table_from_rows(space, [(0, 0, 0), (1, 0, -1), (1, 0, -1)])
    cert = mrp_check(space, None, filt, [w])
    assert cert.verdict == "gap"
    # witness soundness: a nonzero bounded martingale, null at 0, strongly
    # orthogonal to the driver
    n = cert.witness
    assert any(v != 0 for row in n.rows for v in row)
    assert all(v == 0 for v in n.row(0))
    assert is_martingale(n, filt)
    assert is_martingale(n.mul(w), filt)
    assert max(abs(v) for row in n.rows for v in row) <= 1
    # the mean-zero space at the ternary node is 2-dimensional, one spanned
    assert cert.dimensions[0][1] == 2 and cert.dimensions[0][2] == 1


def test_mrp_cox_enlargement_spans(curated):
    nm = curated["cox"]
    sp = nm.space
    tilde = [drift_exact(d, sp).martingale_part for d in nm.drivers]
    cert = mrp_check(sp.product, None, sp.G, tilde + [default_martingale_L(sp)])
    assert cert.spanning


def test_mrp_driver_must_be_martingale(walk2):
    not_mart = walk2.drivers[0].map(lambda v: v + 1)
    with pytest.raises(DriverError):
        mrp_check(walk2.space, None, walk2.filtration, [not_mart])


def test_mrp_spanning_reconstructs_generators(walk2):
    # spanning certificate soundness: every bounded martingale is exactly a
    # stochastic integral of the drivers
    from taulab.representation import solve_integrands
    from taulab.finite_prob import stochastic_integral

    drivers = [walk2.drivers[0]]
    for b in range(walk2.space.size):
        ind = tuple(ONE if i == b else ZERO for i in range(walk2.space.size))
        target = martingale_closure(walk2.space, walk2.filtration, ind)
        j = solve_integrands(walk2.space, walk2.filtration, drivers, target)
        total = stochastic_integral(j[0], drivers[0])
        want = target - martingale_closure(
            walk2.space, walk2.filtration, target.row(0)
        )
        assert total.rows == (target - target.map(lambda v: 0) + total).rows or all(
            total.row(k)[i] == target.row(k)[i] - target.row(0)[i]
            for k in (0, 1, 2, INF)
            for i in range(walk2.space.size)
        )


def test_mrp_verdict_invariant_under_measure_change():
    rng = random.Random(71)
    for _ in range(20):
        sp = random_enlarged(rng, 4, 3)
        drivers = list(tree_drivers(sp.product, sp.lifted_F))
        base_cert = mrp_check(sp.product, None, sp.lifted_F, drivers)
        # a strictly positive density, then transform the drivers
        raw = tuple(Q(rng.randint(1, 5)) for _ in range(sp.product.size))
        from taulab.calculus import measure_from_positive

        measure = measure_from_positive(sp.product, raw)
        eta = martingale_closure(sp.product, sp.lifted_F, measure.density)
        transformed = [
            girsanov_transform(d, eta, sp.lifted_F) for d in drivers
        ]
        cert2 = mrp_check(sp.product, measure, sp.lifted_F, transformed)
        assert cert2.verdict == base_cert.verdict


# ---------------------------------------------------------------------------
# integrand solver
# ---------------------------------------------------------------------------


def test_solver_constant_payoff(curated):
    nm = curated["cox"]
    sp = nm.space
    zeta = (Q(5, 7),) * sp.product.size
    triple = integrand_solver_before(sp, zeta, list(nm.drivers))
    assert triple.identity_holds
    assert all(v == 0 for j in triple.J for row in j.rows for v in row)
    assert all(v == 0 for row in triple.K.rows for v in row)
    assert all(v == 0 for v in triple.xi)


def test_solver_cox_default_time_payoff(curated):
    # zeta = 1 on {tau = first hazard step}: reconstruction is exact and the
    # default-leg integrand matches the oracle value on the hazard node
    nm = curated["cox"]
    sp = nm.space
    zeta = tuple(ONE if sp.tau_values[i] == 2 else ZERO for i in range(sp.product.size))
    triple = integrand_solver_before(sp, zeta, list(nm.drivers))
    assert triple.identity_holds
    # K_2 = (1 - X_2) on the alive nodes at the hazard step, block-wise
    for block in sp.lifted_F.stage_before(2).blocks:
        hit = [i for i in block if sp.tau_values[i] == 2]
        if not hit:
            continue
        w = sp.product.weight
        tot = sum(w[i] for i in hit)
        want = sum(w[i] * (zeta[i] - triple.X.row(2)[i]) for i in hit) / tot
        assert triple.K.row(2)[block[0]] == want
    assert all(v == 0 for v in triple.xi)  # the equality at tau holds here


def test_solver_detcoin_needs_residual(curated):
    nm = curated["detcoin"]
    sp = nm.space
    coin = nm.drivers[0]
    zeta = coin.value_at(sp.tau)
    triple = integrand_solver_before(sp, zeta, [coin])
    assert triple.identity_holds
    assert any(v != 0 for v in triple.xi)
    g_before = sp.g_before(sp.tau)
    from taulab.finite_prob import cond_exp

    assert all(v == 0 for v in cond_exp(triple.xi, g_before))


def test_solver_requires_measurability_at_tau(curated):
    nm = curated["cox"]
    sp = nm.space
    # a terminal-only variable is not known at tau on this model
    term = sp.G.terminal
    bad = tuple(Q(term.block_of[i]) for i in range(sp.product.size))
    with pytest.raises(Exception):
        integrand_solver_before(sp, bad, list(nm.drivers))


def test_solver_propagates_base_gap():
    space = uniform_space(("a", "b", "c"))
    disc = discrete_partition(space)
    filt = Filtration(space, (0, 1), (trivial_partition(space), disc), disc)
    w = table_from_rows(space, [(0, 0, 0), (1, 0, -1), (1, 0, -1)])
    sp = build_product_space(space, filt, point_mass_kernel(1, [INF] * 3))
    with pytest.raises(MrpGapError) as exc:
        integrand_solver_before(sp, (ONE, ZERO, ZERO), [sp.lift_table(w)])
    assert exc.value.certificate.verdict == "gap"


def test_solver_random_models_exact_and_xi_criterion():
    rng = random.Random(404)
    for _ in range(25):
        sp = random_enlarged(rng, 4, 3)
        drivers = list(tree_drivers(sp.product, sp.lifted_F))
        ctx = prepare_solver(sp, drivers)
        gte = gtau_equality(sp)
        g_tau = sp.g_at(sp.tau)
        for b in range(min(g_tau.n_blocks, 3)):
            zeta = tuple(
                ONE if g_tau.block_of[i] == b else ZERO
                for i in range(sp.product.size)
            )
            triple = integrand_solver_before(sp, zeta, drivers, ctx)
            assert triple.identity_holds
            if gte:
                assert all(v == 0 for v in triple.xi)


# ---------------------------------------------------------------------------
# honest full representation
# ---------------------------------------------------------------------------


def test_honest_full_before_horizon_variable(curated):
    nm = curated["honest"]
    sp = nm.space
    rep = honest_full_representation(sp, sp.lift_vector((1, 1, 1, 1)), list(nm.drivers))
    assert rep.identity_holds
    assert all(v == 0 for j in rep.J_before + rep.J_after for row in j.rows for v in row)


def test_honest_full_terminal_walk_value(curated):
    nm = curated["honest"]
    sp = nm.space
    zeta = nm.drivers[0].row(INF)
    rep = honest_full_representation(sp, zeta, list(nm.drivers))
    assert rep.identity_holds
    assert any(v != 0 for j in rep.J_after for row in j.rows for v in row)


def test_honest_full_random_rules():
    from taulab.generators import random_honest_model

    rng = random.Random(31337)
    for _ in range(10):
        sp = random_honest_model(rng, 4)
        drivers = list(tree_drivers(sp.product, sp.lifted_F))
        term = sp.G.terminal
        zeta = tuple(Q(term.block_of[i]) for i in range(sp.product.size))
        rep = honest_full_representation(sp, zeta, drivers)
        assert rep.identity_holds


def test_honest_full_rejects_other_models(curated):
    nm = curated["cox"]
    with pytest.raises(Exception):
        honest_full_representation(nm.space, (ZERO,) * nm.space.product.size, list(nm.drivers))


# ---------------------------------------------------------------------------
# fragments under skewed-immersion measures
# ---------------------------------------------------------------------------


def test_fragment_mrp_density_reduced(curated):
    nm = curated["density"]
    sp = nm.space
    measure = MeasureChange(
        sp.product, density_change_of_measure(sp, nm.extras["params"])
    )
    start = constant_time(sp.product, 0)
    end = constant_time(sp.product, sp.n)
    reduced = lemma_5_3_reduce(sp, start, end)
    cert = fragment_mrp_check(sp, measure, reduced, end, list(nm.drivers))
    assert cert.spanning


def test_fragment_mrp_honest_constructed(curated):
    from taulab.calculus import build_sh_measure_honest

    nm = curated["honest"]
    sp = nm.space
    built = build_sh_measure_honest(sp, sp.n, 10**9)
    cert = fragment_mrp_check(sp, built.measure, built.start, built.end, list(nm.drivers))
    assert cert.spanning


def test_fragment_mrp_empty_interval_vacuous(curated):
    nm = curated["cox"]
    sp = nm.space
    t = constant_time(sp.product, 0)
    cert = fragment_mrp_check(sp, unit_measure(sp.product), t, t, list(nm.drivers))
    assert cert.spanning
    assert all(mz == 0 for (_, mz, _) in cert.dimensions)


def test_fragment_mrp_rejects_non_sh_measure(curated):
    nm = curated["honest"]
    sp = nm.space
    with pytest.raises(ShMeasureError):
        fragment_mrp_check(
            sp,
            unit_measure(sp.product),
            sp.tau,
            constant_time(sp.product, INF),
            list(nm.drivers),
        )


def test_fragment_composition_implies_global(curated):
    # spanning on a verified covering of (tau, oo) plus the stopped-side
    # representation implies the full-line verdict, model by model
    from taulab.calculus import covering_covers_after_tau, default_after_covering

    for name in ("cox", "density", "honest", "tau-inf"):
        nm = curated[name]
        sp = nm.space
        covering = default_after_covering(sp)
        assert covering_covers_after_tau(sp, covering)
        for iv in covering:
            cert = fragment_mrp_check(sp, iv.measure, iv.start, iv.end, list(nm.drivers))
            assert cert.spanning
        rep = theorem_harness(sp, list(nm.drivers))
        if rep.booleans["a_stopped_mrp"] and rep.booleans["c_gtau_equality"]:
            assert rep.booleans["e_global_mrp"]


# ---------------------------------------------------------------------------
# the equivalence harness
# ---------------------------------------------------------------------------


def test_harness_cox_all_true(curated):
    rep = theorem_harness(curated["cox"].space, list(curated["cox"].drivers))
    assert all(rep.booleans.values())
    assert rep.all_passed and rep.covering_verified


def test_harness_detcoin_both_sides_false(curated):
    rep = theorem_harness(curated["detcoin"].space, list(curated["detcoin"].drivers))
    b = rep.booleans
    assert not b["b_driver_at_tau_predictable"] and not b["c_gtau_equality"]
    assert rep.all_passed


def test_harness_honest_immersion_fails_consistently(curated):
    rep = theorem_harness(curated["honest"].space, list(curated["honest"].drivers))
    assert not rep.booleans["d_immersion"]
    assert rep.all_passed


def test_harness_requires_base_mrp():
    space = uniform_space(("a", "b", "c"))
    disc = discrete_partition(space)
    filt = Filtration(space, (0, 1), (trivial_partition(space), disc), disc)
    w = table_from_rows(space, [(0, 0, 0), (1, 0, -1), (1, 0, -1)])
    sp = build_product_space(space, filt, point_mass_kernel(1, [INF] * 3))
    with pytest.raises(MrpGapError):
        theorem_harness(sp, [sp.lift_table(w)])


def test_harness_rejects_bad_supplied_covering(curated):
    from taulab.calculus import CoveringInterval
    from taulab.finite_prob import InvariantError

    nm = curated["honest"]
    sp = nm.space
    bad = [
        CoveringInterval(
            sp.tau, constant_time(sp.product, INF), unit_measure(sp.product)
        )
    ]
    with pytest.raises(InvariantError):
        theorem_harness(sp, list(nm.drivers), covering=bad)


def test_immersion_check_examples(curated):
    assert immersion_check(curated["cox"].space)
    assert not immersion_check(curated["honest"].space)
    assert immersion_check(curated["tau-inf"].space)
