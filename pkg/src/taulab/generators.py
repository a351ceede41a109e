"""Model factories: curated desk models and randomized generators.

The randomized generators draw small trees (a few steps, a few branches per
node) with exact rational weights and kernels; they are the workhorse of the
property suites.  The curated builders return the named scenarios used by the
command-line interface and the acceptance suite.  Hazard steps of the curated
Cox and density models sit on their own grid points, interleaved with the
driver moves: this grid refinement is the finite analogue of a default time
that avoids the base stopping times, and it is what makes the full set of
structural booleans come out true there.
"""

from __future__ import annotations

import random
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
    Partition,
    ProcessTable,
    StoppingTime,
    discrete_partition,
    generate_partition,
    martingale_closure,
    partition_from_keys,
    table_from_rows,
    trivial_partition,
    uniform_space,
)
from .models import (
    CoxParams,
    DensityParams,
    NaturalParams,
    cox_model,
    density_model,
    density_params_from_terminal,
    deterministic_survival,
    f_linear,
    f_zero,
    honest_time_model,
    last_max_rule,
)
from .rationals import ONE, ZERO, Q, as_q


# ---------------------------------------------------------------------------
# walks and trees
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BaseModel:
    space: FiniteSpace
    filtration: Filtration
    drivers: tuple  # martingale tables


def fair_walk(steps: int) -> BaseModel:
    """Binary tree with the symmetric +-1 walk; one driver spanning every node."""
    paths = [()]
    for _ in range(steps):
        paths = [p + (s,) for p in paths for s in (1, -1)]
    space = uniform_space(tuple("".join("u" if s > 0 else "d" for s in p) for p in paths))
    stages = []
    for k in range(steps + 1):
        keys = tuple(space.atoms[i][:k] for i in range(space.size))
        stages.append(partition_from_keys(space, keys))
    filtration = Filtration(space, tuple(range(steps + 1)), tuple(stages), stages[-1])
    rows = []
    for k in range(steps + 1):
        rows.append(
            tuple(
                sum(1 if ch == "u" else -1 for ch in space.atoms[i][:k])
                for i in range(space.size)
            )
        )
    rows.append(rows[-1])
    walk = table_from_rows(space, rows)
    return BaseModel(space, filtration, (walk,))


def lazy_walk(steps: int, move_at: Sequence[int]) -> BaseModel:
    """Walk moving only at the listed steps, flat elsewhere.

    The idle steps are where curated models put their hazard mass.
    """
    move_at = sorted(set(move_at))
    inner = fair_walk(len(move_at))
    space = inner.space
    stages = []
    moves_done = 0
    rows = [inner.drivers[0].row(0)]
    for k in range(1, steps + 1):
        if moves_done < len(move_at) and move_at[moves_done] == k:
            moves_done += 1
        stages.append(inner.filtration.stage(moves_done))
        rows.append(inner.drivers[0].row(moves_done))
    stages = [inner.filtration.stage(0)] + stages
    rows.append(rows[-1])
    filtration = Filtration(
        space, tuple(range(steps + 1)), tuple(stages), stages[-1]
    )
    return BaseModel(space, filtration, (table_from_rows(space, rows),))


def split_walk(steps: int, d: int) -> BaseModel:
    """d drivers taking turns: driver i moves at steps congruent to i mod d.

    The drivers are strongly orthogonal (disjoint jump support) and together
    span every node of the binary tree.
    """
    inner = fair_walk(steps)
    space = inner.space
    walk = inner.drivers[0]
    drivers = []
    for r in range(d):
        acc = [ZERO] * space.size
        rows = [tuple(acc)]
        for k in range(1, steps + 1):
            if (k - 1) % d == r:
                dw = walk.increment(k)
                acc = [acc[i] + dw[i] for i in range(space.size)]
            rows.append(tuple(acc))
        rows.append(rows[-1])
        drivers.append(table_from_rows(space, rows))
    return BaseModel(space, inner.filtration, tuple(drivers))


def random_tree(
    rng: random.Random,
    max_steps: int = 5,
    max_branch: int = 3,
    terminal_split: bool = False,
) -> BaseModel:
    """Random weighted tree with its natural filtration; drivers left empty."""
    steps = rng.choice(list(range(2, max_steps + 1)) + [2, 3])
    cur = [((), ONE)]
    for k in range(steps + (1 if terminal_split else 0)):
        nxt = []
        for path, w in cur:
            nb = rng.choice([1] + [2] * 3 + [3] * (1 if max_branch >= 3 else 0))
            raw = [rng.randint(1, 4) for _ in range(nb)]
            tot = sum(raw)
            for c, r in enumerate(raw):
                nxt.append((path + (c,), w * Q(r, tot)))
        cur = nxt
    atoms = tuple("-".join(map(str, p)) or "o" for p, _ in cur)
    weights = tuple(w for _, w in cur)
    space = FiniteSpace(atoms, weights)
    prefixes = [p for p, _ in cur]
    stages = []
    for k in range(steps + 1):
        stages.append(partition_from_keys(space, tuple(p[:k] for p in prefixes)))
    terminal = partition_from_keys(
        space, tuple(p[: steps + 1] for p in prefixes)
    ) if terminal_split else stages[-1]
    filtration = Filtration(space, tuple(range(steps + 1)), tuple(stages), terminal)
    return BaseModel(space, filtration, ())


def full_basis_drivers(space: FiniteSpace, filtration: Filtration) -> tuple:
    """Closures of all terminal-block indicators: a driver family carrying
    the representation property at every node by construction."""
    term = filtration.terminal
    out = []
    for b in range(term.n_blocks):
        ind = tuple(
            ONE if term.block_of[i] == b else ZERO for i in range(space.size)
        )
        out.append(martingale_closure(space, filtration, ind))
    return tuple(out)


def tree_drivers(space: FiniteSpace, filtration: Filtration) -> tuple:
    """A minimal spanning martingale family for an arbitrary tree filtration.

    Driver r jumps, at each node with m child blocks, by the centered
    indicator of child r+1 (zero when the node has fewer children), so the
    family spans the mean-zero space of every node with max-branching minus
    one drivers.
    """
    w = space.weight
    max_branch = 1
    steps = list(range(1, filtration.n + 1)) + [INF]
    structure = []
    for k in steps:
        prev = filtration.stage_before(k)
        cur = filtration.stage(k)
        nodes = []
        for block in prev.blocks:
            children: dict = {}
            for i in block:
                children.setdefault(cur.block_of[i], []).append(i)
            kids = list(children.values())
            max_branch = max(max_branch, len(kids))
            nodes.append(kids)
        structure.append((k, nodes))
    out = []
    for r in range(max_branch - 1):
        acc = [ZERO] * space.size
        rows = [tuple(acc)]
        for k, nodes in structure:
            for kids in nodes:
                if len(kids) <= r + 1:
                    continue
                tot = sum(w[i] for kid in kids for i in kid)
                p = sum(w[i] for i in kids[r + 1]) / tot
                for idx, kid in enumerate(kids):
                    jump = (ONE if idx == r + 1 else ZERO) - p
                    for i in kid:
                        acc[i] = acc[i] + jump
            rows.append(tuple(acc))
        out.append(table_from_rows(space, rows))
    return tuple(out)


# ---------------------------------------------------------------------------
# random enlargements, stopping times, honest rules
# ---------------------------------------------------------------------------


def random_kernel(rng: random.Random, base: FiniteSpace, n: int) -> DefaultKernel:
    rows = []
    for _ in range(base.size):
        raw = [rng.randint(0, 3) for _ in range(n + 2)]
        if sum(raw) == 0:
            raw[-1] = 1
        tot = sum(raw)
        rows.append(tuple(Q(r, tot) for r in raw))
    return DefaultKernel(tuple(rows))


def random_enlarged(
    rng: random.Random, max_steps: int = 5, max_branch: int = 3
) -> EnlargedSpace:
    bm = random_tree(rng, max_steps, max_branch, terminal_split=rng.random() < 0.3)
    kernel = random_kernel(rng, bm.space, bm.filtration.n)
    return build_product_space(bm.space, bm.filtration, kernel)


def random_stopping_time(
    rng: random.Random, filtration: Filtration, allow_inf: bool = True
) -> StoppingTime:
    """First entry into a randomly drawn adapted stop region."""
    space = filtration.space
    values = [INF if allow_inf else filtration.n] * space.size
    assigned = [False] * space.size
    for k in range(filtration.n + 1):
        for block in filtration.stage(k).blocks:
            if rng.random() < 0.35:
                for i in block:
                    if not assigned[i]:
                        values[i] = k
                        assigned[i] = True
    return StoppingTime(space, tuple(values))


def random_stopping_pair(rng: random.Random, filtration: Filtration):
    """(S, T) with S <= T pointwise."""
    t1 = random_stopping_time(rng, filtration)
    t2 = random_stopping_time(rng, filtration)
    return t1.vmin(t2), t1.vmax(t2)


def random_adapted_table(rng: random.Random, bm: BaseModel) -> ProcessTable:
    space = bm.space
    rows = []
    for k in range(bm.filtration.n + 1):
        vals = [ZERO] * space.size
        for block in bm.filtration.stage(k).blocks:
            v = Q(rng.randint(-4, 4))
            for i in block:
                vals[i] = v
        rows.append(tuple(vals))
    rows.append(rows[-1])
    return table_from_rows(space, rows)


def random_honest_model(rng: random.Random, max_steps: int = 4) -> EnlargedSpace:
    """Random tree plus a random last-argmax honest rule."""
    bm = random_tree(rng, max_steps, 3)
    stat = random_adapted_table(rng, bm)

    def values(base, filtration):
        out = []
        for i in range(base.size):
            path = [stat.row(k)[i] for k in range(filtration.n + 1)]
            m = max(path)
            out.append(max(k for k, v in enumerate(path) if v == m))
        return out

    from .models import custom_rule

    return honest_time_model(bm.space, bm.filtration, custom_rule(values))


# ---------------------------------------------------------------------------
# curated scenario models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NamedModel:
    name: str
    space: EnlargedSpace
    drivers: tuple
    extras: dict


def curated_cox() -> NamedModel:
    """Cox model on a staggered grid: driver moves at steps 1 and 3, hazard
    mass at steps 2 and 4."""
    bm = lazy_walk(4, move_at=(1, 3))
    surv = deterministic_survival(bm.space, ["1", "1", "1/2", "1/2", "1/4"])
    space = cox_model(bm.space, bm.filtration, CoxParams(surv))
    return NamedModel(
        "cox", space, tuple(space.lift_table(d) for d in bm.drivers), {}
    )


def curated_cox_colliding() -> NamedModel:
    """Cox model with hazard and driver moves sharing grid points; the
    structural booleans drop to false, consistently."""
    bm = fair_walk(2)
    surv = deterministic_survival(bm.space, ["1", "1/2", "1/4"])
    space = cox_model(bm.space, bm.filtration, CoxParams(surv))
    return NamedModel(
        "cox-colliding", space, tuple(space.lift_table(d) for d in bm.drivers), {}
    )


def curated_density() -> NamedModel:
    """Density model on the staggered grid, genuinely outside immersion.

    Hazard mass sits on {t_2, t_4, INF}; the density of the early default
    point is tilted by the second driver move, which resolves only at t_3,
    so the enlargement carries a nonzero drift after an early default while
    the decoupling measure removes it exactly.
    """
    bm = lazy_walk(4, move_at=(1, 3))
    space_b = bm.space
    n = bm.filtration.n
    half = Q(1, 2)
    move1 = tuple(ONE if a[0] == "u" else -ONE for a in space_b.atoms)
    move2 = tuple(ONE if a[1] == "u" else -ONE for a in space_b.atoms)
    mu = [ZERO, ZERO, Q(1, 4), ZERO, Q(1, 4), Q(1, 2)]
    a_two = tuple(ONE + half * move2[i] for i in range(space_b.size))
    a_four = tuple(ONE + half * move1[i] for i in range(space_b.size))
    a_inf = tuple(
        2 * ONE - (a_two[i] + a_four[i]) * half for i in range(space_b.size)
    )
    alpha_term = []
    for j in range(n + 2):
        alpha_term.append(
            {2: a_two, 4: a_four, n + 1: a_inf}.get(j, (ONE,) * space_b.size)
        )
    params = density_params_from_terminal(space_b, bm.filtration, alpha_term, mu)
    space = density_model(space_b, bm.filtration, params)
    return NamedModel(
        "density",
        space,
        tuple(space.lift_table(d) for d in bm.drivers),
        {"params": params},
    )


def curated_honest() -> NamedModel:
    """The two-step fair walk with tau the last visit to the running maximum."""
    bm = fair_walk(2)
    space = honest_time_model(bm.space, bm.filtration, last_max_rule(bm.drivers[0]))
    return NamedModel(
        "honest", space, tuple(space.lift_table(d) for d in bm.drivers), {}
    )


def curated_detcoin() -> NamedModel:
    """Deterministic tau = t_1 with a fair coin revealed at t_1: the
    counterexample model where both sides of the stopped equivalence fail."""
    base = uniform_space(("h", "t"))
    disc = discrete_partition(base)
    filtration = Filtration(
        base, (0, 1, 2), (trivial_partition(base), disc, disc), disc
    )
    coin = table_from_rows(base, [(0, 0), (1, -1), (1, -1), (1, -1)])
    space = build_product_space(
        base, filtration, point_mass_kernel(2, [1, 1]), model_kind="detcoin"
    )
    return NamedModel("detcoin", space, (space.lift_table(coin),), {})


def curated_tau_inf() -> NamedModel:
    """No default ever: the enlargement collapses onto the base."""
    bm = fair_walk(2)
    space = build_product_space(
        bm.space,
        bm.filtration,
        point_mass_kernel(2, [INF] * bm.space.size),
        model_kind="never",
    )
    return NamedModel(
        "tau-inf", space, tuple(space.lift_table(d) for d in bm.drivers), {}
    )


def curated_natural() -> NamedModel:
    """Two-step model with a coin-driven positive martingale N, Y the walk
    and linear feedback."""
    bm = fair_walk(2)
    space_b = bm.space
    walk = bm.drivers[0]
    n_rows = [
        (ONE,) * space_b.size,
        tuple(ONE + Q(1, 4) * walk.row(1)[i] for i in range(space_b.size)),
        tuple(ONE + Q(1, 4) * walk.row(1)[i] for i in range(space_b.size)),
        tuple(ONE + Q(1, 4) * walk.row(1)[i] for i in range(space_b.size)),
    ]
    n_table = table_from_rows(space_b, n_rows)
    surv = deterministic_survival(space_b, ["1", "3/5", "2/5"])
    f, fp, fb, fpb = f_linear("1/2")
    params = NaturalParams(
        N=n_table, survival=surv, Y=walk, f=f, f_prime=fp, f_bound=fb, f_prime_bound=fpb
    )
    from .models import natural_model_discrete

    space, curves = natural_model_discrete(space_b, bm.filtration, params)
    return NamedModel(
        "natural",
        space,
        tuple(space.lift_table(d) for d in bm.drivers),
        {"params": params, "curves": curves},
    )


CURATED = {
    "cox": curated_cox,
    "cox-colliding": curated_cox_colliding,
    "density": curated_density,
    "honest": curated_honest,
    "detcoin": curated_detcoin,
    "tau-inf": curated_tau_inf,
    "natural": curated_natural,
}


# ---------------------------------------------------------------------------
# mutation fixtures
# ---------------------------------------------------------------------------


def default_martingale_hazard_flipped(space: EnlargedSpace) -> ProcessTable:
    """Sign-flipped compensation: the hazard term enters with +, so the
    result must fail the martingale test.  A mutation oracle, nothing more."""
    from .calculus import azema_Z, compensators

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
                jump = ONE if tv == k else ZERO
                acc[i] = acc[i] + jump + da[i] / zprev[i]
        rows.append(tuple(acc))
    rows.append(rows[-1])
    return ProcessTable(space.product, tuple(rows))
