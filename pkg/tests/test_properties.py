"""Property-based checks over random small instances."""

import itertools
import math

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from cloudfog.catalog import PowerProfile, default_catalog, dump_catalog, linear_power, load_catalog
from cloudfog.delay import (
    DelayConstants,
    build_lookup,
    mm1_delay,
    propagation_delay,
    subset_sums,
)
from cloudfog.optimizer import (
    InfeasibleError,
    PlacementProblem,
    TaskRequest,
    Weights,
    baseline_cloud,
    brute_force,
    evaluate,
    solve_exact,
)
from cloudfog.power import CATEGORIES, UNSCALED_CATEGORIES
from cloudfog.topology import NodeKind, build_reference, route

CAT = default_catalog()
SMALL = build_reference(groups=2, iot_per_group=2, catalog=CAT)
SMALL_SOURCES = SMALL.of_kind(NodeKind.IOT)
REF = build_reference(catalog=CAT)

mips = st.sampled_from([500.0, 1000.0, 1500.0, 2000.0, 3000.0, 5000.0, 8000.0, 10000.0])


@st.composite
def instances(draw, topo=SMALL, max_sources=3):
    srcs = draw(st.lists(st.sampled_from(topo.of_kind(NodeKind.IOT)), min_size=1, max_size=max_sources, unique=True))
    return tuple(TaskRequest(s, (c := draw(mips)), c / 1000.0) for s in srcs)


weights = st.builds(
    Weights,
    power=st.sampled_from([0.0, 1.0, 2.5]),
    propagation=st.sampled_from([0.0, 1e3, 1e5]),
    queuing=st.sampled_from([0.0, 1e4, 1e6]),
)


# optimizer ------------------------------------------------------------------


@given(instances(), weights)
def test_exact_matches_exhaustive(tasks, w):
    assume(w.power or w.propagation or w.queuing)
    p = PlacementProblem(SMALL, CAT, tasks, weights=w)
    try:
        ref = brute_force(p)
    except InfeasibleError:
        with pytest.raises(InfeasibleError):
            solve_exact(p)
        return
    got = solve_exact(p)
    assert got.objective == pytest.approx(ref.objective, rel=1e-9, abs=1e-9)
    assert got.assignment == ref.assignment


@given(instances(REF))
def test_never_worse_than_cloud_baseline(tasks):
    p = PlacementProblem(REF, CAT, tasks)
    assert solve_exact(p).power.total <= baseline_cloud(p).power.total + 1e-9


@given(instances(), st.sampled_from(["access_fog", "metro_fog"]), st.integers(0, 1))
def test_fewer_servers_never_helps(tasks, role, fewer):
    full = PlacementProblem(SMALL, CAT, tasks)
    topo = build_reference(groups=2, iot_per_group=2, catalog=CAT, max_servers={role: fewer})
    cut = PlacementProblem(topo, CAT, tasks)
    assert solve_exact(cut).objective >= solve_exact(full).objective - 1e-9


@given(instances(), weights, st.sampled_from([0.5, 3.0, 1000.0]))
def test_weight_scaling_keeps_argmin(tasks, w, k):
    assume(w.power or w.propagation or w.queuing)
    p = PlacementProblem(SMALL, CAT, tasks, weights=w)
    a = solve_exact(p)
    b = solve_exact(p.with_weights(w.scaled(k)))
    assert a.assignment == b.assignment
    assert b.objective == pytest.approx(k * a.objective, rel=1e-9)


@given(instances(REF))
def test_power_grows_with_demand(tasks):
    # same placement, more MIPS and traffic on every task
    p = PlacementProblem(REF, CAT, tasks)
    dc = REF.of_kind(NodeKind.CLOUD_DC)[0]
    bigger = PlacementProblem(REF, CAT, tuple(TaskRequest(t.source, t.cpu * 1.1, t.traffic * 1.1) for t in tasks))
    lo = evaluate(p, {(t.source, dc): t.cpu for t in p.tasks})
    hi = evaluate(bigger, {(t.source, dc): t.cpu for t in bigger.tasks})
    assert hi.power.total > lo.power.total


@given(instances(REF), st.floats(1.0, 3.0))
def test_pue_scales_power(tasks, k):
    p = PlacementProblem(REF, CAT, tasks)
    cat2 = CAT.with_pue(CAT.pue.scaled(k))
    q = PlacementProblem(REF, cat2, tasks)
    dc = REF.of_kind(NodeKind.CLOUD_DC)[0]
    placement = {(t.source, dc): t.cpu for t in tasks}
    a, b = evaluate(p, placement).power, evaluate(q, placement).power
    for c in CATEGORIES:
        want = getattr(a, c) * (1.0 if c in UNSCALED_CATEGORIES else k)
        assert getattr(b, c) == pytest.approx(want, rel=1e-9, abs=1e-12), c


# power profiles -------------------------------------------------------------

profiles = st.builds(
    lambda mx, frac, cap, d: PowerProfile(mx, mx * frac, cap, d),
    st.floats(1.0, 5000.0),
    st.floats(0.0, 1.0),
    st.floats(0.1, 1e4),
    st.floats(0.0, 1.0),
)


@given(profiles, st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_linear_power_affine_and_monotone(p, a, b):
    x, y = sorted((a * p.capacity, b * p.capacity))
    fx, fy = linear_power(p, x), linear_power(p, y)
    assert fx <= fy + 1e-9
    assert linear_power(p, 0.0) == p.idle_power
    assert linear_power(p, p.capacity) == pytest.approx(p.max_power)
    mid = linear_power(p, (x + y) / 2)
    assert mid == pytest.approx((fx + fy) / 2, rel=1e-9, abs=1e-9)


@given(profiles)
def test_attributed_idle_never_exceeds_idle(p):
    assert 0.0 <= p.attributed_idle <= p.idle_power


# delay ----------------------------------------------------------------------


@given(st.lists(st.sampled_from([1.0, 2.0, 3.0, 5.0, 8.0, 10.0]), min_size=1, max_size=5))
def test_lookup_is_exact_on_every_subset(demands):
    c = DelayConstants()
    lk = build_lookup(demands, 1.0, c)
    for r in range(len(demands) + 1):
        for combo in itertools.combinations(demands, r):
            x = sum(combo)
            assert lk.delay_at(x) == mm1_delay(c.packets_per_second(x), lk.service_rate)
    assert list(lk.delays) == sorted(lk.delays)


@given(st.lists(st.floats(0.1, 50.0), min_size=1, max_size=6))
def test_subset_sums_are_sorted_and_complete(demands):
    sums = subset_sums(demands)
    assert sums[0] == 0.0 and sums == sorted(sums)
    assert sums[-1] == pytest.approx(sum(demands))


@given(st.floats(0.0, 1e5), st.floats(0.0, 1e5), st.floats(1e5 + 1, 1e7))
def test_mm1_monotone(a, b, service):
    lo, hi = sorted((a, b))
    assert mm1_delay(lo, service) <= mm1_delay(hi, service)


pairs = st.tuples(st.sampled_from(REF.processing_nodes), st.sampled_from(REF.processing_nodes))


@given(st.sampled_from(REF.of_kind(NodeKind.IOT)), st.sampled_from(REF.processing_nodes), st.randoms())
def test_propagation_additive_and_order_free(s, d, rnd):
    path = list(route(REF, s, d))
    whole = propagation_delay(path)
    assert whole == pytest.approx(sum(propagation_delay([link]) for link in path))
    rnd.shuffle(path)
    assert propagation_delay(path) == pytest.approx(whole)


@given(pairs)
def test_route_reverse_symmetry(pair):
    a, b = pair
    fwd = route(REF, a, b)
    back = route(REF, b, a)
    assert [(l.b, l.a) for l in reversed(back)] == [(l.a, l.b) for l in fwd]
    assert propagation_delay(fwd) == pytest.approx(propagation_delay(back))


# catalog --------------------------------------------------------------------


@given(st.floats(1.0, 2.0), st.floats(1.0, 2.0), st.floats(1.0, 50.0))
def test_catalog_round_trip(pue_dc, pue_metro, olt_max):
    doc = load_catalog(dump_catalog(CAT)).to_dict()
    doc["pue"]["dc"] = pue_dc
    doc["pue"]["metro"] = pue_metro
    once = load_catalog(doc)
    twice = load_catalog(dump_catalog(once))
    assert once == twice
    assert twice.pue.dc == pue_dc
