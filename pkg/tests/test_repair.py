import numpy as np
import pytest

from lsreopt.core import (
    Disruption,
    DisruptionKind,
    Instance,
    Solution,
    apply_disruption,
    check_feasibility,
    evaluate_cost,
    generate_instance,
)
from lsreopt.heuristics import greedy_plan
from lsreopt.repair import (
    CANCELLED,
    KEPT_AT_MIN,
    RepairContractError,
    RepairTrace,
    disruption_impact,
    recompute_flow,
    repair,
)
from lsreopt.rng import Stream

from conftest import desk_spec


def random_disruption(inst, stream):
    if stream.randint(0, 1):
        return Disruption(DisruptionKind.MACHINE_BREAKDOWN,
                          duration=stream.choice([d for d in (4, 5) if d < inst.T]),
                          machine=stream.randint(0, inst.M - 1))
    return Disruption(DisruptionKind.PLANT_SHUTDOWN,
                      duration=stream.choice([1, 2]))


def test_idle_machine_disruption_is_a_noop_beyond_flow():
    inst = Instance(
        M=2, N=1, T=4,
        f=[1.0], p=[0.0], h=[0.1], s=[1.0], b=[1.0], m=[1.0],
        l=[[5.0] * 4], I0=[0.0], d=[[2.0] * 4],
        c=[[10.0] * 4, [10.0] * 4], w=[[1, 1]],
    )
    nominal = greedy_plan(inst, carryovers=False)
    assert not nominal.Y[:, 1, :].any()  # greedy keeps everything on machine 0
    dis = Disruption(DisruptionKind.MACHINE_BREAKDOWN, duration=2, machine=1)
    pert = apply_disruption(inst, dis)
    repaired, trace = repair(pert, nominal, dis)
    assert trace.cancelled == [] and trace.carryover_outcomes == []
    assert np.array_equal(repaired.X, nominal.X)
    assert np.array_equal(repaired.I, nominal.I)


def test_outage_productions_are_wiped(desk_instance):
    nominal = greedy_plan(desk_instance)
    dis = Disruption(DisruptionKind.MACHINE_BREAKDOWN, duration=4, machine=0)
    pert = apply_disruption(desk_instance, dis)
    repaired, trace = repair(pert, nominal, dis)
    assert not repaired.Y[:, 0, :4].any()
    assert not repaired.Z[:, 0, :4].any()
    assert (repaired.X[:, 0, :4] == 0).all()
    # untouched elsewhere except the assessed first post-outage period
    assert np.array_equal(repaired.Y[:, 1, :], nominal.Y[:, 1, :])
    assert np.array_equal(repaired.X[:, 0, 5:], nominal.X[:, 0, 5:])


def _carryover_instance():
    """One machine, one item, demand forcing production in periods 0 and 1."""
    return Instance(
        M=1, N=2, T=4,
        f=[2.0, 2.0], p=[0.0, 0.0], h=[0.05, 0.05], s=[2.0, 2.0], b=[1.0, 1.0],
        m=[4.0, 4.0], l=[[6.0] * 4, [6.0] * 4], I0=[0.0, 0.0],
        d=[[5.0, 5.0, 5.0, 5.0], [0.0, 0.0, 0.0, 0.0]],
        c=[[20.0] * 4], w=[[1], [1]],
    )


def _carryover_nominal(inst):
    X = np.zeros((2, 1, 4))
    Y = np.zeros((2, 1, 4), dtype=np.int8)
    Z = np.zeros((2, 1, 4), dtype=np.int8)
    X[0, 0, :] = 5.0
    Y[0, 0, :] = 1
    Y[0, 0, 1] = 0       # covered by the carry-over out of period 0
    Z[0, 0, 0] = 1
    I = np.zeros((2, 4))
    L = np.zeros((2, 4))
    recompute_flow(inst, X, I, L)
    sol = Solution(X=X, Y=Y, Z=Z, I=I, L=L)
    assert check_feasibility(inst, sol).feasible
    return sol


def test_broken_carryover_kept_at_minimum():
    inst = _carryover_instance()
    nominal = _carryover_nominal(inst)
    dis = Disruption(DisruptionKind.MACHINE_BREAKDOWN, duration=1, machine=0)
    pert = apply_disruption(inst, dis)
    repaired, trace = repair(pert, nominal, dis)
    assert trace.carryover_outcomes == [(0, 0, 1, KEPT_AT_MIN)]
    assert repaired.Y[0, 0, 1] == 1
    assert repaired.X[0, 0, 1] == pytest.approx(inst.m[0])
    assert check_feasibility(pert, repaired).feasible


def test_broken_carryover_cancelled_without_capacity():
    # item 1 crowds period 1, so the severed carry-over of item 0 cannot be
    # replaced by a fresh setup + minimum quantity there
    inst = Instance(
        M=1, N=2, T=4,
        f=[2.0, 2.0], p=[0.0, 0.0], h=[0.05, 0.05], s=[2.0, 2.0], b=[1.0, 1.0],
        m=[4.0, 4.0], l=[[6.0] * 4, [6.0] * 4], I0=[0.0, 0.0],
        d=[[5.0, 5.0, 5.0, 5.0], [0.0, 13.0, 0.0, 0.0]],
        c=[[20.0] * 4], w=[[1], [1]],
    )
    X = np.zeros((2, 1, 4)); Y = np.zeros((2, 1, 4), dtype=np.int8); Z = np.zeros((2, 1, 4), dtype=np.int8)
    X[0, 0, 0] = 6.0
    X[0, 0, 1] = 2.0   # justified only by the carry-over out of period 0
    Y[0, 0, 0] = 1
    Z[0, 0, 0] = 1
    X[1, 0, 1] = 13.0
    Y[1, 0, 1] = 1
    I = np.zeros((2, 4)); L = np.zeros((2, 4))
    recompute_flow(inst, X, I, L)
    nominal = Solution(X=X, Y=Y, Z=Z, I=I, L=L)
    assert check_feasibility(inst, nominal).feasible
    dis = Disruption(DisruptionKind.MACHINE_BREAKDOWN, duration=1, machine=0)
    pert = apply_disruption(inst, dis)
    repaired, trace = repair(pert, nominal, dis)
    assert trace.carryover_outcomes == [(0, 0, 1, CANCELLED)]
    assert repaired.Y[0, 0, 1] == 0 and repaired.X[0, 0, 1] == 0.0
    assert (0, 0, 1) in trace.cancelled
    assert check_feasibility(pert, repaired).feasible


def test_repair_feasible_on_500_random_desk_triplets():
    stream = Stream(2024, "repair-test")
    count = 0
    for seed in range(250):
        for set_id in (1, 2):
            spec = desk_spec(set_id=set_id, machines=(2, 3), items=(5, 8),
                             periods=(8, 12))
            inst = generate_instance(spec, seed * 2 + set_id)
            nominal = greedy_plan(inst)
            dis = random_disruption(inst, stream)
            pert = apply_disruption(inst, dis)
            repaired, _ = repair(pert, nominal, dis)
            report = check_feasibility(pert, repaired)
            assert report.feasible, (seed, set_id, dis, report.summary())
            count += 1
    assert count == 500


def test_repair_changes_stay_in_window():
    stream = Stream(99, "window")
    spec = desk_spec(items=(5,), periods=(8,))
    for seed in range(40):
        inst = generate_instance(spec, seed)
        nominal = greedy_plan(inst)
        dis = random_disruption(inst, stream)
        pert = apply_disruption(inst, dis)
        repaired, _ = repair(pert, nominal, dis)
        affected = set(dis.machines(inst.M))
        dt = dis.duration
        for j in range(inst.M):
            window = dt + 1 if j in affected else 0
            assert np.array_equal(repaired.Y[:, j, window:], nominal.Y[:, j, window:])
            assert np.array_equal(repaired.Z[:, j, window:], nominal.Z[:, j, window:])
            assert np.array_equal(repaired.X[:, j, window:], nominal.X[:, j, window:])
        # repair never introduces production where the nominal had none
        assert not np.any((repaired.Y == 1) & (nominal.Y == 0) &
                          (np.arange(inst.T)[None, None, :] != dt))


def test_flow_recompute_is_idempotent(desk_instance):
    nominal = greedy_plan(desk_instance)
    I1 = np.empty_like(nominal.I); L1 = np.empty_like(nominal.L)
    recompute_flow(desk_instance, nominal.X, I1, L1)
    I2 = np.empty_like(I1); L2 = np.empty_like(L1)
    recompute_flow(desk_instance, nominal.X, I2, L2)
    assert np.array_equal(I1, I2) and np.array_equal(L1, L2)


def test_flow_shortfall_never_exceeds_demand():
    spec = desk_spec(items=(5,), periods=(8,))
    for seed in range(30):
        inst = generate_instance(spec, seed)
        sol = greedy_plan(inst)
        I = np.empty((inst.N, inst.T)); L = np.empty((inst.N, inst.T))
        recompute_flow(inst, sol.X, I, L)
        assert np.all(L <= inst.d + 1e-12)


def test_infeasible_nominal_is_rejected(desk_instance):
    nominal = greedy_plan(desk_instance)
    Y = nominal.Y.copy()
    X = nominal.X.copy()
    # fake production far beyond capacity on a non-disrupted machine
    X[0, 1, 6] = desk_instance.c[1, 6] * 10
    Y[0, 1, 6] = 1
    bad = Solution(X=X, Y=Y, Z=nominal.Z, I=nominal.I, L=nominal.L)
    dis = Disruption(DisruptionKind.MACHINE_BREAKDOWN, duration=2, machine=0)
    pert = apply_disruption(desk_instance, dis)
    with pytest.raises(RepairContractError):
        repair(pert, bad, dis)


def test_trace_roundtrips():
    trace = RepairTrace(cancelled=[(0, 1, 2)], carryover_outcomes=[(0, 1, 3, KEPT_AT_MIN)],
                        flow_changes=7, cascaded=[])
    again = RepairTrace.from_dict(trace.to_dict())
    assert again == trace


# -- disruption impact -----------------------------------------------------------


def test_impact_identity(desk_instance):
    nominal = greedy_plan(desk_instance)
    impact = disruption_impact(nominal, nominal, desk_instance)
    assert impact.cost_increase == 0.0
    assert impact.setup_change_count == 0
    assert impact.setup_change_relative == 0.0


def test_impact_hand_computed():
    inst = _carryover_instance()
    nominal = _carryover_nominal(inst)
    dis = Disruption(DisruptionKind.MACHINE_BREAKDOWN, duration=1, machine=0)
    pert = apply_disruption(inst, dis)
    repaired, _ = repair(pert, nominal, dis)
    z0 = evaluate_cost(pert, nominal).total
    zr = evaluate_cost(pert, repaired).total
    impact = disruption_impact(nominal, repaired, pert)
    assert impact.cost_increase == pytest.approx((zr - z0) / z0)
    expected_changes = int((nominal.Y != repaired.Y).sum())
    assert impact.setup_change_count == expected_changes
    assert impact.setup_change_relative == pytest.approx(
        expected_changes / int(nominal.Y.sum()))


def test_impact_zero_nominal_cost_is_an_error():
    inst = Instance(
        M=1, N=1, T=2,
        f=[0.0], p=[0.0], h=[0.0], s=[0.0], b=[1.0], m=[0.0],
        l=[[0.0, 0.0]], I0=[0.0], d=[[0.0, 0.0]], c=[[1.0, 1.0]], w=[[1]],
    )
    sol = Solution.zeros(inst)
    with pytest.raises(ValueError):
        disruption_impact(sol, sol, inst)
