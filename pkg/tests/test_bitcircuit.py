import io

import numpy as np
import pytest

from ftdla import bitcircuit as bc
from ftdla.bitcircuit import CircuitError


def _wallace_counts(heights):
    """Count-only 3:2 / 2:2 reduction to two rows, then a ripple adder."""
    h = list(heights) + [0]
    fa = ha = 0
    while max(h[:16]) > 2:
        nxt = [0] * len(h)
        for k in range(16):
            f, r = divmod(h[k], 3)
            fa += f
            nxt[k] += f
            nxt[k + 1] += f
            if r == 2:
                ha += 1
                nxt[k] += 1
                nxt[k + 1] += 1
            else:
                nxt[k] += r
        h = nxt
    carry = 0
    for k in range(16):
        n = h[k] + carry
        carry = 0
        if n == 2:
            ha += 1
            carry = 1
        elif n == 3:
            fa += 1
            carry = 1
    return fa, ha


def test_column_heights():
    h = bc.column_heights()
    assert len(h) == 15 and h[0] == 1 and h[7] == 8 and h[8] == 7 and h[14] == 1
    prof = bc.column_profile(structure="wallace")
    assert prof.cells[0] == 0
    with pytest.raises(CircuitError):
        bc.column_heights(16)


def test_wallace_cell_count_oracle():
    heights = list(bc.column_heights()) + [0]
    heights[8] += 1  # sign-correction constant
    prof = bc.column_profile(structure="wallace")
    assert (sum(prof.full_adders), sum(prof.half_adders)) == _wallace_counts(heights)


def test_shift_add_cell_count():
    prof = bc.column_profile(structure="shift-add")
    assert (sum(prof.full_adders), sum(prof.half_adders)) == (49, 7)


@pytest.mark.parametrize("structure", bc.STRUCTURES)
def test_multiplier_exhaustive(structure):
    a, b = bc.all_operand_pairs()
    np.testing.assert_array_equal(bc.evaluate(bc.multiplier(structure), a, b), a * b)


def test_base_area_is_reduction_cells():
    prof = bc.column_profile(structure="wallace")
    want = sum(prof.full_adders) * 1.0 + sum(prof.half_adders) * 0.5
    assert bc.base_area("wallace") == want == 60.5
    assert bc.base_area("shift-add") == 52.5


def test_windows():
    assert bc.important_window(2, 0).columns == tuple(range(6, 16))
    assert bc.important_window(2, 5).columns == tuple(range(11, 16))
    assert bc.important_window(8, 16).columns == (15,)
    assert bc.window_columns(3, 4) == (9, 10, 11)
    with pytest.raises(CircuitError):
        bc.important_window(0, 0)
    with pytest.raises(CircuitError):
        bc.important_window(1, 17)


def test_merging_fanout_example():
    p = bc.plan_protection("configurable", 1, 2, "shift-add")
    assert not p.degenerate
    assert (p.unmerged_fanout, p.max_fanout) == (6, 4)


@pytest.mark.parametrize("structure", bc.STRUCTURES)
def test_single_window_degenerates(structure):
    p = bc.plan_protection("configurable", 1, 15, structure)
    assert p.muxes == 0 and p.max_fanout == 1


def test_configurable_uses_fewer_redundant_cells():
    d = bc.plan_protection("direct", 2, 7, "wallace")
    c = bc.plan_protection("configurable", 2, 7, "wallace", fallback=False)
    assert not c.degenerate
    assert c.capacity < len(d.protected_cells)
    assert c.redundant_fa + c.redundant_ha < d.redundant_fa + d.redundant_ha


def test_empty_plan_area():
    assert bc.area(bc.EMPTY_PLAN) == 0.0
    assert bc.redundant_area(bc.EMPTY_PLAN) == 0.0


def test_unsupported_combinations():
    with pytest.raises(CircuitError):
        bc.plan_protection("partial", 1, 0)
    with pytest.raises(CircuitError):
        bc.plan_protection("direct", 1, 0, "booth")


@pytest.mark.parametrize("policy", bc.POLICIES)
@pytest.mark.parametrize("structure", bc.STRUCTURES)
def test_exhaustive_with_random_protected_fault(policy, structure):
    plan = bc.plan_protection(policy, 2, 4, structure)
    sites = plan.fault_sites()
    a, b = bc.all_operand_pairs()
    pick = np.random.default_rng(5).integers(0, len(sites), size=len(a))
    for i, site in enumerate(sites):
        sel = pick == i
        if sel.any():
            got = bc.simulate_protected_multiply(a[sel], b[sel], plan, fault=site)
            np.testing.assert_array_equal(got, a[sel] * b[sel])


def test_zero_operand_masked():
    plan = bc.plan_protection("direct", 3, 0)
    for site in plan.fault_sites()[::7]:
        assert bc.simulate_protected_multiply(0, 93, plan, fault=site) == 0
        assert bc.simulate_protected_multiply(-128, 0, plan, fault=site) == 0


def test_unprotected_column3_fault_visible():
    plan = bc.plan_protection("direct", 2, 4)
    net = bc.multiplier("wallace")
    col3 = [s for s in plan.fault_sites(protected=False) if net.column[s[0]] == 3]
    assert col3
    outs = {bc.simulate_protected_multiply(127, 127, plan, fault=s) for s in col3}
    assert any(o != 16129 for o in outs)


def test_fault_must_hit_a_cell():
    plan = bc.plan_protection("direct", 1, 0)
    with pytest.raises(CircuitError):
        bc.simulate_protected_multiply(3, 4, plan, fault=(0, 0, 0))


def test_area_table_monotone_and_ordered():
    t = bc.build_area_table()
    assert len(t) == 2 * 2 * 8 * 17
    for pol in bc.POLICIES:
        for st in bc.STRUCTURES:
            for qs in range(17):
                a = [t[(pol, st, s, qs)].area_units for s in range(1, 9)]
                assert all(x <= y + 1e-9 for x, y in zip(a, a[1:]))
            for s in range(1, 9):
                a = [t[(pol, st, s, qs)].area_units for qs in range(17)]
                assert all(x >= y - 1e-9 for x, y in zip(a, a[1:]))
    for st in bc.STRUCTURES:
        for s in range(1, 9):
            for qs in range(17):
                assert t[("configurable", st, s, qs)].area_units <= t[("direct", st, s, qs)].area_units + 1e-9
    assert t[("direct", "wallace", 1, 0)].area_units > t[("configurable", "wallace", 3, 7)].area_units


def test_area_table_csv_roundtrip(tmp_path):
    t = bc.build_area_table(s_values=(1, 2), q_scales=(0, 7))
    p = str(tmp_path / "area.csv")
    bc.write_area_table(t, p, ["ftdla test"])
    back = bc.read_area_table(p)
    assert back.keys() == t.keys()
    for k in t:
        assert back[k].area_units == pytest.approx(t[k].area_units, abs=1e-4)
        assert back[k].max_fanout == t[k].max_fanout
    buf = io.StringIO()
    bc.write_area_table(t, buf)
    assert buf.getvalue().startswith("policy,structure")


def test_cost_model_file(tmp_path):
    p = tmp_path / "costs.txt"
    p.write_text("# gate equivalents\nfull_adder = 2.0\nvoter=1.0\n")
    costs = bc.load_cost_model(str(p))
    assert costs["full_adder"] == 2.0 and costs["voter"] == 1.0 and costs["half_adder"] == 0.5
    assert bc.base_area("shift-add", costs) == 49 * 2.0 + 7 * 0.5
    p.write_text("widget = 3\n")
    with pytest.raises(CircuitError):
        bc.load_cost_model(str(p))


def test_area_breakdown_sums():
    plan = bc.plan_protection("configurable", 2, 4, "shift-add")
    parts = bc.area_breakdown(plan)
    assert bc.area(plan) == pytest.approx(sum(parts.values()))
    assert parts["redundant_cells"] == plan.redundant_fa * 1.0 + plan.redundant_ha * 0.5


def test_protected_set_follows_window():
    plan = bc.plan_protection("configurable", 1, 2, "shift-add")
    net = bc.multiplier("shift-add")
    for q in range(2, 17):
        cells = plan.protected_at(q)
        for k in bc.window_columns(1, q):
            assert {c for c in net.cells if net.column[c] == k} <= cells
