import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vizsudoku.grid import (BoxSize, CostField, Grid, GridFormatError, ProbField, check_rules,
                            dump_prob_fields, load_prob_fields, parse_grid, serialize_grid,
                            to_cost_field, units)

from conftest import SOLUTIONS_4x4

FOUR = "1234341221434321"


def test_parse_empty_9x9():
    g = parse_grid("." * 81, 3)
    assert g.size == BoxSize(3)
    assert g.cells == (0,) * 81
    assert parse_grid("0" * 81, 3) == g


def test_parse_complete_4x4():
    g = parse_grid(FOUR, 2)
    assert g.rows() == [(1, 2, 3, 4), (3, 4, 1, 2), (2, 1, 4, 3), (4, 3, 2, 1)]
    assert check_rules(g)


def test_parse_duplicate_row_still_parses():
    g = parse_grid("1134341221434321", 2)
    assert not check_rules(g)


def test_parse_ignores_whitespace():
    assert parse_grid("1234\n3412\n2143\n4321\n", 2) == parse_grid(FOUR, 2)


@pytest.mark.parametrize("text", ["123", "1234341221434325", "12a4341221434321"])
def test_parse_errors(text):
    with pytest.raises(GridFormatError):
        parse_grid(text, 2)


def test_parse_16x16_tokens():
    cells = [0] * 256
    cells[0], cells[17] = 16, 10
    text = ",".join(map(str, cells))
    g = parse_grid(text, 4)
    assert g.cells[0] == 16 and g.cells[17] == 10
    assert serialize_grid(g) == text


def test_serialize_examples():
    assert serialize_grid(Grid.empty(2)) == "." * 16
    assert serialize_grid(parse_grid(FOUR, 2)) == FOUR


def test_round_trip_100_random_grids():
    rng = np.random.default_rng(3)
    for _ in range(100):
        n = int(rng.integers(2, 5))
        side = n * n
        cells = tuple(int(v) for v in rng.integers(0, side + 1, side * side))
        g = Grid(n, cells)
        assert parse_grid(serialize_grid(g), n) == g


def test_check_rules_examples():
    assert check_rules(Grid.empty(2))
    assert check_rules(Grid.empty(3))
    g = parse_grid(FOUR, 2)
    assert check_rules(g)
    cells = list(g.cells)
    cells[0] = 2
    assert not check_rules(Grid(2, tuple(cells)))


def test_check_rules_box_violation():
    # a Latin square whose top-left box repeats digits
    g = Grid.from_rows([(1, 2, 3, 4), (2, 1, 4, 3), (3, 4, 1, 2), (4, 3, 2, 1)])
    assert not check_rules(g)


def test_units_count_and_all_oracle_boards_valid():
    assert len(units(3)) == 27
    assert all(len(u) == 9 for u in units(3))
    assert all(check_rules(Grid(2, b)) for b in SOLUTIONS_4x4)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, len(SOLUTIONS_4x4) - 1), st.lists(st.integers(0, 15), max_size=16))
def test_check_rules_monotone_under_erasure(idx, erase):
    cells = list(SOLUTIONS_4x4[idx])
    assert check_rules(Grid(2, tuple(cells)))
    for c in erase:
        cells[c] = 0
        assert check_rules(Grid(2, tuple(cells)))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=16, max_size=16), st.integers(0, 15))
def test_erasure_never_breaks_validity(cells, c):
    g = Grid(2, tuple(cells))
    erased = list(cells)
    erased[c] = 0
    if check_rules(g):
        assert check_rules(Grid(2, tuple(erased)))


def test_grid_validation():
    with pytest.raises(GridFormatError):
        Grid(2, (0,) * 15)
    with pytest.raises(GridFormatError):
        Grid(2, (5,) + (0,) * 15)
    with pytest.raises(ValueError):
        BoxSize(1)


def test_cost_field_one_hot():
    p = np.zeros(9)
    p[4] = 1.0
    c = to_cost_field(ProbField(3, (0,), [p]))
    expect = np.full(9, -math.log(1e-12))
    expect[4] = 0.0
    assert np.allclose(c.costs[0], expect, rtol=0, atol=1e-12)
    assert c.costs[0, 4] == 0.0 and not math.copysign(1, c.costs[0, 4]) < 0


def test_cost_field_uniform():
    c = to_cost_field(ProbField(3, (5,), [np.full(9, 1 / 9)]))
    assert np.allclose(c.costs, math.log(9), atol=1e-12)
    assert abs(math.log(9) - 2.1972) < 1e-4


def test_cost_field_half_half():
    p = [0.5, 0.5] + [0.0] * 7
    c = to_cost_field(ProbField(3, (0,), [p]), 1e-12)
    assert c.costs[0, 0] == pytest.approx(math.log(2), abs=1e-12)
    assert c.costs[0, 1] == pytest.approx(math.log(2), abs=1e-12)
    assert c.costs[0, 2] == pytest.approx(27.631021115928547, abs=1e-9)


@pytest.mark.parametrize("eps", [0.0, 1.0, -1e-3])
def test_cost_field_bad_epsilon(eps):
    with pytest.raises(ValueError):
        to_cost_field(ProbField(2, (0,), [[1, 0, 0, 0]]), eps)


prob_rows = st.lists(st.floats(0.0, 1.0), min_size=4, max_size=4).filter(lambda r: sum(r) > 1e-3)


@settings(max_examples=300, deadline=None)
@given(prob_rows, prob_rows)
def test_cost_antitone_and_argmin(a, b):
    pa = np.array(a) / sum(a)
    pb = np.array(b) / sum(b)
    ca = to_cost_field(ProbField(2, (0,), [pa])).costs[0]
    cb = to_cost_field(ProbField(2, (0,), [pb])).costs[0]
    # compare against the stored (renormalized) probabilities
    qa = ProbField(2, (0,), [pa]).probs[0]
    qb = ProbField(2, (0,), [pb]).probs[0]
    for k in range(4):
        if qa[k] >= qb[k]:
            assert ca[k] <= cb[k]
    if qa.max() > 1e-12:
        assert np.argmin(ca) == np.argmax(qa)


def test_prob_field_renormalizes_and_rejects():
    f = ProbField(2, (3,), [[0.25, 0.25, 0.25, 0.25 + 5e-7]])
    assert abs(f.probs.sum() - 1.0) < 1e-15
    with pytest.raises(GridFormatError):
        ProbField(2, (3,), [[0.3, 0.3, 0.3, 0.3]])
    with pytest.raises(GridFormatError):
        ProbField(2, (3,), [[0.5, 0.5, 0.0]])
    with pytest.raises(GridFormatError):
        ProbField(2, (3, 3), [[1, 0, 0, 0], [1, 0, 0, 0]])
    with pytest.raises(GridFormatError):
        ProbField(2, (16,), [[1, 0, 0, 0]])


def test_prob_field_sorted_and_immutable():
    f = ProbField.from_mapping(2, {7: [0, 1, 0, 0], 2: [0, 0, 0, 1]})
    assert f.cells == (2, 7)
    assert f[7][1] == 1.0
    with pytest.raises(ValueError):
        f.probs[0, 0] = 1.0


def test_argmax_ties_to_lower_digit():
    f = ProbField(2, (0, 5), [[0.4, 0.4, 0.1, 0.1], [0.1, 0.2, 0.35, 0.35]])
    g = f.argmax_grid()
    assert g.cells[0] == 1 and g.cells[5] == 3
    assert g.given_cells == (0, 5)


def test_cost_objective():
    c = CostField(2, (0, 1), [[0.1, 0.2, 0.3, 0.4], [1.0, 2.0, 3.0, 4.0]])
    assert c.objective(parse_grid(FOUR, 2)) == pytest.approx(0.1 + 2.0)


def test_prob_field_file_round_trip(tmp_path):
    fs = [ProbField(2, (0, 9), [[0.1, 0.2, 0.3, 0.4], [1, 0, 0, 0]]),
          ProbField(2, (4,), [[0.25] * 4])]
    path = tmp_path / "f.jsonl"
    dump_prob_fields(fs, path)
    back = load_prob_fields(path)
    assert [b.cells for b in back] == [f.cells for f in fs]
    for a, b in zip(fs, back):
        assert np.array_equal(a.probs, b.probs)
    obj = fs[0].to_json()
    assert obj == {"n": 2, "givens": [{"cell": 0, "probs": [0.1, 0.2, 0.3, 0.4]},
                                      {"cell": 9, "probs": [1.0, 0.0, 0.0, 0.0]}]}


def test_prob_field_pretty_single_object(tmp_path):
    import json
    path = tmp_path / "one.json"
    path.write_text(json.dumps(ProbField(2, (1,), [[0, 0, 1, 0]]).to_json(), indent=2))
    (f,) = load_prob_fields(path)
    assert f.cells == (1,)


def test_prob_field_malformed(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"n": 2}\n')
    with pytest.raises(GridFormatError):
        load_prob_fields(path)
