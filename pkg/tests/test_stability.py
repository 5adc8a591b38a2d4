from fractions import Fraction

import pytest

from src.core.errors import InvalidModel
from src.core.stability import (CATALOG, ExtensionModel, Interval, SplitModel, admissible_interval,
                                alpha_slope, candidates, constraint_defect,
                                extension_alpha_stable, pair_stable, rational, slope,
                                triple_stable)


def test_slope_is_exact():
    assert slope(3, 2) == Fraction(3, 2)
    assert slope(0, 1) == 0
    assert slope(-4, 4) == -1
    with pytest.raises(InvalidModel):
        slope(1, 0)


def test_rational_reads_decimal_floats():
    assert rational(0.6) == Fraction(3, 5)
    assert rational('5/2') == Fraction(5, 2)


def test_line_model():
    line = CATALOG['line']
    assert pair_stable(line, Fraction(3, 2)).stable
    verdict = pair_stable(line, 1)
    assert not verdict.stable
    assert verdict.boundary
    assert verdict.witness['condition'] == 1
    assert verdict.witness['lhs'] == '1'
    interval = admissible_interval(line)
    assert interval.lower == 1 and interval.upper is None
    assert str(interval) == '(1, ∞)'


def test_rank_two_generic_interval():
    model = CATALOG['split-generic']
    interval = admissible_interval(model)
    assert (interval.lower, interval.upper) == (1, 2)
    assert str(interval) == '(1, 2)'
    assert pair_stable(model, Fraction(3, 2)).stable
    verdict = pair_stable(model, Fraction(5, 2))
    assert not verdict.stable
    assert verdict.witness['candidate'] == 'phi-line'
    assert verdict.witness['condition'] == 2
    assert verdict.witness['lhs'] == '2'


def test_rank_two_verdict_grid():
    model = CATALOG['split-generic']
    grid = [0.6, 0.9, 1.1, 1.5, 1.9, 2.1, 2.4]
    expected = [False, False, True, True, True, False, False]
    assert [pair_stable(model, tau).stable for tau in grid] == expected
    assert [admissible_interval(model).contains(tau) for tau in grid] == expected


def test_phi_in_one_summand_is_never_stable():
    model = CATALOG['split-one-summand']
    assert admissible_interval(model).empty
    assert str(admissible_interval(model)) == '∅'
    for tau in (0.5, 1, 1.5, 2, 3):
        assert not pair_stable(model, tau).stable


def test_candidate_catalog():
    model = CATALOG['split-generic']
    descriptions = [c.description for c in candidates(model)]
    assert descriptions == ['summands[0]', 'summands[1]', 'summands[0, 1]', 'phi-line']
    whole = candidates(model)[2]
    assert whole.contains_phi and whole.slope == 1


def test_triple_line_bundle():
    model = SplitModel((3,), (0,), 0)
    assert not triple_stable(model, 2, 3).stable
    assert triple_stable(model, 2, Fraction(31, 10)).stable
    assert admissible_interval(model, 2).lower == 3


def test_triple_with_trivial_l_matches_pair():
    model = CATALOG['split-generic']
    for tau in (0.5, 1.5, 2.5):
        assert triple_stable(model, 0, tau).stable == pair_stable(model, tau).stable
    interval = admissible_interval(model, 0)
    assert (interval.lower, interval.upper) == (1, 2)


def test_triple_shift_by_deg_l():
    model = CATALOG['split-generic']
    # E ⊗ L*：d = [0, 0]，參數 τ - 1，區間 (0, 1) 平移回 τ
    shifted = admissible_interval(model.shifted(-1))
    assert (shifted.lower, shifted.upper) == (0, 1)
    interval = admissible_interval(model, 1)
    assert interval == shifted.shifted(1)
    assert triple_stable(model, 1, Fraction(3, 2)).stable
    assert not triple_stable(model, 1, Fraction(5, 2)).stable


def test_translation_equivariance():
    model = CATALOG['split-generic']
    for c in (-2, 1, 3):
        for tau in (Fraction(1, 2), Fraction(3, 2), Fraction(9, 4)):
            assert pair_stable(model.shifted(c), tau + c).stable == pair_stable(model, tau).stable


def test_split_model_validation():
    with pytest.raises(InvalidModel):
        SplitModel((1, 1), ())
    with pytest.raises(InvalidModel):
        SplitModel((1, 1), (2,))
    with pytest.raises(InvalidModel):
        SplitModel((1, 1), (0,), phi_line_degree=2)


def test_alpha_slope_values():
    assert alpha_slope((1, 0, 1, 0), -1) == Fraction(-1, 2)
    assert alpha_slope((1, 3, 0, 0), -5) == 3
    assert alpha_slope((1, 1, 1, 0), 0) == Fraction(1, 2)


def test_extension_alpha_stability():
    verdict = extension_alpha_stable(ExtensionModel(1, 0, 1, 0), -1)
    assert not verdict.stable
    assert verdict.witness['lhs'] == '0' and verdict.witness['rhs'] == '-1/2'

    assert extension_alpha_stable(ExtensionModel(1, -1, 1, 1), -1).stable
    assert not extension_alpha_stable(ExtensionModel(1, 1, 1, 0), 0).stable


def test_positive_alpha_is_flagged():
    verdict = extension_alpha_stable(ExtensionModel(1, -1, 1, 1), Fraction(1, 4))
    assert 'outside-theorem-scope' in verdict.notes


def test_extension_candidate_ranks_checked():
    with pytest.raises(InvalidModel):
        ExtensionModel(1, 0, 1, 0, candidates=((2, 0, 0, 0),))


def test_interval_serialization():
    assert Interval(Fraction(1), None).to_dict() == {'lower': '1', 'upper': 'inf', 'empty': False}
    assert Interval(Fraction(2), Fraction(1)).empty


def test_constraint_defect_exact():
    assert constraint_defect('parameters', 2, 1, 1, Fraction(1, 2), 1) == 0
    assert constraint_defect('ff', 1, 0, 0, Fraction(3, 10), Fraction(-3, 10)) == 0
    assert constraint_defect('t1-t2', 1, 2, first=1, second=1, r2=1) == 0
