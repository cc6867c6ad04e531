from __future__ import annotations

import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from adasgo.errors import DimensionMismatch, NotADownset
from adasgo.grid_index import (
    Downset,
    box_cardinality,
    covering_elements,
    full_box,
    is_covering_element,
    is_downward_closed,
    simplex_downset,
)


def _brute_covering(ds: Downset):
    out = set()
    for i in itertools.product(*(range(1, c + 1) for c in ds.cap)):
        if i in ds:
            continue
        if is_downward_closed(set(ds.members()) | {i}):
            out.add(i)
    return out


@st.composite
def random_downsets(draw):
    d = draw(st.integers(1, 3))
    cap = tuple(draw(st.integers(1, 4)) for _ in range(d))
    ds = Downset(cap, [(1,) * d])
    for _ in range(draw(st.integers(0, 12))):
        cand = sorted(covering_elements(ds))
        if not cand:
            break
        ds.add(draw(st.sampled_from(cand)))
    return ds


class TestCovering:
    @pytest.mark.parametrize(
        "members,i,expected",
        [([(1, 1)], (2, 1), True), ([(1, 1)], (2, 2), False), ([(1, 1), (2, 1), (1, 2)], (2, 2), True)],
    )
    def test_is_covering_element(self, members, i, expected):
        assert is_covering_element(Downset.from_members(members, (3, 3)), i) is expected

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            is_covering_element(Downset((2, 2), [(1, 1)]), (2, 1, 1))

    def test_covering_elements_examples(self):
        assert covering_elements(Downset((3, 3), [(1, 1)])) == {(2, 1), (1, 2)}
        assert covering_elements(Downset((2, 2), [(1, 1), (2, 1)])) == {(1, 2)}
        assert covering_elements(full_box((2, 2))) == set()

    @given(random_downsets())
    def test_matches_brute_force(self, ds):
        assert covering_elements(ds) == _brute_covering(ds)

    @given(random_downsets())
    def test_adding_any_covering_element_keeps_closure(self, ds):
        for i in covering_elements(ds):
            assert is_downward_closed(set(ds.members()) | {i})


class TestDownset:
    @pytest.mark.parametrize("cap,count", [((2, 2), 4), ((1, 1, 1), 1), ((3, 2), 6)])
    def test_full_box(self, cap, count):
        assert len(full_box(cap)) == count == box_cardinality(cap)

    def test_rejects_non_closed(self):
        with pytest.raises(NotADownset):
            Downset.from_members([(1, 1), (2, 2)])
        ds = Downset((3, 3), [(1, 1)])
        with pytest.raises(NotADownset):
            ds.add((2, 2))

    def test_rejects_index_above_cap(self):
        with pytest.raises(NotADownset):
            Downset((2, 2), [(1, 1), (3, 1)])

    def test_first_member_must_be_origin(self):
        with pytest.raises(NotADownset):
            Downset((2, 2), [(2, 1)])

    def test_simplex(self):
        ds = simplex_downset(3, 2)
        assert ds.members() == {(1, 1), (2, 1), (1, 2), (3, 1), (2, 2), (1, 3)}

    @given(random_downsets())
    def test_json_roundtrip_preserves_journal(self, ds):
        back = Downset.from_json(ds.to_json(), ds.cap)
        assert back == ds and back.journal == ds.journal

    @given(random_downsets())
    def test_invariants(self, ds):
        assert is_downward_closed(ds.members())
        assert all(all(a <= b for a, b in zip(i, ds.cap)) for i in ds)
