import numpy as np
import pytest
from hypothesis import given, strategies as st

from agd_evade import codec
from agd_evade.errors import (EmptyDomain, EmptyLabel, InvalidCharacter, NoDot, NotOneHot,
                              TooLong)

label = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789-_", min_size=1, max_size=20)
domains = st.builds(lambda a, b: f"{a}.{b}", label, label)


def test_alphabet_ordering():
    assert codec.NUM_SYMBOLS == 39
    assert codec.INDEX_OF["a"] == 0 and codec.INDEX_OF["z"] == 25
    assert codec.INDEX_OF["0"] == 26 and codec.INDEX_OF["9"] == 35
    assert (codec.INDEX_OF["-"], codec.INDEX_OF["_"], codec.INDEX_OF["."]) == (36, 37, 38)
    assert sorted(codec.INDEX_OF.values()) == list(range(39))


def test_encode_examples():
    m = codec.encode("ab")
    assert m.shape == (2, 39)
    assert list(zip(*np.nonzero(m))) == [(0, 0), (1, 1)]
    assert list(zip(*np.nonzero(codec.encode("a.z")))) == [(0, 0), (1, 38), (2, 25)]


@pytest.mark.parametrize("bad, err", [("laner!com", InvalidCharacter), ("", EmptyDomain),
                                      ("a" * 66, TooLong)])
def test_encode_errors(bad, err):
    with pytest.raises(err):
        codec.encode(bad)


def test_uppercase_is_lowercased():
    assert codec.decode(codec.encode("TinBa.NET")) == "tinba.net"


def test_decode_examples():
    assert codec.decode(codec.encode("tinba")) == "tinba"
    row = np.zeros((1, 39), dtype=np.uint8)
    row[0, 26] = 1
    assert codec.decode(row) == "0"
    with pytest.raises(NotOneHot):
        codec.decode(np.zeros((1, 39)))
    two = row.copy()
    two[0, 3] = 1
    with pytest.raises(NotOneHot):
        codec.decode(two)


def test_structure_examples():
    s = codec.analyze_structure("02sygu4egq8m.net")
    assert s.perturbable == tuple(range(12)) and s.suffix == "net"
    assert s.target_label == "02sygu4egq8m"
    assert codec.analyze_structure("ab.cd.com").perturbable == (3, 4)
    with pytest.raises(EmptyLabel):
        codec.analyze_structure("abc..com")
    with pytest.raises(NoDot):
        codec.analyze_structure("localhost")


def test_encode_batch_pads_with_zero_rows():
    x = codec.encode_batch(["ab.c", "xyz.io"], rows=8)
    assert x.shape == (2, 8, 39)
    assert x[0, 4:].sum() == 0 and x[0, :4].sum() == 4
    np.testing.assert_array_equal(x[1, :6], codec.encode("xyz.io"))
    with pytest.raises(TooLong):
        codec.encode_batch(["abcdefghij.com"], rows=8)
    with pytest.raises(InvalidCharacter):
        codec.encode_batch(["a b.com"], rows=8)


@given(domains)
def test_roundtrip_and_onehot(d):
    m = codec.encode(d)
    assert m.shape[0] * m.shape[1] <= 65 * 39
    assert (m.sum(axis=1) == 1).all()
    assert codec.decode(m) == d


@given(st.lists(label, min_size=2, max_size=5))
def test_structure_properties(labels):
    d = ".".join(labels)
    if len(d) > 65:
        return
    s = codec.analyze_structure(d)
    assert ".".join(s.labels) == d
    assert all(d[p] != "." for p in s.perturbable)
    assert all(p < len(d) - len(labels[-1]) - 1 for p in s.perturbable)
    assert s.target_label == labels[-2]
