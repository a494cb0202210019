import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fairserve.population import (
    ATTRIBUTES,
    ENCODING_DIM,
    AgeBand,
    Gender,
    IdentityProfile,
    Race,
    SensitiveGroup,
    SkinType,
    decode,
    decode_indices,
    encode,
    encode_indices,
    enumerate_groups,
    group_by_label,
    in_group,
    membership_matrix,
    sample_identity,
    sample_indices,
)

profiles = st.builds(
    IdentityProfile,
    st.sampled_from(list(Race)),
    st.sampled_from(list(Gender)),
    st.sampled_from(list(AgeBand)),
    st.booleans(),
    st.sampled_from(list(SkinType)),
)


def test_same_seed_same_profile():
    a = [sample_identity(np.random.default_rng(11)) for _ in range(3)]
    assert a[0] == a[1] == a[2]


def test_distinct_seeds_give_distinct_streams():
    a = [IdentityProfile.from_indices(i) for i in sample_indices(np.random.default_rng(1), 10)]
    b = [IdentityProfile.from_indices(i) for i in sample_indices(np.random.default_rng(2), 10)]
    assert a != b


def test_race_frequencies_within_three_sigma():
    n = 10_000
    idx = sample_indices(np.random.default_rng(2024), n)
    p = 1 / 6
    sigma = math.sqrt(n * p * (1 - p))
    counts = np.bincount(idx[:, 0], minlength=6)
    assert np.all(np.abs(counts - n * p) <= 3 * sigma)


def test_population_weights_shift_frequencies():
    w = {"race": {"White": 0.0, "Black": 1.0}}
    idx = sample_indices(np.random.default_rng(5), 2000, w)
    counts = np.bincount(idx[:, 0], minlength=6)
    assert counts[Race.White] == 0
    assert counts[Race.Black] > 0


@pytest.mark.parametrize("weights", [{"race": {"Purple": 1.0}}, {"race": {"White": -1.0}},
                                     {"disability": {"No": 0.0, "Yes": 0.0}}])
def test_bad_population_weights(weights):
    with pytest.raises(ValueError):
        sample_indices(np.random.default_rng(0), 3, weights)


def test_enumerate_groups_order():
    groups = enumerate_groups()
    assert len(groups) == sum(len(e) for _, e in ATTRIBUTES) == 22
    assert groups[0] == SensitiveGroup("race", int(Race.White))
    assert groups[-1] == SensitiveGroup("skin", int(SkinType.VI))
    assert groups[0].label == "race=White"


def test_in_group_examples():
    p = IdentityProfile(Race.Black, Gender.Male, AgeBand.Adult, True, SkinType.V)
    assert in_group(p, SensitiveGroup("race", int(Race.Black)))
    assert not in_group(p, SensitiveGroup("race", int(Race.White)))
    assert in_group(p, group_by_label("disability=Yes"))


def test_group_by_label_forms():
    assert group_by_label("race=Black") == group_by_label("Black")
    with pytest.raises(ValueError):
        group_by_label("race=Purple")
    with pytest.raises(ValueError):
        group_by_label("Nobody")


@given(profiles)
def test_one_group_per_attribute(p):
    groups = enumerate_groups()
    for attr, _ in ATTRIBUTES:
        assert sum(in_group(p, g) for g in groups if g.attribute == attr) == 1


@given(profiles)
def test_encoding_round_trip(p):
    x = encode(p)
    assert x.shape == (ENCODING_DIM,)
    assert x.sum() == 5 and set(np.unique(x)) <= {0.0, 1.0}
    assert decode(x) == p


def test_vectorised_encoding_matches_scalar():
    idx = sample_indices(np.random.default_rng(3), 50)
    x = encode_indices(idx)
    for row, i in zip(x, idx):
        assert np.array_equal(row, encode(IdentityProfile.from_indices(i)))
    assert np.array_equal(decode_indices(x), idx)


def test_membership_matrix_matches_in_group():
    idx = sample_indices(np.random.default_rng(4), 40)
    groups = enumerate_groups()
    m = membership_matrix(idx, groups)
    for r, i in enumerate(idx):
        p = IdentityProfile.from_indices(i)
        assert [in_group(p, g) for g in groups] == m[r].tolist()


def test_decode_rejects_non_one_hot():
    with pytest.raises(ValueError):
        decode(np.zeros(ENCODING_DIM))


@given(profiles)
def test_profile_dict_round_trip(p):
    assert IdentityProfile.from_dict(p.to_dict()) == p
