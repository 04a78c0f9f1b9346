import math

import numpy as np
import pytest

from rrdps_oam.channel import ChannelModel
from rrdps_oam.errors import ResourceLimitError
from rrdps_oam.matrix import (
    DetectionMatrix,
    build_matrix,
    qber_details,
    qber_from_matrix,
    sample_matrix,
    total_cells,
)
from rrdps_oam.modes import PhasePattern, make_index_set


def closed_form(L):
    """2/L on the branch matching each cell's parity, by direct enumeration."""
    idx = make_index_set(L)
    pairs = idx.slot_pairs()
    plus = np.zeros((2 ** (L - 1), len(pairs)))
    minus = np.zeros_like(plus)
    for i in range(2 ** (L - 1)):
        bits = PhasePattern.from_index(i, L).bits
        for j, (a, b) in enumerate(pairs):
            (minus if bits[a] ^ bits[b] else plus)[i, j] = 2 / L
    return plus, minus


def test_L4_identity_row_structure():
    M = build_matrix(4)
    assert M.shape == (8, 6)
    both = np.concatenate([M.probs_plus, M.probs_minus], axis=1)
    for row in both:
        nz = row[np.abs(row) > 1e-12]
        assert len(nz) == 6 and np.allclose(nz, 0.5)


def test_L3_shape_and_labels():
    M = build_matrix(3)
    assert M.shape == (4, 3)
    assert M.state_labels == ["000", "001", "010", "011"]
    assert M.setting_labels == [(-1, 0), (-1, 1), (0, 1)]


@pytest.mark.parametrize("L", range(3, 9))
def test_identity_matches_closed_form(L):
    M = build_matrix(L)
    plus, minus = closed_form(L)
    assert np.allclose(M.probs_plus, plus, atol=1e-14)
    assert np.allclose(M.probs_minus, minus, atol=1e-14)
    assert np.all(M.probs_plus * M.probs_minus == 0)
    assert qber_from_matrix(M) == 0


def test_full_enumeration_guard():
    build_matrix(12)
    with pytest.raises(ResourceLimitError):
        build_matrix(13)


def test_swapped_branches_give_qber_one():
    assert qber_from_matrix(build_matrix(5).swapped()) == 1.0


def test_white_noise_qber_half():
    assert qber_from_matrix(build_matrix(6, ChannelModel.white_noise(1.0))) == pytest.approx(0.5, abs=1e-3)


@pytest.mark.parametrize("sigma", [0.1, 0.3, 1.0])
def test_dephasing_qber_closed_form(sigma):
    # relative phase ~ N(0, 2 sigma^2): error fraction (1 - e^{-sigma^2}) / 2
    assert qber_from_matrix(build_matrix(5, ChannelModel.dephasing(sigma))) == pytest.approx(
        (1 - math.exp(-sigma**2)) / 2, abs=1e-12)


def test_no_clicks_flags_undefined():
    M = build_matrix(4, ChannelModel.aperture(0))  # even L has no l = 0 mode
    q = qber_details(M)
    assert not q.defined and math.isnan(qber_from_matrix(M))


def test_entries_in_range_with_noise():
    for ch in (ChannelModel.crosstalk(0.7), ChannelModel.aperture(1, 0.05), ChannelModel.gouy(0.4)):
        M = build_matrix(6, ch, p_bg=0.01)
        assert np.all(M.probs_plus >= 0) and np.all(M.probs_plus + M.probs_minus <= 1 + 1e-9)


def test_sample_counts():
    assert total_cells(16) == 3_932_160
    M = sample_matrix(16, 1500, seed=1)
    assert M.sampled and M.n_samples == 1500 and M.probs_plus.shape == (1500,)
    assert len(set(zip(M.state_labels, map(frozenset, M.setting_labels)))) == 1500


def test_sample_all_cells_equals_full_matrix():
    full = build_matrix(3, ChannelModel.dephasing(0.4))
    samp = sample_matrix(3, total_cells(3), ChannelModel.dephasing(0.4), seed=9)
    assert total_cells(3) == 12
    for s, p, a, b in samp.cells():
        assert full.lookup(s, p) == pytest.approx((a, b), abs=1e-15)
    assert qber_from_matrix(samp) == pytest.approx(qber_from_matrix(full), abs=1e-15)


def test_sample_reproducible():
    a = sample_matrix(10, 200, ChannelModel.crosstalk(0.2), seed=42)
    b = sample_matrix(10, 200, ChannelModel.crosstalk(0.2), seed=42)
    assert a.dumps() == b.dumps()
    assert a.dumps() != sample_matrix(10, 200, ChannelModel.crosstalk(0.2), seed=43).dumps()


def test_sample_domain():
    with pytest.raises(ValueError):
        sample_matrix(3, 13)
    with pytest.raises(ValueError):
        sample_matrix(3, 0)


def test_sampled_qber_consistent_with_full():
    sigma = 0.3
    full_qber = (1 - math.exp(-sigma**2)) / 2  # every cell carries the same ratio
    M = sample_matrix(16, 1500, ChannelModel.dephasing(sigma), seed=5)
    se = math.sqrt(full_qber * (1 - full_qber) / 1500)
    assert abs(qber_from_matrix(M) - full_qber) < 3 * se


def test_sample_large_L():
    M = sample_matrix(64, 1500, seed=3)
    assert all(len(s) == 64 and s[0] == "0" for s in M.state_labels)
    assert qber_from_matrix(M) == 0


@pytest.mark.parametrize("make", [lambda: build_matrix(4, ChannelModel.dephasing(0.2)),
                                  lambda: sample_matrix(12, 50, ChannelModel.crosstalk(0.3), seed=1)])
def test_file_round_trip(tmp_path, make):
    M = make()
    path = tmp_path / "m.json"
    M.save(path)
    back = DetectionMatrix.load(path)
    assert back.L == M.L and back.sampled == M.sampled and back.channel == M.channel
    assert back.state_labels == M.state_labels and back.setting_labels == M.setting_labels
    assert np.allclose(back.probs_plus, M.probs_plus, rtol=1e-11, atol=1e-15)
    assert back.dumps() == M.dumps()


def test_file_schema_fields():
    import json
    doc = json.loads(build_matrix(3).dumps())
    assert {"format_version", "L", "channel", "state_labels", "setting_labels", "probs_plus", "probs_minus",
            "sampled", "n_samples", "seed"} <= set(doc)


def test_loaded_swapped_matrix_qber(tmp_path):
    path = tmp_path / "swapped.json"
    build_matrix(4).swapped().save(path)
    assert qber_from_matrix(DetectionMatrix.load(path)) == 1.0


def test_empirical_channel_reproduces_source():
    src = build_matrix(4, ChannelModel.dephasing(0.5))
    M = build_matrix(4, ChannelModel.empirical(src))
    assert np.array_equal(M.probs_plus, src.probs_plus)


def test_rejects_bad_probabilities():
    with pytest.raises(ValueError):
        DetectionMatrix(2, ["00", "01"], [(-1, 1)], [[0.7], [0.0]], [[0.5], [0.0]])
