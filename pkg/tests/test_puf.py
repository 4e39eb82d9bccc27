import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import binom

from silicon_entropy.bitvector import BitVector
from silicon_entropy.calibration import Epoch
from silicon_entropy.dram import NOMINAL, ArrayGeometry, EnvCondition, ProcessParams, new_device, power_up_read
from silicon_entropy.puf import (
    AuthDecision,
    aging_campaign,
    EnrollmentDeficitError,
    EnrollmentMask,
    Fingerprint,
    authenticate,
    campaign_csv,
    enroll,
    enroll_device,
    generate_id,
    inter_hd,
    intra_hd,
    pairwise_hd,
    stability_report,
    stable_fraction,
    startup_reads,
)

SMALL = ArrayGeometry(16, 16, 16)
QUIET = ProcessParams(sigma_noise0=0.0, sigma_age=0.0, age_noise_gain=0.0)


def bv(*strings):
    return [BitVector.from_string(s) for s in strings]


# -- enroll ------------------------------------------------------------------------

@pytest.mark.parametrize("readings,expected", [
    (("0101", "0101", "0101"), [0, 1, 2, 3]),
    (("0101", "0111", "0101"), [0, 1, 3]),
    (("0000", "1111"), []),
])
def test_enroll_toy(readings, expected):
    mask = enroll(bv(*readings))
    assert mask.cell_indices.tolist() == expected
    assert mask.readings_used == len(readings)


def brute_force_unanimous(readings):
    n = len(readings[0])
    return [i for i in range(n) if len({r[i] for r in readings}) == 1]


@given(st.integers(1, 64), st.integers(2, 8), st.data())
def test_enroll_matches_brute_force(n, k, data):
    rows = [data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n)) for _ in range(k)]
    readings = [BitVector.from_bits(r) for r in rows]
    assert enroll(readings).cell_indices.tolist() == brute_force_unanimous(readings)
    # relaxed threshold via the counting path
    m = data.draw(st.integers(1, k))
    counts = np.sum(rows, axis=0)
    expected = [i for i in range(n) if max(counts[i], k - counts[i]) >= m]
    assert enroll(readings, m).cell_indices.tolist() == expected


def test_enroll_errors():
    with pytest.raises(ValueError):
        enroll(bv("0101", "010"))
    with pytest.raises(ValueError):
        enroll(bv("0101"))
    with pytest.raises(ValueError):
        enroll(bv("01", "01"), min_stability=3)


def test_enroll_calibrated_device_fraction():
    d = new_device(21)
    mask = enroll_device(d, reads=144, rng_seed=1)
    assert len(mask) / d.capacity == pytest.approx(0.89, abs=0.03)


def test_mask_rejects_unsorted_indices():
    with pytest.raises(ValueError):
        EnrollmentMask(np.array([3, 1]), SMALL, 2)
    with pytest.raises(ValueError):
        EnrollmentMask(np.array([1, 1]), SMALL, 2)
    with pytest.raises(ValueError):
        EnrollmentMask(np.array([SMALL.capacity]), SMALL, 2)


def test_mask_json_roundtrip():
    d = new_device(3, SMALL)
    mask = enroll_device(d, (NOMINAL, EnvCondition(60, 5.5)), reads=10, rng_seed=2)
    back = EnrollmentMask.from_json(mask.to_json())
    assert np.array_equal(back.cell_indices, mask.cell_indices)
    assert back.digest() == mask.digest()
    assert back.conditions_used == mask.conditions_used


def test_multi_condition_is_intersection():
    d = new_device(4, SMALL)
    hot = EnvCondition(85, 5.0)
    both = enroll_device(d, (NOMINAL, hot), reads=20, rng_seed=3)
    nominal_only = set(enroll_device(d, (NOMINAL,), reads=20, rng_seed=3).cell_indices.tolist())
    assert set(both.cell_indices.tolist()) <= nominal_only
    assert both.readings_used == 40


# -- generate_id ---------------------------------------------------------------------

def test_noiseless_id_reproducible():
    d = new_device(5, SMALL, QUIET)
    mask = enroll_device(d, reads=4, rng_seed=0)
    a = generate_id(d, mask, rng_seed=1)
    b = generate_id(d, mask, rng_seed=2)
    assert a.bits == b.bits and len(a.bits) == 128
    assert a.mask_digest == mask.digest()


def test_id_extraction_order():
    d = new_device(6, SMALL)
    mask = enroll_device(d, reads=30, rng_seed=0)
    fp = generate_id(d, mask, rng_seed=9, id_length=40)
    same_read = power_up_read(new_device(6, SMALL), NOMINAL, 9).to_array()
    assert fp.bits.to_array().tolist() == same_read[mask.cell_indices[:40]].tolist()


def test_id_determinism():
    mask = enroll_device(new_device(7, SMALL), reads=20, rng_seed=0)
    fps = [generate_id(new_device(7, SMALL), mask, rng_seed=4) for _ in range(2)]
    assert fps[0] == fps[1]


def test_enrollment_deficit():
    d = new_device(8, SMALL)
    mask = EnrollmentMask(np.arange(100), SMALL, 2)
    with pytest.raises(EnrollmentDeficitError) as info:
        generate_id(d, mask, id_length=128)
    assert (info.value.required, info.value.available) == (128, 100)
    assert "128" in str(info.value) and "100" in str(info.value)


def test_mask_geometry_must_match():
    mask = EnrollmentMask(np.arange(200), ArrayGeometry(8, 8, 16), 2)
    with pytest.raises(ValueError):
        generate_id(new_device(1, SMALL), mask)


def test_fingerprint_json_roundtrip():
    fp = Fingerprint(BitVector.from_bits([1, 0, 1] * 43 + [1]), "dev", "abc")
    assert Fingerprint.from_json(fp.to_json()) == fp
    assert '"bits": "' in fp.to_json()


# -- authenticate ---------------------------------------------------------------------

def test_self_match_accepted_at_any_threshold():
    fp = Fingerprint(BitVector.from_bits(np.random.default_rng(0).integers(0, 2, 128)))
    for t in (0.0, 0.2, 0.5):
        assert authenticate(fp, fp, t) == AuthDecision(0.0, t, True)


def test_ten_bit_difference():
    a = np.random.default_rng(1).integers(0, 2, 128)
    b = a.copy()
    b[:10] ^= 1
    dec = authenticate(Fingerprint(BitVector.from_bits(b)), Fingerprint(BitVector.from_bits(a)))
    assert dec.fractional_hd == 0.078125 and dec.accepted


def test_false_accept_probability_bound():
    # impostor accepted only if Bin(128, 1/2) <= floor(0.2 * 128) = 25
    assert binom.cdf(25, 128, 0.5) < 1e-11


@given(st.integers(0, 128), st.floats(0, 1))
def test_accept_iff_hd_at_most_threshold(diff, threshold):
    a = np.zeros(128, dtype=np.uint8)
    b = a.copy()
    b[:diff] = 1
    dec = authenticate(Fingerprint(BitVector.from_bits(b)), Fingerprint(BitVector.from_bits(a)), threshold)
    assert dec.accepted == (dec.fractional_hd <= threshold)


def test_authenticate_errors():
    a = Fingerprint(BitVector.zeros(128))
    with pytest.raises(ValueError):
        authenticate(a, Fingerprint(BitVector.zeros(64)))
    with pytest.raises(ValueError):
        authenticate(a, a, 1.5)


def test_authentication_separation():
    genuine_ok = impostor_ok = total_g = total_i = 0
    stored = {}
    for seed in range(1, 51):
        d = new_device(seed, SMALL)
        mask = enroll_device(d, reads=144, rng_seed=seed)
        stored[seed] = generate_id(d, mask, rng_seed=0)
        for r in range(1, 11):
            hd = authenticate(generate_id(d, mask, rng_seed=r), stored[seed]).fractional_hd
            genuine_ok += hd < 0.1
            total_g += 1
    for a, b in itertools.combinations(range(1, 51), 2):
        impostor_ok += authenticate(stored[a], stored[b]).fractional_hd > 0.4
        total_i += 1
    assert genuine_ok / total_g >= 0.95
    assert impostor_ok / total_i >= 0.95


# -- HD metrics ---------------------------------------------------------------------

@pytest.mark.parametrize("readings,expected", [
    (("0110", "0110", "0110"), 0.0),
    (("0000", "1111"), 1.0),
    (("0000", "0011", "0101"), 0.5),
])
def test_intra_hd_examples(readings, expected):
    assert intra_hd(bv(*readings)) == expected


@pytest.mark.parametrize("fps,expected", [(("0101", "0101"), 0.0), (("0101", "1010"), 1.0)])
def test_inter_hd_examples(fps, expected):
    assert inter_hd([Fingerprint(v) for v in bv(*fps)]) == expected


@given(st.integers(1, 40), st.integers(2, 6), st.data())
def test_hd_axioms(n, k, data):
    vecs = [BitVector.from_bits(data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))) for _ in range(k)]
    hd = intra_hd(vecs)
    assert 0.0 <= hd <= 1.0
    assert hd == pytest.approx(intra_hd(vecs[::-1]))
    assert (hd == 0.0) == all(v == vecs[0] for v in vecs)
    assert hd == pytest.approx(np.mean(pairwise_hd(vecs)))


def test_hd_length_mismatch():
    with pytest.raises(ValueError):
        intra_hd(bv("01", "011"))
    with pytest.raises(ValueError):
        inter_hd(bv("01", "011"))


def test_masked_reliability_dominance():
    d = new_device(22, SMALL)
    mask = enroll_device(d, reads=144, rng_seed=0)
    reads = startup_reads(d, NOMINAL, 20, rng_seed=99)
    masked = [BitVector.from_bits(r.to_array()[mask.cell_indices]) for r in reads]
    assert intra_hd(masked) <= intra_hd(reads)


# -- stability reports ----------------------------------------------------------------

def test_noiseless_report_all_stable():
    d = new_device(23, SMALL, QUIET)
    report = stability_report(d, [(NOMINAL, 5), (EnvCondition(age_hours=1000), 5)])
    assert [r.stable_fraction for r in report.rows] == [1.0, 1.0]
    assert report.to_csv().splitlines()[0] == "condition,reads,stable_fraction"


def test_report_ages_device_between_entries():
    d = new_device(24, SMALL)
    stability_report(d, [(Epoch("a", EnvCondition(age_hours=100)), 3), (Epoch("b", EnvCondition(age_hours=300)), 3)])
    assert d.age_hours == 300
    assert [e["hours"] for e in d.history] == [100, 200]


def test_report_errors():
    with pytest.raises(ValueError):
        stability_report(new_device(1, SMALL), [])
    with pytest.raises(ValueError):
        stability_report(new_device(1, SMALL), [(NOMINAL, 1)])


def test_degenerate_aging_epochs_match_pre_aging():
    params = ProcessParams(sigma_age=0.0, age_noise_gain=0.0)
    d = new_device(25, params=params)
    rows = aging_campaign(d, reads=144, rng_seed=3).rows
    p = rows[0].stable_fraction
    tol = 3 * math.sqrt(p * (1 - p) / d.capacity)
    assert all(abs(r.stable_fraction - p) <= tol for r in rows[1:])
    assert campaign_csv(aging_campaign(new_device(25, SMALL, params), reads=4)).startswith("epoch,stable_fraction\n")


def test_stable_fraction_requires_two_reads():
    with pytest.raises(ValueError):
        stable_fraction(new_device(1, SMALL), NOMINAL, 1, 0)
