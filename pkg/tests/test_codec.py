import itertools

import numpy as np
import pytest

from trileg.actuation import VoltageTriple
from trileg.codec import (
    EOS_ID,
    SOS_ID,
    ActionSentence,
    QuantizerSpec,
    StreamParser,
    build_target,
    dequantize,
    quantize,
    sentence_from_ids,
)
from trileg.errors import ValidationError

Q = QuantizerSpec()


class TestQuantizerSpec:
    def test_defaults(self):
        assert Q.dv_range == 0.5 and Q.step == 0.1
        assert Q.n_bins == 11
        assert Q.vocab_size == 13

    def test_range_must_be_multiple(self):
        with pytest.raises(ValidationError):
            QuantizerSpec(dv_range=0.45, step=0.1)
        with pytest.raises(ValidationError):
            QuantizerSpec(dv_range=0.5, step=0.0)


class TestQuantize:
    def test_center_bin(self):
        assert quantize(VoltageTriple(), Q).bins == (5, 5, 5)

    def test_one_step_below_center(self):
        assert quantize(VoltageTriple(-0.1, 0, 0), Q).bins == (4, 5, 5)

    def test_round_half_away_from_zero(self):
        assert quantize(VoltageTriple(0.26, -0.26, 0), Q).bins == (8, 2, 5)
        # exact half-cells round away from the interval floor
        assert quantize(VoltageTriple(0.25, -0.25, 0), Q).bins == (8, 3, 5)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValidationError):
            quantize(VoltageTriple(0.51, 0, 0), Q)
        with pytest.raises(ValidationError):
            quantize(VoltageTriple(float("nan"), 0, 0), Q)

    def test_range_endpoints(self):
        assert quantize(VoltageTriple(-0.5, 0.5, 0), Q).bins == (0, 10, 5)


class TestDequantize:
    def test_center(self):
        assert dequantize(ActionSentence((5, 5, 5)), Q) == VoltageTriple(0.0, 0.0, 0.0)

    def test_endpoints(self):
        assert dequantize(ActionSentence((0, 10, 5)), Q) == VoltageTriple(-0.5, 0.5, 0.0)

    def test_malformed_rejected(self):
        with pytest.raises(ValidationError):
            dequantize(ActionSentence((0, 11, 5)), Q)
        with pytest.raises(ValidationError):
            sentence_from_ids([SOS_ID, 7, 7, 7], Q)
        with pytest.raises(ValidationError):
            sentence_from_ids([SOS_ID, 7, 7, 99, EOS_ID], Q)
        with pytest.raises(ValidationError):
            sentence_from_ids([7, 7, 7, 7, EOS_ID], Q)

    def test_roundtrip_identity_on_all_sentences(self):
        for bins in itertools.product(range(Q.n_bins), repeat=3):
            s = ActionSentence(bins)
            assert quantize(dequantize(s, Q), Q) == s

    def test_roundtrip_error_bound(self):
        rng = np.random.default_rng(21)
        for _ in range(1000):
            dv = VoltageTriple(*rng.uniform(-0.5, 0.5, 3))
            back = dequantize(quantize(dv, Q), Q)
            err = max(abs(back.vx - dv.vx), abs(back.vy - dv.vy), abs(back.vz - dv.vz))
            assert err <= 0.05 + 1e-12


class TestSupervisionTarget:
    def test_center_ids(self):
        assert build_target(VoltageTriple(), Q).ids == (0, 7, 7, 7, 1)

    def test_min_bin_ids(self):
        assert build_target(VoltageTriple(-0.5, 0, 0), Q).ids == (0, 2, 7, 7, 1)

    def test_decode_matches_quantize(self):
        rng = np.random.default_rng(31)
        for _ in range(300):
            dv = VoltageTriple(*rng.uniform(-0.5, 0.5, 3))
            target = build_target(dv, Q)
            assert sentence_from_ids(list(target.ids), Q) == quantize(dv, Q)

    def test_vocabulary_bijection(self):
        seen = set()
        for bins in itertools.product(range(Q.n_bins), repeat=3):
            ids = tuple(ActionSentence(bins).to_ids())
            assert ids not in seen
            seen.add(ids)
            assert sentence_from_ids(list(ids), Q).bins == bins


class TestStreamParser:
    def test_three_well_formed(self):
        parser = StreamParser(Q)
        stream = []
        for bins in [(5, 5, 5), (0, 10, 5), (2, 2, 2)]:
            stream += ActionSentence(bins).to_ids()
        out = parser.feed(stream)
        assert [s.bins for s in out] == [(5, 5, 5), (0, 10, 5), (2, 2, 2)]
        assert parser.diagnostics == 0
        assert parser.remainder == []

    def test_partial_remainder(self):
        parser = StreamParser(Q)
        ids = ActionSentence((1, 2, 3)).to_ids()
        out = parser.feed(ids[:3])
        assert out == [] and parser.remainder == ids[:3]
        out = parser.feed(ids[3:])
        assert [s.bins for s in out] == [(1, 2, 3)]

    def test_wrong_arity_skipped_and_resync(self):
        parser = StreamParser(Q)
        bad = [SOS_ID, 4, 4, 4, 4, EOS_ID]  # four bins
        good = ActionSentence((6, 6, 6)).to_ids()
        out = parser.feed(bad + good)
        assert [s.bins for s in out] == [(6, 6, 6)]
        assert parser.diagnostics == 1

    def test_sos_mid_frame_resyncs(self):
        parser = StreamParser(Q)
        out = parser.feed([SOS_ID, 4, SOS_ID, 6, 6, 6, EOS_ID])
        assert [s.bins for s in out] == [(4, 4, 4)]
        assert parser.diagnostics == 1

    def test_garbage_between_frames(self):
        parser = StreamParser(Q)
        good = ActionSentence((3, 3, 3)).to_ids()
        out = parser.feed([99, 98] + good + [42] + good)
        assert len(out) == 2
        assert parser.diagnostics == 2

    def test_fuzz_no_missed_frames(self):
        rng = np.random.default_rng(77)
        parser = StreamParser(Q)
        expected = []
        stream = []
        wellformed = 0
        while wellformed < 1000:
            roll = rng.random()
            if roll < 0.6:
                bins = tuple(int(b) for b in rng.integers(0, Q.n_bins, 3))
                stream += ActionSentence(bins).to_ids()
                expected.append(bins)
                wellformed += 1
            elif roll < 0.75:  # wrong arity
                k = int(rng.choice([1, 2, 4, 5]))
                stream += [SOS_ID] + [int(b) + 2 for b in rng.integers(0, 11, k)] + [EOS_ID]
            elif roll < 0.9:  # out-of-vocab id inside a frame
                stream += [SOS_ID, 7, 99, 7, EOS_ID]
            else:  # stray garbage between frames
                stream += [int(x) for x in rng.integers(13, 90, rng.integers(1, 4))]
        # feed in random chunk sizes to exercise the remainder machinery
        out = []
        idx = 0
        while idx < len(stream):
            take = int(rng.integers(1, 9))
            out += parser.feed(stream[idx : idx + take])
            idx += take
        assert [s.bins for s in out] == expected
        assert parser.diagnostics > 0
