import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from resvoc.codebook import RN_SIZE, Codebook, ResidualFrame, compress, full_codebook, kmeans, rn, rn_distance, rn_matrix
from resvoc.dsp import Frame, Waveform, frame_energy, hann_window
from resvoc.errors import DegenerateFrameError, InvalidArgument
from resvoc.excitation import (CODEBOOK, PULSE, Event, TargetTrack, adapt, build_excitation, noise_fill,
                               overlap_add, pulse_frame, select, windowed_energy)
from resvoc.metrics import frame_snr_db
from resvoc.pipeline import analyze

from conftest import FS
from test_codebook import family_corpus, random_frames, shaped_frame


def random_codebook(rng, size):
    frames = random_frames(rng, size)
    return full_codebook(frames)


def unit(rng, size=RN_SIZE):
    x = rng.standard_normal(size)
    return x / np.linalg.norm(x)


def voiced_event(pos, period, energy, rng, sign=1):
    return Event(pos, True, period, energy, unit(rng), sign)


def excluded_near_unvoiced(track):
    """Voiced events whose two-period support reaches into an unvoiced span."""
    spans = track.unvoiced_spans()
    out = set()
    for e in track.events:
        if e.voiced and any(a < e.position + e.period and e.position - e.period < b for a, b, _ in spans):
            out.add(e.position)
    return out


# ----------------------------------------------------------------------
# Track types
# ----------------------------------------------------------------------

class TestTrack:
    def test_positions_strictly_increasing(self):
        with pytest.raises(InvalidArgument):
            TargetTrack((Event(5, False, 0, 1.0), Event(5, False, 0, 1.0)), 10, FS)

    def test_positions_inside(self):
        with pytest.raises(InvalidArgument):
            TargetTrack((Event(10, False, 0, 1.0),), 10, FS)

    def test_voiced_needs_period_and_rn(self, rng):
        with pytest.raises(InvalidArgument):
            Event(5, True, 0, 1.0, unit(rng))
        with pytest.raises(InvalidArgument):
            Event(5, True, 40, 1.0, np.zeros(19))
        with pytest.raises(InvalidArgument):
            Event(5, False, 0, -1.0)
        with pytest.raises(InvalidArgument):
            Event(5, True, 40, 1.0, unit(rng), sign=0)

    def test_unvoiced_spans(self, rng):
        events = (Event(10, False, 0, 1.0), Event(30, False, 0, 2.0), voiced_event(100, 40, 1.0, rng),
                  Event(200, False, 0, 4.0))
        t = TargetTrack(events, 300, FS)
        assert t.unvoiced_spans() == [(0, 65, 3.0), (150, 300, 4.0)]


# ----------------------------------------------------------------------
# Selection
# ----------------------------------------------------------------------

class TestSelect:
    def test_single_entry(self, rng):
        cb = random_codebook(rng, 1)
        for _ in range(10):
            assert select(cb, unit(rng))[0] == 0

    def test_exact_key(self, rng):
        cb = random_codebook(rng, 50)
        i, d = select(cb, cb.keys[17])
        assert i == 17 and d == 0.0

    def test_ties_pick_lowest_index(self, rng):
        f = random_frames(rng, 1)[0]
        cb = full_codebook([f, f, f])
        assert select(cb, unit(rng))[0] == 0

    def test_matches_linear_scan(self, rng):
        cb = random_codebook(rng, 1000)
        for _ in range(200):
            t = unit(rng)
            best, best_d = 0, np.inf
            for j, key in enumerate(cb.keys):
                d = rn_distance(key, t)
                if d < best_d:
                    best, best_d = j, d
            assert select(cb, t)[0] == best

    @given(st.integers(0, 2 ** 32 - 1), st.integers(1, 60))
    def test_scan_property(self, seed, size):
        rng = np.random.default_rng(seed)
        cb = random_codebook(rng, size)
        if size > 2 and rng.uniform() < 0.5:
            t = cb.keys[int(rng.integers(size))]
        else:
            t = unit(rng)
        dist = [rn_distance(k, t) for k in cb.keys]
        assert select(cb, t)[0] == int(np.argmin(dist))


# ----------------------------------------------------------------------
# Adaptation
# ----------------------------------------------------------------------

class TestAdapt:
    def test_identity(self):
        f = shaped_frame("wave", 80)
        out = adapt(f, 80, f.energy)
        np.testing.assert_allclose(out.samples, f.samples, atol=1e-6)
        assert out.anchor == 80

    def test_half_period_length(self):
        f = shaped_frame("pulse", 80)
        out = adapt(f, 40, 1.0)
        assert len(out) == 80 and out.anchor == 40

    @pytest.mark.parametrize("period", [40, 57, 80, 113, 160])
    def test_shape_preserved(self, period):
        for name in ("pulse", "ramp", "wave"):
            f = shaped_frame(name, 80)
            assert rn_distance(rn(adapt(f, period, 3.0)), rn(f)) <= 0.05

    @given(st.integers(0, 2 ** 32 - 1), st.integers(2, 200), st.floats(1e-8, 1e4))
    def test_energy_exact(self, seed, period, energy):
        f = random_frames(np.random.default_rng(seed), 1)[0]
        out = adapt(f, period, energy)
        assert len(out) == 2 * period
        assert frame_energy(out) == pytest.approx(energy, rel=1e-9)

    def test_zero_payload(self):
        with pytest.raises(DegenerateFrameError):
            adapt(ResidualFrame(np.zeros(80), 40, 0.0), 40, 1.0)

    def test_bad_arguments(self):
        f = shaped_frame("pulse", 40)
        with pytest.raises(InvalidArgument):
            adapt(f, 0, 1.0)
        with pytest.raises(InvalidArgument):
            adapt(f, 40, -1.0)


# ----------------------------------------------------------------------
# Overlap-add and noise
# ----------------------------------------------------------------------

class TestOverlapAdd:
    def test_single_frame(self, rng):
        f = Frame(rng.standard_normal(60), 30)
        out, clipped = overlap_add([(f, 100)], 300)
        assert clipped == 0
        np.testing.assert_array_equal(out[70:130], f.samples)
        assert not out[:70].any() and not out[130:].any()

    def test_periodic_middle(self, rng):
        T = 50
        f = Frame(rng.standard_normal(2 * T) * hann_window(2 * T), T)
        out, _ = overlap_add([(f, 100 + i * T) for i in range(6)], 600)
        mid = out[100:100 + 4 * T]
        np.testing.assert_allclose(mid[T:], mid[:-T], atol=1e-15)

    def test_direct_sum(self, rng):
        placed = [(Frame(rng.standard_normal(2 * p), p), pos) for p, pos in ((30, 40), (45, 90), (20, 130))]
        out, _ = overlap_add(placed, 200)
        ref = np.zeros(200)
        for f, pos in placed:
            for j, v in enumerate(f.samples):
                ref[pos - f.anchor + j] += v
        np.testing.assert_allclose(out, ref, atol=1e-15)

    def test_empty(self):
        out, clipped = overlap_add([], 50)
        assert clipped == 0 and out.shape == (50,) and not out.any()

    def test_clipping_counted(self, rng):
        f = Frame(rng.standard_normal(40), 20)
        out, clipped = overlap_add([(f, 5), (f, 50), (f, 95)], 100)
        assert clipped == 2
        np.testing.assert_array_equal(out[:25], f.samples[15:])


class TestNoiseFill:
    def test_zero_energy(self):
        assert not noise_fill(100, 0.0, 1).any()

    def test_energy(self):
        x = noise_fill(1000, 1.0, 3)
        assert abs(np.dot(x, x) - 1.0) <= 1e-9

    def test_seeded(self):
        a, b = noise_fill(1000, 1.0, 3), noise_fill(1000, 1.0, 3)
        assert a.tobytes() == b.tobytes()
        c = noise_fill(1000, 1.0, 4)
        assert abs(np.corrcoef(a, c)[0, 1]) < 0.1

    def test_uniform_and_white(self):
        x = noise_fill(20000, 20000.0, 7)
        lag1 = np.dot(x[1:], x[:-1]) / np.dot(x, x)
        assert abs(lag1) < 0.03
        # Uniform noise: kurtosis 1.8 versus 3 for a Gaussian.
        assert np.mean(x ** 4) / np.mean(x ** 2) ** 2 == pytest.approx(1.8, abs=0.05)

    @given(st.integers(1, 5000), st.floats(1e-12, 1e6), st.integers(0, 2 ** 32 - 1))
    def test_energy_property(self, n, energy, seed):
        x = noise_fill(n, energy, seed)
        assert len(x) == n
        assert np.dot(x, x) == pytest.approx(energy, rel=1e-9)

    def test_negative_energy(self):
        with pytest.raises(InvalidArgument):
            noise_fill(10, -1.0, 0)


# ----------------------------------------------------------------------
# Excitation
# ----------------------------------------------------------------------

class TestBuild:
    def test_all_unvoiced(self):
        t = TargetTrack((Event(50, False, 0, 2.0), Event(150, False, 0, 3.0)), 400, FS)
        out, report = build_excitation(t, None, CODEBOOK, seed=9)
        assert out.samples.tobytes() == noise_fill(400, 5.0, [9, 0]).tobytes()
        assert report.records == []

    def test_single_voiced_single_entry(self, rng):
        payload = shaped_frame("ramp", 60)
        cb = full_codebook([payload])
        t = TargetTrack((voiced_event(200, 45, 2.5, rng),), 500, FS)
        out, report = build_excitation(t, cb, CODEBOOK)
        expected = adapt(payload, 45, 2.5).samples
        np.testing.assert_allclose(out.samples[155:245], expected, atol=1e-12)
        assert not out.samples[:155].any() and not out.samples[245:].any()
        assert report.records[0].entry == 0
        assert report.records[0].ratio == pytest.approx(0.75)

    def test_sign_and_polarity(self, rng):
        payload = shaped_frame("pulse", 40)
        cb = full_codebook([payload])
        base = build_excitation(TargetTrack((voiced_event(100, 40, 1.0, rng),), 300, FS), cb)[0].samples
        flipped = build_excitation(TargetTrack((voiced_event(100, 40, 1.0, rng, -1),), 300, FS), cb)[0].samples
        both = build_excitation(TargetTrack((voiced_event(100, 40, 1.0, rng, -1),), 300, FS, -1), cb)[0].samples
        np.testing.assert_array_equal(flipped, -base)
        np.testing.assert_array_equal(both, base)

    def test_codebook_required(self, rng):
        t = TargetTrack((voiced_event(100, 40, 1.0, rng),), 300, FS)
        with pytest.raises(InvalidArgument):
            build_excitation(t, None, CODEBOOK)
        with pytest.raises(InvalidArgument):
            build_excitation(t, None, "buzz")

    def test_pulse_mode(self, rng):
        t = TargetTrack((voiced_event(100, 40, 2.0, rng), Event(250, False, 0, 1.0)), 300, FS)
        out, report = build_excitation(t, None, PULSE, seed=1)
        assert np.flatnonzero(out.samples[:175]).tolist() == [100]
        assert out.samples[100] < 0
        assert windowed_energy(out.samples, 100, 40) == pytest.approx(2.0, rel=1e-9)
        np.testing.assert_array_equal(out.samples[175:], noise_fill(125, 1.0, [1, 0]))
        assert report.records == []

    def test_pulse_frame_energy(self):
        for period in (20, 57, 160):
            f = pulse_frame(period, 3.0)
            assert np.sum((f.samples * hann_window(2 * period)) ** 2) == pytest.approx(3.0, rel=1e-12)

    def test_length_and_determinism(self, male_utterance):
        a = analyze(male_utterance.wave)
        cb = full_codebook(a.frames)
        for mode in (CODEBOOK, PULSE):
            x, _ = build_excitation(a.track, cb, mode, seed=5)
            y, _ = build_excitation(a.track, cb, mode, seed=5)
            assert len(x) == a.track.total_length == len(male_utterance.wave)
            assert x.samples.tobytes() == y.samples.tobytes()

    def test_no_energy_holes_with_longer_payloads(self, rng):
        frames, _ = family_corpus()
        cb = compress(kmeans(rn_matrix(frames), 3, seed=0).centroids, frames, 10)
        events = tuple(voiced_event(200 + 100 * i, int(rng.integers(40, 101)), 1.0, rng) for i in range(20))
        _, report = build_excitation(TargetTrack(events, 2400, FS), cb)
        assert all(r.ratio <= 1.0 for r in report.records)
        assert report.energy_holes == 0


@pytest.fixture(scope="module", params=["male", "female"])
def analysed(request, male_utterance, female_utterance):
    utt = male_utterance if request.param == "male" else female_utterance
    return analyze(utt.wave)


class TestEnergyContracts:
    def test_unvoiced_spans_exact(self, analysed):
        out, _ = build_excitation(analysed.track, full_codebook(analysed.frames), seed=2)
        spans = analysed.track.unvoiced_spans()
        assert spans
        for a, b, energy in spans:
            seg = out.samples[a:b]
            assert np.dot(seg, seg) == pytest.approx(energy, rel=1e-9, abs=0.0)

    @pytest.mark.parametrize("mode", [CODEBOOK, PULSE])
    def test_voiced_within_3db(self, analysed, mode):
        track = analysed.track
        out, _ = build_excitation(track, full_codebook(analysed.frames), mode, seed=2)
        skip = excluded_near_unvoiced(track)
        ratios = [10 * np.log10(windowed_energy(out.samples, e.position, e.period) / e.energy)
                  for e in track.events if e.voiced and e.position not in skip]
        assert len(ratios) > 100
        assert np.max(np.abs(ratios)) <= 3.0

    def test_self_reconstruction(self, analysed):
        track = analysed.track
        out, report = build_excitation(track, full_codebook(analysed.frames), seed=2)
        assert all(r.distance == 0.0 for r in report.records)
        assert len(report.records) == sum(e.voiced for e in track.events)
        mask = np.zeros(track.total_length, bool)
        for e in track.events:
            if e.voiced:
                mask[e.position - e.period:e.position + e.period] = True
        size = FS // 50
        frames = mask[:len(mask) // size * size].reshape(-1, size).all(axis=1)
        snr = frame_snr_db(analysed.residual.samples, out.samples, size)[frames]
        assert np.mean(snr) >= 20.0
