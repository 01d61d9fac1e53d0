import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iitnet.edf import MissingChannel, write_edf
from iitnet.ingest import (
    AnnotationGranularity,
    AnnotationOverrun,
    DatasetConfig,
    DatasetKind,
    EpochArray,
    IngestError,
    RawRecording,
    extract_epochs,
    find_recordings,
    ingest_directory,
    make_sequences,
    read_recording,
    sequence_index,
)
from iitnet.stages import LabeledEpoch, StageLabel

from fixtures import TOKEN_CLASS, random_night, write_mass_night, write_sleepedf_night, write_shhs_night
from oracles import annotation_scan_counts


def _night(labels, rate=1.0, subject="s"):
    n = int(30 * rate)
    signal = np.arange(len(labels) * n, dtype=np.float32)
    ann = [(i * n, lab) for i, lab in enumerate(labels)]
    return RawRecording(signal, rate, "EEG", subject, ann)


def _cfg(**kw):
    kw.setdefault("sample_rate", 1.0)
    return DatasetConfig(**kw)


# --- extract_epochs -------------------------------------------------------


def test_wake_trimming_example():
    labels = ["Sleep stage W"] * 1000
    for i in range(200, 801):
        labels[i] = "Sleep stage 2"
    epochs = extract_epochs(_night(labels), _cfg(dataset_kind="sleepedf", wake_trim_epochs=60))
    positions = [e.position for e in epochs]
    # brute-force scan of the rule
    expected = [i for i in range(1000) if 200 - 60 <= i <= 800 + 60]
    assert positions == expected
    assert positions[0] == 140 and positions[-1] == 860


def test_trim_zero_keeps_sleep_period_only():
    labels = ["Sleep stage W"] * 50 + ["Sleep stage 1"] * 10 + ["Sleep stage W"] * 5 + \
        ["Sleep stage R"] + ["Sleep stage W"] * 30
    epochs = extract_epochs(_night(labels), _cfg(dataset_kind="sleepedf", wake_trim_epochs=0))
    assert [e.position for e in epochs] == list(range(50, 66))


def test_all_wake_night_kept_whole():
    epochs = extract_epochs(_night(["Sleep stage W"] * 300), _cfg(dataset_kind="sleepedf"))
    assert len(epochs) == 300


def test_no_trimming_outside_sleepedf():
    labels = ["W"] * 100 + ["N2"] * 10 + ["W"] * 100
    epochs = extract_epochs(_night(labels), _cfg(dataset_kind="mass"))
    assert len(epochs) == 210


def test_exclusion_and_merge():
    labels = ["Sleep stage 1", "Movement time", "Sleep stage 4", "Sleep stage ?", "Sleep stage 3"]
    epochs = extract_epochs(_night(labels), _cfg(dataset_kind="sleepedf"))
    assert [e.label for e in epochs] == [StageLabel.N1, StageLabel.N3, StageLabel.N3]
    assert [e.position for e in epochs] == [0, 2, 4]


def test_epoch_samples_are_raw_slices():
    epochs = extract_epochs(_night(["W", "N1", "N2"]), _cfg(dataset_kind="generic"))
    np.testing.assert_array_equal(epochs[1].samples, np.arange(30, 60, dtype=np.float32))


def test_overrun_names_epoch():
    rec = _night(["W", "N1", "N2"])
    rec.epoch_annotations.append((90, "N2"))
    with pytest.raises(AnnotationOverrun) as err:
        extract_epochs(rec, _cfg(dataset_kind="generic"))
    assert err.value.epoch_indices == [3]


def test_unscored_tail_past_signal_end_is_dropped_silently():
    rec = _night(["W", "N1", "N2"])
    rec.epoch_annotations.append((90, "Sleep stage ?"))
    assert len(extract_epochs(rec, _cfg(dataset_kind="generic"))) == 3


# --- make_sequences -------------------------------------------------------


def _epochs(n, subject="s"):
    return [LabeledEpoch(np.full(3, i, dtype=np.float32), StageLabel(i % 5), subject, i) for i in range(n)]


def _oracle_rows(n, L):
    return [[max(t - (L - 1) + i, 0) for i in range(L)] for t in range(n)]


def test_sequences_L1():
    seqs = make_sequences(_epochs(5), 1)
    assert len(seqs) == 5 and all(s.L == 1 for s in seqs)


def test_sequences_L4_padding():
    seqs = make_sequences(_epochs(5), 4)
    assert len(seqs) == 5
    assert [e.position for e in seqs[1].epochs] == [0, 0, 0, 1]
    assert [[e.position for e in s.epochs] for s in seqs] == _oracle_rows(5, 4)


def test_sequences_L10():
    seqs = make_sequences(_epochs(5), 10)
    assert len(seqs) == 5 and all(s.L == 10 for s in seqs)
    assert [[e.position for e in s.epochs] for s in seqs] == _oracle_rows(5, 10)


def test_sequences_empty_and_skip():
    assert make_sequences([], 4) == []
    seqs = make_sequences(_epochs(5), 4, pad="skip")
    assert [s.position for s in seqs] == [3, 4]


def test_sequence_index_restarts_each_night():
    positions = [0, 1, 2, 0, 1]
    idx = sequence_index(positions, 3)
    assert idx.tolist() == [[0, 0, 0], [0, 0, 1], [0, 1, 2], [3, 3, 3], [3, 3, 4]]


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 40), L=st.integers(1, 10), gaps=st.lists(st.integers(1, 3), min_size=40, max_size=40))
def test_sequence_properties(n, L, gaps):
    positions = np.cumsum(gaps[:n])
    epochs = [LabeledEpoch(np.zeros(2), StageLabel.W, "s", int(p)) for p in positions]
    seqs = make_sequences(epochs, L)
    assert len(seqs) == n
    for s in seqs:
        pos = [e.position for e in s.epochs]
        assert pos == sorted(pos)
        assert pos[-1] == max(pos)
        assert len({e.subject_id for e in s.epochs}) == 1


def test_make_sequences_rejects_mixed_subjects():
    with pytest.raises(ValueError):
        make_sequences(_epochs(2, "a") + _epochs(2, "b"), 2)


# --- adapters -------------------------------------------------------------


def test_read_sleepedf_recording(tmp_path):
    rng = np.random.default_rng(0)
    tokens = random_night(rng, 300)
    eeg = write_sleepedf_night(tmp_path, 1, 1, tokens, rng)
    cfg = DatasetConfig(dataset_kind="sleepedf")
    rec = read_recording(tmp_path / "SC4011E0-PSG.edf", cfg)
    assert rec.sample_rate == 100.0 and rec.native_rate == 100.0
    assert rec.channel_name == "EEG Fpz-Cz"
    assert rec.subject_id == "SC401"
    assert len(rec.signal) == len(eeg)
    assert len(rec.epoch_annotations) >= 300
    epochs = extract_epochs(rec, cfg)
    assert all(len(e.samples) == 3000 for e in epochs)


def test_missing_channel_raises(tmp_path):
    rng = np.random.default_rng(0)
    write_sleepedf_night(tmp_path, 1, 1, random_night(rng, 200), rng)
    with pytest.raises(MissingChannel):
        read_recording(tmp_path / "SC4011E0-PSG.edf", DatasetConfig(dataset_kind="sleepedf", channel="EEG C3"))


def test_empty_annotation_list(tmp_path):
    write_edf(tmp_path / "a.edf", {"EEG": np.zeros(3000)}, {"EEG": 100}, record_duration=30)
    (tmp_path / "a.csv").write_text("")
    rec = read_recording(tmp_path / "a.edf", DatasetConfig(dataset_kind="generic"))
    assert rec.epoch_annotations == []
    assert extract_epochs(rec, DatasetConfig(dataset_kind="generic")) == []


def test_mass_adapter_resamples_and_rejects_20s_pages(tmp_path):
    rng = np.random.default_rng(1)
    tokens = ["Sleep stage W", "Sleep stage 2", "Sleep stage 3", "Sleep stage R", "Sleep stage ?"]
    write_mass_night(tmp_path, 1, tokens, rng)
    cfg = DatasetConfig(dataset_kind="mass")
    rec = read_recording(tmp_path / "01-03-0001 PSG.edf", cfg)
    assert rec.native_rate == 256 and rec.sample_rate == 100
    assert len(rec.signal) == 5 * 3000
    assert rec.epoch_annotations[0] == (250, "Sleep stage W")
    epochs = extract_epochs(rec, cfg)
    assert [int(e.label) for e in epochs] == [0, 2, 3, 4]

    other = tmp_path / "twenty"
    other.mkdir()
    write_mass_night(other, 2, tokens, rng, epoch_s=20)
    with pytest.raises(AnnotationGranularity):
        read_recording(other / "01-03-0002 PSG.edf", cfg)


def test_resampling_preserves_a_sinusoid(tmp_path):
    t = np.arange(200 * 60) / 200
    write_edf(tmp_path / "s.edf", {"EEG": 50 * np.sin(2 * np.pi * 5 * t)}, {"EEG": 200},
              record_duration=30, physical_range={"EEG": (-100, 100)})
    (tmp_path / "s.csv").write_text("W\nN2\n")
    rec = read_recording(tmp_path / "s.edf", DatasetConfig(dataset_kind="generic"))
    ref = 50 * np.sin(2 * np.pi * 5 * np.arange(6000) / 100)
    assert len(rec.signal) == 6000
    np.testing.assert_allclose(rec.signal[200:-200], ref[200:-200], atol=0.5)


def test_shhs_adapter(tmp_path):
    rng = np.random.default_rng(2)
    codes = [0, 0, 1, 2, 3, 4, 5, 9, 2]
    write_shhs_night(tmp_path, "200001", codes, rng)
    files = find_recordings(tmp_path, DatasetKind.SHHS)
    assert [f.name for f in files] == ["shhs1-200001.edf"]
    cfg = DatasetConfig(dataset_kind="shhs")
    rec = read_recording(files[0], cfg)
    assert rec.native_rate == 125
    epochs = extract_epochs(rec, cfg)
    assert [int(e.label) for e in epochs] == [0, 0, 1, 2, 3, 3, 4, 2]


def test_ingestion_matches_annotation_scan_oracle(tmp_path):
    rng = np.random.default_rng(4)
    expected = np.zeros(5, dtype=int)
    for subject in range(3):
        for night in (1, 2):
            tokens = random_night(rng, int(rng.integers(300, 420)))
            write_sleepedf_night(tmp_path, subject, night, tokens, rng)
            expected += annotation_scan_counts(tokens, 60, TOKEN_CLASS)
    arrays, skipped = ingest_directory(tmp_path, DatasetConfig(dataset_kind="sleepedf"))
    assert skipped == []
    assert len(arrays) == 6
    assert {a.subject_id for a in arrays} == {"SC400", "SC401", "SC402"}
    got = sum(a.class_counts() for a in arrays)
    np.testing.assert_array_equal(got, expected)


def test_skip_bad(tmp_path):
    rng = np.random.default_rng(5)
    for s in range(2):
        write_sleepedf_night(tmp_path, s, 1, random_night(rng, 250), rng)
    bad = tmp_path / "SC4001E0-PSG.edf"
    bad.write_bytes(bad.read_bytes()[:-5000])
    with pytest.raises(Exception):
        ingest_directory(tmp_path, DatasetConfig(dataset_kind="sleepedf"))
    arrays, skipped = ingest_directory(tmp_path, DatasetConfig(dataset_kind="sleepedf"), skip_bad=True)
    assert len(arrays) == 1 and len(skipped) == 1


def test_empty_directory(tmp_path):
    with pytest.raises(IngestError, match="no recordings found"):
        ingest_directory(tmp_path, DatasetConfig(dataset_kind="sleepedf"))


def test_config_bounds():
    with pytest.raises(ValueError):
        DatasetConfig(sequence_length=0)
    with pytest.raises(ValueError):
        DatasetConfig(sequence_length=11)
    with pytest.raises(ValueError):
        DatasetConfig(wake_trim_epochs=-1)


def test_epoch_array_round_trip():
    epochs = _epochs(6)
    arr = EpochArray.from_epochs(epochs, sample_rate=0.1)
    back = arr.to_epochs()
    assert [e.position for e in back] == list(range(6))
    assert [e.label for e in back] == [e.label for e in epochs]
