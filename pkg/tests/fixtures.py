"""Writers for small on-disk datasets in each supported layout."""

import numpy as np

from iitnet.edf import write_edf

RK_TOKENS = {
    0: "Sleep stage W", 1: "Sleep stage 1", 2: "Sleep stage 2", 3: "Sleep stage 3",
    4: "Sleep stage 4", 5: "Sleep stage R", 6: "Movement time", 7: "Sleep stage ?",
}
TOKEN_CLASS = {
    "Sleep stage W": 0, "Sleep stage 1": 1, "Sleep stage 2": 2, "Sleep stage 3": 3,
    "Sleep stage 4": 3, "Sleep stage R": 4, "Movement time": None, "Sleep stage ?": None,
}


def random_night(rng, n_epochs, wake_head=80, wake_tail=90):
    """Token list: long wake at both ends, a mixed middle with N4, movement and unscored epochs."""
    middle = rng.choice([1, 2, 2, 3, 4, 5, 5, 0, 6, 7], size=n_epochs - wake_head - wake_tail)
    middle[0] = 2
    middle[-1] = 5
    codes = [0] * wake_head + list(middle) + [0] * wake_tail
    return [RK_TOKENS[c] for c in codes]


def runs(tokens):
    """Collapse consecutive identical tokens into (onset_s, duration_s, token)."""
    out = []
    start = 0
    for i in range(1, len(tokens) + 1):
        if i == len(tokens) or tokens[i] != tokens[start]:
            out.append((start * 30, (i - start) * 30, tokens[start]))
            start = i
    return out


def write_sleepedf_night(folder, subject, night, tokens, rng, rate=100, tail_unscored=True):
    """SC4ssN?-PSG.edf + SC4ssN?-Hypnogram.edf. The hypnogram may run past the signal with '?'."""
    n = len(tokens)
    eeg = rng.normal(0, 30, n * 30 * rate)
    stem = f"SC4{subject:02d}{night}"
    write_edf(folder / f"{stem}E0-PSG.edf",
              {"EEG Fpz-Cz": eeg, "EEG Pz-Oz": eeg * 0.5},
              {"EEG Fpz-Cz": rate, "EEG Pz-Oz": rate}, record_duration=30,
              physical_range={"EEG Fpz-Cz": (-300, 300), "EEG Pz-Oz": (-300, 300)})
    ann = runs(tokens)
    if tail_unscored:
        ann.append((n * 30, 600, "Sleep stage ?"))
    write_edf(folder / f"{stem}EC-Hypnogram.edf", {}, {}, annotations=ann)
    return eeg


def write_mass_night(folder, subject_code, tokens, rng, rate=256, epoch_s=30):
    n = len(tokens)
    eeg = rng.normal(0, 30, n * 30 * rate)
    stem = f"01-03-{subject_code:04d}"
    write_edf(folder / f"{stem} PSG.edf", {"EEG F4-LER": eeg}, {"EEG F4-LER": rate},
              record_duration=1, physical_range={"EEG F4-LER": (-300, 300)})
    ann = [(i * 30 + 2.5, epoch_s, t) for i, t in enumerate(tokens)]
    write_edf(folder / f"{stem} Base.edf", {}, {}, annotations=ann)


def write_shhs_night(folder, nsrrid, codes, rng, rate=125):
    n = len(codes)
    eeg = rng.normal(0, 30, n * 30 * rate)
    edf_dir = folder / "edfs"
    xml_dir = folder / "annotations"
    edf_dir.mkdir(exist_ok=True)
    xml_dir.mkdir(exist_ok=True)
    write_edf(edf_dir / f"shhs1-{nsrrid}.edf", {"EEG": eeg}, {"EEG": rate}, record_duration=1,
              physical_range={"EEG": (-300, 300)})
    stages = "".join(f"<SleepStage>{c}</SleepStage>" for c in codes)
    (xml_dir / f"shhs1-{nsrrid}-profusion.xml").write_text(
        "<?xml version='1.0'?><CMPStudyConfig><EpochLength>30</EpochLength>"
        f"<SleepStages>{stages}</SleepStages></CMPStudyConfig>"
    )
    return eeg
