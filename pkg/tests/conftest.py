import numpy as np
import pytest

from gamc.siggen import synthesize_frame
from gamc.sparse import SparsePyramid


@pytest.fixture(scope="session")
def training_frames():
    """A small mixed-class frame corpus for dictionary training."""
    schemes = ["QAM16", "PSK8", "BPSK", "FM", "OOK"]
    rows = [
        synthesize_frame(s, snr, 123, i).samples
        for s in schemes
        for snr in (10.0, 20.0)
        for i in range(10)
    ]
    return np.stack(rows)


@pytest.fixture(scope="session")
def pyramid(training_frames):
    return SparsePyramid(iterations=6, seed=0).fit(training_frames)


@pytest.fixture(scope="session")
def dictionaries(pyramid):
    return pyramid.dictionaries_
