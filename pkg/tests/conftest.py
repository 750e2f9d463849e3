import numpy as np
import pytest

from datetime import date

from firerisk.synth import Corruption, Signal, SynthConfig, synth_generate

RECOVERY_WEIGHTS = {"floor_size": 1.6, "number_of_units": 1.2}


def make_corpus(seed, n=300, corruption=Corruption(), weights=None, n_fires=None):
    cfg = SynthConfig(
        seed=seed,
        n_properties=n,
        n_fires=n_fires if n_fires is not None else int(round(0.06 * n)),
        window_start=date(2011, 1, 1),
        window_end=date(2015, 1, 1),
        corruption=corruption,
        signal=Signal(weights=dict(weights or {})),
    )
    return synth_generate(cfg)


@pytest.fixture(scope="session")
def small_corpus():
    return make_corpus(seed=42, n=300)


@pytest.fixture(scope="session")
def corrupted_corpus():
    return make_corpus(
        seed=7, n=300,
        corruption=Corruption(typo_rate=0.1, abbrev_rate=0.3, jitter_meters=25.0))
