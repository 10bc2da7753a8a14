import numpy as np
import pytest
import torch


@pytest.fixture(autouse=True)
def _seed_torch():
    torch.manual_seed(0)
    np.random.seed(0)


@pytest.fixture(scope="session")
def small_manifest():
    from lesionfusion.data import generate_synthetic, split_by_patient

    m = generate_synthetic(6, 64, seed=5)
    return split_by_patient(m, (0.6, 0.2, 0.2), seed=5)
