import numpy as np
import pytest
from PIL import Image


@pytest.fixture(scope="session")
def toy_dataset(tmp_path_factory):
    """2 classes x 2 images of deterministic noise."""
    root = tmp_path_factory.mktemp("toyimages") / "toyset"
    rng = np.random.default_rng(0)
    for cls in ("cats", "dogs"):
        cdir = root / cls
        cdir.mkdir(parents=True)
        for i in range(2):
            arr = rng.integers(0, 256, size=(48, 48, 3), dtype=np.uint8)
            Image.fromarray(arr).save(cdir / f"img_{i}.png")
    return root
