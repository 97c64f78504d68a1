import shutil
from pathlib import Path

import numpy as np
import pytest

from dfdetect.catalog import Catalog, Label, VideoRecord
from dfdetect.faceset import FaceSet
from dfdetect.facepipe.crop import standardize
from dfdetect.fixture import make_fixture

REPO = Path(__file__).resolve().parents[1]
BUNDLED_FIXTURE = REPO / "fixtures" / "synthetic"


def make_catalog(n_real, n_fake, prefix=""):
    recs = [VideoRecord(f"{prefix}r{i:05d}", Label.REAL, Path(f"real/{i}.mp4")) for i in range(n_real)]
    recs += [VideoRecord(f"{prefix}f{i:05d}", Label.FAKE, Path(f"fake/{i}.mp4")) for i in range(n_fake)]
    return Catalog(tuple(recs))


def write_manifest(path, rows, header="video_id,label,path"):
    lines = [header] + [",".join(r) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return Path(path)


def separable_pixels(n, seed, offset=100, noise=10):
    """uint8 faces: FAKE shifted up by ``offset`` on every channel, REAL down."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    px = rng.normal(128, noise, (n, 224, 224, 3))
    px += np.where(labels == 1, offset, -offset)[:, None, None, None]
    return np.clip(np.rint(px), 0, 255).astype(np.uint8), labels


def separable_set(n, seed, video_prefix):
    pixels, labels = separable_pixels(n, seed)
    images = np.stack([standardize(p) for p in pixels])
    return FaceSet.from_arrays(images, labels, [f"{video_prefix}{i // 4}" for i in range(n)])


@pytest.fixture
def fixture_dir(tmp_path):
    """Fresh copy of the bundled synthetic corpus."""
    dst = tmp_path / "fixture"
    if BUNDLED_FIXTURE.is_dir():
        shutil.copytree(BUNDLED_FIXTURE, dst)
    else:
        make_fixture(dst)
    return dst


# Acceptance lines are gathered here and repeated in the terminal summary so
# they show up in plain `pytest -v` output, not only under `-s`.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
