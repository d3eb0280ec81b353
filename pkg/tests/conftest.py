import numpy as np
import pytest

from pgnoise.imageio import ImageBuffer

# BSD300 images are 481x321
BSD_SHAPE = (321, 481)
PHOTOS = ("astronaut", "coffee", "rocket")

_acceptance_lines = []


def write_ppm(path, rgb):
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    path.write_bytes(f"P6\n{w} {h}\n255\n".encode() + rgb.tobytes())


def write_pgm(path, gray, maxval=255):
    gray = np.asarray(gray)
    h, w = gray.shape
    dtype = ">u2" if maxval > 255 else "u1"
    path.write_bytes(f"P5\n{w} {h}\n{maxval}\n".encode() + gray.astype(dtype).tobytes())


@pytest.fixture(scope="session")
def photo_dir(tmp_path_factory):
    """Three natural colour photographs cropped to the BSD300 size."""
    skdata = pytest.importorskip("skimage.data")
    out = tmp_path_factory.mktemp("photos")
    h, w = BSD_SHAPE
    for name in PHOTOS:
        write_ppm(out / f"{name}.ppm", getattr(skdata, name)()[:h, :w, :3])
    return out


@pytest.fixture(scope="session")
def photo_paths(photo_dir):
    return sorted(str(p) for p in photo_dir.glob("*.ppm"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def gradient_image():
    """Small 8-bit quantised test image covering the full intensity range."""
    yy, xx = np.mgrid[0:48, 0:64]
    v = (xx / 63.0) * 0.8 + 0.2 * np.sin(yy / 5.0) ** 2
    return ImageBuffer(np.rint(np.clip(v, 0, 1) * 255) / 255)


def record_acceptance(line):
    _acceptance_lines.append(line)


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
