import subprocess
from pathlib import Path

import pytest


def pytest_addoption(parser):
    parser.addoption("--oneshot", default="build/tools/oneshot", help="path to the oneshot binary")


@pytest.fixture(scope="session")
def cli(request):
    exe = str(Path(request.config.getoption("--oneshot")).resolve())

    def run(*args, cwd=None):
        return subprocess.run([exe, *map(str, args)], capture_output=True, text=True, cwd=cwd, timeout=600)

    return run


@pytest.fixture(scope="session")
def fixture_dir(cli, tmp_path_factory):
    d = tmp_path_factory.mktemp("fixture")
    r = cli("synth", "--out", d / "corpus", "--queries", 2, "--targets-per-query", 1, "--object-side", 48,
            "--target-side", 176, "--weights-out", d / "w.oswb")
    assert r.returncode == 0, r.stderr
    return d
