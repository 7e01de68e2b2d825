import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from synthattr.audio import AudioClip
from synthattr.pipeline import generate_fixture_corpus, scaled_durations, stratified_split, write_manifest

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def speechy_clip():
    """One second of a two-tone signal with a slow envelope."""
    t = np.arange(16000) / 16000
    x = 0.4 * np.sin(2 * np.pi * 220 * t) * (0.6 + 0.4 * np.sin(2 * np.pi * 3 * t)) + 0.1 * np.sin(2 * np.pi * 1800 * t)
    return AudioClip(x, 16000, 0, "tone")


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """6 classes x 8 short clips, split 50/25/25, written to disk once."""
    root = tmp_path_factory.mktemp("corpus")
    manifest = generate_fixture_corpus(per_class=8, seed=3, out_dir=root, durations=scaled_durations(0.15))
    manifest = stratified_split(manifest, (0.5, 0.25, 0.25), seed=0)
    write_manifest(manifest, root / "manifest.csv")
    return manifest


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Record one PASS/FAIL line per acceptance criterion; the lines are
    echoed into the terminal summary as well."""

    def report(number, title, ok, detail=""):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
        print("\n" + line)
        ACCEPTANCE_LINES.append((number, line))
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
