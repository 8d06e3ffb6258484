import numpy as np
import pytest
import torch

from uci_detect.clips import SyntheticConfig, generate_synthetic_dataset, load_manifest


@pytest.fixture(autouse=True)
def _seed():
    torch.manual_seed(0)
    np.random.seed(0)


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """3 domains x 2 labels x 6 videos of 12 frames at 64x64."""
    root = tmp_path_factory.mktemp("tiny_corpus")
    cfg = SyntheticConfig(num_domains=3, videos_per_domain_per_label=6, frames_per_video=12, seed=7)
    manifest = generate_synthetic_dataset(cfg, root)
    return manifest, load_manifest(manifest)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion; echoed in the terminal summary."""
    def record(number, name, passed, detail, seconds):
        line = f"criterion {number} {'PASS' if passed else 'FAIL'}  {name}: {detail} ({seconds:.1f}s)"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
