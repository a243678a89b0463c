from __future__ import annotations

from pathlib import Path

import pytest
import torch
from click.testing import CliRunner

from cbreason.cli import main as cli_main
from cbreason.corpus import load_bank, load_manifest

GOLDEN_DIR = Path(__file__).parent / "goldens"

torch.set_num_threads(2)


@pytest.fixture(scope="session")
def cli_runner() -> CliRunner:
    return CliRunner()


@pytest.fixture(scope="session")
def accept_workdir(tmp_path_factory, cli_runner) -> Path:
    """Session workdir holding the acceptance-scale synthetic corpus (n=400, 6 concepts, seed 0)."""
    workdir = tmp_path_factory.mktemp("accept")
    result = cli_runner.invoke(
        cli_main, ["synth", "--workdir", str(workdir), "--n", "400", "--concepts", "6", "--seed", "0"]
    )
    assert result.exit_code == 0, result.output
    return workdir


@pytest.fixture(scope="session")
def accept_corpus(accept_workdir):
    bank = load_bank(accept_workdir / "corpus" / "bank.csv")
    manifest = load_manifest(accept_workdir / "corpus" / "manifest.csv", bank)
    return bank, manifest


@pytest.fixture(scope="session")
def ultrasound_bank():
    from cbreason.guidelines import packaged_bank_path

    return load_bank(packaged_bank_path("breast_ultrasound"))


def golden_text(name: str) -> str:
    return (GOLDEN_DIR / name).read_text(encoding="utf-8")
