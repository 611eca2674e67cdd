import os
from pathlib import Path

import pytest

# Booking references depend on the hash key; pin it for the whole suite.
os.environ["REMAKE_HASH_KEY"] = "remake-default-key"

REPO_ROOT = Path(__file__).resolve().parent.parent
DB_DIR = REPO_ROOT / "data" / "db"
GOLDEN_DIR = REPO_ROOT / "golden"
DIALOGUES_PATH = REPO_ROOT / "data" / "dialogues" / "fixture_dialogues.json"
GOALS_PATH = REPO_ROOT / "data" / "goals" / "fixture_goals.json"
EVAL_CORPUS_PATH = REPO_ROOT / "data" / "eval" / "fixture_eval.jsonl"

# Optional real-data drops; tests that need them skip when absent.
REAL_DB_DIR = Path(os.environ.get("MULTIWOZ_DB_DIR", REPO_ROOT / "data" / "multiwoz" / "db"))
REAL_DATA_DIR = Path(os.environ.get("MULTIWOZ_DATA_DIR", REPO_ROOT / "data" / "multiwoz" / "data"))


@pytest.fixture(scope="session")
def kb():
    from remake.kb import load_database

    return load_database(DB_DIR)


@pytest.fixture(scope="session")
def golden_markdown():
    return (GOLDEN_DIR / "restaurant_indian_expensive.md").read_text(encoding="utf-8")
