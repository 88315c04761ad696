"""Non-neural machinery for few-shot naturalized semantic parsing."""
from pathlib import Path

__version__ = "0.1.0"

DATA_DIR = Path(__file__).parent / "data"
