import sys
from pathlib import Path

# make tests/synth.py and friends importable as top-level modules
sys.path.insert(0, str(Path(__file__).parent))
