import sys
from pathlib import Path

# Make sibling test helpers (oracles, fixtures) importable regardless of how
# pytest sets rootdir.
sys.path.insert(0, str(Path(__file__).parent))
