import sys
from pathlib import Path

# The conformance tests drive the primary engine through its public API.
# When it is not installed, fall back to the sibling source tree.
try:
    import xdnr  # noqa: F401
except ImportError:
    sys.path.insert(0, str(Path(__file__).resolve().parents[2] / "src"))
