"""Policy-gradient learning over large discrete action sets via learned action embeddings."""

import hashlib
from pathlib import Path

__version__ = "0.1.0"


def version_string():
    """Release plus a short digest of the package sources, git-describe style."""
    h = hashlib.sha1()
    for p in sorted(Path(__file__).parent.rglob("*.py")):
        h.update(p.read_bytes())
    return f"{__version__}-g{h.hexdigest()[:10]}"
