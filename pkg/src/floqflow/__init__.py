"""Flow renormalization of periodically driven quantum systems."""

import subprocess

__version__ = "0.1.0"


def git_revision() -> str:
    """Short hash of the working tree, or 'unknown' outside a checkout."""
    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            capture_output=True,
            text=True,
            timeout=5,
        )
    except (OSError, subprocess.TimeoutExpired):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 else "unknown"
