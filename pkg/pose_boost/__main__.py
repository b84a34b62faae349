# pose_boost/__main__.py
# Allows the package to be run as a script using `python -m pose_boost`

from __future__ import annotations

import sys

from pose_boost.cli import main

if __name__ == "__main__":
    sys.exit(main())
