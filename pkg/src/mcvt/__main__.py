"""Module entry point so `python3 -m mcvt` matches the `mcvt` script."""

import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())
