"""Module entry point: python -m projcluster."""

import sys

from projcluster.cli import main

if __name__ == "__main__":
    sys.exit(main())
