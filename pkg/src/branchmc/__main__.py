"""Entry point for running as a module: python -m branchmc."""

import sys

from branchmc.cli import main

if __name__ == "__main__":
    sys.exit(main())
