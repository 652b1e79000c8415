"""Entry point for python -m deep_value_nets."""

import sys

from deep_value_nets.app import main

if __name__ == "__main__":
    sys.exit(main())
