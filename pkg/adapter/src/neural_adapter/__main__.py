"""Module entry point so `python -m neural_adapter` works everywhere."""

import sys

from .cli import main

sys.exit(main())
