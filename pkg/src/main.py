"""
Main grid-dispatch entry point

Runs the command group: python src/main.py --config config/config.yaml train
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from grid_dispatch.cli.commands import main  # noqa: E402

if __name__ == "__main__":
    main()
