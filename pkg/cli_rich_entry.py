"""Entry point for a single-file build of the Rich CLI.

Usage (development)::

    python cli_rich_entry.py pipeline --resume runs/run-001

Usage (build)::

    pyinstaller --onefile --name dyson-ring-rich --console cli_rich_entry.py
"""
from dyson_ring.cli_rich import main

if __name__ == "__main__":
    main()
