"""Entry point for a single-file build of the plain CLI.

Usage (development)::

    python cli_entry.py pipeline --workers 8

Usage (build)::

    pyinstaller --onefile --name dyson-ring --console cli_entry.py
"""
from dyson_ring.cli import main

if __name__ == "__main__":
    main()
