"""Allow `python -m simharvest`."""

from .cli import run

run()
