# CLI Package
from .terminal import TerminalInterface, run_cli
