from src.afrf.core.logging import init_logger, default_logger

# Default console logger; the CLI re-initialises it with the subcommand as run id
init_logger(None)

__all__ = ["init_logger", "default_logger"]
