"""
Logging system for the space-time Ising engine.
Provides structured logging with rotation and a separate results history.
"""

import logging
import logging.handlers
import json
from pathlib import Path
from datetime import datetime
from typing import Dict, Any, Optional
import sys

# Default paths
DEFAULT_LOG_PATH = Path(__file__).parent / "logs"

# Log formatters
DETAILED_FORMATTER = logging.Formatter(
    '%(asctime)s - %(name)s - %(levelname)s - [%(filename)s:%(lineno)d] - %(message)s',
    datefmt='%Y-%m-%d %H:%M:%S'
)

SIMPLE_FORMATTER = logging.Formatter(
    '%(asctime)s - %(levelname)s - %(message)s',
    datefmt='%Y-%m-%d %H:%M:%S'
)

RESULT_FORMATTER = logging.Formatter(
    '%(asctime)s | %(message)s',
    datefmt='%Y-%m-%d %H:%M:%S'
)


class ResultFilter(logging.Filter):
    """Only pass records flagged as result-history entries."""

    def filter(self, record):
        return getattr(record, 'is_result_log', False)


class SimulationLogger:
    """Logger for estimation runs with a separate results history."""

    def __init__(self, name: str = "st_ising"):
        self.name = name
        self.logger = logging.getLogger(name)
        self.logger.setLevel(logging.WARNING)
        self.log_dir: Optional[Path] = None
        self._handlers = []

        if self.logger.handlers:
            self.logger.handlers.clear()

    def setup(self, config: Optional[Dict[str, Any]] = None,
              log_dir: Optional[Path] = None,
              log_level: str = "INFO"):
        """
        Setup logging with configuration.

        Args:
            config: Configuration dict with a 'logging' section
            log_dir: Directory for log files (default: ./logs)
            log_level: Logging level (DEBUG, INFO, WARNING, ERROR)
        """
        if config and 'logging' in config:
            log_config = config['logging']
            log_level = log_config.get('level', log_level)
            if log_dir is None and log_config.get('log_dir'):
                log_dir = Path(log_config['log_dir'])

        self.log_dir = Path(log_dir) if log_dir else DEFAULT_LOG_PATH
        self.log_dir.mkdir(parents=True, exist_ok=True)

        level = getattr(logging, str(log_level).upper(), logging.INFO)
        self.logger.setLevel(level)

        for handler in self._handlers:
            handler.close()
        self._handlers = []
        self.logger.handlers.clear()

        self._setup_file_handler(level)
        self._setup_console_handler(level)
        self._setup_results_handler()
        self._setup_error_handler()

        self.logger.info(f"Logging initialized - Level: {log_level}, Dir: {self.log_dir}")

    def _rotating(self, filename: str, backup_count: int) -> logging.Handler:
        handler = logging.handlers.TimedRotatingFileHandler(
            self.log_dir / filename,
            when='midnight',
            interval=1,
            backupCount=backup_count,
            encoding='utf-8'
        )
        handler.suffix = "%Y-%m-%d"
        return handler

    def _setup_file_handler(self, level: int):
        """Main application log with daily rotation."""
        handler = self._rotating("st_ising.log", 30)
        handler.setLevel(level)
        handler.setFormatter(DETAILED_FORMATTER)
        self.logger.addHandler(handler)
        self._handlers.append(handler)

    def _setup_console_handler(self, level: int):
        """Console output goes to stderr so stdout stays clean for reports."""
        handler = logging.StreamHandler(sys.stderr)
        handler.setLevel(max(level, logging.WARNING))
        handler.setFormatter(SIMPLE_FORMATTER)
        self.logger.addHandler(handler)
        self._handlers.append(handler)

    def _setup_results_handler(self):
        """Separate history of every estimate and verification verdict."""
        handler = self._rotating("results.log", 90)
        handler.setLevel(logging.INFO)
        handler.setFormatter(RESULT_FORMATTER)
        handler.addFilter(ResultFilter())
        self.logger.addHandler(handler)
        self._handlers.append(handler)

    def _setup_error_handler(self):
        """Separate error log for failed assertions and crashes."""
        handler = self._rotating("errors.log", 30)
        handler.setLevel(logging.ERROR)
        handler.setFormatter(DETAILED_FORMATTER)
        self.logger.addHandler(handler)
        self._handlers.append(handler)

    # Logging methods
    def debug(self, msg: str, *args, **kwargs):
        self.logger.debug(msg, *args, **kwargs)

    def info(self, msg: str, *args, **kwargs):
        self.logger.info(msg, *args, **kwargs)

    def warning(self, msg: str, *args, **kwargs):
        self.logger.warning(msg, *args, **kwargs)

    def error(self, msg: str, *args, **kwargs):
        self.logger.error(msg, *args, **kwargs)

    def exception(self, msg: str, *args, **kwargs):
        self.logger.exception(msg, *args, **kwargs)

    def _emit_result(self, payload: Dict[str, Any]):
        record = self.logger.makeRecord(
            self.name, logging.INFO, "", 0,
            json.dumps(payload, default=str), (), None
        )
        record.is_result_log = True
        self.logger.handle(record)

    # Result-specific logging
    def log_estimate(self, name: str, estimate, params: Optional[Dict[str, Any]] = None):
        """
        Log a finished Monte Carlo estimate.

        Args:
            name: Observable name (e.g. "magnetization")
            estimate: Estimate with value, std_error, n_samples
            params: Parameter point the estimate belongs to
        """
        self._emit_result({
            'timestamp': datetime.now().isoformat(),
            'type': 'estimate',
            'observable': name,
            'value': estimate.value,
            'std_error': estimate.std_error,
            'n_samples': estimate.n_samples,
            'params': params or {},
        })
        self.info(f"Estimate {name}: {estimate.value:.6g} +/- {estimate.std_error:.2g} "
                  f"(n={estimate.n_samples})")

    def log_verification(self, name: str, passed: bool, details: Optional[Dict[str, Any]] = None):
        """
        Log a verification verdict.

        Args:
            name: Check name (e.g. "switching", "pdi")
            passed: Whether the assertion held
            details: Report fields (z-score, slack, ...)
        """
        self._emit_result({
            'timestamp': datetime.now().isoformat(),
            'type': 'verification',
            'check': name,
            'passed': passed,
            'details': details or {},
        })
        if passed:
            self.info(f"Verification {name}: PASS")
        else:
            self.error(f"Verification {name}: FAIL - {details}")

    def log_scan_point(self, size: int, rho: float, record: Dict[str, Any]):
        """Log one (size, rho) point of a critical scan."""
        self._emit_result({
            'timestamp': datetime.now().isoformat(),
            'type': 'scan_point',
            'size': size,
            'rho': rho,
            **record,
        })
        self.debug(f"Scan point n={size} rho={rho:.3f}: binder={record.get('binder')}")

    def log_checkpoint(self, path: Path, sweep: int):
        self.debug(f"Checkpoint written to {path} at sweep {sweep}")

    def log_config_load(self, config_path: Path, success: bool, error: str = None):
        """Log configuration load."""
        if success:
            self.debug(f"Configuration loaded from {config_path}")
        else:
            self.error(f"Configuration load failed: {error}")

    def get_logger(self) -> logging.Logger:
        """Get the underlying logger instance."""
        return self.logger


# Global logger instance
_logger: Optional[SimulationLogger] = None


def get_logger(config: Optional[Dict[str, Any]] = None,
               log_dir: Optional[Path] = None) -> SimulationLogger:
    """
    Get or create the global logger instance.

    Args:
        config: Configuration dict
        log_dir: Directory for log files

    Returns:
        SimulationLogger instance
    """
    global _logger

    if _logger is None:
        _logger = SimulationLogger()
    if config:
        _logger.setup(config, log_dir)

    return _logger


def reset_logger():
    """Reset the global logger (useful for testing)."""
    global _logger
    if _logger is not None:
        for handler in _logger._handlers:
            handler.close()
        _logger.logger.handlers.clear()
    _logger = None


# Convenience functions for module-level imports
def debug(msg: str, *args, **kwargs):
    if _logger:
        _logger.debug(msg, *args, **kwargs)


def info(msg: str, *args, **kwargs):
    if _logger:
        _logger.info(msg, *args, **kwargs)


def warning(msg: str, *args, **kwargs):
    if _logger:
        _logger.warning(msg, *args, **kwargs)


def error(msg: str, *args, **kwargs):
    if _logger:
        _logger.error(msg, *args, **kwargs)
