"""
Configuration validation for space-time Ising runs.
Validates configuration on startup with helpful error messages and suggestions.
"""

from dataclasses import dataclass, field
from typing import Dict, Any, List, Optional, Tuple, Union
from pathlib import Path

from logger import get_logger

# Largest lattice the partition-function and backbone checks accept
SMALL_CHECK_MAX_VERTICES = 3


@dataclass
class ValidationError:
    """Represents a single validation error."""
    field: str
    message: str
    severity: str = "error"  # error, warning, info
    suggestion: Optional[str] = None
    current_value: Any = None
    expected_type: Optional[str] = None


@dataclass
class ValidationResult:
    """Result of configuration validation."""
    is_valid: bool
    errors: List[ValidationError] = field(default_factory=list)
    warnings: List[ValidationError] = field(default_factory=list)

    @property
    def has_errors(self) -> bool:
        return len(self.errors) > 0

    @property
    def has_warnings(self) -> bool:
        return len(self.warnings) > 0

    def get_all_issues(self) -> List[ValidationError]:
        return self.errors + self.warnings


class ConfigValidator:
    """Validates run configuration."""

    # Valid ranges for numeric values
    VALID_RANGES = {
        'dimension': (1, 2),
        'half_width': (0, 64),
        'beta': (1e-3, 1e3),
        'lambda': (0.0, 100.0),
        'delta': (0.0, 100.0),
        'gamma': (0.0, 100.0),
        'n_samples': (2, 10**9),
        'sweeps': (1, 10**8),
        'burn_in': (0, 10**8),
        'workers': (1, 256),
        'batch_size': (1, 10**7),
        'quadrature_h_fraction': (1e-4, 0.5),
        'sigma_buffer': (1.0, 10.0),
        'fd_step': (1e-8, 0.1),
        'fd_rel_tol': (1e-4, 1.0),
        'aspect': (0.1, 10.0),
        'rho': (0.0, 100.0),
        'bootstrap': (10, 10**5),
    }

    # Required sections
    REQUIRED_SECTIONS = ['lattice', 'time', 'params']

    # Optional sections with defaults
    OPTIONAL_SECTIONS = {
        'sampling': {'n_samples': 20000, 'sweeps': 2000, 'burn_in': 200, 'seed': 12345,
                     'workers': 1, 'batch_size': 500},
        'checks': {'quadrature_h_fraction': 1 / 64, 'sigma_buffer': 3.0},
        'scan': {},
        'decay': {},
        'output': {'dir': 'results', 'prefix': 'st_ising'},
        'logging': {'enabled': True, 'level': 'INFO', 'log_dir': 'logs'},
    }

    BOUNDARIES = ('periodic', 'free')
    TOPOLOGIES = ('circle', 'interval')

    def __init__(self):
        self.logger = get_logger()
        self.errors: List[ValidationError] = []
        self.warnings: List[ValidationError] = []

    def validate(self, config: Dict[str, Any], config_path: Optional[Path] = None) -> ValidationResult:
        """
        Validate entire configuration.

        Args:
            config: Configuration dictionary
            config_path: Path to config file (for context)

        Returns:
            ValidationResult with errors and warnings
        """
        self.errors = []
        self.warnings = []

        self.logger.debug("Starting configuration validation")

        self._validate_required_sections(config)

        if 'lattice' in config:
            self._validate_lattice(config['lattice'])
        if 'time' in config:
            self._validate_time(config['time'])
        if 'params' in config:
            self._validate_params(config['params'])
        if 'sampling' in config:
            self._validate_sampling(config['sampling'])
        if 'checks' in config:
            self._validate_checks(config['checks'])
        if 'scan' in config:
            self._validate_scan(config['scan'])
        if 'decay' in config:
            self._validate_decay(config['decay'])
        if 'output' in config:
            self._validate_output(config['output'])
        if 'logging' in config:
            self._validate_logging(config['logging'])

        self._validate_unknown_sections(config)
        self._validate_cross_fields(config)

        is_valid = len(self.errors) == 0

        if is_valid:
            self.logger.info("Configuration validation passed")
        else:
            self.logger.error(f"Configuration validation failed with {len(self.errors)} errors")

        return ValidationResult(
            is_valid=is_valid,
            errors=self.errors,
            warnings=self.warnings
        )

    def _validate_required_sections(self, config: Dict[str, Any]):
        """Check that all required sections are present."""
        for section in self.REQUIRED_SECTIONS:
            if section not in config:
                self.errors.append(ValidationError(
                    field=f"config.{section}",
                    message=f"Required section '{section}' is missing",
                    severity="error",
                    suggestion=f"Add the '{section}' section to your config.yaml"
                ))

    def _validate_choice(self, field: str, value: Any, choices: Tuple[str, ...]):
        if value not in choices:
            self.errors.append(ValidationError(
                field=field,
                message=f"Invalid value: {value}",
                severity="error",
                current_value=value,
                suggestion=f"Use one of: {', '.join(choices)}"
            ))

    def _validate_lattice(self, lattice: Dict[str, Any]):
        """Validate lattice section."""
        for key in ('dimension', 'half_width'):
            if key in lattice:
                self._validate_numeric(f'lattice.{key}', lattice[key], self.VALID_RANGES[key], int,
                                       f"Lattice {key.replace('_', ' ')}")
            else:
                self.errors.append(ValidationError(
                    field=f"lattice.{key}",
                    message=f"{key} is required",
                    severity="error",
                    suggestion="Add 'dimension: 1' and 'half_width: 1' for a three-vertex ring"
                ))
        if 'boundary' in lattice:
            self._validate_choice('lattice.boundary', lattice['boundary'], self.BOUNDARIES)

    def _validate_time(self, time: Dict[str, Any]):
        """Validate time section."""
        if 'beta' in time:
            self._validate_numeric('time.beta', time['beta'], self.VALID_RANGES['beta'],
                                   (int, float), "Inverse temperature beta")
        else:
            self.errors.append(ValidationError(
                field="time.beta",
                message="beta is required",
                severity="error",
                suggestion="Add 'beta: 1.0'"
            ))
        if 'topology' in time:
            self._validate_choice('time.topology', time['topology'], self.TOPOLOGIES)

    def _validate_params(self, params: Dict[str, Any]):
        """Validate intensities."""
        for key in ('lambda', 'delta', 'gamma'):
            if key in params:
                self._validate_numeric(f'params.{key}', params[key], self.VALID_RANGES[key],
                                       (int, float), f"Intensity {key}")
            else:
                self.warnings.append(ValidationError(
                    field=f"params.{key}",
                    message=f"{key} not specified, using default",
                    severity="warning"
                ))

    def _validate_sampling(self, sampling: Dict[str, Any]):
        """Validate sampling section."""
        for key in ('n_samples', 'sweeps', 'burn_in', 'workers', 'batch_size'):
            if key in sampling:
                self._validate_numeric(f'sampling.{key}', sampling[key], self.VALID_RANGES[key], int,
                                       f"Sampling {key.replace('_', ' ')}")
        seed = sampling.get('seed')
        if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool) or seed < 0):
            self.errors.append(ValidationError(
                field="sampling.seed",
                message="Seed must be a non-negative integer",
                severity="error",
                current_value=seed,
                expected_type="int"
            ))
        elif seed is None:
            self.warnings.append(ValidationError(
                field="sampling.seed",
                message="No seed given; runs will not be reproducible",
                severity="warning",
                suggestion="Add 'seed: 12345' or pass --seed"
            ))

    def _validate_checks(self, checks: Dict[str, Any]):
        """Validate checks section."""
        for key in ('quadrature_h_fraction', 'sigma_buffer', 'fd_step', 'fd_rel_tol'):
            if key in checks:
                self._validate_numeric(f'checks.{key}', checks[key], self.VALID_RANGES[key],
                                       (int, float), f"Check setting {key}")

    def _validate_scan(self, scan: Dict[str, Any]):
        """Validate scan section."""
        sizes = scan.get('sizes')
        if sizes is not None:
            if not isinstance(sizes, list) or not all(isinstance(s, int) and s >= 1 for s in sizes):
                self.errors.append(ValidationError(
                    field="scan.sizes",
                    message="Sizes must be a list of positive integers",
                    severity="error",
                    current_value=sizes,
                    expected_type="list"
                ))
            elif len(sizes) < 2:
                self.warnings.append(ValidationError(
                    field="scan.sizes",
                    message="A Binder crossing needs at least two sizes",
                    severity="warning"
                ))
        for key, range_key in (('aspect', 'aspect'), ('rho_min', 'rho'), ('rho_max', 'rho'),
                               ('rho_step', 'rho'), ('bootstrap', 'bootstrap')):
            if key in scan:
                self._validate_numeric(f'scan.{key}', scan[key], self.VALID_RANGES[range_key],
                                       (int, float), f"Scan {key.replace('_', ' ')}")

    def _validate_decay(self, decay: Dict[str, Any]):
        """Validate decay section."""
        if 'half_width' in decay:
            self._validate_numeric('decay.half_width', decay['half_width'],
                                   self.VALID_RANGES['half_width'], int, "Decay lattice half width")
        if 'beta' in decay:
            self._validate_numeric('decay.beta', decay['beta'], self.VALID_RANGES['beta'],
                                   (int, float), "Decay beta")
        if 'rho' in decay:
            self._validate_numeric('decay.rho', decay['rho'], self.VALID_RANGES['rho'],
                                   (int, float), "Decay rho")
        displacements = decay.get('displacements')
        if displacements is not None and (
                not isinstance(displacements, list)
                or not all(isinstance(d, int) and d >= 0 for d in displacements)):
            self.errors.append(ValidationError(
                field="decay.displacements",
                message="Displacements must be a list of non-negative integers",
                severity="error",
                current_value=displacements,
                expected_type="list"
            ))

    def _validate_output(self, output: Dict[str, Any]):
        """Validate output section."""
        for key in ('dir', 'prefix'):
            if key in output and not isinstance(output[key], str):
                self.errors.append(ValidationError(
                    field=f"output.{key}",
                    message=f"Output {key} must be a string",
                    severity="error"
                ))

    def _validate_logging(self, logging_config: Dict[str, Any]):
        """Validate logging section."""
        if 'level' in logging_config:
            valid_levels = ['DEBUG', 'INFO', 'WARNING', 'ERROR']
            if logging_config['level'] not in valid_levels:
                self.errors.append(ValidationError(
                    field="logging.level",
                    message=f"Invalid log level: {logging_config['level']}",
                    severity="error",
                    current_value=logging_config['level'],
                    suggestion=f"Use one of: {', '.join(valid_levels)}"
                ))

        if 'log_dir' in logging_config:
            if not isinstance(logging_config['log_dir'], str):
                self.errors.append(ValidationError(
                    field="logging.log_dir",
                    message="Log directory must be a string",
                    severity="error"
                ))

    def _validate_unknown_sections(self, config: Dict[str, Any]):
        """Check for unknown sections in config."""
        known_sections = set(self.REQUIRED_SECTIONS) | set(self.OPTIONAL_SECTIONS.keys())

        for section in config.keys():
            if section not in known_sections:
                self.warnings.append(ValidationError(
                    field=f"config.{section}",
                    message=f"Unknown section '{section}' will be ignored",
                    severity="warning",
                    suggestion=f"Remove '{section}' or check for typos"
                ))

    def _validate_cross_fields(self, config: Dict[str, Any]):
        """Validate relationships between fields."""
        lattice = config.get('lattice', {})
        dimension = lattice.get('dimension', 1)
        half_width = lattice.get('half_width', 1)
        if lattice.get('boundary', 'periodic') == 'periodic' and half_width == 0:
            self.errors.append(ValidationError(
                field="lattice.boundary",
                message="Periodic boundary with half_width 0 would create self-loops",
                severity="error",
                current_value=f"boundary: periodic, half_width: {half_width}",
                suggestion="Use 'boundary: free' for a single vertex"
            ))
        if isinstance(dimension, int) and isinstance(half_width, int):
            vertices = (2 * half_width + 1) ** dimension
            if vertices > SMALL_CHECK_MAX_VERTICES:
                self.warnings.append(ValidationError(
                    field="lattice",
                    message=f"{vertices} vertices: partition and backbone checks need at most "
                            f"{SMALL_CHECK_MAX_VERTICES}",
                    severity="warning",
                    suggestion="Use half_width 1 with free boundary for exact cross-checks"
                ))

        scan = config.get('scan', {})
        rho_min, rho_max = scan.get('rho_min'), scan.get('rho_max')
        if isinstance(rho_min, (int, float)) and isinstance(rho_max, (int, float)) and rho_min >= rho_max:
            self.errors.append(ValidationError(
                field="scan.rho_max",
                message="rho grid must be increasing",
                severity="error",
                current_value=f"rho_min: {rho_min}, rho_max: {rho_max}",
                suggestion="Set rho_max above rho_min"
            ))
        step = scan.get('rho_step')
        if isinstance(step, (int, float)) and step <= 0:
            self.errors.append(ValidationError(
                field="scan.rho_step",
                message="rho step must be positive",
                severity="error",
                current_value=step
            ))

        sampling = config.get('sampling', {})
        sweeps, burn_in = sampling.get('sweeps'), sampling.get('burn_in')
        if isinstance(sweeps, int) and isinstance(burn_in, int) and burn_in > sweeps:
            self.warnings.append(ValidationError(
                field="sampling.burn_in",
                message="Burn-in is longer than the measured chain",
                severity="warning",
                current_value=f"burn_in: {burn_in}, sweeps: {sweeps}"
            ))

    def _validate_numeric(self, field: str, value: Any, valid_range: Tuple[float, float],
                          valid_types: Union[type, Tuple[type, ...]], description: str):
        """Helper to validate numeric fields."""
        if isinstance(value, bool) or not isinstance(value, valid_types):
            type_names = valid_types.__name__ if isinstance(valid_types, type) \
                else ', '.join(t.__name__ for t in valid_types)
            self.errors.append(ValidationError(
                field=field,
                message=f"{description} must be a number",
                severity="error",
                current_value=value,
                expected_type=type_names
            ))
            return

        min_val, max_val = valid_range
        if value < min_val or value > max_val:
            self.errors.append(ValidationError(
                field=field,
                message=f"{description} must be between {min_val} and {max_val}",
                severity="error",
                current_value=value,
                suggestion=f"Use a value between {min_val} and {max_val}"
            ))

    def format_report(self, result: ValidationResult) -> str:
        """Format validation result as human-readable report."""
        lines = []
        lines.append("\n" + "=" * 60)
        lines.append("CONFIGURATION VALIDATION REPORT")
        lines.append("=" * 60)

        if result.is_valid and not result.has_warnings:
            lines.append("✅ Configuration is valid!")
        elif result.is_valid:
            lines.append("✅ Configuration is valid (with warnings)")
        else:
            lines.append("❌ Configuration has errors!")

        if result.errors:
            lines.append(f"\nErrors ({len(result.errors)}):")
            for error in result.errors:
                lines.append(f"  ❌ {error.field}")
                lines.append(f"     {error.message}")
                if error.suggestion:
                    lines.append(f"     💡 {error.suggestion}")
                if error.current_value is not None:
                    lines.append(f"     Current: {error.current_value}")

        if result.warnings:
            lines.append(f"\nWarnings ({len(result.warnings)}):")
            for warning in result.warnings:
                lines.append(f"  ⚠️  {warning.field}")
                lines.append(f"     {warning.message}")
                if warning.suggestion:
                    lines.append(f"     💡 {warning.suggestion}")

        lines.append("=" * 60 + "\n")

        return "\n".join(lines)


def validate_config(config: Dict[str, Any], config_path: Optional[Path] = None,
                    strict: bool = False, quiet: bool = False) -> bool:
    """
    Validate configuration and optionally raise on errors.

    Args:
        config: Configuration dictionary
        config_path: Path to config file
        strict: If True, raise exception on validation errors
        quiet: If True, only print the report when there are errors

    Returns:
        True if valid, False otherwise
    """
    validator = ConfigValidator()
    result = validator.validate(config, config_path)

    if not quiet or not result.is_valid:
        print(validator.format_report(result))

    if not result.is_valid and strict:
        from exceptions import ConfigurationError
        raise ConfigurationError(f"Configuration validation failed with {len(result.errors)} errors")

    return result.is_valid
