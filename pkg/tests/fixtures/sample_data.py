"""
Test fixtures and sample data for the space-time Ising engine tests.
"""

import math

# Small configuration accepted by the validator and cheap enough for CLI runs
SAMPLE_CONFIG = {
    'lattice': {
        'dimension': 1,
        'half_width': 1,
        'boundary': 'periodic'
    },
    'time': {
        'beta': 1.0,
        'topology': 'circle'
    },
    'params': {
        'lambda': 1.0,
        'delta': 1.0,
        'gamma': 0.5
    },
    'sampling': {
        'n_samples': 400,
        'sweeps': 60,
        'burn_in': 10,
        'seed': 7,
        'workers': 1,
        'batch_size': 100
    },
    'checks': {
        'quadrature_h_fraction': 0.125,
        'sigma_buffer': 3.0,
        'fd_step': 1e-4,
        'fd_rel_tol': 0.05
    },
    'scan': {
        'sizes': [4, 6],
        'aspect': 1.0,
        'rho_min': 1.5,
        'rho_max': 2.5,
        'rho_step': 0.5,
        'bootstrap': 20
    },
    'decay': {
        'half_width': 4,
        'beta': 4.0,
        'rho': 1.0,
        'displacements': [1, 2, 3]
    },
    'output': {
        'dir': 'results',
        'prefix': 'test'
    },
    'logging': {
        'enabled': False,
        'level': 'INFO',
        'log_dir': 'logs'
    }
}

# Parameter points (lambda, delta, gamma) inside the randomized battery ranges
PARAM_POINTS = {
    'balanced': (1.0, 1.0, 0.5),
    'strong_coupling': (2.0, 0.5, 0.1),
    'weak_coupling': (0.5, 2.0, 1.0),
    'zero_field': (1.0, 1.0, 0.0),
}

# One vertex at zero field: <sigma_0 sigma_t> = cosh(delta (beta - 2t)) / cosh(delta beta)
SINGLE_SITE_CASES = [
    # (beta, delta, t)
    (1.0, 1.0, 0.25),
    (2.0, 0.5, 0.5),
    (0.5, 2.0, 0.1),
]


def single_site_correlation(beta: float, delta: float, t: float) -> float:
    return math.cosh(delta * (beta - 2 * t)) / math.cosh(delta * beta)


# Expected acceptance values for the d = 1 critical ratio
RHO_C_CHAIN = 2.0
RHO_C_ACCEPT = (1.8, 2.2)

# Displacements used by the decay checks
DECAY_DISPLACEMENTS = [1, 2, 3, 4, 5, 6, 8]
