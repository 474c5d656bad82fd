"""
Configuration settings for the rough path recursion laboratory
"""
import os
import tempfile
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Base paths
BASE_DIR = Path(__file__).parent.parent
SCENARIOS_DIR = BASE_DIR / "scenarios"
ACCEPTANCE_FILE = SCENARIOS_DIR / "acceptance.json"

OUTPUTS_DIR = Path(os.getenv("ROUGHSIM_OUTPUT_DIR", str(BASE_DIR / "outputs")))
LOGS_DIR = BASE_DIR / "logs"

LOG_TO_FILE = os.getenv("ROUGHSIM_LOG_TO_FILE", "false").lower() == "true"
LOG_LEVEL = os.getenv("ROUGHSIM_LOG_LEVEL", "INFO").upper()

# Create directories if they don't exist (with error handling for read-only filesystems)
try:
    OUTPUTS_DIR.mkdir(exist_ok=True, parents=True)
    if LOG_TO_FILE:
        LOGS_DIR.mkdir(exist_ok=True, parents=True)
except (OSError, PermissionError):
    OUTPUTS_DIR = Path(tempfile.gettempdir()) / "roughsim" / "outputs"
    LOGS_DIR = Path(tempfile.gettempdir()) / "roughsim" / "logs"
    OUTPUTS_DIR.mkdir(exist_ok=True, parents=True)
    LOGS_DIR.mkdir(exist_ok=True, parents=True)


def get_worker_count(default: int = 1) -> int:
    """Worker count for Monte Carlo runs, overridable through ROUGHSIM_THREADS"""
    env_value = os.getenv("ROUGHSIM_THREADS")
    if env_value:
        try:
            return max(1, int(env_value))
        except ValueError:
            pass
    return default


CONFIG_SCHEMA_VERSION = 1

# Numerical tolerances (absolute, unit-scale inputs)
TOLERANCES = {
    "stationarity": 1e-12,
    "jacobian": 1e-5,
    "jacobian_step": 1e-5,
}

# Partition Settings
PARTITION_SETTINGS = {
    "default_T": 1.0,
    "mesh_bound_factor": 4.0,  # N * mesh <= factor * T
    "max_exact_holder_points": 4096,  # beyond this a stride is recommended
}

# Noise Generation Settings
NOISE_SETTINGS = {
    "kinds": ["iid_walk", "brownian", "fbm", "markov_chain"],
    "distributions": ["rademacher", "normal", "uniform"],
    "xi2_rules": ["zero", "theta", "refined"],
    "min_moment_order": 6.0,
    "default_moment_order": 8.0,
    "fbm_max_cells": 4096,
    "fbm_factor_cache_size": 8,
    "fbm_hurst_range": (1.0 / 3.0, 1.0),
    "series_tail_tol": 1e-12,
    "series_max_terms": 1_000_000,
}

# Vector Field Settings
FIELD_SETTINGS = {
    "default_trust_radius": 1e6,
}

# Solver Settings
RDE_SETTINGS = {
    "substeps_per_cell": 1,
    "gamma": 0.45,
    "odesteps_per_piece": 4,
}

# Monte Carlo Settings
MC_SETTINGS = {
    "paths": 10_000,
    "master_seed": 0,
    "chunk_size": 256,
    "max_abort_fraction": 1e-3,
    "marginal_fractions": (0.25, 0.5, 1.0),
}

# Diagnostics Settings
DIAGNOSTICS_SETTINGS = {
    "min_paths": 100,
    "exact_pairs_limit": 1024,
    "default_pair_budget": 512,
    "ks_alpha": 0.01,
    "ks_coefficients": {0.10: 1.22, 0.05: 1.36, 0.01: 1.63, 0.001: 1.95},
    "standard_error_band": 3.0,
}

# Export Settings
EXPORT_SETTINGS = {
    "float_format": "%.17g",
    "json_indent": 2,
}

# Logging Configuration
LOGGING_CONFIG = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "detailed": {
            "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
            "datefmt": "%Y-%m-%d %H:%M:%S"
        },
        "simple": {
            "format": "%(levelname)s - %(message)s"
        }
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "simple",
            "level": LOG_LEVEL
        }
    },
    "root": {
        "level": LOG_LEVEL,
        "handlers": ["console"]
    }
}

if LOG_TO_FILE:
    LOGGING_CONFIG["handlers"]["file"] = {
        "class": "logging.FileHandler",
        "filename": str(LOGS_DIR / "roughsim.log"),
        "formatter": "detailed",
        "level": LOG_LEVEL
    }
    LOGGING_CONFIG["root"]["handlers"].append("file")
