import copy
import logging
import os
from typing import Any, Dict, Optional

import yaml

logger = logging.getLogger(__name__)

MAX_N_ENV = 'LARCLAB_MAX_N'
HOME_ENV = 'LARCLAB_HOME'


class SettingsManager:
    """Manages laboratory settings: caps, experiment defaults and the run ledger path."""

    DEFAULT_SETTINGS = {
        'caps': {
            'max_n': 24,               # truth tables / transforms
            'enumerate_dim': 26,       # element enumeration of a subspace
            'subspace_count': 10_000_000,
            'xor_lift_n': 6,
            'optimal_depth_n': 5,
            'tree_enum_n': 4,
            'dense_search_n': 16,
            'mono_rect_n': 14,
            'pair_table_n': 6,
        },
        'grolmusz': {
            'constant': 4,
            'initial_t': 64,
            'growth': 2,
        },
        'conjecture': {
            'alpha': '1/2',
            'beta': '1/10',
            'k': 1,
        },
        'search': {
            'temperature_start': 1.0,
            'temperature_end': 0.01,
        },
        'threads': 1,
        'auto_save_results': True,
        'database_path': '',
        'log_level': 'INFO',
    }

    def __init__(self, config_dir: Optional[str] = None):
        if config_dir is None:
            config_dir = os.environ.get(HOME_ENV) or os.path.join(os.path.expanduser('~'), '.larclab')
        self.config_dir = config_dir

        os.makedirs(self.config_dir, exist_ok=True)

        self.settings_file = os.path.join(self.config_dir, 'settings.yaml')
        self.settings = self._load_settings()
        self._apply_env_overrides()

    def _load_settings(self) -> Dict[str, Any]:
        """Load settings from file or create defaults."""
        settings = copy.deepcopy(self.DEFAULT_SETTINGS)
        if not os.path.exists(self.settings_file):
            return settings
        try:
            with open(self.settings_file, 'r') as f:
                loaded_settings = yaml.safe_load(f) or {}
        except (OSError, yaml.YAMLError) as e:
            logger.error(f"Error loading settings from {self.settings_file}: {e}")
            return settings

        # Merge one level deep so a partial 'caps' block keeps the other caps
        for key, value in loaded_settings.items():
            if isinstance(value, dict) and isinstance(settings.get(key), dict):
                settings[key].update(value)
            else:
                settings[key] = value
        return settings

    def _apply_env_overrides(self):
        raw = os.environ.get(MAX_N_ENV)
        if not raw:
            return
        try:
            max_n = int(raw)
        except ValueError:
            logger.warning(f"Ignoring non-integer {MAX_N_ENV}={raw!r}")
            return
        logger.info(f"{MAX_N_ENV} overrides caps.max_n: {max_n}")
        self.set('caps.max_n', max_n)
        # derived caps never exceed the global table cap
        for key in ('dense_search_n', 'mono_rect_n'):
            self.set(f'caps.{key}', min(self.get(f'caps.{key}'), max_n))

    def save_settings(self):
        """Save settings to file."""
        try:
            with open(self.settings_file, 'w') as f:
                yaml.safe_dump(self.settings, f, default_flow_style=False)
        except OSError as e:
            logger.error(f"Error saving settings: {e}")

    def get(self, key: str, default=None):
        """Get a setting value by dotted key."""
        keys = key.split('.')
        value = self.settings
        for k in keys:
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default
        return value

    def set(self, key: str, value: Any):
        """Set a setting value by dotted key."""
        keys = key.split('.')
        target = self.settings
        for k in keys[:-1]:
            if k not in target:
                target[k] = {}
            target = target[k]
        target[keys[-1]] = value

    def cap(self, name: str) -> int:
        return int(self.get(f'caps.{name}'))

    def get_database_path(self) -> str:
        """Get the run ledger path, creating the default if not set."""
        db_path = self.get('database_path')
        if not db_path:
            db_path = os.path.join(self.config_dir, 'larclab_runs.db')
            self.set('database_path', db_path)
        return db_path
