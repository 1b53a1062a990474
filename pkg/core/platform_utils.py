"""
Platform utilities for cross-platform support.
Handles Windows, macOS, and Linux path handling, worker sizing and
numerical stack reporting.
"""

import os
import platform
import sys
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import scipy
from pathvalidate import ValidationError, sanitize_filepath, validate_filepath

from .errors import ConfigError

try:
    import torch
    TORCH_AVAILABLE = True
except ImportError:
    TORCH_AVAILABLE = False

try:
    import colorama
    colorama.init()  # Initialize colorama for Windows
    COLORAMA_AVAILABLE = True
except ImportError:
    COLORAMA_AVAILABLE = False


class PlatformUtils:
    """Cross-platform utilities for system detection and path handling."""

    def __init__(self):
        self.system = platform.system().lower()
        self.is_windows = self.system == 'windows'

    def get_system_info(self) -> Dict[str, str]:
        """Get comprehensive system information."""
        return {
            'system': platform.system(),
            'release': platform.release(),
            'machine': platform.machine(),
            'processor': platform.processor(),
            'python_version': sys.version.split()[0],
            'architecture': platform.architecture()[0],
            'cpu_count': str(os.cpu_count() or 1),
        }

    def get_numeric_stack(self) -> Dict[str, str]:
        """Versions of the numerical libraries in use."""
        return {
            'numpy': np.__version__,
            'scipy': scipy.__version__,
            'torch': torch.__version__ if TORCH_AVAILABLE else 'not installed',
        }

    def normalize_path(self, path: Union[str, Path]) -> Path:
        """Normalize path for current platform."""
        path_obj = Path(path)

        # Expand user directory (~)
        if str(path_obj).startswith('~'):
            path_obj = path_obj.expanduser()

        return path_obj.resolve()

    def resolve_output_path(self, path: Union[str, Path], create_parent: bool = True) -> Path:
        """Validate an output file path and create its parent directory."""
        text = str(path)
        platform_name = 'windows' if self.is_windows else 'posix'
        try:
            validate_filepath(text, platform=platform_name)
        except ValidationError as e:
            suggestion = sanitize_filepath(text, platform=platform_name)
            raise ConfigError(f"Invalid output path '{text}' ({e}); try '{suggestion}'") from e

        resolved = self.normalize_path(text)
        if create_parent:
            resolved.parent.mkdir(parents=True, exist_ok=True)
        return resolved

    def supports_colors(self) -> bool:
        """Check if terminal supports colored output."""
        if not sys.stdout.isatty():
            return False
        if COLORAMA_AVAILABLE:
            return True

        # Check environment variables
        if self.is_windows:
            return os.environ.get('ANSICON') is not None
        term = os.environ.get('TERM', '')
        return 'color' in term or term in ['xterm', 'xterm-256color', 'screen']

    def get_recommended_workers(self) -> int:
        """Get recommended number of evaluation workers based on system resources."""
        try:
            cpu_count = os.cpu_count() or 1

            try:
                import psutil
                memory_gb = psutil.virtual_memory().available / (1024**3)

                # One worker per GB available, never more than the cores
                memory_workers = max(1, int(memory_gb))
                return max(1, min(cpu_count, memory_workers, 8))

            except ImportError:
                return max(1, min(cpu_count, 4))

        except Exception:
            return 1  # Safe fallback

    def check_available_memory(self) -> Optional[float]:
        """Check available system memory in GB."""
        try:
            import psutil
            return psutil.virtual_memory().available / (1024**3)
        except ImportError:
            return None

    def print_system_info(self):
        """Print comprehensive system information."""
        print("=== System Information ===")
        info = self.get_system_info()
        for key, value in info.items():
            print(f"{key.replace('_', ' ').title()}: {value}")

        print("\n=== Numerical Stack ===")
        for key, value in self.get_numeric_stack().items():
            print(f"{key}: {value}")
        status = "✓" if TORCH_AVAILABLE else "✗"
        print(f"Torch Gradient Oracle: {status}")

        print(f"\nRecommended Workers: {self.get_recommended_workers()}")
        memory = self.check_available_memory()
        if memory:
            print(f"Available Memory: {memory:.1f} GB")
