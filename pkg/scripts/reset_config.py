#!/usr/bin/env python3
"""Reset the scenario configuration to archived defaults."""
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from utils.config_manager import CONFIG_PATH, reset_config

if __name__ == "__main__":
    reset_config()
    print(f"Configuration reset to defaults in {CONFIG_PATH}.")
