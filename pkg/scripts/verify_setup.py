#!/usr/bin/env python3
"""
Verification script to check the local setup: packages, settings and every
shipped experiment config
"""
import importlib
import os
import sys
import tempfile
from pathlib import Path

from dotenv import load_dotenv

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

REQUIRED_PACKAGES = ['numpy', 'scipy', 'pandas', 'matplotlib', 'pydantic', 'yaml', 'dotenv', 'pytest']


def print_status(message, success=True):
    """Print status message with color"""
    if success:
        print(f"✅ {message}")
    else:
        print(f"❌ {message}")


def check_env_file():
    """Check if .env file exists (optional)"""
    env_path = "config/.env"

    if not os.path.exists(env_path):
        print(f"ℹ️  {env_path} not found (optional, see config/.env.example)")
        return True

    print_status(f"{env_path} exists")
    return True


def check_packages():
    """Check that every dependency imports"""
    ok = True
    for name in REQUIRED_PACKAGES:
        try:
            module = importlib.import_module(name)
            print_status(f"{name} {getattr(module, '__version__', '')}".rstrip())
        except ImportError as e:
            print_status(f"{name} missing: {e}", False)
            ok = False
    return ok


def check_settings():
    """Validate config/config.yaml"""
    from mcflow.shared.errors import ConfigError
    from mcflow.shared.settings import load_global_settings

    try:
        settings = load_global_settings()
        print_status(f"config/config.yaml valid (logging {settings.logging.level}/{settings.logging.format})")
        return True
    except ConfigError as e:
        print_status(f"config/config.yaml invalid:\n   {e}", False)
        return False


def check_experiment_configs():
    """Validate every config under config/experiments"""
    from mcflow.shared.errors import ConfigError
    from mcflow.shared.settings import load_experiment_config

    paths = sorted(Path('config/experiments').glob('*.yaml'))
    if not paths:
        print_status("no experiment configs under config/experiments", False)
        return False

    ok = True
    for path in paths:
        try:
            config = load_experiment_config(path)
            print_status(f"{path.name}: {config.experiment} on {config.geometry.kind}")
        except ConfigError as e:
            print_status(f"{path.name} invalid:\n   {e}", False)
            ok = False
    return ok


def check_output_dir():
    """Check the output directory is writable"""
    target = Path(os.getenv('MCFLOW_OUTPUT_DIR', 'output'))
    try:
        target.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=target):
            pass
        print_status(f"output directory {target} writable")
        return True
    except OSError as e:
        print_status(f"output directory {target} not writable: {e}", False)
        return False


def main():
    """Run all verification checks"""
    print("\n🔍 Verifying mcflow setup...\n")

    load_dotenv('config/.env')

    results = []
    results.append(check_env_file())
    results.append(check_packages())
    results.append(check_settings())
    results.append(check_experiment_configs())
    results.append(check_output_dir())

    print("\n" + "="*50)
    if all(results):
        print("🎉 Setup complete! You're ready to run experiments.")
        print("\nNext steps:")
        print("1. pytest -m 'not slow'")
        print("2. python -m mcflow existence --config config/experiments/existence_circle.yaml")
        print("3. scripts/run_acceptance.sh")
        sys.exit(0)
    else:
        print("⚠️  Setup incomplete. Please fix the issues above.")
        sys.exit(1)


if __name__ == "__main__":
    main()
