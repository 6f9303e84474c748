"""
Runtime setup: logging, optional .env defaults and a dependency check
"""
import logging
import os
from typing import List, Optional

try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:
    print("⚠️ python-dotenv not installed; .env defaults are ignored")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

REQUIRED_PACKAGES = {
    "numpy": "numpy",
    "scipy": "scipy",
    "pandas": "pandas",
    "sklearn": "scikit-learn",
    "joblib": "joblib",
    "tqdm": "tqdm",
    "yaml": "PyYAML",
    "openpyxl": "openpyxl",
}


def env_default(name: str, fallback=None):
    """Value of ``GRIP_<name>`` from the environment (or .env), else ``fallback``"""
    return os.getenv(f"GRIP_{name}", fallback)


def configure_logging(level: Optional[str] = None) -> None:
    level = (level or env_default("LOG_LEVEL", "INFO")).upper()
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(level)


def check_dependencies() -> List[str]:
    """Return the pip names of required packages that cannot be imported"""
    missing = []
    for module, pip_name in REQUIRED_PACKAGES.items():
        try:
            __import__(module)
        except ImportError:
            missing.append(pip_name)

    if missing:
        print(f"❌ Missing packages: {', '.join(missing)}")
        print("   Please install missing packages: pip install -r requirements.txt")
    return missing
