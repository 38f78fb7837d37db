"""Runtime defaults, read from the environment (and an optional .env file)."""
import os

from dotenv import load_dotenv

load_dotenv()

LOG_LEVEL = os.getenv("HURST_LOG_LEVEL", "INFO")
OUTPUT_DIR = os.getenv("HURST_OUTPUT_DIR", "results")
MAX_WORKERS = int(os.getenv("HURST_MAX_WORKERS", 4))
KM_MIN_OCCUPANCY = float(os.getenv("HURST_KM_MIN_OCCUPANCY", 50))
MAX_FILL = int(os.getenv("HURST_MAX_FILL", 4))
SNIPPET_COUNT = int(os.getenv("HURST_SNIPPET_COUNT", 24))
