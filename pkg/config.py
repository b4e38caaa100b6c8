"""V1Model RMT backend configuration."""
import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

TOOL_VERSION = "0.1.0"

# Base paths
BASE_DIR = Path(__file__).parent
DATA_DIR = BASE_DIR / "data"
HARDWARE_DIR = DATA_DIR / "hardware"
PROGRAMS_DIR = DATA_DIR / "programs"
SCHEMAS_DIR = BASE_DIR / "schemas"
LOGS_DIR = Path(os.getenv("LOGS_DIR", str(DATA_DIR / "logs")))

# Create directories if they don't exist
LOGS_DIR.mkdir(parents=True, exist_ok=True)

# Logging
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()
LOG_TO_FILE = os.getenv("LOG_TO_FILE", "true").lower() == "true"

# Hardware profile
DEFAULT_HSL_PATH = Path(os.getenv("DEFAULT_HSL_PATH", str(HARDWARE_DIR / "v1model_rmt.json")))

# TDG mapping
PACKING_FACTOR = int(os.getenv("PACKING_FACTOR", "0"))  # 0 = use the HSL value
ACTION_MODE = os.getenv("ACTION_MODE", "per-entry")  # 'per-entry' or 'fixed:k'
TABLE_ACTION_MODES = os.getenv("TABLE_ACTION_MODES", "")  # per-table overrides: "acl=fixed:2,fib=per-entry"
LATENCY_COSTS = os.getenv("LATENCY_COSTS", "12,3,1,12")  # match,action,other,base
STATEFUL_POLICY = os.getenv("STATEFUL_POLICY", "colocate")  # 'colocate' or 'serialize'
POINTER_OVERHEAD_BITS = int(os.getenv("POINTER_OVERHEAD_BITS", "16"))

# Header mapping
PHV_REPACK = os.getenv("PHV_REPACK", "true").lower() == "true"  # false = plain greedy container choice

# Parser mapping
STATE_ID_BITS = int(os.getenv("STATE_ID_BITS", "8"))

# Reports
REPORT_FORMAT = os.getenv("REPORT_FORMAT", "json")  # 'json' or 'table'
REPORT_INCLUDE_TIMINGS = os.getenv("REPORT_INCLUDE_TIMINGS", "false").lower() == "true"
