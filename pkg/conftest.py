# ===============================================================
# Import guard: run the suite from a checkout without installing
# ===============================================================
import sys
from pathlib import Path

BASE_DIR = Path(__file__).resolve().parent
if str(BASE_DIR) not in sys.path:
    sys.path.insert(0, str(BASE_DIR))
