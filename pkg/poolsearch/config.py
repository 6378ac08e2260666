from dotenv import load_dotenv
import os

load_dotenv()

# -------- Core --------
LOG_LEVEL = os.getenv("LOG_LEVEL", "info")
OUTPUT_DIR = os.getenv("OUTPUT_DIR", "out")
AUDIT_FILE = os.getenv("AUDIT_FILE", os.path.join(OUTPUT_DIR, "logs", "events.jsonl"))
AUDIT_ENABLED = os.getenv("AUDIT_ENABLED", "true").lower() in ("1", "true", "yes")

# -------- Scores / numerics --------
R_MIN = float(os.getenv("R_MIN", "1e-4"))                  # PRM floor, scores live in [R_MIN, 1]
LOG_SPACE_BETA = float(os.getenv("LOG_SPACE_BETA", "20"))  # powered weights kept as logs above this beta
ENUM_CAP = int(os.getenv("ENUM_CAP", "1000000"))           # max prefixes an oracle may enumerate

# -------- Power Backtrack SMC schedules --------
PBSMC_GAMMA = float(os.getenv("PBSMC_GAMMA", "9"))
PBSMC_G_MIN = float(os.getenv("PBSMC_G_MIN", "0.4"))
PBSMC_BETA0 = float(os.getenv("PBSMC_BETA0", "1"))

# -------- Search defaults --------
DEFAULT_HORIZON = int(os.getenv("DEFAULT_HORIZON", "30"))
DEFAULT_TEMPERATURE = float(os.getenv("DEFAULT_TEMPERATURE", "0.7"))

# -------- HTTP backend --------
HTTP_TIMEOUT_S = float(os.getenv("HTTP_TIMEOUT_S", "60"))
HTTP_MAX_RETRIES = int(os.getenv("HTTP_MAX_RETRIES", "3"))
HTTP_MAX_CONCURRENCY = int(os.getenv("HTTP_MAX_CONCURRENCY", "8"))
HTTP_BACKOFF_S = float(os.getenv("HTTP_BACKOFF_S", "0.5"))
STEP_DELIMITER = os.getenv("STEP_DELIMITER", "\n\n")
ANSWER_PATTERN = os.getenv("ANSWER_PATTERN", r"\\boxed\{(.+?)\}")
MAX_STEP_TOKENS = int(os.getenv("MAX_STEP_TOKENS", "512"))

# -------- Mock service --------
PORT = int(os.getenv("PORT", "8001"))
MOCK_ANSWER_AT = int(os.getenv("MOCK_ANSWER_AT", "3"))     # step index at which the mock generator answers
