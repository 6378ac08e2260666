import hashlib


def cell_seed(master_seed: int, method: str, n: int, seed: int, problem_id: str) -> int:
    """First 8 bytes (big-endian) of sha256("master|method|N|seed|problem")."""
    key = f"{master_seed}|{method}|{n}|{seed}|{problem_id}"
    return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "big")
