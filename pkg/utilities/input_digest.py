import hashlib

def input_digest(data: bytes) -> str:
    """sha256 digest identifying a run input"""
    return f'sha256:{hashlib.sha256(data).hexdigest()}'
