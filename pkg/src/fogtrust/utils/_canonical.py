import hashlib
import json

from pydantic import BaseModel


def canonical_json(model: BaseModel) -> bytes:
    """Sorted-key, compact JSON of a model; stable input for digests."""
    return json.dumps(
        model.model_dump(mode="json"), sort_keys=True, separators=(",", ":")
    ).encode("utf-8")


def digest_hex(model: BaseModel) -> str:
    return hashlib.sha256(canonical_json(model)).hexdigest()
