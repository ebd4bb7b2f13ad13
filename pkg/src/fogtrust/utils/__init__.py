from ._canonical import canonical_json as canonical_json
from ._canonical import digest_hex as digest_hex
from ._seeding import derive_seed as derive_seed
from ._seeding import make_rng as make_rng
