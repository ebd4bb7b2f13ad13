import logging
from pathlib import Path
from typing import Self

from pydantic import (
    AliasChoices,
    AliasGenerator,
    BaseModel,
    ConfigDict,
    alias_generators,
)

logger = logging.getLogger(__name__)


class FrozenModel(BaseModel):
    """Immutable record validated on construction."""

    # In addition to assigning fields by name, we accept camel and pascal case variants too
    model_config = ConfigDict(
        alias_generator=AliasGenerator(
            validation_alias=lambda field: AliasChoices(
                field,
                alias_generators.to_camel(field),
                alias_generators.to_pascal(field),
            )
        ),
        validate_by_alias=True,
        validate_by_name=True,
        frozen=True,
        extra="forbid",
    )

    @classmethod
    def from_file(cls, json_file: Path | str) -> Self:
        file = Path(json_file)
        new = cls.model_validate_json(file.read_text())
        logger.debug(f"read {cls.__name__} from {file.name}")

        return new
