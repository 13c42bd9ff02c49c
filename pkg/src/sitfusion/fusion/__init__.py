from .situations import (
    DEFAULT_WINDOW_MS,
    REQUIREMENT_GROUPS,
    Assembly,
    OverlappingAreas,
    Situation,
    assemble_situations,
    completeness,
    situation_id,
)

__all__ = [
    "DEFAULT_WINDOW_MS",
    "REQUIREMENT_GROUPS",
    "Assembly",
    "OverlappingAreas",
    "Situation",
    "assemble_situations",
    "completeness",
    "situation_id",
]
