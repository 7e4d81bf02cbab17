"""Python bindings for hazardpipe: metrics, simulation, explanations, consensus and ingestion."""

from ._hazardpipe import (
    anonymize,
    cam,
    consensus_score,
    decide,
    evaluate,
    extract_geotag,
    has_gps,
    lime_fit,
    run_scenario,
)

__all__ = [
    "anonymize",
    "cam",
    "consensus_score",
    "decide",
    "evaluate",
    "extract_geotag",
    "has_gps",
    "lime_fit",
    "run_scenario",
]
