"""Structured mixture segmentation, DSC perfusion and vascular habitat analysis."""

from ._hablab import (
    HablabError,
    __version__,
    cluster_phantom,
    cox_fit,
    deconvolve,
    fdr_correct,
    fit_gamma_variate,
    habitat_phantom,
    hts,
    kaplan_meier,
    logrank,
    rand_index,
    read_volume,
    report_schema,
    run,
    seg_metrics,
    segment,
    separability,
    write_volume,
)

__all__ = [
    "HablabError",
    "__version__",
    "cluster_phantom",
    "cox_fit",
    "deconvolve",
    "fdr_correct",
    "fit_gamma_variate",
    "habitat_phantom",
    "hts",
    "kaplan_meier",
    "logrank",
    "rand_index",
    "read_volume",
    "report_schema",
    "run",
    "seg_metrics",
    "segment",
    "separability",
    "write_volume",
]
