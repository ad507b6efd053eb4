"""Python bindings for the auxskip architecture search engine."""

from ._core import (
    ConfigError,
    GenotypeParseError,
    SearchDivergence,
    __version__,
    bench_genotypes,
    beta_at,
    config_keys,
    dump_config,
    gradient_flow_check,
    lambda_proxy,
    parse_genotype,
    resnet_beta_demo,
    search,
)

__all__ = [
    "ConfigError",
    "GenotypeParseError",
    "SearchDivergence",
    "__version__",
    "bench_genotypes",
    "beta_at",
    "config_keys",
    "dump_config",
    "gradient_flow_check",
    "lambda_proxy",
    "parse_genotype",
    "resnet_beta_demo",
    "search",
]
